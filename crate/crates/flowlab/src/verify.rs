//! Registry of verifiable lemmas, keyed by stable labels.
//!
//! Each check measures quantities and compares them with fixed bounds. Checks
//! are deterministic given the run configuration.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::field::{Field, FieldExpr};
use crate::flow::{
    box_transit, flow_point_opts, flow_steps, path_integral_omega, porous_draw, porousness_estimate, trajectory,
    DeterrenceSystem,
    PUMP_HORIZON,
};
use crate::interval::SymInterval;
use crate::jetlab::{jet_compare, jet_field, jet_transport, periodicity_order, JetPoly};
use crate::ode::{Control, OdeOptions};
use crate::pipeline::{
    build_chain, check_membership, constantize_timeflow, cube_gauge, dwell, exchange, exchange_shell_deviation,
    iteration_step, reflect_double, scale_hint, scale_system, translate_field, Budget, Dwell, Predicate, Subject,
};
use crate::pump::PumpBundle;
use crate::racetrack::Racetrack;
use crate::report::{LemmaReport, Measure, RunConfig};
use crate::travel::{compute_c, gamma_deficit, gamma_excess, travel_time_gamma};

type Check = fn(&RunConfig) -> Result<Vec<Measure>>;

/// A registered lemma check.
pub struct Lemma {
    pub key: &'static str,
    pub title: &'static str,
    run: Check,
}

/// All registered checks, in key order.
pub const LEMMAS: &[Lemma] = &[
    Lemma { key: "H-preserves-axes", title: "hyperbolic water maps each axis into itself", run: axes },
    Lemma { key: "H0-fixes-00-to-all-orders", title: "hyperbolic water conserves wx and is flat at the origin", run: hyperbolic },
    Lemma { key: "P0-calculations", title: "omega path integrals along pump orbits", run: omega_integrals },
    Lemma { key: "P0-per", title: "pump period closes the orbit of the bottom center to finite order", run: pump_period },
    Lemma { key: "P0-porous", title: "sampled pump porousness off the axis tube", run: pump_porous },
    Lemma { key: "P0K0-in-scrp", title: "pump certificate membership", run: pump_membership },
    Lemma { key: "Pi1-Pi2-of-P0-orbits-are-monotone", title: "lateral projections of pump orbits are monotone", run: monotone },
    Lemma { key: "SU-and-Phi-V0", title: "upward field transit is the straight-up map", run: su_v0 },
    Lemma { key: "base-lem", title: "one iteration plants a periodic orbit", run: base_lemma },
    Lemma { key: "exch-gives-mod", title: "exchange into a spread pump is a porous modification", run: exchange_modification },
    Lemma { key: "flow-properties", title: "flow group law, homothety, coincidence, jets, exchange shell", run: properties },
    Lemma { key: "following-the-runners-for-m", title: "pump splits into water and runner flows over one period", run: runners },
    Lemma { key: "induction-gives-ctrx", title: "two-stage chain keeps inner boxes and periodicity", run: chain },
    Lemma { key: "no-early-return", title: "bottom-face points leave the unit box at time 2 and stay out", run: no_early_return },
    Lemma { key: "racetrack", title: "racetrack loops share the period and the straightaway dwell", run: racetrack },
    Lemma { key: "single-crossing", title: "pump orbits cross each level outside the box at most once", run: single_crossing },
    Lemma { key: "trap-per-orb", title: "the periodic pump orbit stays inside the box", run: trapped },
    Lemma { key: "upflow-const", title: "slow-down block makes the transit time constant", run: upflow_const },
    Lemma { key: "upflow-const-start", title: "reflection doubling turns the upflow into the straight-up map", run: upflow_start },
    Lemma { key: "vanishing-to-periodic", title: "a field flat at a zero has identity flow jets there", run: flat_point },
    Lemma { key: "vertVF-C", title: "full crossing time of the band profile", run: band_crossing },
    Lemma { key: "vertVF-Vsharp", title: "prescribed travel times and monotone interpolation", run: travel_times },
    Lemma { key: "vertVF-W", title: "band profile crosses the band in time 380", run: band_profile },
    Lemma { key: "water-never-reverses", title: "pump water block is a nonnegative multiple of the water field", run: water_multiple },
];

pub fn lemma_keys() -> Vec<&'static str> {
    LEMMAS.iter().map(|l| l.key).collect()
}

pub fn find(key: &str) -> Option<&'static Lemma> {
    LEMMAS.iter().find(|l| l.key == key)
}

/// Runs one lemma check; unknown keys are an error listing the valid ones.
pub fn run_lemma(key: &str, cfg: &RunConfig) -> Result<LemmaReport> {
    let lemma = find(key)
        .ok_or_else(|| Error::Invalid(format!("unknown lemma key {key:?}; valid keys: {}", lemma_keys().join(", "))))?;
    let start = Instant::now();
    let outcome = (lemma.run)(cfg);
    let runtime_s = cfg.record_runtime.then(|| crate::report::fmt17(start.elapsed().as_secs_f64()));
    let (measures, error, integrator_failure) = match outcome {
        Ok(m) => (m, None, false),
        Err(e) => (Vec::new(), Some(e.to_string()), e.is_integrator()),
    };
    let pass = error.is_none() && !measures.is_empty() && measures.iter().all(|m| m.pass);
    Ok(LemmaReport {
        key: lemma.key.into(),
        title: lemma.title.into(),
        pass,
        measures,
        config_hash: cfg.hash(),
        error,
        integrator_failure,
        runtime_s,
    })
}

/// Runs the listed keys (all when empty), ordered by key.
pub fn run_suite(cfg: &RunConfig) -> Result<Vec<LemmaReport>> {
    let keys: Vec<String> =
        if cfg.lemmas.is_empty() { lemma_keys().into_iter().map(String::from).collect() } else { cfg.lemmas.clone() };
    for k in &keys {
        if find(k).is_none() {
            return Err(Error::Invalid(format!("unknown lemma key {k:?}; valid keys: {}", lemma_keys().join(", "))));
        }
    }
    let mut out = keys.iter().map(|k| run_lemma(k, cfg)).collect::<Result<Vec<_>>>()?;
    out.sort_by(|a, b| a.key.cmp(&b.key));
    Ok(out)
}

fn rng(cfg: &RunConfig, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(cfg.seed);
    r.set_stream(stream);
    r
}

fn opts(cfg: &RunConfig) -> OdeOptions {
    OdeOptions::with_tol(cfg.tol)
}

fn budget(cfg: &RunConfig, samples: usize, order: usize) -> Budget {
    Budget { samples: cfg.samples_or(samples), seed: cfg.seed, order, horizon: cfg.horizon, tol: cfg.tol }
}

fn sup_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn pump_field(cfg: &RunConfig) -> Result<Field> {
    Field::new(FieldExpr::P0 { m: cfg.m })
}

fn band_profile(cfg: &RunConfig) -> Result<Vec<Measure>> {
    let end = flow_point_opts(&Field::w(), &[-95.0], 380.0, &opts(cfg))?;
    Ok(vec![Measure::at_most("endpoint error", (end[0] - 95.0).abs(), 1e-6)])
}

fn band_crossing(cfg: &RunConfig) -> Result<Vec<Measure>> {
    let c = compute_c()?;
    let end = flow_point_opts(&Field::w(), &[-100.0], c, &OdeOptions::with_tol(cfg.tol.min(1e-12)))?;
    Ok(vec![
        Measure::at_least("C (lower check)", c, 390.0),
        Measure::at_most("C (upper check)", c, 392.0),
        Measure::at_most("endpoint error", (end[0] - 100.0).abs(), 1e-8),
    ])
}

fn travel_times(cfg: &RunConfig) -> Result<Vec<Measure>> {
    let mut worst: f64 = 0.0;
    for s in [200.0, 240.0, 290.0, 340.0, 380.0] {
        let f = Field::new(FieldExpr::Vsharp { s })?;
        let end = flow_point_opts(&f, &[-100.0], s, &opts(cfg))?;
        worst = worst.max((end[0] - 100.0).abs());
    }
    // The profile is flat to all orders at both ends, so increments there are far
    // below the resolution of gamma itself. Compare offsets from the end values.
    let xs: Vec<f64> = (0..100).map(|i| i as f64 / 99.0).collect();
    let mut increasing = 0.0;
    for w in xs.windows(2) {
        let up = if w[1] <= 0.5 {
            gamma_excess(w[1])? > gamma_excess(w[0])?
        } else if w[0] >= 0.5 {
            gamma_deficit(w[1])? < gamma_deficit(w[0])?
        } else {
            travel_time_gamma(w[1])? > travel_time_gamma(w[0])?
        };
        increasing += (!up) as u8 as f64;
    }
    Ok(vec![Measure::at_most("endpoint error", worst, 1e-6), Measure::at_most("non-increasing grid steps", increasing, 0.0)])
}

fn hyperbolic(cfg: &RunConfig) -> Result<Vec<Measure>> {
    let h = Field::h();
    let o = OdeOptions::with_tol(cfg.tol.min(1e-12));
    let mut r = rng(cfg, 4);
    let mut worst: f64 = 0.0;
    for _ in 0..cfg.samples_or(100) {
        let p = [r.gen_range(-3.0..3.0), r.gen_range(-3.0..3.0)];
        let c = p[0] * p[1];
        for t in [10.0, -10.0] {
            flow_steps(&h, &p, t, &o, |s| {
                for i in 0..=4 {
                    let y = s.eval(s.t0 + s.h * i as f64 / 4.0);
                    worst = worst.max((y[0] * y[1] - c).abs());
                }
                Ok(Control::Continue)
            })?;
        }
    }
    let jet = jet_transport(&h, &[0.0, 0.0], 5.0, 2, &opts(cfg))?;
    let flat = jet_compare(&jet, &JetPoly::identity(&[0.0, 0.0], 2), 2)?;
    let j0 = jet_transport(&Field::h0(), &[1.0, 1.0], 1.0, 1, &o)?.jacobian();
    let e = 1f64.exp();
    let jac = [(j0[0][0] - e).abs(), j0[0][1].abs(), j0[1][0].abs(), (j0[1][1] - 1.0 / e).abs()].into_iter().fold(0.0, f64::max);
    Ok(vec![
        Measure::at_most("wx drift", worst, 1e-8),
        Measure::at_most("flat jet deviation", flat, 1e-6),
        Measure::at_most("linear water Jacobian error", jac, 1e-8),
    ])
}

/// Uniform point of the racetrack annulus.
fn annulus_point(rt: &Racetrack, r: &mut ChaCha8Rng) -> [f64; 2] {
    loop {
        let p = [r.gen_range(-4.0..18.0), r.gen_range(-16.0..16.0)];
        if rt.in_region(&p) {
            return p;
        }
    }
}

fn racetrack(cfg: &RunConfig) -> Result<Vec<Measure>> {
    let rt = Racetrack::new(cfg.m)?;
    let q = Field::new(FieldExpr::Q { m: cfg.m })?;
    let m = cfg.m as f64;
    let o = opts(cfg);
    let mut r = rng(cfg, 5);
    let mut ret: f64 = 0.0;
    for _ in 0..cfg.samples_or(200) {
        let p = annulus_point(&rt, &mut r);
        ret = ret.max(sup_dist(&flow_point_opts(&q, &p, m, &o)?, &p));
    }
    let gauge = |p: &[f64]| (p[0].abs() - 4.0).max(p[1].abs() - 12.0);
    let mut exit_err: f64 = 0.0;
    let mut bad = 0.0;
    for _ in 0..cfg.samples_or(50) {
        let p = [r.gen_range(-4.0..4.0), -12.0];
        match dwell(&q, &p, m - 1e-3, &o, gauge)? {
            Dwell { exit: Some(e), reentry: None } => exit_err = exit_err.max((e - 24.0).abs()),
            _ => bad += 1.0,
        }
    }
    Ok(vec![
        Measure::at_most("return error", ret, 1e-5),
        Measure::at_most("straightaway exit error", exit_err, 1e-4),
        Measure::at_most("early returns", bad, 0.0),
    ])
}

fn pump_period(cfg: &RunConfig) -> Result<Vec<Measure>> {
    let p0 = pump_field(cfg)?;
    let xi = SymInterval::UNIT.bottom_center();
    let o = opts(cfg);
    let end = flow_point_opts(&p0, &xi, cfg.m as f64, &o)?;
    let k = cfg.order.clamp(1, 2);
    let rep = periodicity_order(&p0, &xi, cfg.m as i64, k, 1e-4, &o)?;
    let mut out = vec![Measure::at_most("return error", sup_dist(&end, &xi), 1e-5)];
    out.push(Measure::at_most("order-1 jet deviation", rep.deviations[1], 1e-4));
    if k >= 2 {
        out.push(Measure::at_most("order-2 jet deviation", rep.deviations[2], 1e-3));
    }
    Ok(out)
}

fn no_early_return(cfg: &RunConfig) -> Result<Vec<Measure>> {
    let p0 = pump_field(cfg)?;
    let o = opts(cfg);
    let mut r = rng(cfg, 7);
    let gauge = cube_gauge(1.0);
    let mut exit_err: f64 = 0.0;
    let mut bad = 0.0;
    for _ in 0..cfg.samples_or(50) {
        let p = [r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0), -1.0];
        match dwell(&p0, &p, cfg.m as f64 - 1e-3, &o, &gauge)? {
            Dwell { exit: Some(e), reentry: None } => exit_err = exit_err.max((e - 2.0).abs()),
            _ => bad += 1.0,
        }
    }
    Ok(vec![Measure::at_most("exit time error", exit_err, 1e-4), Measure::at_most("re-entries", bad, 0.0)])
}

fn pump_membership(cfg: &RunConfig) -> Result<Vec<Measure>> {
    let bundle = PumpBundle::new(cfg.m)?;
    let sys = DeterrenceSystem::new(pump_field(cfg)?, bundle.k0)?;
    let subject = Subject { inner: Some(SymInterval::UNIT), period: Some(cfg.m as f64), ..Subject::new(&sys) };
    let b = budget(cfg, 50, cfg.order.min(2));
    let rep = check_membership(Predicate::PI, &subject, b.samples, cfg.seed, &b);
    Ok(vec![
        Measure::at_most("normalized worst deviation", rep.worst_deviation, 1.0),
        Measure::at_least("certified", rep.certified() as u8 as f64, 1.0),
    ])
}

fn pump_porous(cfg: &RunConfig) -> Result<Vec<Measure>> {
    let bundle = PumpBundle::new(cfg.m)?;
    let sys = DeterrenceSystem::new(pump_field(cfg)?, bundle.k0)?;
    let rep = porousness_estimate(&sys, cfg.samples_or(1000), cfg.seed, cfg.horizon.unwrap_or(PUMP_HORIZON), Some(1e-3), &opts(cfg))?;
    Ok(vec![Measure::at_least("certified fraction", rep.fraction, 1.0)])
}

fn runners(cfg: &RunConfig) -> Result<Vec<Measure>> {
    let bundle = PumpBundle::new(cfg.m)?;
    let p0 = pump_field(cfg)?;
    let h = Field::h();
    let q = Field::new(FieldExpr::Q { m: cfg.m })?;
    let m = cfg.m as f64;
    let o = opts(cfg);
    let mut r = rng(cfg, 10);
    let (mut water, mut runner): (f64, f64) = (0.0, 0.0);
    let mut used = 0;
    let mut tries = 0;
    while used < cfg.samples_or(20) {
        tries += 1;
        if tries > 50 * cfg.samples_or(20) {
            return Err(Error::Invalid("too few starts stay in the core box".into()));
        }
        let rho = [r.gen_range(-2.0..2.0), r.gen_range(-2.0..2.0), r.gen_range(-3.0..3.0), r.gen_range(-3.0..3.0)];
        let mut inside = true;
        let end = flow_steps(&p0, &rho, m, &o, |s| {
            inside &= s.y1.iter().all(|x| x.abs() < 100.0);
            Ok(Control::Continue)
        })?;
        if !inside {
            continue;
        }
        used += 1;
        let w = flow_point_opts(&h, &rho[..2], bundle.t_times, &o)?;
        let y = flow_point_opts(&q, &rho[2..], m, &o)?;
        water = water.max(sup_dist(&end[..2], &w));
        runner = runner.max(sup_dist(&end[2..], &y));
    }
    Ok(vec![Measure::at_most("water deviation", water, 1e-4), Measure::at_most("runner deviation", runner, 1e-4)])
}

fn su_v0(cfg: &RunConfig) -> Result<Vec<Measure>> {
    let mut r = rng(cfg, 11);
    let (mut tf, mut up): (f64, f64) = (0.0, 0.0);
    for hw in [1, 3, 10, 57] {
        let i = SymInterval::new(hw)?;
        let sys = DeterrenceSystem::new(Field::v0(), i)?;
        let a = i.a();
        for _ in 0..cfg.samples_or(10) {
            let p = [r.gen_range(-a..=a), r.gen_range(-a..=a), r.gen_range(-a..=a), -a];
            let bt = box_transit(&sys, &p, 10.0 * a, &opts(cfg))?;
            tf = tf.max((bt.timeflow - 2.0 * a).abs());
            up = up.max(sup_dist(&bt.up, &i.straight_up(&p)));
        }
    }
    Ok(vec![Measure::at_most("timeflow error", tf, 1e-9), Measure::at_most("upflow error", up, 1e-9)])
}

fn monotone(cfg: &RunConfig) -> Result<Vec<Measure>> {
    let p0 = pump_field(cfg)?;
    // The slack is absolute while coordinates reach a few hundred.
    let o = OdeOptions::with_tol(cfg.tol.min(1e-12));
    let mut r = rng(cfg, 12);
    let mut worst: f64 = 0.0;
    for k in 0..cfg.samples_or(50) {
        // Alternate between the pump core and the blending shells.
        let a = if k % 2 == 0 { 20.0 } else { 250.0 };
        let p: Vec<f64> = (0..4).map(|_| r.gen_range(-a..a)).collect();
        let fwd = trajectory(&p0, &p, 20.0, &o, Some(0.1), &[])?;
        let bwd = trajectory(&p0, &p, -20.0, &o, Some(0.1), &[])?;
        let mut path: Vec<&Vec<f64>> = bwd.states.iter().rev().collect();
        path.extend(fwd.states.iter().skip(1));
        for w in path.windows(2) {
            worst = worst.max(w[0][0].abs() - w[1][0].abs());
            worst = worst.max(w[1][1].abs() - w[0][1].abs());
        }
    }
    Ok(vec![Measure::at_most("largest monotonicity violation", worst, 1e-9)])
}

fn omega_integrals(cfg: &RunConfig) -> Result<Vec<Measure>> {
    let p0 = pump_field(cfg)?;
    let o = opts(cfg);
    let zero = path_integral_omega(&p0, &[3.0, -2.0, 1.0, 5.0], 0.0, &o)?;
    let core = path_integral_omega(&p0, &[0.0; 4], 1.0, &o)?;
    let side = path_integral_omega(&p0, &[0.0, 0.0, 10.0, 0.0], 1.0, &o)?;
    Ok(vec![
        Measure::at_most("zero-time integral", zero.abs(), 0.0),
        Measure::at_most("core integral", core.abs(), 1e-9),
        Measure::at_most("side integral error", (side - 1.0).abs(), 1e-6),
    ])
}

/// A deterrence system on a box of half-width 406 whose bottom-center orbit passes
/// through the pump off its axis.
fn offset_pump(cfg: &RunConfig) -> Result<(FieldExpr, SymInterval)> {
    let w = translate_field(&FieldExpr::P0 { m: cfg.m }, &[-5.0, -5.0, 0.0, 0.0])?;
    Ok((w, SymInterval::new(406)?))
}

fn upflow_start(cfg: &RunConfig) -> Result<Vec<Measure>> {
    let (w, j) = offset_pump(cfg)?;
    let b = budget(cfg, 20, 1);
    let (v1, i1) = reflect_double(&w, j, b.samples, cfg.seed)?;
    let sys = DeterrenceSystem::new(Field::new(v1)?, i1)?;
    let subject = Subject { pump_scale: 1.0, ..Subject::new(&sys) };
    let plus = check_membership(Predicate::DPlus, &subject, b.samples, cfg.seed, &b);
    let sharp = check_membership(Predicate::DSharp, &subject, 1, cfg.seed, &b);
    Ok(vec![
        Measure::at_least("half-width (lower check)", i1.a(), 3.0 * j.a() + 3.0),
        Measure::at_most("half-width (upper check)", i1.a(), 3.0 * j.a() + 3.0),
        Measure::at_most("upflow error", plus.worst_deviation, 1e-5),
        Measure::at_least("upflow samples evaluated", plus.evaluated as f64, 1.0),
        Measure::at_least("bottom center certified", sharp.certified() as u8 as f64, 1.0),
    ])
}

fn upflow_const(cfg: &RunConfig) -> Result<Vec<Measure>> {
    let (w, j) = offset_pump(cfg)?;
    let b = budget(cfg, 20, 1);
    let (v1, i1) = reflect_double(&w, j, b.samples, cfg.seed)?;
    let cz = constantize_timeflow(&v1, i1, &b)?;
    let sys = DeterrenceSystem::new(Field::new(cz.expr.clone())?, cz.interval)?;
    let horizon = b.horizon_for(cz.interval.a(), 1.0);
    let center = box_transit(&sys, &sys.xi(), horizon, &b.orbit_opts())?;
    let subject = Subject { radius: cz.radius, ..Subject::new(&sys) };
    let star = check_membership(Predicate::DStar, &subject, b.samples, cfg.seed, &b);
    Ok(vec![
        Measure::at_most("half-width growth error", (cz.interval.a() - i1.a() - 202.0).abs(), 0.0),
        Measure::at_most("center timeflow error", (center.timeflow - cz.j as f64).abs(), 1e-4),
        Measure::at_most("neighborhood timeflow spread", star.worst_deviation, 1e-4),
        Measure::at_least("neighborhood samples evaluated", star.evaluated as f64, b.samples as f64),
        Measure::at_least("rounding margin", cz.margin, 0.5),
    ])
}

fn base_lemma(cfg: &RunConfig) -> Result<Vec<Measure>> {
    let pump = PumpBundle::new(cfg.m)?;
    let b = budget(cfg, 50, 1);
    let mut r = rng(cfg, 13);
    let sigma: Vec<f64> = (0..4).map(|_| r.gen_range(-2.0..2.0)).collect();
    let out = iteration_step(&FieldExpr::V0, SymInterval::UNIT, &sigma, &pump, &b)?;
    let f = Field::new(out.expr.clone())?;
    let o = opts(cfg);
    let end = flow_point_opts(&f, &sigma, out.period as f64, &o)?;
    let rep = periodicity_order(&f, &sigma, out.period, 1, 1e-3, &o)?;
    let sys = DeterrenceSystem::new(f, out.interval)?;
    let horizon = b.horizon_for(sys.a(), scale_hint(&out.expr));
    let porous = porousness_estimate(&sys, cfg.samples_or(200), cfg.seed, horizon, None, &o)?;
    let checks_ok = out.checks.iter().all(|c| c.certified());
    Ok(vec![
        Measure::at_most("return error", sup_dist(&end, &sigma), 1e-4),
        Measure::at_most("order-1 jet deviation", rep.deviations[1], 1e-3),
        Measure::at_least("box growth", out.interval.a() - 1.0, 1.0),
        Measure::at_least("modification checks", checks_ok as u8 as f64, 1.0),
        Measure::at_least("porous fraction", porous.fraction, 0.99),
    ])
}

fn chain(cfg: &RunConfig) -> Result<Vec<Measure>> {
    let pump = PumpBundle::new(cfg.m)?;
    let b = budget(cfg, 50, 1);
    let chain = build_chain(2, &pump, &b)?;
    let widths: Vec<f64> = chain.stages.iter().map(|s| s.interval.a()).collect();
    let growth = widths.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
    let jets = chain.stages.iter().flat_map(|s| s.deviations.iter().take(2).copied()).fold(0.0, f64::max);
    let agree = chain.checks.iter().all(|c| c.certified());
    let aperiodic = chain.aperiodicity.iter().map(|(_, d)| *d).fold(f64::INFINITY, f64::min);
    let mut r = rng(cfg, 14);
    let first = &chain.stages[0];
    let mut limit_dev: f64 = 0.0;
    for _ in 0..cfg.samples_or(1000) {
        let p: Vec<f64> = (0..4).map(|_| r.gen_range(-first.interval.a()..first.interval.a())).collect();
        limit_dev = limit_dev.max(sup_dist(&chain.eval_limit(&p), &chain.limit_field().eval_s(&p)));
        limit_dev = limit_dev.max(sup_dist(&first.field.eval_s(&p), &chain.limit_field().eval_s(&p)));
    }
    Ok(vec![
        Measure::at_least("smallest box growth", growth, 1.0),
        Measure::at_most("stage jet deviation", jets, 1e-3),
        Measure::at_least("inner-box agreement certified", agree as u8 as f64, 1.0),
        Measure::at_most("limit field disagreement on the first box", limit_dev, 1e-12),
        Measure::at_least("smallest bounded-period return distance", aperiodic, 1e-3),
    ])
}

/// Field corpus for the group-law suite: complete fields bounded by 1.
fn corpus(cfg: &RunConfig) -> Result<Vec<(Field, f64)>> {
    Ok(vec![
        (Field::v0(), 5.0),
        (Field::w(), 150.0),
        (Field::new(FieldExpr::Vstar { x: 0.3 })?, 150.0),
        (Field::new(FieldExpr::Vsharp { s: 290.0 })?, 150.0),
        (Field::h(), 3.0),
        (Field::new(FieldExpr::Q { m: cfg.m })?, 18.0),
        (Field::new(FieldExpr::P0 { m: cfg.m })?, 40.0),
        (Field::new(FieldExpr::Pstar { m: cfg.m })?, 40.0),
        (Field::new(FieldExpr::scale(7.0, FieldExpr::P0 { m: cfg.m }))?, 200.0),
    ])
}

fn properties(cfg: &RunConfig) -> Result<Vec<Measure>> {
    let tol = cfg.tol;
    let o = opts(cfg);
    let mut r = rng(cfg, 15);
    let fields = corpus(cfg)?;

    let mut group: f64 = 0.0;
    for k in 0..cfg.samples_or(100) {
        let (f, a) = &fields[k % fields.len()];
        let p: Vec<f64> = (0..f.dim()).map(|_| r.gen_range(-a..*a)).collect();
        let t = r.gen_range(0.0..10.0);
        let there = flow_point_opts(f, &p, t, &o)?;
        let back = flow_point_opts(f, &there, -t, &o)?;
        // Same mixed absolute/relative scale as the integrator tolerance.
        group = group.max(sup_dist(&back, &p) / p.iter().fold(1.0f64, |m, x| m.max(x.abs())));
    }

    let mut homothety: f64 = 0.0;
    for (base, dim) in [(FieldExpr::W, 1usize), (FieldExpr::V0, 4)] {
        let f = Field::new(base.clone())?;
        let f2 = Field::new(FieldExpr::times(2.0, base, dim))?;
        for _ in 0..10 {
            let p: Vec<f64> = (0..dim).map(|_| r.gen_range(-100.0..100.0)).collect();
            let t = r.gen_range(0.0..50.0);
            let d = sup_dist(&flow_point_opts(&f2, &p, t, &o)?, &flow_point_opts(&f, &p, 2.0 * t, &o)?);
            homothety = homothety.max(d / p.iter().fold(1.0f64, |m, x| m.max(x.abs())));
        }
    }

    let p0 = Field::new(FieldExpr::P0 { m: cfg.m })?;
    let pstar = Field::new(FieldExpr::Pstar { m: cfg.m })?;
    let mut coincide: f64 = 0.0;
    for _ in 0..20 {
        let p: Vec<f64> = (0..4).map(|_| r.gen_range(-20.0..20.0)).collect();
        let mut stays = true;
        let a = flow_steps(&p0, &p, 10.0, &o, |s| {
            stays &= s.y1.iter().all(|x| x.abs() < 100.0);
            Ok(Control::Continue)
        })?;
        if stays {
            coincide = coincide.max(sup_dist(&a, &flow_point_opts(&pstar, &p, 10.0, &o)?));
        }
    }

    let mut fd: f64 = 0.0;
    let jet_fields = [&fields[1], &fields[4], &fields[5], &fields[6]];
    for k in 0..50 {
        let (f, a) = jet_fields[k % jet_fields.len()];
        let p: Vec<f64> = (0..f.dim()).map(|_| r.gen_range(-a..*a)).collect();
        let t = r.gen_range(0.5..5.0);
        let jac = jet_transport(f, &p, t, 1, &o)?.jacobian();
        let hstep = 1e-5;
        for j in 0..f.dim() {
            let mut lo = p.clone();
            let mut hi = p.clone();
            lo[j] -= hstep;
            hi[j] += hstep;
            let ylo = flow_point_opts(f, &lo, t, &o)?;
            let yhi = flow_point_opts(f, &hi, t, &o)?;
            for i in 0..f.dim() {
                let d = (yhi[i] - ylo[i]) / (2.0 * hstep);
                fd = fd.max((d - jac[i][j]).abs() / jac[i][j].abs().max(1.0));
            }
        }
    }

    let bundle = PumpBundle::new(cfg.m)?;
    let mut shell: f64 = 0.0;
    for a in [1u64, 3, 17] {
        let i = SymInterval::new(a)?;
        let p = Field::new(FieldExpr::scale(a as f64, FieldExpr::P0 { m: bundle.m }))?;
        shell = shell.max(exchange_shell_deviation(i, &p, &Field::v0(), 200, cfg.seed).0);
        let w = Field::new(FieldExpr::exchange(i, FieldExpr::V0, FieldExpr::scale(a as f64, FieldExpr::P0 { m: bundle.m })))?;
        shell = shell.max(exchange_shell_deviation(i, &w, &p, 200, cfg.seed).0);
    }

    Ok(vec![
        Measure::at_most("group law (scaled)", group, 10.0 * tol),
        Measure::at_most("homothetic orbits (scaled)", homothety, 10.0 * tol),
        Measure::at_most("flow coincidence", coincide, 2.0 * tol),
        Measure::at_most("jet vs finite differences", fd, 1e-4),
        Measure::at_most("exchange shell", shell, 1e-12),
    ])
}

fn axes(cfg: &RunConfig) -> Result<Vec<Measure>> {
    let h = Field::h();
    let mut r = rng(cfg, 16);
    let mut off: f64 = 0.0;
    for _ in 0..cfg.samples_or(200) {
        let s = r.gen_range(-50.0..50.0);
        off = off.max(h.eval(&[s, 0.0])?[1].abs()).max(h.eval(&[0.0, s])?[0].abs());
    }
    Ok(vec![Measure::at_most("off-axis component", off, 0.0)])
}

fn water_multiple(cfg: &RunConfig) -> Result<Vec<Measure>> {
    let bundle = PumpBundle::new(cfg.m)?;
    let p0 = pump_field(cfg)?;
    let h = Field::h();
    let mut r = rng(cfg, 17);
    let (mut negative, mut split): (f64, f64) = (0.0, 0.0);
    for k in 0..cfg.samples_or(1000) {
        let a = [5.0, 150.0, 450.0][k % 3];
        let p: Vec<f64> = (0..4).map(|_| r.gen_range(-a..a)).collect();
        let w = bundle.omega(&p);
        if w < 0.0 {
            negative = negative.max(-w);
        }
        let hu = h.eval(&p[..2])?;
        let v = p0.eval(&p)?;
        split = split.max((v[0] - w * hu[0]).abs()).max((v[1] - w * hu[1]).abs());
    }
    Ok(vec![Measure::at_most("largest negative weight", negative, 0.0), Measure::at_most("split error", split, 1e-12)])
}

fn flat_point(cfg: &RunConfig) -> Result<Vec<Measure>> {
    let h = Field::h();
    let k = cfg.order.clamp(1, 3);
    let field_jet = jet_field(&h, &[0.0, 0.0], k)?;
    let flat = field_jet.comps.iter().flatten().fold(0.0f64, |m, c| m.max(c.abs()));
    let flow = jet_transport(&h, &[0.0, 0.0], 5.0, k, &OdeOptions::with_tol(cfg.tol.min(1e-12)))?;
    let dev = jet_compare(&flow, &JetPoly::identity(&[0.0, 0.0], k), k)?;
    Ok(vec![Measure::at_most("field jet size", flat, 0.0), Measure::at_most("flow jet deviation", dev, 1e-6)])
}

fn trapped(cfg: &RunConfig) -> Result<Vec<Measure>> {
    let bundle = PumpBundle::new(cfg.m)?;
    let p0 = pump_field(cfg)?;
    let xi = SymInterval::UNIT.bottom_center();
    let mut reach: f64 = 0.0;
    flow_steps(&p0, &xi, cfg.m as f64, &opts(cfg), |s| {
        for i in 0..=8 {
            let y = s.eval(s.t0 + s.h * i as f64 / 8.0);
            reach = reach.max(y.iter().fold(0.0, |m, x| m.max(x.abs())));
        }
        Ok(Control::Continue)
    })?;
    Ok(vec![Measure::at_most("largest coordinate over one period", reach, bundle.k0.a())])
}

/// Counts sign changes of `z - level` for each level, sampling the dense output.
fn count_crossings(field: &Field, p: &[f64], dir: f64, stop: f64, horizon: f64, levels: &[f64], o: &OdeOptions) -> Result<Vec<usize>> {
    let mut counts = vec![0usize; levels.len()];
    let mut prev = p[3];
    let mut reached = false;
    flow_steps(field, p, dir * horizon, o, |s| {
        for i in 1..=16 {
            let z = s.eval_component(s.t0 + s.h * i as f64 / 16.0, 3);
            for (c, b) in counts.iter_mut().zip(levels) {
                if (prev - b) * (z - b) < 0.0 || (z == *b && prev != *b) {
                    *c += 1;
                }
            }
            prev = z;
        }
        if dir * prev > stop {
            reached = true;
            return Ok(Control::Stop);
        }
        Ok(Control::Continue)
    })?;
    if !reached {
        return Err(Error::Invalid("orbit did not leave the box within the horizon".into()));
    }
    Ok(counts)
}

fn single_crossing(cfg: &RunConfig) -> Result<Vec<Measure>> {
    let bundle = PumpBundle::new(cfg.m)?;
    let p0 = pump_field(cfg)?;
    let a = bundle.k0.a();
    let levels = [-a - 20.0, -a, a, a + 20.0];
    let o = opts(cfg);
    let mut worst = 0usize;
    for k in 0..cfg.samples_or(20) {
        let (p, _) = porous_draw(a, cfg.seed, k as u64, Some(1e-3));
        let up = count_crossings(&p0, &p, 1.0, a + 40.0, PUMP_HORIZON, &levels, &o)?;
        let down = count_crossings(&p0, &p, -1.0, a + 40.0, PUMP_HORIZON, &levels, &o)?;
        for (u, d) in up.iter().zip(&down) {
            worst = worst.max(u + d);
        }
    }
    Ok(vec![Measure::at_most("most crossings of one level", worst as f64, 1.0)])
}

fn exchange_modification(cfg: &RunConfig) -> Result<Vec<Measure>> {
    let bundle = PumpBundle::new(cfg.m)?;
    let inner = DeterrenceSystem::new(pump_field(cfg)?, bundle.k0)?;
    // The spread pump must be upward on (3 K_0)^4, which needs a factor of 400.
    let spread = scale_system(&bundle, 400)?;
    let b = budget(cfg, 50, 1);
    let x = exchange(bundle.k0, &spread.expr, &FieldExpr::P0 { m: cfg.m }, b.samples, cfg.seed)?;
    let sys = DeterrenceSystem::new(Field::new(x.clone())?, spread.system.interval)?;
    let subject = Subject { reference: Some(&inner), ..Subject::new(&sys) };
    let d = check_membership(Predicate::D, &subject, b.samples, cfg.seed, &b);
    let m = check_membership(Predicate::M, &subject, b.samples, cfg.seed, &b);
    let horizon = b.horizon_for(sys.a(), scale_hint(&x));
    let porous = porousness_estimate(&sys, cfg.samples_or(100), cfg.seed, horizon, Some(1e-3), &opts(cfg))?;
    Ok(vec![
        Measure::at_least("deterrence certified", d.certified() as u8 as f64, 1.0),
        Measure::at_least("modification certified", m.certified() as u8 as f64, 1.0),
        Measure::at_least("porous fraction", porous.fraction, 0.99),
    ])
}
