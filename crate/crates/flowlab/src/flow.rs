//! Flows of compiled fields: point maps, trajectories, level crossings, box transits,
//! undeterredness certification and porousness sampling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::field::Field;
use crate::interval::SymInterval;
use crate::ode::{integrate, Control, OdeOptions, Stats, Step, System};

/// Largest spacing at which dense output is sampled when looking for crossings.
pub const EVENT_SPACING: f64 = 0.25;
/// Time tolerance of located crossings.
pub const EVENT_TOL: f64 = 1e-10;
/// Default certification horizon for pump systems.
pub const PUMP_HORIZON: f64 = 1e5;

/// A field viewed as an ODE right-hand side.
pub struct FieldSystem<'a> {
    pub field: &'a Field,
}

impl System for FieldSystem<'_> {
    fn dim(&self) -> usize {
        self.field.dim()
    }

    fn rhs(&self, y: &[f64], dy: &mut [f64]) -> Result<()> {
        let v = self.field.eval_s(y);
        dy.copy_from_slice(&v);
        Ok(())
    }

    fn max_step(&self, y: &[f64]) -> f64 {
        0.25 * self.field.step_scale(y)
    }
}

fn check_start(field: &Field, p: &[f64]) -> Result<()> {
    if p.len() != field.dim() {
        return Err(Error::Dimension { expected: field.dim(), got: p.len() });
    }
    Ok(())
}

/// `Phi_t(sigma)` with tolerance `tol`.
pub fn flow_point(field: &Field, sigma: &[f64], t: f64, tol: f64) -> Result<Vec<f64>> {
    flow_point_opts(field, sigma, t, &OdeOptions::with_tol(tol))
}

pub fn flow_point_opts(field: &Field, sigma: &[f64], t: f64, opts: &OdeOptions) -> Result<Vec<f64>> {
    check_start(field, sigma)?;
    Ok(integrate(&FieldSystem { field }, 0.0, sigma, t, opts, |_| Ok(Control::Continue))?.y)
}

/// Runs the flow and hands every accepted step to `visit`.
pub fn flow_steps<F>(field: &Field, sigma: &[f64], t: f64, opts: &OdeOptions, mut visit: F) -> Result<Vec<f64>>
where
    F: FnMut(&Step) -> Result<Control>,
{
    check_start(field, sigma)?;
    Ok(integrate(&FieldSystem { field }, 0.0, sigma, t, opts, |s| visit(s))?.y)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Backward,
}

impl Direction {
    pub fn sign(self) -> f64 {
        match self {
            Direction::Forward => 1.0,
            Direction::Backward => -1.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Sense {
    /// Any sign change of `g`.
    Cross,
    /// First time `g >= 0`.
    Reach,
}

/// First time in `step` at which `g` changes sign (or becomes nonnegative), refined by bisection.
fn locate<G: Fn(f64) -> f64>(step: &Step, g: G, sense: Sense) -> Option<f64> {
    locate_from(step, step.t0, g, sense)
}

/// Same as [`locate`] but only scans the part of the step after `from`.
fn locate_from<G: Fn(f64) -> f64>(step: &Step, from: f64, g: G, sense: Sense) -> Option<f64> {
    let span = step.t1() - from;
    // The dense output is a low-degree polynomial per step, so long steps through
    // straight regions need no more than a bounded number of probes.
    let n = ((span.abs() / EVENT_SPACING).ceil() as usize).clamp(1, 256);
    let mut t_prev = from;
    let mut g_prev = g(t_prev);
    for i in 1..=n {
        let t_cur = if i == n { step.t1() } else { from + span * i as f64 / n as f64 };
        let g_cur = g(t_cur);
        let hit = match sense {
            Sense::Cross => g_cur == 0.0 || (g_prev != 0.0 && g_prev.signum() != g_cur.signum()),
            Sense::Reach => g_cur >= 0.0,
        };
        if hit {
            let (mut lo, mut hi) = (t_prev, t_cur);
            let s_lo = g_prev.signum();
            let tol = EVENT_TOL.max(4.0 * f64::EPSILON * hi.abs());
            while (hi - lo).abs() > tol {
                let mid = 0.5 * (lo + hi);
                if mid == lo || mid == hi {
                    break;
                }
                let gm = g(mid);
                let on_lo_side = match sense {
                    Sense::Cross => gm != 0.0 && gm.signum() == s_lo,
                    Sense::Reach => gm < 0.0,
                };
                if on_lo_side {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            return Some(0.5 * (lo + hi));
        }
        t_prev = t_cur;
        g_prev = g_cur;
    }
    None
}

fn search(
    field: &Field,
    sigma: &[f64],
    axis: usize,
    level: f64,
    dir: Direction,
    horizon: f64,
    opts: &OdeOptions,
    sense: Sense,
    above: bool,
) -> Result<Option<(f64, Vec<f64>)>> {
    check_start(field, sigma)?;
    if axis >= field.dim() {
        return Err(Error::Invalid(format!("axis {axis} out of range for dimension {}", field.dim())));
    }
    if !(horizon > 0.0) {
        return Err(Error::Invalid(format!("horizon must be positive, got {horizon}")));
    }
    let orient = if above { 1.0 } else { -1.0 };
    let g0 = orient * (sigma[axis] - level);
    if g0 == 0.0 || (sense == Sense::Reach && g0 >= 0.0) {
        return Ok(Some((0.0, sigma.to_vec())));
    }
    let mut found: Option<(f64, Vec<f64>)> = None;
    integrate(&FieldSystem { field }, 0.0, sigma, dir.sign() * horizon, opts, |step| {
        let g = |t: f64| orient * (step.eval_component(t, axis) - level);
        if let Some(t) = locate(step, g, sense) {
            found = Some((t, step.eval(t)));
            return Ok(Control::Stop);
        }
        Ok(Control::Continue)
    })?;
    Ok(found)
}

/// First time the coordinate `axis` crosses `level`, searching forward or backward up to `horizon`.
pub fn hit_time(
    field: &Field,
    sigma: &[f64],
    axis: usize,
    level: f64,
    dir: Direction,
    horizon: f64,
    opts: &OdeOptions,
) -> Result<Option<f64>> {
    Ok(search(field, sigma, axis, level, dir, horizon, opts, Sense::Cross, true)?.map(|(t, _)| t))
}

/// Like [`hit_time`] but also returns the state at the crossing.
pub fn hit_state(
    field: &Field,
    sigma: &[f64],
    axis: usize,
    level: f64,
    dir: Direction,
    horizon: f64,
    opts: &OdeOptions,
) -> Result<Option<(f64, Vec<f64>)>> {
    search(field, sigma, axis, level, dir, horizon, opts, Sense::Cross, true)
}

/// First time the coordinate is at or beyond `level` (above it if `above`, below otherwise).
pub fn reach_time(
    field: &Field,
    sigma: &[f64],
    axis: usize,
    level: f64,
    above: bool,
    dir: Direction,
    horizon: f64,
    opts: &OdeOptions,
) -> Result<Option<f64>> {
    Ok(search(field, sigma, axis, level, dir, horizon, opts, Sense::Reach, above)?.map(|(t, _)| t))
}

/// A crossing recorded along a trajectory.
#[derive(Clone, Debug, Serialize)]
pub struct Event {
    pub t: f64,
    pub axis: usize,
    pub level: f64,
}

/// A sampled numerical orbit.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub start: Vec<f64>,
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub events: Vec<Event>,
    pub stats: Stats,
}

impl Trajectory {
    pub fn end(&self) -> &[f64] {
        self.states.last().expect("trajectory has a start state")
    }

    /// CSV with columns `t, x1..xd, event`; event rows carry `axis:level` in the last column.
    pub fn to_csv(&self) -> String {
        let d = self.start.len();
        let mut out = String::from("t");
        for i in 1..=d {
            out.push_str(&format!(",x{i}"));
        }
        out.push_str(",event\n");
        let mut ev = self.events.iter().peekable();
        let row = |t: f64, x: &[f64], tag: &str| {
            let mut s = crate::report::fmt17(t);
            for v in x {
                s.push(',');
                s.push_str(&crate::report::fmt17(*v));
            }
            if x.is_empty() {
                // Event rows leave the state columns empty.
                s.push_str(&",".repeat(d));
            }
            s.push(',');
            s.push_str(tag);
            s.push('\n');
            s
        };
        for (t, x) in self.times.iter().zip(&self.states) {
            while let Some(e) = ev.peek() {
                if (e.t - t) * self.direction() < 0.0 {
                    out.push_str(&row(e.t, &[], &format!("{}:{}", e.axis + 1, crate::report::fmt17(e.level))));
                    ev.next();
                } else {
                    break;
                }
            }
            out.push_str(&row(*t, x, ""));
        }
        for e in ev {
            out.push_str(&row(e.t, &[], &format!("{}:{}", e.axis + 1, crate::report::fmt17(e.level))));
        }
        out
    }

    fn direction(&self) -> f64 {
        match self.times.last() {
            Some(t) if *t < 0.0 => -1.0,
            _ => 1.0,
        }
    }
}

/// Integrates to time `t`, recording states every `sample_dt` (or at accepted steps if `None`)
/// and all crossings of the given `(axis, level)` pairs.
pub fn trajectory(
    field: &Field,
    sigma: &[f64],
    t: f64,
    opts: &OdeOptions,
    sample_dt: Option<f64>,
    watch: &[(usize, f64)],
) -> Result<Trajectory> {
    check_start(field, sigma)?;
    if let Some(dt) = sample_dt {
        if !(dt > 0.0) {
            return Err(Error::Invalid("sample spacing must be positive".into()));
        }
    }
    let mut times = vec![0.0];
    let mut states = vec![sigma.to_vec()];
    let mut events = Vec::new();
    let dir = if t < 0.0 { -1.0 } else { 1.0 };
    let mut next_sample = sample_dt.map(|d| d * dir);
    let mut k = 1usize;
    let out = integrate(&FieldSystem { field }, 0.0, sigma, t, opts, |step| {
        for &(axis, level) in watch {
            // Several crossings may fall in one step; scan the step piecewise.
            let mut from = step.t0;
            loop {
                let g = |s: f64| step.eval_component(s, axis) - level;
                let Some(tc) = locate_from(step, from, g, Sense::Cross) else { break };
                events.push(Event { t: tc, axis, level });
                if (step.t1() - tc).abs() <= 4.0 * EVENT_TOL {
                    break;
                }
                from = tc + dir * 4.0 * EVENT_TOL;
            }
        }
        match (sample_dt, next_sample.as_mut()) {
            (Some(dt), Some(ns)) => {
                while (*ns - step.t1()) * dir <= 1e-12 {
                    times.push(*ns);
                    states.push(step.eval(*ns));
                    k += 1;
                    *ns = dir * dt * k as f64;
                }
            }
            _ => {
                times.push(step.t1());
                states.push(step.y1.clone());
            }
        }
        Ok(Control::Continue)
    })?;
    if times.last().copied() != Some(t) {
        times.push(t);
        states.push(out.y.clone());
    }
    events.sort_by(|a, b| (a.t * dir).total_cmp(&(b.t * dir)));
    events.dedup_by(|a, b| a.axis == b.axis && a.level == b.level && (a.t - b.t).abs() < 1e-9);
    Ok(Trajectory { start: sigma.to_vec(), times, states, events, stats: out.stats })
}

/// A deterrence system: a field on `R^4` equal to the upward unit field off the open cube `I^4`.
#[derive(Clone, Debug)]
pub struct DeterrenceSystem {
    pub field: Field,
    pub interval: SymInterval,
}

impl DeterrenceSystem {
    pub fn new(field: Field, interval: SymInterval) -> Result<Self> {
        if field.dim() != 4 {
            return Err(Error::Dimension { expected: 4, got: field.dim() });
        }
        Ok(DeterrenceSystem { field, interval })
    }

    pub fn a(&self) -> f64 {
        self.interval.a()
    }

    /// Center of the bottom face.
    pub fn xi(&self) -> [f64; 4] {
        self.interval.bottom_center()
    }

    /// Largest deviation from the unit upward field over `n` random points outside the cube,
    /// with the worst point.
    pub fn outside_deviation(&self, n: usize, seed: u64) -> (f64, Vec<f64>) {
        let a = self.a();
        let mut worst = (0.0, vec![0.0, 0.0, 0.0, 2.0 * a]);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..n {
            let p = loop {
                let p: Vec<f64> = (0..4).map(|_| rng.gen_range(-2.0 * a - 2.0..2.0 * a + 2.0)).collect();
                if !self.interval.cube_contains(&p) {
                    break p;
                }
            };
            let v = self.field.eval_s(&p);
            let dev = v.iter().zip([0.0, 0.0, 0.0, 1.0]).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
            if dev > worst.0 {
                worst = (dev, p);
            }
        }
        worst
    }
}

/// Where an orbit enters the bottom face, leaves the top face, and how long that takes.
#[derive(Clone, Debug, Serialize)]
pub struct BoxTransit {
    pub down: Vec<f64>,
    pub up: Vec<f64>,
    pub timeflow: f64,
}

/// Box transit of the orbit through `sigma`, which must lie in the closed cube.
pub fn box_transit(sys: &DeterrenceSystem, sigma: &[f64], horizon: f64, opts: &OdeOptions) -> Result<BoxTransit> {
    if !sys.interval.cube_closure_contains(sigma) {
        return Err(Error::Invalid(format!("{sigma:?} is outside the closed box")));
    }
    let a = sys.a();
    let down = hit_state(&sys.field, sigma, 3, -a, Direction::Backward, horizon, opts)?
        .ok_or(Error::PossiblyDeterred { horizon })?;
    let up = hit_state(&sys.field, sigma, 3, a, Direction::Forward, horizon, opts)?
        .ok_or(Error::PossiblyDeterred { horizon })?;
    let mut d = down.1;
    let mut u = up.1;
    // The faces are the event levels; pin the coordinate to remove bisection noise.
    d[3] = -a;
    u[3] = a;
    Ok(BoxTransit { down: d, up: u, timeflow: up.0 - down.0 })
}

/// Certification times for both directions (absent when the horizon was not enough).
#[derive(Clone, Debug, Serialize)]
pub struct Certification {
    pub forward: Option<f64>,
    pub backward: Option<f64>,
}

impl Certification {
    pub fn certified(&self) -> bool {
        self.forward.is_some() && self.backward.is_some()
    }
}

/// Forward orbit reaches `Pi_4 >= a + 1` and backward orbit reaches `Pi_4 <= -a - 1` within `horizon`.
pub fn certify_undeterred(
    sys: &DeterrenceSystem,
    sigma: &[f64],
    horizon: f64,
    opts: &OdeOptions,
) -> Result<Certification> {
    let a = sys.a();
    let forward = reach_time(&sys.field, sigma, 3, a + 1.0, true, Direction::Forward, horizon, opts)?;
    let backward = match forward {
        Some(_) => reach_time(&sys.field, sigma, 3, -a - 1.0, false, Direction::Backward, horizon, opts)?,
        None => None,
    };
    Ok(Certification { forward, backward })
}

pub fn is_undeterred(sys: &DeterrenceSystem, sigma: &[f64], horizon: f64, opts: &OdeOptions) -> Result<bool> {
    Ok(certify_undeterred(sys, sigma, horizon, opts)?.certified())
}

/// One porousness sample.
#[derive(Clone, Debug, Serialize)]
pub struct PorousSample {
    pub point: Vec<f64>,
    pub forward: Option<f64>,
    pub backward: Option<f64>,
    pub rejected_draws: usize,
    pub error: Option<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct PorousReport {
    pub samples: usize,
    pub certified: usize,
    pub fraction: f64,
    pub tube_radius: Option<f64>,
    pub tube_rejections: usize,
    pub horizon: f64,
    pub seed: u64,
    pub records: Vec<PorousSample>,
}

/// Draws sample `index` of a porousness run: uniform in the open cube, off the tube if requested.
pub fn porous_draw(a: f64, seed: u64, index: u64, tube: Option<f64>) -> (Vec<f64>, usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    let mut rejected = 0;
    loop {
        let p: Vec<f64> = (0..4).map(|_| rng.gen_range(-a..a)).collect();
        match tube {
            Some(r) if p[0].abs().min(p[1].abs()) < r => rejected += 1,
            _ => return (p, rejected),
        }
    }
}

/// Fraction of `n` uniform samples of the open cube certified undeterred within `horizon`.
pub fn porousness_estimate(
    sys: &DeterrenceSystem,
    n: usize,
    seed: u64,
    horizon: f64,
    tube: Option<f64>,
    opts: &OdeOptions,
) -> Result<PorousReport> {
    if n == 0 {
        return Err(Error::Invalid("sample count must be at least 1".into()));
    }
    let mut records = Vec::with_capacity(n);
    let mut certified = 0;
    let mut tube_rejections = 0;
    for i in 0..n {
        let (p, rej) = porous_draw(sys.a(), seed, i as u64, tube);
        tube_rejections += rej;
        let rec = match certify_undeterred(sys, &p, horizon, opts) {
            Ok(c) => {
                if c.certified() {
                    certified += 1;
                }
                PorousSample { point: p, forward: c.forward, backward: c.backward, rejected_draws: rej, error: None }
            }
            Err(e) => PorousSample {
                point: p,
                forward: None,
                backward: None,
                rejected_draws: rej,
                error: Some(e.to_string()),
            },
        };
        records.push(rec);
    }
    Ok(PorousReport {
        samples: n,
        certified,
        fraction: certified as f64 / n as f64,
        tube_radius: tube,
        tube_rejections,
        horizon,
        seed,
        records,
    })
}

/// `int_0^t omega(Phi_r(rho)) dr` along the orbit of the pump field `p0`.
pub fn path_integral_omega(p0: &Field, rho: &[f64], t: f64, opts: &OdeOptions) -> Result<f64> {
    let pump = p0.pump().ok_or_else(|| Error::Invalid("path integral needs a pump field".into()))?.clone();
    let mut total = 0.0;
    flow_steps(p0, rho, t, opts, |step| {
        total += crate::quad::simpson(|s| pump.omega(&step.eval(s)), step.t0, step.t1(), 1e-2);
        Ok(Control::Continue)
    })?;
    Ok(total)
}
