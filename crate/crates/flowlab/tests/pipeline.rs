//! Surgeries, membership checks and the iteration, on small concrete cases.

use flowlab::field::ScalarExpr;
use flowlab::flow::{
    box_transit, flow_point_opts, hit_time, is_undeterred, path_integral_omega, porousness_estimate, DeterrenceSystem,
    Direction,
};
use flowlab::interval::SymInterval;
use flowlab::jetlab::{jet_compare, jet_transport, periodicity_order, JetPoly};
use flowlab::ode::OdeOptions;
use flowlab::pipeline::{
    build_chain, check_membership, exchange, iteration_step, reflect_double, scale_system, translate_field, Budget,
    Predicate, Subject, Verdict,
};
use flowlab::pump::PumpBundle;
use flowlab::{Field, FieldExpr};

const UP: [f64; 4] = [0.0, 0.0, 0.0, 1.0];

fn opts() -> OdeOptions {
    OdeOptions::with_tol(1e-10)
}

fn unit(a: u64) -> SymInterval {
    SymInterval::new(a).unwrap()
}

fn grid(a: f64) -> Vec<[f64; 4]> {
    let mut out = Vec::new();
    for i in 0..5 {
        for j in 0..5 {
            let s = -a + 2.0 * a * i as f64 / 4.0;
            let t = -a + 2.0 * a * j as f64 / 4.0;
            out.push([s, t, 0.5 * s, t - s]);
        }
    }
    out
}

#[test]
fn upward_flow_is_a_translation() {
    let end = flow_point_opts(&Field::v0(), &[1.0, 2.0, 3.0, 4.0], 7.0, &opts()).unwrap();
    assert!(end.iter().zip([1.0, 2.0, 3.0, 11.0]).all(|(a, b)| (a - b).abs() < 1e-12), "{end:?}");
    let t = hit_time(&Field::v0(), &[0.0; 4], 3, 5.0, Direction::Forward, 100.0, &opts()).unwrap().unwrap();
    assert!((t - 5.0).abs() < 1e-10);
    let t = hit_time(&Field::v0(), &[0.0; 4], 3, -3.0, Direction::Backward, 100.0, &opts()).unwrap().unwrap();
    assert!((t + 3.0).abs() < 1e-10);
    let j = jet_transport(&Field::v0(), &[1.0, 2.0, 3.0, 4.0], 1.0, 1, &opts()).unwrap();
    let id = JetPoly::identity(&[1.0, 2.0, 3.0, 4.0], 1);
    let dev = j.deviation_by_degree(&id, 1).unwrap();
    assert!((dev[0] - 1.0).abs() < 1e-12 && dev[1] == 0.0, "{dev:?}");
    let rep = periodicity_order(&Field::v0(), &[0.0; 4], -3, 0, 1e-4, &opts()).unwrap();
    assert!((rep.deviations[0] - 3.0).abs() < 1e-12 && rep.periodic_to.is_none());
}

#[test]
fn linear_water_jacobian() {
    let t: f64 = 1.5;
    let jac = jet_transport(&Field::h0(), &[1.0, 1.0], t, 1, &OdeOptions::with_tol(1e-12)).unwrap().jacobian();
    assert!((jac[0][0] - t.exp()).abs() < 1e-8 && (jac[1][1] - (-t).exp()).abs() < 1e-8);
    assert!(jac[0][1].abs() < 1e-12 && jac[1][0].abs() < 1e-12);
}

#[test]
fn racetrack_lap_returns_jet_value() {
    let q = Field::new(FieldExpr::Q { m: 150 }).unwrap();
    let start = [0.0, -12.0];
    let j = jet_transport(&q, &start, 150.0, 1, &opts()).unwrap();
    assert!(jet_compare(&j, &JetPoly::identity(&start, 1), 0).unwrap() <= 1e-5);
}

#[test]
fn undeterred_examples() {
    let v0 = DeterrenceSystem::new(Field::v0(), SymInterval::UNIT).unwrap();
    assert!(is_undeterred(&v0, &[0.3, -0.2, 0.9, 0.1], 10.0, &opts()).unwrap());
    let bundle = PumpBundle::new(150).unwrap();
    let p0 = DeterrenceSystem::new(Field::new(FieldExpr::P0 { m: 150 }).unwrap(), bundle.k0).unwrap();
    assert!(is_undeterred(&p0, &[1.0, 1.0, 0.0, 0.0], 1e5, &opts()).unwrap());
    // Runners alone, lifted to four dimensions, circle forever.
    let lifted = FieldExpr::Block {
        first: Box::new(FieldExpr::Constant { value: vec![0.0, 0.0] }),
        second: Box::new(FieldExpr::Q { m: 150 }),
    };
    let trapped = DeterrenceSystem::new(Field::new(lifted).unwrap(), unit(20)).unwrap();
    assert!(!is_undeterred(&trapped, &[0.0, 0.0, 0.0, -12.0], 1000.0, &opts()).unwrap());
    let rep = porousness_estimate(&v0, 100, 3, 10.0, None, &opts()).unwrap();
    assert_eq!(rep.fraction, 1.0);
}

#[test]
fn upward_transit_is_straight_up() {
    let sys = DeterrenceSystem::new(Field::v0(), unit(4)).unwrap();
    let bt = box_transit(&sys, &[1.0, -2.0, 3.5, -4.0], 100.0, &opts()).unwrap();
    assert_eq!(bt.down[3], -4.0);
    assert_eq!(bt.up[3], 4.0);
    assert!((bt.timeflow - 8.0).abs() < 1e-9);
}

#[test]
fn water_follows_the_weight_integral() {
    let p0 = Field::new(FieldExpr::P0 { m: 150 }).unwrap();
    let o = OdeOptions::with_tol(1e-12);
    let rho = [0.5, 0.3, 5.0, 0.0];
    let mut last = 0.0;
    for t in [2.0, 5.0, 10.0] {
        let omega = path_integral_omega(&p0, &rho, t, &o).unwrap();
        assert!(omega >= last);
        last = omega;
        let end = flow_point_opts(&p0, &rho, t, &o).unwrap();
        let water = flow_point_opts(&Field::h(), &rho[..2], omega, &o).unwrap();
        assert!((end[0] - water[0]).abs() < 1e-6 && (end[1] - water[1]).abs() < 1e-6, "{end:?} {water:?}");
    }
}

#[test]
fn translation_of_upward_field() {
    let moved = Field::new(translate_field(&FieldExpr::V0, &[3.0, -1.0, 2.0, 7.0]).unwrap()).unwrap();
    for p in grid(50.0) {
        assert_eq!(moved.eval(&p).unwrap(), UP.to_vec());
    }
    let h = FieldExpr::Block { first: Box::new(FieldExpr::H), second: Box::new(FieldExpr::Q0) };
    let rho = [0.4, -0.7, 1.0, 2.0];
    let moved = Field::new(translate_field(&h, &rho).unwrap()).unwrap();
    let base = Field::new(h).unwrap();
    for p in grid(3.0) {
        let back: Vec<f64> = p.iter().zip(&rho).map(|(a, b)| a - b).collect();
        assert_eq!(moved.eval(&p).unwrap(), base.eval(&back).unwrap());
    }
}

#[test]
fn translation_shifts_undeterred_points() {
    let bundle = PumpBundle::new(150).unwrap();
    let rho = [2.0, -3.0, 1.0, 0.5];
    let p0 = DeterrenceSystem::new(Field::new(FieldExpr::P0 { m: 150 }).unwrap(), bundle.k0).unwrap();
    let moved = DeterrenceSystem::new(
        Field::new(translate_field(&FieldExpr::P0 { m: 150 }, &rho).unwrap()).unwrap(),
        bundle.k0.sum(&unit(4)),
    )
    .unwrap();
    for (k, p) in grid(2.0).into_iter().take(10).enumerate() {
        let p = [p[0] + 0.01 * k as f64 + 0.1, p[1] + 0.13, p[2], p[3]];
        let q: Vec<f64> = p.iter().zip(&rho).map(|(a, b)| a + b).collect();
        assert_eq!(
            is_undeterred(&p0, &p, 1e5, &opts()).unwrap(),
            is_undeterred(&moved, &q, 1e5, &opts()).unwrap()
        );
    }
}

#[test]
fn scaling_the_pump() {
    let bundle = PumpBundle::new(150).unwrap();
    let one = scale_system(&bundle, 1).unwrap();
    assert_eq!(one.expr, FieldExpr::P0 { m: 150 });
    assert_eq!(one.system.interval, bundle.k0);
    let three = scale_system(&bundle, 3).unwrap();
    let f = Field::new(FieldExpr::P0 { m: 150 }).unwrap();
    assert_eq!(three.system.field.eval(&[3.0, 0.0, 0.0, 0.0]).unwrap(), f.eval(&[1.0, 0.0, 0.0, 0.0]).unwrap());
    assert_eq!(three.period, 450);
    let rep = periodicity_order(&three.system.field, &three.inner.bottom_center(), 450, 1, 1e-4, &OdeOptions::with_tol(1e-12))
        .unwrap();
    assert!(rep.deviations[1] <= 1e-4, "{:?}", rep.deviations);
    assert!(scale_system(&bundle, 0).is_err());
}

#[test]
fn exchange_examples() {
    let x = Field::new(exchange(SymInterval::UNIT, &FieldExpr::V0, &FieldExpr::V0, 200, 0).unwrap()).unwrap();
    for p in grid(10.0) {
        assert_eq!(x.eval(&p).unwrap(), UP.to_vec());
    }
    let bundle = PumpBundle::new(150).unwrap();
    let spread = scale_system(&bundle, 400).unwrap();
    let x = Field::new(exchange(bundle.k0, &spread.expr, &FieldExpr::P0 { m: 150 }, 200, 0).unwrap()).unwrap();
    for p in [[500.0, 0.0, 0.0, 0.0], [0.0, -1000.0, 1100.0, 1.0], [1.0, 1.0, 1.0, -401.0]] {
        assert_eq!(x.eval(&p).unwrap(), UP.to_vec());
    }
    // A sideways field is not upward on the shell, so the branches cannot be glued.
    let bad = FieldExpr::Constant { value: vec![1.0, 0.0, 0.0, 0.0] };
    assert!(exchange(unit(3), &bad, &FieldExpr::V0, 200, 0).is_err());
}

#[test]
fn reflection_doubling_of_upward_field() {
    let (v1, i1) = reflect_double(&FieldExpr::V0, unit(5), 100, 0).unwrap();
    assert_eq!(i1.half_width(), 18);
    let f = Field::new(v1).unwrap();
    for p in grid(30.0) {
        assert_eq!(f.eval(&p).unwrap(), UP.to_vec());
    }
}

#[test]
fn membership_examples() {
    let b = Budget::default();
    let v0 = DeterrenceSystem::new(Field::v0(), SymInterval::UNIT).unwrap();
    let rep = check_membership(Predicate::D, &Subject::new(&v0), 100, 1, &b);
    assert_eq!(rep.verdict, Verdict::CertifiedAtSamples);

    // Upward on the closed box, pushed sideways outside.
    let keep = ScalarExpr::BoxCutoff { center: vec![0.0; 4], inner: 2.0, outer: 3.0 };
    let kicked = FieldExpr::blend(keep, FieldExpr::V0, FieldExpr::Constant { value: vec![1.0, 0.0, 0.0, 0.0] });
    let sys = DeterrenceSystem::new(Field::new(kicked).unwrap(), unit(2)).unwrap();
    let rep = check_membership(Predicate::DPlus, &Subject::new(&sys), 100, 1, &b);
    assert_eq!(rep.verdict, Verdict::Refuted);
    assert!(rep.witness.is_some());

    let bundle = PumpBundle::new(150).unwrap();
    let p0 = DeterrenceSystem::new(Field::new(FieldExpr::P0 { m: 150 }).unwrap(), bundle.k0).unwrap();
    let subject = Subject { inner: Some(SymInterval::UNIT), period: Some(150.0), ..Subject::new(&p0) };
    assert!(check_membership(Predicate::PI, &subject, 20, 2, &b).certified());
    // A wrong period is caught.
    let subject = Subject { inner: Some(SymInterval::UNIT), period: Some(149.0), ..Subject::new(&p0) };
    assert_eq!(check_membership(Predicate::PI, &subject, 20, 2, &b).verdict, Verdict::Refuted);
}

#[test]
fn iteration_from_upward_field() {
    let pump = PumpBundle::new(150).unwrap();
    let b = Budget { samples: 20, ..Budget::default() };
    let sigma = [0.3, -1.2, 0.7, 1.5];
    let out = iteration_step(&FieldExpr::V0, SymInterval::UNIT, &sigma, &pump, &b).unwrap();
    assert!(out.interval.half_width() > 1);
    assert!(out.checks.iter().all(|c| c.certified()));
    let f = Field::new(out.expr.clone()).unwrap();
    for p in grid(1.0) {
        assert_eq!(f.eval(&p).unwrap(), UP.to_vec());
    }
    let rep = periodicity_order(&f, &sigma, out.period, 1, 1e-3, &OdeOptions::with_tol(1e-12)).unwrap();
    assert!(rep.deviations[1] <= 1e-3 && rep.deviations[0] <= 1e-4, "{:?}", rep.deviations);
}

#[test]
fn one_stage_chain_is_one_iteration() {
    let pump = PumpBundle::new(150).unwrap();
    let b = Budget { samples: 10, ..Budget::default() };
    let chain = build_chain(1, &pump, &b).unwrap();
    let stage = &chain.stages[0];
    let direct = iteration_step(&FieldExpr::V0, SymInterval::UNIT, &stage.point, &pump, &b).unwrap();
    assert_eq!(direct.interval, stage.interval);
    assert_eq!(direct.period, stage.period);
    assert_eq!(direct.expr, *stage.field.expr());
}
