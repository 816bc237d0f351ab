//! Property tests for the kernel, the field library, the flow engine and jets.

use flowlab::flow::{flow_point_opts, DeterrenceSystem};
use flowlab::interval::{box_cutoff, zeta, zeta_derivs, zeta_i, SymInterval};
use flowlab::jet::layout;
use flowlab::jetlab::{jet_compare, jet_field, jet_transport, JetPoly};
use flowlab::ode::OdeOptions;
use flowlab::pipeline::translate_field;
use flowlab::pump::PumpBundle;
use flowlab::racetrack::Racetrack;
use flowlab::{Field, FieldExpr};
use proptest::prelude::*;

fn bounded_fields() -> Vec<Field> {
    vec![
        Field::v0(),
        Field::h(),
        Field::new(FieldExpr::Q { m: 150 }).unwrap(),
        Field::new(FieldExpr::Pstar { m: 150 }).unwrap(),
        Field::new(FieldExpr::Pplus { m: 150 }).unwrap(),
        Field::new(FieldExpr::P0 { m: 150 }).unwrap(),
    ]
}

fn random_jet(nvars: usize, order: usize, base: Vec<f64>, value: Vec<f64>, seed: &[f64]) -> JetPoly {
    let lay = layout(nvars, order);
    let n = lay.indices.len();
    let comps = value
        .iter()
        .enumerate()
        .map(|(c, v)| {
            let mut row: Vec<f64> = (0..n).map(|i| seed[(c * n + i) % seed.len()] / (1.0 + lay.degrees[i] as f64)).collect();
            row[0] = *v;
            row
        })
        .collect();
    JetPoly { nvars, order, base, comps }
}

proptest! {
    #[test]
    fn interval_algebra(a in 1u64..1000, b in 1u64..1000, n in 1u64..50, x in -3000.0f64..3000.0) {
        let i = SymInterval::new(a).unwrap();
        let j = SymInterval::new(b).unwrap();
        prop_assert_eq!(i.scale(n).half_width(), n * a);
        prop_assert_eq!(i.sum(&j).half_width(), a + b);
        prop_assert_eq!(i.contains(x), x.abs() < a as f64);
        prop_assert_eq!(i.contains_closure(x), x.abs() <= a as f64);
    }

    #[test]
    fn bump_symmetry(x in -1.0f64..2.0) {
        prop_assert!((zeta(x) + zeta(1.0 - x) - 1.0).abs() <= 1e-12);
        prop_assert!((0.0..=1.0).contains(&zeta(x)));
    }

    #[test]
    fn interval_bump_is_even(a in 1u64..100, x in -200.0f64..200.0) {
        let i = SymInterval::new(a).unwrap();
        prop_assert_eq!(zeta_i(&i, x), zeta_i(&i, -x));
    }

    #[test]
    fn box_cutoff_monotone(p in prop::array::uniform4(-300.0f64..300.0), j in 0usize..4, dx in 0.0f64..50.0) {
        let inner = SymInterval::new(100).unwrap();
        let outer = SymInterval::new(200).unwrap();
        let mut q = p;
        q[j] = p[j].signum() * (p[j].abs() + dx);
        prop_assert!(box_cutoff(&inner, &outer, &q).unwrap() <= box_cutoff(&inner, &outer, &p).unwrap());
    }

    #[test]
    fn bounded_by_one(p in prop::array::uniform4(-500.0f64..500.0)) {
        for f in bounded_fields() {
            let v = f.eval(&p[..f.dim()]).unwrap();
            prop_assert!(v.iter().all(|c| c.abs() <= 1.0 + 1e-12), "{:?} at {:?}", v, p);
        }
    }

    #[test]
    fn pump_is_upward_outside_its_box(p in prop::array::uniform4(-1000.0f64..1000.0), j in 0usize..4) {
        let mut q = p;
        q[j] = q[j].signum() * (400.0 + q[j].abs());
        let v = Field::new(FieldExpr::P0 { m: 150 }).unwrap().eval(&q).unwrap();
        prop_assert_eq!(v, vec![0.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn pump_is_upward_near_the_center(p in prop::array::uniform4(-3.0f64..=3.0)) {
        let v = Field::new(FieldExpr::P0 { m: 150 }).unwrap().eval(&p).unwrap();
        prop_assert!((v[0]).abs() < 1e-12 && v[1].abs() < 1e-12 && v[2] == 0.0 && v[3] == 1.0, "{:?}", v);
    }

    #[test]
    fn runners_straight_outside(p in prop::array::uniform2(-100.0f64..100.0)) {
        let rt = Racetrack::new(150).unwrap();
        let in_straight = p[0].abs() < 4.0 && p[1].abs() < 12.0;
        let far = p[0].abs() >= 50.0 || p[1].abs() >= 50.0;
        if in_straight || far {
            prop_assert_eq!(rt.eval(&p), [0.0, 1.0]);
        }
    }

    #[test]
    fn translation_conjugacy(p in prop::array::uniform4(-20.0f64..20.0), r in prop::array::uniform4(-5.0f64..5.0), t in 0.0f64..10.0) {
        let base = FieldExpr::P0 { m: 150 };
        let moved = Field::new(translate_field(&base, &r).unwrap()).unwrap();
        let shifted: Vec<f64> = p.iter().zip(&r).map(|(a, b)| a + b).collect();
        let o = OdeOptions::with_tol(1e-12);
        let lhs = flow_point_opts(&moved, &shifted, t, &o).unwrap();
        let rhs = flow_point_opts(&Field::new(base).unwrap(), &p, t, &o).unwrap();
        for i in 0..4 {
            prop_assert!((lhs[i] - r[i] - rhs[i]).abs() <= 2e-10 * (1.0 + rhs[i].abs()), "{:?} {:?}", lhs, rhs);
        }
    }

    #[test]
    fn document_round_trip(x in -2.0f64..2.0, s in 200.0f64..380.0, off in prop::array::uniform4(-9.0f64..9.0)) {
        let e = FieldExpr::Block {
            first: Box::new(FieldExpr::translate(off[..2].to_vec(), FieldExpr::H)),
            second: Box::new(FieldExpr::scale(3.0, FieldExpr::Q { m: 150 })),
        };
        for expr in [e, FieldExpr::Vstar { x }, FieldExpr::Vsharp { s }] {
            let doc = flowlab::field::to_document(&expr).unwrap();
            let back = flowlab::field::from_document(&doc).unwrap();
            prop_assert_eq!(&back, &expr);
            prop_assert_eq!(flowlab::field::to_document(&back).unwrap(), doc);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn jet_composition_is_associative(
        x in prop::array::uniform2(-1.0f64..1.0),
        y in prop::array::uniform2(-1.0f64..1.0),
        z in prop::array::uniform2(-1.0f64..1.0),
        w in prop::array::uniform2(-1.0f64..1.0),
        seed in prop::collection::vec(-1.0f64..1.0, 13),
    ) {
        let a = random_jet(2, 3, x.to_vec(), y.to_vec(), &seed);
        let b = random_jet(2, 3, y.to_vec(), z.to_vec(), &seed[3..]);
        let c = random_jet(2, 3, z.to_vec(), w.to_vec(), &seed[6..]);
        let left = a.compose(&b).unwrap().compose(&c).unwrap();
        let right = a.compose(&b.compose(&c).unwrap()).unwrap();
        prop_assert!(jet_compare(&left, &right, 3).unwrap() <= 1e-12);
    }

    #[test]
    fn field_jets_match_differences(p in prop::array::uniform4(-30.0f64..30.0), pick in 0usize..4) {
        let fields = bounded_fields();
        let f = &fields[pick + 2];
        let p = &p[..f.dim()];
        let jet = jet_field(f, p, 1).unwrap();
        let jac = jet.jacobian();
        let h = 1e-6;
        for j in 0..f.dim() {
            let mut lo = p.to_vec();
            let mut hi = p.to_vec();
            lo[j] -= h;
            hi[j] += h;
            let (a, b) = (f.eval(&lo).unwrap(), f.eval(&hi).unwrap());
            for i in 0..f.dim() {
                let d = (b[i] - a[i]) / (2.0 * h);
                prop_assert!((d - jac[i][j]).abs() <= 1e-5 * jac[i][j].abs().max(1.0), "{} vs {}", d, jac[i][j]);
            }
        }
        for (a, b) in jet.value().iter().zip(f.eval(p).unwrap()) {
            prop_assert!((a - b).abs() <= 1e-14 * b.abs().max(1.0));
        }
    }

    #[test]
    fn flow_jets_chain(p in prop::array::uniform4(-10.0f64..10.0), s in 0.1f64..3.0, t in 0.1f64..3.0) {
        let f = Field::new(FieldExpr::P0 { m: 150 }).unwrap();
        let o = OdeOptions::with_tol(1e-12);
        let whole = jet_transport(&f, &p, s + t, 2, &o).unwrap();
        let first = jet_transport(&f, &p, t, 2, &o).unwrap();
        let second = jet_transport(&f, &first.value(), s, 2, &o).unwrap();
        let composed = first.compose(&second).unwrap();
        prop_assert!(jet_compare(&whole, &composed, 2).unwrap() <= 1e-9);
    }

    #[test]
    fn deterrence_outside(seed in 0u64..1000) {
        let bundle = PumpBundle::new(150).unwrap();
        let sys = DeterrenceSystem::new(Field::new(FieldExpr::P0 { m: 150 }).unwrap(), bundle.k0).unwrap();
        prop_assert!(sys.outside_deviation(200, seed).0 <= 1e-12);
    }
}

#[test]
fn bump_derivatives_match_differences() {
    for i in 0..=40 {
        let x = -0.5 + 2.0 * i as f64 / 40.0;
        let d = zeta_derivs(x, 5);
        for n in 0..4 {
            let h = 1e-5;
            let fd = (zeta_derivs(x + h, 5)[n] - zeta_derivs(x - h, 5)[n]) / (2.0 * h);
            let scale = d[n + 1].abs().max(1.0);
            assert!((fd - d[n + 1]).abs() <= 1e-6 * scale, "order {} at {x}: {fd} vs {}", n + 1, d[n + 1]);
        }
    }
}

#[test]
fn damped_water_is_flat_at_origin() {
    let j = jet_field(&Field::h(), &[0.0, 0.0], 4).unwrap();
    assert!(j.comps.iter().flatten().all(|c| *c == 0.0));
    let lin = jet_field(&Field::h0(), &[0.0, 0.0], 1).unwrap();
    assert_eq!(lin.jacobian(), vec![vec![1.0, 0.0], vec![0.0, -1.0]]);
}
