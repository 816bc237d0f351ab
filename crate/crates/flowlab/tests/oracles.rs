//! Derived constants checked against independent oracles.
//!
//! Each oracle is computed here from scratch (own bump, own Simpson rule,
//! closed forms where they exist) and compared with a frozen value. The library
//! is then compared with the same frozen value.

use flowlab::flow::{flow_point_opts, hit_time, Direction};
use flowlab::interval::{box_cutoff, zeta, SymInterval};
use flowlab::ode::OdeOptions;
use flowlab::pump::PumpBundle;
use flowlab::travel::{compute_c, inverse_x_of_s, travel_time_gamma, w};
use flowlab::{Field, FieldExpr};

const C_FROZEN: f64 = 390.870_655_133_074_37;
const GAMMA_HALF_FROZEN: f64 = 263.648_615_257_324_9;
const X_380_FROZEN: f64 = 0.790_142_789_585_466_1;

fn h(t: f64) -> f64 {
    if t > 0.0 {
        (-1.0 / t).exp()
    } else {
        0.0
    }
}

fn bump(x: f64) -> f64 {
    if x <= 0.0 {
        1.0
    } else if x >= 1.0 {
        0.0
    } else {
        h(1.0 - x) / (h(x) + h(1.0 - x))
    }
}

fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let step = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(a + step * i as f64);
    }
    s * step / 3.0
}

/// Travel time at slowdown depth `q`: the slow band contributes `190 / (1 - q/2)`, the
/// unit-speed tails 8, and the two transition layers an integral over the bump.
fn oracle_travel(q: f64) -> f64 {
    190.0 / (1.0 - q / 2.0) + 8.0 + 2.0 * simpson(|t| 1.0 / (1.0 - q * bump(t) / 2.0), 0.0, 1.0, 20_000)
}

#[test]
fn oracle_full_crossing_time() {
    let oracle = oracle_travel(1.0);
    assert!((oracle - C_FROZEN).abs() < 1e-10, "oracle {oracle}");
    let c = compute_c().unwrap();
    assert!((c - C_FROZEN).abs() < 1e-10, "library {c}");
    assert!((390.0..=392.0).contains(&c));
}

#[test]
fn crossing_time_by_event_detection() {
    let t = hit_time(&Field::w(), &[-100.0], 0, 100.0, Direction::Forward, 1000.0, &OdeOptions::with_tol(1e-12))
        .unwrap()
        .unwrap();
    assert!((t - C_FROZEN).abs() < 1e-8, "{t}");
}

#[test]
fn oracle_midpoint_travel_time() {
    let oracle = oracle_travel(1.0 - bump(0.5));
    assert!((oracle - GAMMA_HALF_FROZEN).abs() < 1e-9, "oracle {oracle}");
    let g = travel_time_gamma(0.5).unwrap();
    assert!((g - GAMMA_HALF_FROZEN).abs() < 1e-9, "library {g}");
    assert!(travel_time_gamma(0.4).unwrap() < g && g < travel_time_gamma(0.6).unwrap());
}

#[test]
fn oracle_parameter_for_380() {
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if oracle_travel(1.0 - bump(mid)) < 380.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    assert!((lo - X_380_FROZEN).abs() < 1e-9, "oracle {lo}");
    let x = inverse_x_of_s(380.0).unwrap();
    assert!((x - X_380_FROZEN).abs() < 1e-9, "library {x}");
}

#[test]
fn prescribed_travel_time_300_by_event() {
    let f = Field::new(FieldExpr::Vsharp { s: 300.0 }).unwrap();
    let t = hit_time(&f, &[-100.0], 0, 100.0, Direction::Forward, 1000.0, &OdeOptions::with_tol(1e-12))
        .unwrap()
        .unwrap();
    assert!((t - 300.0).abs() < 1e-6, "{t}");
}

#[test]
fn symmetric_bump_closed_forms() {
    // bump(x) + bump(1 - x) = 1 gives bump(1/2) = 1/2 exactly.
    assert_eq!(bump(0.5), 0.5);
    assert!((zeta(0.5) - 0.5).abs() < 1e-15);
    assert!((w(95.5) - 0.75).abs() < 1e-15);
    let i = |n| SymInterval::new(n).unwrap();
    let v = box_cutoff(&i(100), &i(200), &[150.0, 0.0, 0.0, 0.0]).unwrap();
    assert!((v - 0.5).abs() < 1e-15, "{v}");
}

#[test]
fn lap_time_of_the_water_closed_form() {
    // The idle integral is 2 * (3 + int_0^1 bump) = 7 by the symmetry of the bump.
    let idle = 2.0 * (3.0 + simpson(bump, 0.0, 1.0, 20_000));
    assert!((idle - 7.0).abs() < 1e-12);
    let bundle = PumpBundle::new(150).unwrap();
    assert!((bundle.t_times - 143.0).abs() < 1e-10, "{}", bundle.t_times);
}

#[test]
fn linear_water_flow_closed_form() {
    let end = flow_point_opts(&Field::h0(), &[1.0, 1.0], 2f64.ln(), &OdeOptions::with_tol(1e-12)).unwrap();
    assert!((end[0] - 2.0).abs() < 1e-10 && (end[1] - 0.5).abs() < 1e-10, "{end:?}");
}

#[test]
fn damped_water_value_closed_form() {
    // The damping factor is exp(-1/r^2) / (1 + r^2).
    let c = (-0.5f64).exp() / 3.0;
    let v = Field::h().eval(&[1.0, 1.0]).unwrap();
    assert!((v[0] - c).abs() < 1e-15 && (v[1] + c).abs() < 1e-15, "{v:?}");
}
