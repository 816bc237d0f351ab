//! Acceptance gate: fourteen criteria, one PASS/FAIL line each.
//!
//! Each criterion runs the registered lemma checks and then rechecks the measured
//! values against thresholds written here, so a wrong bound in the registry
//! cannot make a criterion pass.

use std::time::{Duration, Instant};

use flowlab::report::{LemmaReport, RunConfig};
use flowlab::verify::run_lemma;

enum Rel {
    Le(f64),
    Ge(f64),
}

struct Criterion {
    n: usize,
    name: &'static str,
    limit_s: u64,
    checks: &'static [(&'static str, &'static str, Rel)],
}

const CRITERIA: &[Criterion] = &[
    Criterion {
        n: 1,
        name: "band profile straightaway",
        limit_s: 1,
        checks: &[("vertVF-W", "endpoint error", Rel::Le(1e-6))],
    },
    Criterion {
        n: 2,
        name: "crossing time consistency",
        limit_s: 1,
        checks: &[
            ("vertVF-C", "C (lower check)", Rel::Ge(390.0)),
            ("vertVF-C", "C (upper check)", Rel::Le(392.0)),
            ("vertVF-C", "endpoint error", Rel::Le(1e-8)),
        ],
    },
    Criterion {
        n: 3,
        name: "variable travel time",
        limit_s: 5,
        checks: &[
            ("vertVF-Vsharp", "endpoint error", Rel::Le(1e-6)),
            ("vertVF-Vsharp", "non-increasing grid steps", Rel::Le(0.0)),
        ],
    },
    Criterion {
        n: 4,
        name: "hyperbolic conservation and flatness",
        limit_s: 10,
        checks: &[
            ("H0-fixes-00-to-all-orders", "wx drift", Rel::Le(1e-8)),
            ("H0-fixes-00-to-all-orders", "flat jet deviation", Rel::Le(1e-6)),
        ],
    },
    Criterion {
        n: 5,
        name: "racetrack period and straightaway dwell",
        limit_s: 30,
        checks: &[
            ("racetrack", "return error", Rel::Le(1e-5)),
            ("racetrack", "straightaway exit error", Rel::Le(1e-4)),
            ("racetrack", "early returns", Rel::Le(0.0)),
        ],
    },
    Criterion {
        n: 6,
        name: "pump periodicity",
        limit_s: 20,
        checks: &[
            ("P0-per", "return error", Rel::Le(1e-5)),
            ("P0-per", "order-1 jet deviation", Rel::Le(1e-4)),
            ("P0-per", "order-2 jet deviation", Rel::Le(1e-3)),
        ],
    },
    Criterion {
        n: 7,
        name: "no early return",
        limit_s: 30,
        checks: &[
            ("no-early-return", "exit time error", Rel::Le(1e-4)),
            ("no-early-return", "re-entries", Rel::Le(0.0)),
        ],
    },
    Criterion {
        n: 8,
        name: "pump certificate membership",
        limit_s: 30,
        checks: &[("P0K0-in-scrp", "certified", Rel::Ge(1.0))],
    },
    Criterion {
        n: 9,
        name: "pump porousness",
        limit_s: 60,
        checks: &[("P0-porous", "certified fraction", Rel::Ge(1.0))],
    },
    Criterion {
        n: 10,
        name: "runner and water split",
        limit_s: 20,
        checks: &[
            ("following-the-runners-for-m", "water deviation", Rel::Le(1e-4)),
            ("following-the-runners-for-m", "runner deviation", Rel::Le(1e-4)),
        ],
    },
    Criterion {
        n: 11,
        name: "timeflow baseline",
        limit_s: 1,
        checks: &[
            ("SU-and-Phi-V0", "timeflow error", Rel::Le(1e-9)),
            ("SU-and-Phi-V0", "upflow error", Rel::Le(1e-9)),
        ],
    },
    Criterion {
        n: 12,
        name: "monotone lateral projections",
        limit_s: 10,
        checks: &[("Pi1-Pi2-of-P0-orbits-are-monotone", "largest monotonicity violation", Rel::Le(1e-9))],
    },
    Criterion {
        n: 13,
        name: "one full iteration",
        limit_s: 120,
        checks: &[
            ("base-lem", "return error", Rel::Le(1e-4)),
            ("base-lem", "order-1 jet deviation", Rel::Le(1e-3)),
            ("base-lem", "modification checks", Rel::Ge(1.0)),
            ("base-lem", "porous fraction", Rel::Ge(0.99)),
        ],
    },
    Criterion {
        n: 14,
        name: "property suites",
        limit_s: 60,
        checks: &[
            ("flow-properties", "group law (scaled)", Rel::Le(1e-9)),
            ("flow-properties", "homothetic orbits (scaled)", Rel::Le(1e-9)),
            ("flow-properties", "flow coincidence", Rel::Le(2e-10)),
            ("flow-properties", "jet vs finite differences", Rel::Le(1e-4)),
            ("flow-properties", "exchange shell", Rel::Le(1e-12)),
        ],
    },
];

fn evaluate(c: &Criterion, cfg: &RunConfig) -> (bool, String, Duration) {
    let start = Instant::now();
    let mut reports: Vec<LemmaReport> = Vec::new();
    let mut ok = true;
    let mut notes = Vec::new();
    for (key, measure, rel) in c.checks {
        if !reports.iter().any(|r| r.key == *key) {
            match run_lemma(key, cfg) {
                Ok(r) => reports.push(r),
                Err(e) => return (false, format!("{key}: {e}"), start.elapsed()),
            }
        }
        let r = reports.iter().find(|r| r.key == *key).unwrap();
        if let Some(e) = &r.error {
            ok = false;
            notes.push(format!("{key}: {e}"));
            continue;
        }
        let values: Vec<f64> = r.measures.iter().filter(|m| m.name == *measure).map(|m| m.value).collect();
        if values.is_empty() {
            ok = false;
            notes.push(format!("{key}: missing measure {measure}"));
            continue;
        }
        for v in values {
            let good = match rel {
                Rel::Le(b) => v <= *b,
                Rel::Ge(b) => v >= *b,
            };
            ok &= good;
            notes.push(format!("{measure}={v:.3e}"));
        }
    }
    let elapsed = start.elapsed();
    if elapsed > Duration::from_secs(c.limit_s) {
        notes.push(format!("over time budget of {} s", c.limit_s));
        ok = false;
    }
    (ok, notes.join(", "), elapsed)
}

#[test]
fn acceptance_criteria() {
    let cfg = RunConfig::default();
    let mut failed = Vec::new();
    for c in CRITERIA {
        let (ok, notes, elapsed) = evaluate(c, &cfg);
        println!(
            "criterion {:>2} {} {} [{:.2?}] {}",
            c.n,
            if ok { "PASS" } else { "FAIL" },
            c.name,
            elapsed,
            notes
        );
        if !ok {
            failed.push(c.n);
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
