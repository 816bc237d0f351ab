//! Explicit Runge-Kutta integration with dense output.
//!
//! The adaptive scheme is Dormand-Prince 5(4) with the usual fourth-order
//! continuous extension. A fixed-step classical RK4 is available for runs that
//! must not depend on step-size control; it uses cubic Hermite dense output.

use crate::error::{Error, Result};

/// Right-hand side of an autonomous ODE `y' = f(y)`.
pub trait System {
    fn dim(&self) -> usize;
    fn rhs(&self, y: &[f64], dy: &mut [f64]) -> Result<()>;
    /// Largest step the system tolerates at `y`.
    fn max_step(&self, _y: &[f64]) -> f64 {
        f64::INFINITY
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Method {
    Dopri5,
    Rk4 { h: f64 },
}

#[derive(Clone, Debug)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    pub method: Method,
    pub max_steps: usize,
}

impl Default for OdeOptions {
    fn default() -> Self {
        OdeOptions { rtol: 1e-10, atol: 1e-10, method: Method::Dopri5, max_steps: 50_000_000 }
    }
}

impl OdeOptions {
    pub fn with_tol(tol: f64) -> Self {
        OdeOptions { rtol: tol, atol: tol, ..Default::default() }
    }
}

/// One accepted step with its continuous extension.
#[derive(Clone, Debug)]
pub struct Step {
    pub t0: f64,
    pub h: f64,
    pub err: f64,
    rcont: [Vec<f64>; 5],
    pub y1: Vec<f64>,
}

impl Step {
    pub fn t1(&self) -> f64 {
        self.t0 + self.h
    }

    pub fn y0(&self) -> &[f64] {
        &self.rcont[0]
    }

    /// Dense output at time `t` inside the step.
    pub fn eval(&self, t: f64) -> Vec<f64> {
        (0..self.rcont[0].len()).map(|i| self.eval_component(t, i)).collect()
    }

    pub fn eval_component(&self, t: f64, i: usize) -> f64 {
        let th = if self.h == 0.0 { 0.0 } else { (t - self.t0) / self.h };
        let th1 = 1.0 - th;
        let r = &self.rcont;
        r[0][i] + th * (r[1][i] + th1 * (r[2][i] + th * (r[3][i] + th1 * r[4][i])))
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct Stats {
    pub steps: usize,
    pub rejected: usize,
    pub evals: usize,
    pub max_err: f64,
}

pub enum Control {
    Continue,
    Stop,
}

/// Result of an integration run.
#[derive(Clone, Debug)]
pub struct Outcome {
    pub t: f64,
    pub y: Vec<f64>,
    pub stats: Stats,
    pub stopped: bool,
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

fn eval_rhs<S: System>(sys: &S, t: f64, y: &[f64], out: &mut [f64], stats: &mut Stats) -> Result<()> {
    stats.evals += 1;
    sys.rhs(y, out)?;
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::Integrator { t, reason: "non-finite field value".into(), state: y.to_vec() });
    }
    Ok(())
}

fn axpy(out: &mut [f64], y: &[f64], h: f64, terms: &[(f64, &[f64])]) {
    for i in 0..out.len() {
        let mut s = 0.0;
        for (c, k) in terms {
            s += c * k[i];
        }
        out[i] = y[i] + h * s;
    }
}

/// Integrates from `(t0, y0)` to `t_end` (either direction), calling `on_step` after every
/// accepted step. The callback may stop the run early.
pub fn integrate<S, F>(sys: &S, t0: f64, y0: &[f64], t_end: f64, opts: &OdeOptions, mut on_step: F) -> Result<Outcome>
where
    S: System,
    F: FnMut(&Step) -> Result<Control>,
{
    let n = sys.dim();
    if y0.len() != n {
        return Err(Error::Dimension { expected: n, got: y0.len() });
    }
    if !y0.iter().all(|v| v.is_finite()) || !t_end.is_finite() {
        return Err(Error::Integrator { t: t0, reason: "non-finite initial data".into(), state: y0.to_vec() });
    }
    match opts.method {
        Method::Dopri5 => dopri5(sys, t0, y0, t_end, opts, &mut on_step),
        Method::Rk4 { h } => rk4(sys, t0, y0, t_end, h, opts, &mut on_step),
    }
}

fn dopri5<S, F>(sys: &S, t0: f64, y0: &[f64], t_end: f64, opts: &OdeOptions, on_step: &mut F) -> Result<Outcome>
where
    S: System,
    F: FnMut(&Step) -> Result<Control>,
{
    let n = y0.len();
    let mut stats = Stats::default();
    let mut t = t0;
    let mut y = y0.to_vec();
    if t_end == t0 {
        return Ok(Outcome { t, y, stats, stopped: false });
    }
    let dir = (t_end - t0).signum();
    let mut k1 = vec![0.0; n];
    let (mut k2, mut k3, mut k4, mut k5, mut k6, mut k7) =
        (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let mut ytmp = vec![0.0; n];
    let mut ynew = vec![0.0; n];
    eval_rhs(sys, t, &y, &mut k1, &mut stats)?;

    let sc = |a: f64, b: f64| opts.atol + opts.rtol * a.abs().max(b.abs());
    // Initial step guess from the size of the derivative.
    let d0 = (y.iter().map(|v| (v / sc(*v, *v)).powi(2)).sum::<f64>() / n as f64).sqrt();
    let d1 = (k1.iter().zip(&y).map(|(k, v)| (k / sc(*v, *v)).powi(2)).sum::<f64>() / n as f64).sqrt();
    let mut h = if d0 < 1e-5 || d1 < 1e-5 { 1e-3 } else { 0.01 * d0 / d1 };
    h = h.max(1e-6);
    let mut fac_old: f64 = 1e-4;
    let mut last_reject = false;

    loop {
        let remaining = (t_end - t).abs();
        if remaining <= 1e-14 * t.abs().max(1.0) {
            break;
        }
        if stats.steps + stats.rejected >= opts.max_steps {
            return Err(Error::Integrator { t, reason: "step budget exhausted".into(), state: y.clone() });
        }
        let hmax = sys.max_step(&y);
        let mut habs = h.min(hmax).min(remaining);
        // Avoid a sliver of a final step.
        if remaining - habs < 1e-3 * habs {
            habs = remaining;
        }
        if habs < 1e-13 * t.abs().max(1.0) {
            return Err(Error::Integrator { t, reason: "step size underflow".into(), state: y.clone() });
        }
        let hs = dir * habs;

        axpy(&mut ytmp, &y, hs, &[(A21, &k1)]);
        eval_rhs(sys, t + C2 * hs, &ytmp, &mut k2, &mut stats)?;
        axpy(&mut ytmp, &y, hs, &[(A31, &k1), (A32, &k2)]);
        eval_rhs(sys, t + C3 * hs, &ytmp, &mut k3, &mut stats)?;
        axpy(&mut ytmp, &y, hs, &[(A41, &k1), (A42, &k2), (A43, &k3)]);
        eval_rhs(sys, t + C4 * hs, &ytmp, &mut k4, &mut stats)?;
        axpy(&mut ytmp, &y, hs, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)]);
        eval_rhs(sys, t + C5 * hs, &ytmp, &mut k5, &mut stats)?;
        axpy(&mut ytmp, &y, hs, &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)]);
        eval_rhs(sys, t + hs, &ytmp, &mut k6, &mut stats)?;
        axpy(&mut ynew, &y, hs, &[(A71, &k1), (A73, &k3), (A74, &k4), (A75, &k5), (A76, &k6)]);
        eval_rhs(sys, t + hs, &ynew, &mut k7, &mut stats)?;

        let mut err = 0.0;
        for i in 0..n {
            let e = hs * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
            err += (e / sc(y[i], ynew[i])).powi(2);
        }
        let err = (err / n as f64).sqrt();

        // PI step-size control (Hairer's DOPRI5 defaults).
        let expo = 0.2 - 0.04 * 0.75;
        let fac11 = err.powf(expo);
        let mut fac = fac11 / fac_old.powf(0.04);
        fac = (fac / 0.9).clamp(1.0 / 10.0, 5.0);
        let hnew = habs / fac;

        if err <= 1.0 {
            fac_old = err.max(1e-4);
            stats.steps += 1;
            stats.max_err = stats.max_err.max(err);
            let r2: Vec<f64> = (0..n).map(|i| ynew[i] - y[i]).collect();
            let r3: Vec<f64> = (0..n).map(|i| hs * k1[i] - r2[i]).collect();
            let r4: Vec<f64> = (0..n).map(|i| r2[i] - hs * k7[i] - r3[i]).collect();
            let r5: Vec<f64> = (0..n)
                .map(|i| hs * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i] + D7 * k7[i]))
                .collect();
            let step = Step { t0: t, h: hs, err, rcont: [y.clone(), r2, r3, r4, r5], y1: ynew.clone() };
            t = if habs == remaining { t_end } else { t + hs };
            std::mem::swap(&mut y, &mut ynew);
            std::mem::swap(&mut k1, &mut k7);
            let ctl = on_step(&step)?;
            if let Control::Stop = ctl {
                return Ok(Outcome { t, y, stats, stopped: true });
            }
            h = if last_reject { hnew.min(habs) } else { hnew };
            last_reject = false;
        } else {
            stats.rejected += 1;
            h = habs / (fac11 / 0.9).min(10.0);
            last_reject = true;
        }
    }
    Ok(Outcome { t, y, stats, stopped: false })
}

fn rk4<S, F>(sys: &S, t0: f64, y0: &[f64], t_end: f64, h: f64, opts: &OdeOptions, on_step: &mut F) -> Result<Outcome>
where
    S: System,
    F: FnMut(&Step) -> Result<Control>,
{
    if !(h > 0.0) {
        return Err(Error::Invalid(format!("fixed step must be positive, got {h}")));
    }
    let n = y0.len();
    let mut stats = Stats::default();
    let mut t = t0;
    let mut y = y0.to_vec();
    let dir = (t_end - t0).signum();
    let (mut k1, mut k2, mut k3, mut k4) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let mut ytmp = vec![0.0; n];
    let mut f1 = vec![0.0; n];
    let total = (t_end - t0).abs();
    let nsteps = (total / h).ceil() as usize;
    if nsteps > opts.max_steps {
        return Err(Error::Integrator { t, reason: "step budget exhausted".into(), state: y });
    }
    for s in 0..nsteps {
        let t_next = if s + 1 == nsteps { t_end } else { t0 + dir * h * (s + 1) as f64 };
        let hs = t_next - t;
        eval_rhs(sys, t, &y, &mut k1, &mut stats)?;
        axpy(&mut ytmp, &y, 0.5 * hs, &[(1.0, &k1)]);
        eval_rhs(sys, t + 0.5 * hs, &ytmp, &mut k2, &mut stats)?;
        axpy(&mut ytmp, &y, 0.5 * hs, &[(1.0, &k2)]);
        eval_rhs(sys, t + 0.5 * hs, &ytmp, &mut k3, &mut stats)?;
        axpy(&mut ytmp, &y, hs, &[(1.0, &k3)]);
        eval_rhs(sys, t + hs, &ytmp, &mut k4, &mut stats)?;
        let ynew: Vec<f64> =
            (0..n).map(|i| y[i] + hs / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])).collect();
        eval_rhs(sys, t_next, &ynew, &mut f1, &mut stats)?;
        let r2: Vec<f64> = (0..n).map(|i| ynew[i] - y[i]).collect();
        let r3: Vec<f64> = (0..n).map(|i| hs * k1[i] - r2[i]).collect();
        let r4: Vec<f64> = (0..n).map(|i| r2[i] - hs * f1[i] - r3[i]).collect();
        let step = Step { t0: t, h: hs, err: 0.0, rcont: [y.clone(), r2, r3, r4, vec![0.0; n]], y1: ynew.clone() };
        stats.steps += 1;
        t = t_next;
        y = ynew;
        if let Control::Stop = on_step(&step)? {
            return Ok(Outcome { t, y, stats, stopped: true });
        }
    }
    Ok(Outcome { t, y, stats, stopped: false })
}
