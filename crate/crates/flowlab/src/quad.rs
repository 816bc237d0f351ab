//! Adaptive Gauss-Kronrod quadrature and a small root finder.

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
];
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

/// One G7-K15 panel on `[a, b]` for a vector-valued integrand; returns (Kronrod, |K - G|).
fn gk15<F: FnMut(f64) -> Vec<f64>>(f: &mut F, a: f64, b: f64) -> (Vec<f64>, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let n = fc.len();
    let mut k: Vec<f64> = fc.iter().map(|v| v * WGK[7]).collect();
    let mut g: Vec<f64> = fc.iter().map(|v| v * WG[3]).collect();
    for j in 0..7 {
        let x = h * XGK[j];
        let f1 = f(c - x);
        let f2 = f(c + x);
        for i in 0..n {
            let s = f1[i] + f2[i];
            k[i] += WGK[j] * s;
            if j % 2 == 1 {
                g[i] += WG[j / 2] * s;
            }
        }
    }
    let err = k.iter().zip(&g).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max) * h.abs();
    (k.into_iter().map(|v| v * h).collect(), err)
}

/// Adaptive quadrature of a vector-valued integrand over `[a, b]` split at `breaks`.
pub fn integrate_vec<F: FnMut(f64) -> Vec<f64>>(
    mut f: F,
    a: f64,
    b: f64,
    breaks: &[f64],
    tol: f64,
) -> Result<Vec<f64>> {
    let mut pts = vec![a];
    pts.extend(breaks.iter().copied().filter(|x| *x > a && *x < b));
    pts.push(b);
    let mut stack: Vec<(f64, f64, usize)> = pts.windows(2).map(|w| (w[0], w[1], 0)).collect();
    let total_len = (b - a).abs().max(f64::MIN_POSITIVE);
    let mut total: Option<Vec<f64>> = None;
    let mut evals = 0usize;
    while let Some((lo, hi, depth)) = stack.pop() {
        let (val, err) = gk15(&mut f, lo, hi);
        evals += 15;
        let share = tol * (hi - lo).abs() / total_len;
        if err <= share.max(1e-15 * val.iter().fold(0.0f64, |m, v| m.max(v.abs()))) || depth >= 50 {
            if depth >= 50 && err > 1e3 * share {
                return Err(Error::Quadrature(format!("panel [{lo}, {hi}] stuck at error {err:e}")));
            }
            match total.as_mut() {
                None => total = Some(val),
                Some(t) => t.iter_mut().zip(&val).for_each(|(x, y)| *x += y),
            }
        } else {
            let mid = 0.5 * (lo + hi);
            stack.push((lo, mid, depth + 1));
            stack.push((mid, hi, depth + 1));
        }
        if evals > 5_000_000 {
            return Err(Error::Quadrature("evaluation budget exhausted".into()));
        }
    }
    Ok(total.unwrap_or_default())
}

/// Adaptive Gauss-Kronrod quadrature of a scalar integrand.
pub fn integrate<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, breaks: &[f64], tol: f64) -> Result<f64> {
    Ok(integrate_vec(|x| vec![f(x)], a, b, breaks, tol)?[0])
}

/// Composite Simpson rule on `[a, b]` with an even number of panels of width at most `max_h`.
pub fn simpson<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, max_h: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    let mut n = ((b - a).abs() / max_h).ceil() as usize;
    n = n.max(2);
    if n % 2 == 1 {
        n += 1;
    }
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(a + h * i as f64);
    }
    s * h / 3.0
}

/// Root of an increasing function on `[lo, hi]` by bisection, finished with Newton steps.
///
/// `df` may return `None` when a derivative is not available at a point.
pub fn invert_increasing<F, D>(f: F, df: D, target: f64, mut lo: f64, mut hi: f64, tol: f64) -> Result<f64>
where
    F: Fn(f64) -> Result<f64>,
    D: Fn(f64) -> Option<f64>,
{
    let flo = f(lo)? - target;
    let fhi = f(hi)? - target;
    if flo > 0.0 || fhi < 0.0 {
        return Err(Error::Root(format!("target {target} not bracketed by [{lo}, {hi}]")));
    }
    if flo == 0.0 {
        return Ok(lo);
    }
    if fhi == 0.0 {
        return Ok(hi);
    }
    while hi - lo > 1e-6 {
        let mid = 0.5 * (lo + hi);
        if f(mid)? < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mut x = 0.5 * (lo + hi);
    for _ in 0..8 {
        let r = f(x)? - target;
        let Some(d) = df(x) else { break };
        if d <= 0.0 {
            break;
        }
        let next = (x - r / d).clamp(lo, hi);
        let done = (next - x).abs() <= tol;
        x = next;
        if done {
            break;
        }
    }
    // Fall back to plain bisection if the derivative misbehaved.
    let r = f(x)? - target;
    if r.abs() > 1e-9 {
        while hi - lo > tol {
            let mid = 0.5 * (lo + hi);
            if f(mid)? < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        x = 0.5 * (lo + hi);
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gk_polynomial_and_exp() {
        let v = integrate(|x| x * x * x, 0.0, 2.0, &[], 1e-13).unwrap();
        assert!((v - 4.0).abs() < 1e-13);
        let v = integrate(f64::exp, 0.0, 1.0, &[0.5], 1e-13).unwrap();
        assert!((v - (1f64.exp() - 1.0)).abs() < 1e-13);
    }

    #[test]
    fn simpson_cubic_exact() {
        let v = simpson(|x| x * x * x - x, -1.0, 3.0, 0.1);
        assert!((v - 16.0).abs() < 1e-12);
    }

    #[test]
    fn invert_cube() {
        let x = invert_increasing(|x| Ok(x * x * x), |x| Some(3.0 * x * x), 8.0, 0.0, 5.0, 1e-14).unwrap();
        assert!((x - 2.0).abs() < 1e-13);
    }
}
