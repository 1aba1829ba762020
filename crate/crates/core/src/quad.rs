//! Adaptive Simpson quadrature.

use crate::error::{Error, Result};

const MAX_DEPTH: u32 = 60;

/// Integrates `f` over `[a, b]` to absolute tolerance `tol`.
pub fn adaptive_simpson<F>(f: F, a: f64, b: f64, tol: f64) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    if a == b {
        return Ok(0.0);
    }
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    let mut evals = 3usize;
    let value = refine(&f, a, b, fa, fm, fb, whole, tol, MAX_DEPTH, &mut evals);
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::NoConvergence {
            what: "adaptive Simpson quadrature",
            iterations: evals,
        })
    }
}

#[allow(clippy::too_many_arguments)]
fn refine<F>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
    evals: &mut usize,
) -> f64
where
    F: Fn(f64) -> f64,
{
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    *evals += 2;
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol || (m - a) <= f64::EPSILON * m.abs() {
        return left + right + delta / 15.0;
    }
    refine(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1, evals)
        + refine(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1, evals)
}

/// Composite trapezoid rule with `panels` equal panels.
pub fn trapezoid<F>(f: F, a: f64, b: f64, panels: usize) -> f64
where
    F: Fn(f64) -> f64,
{
    let h = (b - a) / panels as f64;
    let mut acc = crate::sum::CompensatedSum::new();
    acc.add(0.5 * (f(a) + f(b)));
    for i in 1..panels {
        acc.add(f(a + i as f64 * h));
    }
    acc.value() * h
}
