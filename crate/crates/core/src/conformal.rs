//! Harmonic measure in the strip `S = {|Im w| < pi/2}`, the boundary
//! correspondence `s(t)`, and the univalent map `h` of the planar region into
//! the unit disk.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{invalid, Error, Result};
use crate::quad::adaptive_simpson;

/// Abscissa marking `F_s`, the part of the strip boundary with `Re w > s`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StripMark {
    pub s: f64,
}

/// `omega(0, F_s; S) = arg(e^{2s} - 1 + 2i e^s) / pi`.
///
/// Dividing the argument by `e^s` gives `arg(2 sinh s + 2i)`, which stays
/// accurate for large `|s|`.
pub fn strip_hm(s: f64) -> f64 {
    1f64.atan2(s.sinh()) / PI
}

/// Leading term of the boundary correspondence,
/// `pi * int_1^t dx / (2 A x^alpha) = pi (t^{1-alpha} - 1) / (2 A (1 - alpha))`,
/// cross-checked against adaptive quadrature.
pub fn s_of_t(alpha: f64, a_coef: f64, t: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) || !(a_coef > 0.0) {
        return Err(invalid(format!("bad region parameters alpha={alpha}, A={a_coef}")));
    }
    if !(t >= 1.0) {
        return Err(invalid(format!("s(t) is anchored at t = 1; got t={t}")));
    }
    let closed = PI / (2.0 * a_coef * (1.0 - alpha)) * (t.powf(1.0 - alpha) - 1.0);
    let quadrature = adaptive_simpson(
        |x| PI / (2.0 * a_coef * x.powf(alpha)),
        1.0,
        t,
        1e-10,
    )?;
    if (closed - quadrature).abs() > 1e-8 * (1.0 + closed.abs()) {
        return Err(Error::QuadratureMismatch { closed, quadrature });
    }
    Ok(closed)
}

/// Slope `pi / (2 A (1 - alpha))` of `s(t)` against `t^{1 - alpha}`.
pub fn s_slope(alpha: f64, a_coef: f64) -> f64 {
    PI / (2.0 * a_coef * (1.0 - alpha))
}

fn map_scale(alpha: f64, a_coef: f64) -> f64 {
    a_coef.powf(-1.0 / (1.0 - alpha))
}

/// `h(z) = -exp[pi / (2 (1 - alpha)) (1 - (1 + B z)^{1 - alpha})]`,
/// `B = A^{-1/(1 - alpha)}`, principal branch.
pub fn h_map(alpha: f64, a_coef: f64, z: Complex64) -> Result<Complex64> {
    let b = map_scale(alpha, a_coef);
    let base = Complex64::new(1.0, 0.0) + z * b;
    if base.re <= 0.0 {
        return Err(invalid(format!("1 + Bz = {base} is off the principal branch domain")));
    }
    let exponent = (Complex64::new(1.0, 0.0) - base.powf(1.0 - alpha)) * (PI / (2.0 * (1.0 - alpha)));
    Ok(-exponent.exp())
}

/// `h'(z) = -(pi/2) B (1 + B z)^{-alpha} h(z)`.
pub fn h_derivative(alpha: f64, a_coef: f64, z: Complex64) -> Result<Complex64> {
    let b = map_scale(alpha, a_coef);
    let base = Complex64::new(1.0, 0.0) + z * b;
    Ok(-(PI / 2.0) * b * base.powf(-alpha) * h_map(alpha, a_coef, z)?)
}

/// Relative gap between a central finite difference of `h` and the closed-form
/// derivative at `z`.
pub fn h_deriv_check(alpha: f64, a_coef: f64, z: Complex64) -> Result<f64> {
    let step = 1e-6 * (1.0 + z.norm());
    let fd = (h_map(alpha, a_coef, z + step)? - h_map(alpha, a_coef, z - step)?) / (2.0 * step);
    let formula = h_derivative(alpha, a_coef, z)?;
    Ok((fd - formula).norm() / formula.norm())
}
