//! Bessel functions of the first kind for real order `m >= -1/2`, their first
//! positive zeros, Dirichlet ball eigenvalues and the closed-form tail rates.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::geometry::ParabolaRegion;

/// Above this argument the ascending series loses too many digits to
/// cancellation and Miller's backward recurrence takes over.
const SERIES_LIMIT: f64 = 12.0;

/// Order of a Bessel function; finite and at least `-1/2`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct BesselOrder(f64);

impl BesselOrder {
    pub fn new(m: f64) -> Result<Self> {
        if !m.is_finite() || m < -0.5 {
            return Err(invalid(format!("Bessel order must be finite and >= -1/2, got {m}")));
        }
        Ok(Self(m))
    }

    /// `m = (n + delta - 3) / 2`, the order attached to dimension `n` shifted by `delta`.
    pub fn for_dimension(n: usize, delta: f64) -> Result<Self> {
        Self::new(0.5 * (n as f64 + delta - 3.0))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// Gamma function (Lanczos, g = 7, nine terms) with reflection below 1/2.
pub fn gamma(x: f64) -> f64 {
    if x < 0.5 {
        return PI / ((PI * x).sin() * gamma(1.0 - x));
    }
    let x = x - 1.0;
    let mut acc = LANCZOS[0];
    for (i, c) in LANCZOS.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    let t = x + LANCZOS_G + 0.5;
    (2.0 * PI).sqrt() * t.powf(x + 0.5) * (-t).exp() * acc
}

/// Ascending series for `v^{-m} J_m(v)`.
fn hat_series(m: f64, v: f64) -> f64 {
    let q = -0.25 * v * v;
    let mut term = 1.0 / (2f64.powf(m) * gamma(m + 1.0));
    let mut sum = term;
    let mut k = 1.0;
    loop {
        term *= q / (k * (k + m));
        sum += term;
        if term.abs() <= 1e-17 * sum.abs().max(1e-300) || k > 500.0 {
            break;
        }
        k += 1.0;
    }
    sum
}

/// Miller's backward recurrence for `J_m(v)`, normalised with
/// `(v/2)^nu = sum_k (nu + 2k) Gamma(nu + k) / k! J_{nu+2k}(v)` at `nu = m + 1`.
fn miller(m: f64, v: f64) -> f64 {
    let n_top = v.ceil() as usize + 60;
    let mut f = vec![0.0_f64; n_top + 2];
    f[n_top] = 1e-200;
    for k in (1..=n_top).rev() {
        let nu = m + k as f64;
        f[k - 1] = 2.0 * nu / v * f[k] - f[k + 1];
        if f[k - 1].abs() > 1e200 {
            for value in f.iter_mut().skip(k - 1) {
                *value *= 1e-200;
            }
        }
    }
    let nu = m + 1.0;
    let mut coef = gamma(nu);
    let mut norm = 0.0;
    let mut k = 0usize;
    while 1 + 2 * k <= n_top {
        norm += (nu + 2.0 * k as f64) * coef * f[1 + 2 * k];
        k += 1;
        coef *= (nu + k as f64 - 1.0) / k as f64;
    }
    f[0] * (0.5 * v).powf(nu) / norm
}

/// `J_m(v)` for `v >= 0`.
pub fn bessel_j(m: BesselOrder, v: f64) -> Result<f64> {
    if !(v >= 0.0) {
        return Err(invalid(format!("Bessel argument must be >= 0, got {v}")));
    }
    let m = m.value();
    if v == 0.0 {
        return Ok(if m == 0.0 {
            1.0
        } else if m > 0.0 {
            0.0
        } else {
            f64::INFINITY
        });
    }
    if v <= SERIES_LIMIT {
        Ok(v.powf(m) * hat_series(m, v))
    } else {
        Ok(miller(m, v))
    }
}

/// `v^{-m} J_m(v)`, continuous at the origin with value `1 / (2^m Gamma(m + 1))`.
pub fn bessel_hat_j(m: BesselOrder, v: f64) -> Result<f64> {
    if !(v >= 0.0) {
        return Err(invalid(format!("Bessel argument must be >= 0, got {v}")));
    }
    if v <= SERIES_LIMIT {
        Ok(hat_series(m.value(), v))
    } else {
        Ok(miller(m.value(), v) / v.powf(m.value()))
    }
}

/// Smallest positive zero `j_m` of `J_m`.
pub fn first_zero(m: BesselOrder) -> Result<f64> {
    let upper = 2.0 * m.value() + 6.0;
    let scan_step = 0.05;
    let mut lo = 0.0;
    let mut hi = None;
    let mut v = scan_step;
    while v <= upper + 1e-12 {
        if bessel_hat_j(m, v)? < 0.0 {
            hi = Some(v);
            break;
        }
        lo = v;
        v += scan_step;
    }
    let mut hi = hi.ok_or(Error::BracketFailure("first Bessel zero"))?;
    while hi - lo > 1e-14 * hi {
        let mid = 0.5 * (lo + hi);
        if bessel_hat_j(m, mid)? > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// First Dirichlet eigenvalue of the Laplacian in the unit ball of `R^d`,
/// `j_{(d-2)/2}^2`.
pub fn lambda1_ball(d: usize) -> Result<f64> {
    if d == 0 {
        return Err(invalid("ball dimension must be at least 1"));
    }
    let j = first_zero(BesselOrder::new(0.5 * (d as f64 - 2.0))?)?;
    Ok(j * j)
}

/// Exponential rate `sqrt(lambda_1) / (A (1 - alpha))` of the exit-position tail
/// against `t^{1 - alpha}`.
pub fn rate_position(region: &ParabolaRegion) -> Result<f64> {
    let lambda1 = lambda1_ball(region.dim() - 1)?;
    Ok(lambda1.sqrt() / (region.a_coef() * (1.0 - region.alpha())))
}

/// Critical exponent `(1 - alpha) / (1 + alpha)` of the exit-time tail.
pub fn exponent_time(alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(invalid(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    Ok((1.0 - alpha) / (1.0 + alpha))
}

/// Exponent paired with [`lifshits_shi_constant_2d_half`]: the constant is the
/// rate against `t^{1/3}`, not against `t^{1 - alpha}`.
pub const LIFSHITS_SHI_EXPONENT: f64 = 1.0 / 3.0;

/// Exit-time rate `3 pi^2 / 8` for the planar parabola `n = 2, alpha = 1/2, A = 1`.
pub fn lifshits_shi_constant_2d_half() -> f64 {
    3.0 * PI * PI / 8.0
}
