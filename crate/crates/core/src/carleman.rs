//! Scalar quantities of the Carleman differential-inequality argument and a
//! report of the inequalities among them that can be checked numerically.
//!
//! With `K = 2 sqrt(lambda_1) / (A (1 - alpha))`:
//!
//! * `mu(r) = 2 sqrt(lambda_1) / (A r^alpha)`, so `int_0^x mu = K x^{1-alpha}`;
//! * `g(x) = int_0^x exp(K s^{1-alpha}) ds`;
//! * `H(x) = int_0^x exp(-K (x^{1-alpha} - s^{1-alpha})) ds`, so that
//!   `g(x) = exp(int_0^x mu) H(x)`.
//!
//! `g` overflows quickly and is carried as `log g`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::geometry::ParabolaRegion;
use crate::quad::adaptive_simpson;
use crate::special::lambda1_ball;

/// Exponents beyond this are treated as overflow.
pub const LOG_OVERFLOW: f64 = 700.0;

const IDENTITY_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CarlemanParams {
    pub lambda1: f64,
    pub a_coef: f64,
    pub alpha: f64,
    /// Multiplies `K` inside `g` and `H` only; 1 except in negative controls.
    pub k_scale: f64,
}

impl CarlemanParams {
    pub fn new(lambda1: f64, a_coef: f64, alpha: f64) -> Result<Self> {
        if !(lambda1 > 0.0) || !(a_coef > 0.0) || !(alpha > 0.0 && alpha < 1.0) {
            return Err(invalid(format!(
                "Carleman parameters need lambda1 > 0, A > 0, 0 < alpha < 1; got ({lambda1}, {a_coef}, {alpha})"
            )));
        }
        Ok(Self {
            lambda1,
            a_coef,
            alpha,
            k_scale: 1.0,
        })
    }

    /// Uses the first Dirichlet eigenvalue of the unit ball of `R^{n-1}`.
    pub fn from_region(region: &ParabolaRegion) -> Result<Self> {
        Self::new(lambda1_ball(region.dim() - 1)?, region.a_coef(), region.alpha())
    }

    pub fn perturbed(mut self, k_scale: f64) -> Self {
        self.k_scale = k_scale;
        self
    }

    /// Unperturbed `K`.
    pub fn k_const(&self) -> f64 {
        2.0 * self.lambda1.sqrt() / (self.a_coef * (1.0 - self.alpha))
    }

    fn k_eff(&self) -> f64 {
        self.k_const() * self.k_scale
    }

    /// `A / (4 sqrt(lambda_1))`.
    pub fn h_lower_bound(&self) -> f64 {
        self.a_coef / (4.0 * self.lambda1.sqrt())
    }
}

pub fn mu(params: &CarlemanParams, r: f64) -> Result<f64> {
    if !(r > 0.0) {
        return Err(invalid(format!("mu needs r > 0, got {r}")));
    }
    Ok(2.0 * params.lambda1.sqrt() / (params.a_coef * r.powf(params.alpha)))
}

/// `int_0^x mu(r) dr = K x^{1-alpha}` (unperturbed).
pub fn mu_integral(params: &CarlemanParams, x: f64) -> f64 {
    params.k_const() * x.powf(1.0 - params.alpha)
}

/// `log g(x)`, by quadrature of `exp(K s^{1-alpha} - K x^{1-alpha})` over `[0, x]`.
pub fn log_g(params: &CarlemanParams, x: f64) -> Result<f64> {
    if !(x > 0.0) {
        return Err(invalid(format!("log g needs x > 0, got {x}")));
    }
    let k = params.k_eff();
    let p = 1.0 - params.alpha;
    let shift = k * x.powf(p);
    let scaled = adaptive_simpson(|s| (k * s.powf(p) - shift).exp(), 0.0, x, 1e-14 * x)?;
    Ok(shift + scaled.ln())
}

pub fn g_fn(params: &CarlemanParams, x: f64) -> Result<f64> {
    if !(x >= 0.0) {
        return Err(invalid(format!("g needs x >= 0, got {x}")));
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    let lg = log_g(params, x)?;
    if lg > LOG_OVERFLOW {
        return Err(Error::Overflow(lg));
    }
    Ok(lg.exp())
}

/// `H(x)` after the substitution `r = s^{1-alpha}`:
/// `int_0^{x^{1-alpha}} r^{alpha/(1-alpha)} exp(K (r - x^{1-alpha})) dr / (1 - alpha)`.
#[allow(non_snake_case)]
pub fn H_fn(params: &CarlemanParams, x: f64) -> Result<f64> {
    if !(x > 0.0) {
        return Err(invalid(format!("H needs x > 0, got {x}")));
    }
    let k = params.k_eff();
    let p = 1.0 - params.alpha;
    let top = x.powf(p);
    let weight = params.alpha / p;
    let integral = adaptive_simpson(|r| r.powf(weight) * (k * (r - top)).exp(), 0.0, top, 1e-14 * x)?;
    Ok(integral / p)
}

/// `[(A (1 - alpha) / (2 sqrt(lambda_1))) ln 2 + 1]^{1/(1-alpha)}`.
pub fn x0(params: &CarlemanParams) -> f64 {
    let inner = params.a_coef * (1.0 - params.alpha) / (2.0 * params.lambda1.sqrt()) * std::f64::consts::LN_2 + 1.0;
    inner.powf(1.0 / (1.0 - params.alpha))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckId {
    /// `log g = int mu + log H`.
    LogGIdentity,
    /// `log g <= log x + int mu`.
    LogGUpper,
    /// `H <= x`.
    HUpper,
    /// `H >= A / (4 sqrt(lambda_1))` for `x >= x0`.
    HLower,
    /// `log g` increases between consecutive grid points.
    GIncreasing,
    /// Secant slopes of `g` increase across consecutive grid triples.
    GConvex,
}

impl fmt::Display for CheckId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            CheckId::LogGIdentity => "log_g_identity",
            CheckId::LogGUpper => "log_g_upper",
            CheckId::HUpper => "h_upper",
            CheckId::HLower => "h_lower",
            CheckId::GIncreasing => "g_increasing",
            CheckId::GConvex => "g_convex",
        };
        f.write_str(name)
    }
}

/// One inequality evaluation. `margin >= 0` exactly when the check passes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckRow {
    pub id: CheckId,
    pub x: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub margin: f64,
    pub pass: bool,
}

impl CheckRow {
    fn at_most(id: CheckId, x: f64, lhs: f64, rhs: f64) -> Self {
        let margin = rhs - lhs;
        Self { id, x, lhs, rhs, margin, pass: margin >= 0.0 }
    }

    pub fn csv_header() -> &'static str {
        "id,x,lhs,rhs,margin,pass"
    }

    pub fn to_csv(&self) -> String {
        format!("{},{},{},{},{},{}", self.id, self.x, self.lhs, self.rhs, self.margin, self.pass)
    }
}

/// Evaluates every check on `x_grid` (sorted ascending, positive).
pub fn carleman_report(params: &CarlemanParams, x_grid: &[f64]) -> Result<Vec<CheckRow>> {
    if x_grid.iter().any(|&x| !(x > 0.0)) {
        return Err(invalid("Carleman grid must be positive"));
    }
    let threshold = x0(params);
    let lower = params.h_lower_bound();
    let mut rows = Vec::new();
    let mut log_gs = Vec::with_capacity(x_grid.len());
    for &x in x_grid {
        let lg = log_g(params, x)?;
        let h = H_fn(params, x)?;
        let int_mu = mu_integral(params, x) * params.k_scale;
        let gap = (lg - (int_mu + h.ln())).abs();
        rows.push(CheckRow {
            id: CheckId::LogGIdentity,
            x,
            lhs: lg,
            rhs: int_mu + h.ln(),
            margin: IDENTITY_TOL - gap,
            pass: gap <= IDENTITY_TOL,
        });
        rows.push(CheckRow::at_most(CheckId::LogGUpper, x, lg, x.ln() + int_mu));
        rows.push(CheckRow::at_most(CheckId::HUpper, x, h, x));
        if x >= threshold {
            rows.push(CheckRow::at_most(CheckId::HLower, x, lower, h));
        }
        log_gs.push(lg);
    }
    for i in 1..x_grid.len() {
        rows.push(CheckRow::at_most(CheckId::GIncreasing, x_grid[i], log_gs[i - 1], log_gs[i]));
    }
    for i in 2..x_grid.len() {
        // Secant slopes scaled by exp(-log g_i) to stay finite.
        let scale = log_gs[i];
        let g = |j: usize| (log_gs[j] - scale).exp();
        let left = (g(i - 1) - g(i - 2)) / (x_grid[i - 1] - x_grid[i - 2]);
        let right = (g(i) - g(i - 1)) / (x_grid[i] - x_grid[i - 1]);
        rows.push(CheckRow::at_most(CheckId::GConvex, x_grid[i - 1], left, right));
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quad::trapezoid;
    use std::f64::consts::PI;

    fn planar() -> CarlemanParams {
        CarlemanParams::new(PI * PI / 4.0, 1.0, 0.5).unwrap()
    }

    #[test]
    fn mu_values() {
        let p = planar();
        assert!((mu(&p, 1.0).unwrap() - PI).abs() < 1e-15);
        assert!(mu(&p, 0.0).is_err());
        let mut prev = f64::INFINITY;
        for i in 0..50 {
            let r = 10f64.powf(i as f64 / 5.0);
            let m = mu(&p, r).unwrap();
            assert!(m < prev);
            prev = m;
        }
        assert!(prev < 1e-4);
    }

    #[test]
    fn mu_integral_by_quadrature() {
        for p in [planar(), CarlemanParams::new(5.0, 2.0, 0.25).unwrap()] {
            // r = w^2 removes the endpoint singularity for alpha <= 1/2.
            let q = adaptive_simpson(|w| if w == 0.0 { if p.alpha < 0.5 { 0.0 } else { 2.0 * 2.0 * p.lambda1.sqrt() / p.a_coef } } else { mu(&p, w * w).unwrap() * 2.0 * w }, 0.0, 2.0, 1e-13).unwrap();
            assert!((q - mu_integral(&p, 4.0)).abs() < 1e-10, "{q} vs {}", mu_integral(&p, 4.0));
        }
    }

    #[test]
    fn g_basic_shape() {
        let p = planar();
        assert_eq!(g_fn(&p, 0.0).unwrap(), 0.0);
        let xs: Vec<f64> = (1..=40).map(|i| 0.25 * i as f64).collect();
        let gs: Vec<f64> = xs.iter().map(|&x| g_fn(&p, x).unwrap()).collect();
        for w in gs.windows(2) {
            assert!(w[1] > w[0]);
        }
        for i in 1..gs.len() - 1 {
            assert!(gs[i + 1] - 2.0 * gs[i] + gs[i - 1] > 0.0);
        }
        for &x in &xs {
            assert!(log_g(&p, x).unwrap() <= x.ln() + mu_integral(&p, x));
        }
    }

    #[test]
    fn g_overflow_is_reported() {
        let p = planar();
        assert!(matches!(g_fn(&p, 2e4), Err(Error::Overflow(_))));
    }

    #[test]
    fn h_bounds_and_trapezoid_oracle() {
        let p = planar();
        let x = 10.0;
        let h = H_fn(&p, x).unwrap();
        assert!(h > 0.0 && h < x);
        let k = p.k_const();
        let oracle = trapezoid(|s| (-k * (x.sqrt() - s.sqrt())).exp(), 0.0, x, 1_000_000);
        assert!((h - oracle).abs() < 1e-8, "{h} vs {oracle}");
        let threshold = x0(&p);
        for i in 0..30 {
            let x = threshold * (1.0 + 0.3 * i as f64);
            assert!(H_fn(&p, x).unwrap() >= p.h_lower_bound());
            assert!(H_fn(&p, x).unwrap() <= x);
        }
    }

    #[test]
    fn x0_values() {
        let p = planar();
        let expected = (1.0 + std::f64::consts::LN_2 / (2.0 * PI)).powi(2);
        assert!((x0(&p) - expected).abs() < 1e-14);
        let via_logs = (2.0 * (std::f64::consts::LN_2 / (2.0 * PI)).ln_1p()).exp();
        assert!((x0(&p) - via_logs).abs() < 1e-13);
        assert!((x0(&p) - 1.232_806).abs() < 1e-6);

        let mut prev = f64::INFINITY;
        for i in 1..20 {
            let q = CarlemanParams::new(i as f64, 1.0, 0.5).unwrap();
            assert!(x0(&q) < prev);
            prev = x0(&q);
        }
        let q = CarlemanParams::new(2.0, 1.5, 1e-9).unwrap();
        let limit = 1.0 + 1.5 / (2.0 * 2f64.sqrt()) * std::f64::consts::LN_2;
        assert!((x0(&q) - limit).abs() < 1e-7);
    }

    #[test]
    fn identity_holds_on_grid() {
        for p in [planar(), CarlemanParams::new(PI * PI, 1.0, 0.5).unwrap(), CarlemanParams::new(5.783_185_962_946_785, 2.0, 0.25).unwrap()] {
            for i in 1..=20 {
                let x = 0.5 * i as f64;
                let lhs = log_g(&p, x).unwrap();
                let rhs = mu_integral(&p, x) + H_fn(&p, x).unwrap().ln();
                assert!((lhs - rhs).abs() < 1e-8, "x={x}: {lhs} vs {rhs}");
            }
        }
    }

    #[test]
    fn log_derivative_matches_mu_far_out() {
        let p = planar();
        for &x in &[20.0, 40.0] {
            let h = 1e-4 * x;
            let d = (log_g(&p, x + h).unwrap() - log_g(&p, x - h).unwrap()) / (2.0 * h);
            let ratio = d / mu(&p, x).unwrap();
            assert!((ratio - 1.0).abs() < 0.05, "x={x}: {ratio}");
        }
    }

    #[test]
    fn report_default_grid_passes() {
        let p = planar();
        let grid: Vec<f64> = (1..=20).map(|i| 0.5 * i as f64).collect();
        let rows = carleman_report(&p, &grid).unwrap();
        assert!(rows.iter().all(|r| r.pass), "{:?}", rows.iter().find(|r| !r.pass));
        assert!(rows.iter().any(|r| r.id == CheckId::HLower));
        assert!(carleman_report(&p, &[]).unwrap().is_empty());
    }

    #[test]
    fn negative_control_breaks_lower_bound() {
        let grid: Vec<f64> = (1..=20).map(|i| 0.5 * i as f64).collect();
        let mild = carleman_report(&planar().perturbed(1.1), &grid).unwrap();
        assert!(mild.iter().filter(|r| r.id == CheckId::HLower).all(|r| r.pass));
        let strong = carleman_report(&planar().perturbed(2.5), &grid).unwrap();
        assert!(strong.iter().any(|r| r.id == CheckId::HLower && !r.pass));
    }

    #[test]
    fn csv_rows() {
        let rows = carleman_report(&planar(), &[1.0, 2.0]).unwrap();
        assert_eq!(CheckRow::csv_header().split(',').count(), 6);
        assert!(rows[0].to_csv().starts_with("log_g_identity,1,"));
    }
}
