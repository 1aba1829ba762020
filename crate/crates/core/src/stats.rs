//! Fitting `log p = a - b t^q` to survival tables, and the theoretical
//! `(q, b)` pairs the fits are compared against.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{invalid, Error, Result};
use crate::geometry::ParabolaRegion;
use crate::special::{exponent_time, lifshits_shi_constant_2d_half, rate_position, LIFSHITS_SHI_EXPONENT};

/// Points whose relative standard error exceeds this are dropped from fits.
pub const MAX_RELATIVE_SE: f64 = 0.3;

/// A fitted stretched-exponential rate `b` in `log p = a - b t^q`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub rate_hat: f64,
    pub intercept_hat: f64,
    pub exponent_q: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub n_points: usize,
    /// Root mean square of the unweighted residuals of `log p`.
    pub residual_rms: f64,
}

impl RateFit {
    /// Slope of `log p` against `t^q`, i.e. `-rate_hat`.
    pub fn slope(&self) -> f64 {
        -self.rate_hat
    }

    pub fn ci_covers(&self, value: f64) -> bool {
        self.ci_lo <= value && value <= self.ci_hi
    }
}

/// One row of a survival table: threshold, estimate and its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailPoint {
    pub t: f64,
    pub p_hat: f64,
    pub std_err: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub n_bootstrap: usize,
    pub seed: u64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            n_bootstrap: 2000,
            seed: 0x5eed_f17,
        }
    }
}

struct Line {
    intercept: f64,
    slope: f64,
}

fn weighted_line(xs: &[f64], ys: &[f64], ws: &[f64]) -> Result<Line> {
    let sw: f64 = ws.iter().sum();
    let mx = xs.iter().zip(ws).map(|(x, w)| w * x).sum::<f64>() / sw;
    let my = ys.iter().zip(ws).map(|(y, w)| w * y).sum::<f64>() / sw;
    let sxx: f64 = xs.iter().zip(ws).map(|(x, w)| w * (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(ys).zip(ws).map(|((x, y), w)| w * (x - mx) * (y - my)).sum();
    let spread = xs.iter().fold(0.0_f64, |acc, x| acc.max((x - mx).abs()));
    if !(sxx > 0.0) || spread <= 1e-12 * (1.0 + mx.abs()) {
        return Err(Error::DegenerateDesign("all abscissae coincide".into()));
    }
    let slope = sxy / sxx;
    Ok(Line {
        intercept: my - slope * mx,
        slope,
    })
}

fn rms_residual(xs: &[f64], ys: &[f64], line: &Line) -> f64 {
    let ss: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| {
            let r = y - (line.intercept + line.slope * x);
            r * r
        })
        .sum();
    (ss / xs.len() as f64).sqrt()
}

/// Weighted least squares of `log p_hat` on `t^q` with delta-method weights
/// `(p_hat / std_err)^2`, plus a parametric bootstrap 95% interval.
pub fn fit_rate(points: &[TailPoint], q: f64) -> Result<RateFit> {
    fit_rate_with(points, q, FitOptions::default())
}

pub fn fit_rate_with(points: &[TailPoint], q: f64, options: FitOptions) -> Result<RateFit> {
    if !(q > 0.0) {
        return Err(invalid(format!("exponent q must be positive, got {q}")));
    }
    if points.iter().all(|p| p.p_hat <= 0.0) {
        return Err(invalid("every tail estimate is zero"));
    }
    let usable: Vec<&TailPoint> = points
        .iter()
        .filter(|p| p.p_hat > 0.0 && p.std_err >= 0.0 && p.std_err / p.p_hat <= MAX_RELATIVE_SE)
        .collect();
    if usable.len() < 3 {
        return Err(invalid(format!(
            "need at least 3 usable points, have {} of {}",
            usable.len(),
            points.len()
        )));
    }
    let xs: Vec<f64> = usable.iter().map(|p| p.t.powf(q)).collect();
    let ys: Vec<f64> = usable.iter().map(|p| p.p_hat.ln()).collect();
    let sigmas: Vec<f64> = usable.iter().map(|p| p.std_err / p.p_hat).collect();
    let ws: Vec<f64> = if sigmas.iter().all(|&s| s > 0.0) {
        sigmas.iter().map(|s| 1.0 / (s * s)).collect()
    } else {
        vec![1.0; sigmas.len()]
    };
    let line = weighted_line(&xs, &ys, &ws)?;
    let residual_rms = rms_residual(&xs, &ys, &line);

    let rate_hat = -line.slope;
    let (mut ci_lo, mut ci_hi) = (rate_hat, rate_hat);
    if options.n_bootstrap > 0 && sigmas.iter().any(|&s| s > 0.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
        let mut rates = Vec::with_capacity(options.n_bootstrap);
        let mut resampled = vec![0.0; ys.len()];
        for _ in 0..options.n_bootstrap {
            for (i, y) in resampled.iter_mut().enumerate() {
                let z: f64 = StandardNormal.sample(&mut rng);
                *y = line.intercept + line.slope * xs[i] + sigmas[i] * z;
            }
            rates.push(-weighted_line(&xs, &resampled, &ws)?.slope);
        }
        rates.sort_by(f64::total_cmp);
        ci_lo = quantile_sorted(&rates, 0.025).min(rate_hat);
        ci_hi = quantile_sorted(&rates, 0.975).max(rate_hat);
    }
    Ok(RateFit {
        rate_hat,
        intercept_hat: line.intercept,
        exponent_q: q,
        ci_lo,
        ci_hi,
        n_points: xs.len(),
        residual_rms,
    })
}

fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] * (1.0 - frac) + sorted[hi] * frac
}

/// Ordinary least squares of `ys` on `xs` with a Student-t 95% interval for
/// the slope, reported as a rate with `exponent_q = 1`.
pub fn ols_rate(xs: &[f64], ys: &[f64]) -> Result<RateFit> {
    if xs.len() != ys.len() || xs.len() < 3 {
        return Err(Error::DegenerateDesign(format!(
            "need at least 3 paired points, have {} and {}",
            xs.len(),
            ys.len()
        )));
    }
    let ws = vec![1.0; xs.len()];
    let line = weighted_line(xs, ys, &ws)?;
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let rms = rms_residual(xs, ys, &line);
    let sigma2 = rms * rms * n / (n - 2.0);
    let se = (sigma2 / sxx).sqrt();
    let t = StudentsT::new(0.0, 1.0, n - 2.0)
        .map_err(|e| Error::DegenerateDesign(e.to_string()))?
        .inverse_cdf(0.975);
    let rate_hat = -line.slope;
    Ok(RateFit {
        rate_hat,
        intercept_hat: line.intercept,
        exponent_q: 1.0,
        ci_lo: rate_hat - t * se,
        ci_hi: rate_hat + t * se,
        n_points: xs.len(),
        residual_rms: rms,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TailQuantity {
    /// `P{|B_tau| > t}`.
    ExitPosition,
    /// `P{tau > t}`.
    ExitTime,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub quantity: TailQuantity,
    pub exponent_q: f64,
    /// `None` where only the exponent is known.
    pub rate: Option<f64>,
    /// Power of `t` in the polynomial prefactor of the upper bound; metadata only.
    pub prefactor_power: Option<f64>,
}

/// Theoretical `(q, rate)` pairs for a region.
pub fn predict_table(region: &ParabolaRegion) -> Result<Vec<Prediction>> {
    let alpha = region.alpha();
    let mut rows = vec![Prediction {
        quantity: TailQuantity::ExitPosition,
        exponent_q: 1.0 - alpha,
        rate: Some(rate_position(region)?),
        prefactor_power: Some(alpha * (region.dim() as f64 - 1.0) / 2.0),
    }];
    let planar_half = region.dim() == 2 && alpha == 0.5 && region.a_coef() == 1.0;
    rows.push(Prediction {
        quantity: TailQuantity::ExitTime,
        exponent_q: if planar_half { LIFSHITS_SHI_EXPONENT } else { exponent_time(alpha)? },
        rate: planar_half.then(lifshits_shi_constant_2d_half),
        prefactor_power: None,
    });
    Ok(rows)
}
