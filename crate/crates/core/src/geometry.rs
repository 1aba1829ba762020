//! Parabola-shaped regions `{(x, Y) : x > 0, |Y| < A x^alpha}` and the
//! geometric queries the samplers need.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

const COARSE_SAMPLES: usize = 12;

/// A point `(x, Y)` of `R x R^{n-1}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointND {
    pub first: f64,
    pub rest: Vec<f64>,
}

impl PointND {
    pub fn new(first: f64, rest: Vec<f64>) -> Self {
        Self { first, rest }
    }

    /// The point `(x, 0, ..., 0)` in `R^dim`.
    pub fn on_axis(first: f64, dim: usize) -> Self {
        Self {
            first,
            rest: vec![0.0; dim.saturating_sub(1)],
        }
    }

    pub fn dim(&self) -> usize {
        self.rest.len() + 1
    }

    /// `|Y|`.
    pub fn radial(&self) -> f64 {
        self.rest.iter().map(|y| y * y).sum::<f64>().sqrt()
    }

    pub fn norm(&self) -> f64 {
        (self.first * self.first + self.rest.iter().map(|y| y * y).sum::<f64>()).sqrt()
    }
}

/// Nearest point of the lateral boundary, described in the meridian half-plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryFoot {
    pub distance: f64,
    /// Boundary parameter: the foot is `(u, A u^alpha)` in `(x, |Y|)` coordinates.
    pub u: f64,
    /// `A u^alpha`.
    pub height: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParabolaRegion {
    alpha: f64,
    a_coef: f64,
    dim: usize,
}

impl ParabolaRegion {
    pub fn new(alpha: f64, a_coef: f64, dim: usize) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(invalid(format!("alpha must lie in (0, 1), got {alpha}")));
        }
        if !(a_coef > 0.0 && a_coef.is_finite()) {
            return Err(invalid(format!("aperture A must be positive, got {a_coef}")));
        }
        if dim < 2 {
            return Err(invalid(format!("dimension must be at least 2, got {dim}")));
        }
        Ok(Self { alpha, a_coef, dim })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn a_coef(&self) -> f64 {
        self.a_coef
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Boundary radius `A x^alpha` of the cross-section at `x >= 0`.
    #[inline]
    pub fn profile(&self, x: f64) -> f64 {
        self.a_coef * x.powf(self.alpha)
    }

    /// Full cross-sectional width `2 A x^alpha`.
    pub fn width(&self, x: f64) -> Result<f64> {
        if !(x >= 0.0) {
            return Err(invalid(format!("width needs x >= 0, got {x}")));
        }
        Ok(2.0 * self.profile(x))
    }

    /// Boundary points are outside.
    pub fn contains(&self, p: &PointND) -> bool {
        self.contains_xr(p.first, p.radial())
    }

    #[inline]
    pub fn contains_xr(&self, x: f64, r: f64) -> bool {
        x > 0.0 && r < self.profile(x)
    }

    /// Euclidean distance from an interior point to the boundary.
    pub fn lateral_distance(&self, p: &PointND) -> Result<f64> {
        if !self.contains(p) {
            return Err(Error::OutsideRegion);
        }
        Ok(self.nearest_boundary_xr(p.first, p.radial()).distance)
    }

    /// Nearest boundary point for a point with first coordinate `x` and radial
    /// coordinate `r >= 0`. The minimisation runs over the boundary parameter
    /// `u` of `(x - u)^2 + (r - A u^alpha)^2`: coarse sampling on the window
    /// `|u - x| <= gap`, then safeguarded Newton on the stationarity condition
    /// around the best sample. The vertex is always compared.
    pub fn nearest_boundary_xr(&self, x: f64, r: f64) -> BoundaryFoot {
        let x = x.max(0.0);
        let (a, alpha) = (self.a_coef, self.alpha);
        let objective = |u: f64| {
            let dx = x - u;
            let dr = r - self.profile(u);
            dx * dx + dr * dr
        };
        // The vertical foot is at distance `gap`, so the nearest foot has |u - x| <= gap.
        let gap = (self.profile(x) - r).abs();
        if gap == 0.0 {
            return BoundaryFoot {
                distance: 0.0,
                u: x,
                height: self.profile(x),
            };
        }
        let window_lo = (x - gap).max(0.0);
        let step = (x + gap - window_lo) / (COARSE_SAMPLES - 1) as f64;
        let mut best_i = 0;
        let mut best = objective(window_lo);
        for i in 1..COARSE_SAMPLES {
            let value = objective(window_lo + i as f64 * step);
            if value < best {
                best = value;
                best_i = i;
            }
        }
        let mut lo = window_lo + (best_i as f64 - 1.0).max(0.0) * step;
        let mut hi = window_lo + ((best_i + 1).min(COARSE_SAMPLES - 1)) as f64 * step;

        // Half the derivative of the objective, and its derivative.
        let slope = |u: f64| {
            let p = u.powf(alpha);
            (u - x) + alpha * a * (p / u) * (a * p - r)
        };
        let curvature = |u: f64| {
            let p = u.powf(alpha);
            1.0 + alpha * a * ((alpha - 1.0) * p / (u * u) * (a * p - r) + alpha * a * (p / u) * (p / u))
        };
        let tol = 1e-14 * (1.0 + x + gap);
        let mut u = if slope(lo.max(f64::MIN_POSITIVE)) >= 0.0 {
            lo
        } else if slope(hi) <= 0.0 {
            hi
        } else {
            let mut u = 0.5 * (lo + hi);
            for _ in 0..100 {
                let g = slope(u);
                if g < 0.0 {
                    lo = u;
                } else {
                    hi = u;
                }
                let c = curvature(u);
                let newton = u - g / c;
                let next = if c > 0.0 && newton > lo && newton < hi {
                    newton
                } else {
                    0.5 * (lo + hi)
                };
                let moved = (next - u).abs();
                u = next;
                if moved <= tol || hi - lo <= tol {
                    break;
                }
            }
            u
        };
        let mut value = objective(u);
        let coarse_u = window_lo + best_i as f64 * step;
        if best < value {
            u = coarse_u;
            value = best;
        }
        // The vertex is a legitimate competitor the window may have excluded.
        let vertex = objective(0.0);
        if vertex < value {
            u = 0.0;
            value = vertex;
        }
        BoundaryFoot {
            distance: value.sqrt(),
            u,
            height: self.profile(u),
        }
    }

    /// Cheap lower bound on the boundary distance of an interior point.
    ///
    /// With vertical gap `g = A x^alpha - r`, the nearest boundary point lies in
    /// `[x - g, x + g]` where the profile slope is at most `L`, so the distance
    /// is at least `g / sqrt(1 + L^2)`. Returns 0 when the window reaches the
    /// vertex.
    #[inline]
    pub fn distance_lower_bound_xr(&self, x: f64, r: f64) -> f64 {
        let gap = self.profile(x) - r;
        if gap <= 0.0 {
            return 0.0;
        }
        let left = x - gap;
        if left <= 0.0 {
            return 0.0;
        }
        let slope = self.alpha * self.a_coef * left.powf(self.alpha - 1.0);
        gap / (1.0 + slope * slope).sqrt()
    }

    /// The abscissa `x(t) > 0` where the sphere `|z| = t` meets the lateral
    /// boundary, i.e. the root of `x^2 + A^2 x^(2 alpha) = t^2`.
    pub fn crosscut_x(&self, t: f64) -> Result<f64> {
        if !(t > 0.0 && t.is_finite()) {
            return Err(invalid(format!("crosscut radius must be positive, got {t}")));
        }
        let a2 = self.a_coef * self.a_coef;
        let residual = |x: f64| x * x + a2 * x.powf(2.0 * self.alpha) - t * t;
        let (mut lo, mut hi) = (0.0_f64, t);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if residual(mid) > 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
            if hi - lo <= 1e-12 * hi {
                return Ok(0.5 * (lo + hi));
            }
        }
        Err(Error::NoConvergence {
            what: "crosscut bisection",
            iterations: 200,
        })
    }
}
