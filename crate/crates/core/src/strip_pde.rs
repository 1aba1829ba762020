//! Finite differences for the perturbed Bessel operator
//! `L[f] = f_uu + f_vv + (n - 2 + eps(u, v)) f_v / v`
//! on rectangles `[u_left, s] x [0, pi/2]` of the half-strip, the explicit
//! sub-solutions built from `v^{-m} J_m`, and decay-rate extraction.
//!
//! Boundary conditions: `f_v = 0` on the axis `v = 0` (even reflection),
//! Dirichlet data on the other three sides. On the axis `f_v / v -> f_vv`, so
//! the operator there is `f_uu + (n - 1 + eps) f_vv`.
//!
//! The `v` part is discretised in finite-volume form,
//! `[v_{j+1/2}^c (f_{j+1} - f_j) - v_{j-1/2}^c (f_j - f_{j-1})] / (V_j h_v)`
//! with cell measure `V_j = (v_{j+1/2}^{c+1} - v_{j-1/2}^{c+1}) / (c + 1)`.
//! It is exact on even quadratics at every row, including the first one off
//! the axis, and keeps every off-diagonal weight positive, so the discrete
//! maximum principle holds for all `n`.

use std::f64::consts::FRAC_PI_2;
use std::io::{self, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::special::{bessel_hat_j, first_zero, BesselOrder};
use crate::stats::{ols_rate, RateFit};

/// Normalised residual at which SOR stops.
pub const SOLVER_TOL: f64 = 1e-10;
const MAX_SWEEPS: usize = 200_000;
const FALLBACK_OMEGA: f64 = 1.9;

/// The perturbation `eps(u, v)`; evaluations are clamped to `[-sup, sup]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EpsModel {
    Zero,
    Constant { value: f64 },
    /// `amplitude * exp(-rate (u - origin))`, for `u >= origin`.
    Decaying { amplitude: f64, rate: f64, origin: f64 },
    /// `amplitude * cos(frequency u) * cos(v)`.
    Oscillating { amplitude: f64, frequency: f64 },
}

impl EpsModel {
    pub fn sup_bound(&self) -> f64 {
        match *self {
            EpsModel::Zero => 0.0,
            EpsModel::Constant { value } => value.abs(),
            EpsModel::Decaying { amplitude, .. } => amplitude.abs(),
            EpsModel::Oscillating { amplitude, .. } => amplitude.abs(),
        }
    }

    pub fn eval(&self, u: f64, v: f64) -> f64 {
        let raw = match *self {
            EpsModel::Zero => 0.0,
            EpsModel::Constant { value } => value,
            EpsModel::Decaying { amplitude, rate, origin } => amplitude * (-rate * (u - origin).max(0.0)).exp(),
            EpsModel::Oscillating { amplitude, frequency } => amplitude * (frequency * u).cos() * v.cos(),
        };
        let bound = self.sup_bound();
        raw.clamp(-bound, bound)
    }
}

/// A rectangle `[u_left, s_cut] x [0, pi/2]` with `nu x nv` cells.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StripProblem {
    pub dim_n: usize,
    pub s_cut: f64,
    pub u_left: f64,
    pub nu: usize,
    pub nv: usize,
    pub eps: EpsModel,
    pub right_value: f64,
    pub left_value: f64,
    pub top_value: f64,
}

impl StripProblem {
    /// Dirichlet data 1/2 on the right edge and 0 on the left and top edges.
    pub fn new(dim_n: usize, s_cut: f64, u_left: f64, nu: usize, nv: usize) -> Result<Self> {
        let problem = Self {
            dim_n,
            s_cut,
            u_left,
            nu,
            nv,
            eps: EpsModel::Zero,
            right_value: 0.5,
            left_value: 0.0,
            top_value: 0.0,
        };
        problem.validate()?;
        Ok(problem)
    }

    pub fn with_eps(mut self, eps: EpsModel) -> Self {
        self.eps = eps;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.dim_n < 2 {
            return Err(invalid(format!("dimension must be >= 2, got {}", self.dim_n)));
        }
        if !(self.u_left < self.s_cut) {
            return Err(invalid(format!("need u_left < s_cut, got {} and {}", self.u_left, self.s_cut)));
        }
        if self.nv < 32 || self.nu < 2 {
            return Err(invalid(format!("grid too coarse: nu={}, nv={} (nv >= 32)", self.nu, self.nv)));
        }
        if self.dim_n as f64 - 2.0 - self.eps.sup_bound() < 0.0 {
            return Err(invalid("eps bound makes the first-order coefficient negative"));
        }
        Ok(())
    }

    pub fn hu(&self) -> f64 {
        (self.s_cut - self.u_left) / self.nu as f64
    }

    pub fn hv(&self) -> f64 {
        FRAC_PI_2 / self.nv as f64
    }

    pub fn u(&self, i: usize) -> f64 {
        self.u_left + i as f64 * self.hu()
    }

    pub fn v(&self, j: usize) -> f64 {
        j as f64 * self.hv()
    }

    fn index(&self, i: usize, j: usize) -> usize {
        i * (self.nv + 1) + j
    }

    fn data_scale(&self) -> f64 {
        let m = self.right_value.abs().max(self.left_value.abs()).max(self.top_value.abs());
        if m > 0.0 {
            m
        } else {
            1.0
        }
    }

    /// Natural size of `L_h` applied to grid functions bounded by the data:
    /// data magnitude times the largest diagonal stencil weight.
    pub fn residual_scale(&self) -> f64 {
        let hu = self.hu();
        let hv = self.hv();
        let c_max = self.dim_n as f64 - 1.0 + self.eps.sup_bound();
        self.data_scale() * (2.0 / (hu * hu) + 2.0 * c_max / (hv * hv))
    }
}

/// Five-point weights of `L_h` at one node: `L_h f = sum(w_nb f_nb) - diag f`.
#[derive(Debug, Clone, Copy)]
struct Stencil {
    west: f64,
    east: f64,
    south: f64,
    north: f64,
    diag: f64,
}

fn stencil(problem: &StripProblem, i: usize, j: usize) -> Stencil {
    let hu2 = problem.hu() * problem.hu();
    let hv2 = problem.hv() * problem.hv();
    let c = problem.dim_n as f64 - 2.0 + problem.eps.eval(problem.u(i), problem.v(j));
    let (south, north) = if j == 0 {
        (0.0, 2.0 * (1.0 + c) / hv2)
    } else {
        let (below, above) = (j as f64 - 0.5, j as f64 + 0.5);
        let cell = (above.powf(c + 1.0) - below.powf(c + 1.0)) / (c + 1.0);
        (below.powf(c) / (cell * hv2), above.powf(c) / (cell * hv2))
    };
    let west = 1.0 / hu2;
    let east = 1.0 / hu2;
    Stencil {
        west,
        east,
        south,
        north,
        diag: west + east + south + north,
    }
}

/// Grid values on `[u_left, s_cut] x [0, pi/2]`, row-major in `u`.
#[derive(Debug, Clone, PartialEq)]
pub struct StripField {
    pub problem: StripProblem,
    pub values: Vec<f64>,
    pub sweeps: usize,
}

impl StripField {
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[self.problem.index(i, j)]
    }

    /// Bilinear interpolation.
    pub fn value_at(&self, u: f64, v: f64) -> Result<f64> {
        let p = &self.problem;
        if u < p.u_left || u > p.s_cut || !(0.0..=FRAC_PI_2).contains(&v) {
            return Err(invalid(format!("({u}, {v}) is outside the rectangle")));
        }
        let fu = ((u - p.u_left) / p.hu()).min(p.nu as f64);
        let fv = (v / p.hv()).min(p.nv as f64);
        let i = (fu.floor() as usize).min(p.nu - 1);
        let j = (fv.floor() as usize).min(p.nv - 1);
        let (a, b) = (fu - i as f64, fv - j as f64);
        Ok((1.0 - a) * (1.0 - b) * self.at(i, j)
            + a * (1.0 - b) * self.at(i + 1, j)
            + (1.0 - a) * b * self.at(i, j + 1)
            + a * b * self.at(i + 1, j + 1))
    }

    /// `k(0, 0)`, the value at the strip point corresponding to the start.
    pub fn origin_value(&self) -> Result<f64> {
        self.value_at(0.0, 0.0)
    }

    fn interior(&self) -> impl Iterator<Item = f64> + '_ {
        let p = self.problem;
        (1..p.nu).flat_map(move |i| (0..p.nv).map(move |j| self.at(i, j)))
    }

    pub fn interior_min(&self) -> f64 {
        self.interior().fold(f64::INFINITY, f64::min)
    }

    pub fn interior_max(&self) -> f64 {
        self.interior().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn interior_max_abs(&self) -> f64 {
        self.interior().fold(0.0, |acc, x| acc.max(x.abs()))
    }

    /// Writes `u,v,k` rows.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "u,v,k")?;
        let p = &self.problem;
        for i in 0..=p.nu {
            for j in 0..=p.nv {
                writeln!(out, "{},{},{}", p.u(i), p.v(j), self.at(i, j))?;
            }
        }
        Ok(())
    }
}

fn boundary_grid(problem: &StripProblem) -> Vec<f64> {
    let mut values = vec![0.0; (problem.nu + 1) * (problem.nv + 1)];
    for i in 0..=problem.nu {
        values[problem.index(i, problem.nv)] = problem.top_value;
    }
    for j in 0..problem.nv {
        values[problem.index(0, j)] = problem.left_value;
        values[problem.index(problem.nu, j)] = problem.right_value;
    }
    values
}

/// Jacobi spectral radius estimated from the lowest mode of the continuous
/// operator: `(2 j_m / pi)^2` across the strip, `(pi / length)^2` along it.
fn sor_factor(problem: &StripProblem) -> f64 {
    let estimate = || -> Result<f64> {
        let m = BesselOrder::for_dimension(problem.dim_n, 0.0)?;
        let jm = first_zero(m)?;
        let length = problem.s_cut - problem.u_left;
        let lowest = (2.0 * jm / std::f64::consts::PI).powi(2) + (std::f64::consts::PI / length).powi(2);
        let diag = 2.0 / problem.hu().powi(2) + 2.0 / problem.hv().powi(2);
        let rho = 1.0 - lowest / diag;
        let omega = 2.0 / (1.0 + (1.0 - rho * rho).sqrt());
        Ok(omega)
    };
    match estimate() {
        Ok(omega) if omega > 1.0 && omega < 2.0 => omega,
        _ => FALLBACK_OMEGA,
    }
}

/// Solves `L_h k = 0` by successive over-relaxation until the largest
/// normalised residual `|L_h k| / diag` drops below `SOLVER_TOL` times the
/// data magnitude.
pub fn solve(problem: &StripProblem) -> Result<StripField> {
    problem.validate()?;
    let p = *problem;
    let stencils: Vec<Stencil> = (1..p.nu)
        .flat_map(|i| (0..p.nv).map(move |j| (i, j)))
        .map(|(i, j)| stencil(&p, i, j))
        .collect();
    let mut values = boundary_grid(&p);
    let omega = sor_factor(&p);
    let tol = SOLVER_TOL * p.data_scale();
    let stride = p.nv + 1;
    for sweep in 1..=MAX_SWEEPS {
        let mut worst = 0.0_f64;
        let mut s = 0;
        for i in 1..p.nu {
            let row = i * stride;
            for j in 0..p.nv {
                let st = &stencils[s];
                s += 1;
                let idx = row + j;
                let south = if j == 0 { 0.0 } else { st.south * values[idx - 1] };
                let sum = st.west * values[idx - stride] + st.east * values[idx + stride] + south + st.north * values[idx + 1];
                let correction = sum / st.diag - values[idx];
                worst = worst.max(correction.abs());
                values[idx] += omega * correction;
            }
        }
        if worst < tol {
            return Ok(StripField {
                problem: p,
                values,
                sweeps: sweep,
            });
        }
    }
    Err(Error::NoConvergence {
        what: "SOR strip solve",
        iterations: MAX_SWEEPS,
    })
}

/// `L_h` applied to grid values; zero on Dirichlet nodes.
pub fn residual_grid(problem: &StripProblem, values: &[f64]) -> Result<StripField> {
    problem.validate()?;
    let p = *problem;
    if values.len() != (p.nu + 1) * (p.nv + 1) {
        return Err(invalid("grid size does not match the problem"));
    }
    let stride = p.nv + 1;
    let mut out = vec![0.0; values.len()];
    for i in 1..p.nu {
        for j in 0..p.nv {
            let st = stencil(&p, i, j);
            let idx = p.index(i, j);
            let south = if j == 0 { 0.0 } else { st.south * values[idx - 1] };
            out[idx] = st.west * values[idx - stride] + st.east * values[idx + stride] + south + st.north * values[idx + 1]
                - st.diag * values[idx];
        }
    }
    Ok(StripField {
        problem: p,
        values: out,
        sweeps: 0,
    })
}

/// `L_h` applied to a function sampled on the grid.
pub fn residual_of<F>(problem: &StripProblem, f: F) -> Result<StripField>
where
    F: Fn(f64, f64) -> f64,
{
    let p = *problem;
    let mut values = vec![0.0; (p.nu + 1) * (p.nv + 1)];
    for i in 0..=p.nu {
        for j in 0..=p.nv {
            values[p.index(i, j)] = f(p.u(i), p.v(j));
        }
    }
    residual_grid(problem, &values)
}

/// Bessel data shared by `phi_delta` and `k_delta`.
#[derive(Debug, Clone, Copy)]
pub struct BesselMode {
    pub order: BesselOrder,
    pub zero: f64,
}

impl BesselMode {
    pub fn new(n: usize, delta: f64) -> Result<Self> {
        let order = BesselOrder::for_dimension(n, delta)?;
        Ok(Self {
            order,
            zero: first_zero(order)?,
        })
    }

    /// `2 j_m / pi`.
    pub fn rate(&self) -> f64 {
        2.0 * self.zero / std::f64::consts::PI
    }

    fn profile(&self, v: f64) -> Result<f64> {
        bessel_hat_j(self.order, (self.rate() * v).min(self.zero))
    }
}

/// `exp(2 j_m (u - s) / pi) * Jhat_m(2 j_m v / pi)` with `m = (n + delta - 3) / 2`.
pub fn phi_delta(u: f64, v: f64, n: usize, delta: f64, s: f64) -> Result<f64> {
    if !(0.0..=FRAC_PI_2).contains(&v) {
        return Err(invalid(format!("v must lie in [0, pi/2], got {v}")));
    }
    let mode = BesselMode::new(n, delta)?;
    phi_with(&mode, u, v, s)
}

fn phi_with(mode: &BesselMode, u: f64, v: f64, s: f64) -> Result<f64> {
    Ok((mode.rate() * (u - s)).exp() * mode.profile(v)?)
}

fn k_delta_with(mode: &BesselMode, u: f64, v: f64, s: f64, u_left: f64) -> Result<f64> {
    let c = mode.rate();
    let envelope = (c * (u - s)).exp() - (c * ((u_left - s) - (u - u_left))).exp();
    Ok(envelope * mode.profile(v)?)
}

/// Comparison function vanishing on `u = u_left` and `v = pi/2`:
/// `[e^{c (u - s)} - e^{c ((u_left - s) - (u - u_left))}] Jhat_m(c v)`, `c = 2 j_m / pi`.
pub fn k_delta(u: f64, v: f64, n: usize, delta: f64, s: f64, u_left: f64) -> Result<f64> {
    if u < u_left || u > s {
        return Err(invalid(format!("u must lie in [{u_left}, {s}], got {u}")));
    }
    if !(0.0..=FRAC_PI_2).contains(&v) {
        return Err(invalid(format!("v must lie in [0, pi/2], got {v}")));
    }
    k_delta_with(&BesselMode::new(n, delta)?, u, v, s, u_left)
}

/// Samples `k_delta` on the problem grid.
pub fn k_delta_grid(problem: &StripProblem, delta: f64) -> Result<Vec<f64>> {
    let mode = BesselMode::new(problem.dim_n, delta)?;
    let p = problem;
    let mut values = vec![0.0; (p.nu + 1) * (p.nv + 1)];
    for i in 0..=p.nu {
        for j in 0..=p.nv {
            values[p.index(i, j)] = k_delta_with(&mode, p.u(i), p.v(j), p.s_cut, p.u_left)?;
        }
    }
    Ok(values)
}

/// Largest `b1` with `b1 * k_delta <= right_value` on the right edge.
pub fn comparison_constant(problem: &StripProblem, delta: f64) -> Result<f64> {
    let mode = BesselMode::new(problem.dim_n, delta)?;
    let edge = k_delta_with(&mode, problem.s_cut, 0.0, problem.s_cut, problem.u_left)?;
    Ok(problem.right_value / edge)
}

/// Least-squares slope of `log k(0)` against `s`.
pub fn decay_fit(s_values: &[f64], k0_values: &[f64]) -> Result<RateFit> {
    if s_values.len() != k0_values.len() || s_values.len() < 3 {
        return Err(Error::DegenerateDesign("decay fit needs at least 3 paired points".into()));
    }
    if k0_values.iter().any(|&k| !(k > 0.0)) {
        return Err(invalid("decay fit needs positive k(0) values"));
    }
    let logs: Vec<f64> = k0_values.iter().map(|k| k.ln()).collect();
    ols_rate(s_values, &logs)
}

/// Geometry of an `s`-sweep: each problem spans `[s - length, s]` with square
/// cells of side `(pi/2) / nv`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub dim_n: usize,
    pub length: f64,
    pub nv: usize,
    pub eps: EpsModel,
}

impl SweepConfig {
    pub fn new(dim_n: usize) -> Self {
        Self {
            dim_n,
            length: 30.0,
            nv: 64,
            eps: EpsModel::Zero,
        }
    }

    pub fn problem(&self, s: f64) -> Result<StripProblem> {
        let hv = FRAC_PI_2 / self.nv as f64;
        let nu = (self.length / hv).round() as usize;
        Ok(StripProblem::new(self.dim_n, s, s - self.length, nu, self.nv)?.with_eps(self.eps))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub s: f64,
    pub k0: f64,
    pub sweeps: usize,
}

/// Solves one problem per `s` (in parallel) and reports `k(0, 0)`.
pub fn decay_sweep(config: &SweepConfig, s_values: &[f64]) -> Result<Vec<SweepPoint>> {
    s_values
        .par_iter()
        .map(|&s| {
            let field = solve(&config.problem(s)?)?;
            Ok(SweepPoint {
                s,
                k0: field.origin_value()?,
                sweeps: field.sweeps,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conformal::strip_hm;
    use std::f64::consts::PI;

    #[test]
    fn rejects_bad_problems() {
        assert!(StripProblem::new(1, 4.0, 0.0, 64, 32).is_err());
        assert!(StripProblem::new(2, 0.0, 1.0, 64, 32).is_err());
        assert!(StripProblem::new(2, 4.0, 0.0, 64, 16).is_err());
    }

    #[test]
    fn eps_models_respect_bound() {
        let models = [
            EpsModel::Zero,
            EpsModel::Constant { value: -0.2 },
            EpsModel::Decaying { amplitude: 0.1, rate: 1.0, origin: 0.0 },
            EpsModel::Oscillating { amplitude: 0.05, frequency: 3.0 },
        ];
        for m in models {
            for i in 0..50 {
                let u = -5.0 + 0.3 * i as f64;
                assert!(m.eval(u, 0.3).abs() <= m.sup_bound());
            }
        }
    }

    #[test]
    fn constant_data_give_constant_solution() {
        let mut p = StripProblem::new(3, 2.0, 0.0, 64, 32).unwrap();
        p.left_value = 0.5;
        p.top_value = 0.5;
        let field = solve(&p).unwrap();
        for &x in &field.values {
            assert!((x - 0.5).abs() < 1e-9);
        }
    }

    #[test]
    fn planar_solution_matches_strip_measure() {
        let config = SweepConfig::new(2);
        for s in [4.0, 6.0] {
            let field = solve(&config.problem(s).unwrap()).unwrap();
            let k0 = field.origin_value().unwrap();
            let exact = strip_hm(s);
            assert!((k0 / exact - 1.0).abs() < 0.02, "s={s}: {k0} vs {exact}");
        }
    }

    #[test]
    fn solution_obeys_maximum_principle_and_small_residual() {
        let p = StripProblem::new(3, 6.0, 0.0, 240, 40)
            .unwrap()
            .with_eps(EpsModel::Oscillating { amplitude: 0.1, frequency: 2.0 });
        let field = solve(&p).unwrap();
        assert!(field.interior_min() >= 0.0);
        assert!(field.interior_max() <= 0.5);
        let res = residual_grid(&p, &field.values).unwrap();
        assert!(res.interior_max_abs() < 1e-8 * p.residual_scale());
    }

    #[test]
    fn grid_refinement_changes_origin_value_little() {
        let coarse = SweepConfig { nv: 32, ..SweepConfig::new(3) };
        let fine = SweepConfig { nv: 64, ..SweepConfig::new(3) };
        let a = solve(&coarse.problem(6.0).unwrap()).unwrap().origin_value().unwrap();
        let b = solve(&fine.problem(6.0).unwrap()).unwrap().origin_value().unwrap();
        assert!((a / b - 1.0).abs() < 0.01, "{a} vs {b}");
    }

    #[test]
    fn stencil_exact_on_even_quadratics() {
        // L[u^2 + v^2] = 2 + 2 (n - 1 + eps) for constant eps.
        for n in 3..=6 {
            let eps = 0.3;
            let p = StripProblem::new(n, 1.0, 0.0, 8, 32).unwrap().with_eps(EpsModel::Constant { value: eps });
            let res = residual_of(&p, |u, v| u * u + v * v).unwrap();
            let want = 2.0 + 2.0 * (n as f64 - 1.0 + eps);
            for i in 1..p.nu {
                for j in 0..p.nv {
                    assert!((res.at(i, j) - want).abs() < 1e-8 * want, "n={n} j={j}: {}", res.at(i, j));
                }
            }
        }
    }

    #[test]
    fn phi_delta_values() {
        assert!(phi_delta(0.0, FRAC_PI_2, 3, 0.1, 2.0).unwrap().abs() < 1e-12);
        let m = BesselOrder::for_dimension(3, 0.1).unwrap();
        let at_edge = phi_delta(2.0, 0.0, 3, 0.1, 2.0).unwrap();
        assert!((at_edge - bessel_hat_j(m, 0.0).unwrap()).abs() < 1e-15);
        assert!(phi_delta(0.0, 2.0, 3, 0.1, 2.0).is_err());
    }

    #[test]
    fn phi_delta_decreases_in_v() {
        for &(n, delta) in &[(2, 0.0), (3, 0.2), (4, 0.5)] {
            let h = 1e-6;
            for i in 1..100 {
                let v = FRAC_PI_2 * i as f64 / 100.0;
                let d = (phi_delta(0.0, (v + h).min(FRAC_PI_2), n, delta, 1.0).unwrap()
                    - phi_delta(0.0, v - h, n, delta, 1.0).unwrap())
                    / (2.0 * h);
                assert!(d < 0.0, "n={n} v={v}");
            }
        }
    }

    #[test]
    fn phi_zero_solves_unperturbed_equation() {
        let mut prev = None;
        for nv in [32usize, 64, 128] {
            let p = StripProblem::new(3, 2.0, 0.0, 4 * nv / 3, nv).unwrap();
            let res = residual_of(&p, |u, v| phi_delta(u, v, 3, 0.0, 2.0).unwrap()).unwrap();
            let h = p.hv().max(p.hu());
            let err = res.interior_max_abs();
            assert!(err < 2.0 * h * h, "nv={nv}: {err}");
            if let Some(prev_err) = prev {
                let ratio: f64 = prev_err / err;
                assert!(ratio > 3.0, "ratio {ratio}");
            }
            prev = Some(err);
        }
    }

    #[test]
    fn phi_delta_is_subsolution() {
        let delta = 0.2;
        for eps in [
            EpsModel::Constant { value: delta / 2.0 },
            EpsModel::Constant { value: -delta / 2.0 },
            EpsModel::Oscillating { amplitude: delta / 2.0, frequency: 1.7 },
        ] {
            let p = StripProblem::new(3, 4.0, 0.0, 256, 64).unwrap().with_eps(eps);
            let res = residual_of(&p, |u, v| phi_delta(u, v, 3, delta, 4.0).unwrap()).unwrap();
            assert!(res.interior_min() >= -1e-8 * p.residual_scale());
        }
    }

    #[test]
    fn k_delta_boundary_values() {
        assert!(k_delta(-2.0, 0.4, 3, 0.1, 5.0, -2.0).unwrap().abs() < 1e-15);
        assert!(k_delta(1.0, FRAC_PI_2, 3, 0.1, 5.0, -2.0).unwrap().abs() < 1e-12);
        assert!(k_delta(-3.0, 0.0, 3, 0.1, 5.0, -2.0).is_err());
    }

    #[test]
    fn comparison_function_is_dominated() {
        let delta = 0.2;
        let p = StripProblem::new(3, 6.0, 0.0, 192, 48)
            .unwrap()
            .with_eps(EpsModel::Oscillating { amplitude: delta / 2.0, frequency: 1.3 });
        let field = solve(&p).unwrap();
        let b1 = comparison_constant(&p, delta).unwrap();
        assert!(b1 > 0.0);
        let kd = k_delta_grid(&p, delta).unwrap();
        for (a, b) in kd.iter().zip(&field.values) {
            assert!(b1 * a <= b + 1e-8);
        }
    }

    #[test]
    fn decay_fit_recovers_synthetic_rate() {
        let s = [4.0_f64, 6.0, 8.0, 10.0];
        let k: Vec<f64> = s.iter().map(|s| (-1.3 * s).exp()).collect();
        let fit = decay_fit(&s, &k).unwrap();
        assert!((fit.slope() + 1.3).abs() < 1e-12);
        assert!(decay_fit(&s[..2], &k[..2]).is_err());
        assert!(decay_fit(&s, &[1.0, 0.0, 1.0, 1.0]).is_err());
    }

    #[test]
    fn planar_decay_slope_is_minus_one() {
        let sweep = decay_sweep(&SweepConfig::new(2), &[4.0, 6.0, 8.0, 10.0]).unwrap();
        let s: Vec<f64> = sweep.iter().map(|p| p.s).collect();
        let k: Vec<f64> = sweep.iter().map(|p| p.k0).collect();
        let fit = decay_fit(&s, &k).unwrap();
        assert!((fit.slope() + 1.0).abs() < 0.05, "{}", fit.slope());
        let _ = PI;
    }

    #[test]
    fn csv_dump_has_header_and_rows() {
        let p = StripProblem::new(2, 1.0, 0.0, 4, 32).unwrap();
        let field = solve(&p).unwrap();
        let mut buf = Vec::new();
        field.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 1 + 5 * 33);
        assert!(text.starts_with("u,v,k\n"));
    }
}
