//! Brownian paths in a domain: exact Gaussian increments, adaptive steps, and
//! a Brownian-bridge test against the tangent half-space for exits that
//! happen between grid times. Walk-on-spheres samples exit positions only.
//!
//! Time convention: generator `(1/2) Laplacian`, so increments over `dt` have
//! variance `dt` per coordinate.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::geometry::{ParabolaRegion, PointND};
use crate::rng::substream;

/// First coordinates below this count as the vertex zone.
pub const VERTEX_ZONE: f64 = 1e-6;
/// Floor applied to boundary distances.
pub const DISTANCE_FLOOR: f64 = 1e-9;
/// ... and the bridge test when the endpoint's lower bound exceeds this many `sqrt(dt)`.
const BRIDGE_SKIP: f64 = 3.0;
const WOS_MAX_JUMPS: usize = 1_000_000;

pub(crate) const TAG_CRUDE: u64 = 1;
pub(crate) const TAG_WOS: u64 = 2;

/// A domain the samplers can run in.
pub trait Domain: Sync {
    fn dim(&self) -> usize;
    fn contains(&self, p: &[f64]) -> bool;
    /// A cheap lower bound on the boundary distance (0 is always valid).
    fn distance_lower_bound(&self, p: &[f64]) -> f64;
    /// A cheap upper bound on the boundary distance of an interior point.
    fn distance_upper_bound(&self, p: &[f64]) -> f64;
    /// Writes the nearest boundary point into `foot` and returns the distance.
    fn project(&self, p: &[f64], foot: &mut [f64]) -> f64;
}

fn radial(p: &[f64]) -> f64 {
    p[1..].iter().map(|y| y * y).sum::<f64>().sqrt()
}

impl Domain for ParabolaRegion {
    fn dim(&self) -> usize {
        ParabolaRegion::dim(self)
    }

    fn contains(&self, p: &[f64]) -> bool {
        self.contains_xr(p[0], radial(p))
    }

    fn distance_lower_bound(&self, p: &[f64]) -> f64 {
        if p[0] < VERTEX_ZONE {
            return 0.0;
        }
        self.distance_lower_bound_xr(p[0], radial(p))
    }

    fn distance_upper_bound(&self, p: &[f64]) -> f64 {
        (self.profile(p[0].max(0.0)) - radial(p)).max(0.0)
    }

    fn project(&self, p: &[f64], foot: &mut [f64]) -> f64 {
        let r = radial(p);
        let nearest = self.nearest_boundary_xr(p[0], r);
        foot[0] = nearest.u;
        if r > 0.0 {
            for (f, y) in foot[1..].iter_mut().zip(&p[1..]) {
                *f = nearest.height * y / r;
            }
        } else {
            foot[1..].iter_mut().for_each(|f| *f = 0.0);
            foot[1] = nearest.height;
        }
        let dx = p[0] - foot[0];
        (dx * dx + foot[1..].iter().zip(&p[1..]).map(|(f, y)| (f - y) * (f - y)).sum::<f64>()).sqrt()
    }
}

/// The planar strip `{|y| < half_width}`; a control domain with closed-form
/// harmonic measure.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Strip {
    pub half_width: f64,
}

impl Strip {
    pub fn standard() -> Self {
        Self {
            half_width: std::f64::consts::FRAC_PI_2,
        }
    }
}

impl Domain for Strip {
    fn dim(&self) -> usize {
        2
    }

    fn contains(&self, p: &[f64]) -> bool {
        p[1].abs() < self.half_width
    }

    fn distance_lower_bound(&self, p: &[f64]) -> f64 {
        (self.half_width - p[1].abs()).max(0.0)
    }

    fn distance_upper_bound(&self, p: &[f64]) -> f64 {
        self.distance_lower_bound(p)
    }

    fn project(&self, p: &[f64], foot: &mut [f64]) -> f64 {
        foot[0] = p[0];
        foot[1] = self.half_width.copysign(p[1]);
        (self.half_width - p[1].abs()).abs()
    }
}

/// Step-size policy: `dt = clamp(kappa d^2, dt_min, dt_max)` for boundary distance `d`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepPolicy {
    pub dt_max: f64,
    pub dt_min: f64,
    pub kappa: f64,
    pub tol_boundary: f64,
    pub max_steps: usize,
}

impl Default for StepPolicy {
    fn default() -> Self {
        Self {
            dt_max: 1e-2,
            dt_min: 1e-5,
            kappa: 0.1,
            tol_boundary: 1e-9,
            max_steps: 10_000_000,
        }
    }
}

impl StepPolicy {
    /// Default policy with the boundary tolerance scaled to `1e-9 (1 + |start|)`.
    pub fn for_start(start: &PointND) -> Self {
        Self {
            tol_boundary: 1e-9 * (1.0 + start.norm()),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = self.dt_max > 0.0 && self.dt_min > 0.0 && self.kappa > 0.0 && self.tol_boundary > 0.0;
        if !positive || self.max_steps == 0 {
            return Err(invalid("step policy values must be positive"));
        }
        if self.kappa > 1.0 {
            return Err(invalid(format!("kappa must be <= 1, got {}", self.kappa)));
        }
        if self.dt_min > self.dt_max {
            return Err(invalid("dt_min exceeds dt_max"));
        }
        Ok(())
    }
}

/// One trajectory's exit record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathOutcome {
    pub exit_point: PointND,
    pub exit_time: f64,
    pub max_radius: f64,
    pub max_first: f64,
    pub n_steps: usize,
}

/// A live path: position, clock and running maxima.
#[derive(Debug, Clone, PartialEq)]
pub struct PathState {
    pub position: Vec<f64>,
    pub time: f64,
    pub max_radius: f64,
    pub max_first: f64,
    pub n_steps: usize,
}

impl PathState {
    pub fn start(p: &PointND) -> Self {
        let mut position = Vec::with_capacity(p.dim());
        position.push(p.first);
        position.extend_from_slice(&p.rest);
        Self {
            position,
            time: 0.0,
            max_radius: p.norm(),
            max_first: p.first,
            n_steps: 0,
        }
    }

    pub fn point(&self) -> PointND {
        PointND::new(self.position[0], self.position[1..].to_vec())
    }

    fn record(&mut self, p: &[f64]) {
        let r = p.iter().map(|x| x * x).sum::<f64>().sqrt();
        self.max_radius = self.max_radius.max(r);
        self.max_first = self.max_first.max(p[0]);
    }

    fn exit(self, point: &[f64], time: f64) -> PathOutcome {
        let exit_point = PointND::new(point[0], point[1..].to_vec());
        PathOutcome {
            max_radius: self.max_radius.max(exit_point.norm()),
            max_first: self.max_first.max(exit_point.first),
            exit_point,
            exit_time: time,
            n_steps: self.n_steps,
        }
    }
}

/// When [`advance`] hands a live path back to the caller.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StopRule {
    /// Run to exit.
    Exit,
    /// Stop at the first grid time with first coordinate `>= level`.
    FirstAtLeast(f64),
    /// Stop when the clock reaches this time (the last step is shortened).
    TimeAtLeast(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Advance {
    Exited(PathOutcome),
    Stopped(PathState),
}

/// `exp(-2 d0 d1 / dt)`: probability that a Brownian bridge over `dt` between
/// points at distances `d0`, `d1` from a hyperplane touches it.
pub fn bridge_crossing_prob(d0: f64, d1: f64, dt: f64) -> f64 {
    (-2.0 * d0.max(0.0) * d1.max(0.0) / dt).exp().clamp(0.0, 1.0)
}

fn crossing_fraction<D: Domain>(domain: &D, from: &[f64], to: &[f64], tol: f64, buf: &mut [f64]) -> f64 {
    let length = from.iter().zip(to).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    for _ in 0..200 {
        if (hi - lo) * length <= tol {
            break;
        }
        let mid = 0.5 * (lo + hi);
        for k in 0..buf.len() {
            buf[k] = from[k] + mid * (to[k] - from[k]);
        }
        if domain.contains(buf) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Simulates from `state` until exit or until `stop` fires.
pub fn advance<D: Domain, R: Rng + ?Sized>(
    domain: &D,
    mut state: PathState,
    policy: &StepPolicy,
    stop: StopRule,
    rng: &mut R,
) -> Result<Advance> {
    let dim = domain.dim();
    if state.position.len() != dim {
        return Err(invalid(format!("state has dimension {}, domain {}", state.position.len(), dim)));
    }
    let mut end = vec![0.0; dim];
    let mut foot = vec![0.0; dim];
    let mut buf = vec![0.0; dim];
    loop {
        match stop {
            StopRule::FirstAtLeast(level) if state.position[0] >= level => return Ok(Advance::Stopped(state)),
            StopRule::TimeAtLeast(t) if state.time >= t => return Ok(Advance::Stopped(state)),
            _ => {}
        }
        if state.n_steps >= policy.max_steps {
            return Err(Error::Truncated {
                max_steps: policy.max_steps,
            });
        }

        let lower = domain.distance_lower_bound(&state.position);
        let far = policy.kappa * lower * lower >= policy.dt_max;
        let mut start_distance = None;
        let mut dt = if far {
            policy.dt_max
        } else {
            let d = domain.project(&state.position, &mut foot).max(DISTANCE_FLOOR);
            start_distance = Some(d);
            (policy.kappa * d * d).clamp(policy.dt_min, policy.dt_max)
        };
        if let StopRule::TimeAtLeast(t) = stop {
            dt = dt.min(t - state.time);
        }
        let sd = dt.sqrt();
        for (e, p) in end.iter_mut().zip(&state.position) {
            let z: f64 = rng.sample(StandardNormal);
            *e = p + sd * z;
        }

        if !domain.contains(&end) {
            let f = crossing_fraction(domain, &state.position, &end, policy.tol_boundary, &mut buf);
            for k in 0..dim {
                buf[k] = state.position[k] + f * (end[k] - state.position[k]);
            }
            domain.project(&buf, &mut foot);
            let t = state.time + f * dt;
            state.n_steps += 1;
            return Ok(Advance::Exited(state.exit(&foot, t)));
        }

        if !far || domain.distance_lower_bound(&end) < BRIDGE_SKIP * sd {
            let d0 = match start_distance {
                Some(d) => d,
                None => domain.project(&state.position, &mut foot).max(DISTANCE_FLOOR),
            };
            // Distance of the endpoint to the tangent plane at the foot.
            let d1: f64 = (0..dim)
                .map(|k| (foot[k] - end[k]) * (foot[k] - state.position[k]))
                .sum::<f64>()
                / d0;
            let p = bridge_crossing_prob(d0, d1, dt);
            if p > 0.0 && rng.random::<f64>() < p {
                for k in 0..dim {
                    buf[k] = 0.5 * (state.position[k] + end[k]);
                }
                domain.project(&buf, &mut foot);
                let t = state.time + 0.5 * dt;
                state.n_steps += 1;
                return Ok(Advance::Exited(state.exit(&foot, t)));
            }
        }

        std::mem::swap(&mut state.position, &mut end);
        state.time += dt;
        state.n_steps += 1;
        let pos = std::mem::take(&mut state.position);
        state.record(&pos);
        state.position = pos;
    }
}

/// Runs one path from `start` to exit.
pub fn run_path<D: Domain, R: Rng + ?Sized>(
    domain: &D,
    start: &PointND,
    policy: &StepPolicy,
    rng: &mut R,
) -> Result<PathOutcome> {
    if start.dim() != domain.dim() {
        return Err(invalid("start point dimension does not match the domain"));
    }
    if !domain.contains(&PathState::start(start).position) {
        return Err(Error::OutsideRegion);
    }
    match advance(domain, PathState::start(start), policy, StopRule::Exit, rng)? {
        Advance::Exited(outcome) => Ok(outcome),
        Advance::Stopped(_) => unreachable!("StopRule::Exit never stops early"),
    }
}

/// Outcomes of a batch of independent paths; truncated paths are dropped and counted.
#[derive(Debug, Clone, PartialEq)]
pub struct PathBatch {
    pub outcomes: Vec<PathOutcome>,
    pub truncated: usize,
}

/// Runs `n_paths` paths; path `i` uses the substream `(seed, i)`.
pub fn simulate_paths<D: Domain>(
    domain: &D,
    start: &PointND,
    policy: &StepPolicy,
    seed: u64,
    n_paths: usize,
) -> Result<PathBatch> {
    policy.validate()?;
    let results: Vec<Result<PathOutcome>> = (0..n_paths as u64)
        .into_par_iter()
        .map(|i| run_path(domain, start, policy, &mut substream(seed, &[TAG_CRUDE, i])))
        .collect();
    let mut outcomes = Vec::with_capacity(n_paths);
    let mut truncated = 0;
    for r in results {
        match r {
            Ok(o) => outcomes.push(o),
            Err(Error::Truncated { .. }) => truncated += 1,
            Err(e) => return Err(e),
        }
    }
    Ok(PathBatch { outcomes, truncated })
}

/// Walk on spheres: jump to a uniform point on the largest available sphere
/// until within `eps_shell` of the boundary, then project.
pub fn wos_exit<D: Domain, R: Rng + ?Sized>(
    domain: &D,
    start: &PointND,
    eps_shell: f64,
    rng: &mut R,
) -> Result<PointND> {
    if !(eps_shell > 0.0) {
        return Err(invalid("eps_shell must be positive"));
    }
    let state = PathState::start(start);
    let mut pos = state.position;
    if pos.len() != domain.dim() {
        return Err(invalid("start point dimension does not match the domain"));
    }
    if !domain.contains(&pos) {
        return Err(Error::OutsideRegion);
    }
    let mut foot = vec![0.0; pos.len()];
    let mut dir = vec![0.0; pos.len()];
    for _ in 0..WOS_MAX_JUMPS {
        let lower = domain.distance_lower_bound(&pos);
        let radius = if lower > eps_shell && lower >= 0.5 * domain.distance_upper_bound(&pos) {
            lower
        } else {
            let d = domain.project(&pos, &mut foot);
            if d < eps_shell {
                return Ok(PointND::new(foot[0], foot[1..].to_vec()));
            }
            d
        };
        let mut norm2 = 0.0_f64;
        for x in dir.iter_mut() {
            *x = rng.sample::<f64, _>(StandardNormal);
            norm2 += *x * *x;
        }
        let scale = radius / norm2.sqrt();
        for (p, x) in pos.iter_mut().zip(&dir) {
            *p += scale * x;
        }
    }
    Err(Error::WalkCap(WOS_MAX_JUMPS))
}

/// Runs `n_walks` walks; walk `i` uses the substream `(seed, i)`.
pub fn wos_sample<D: Domain>(
    domain: &D,
    start: &PointND,
    eps_shell: f64,
    seed: u64,
    n_walks: usize,
) -> Result<Vec<PointND>> {
    (0..n_walks as u64)
        .into_par_iter()
        .map(|i| wos_exit(domain, start, eps_shell, &mut substream(seed, &[TAG_WOS, i])))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Crude,
    Wos,
    Splitting,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Statistic {
    /// `|B_tau|`.
    AbsExit,
    /// `B^1_tau`, the first coordinate of the exit point.
    ExitFirst,
    /// `B^*`, the running maximum of `|B|`.
    MaxRadius,
    /// `B^{1,*}`, the running maximum of the first coordinate.
    MaxFirst,
    ExitTime,
}

impl Statistic {
    pub fn of(&self, outcome: &PathOutcome) -> f64 {
        match self {
            Statistic::AbsExit => outcome.exit_point.norm(),
            Statistic::ExitFirst => outcome.exit_point.first,
            Statistic::MaxRadius => outcome.max_radius,
            Statistic::MaxFirst => outcome.max_first,
            Statistic::ExitTime => outcome.exit_time,
        }
    }

    /// Whether walk-on-spheres output carries this statistic.
    pub fn available_from_wos(&self) -> bool {
        matches!(self, Statistic::AbsExit | Statistic::ExitFirst)
    }
}

/// An estimate of `P{statistic > threshold_t}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvivalEstimate {
    pub threshold_t: f64,
    pub p_hat: f64,
    pub std_err: f64,
    pub n_paths: usize,
    pub method: Method,
    pub statistic: Statistic,
    /// Rule-of-three bound `3 / n` recorded when no path exceeded the threshold.
    pub upper_bound: Option<f64>,
    /// Stage at which a splitting run went extinct.
    pub extinct_stage: Option<usize>,
    /// Paths dropped for exceeding the step budget.
    pub truncated: usize,
    /// Set when `std_err` is a delta-method approximation rather than binomial.
    pub approximate_se: bool,
}

impl SurvivalEstimate {
    /// Binomial estimate from `hits` out of `n`.
    pub fn binomial(threshold_t: f64, hits: usize, n: usize, method: Method, statistic: Statistic) -> Self {
        let nf = n.max(1) as f64;
        let p_hat = hits as f64 / nf;
        Self {
            threshold_t,
            p_hat,
            std_err: (p_hat * (1.0 - p_hat) / nf).sqrt(),
            n_paths: n,
            method,
            statistic,
            upper_bound: (hits == 0).then(|| 3.0 / nf),
            extinct_stage: None,
            truncated: 0,
            approximate_se: false,
        }
    }
}

/// Empirical tail frequency of `statistic` above `t`.
pub fn survival_estimate(outcomes: &[PathOutcome], t: f64, statistic: Statistic) -> Result<SurvivalEstimate> {
    if outcomes.is_empty() {
        return Err(invalid("no outcomes to estimate from"));
    }
    let hits = outcomes.iter().filter(|o| statistic.of(o) > t).count();
    Ok(SurvivalEstimate::binomial(t, hits, outcomes.len(), Method::Crude, statistic))
}

/// Tail frequency of `statistic` over walk-on-spheres exit points.
pub fn wos_survival_estimate(points: &[PointND], t: f64, statistic: Statistic) -> Result<SurvivalEstimate> {
    if !statistic.available_from_wos() {
        return Err(invalid(format!("{statistic:?} is not available from walk-on-spheres")));
    }
    if points.is_empty() {
        return Err(invalid("no exit points to estimate from"));
    }
    let value = |p: &PointND| match statistic {
        Statistic::AbsExit => p.norm(),
        _ => p.first,
    };
    let hits = points.iter().filter(|p| value(p) > t).count();
    Ok(SurvivalEstimate::binomial(t, hits, points.len(), Method::Wos, statistic))
}
