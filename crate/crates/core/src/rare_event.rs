//! Fixed-effort multilevel splitting for exponentially small tails.
//!
//! Stage `k` restarts `n_per_level` paths from entrance states of stage
//! `k - 1`, drawn uniformly with replacement, and records which of them reach
//! the next level before leaving the region. The estimate is the product of
//! stage fractions.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::geometry::{ParabolaRegion, PointND};
use crate::rng::{substream, PathRng};
use crate::sampler::{advance, Advance, Method, PathState, Statistic, StepPolicy, StopRule, SurvivalEstimate};

pub const DEFAULT_PATHS_PER_LEVEL: usize = 4096;

const TAG_SPLIT: u64 = 3;
const TAG_TIME_SPLIT: u64 = 4;

/// Increasing thresholds `u_1 < ... < u_K` and the per-stage effort.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelLadder {
    pub levels: Vec<f64>,
    pub n_per_level: usize,
}

impl LevelLadder {
    pub fn new(levels: Vec<f64>, n_per_level: usize) -> Result<Self> {
        if levels.is_empty() {
            return Err(invalid("a ladder needs at least one level"));
        }
        if levels.windows(2).any(|w| !(w[1] > w[0])) || levels.iter().any(|u| !u.is_finite()) {
            return Err(invalid("ladder levels must be finite and strictly increasing"));
        }
        if n_per_level == 0 {
            return Err(invalid("n_per_level must be positive"));
        }
        Ok(Self { levels, n_per_level })
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    pub fn last(&self) -> f64 {
        self.levels[self.levels.len() - 1]
    }

    pub fn with_paths(mut self, n_per_level: usize) -> Result<Self> {
        if n_per_level == 0 {
            return Err(invalid("n_per_level must be positive"));
        }
        self.n_per_level = n_per_level;
        Ok(self)
    }
}

fn power_ladder(power: f64, from: f64, to: f64, k: usize) -> Result<LevelLadder> {
    if k == 0 {
        return Err(invalid("the number of levels must be at least 1"));
    }
    if !(to > from) {
        return Err(invalid(format!("target {to} must exceed the start {from}")));
    }
    let s0 = from.powf(power);
    let s1 = to.powf(power);
    let mut levels: Vec<f64> = (1..=k)
        .map(|j| (s0 + j as f64 / k as f64 * (s1 - s0)).powf(1.0 / power))
        .collect();
    levels[k - 1] = to;
    LevelLadder::new(levels, DEFAULT_PATHS_PER_LEVEL)
}

/// First-coordinate levels equally spaced in `u^(1 - alpha)` from `start_first` to `t_target`.
pub fn make_levels(alpha: f64, t_target: f64, k: usize, start_first: f64) -> Result<LevelLadder> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(invalid(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    if !(start_first > 0.0) {
        return Err(invalid("start must have positive first coordinate"));
    }
    power_ladder(1.0 - alpha, start_first, t_target, k)
}

/// Time levels equally spaced in `t^q` from 0 to `t_target`.
pub fn make_time_levels(q: f64, t_target: f64, k: usize) -> Result<LevelLadder> {
    if !(q > 0.0 && q <= 1.0) {
        return Err(invalid(format!("time exponent must lie in (0, 1], got {q}")));
    }
    power_ladder(q, 0.0, t_target, k)
}

/// `ceil(rate t^q / 2)`, so each stage has conditional probability near `e^-2`.
pub fn default_stage_count(rate: f64, t: f64, q: f64) -> usize {
    ((rate * t.powf(q) / 2.0).ceil() as usize).max(1)
}

/// What the survivors of the last level must still do to count as a success.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FinalStage {
    /// Reaching the last level is the event: estimates `P{B^{1,*} >= u_K}`.
    ReachLast,
    /// Run on to exit and require `B^1_tau > value`.
    ExitFirstAbove { value: f64 },
    /// Run on to exit and require `|B_tau| > value`.
    ExitNormAbove { value: f64 },
}

/// Per-stage record of a splitting run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplittingTrace {
    pub fractions: Vec<f64>,
    pub estimate: SurvivalEstimate,
}

struct StageOutcome {
    fractions: Vec<f64>,
    extinct_stage: Option<usize>,
    truncated: usize,
    n: usize,
}

/// Runs the stages; `step(k, state, rng)` returns the entrance state for the
/// next stage, or `None` if the path failed stage `k`.
fn run_stages<F>(initial: PathState, n_stages: usize, n: usize, tags: [u64; 2], step: F) -> Result<StageOutcome>
where
    F: Fn(usize, PathState, &mut PathRng) -> Result<Option<PathState>> + Sync,
{
    let mut pool = vec![initial];
    let mut fractions = Vec::with_capacity(n_stages);
    let mut truncated = 0;
    for k in 0..n_stages {
        let results: Vec<Result<Option<PathState>>> = (0..n as u64)
            .into_par_iter()
            .map(|i| {
                let mut rng = substream(tags[0], &[tags[1], k as u64, i]);
                let parent = rng.random_range(0..pool.len());
                step(k, pool[parent].clone(), &mut rng)
            })
            .collect();
        let mut next = Vec::new();
        for r in results {
            match r {
                Ok(Some(state)) => next.push(state),
                Ok(None) => {}
                Err(Error::Truncated { .. }) => truncated += 1,
                Err(e) => return Err(e),
            }
        }
        fractions.push(next.len() as f64 / n as f64);
        if next.is_empty() {
            return Ok(StageOutcome {
                fractions,
                extinct_stage: Some(k),
                truncated,
                n,
            });
        }
        pool = next;
    }
    Ok(StageOutcome {
        fractions,
        extinct_stage: None,
        truncated,
        n,
    })
}

fn estimate_from(stages: &StageOutcome, threshold_t: f64, statistic: Statistic) -> SurvivalEstimate {
    let nf = stages.n as f64;
    let (p_hat, std_err) = if stages.extinct_stage.is_some() {
        (0.0, 0.0)
    } else {
        let p: f64 = stages.fractions.iter().product();
        let rel_var: f64 = stages.fractions.iter().map(|f| (1.0 - f) / (nf * f)).sum();
        (p, p * rel_var.sqrt())
    };
    let bound_from_extinction = stages.extinct_stage.map(|k| {
        let before: f64 = stages.fractions[..k].iter().product();
        before * 3.0 / nf
    });
    SurvivalEstimate {
        threshold_t,
        p_hat,
        std_err,
        n_paths: stages.n,
        method: Method::Splitting,
        statistic,
        upper_bound: bound_from_extinction,
        extinct_stage: stages.extinct_stage,
        truncated: stages.truncated,
        approximate_se: true,
    }
}

fn check_start(region: &ParabolaRegion, start: &PointND) -> Result<()> {
    if start.dim() != region.dim() {
        return Err(invalid("start point dimension does not match the region"));
    }
    if !region.contains(start) {
        return Err(Error::OutsideRegion);
    }
    Ok(())
}

fn seed_tags(seed: u64, kind: u64, target: f64) -> [u64; 2] {
    [seed, crate::rng::stream_id(&[kind, target.to_bits()])]
}

/// Splitting estimate of `P{B^{1,*} >= u_K}`.
pub fn splitting_run(
    region: &ParabolaRegion,
    start: &PointND,
    ladder: &LevelLadder,
    policy: &StepPolicy,
    seed: u64,
) -> Result<SurvivalEstimate> {
    Ok(splitting_run_with(region, start, ladder, FinalStage::ReachLast, policy, seed)?.estimate)
}

/// Splitting along first-coordinate levels with an optional final exit condition.
pub fn splitting_run_with(
    region: &ParabolaRegion,
    start: &PointND,
    ladder: &LevelLadder,
    final_stage: FinalStage,
    policy: &StepPolicy,
    seed: u64,
) -> Result<SplittingTrace> {
    check_start(region, start)?;
    policy.validate()?;
    if !(ladder.levels[0] > start.first) {
        return Err(invalid("the first level must exceed the start's first coordinate"));
    }
    let levels = &ladder.levels;
    let extra = usize::from(final_stage != FinalStage::ReachLast);
    let (threshold, statistic) = match final_stage {
        FinalStage::ReachLast => (ladder.last(), Statistic::MaxFirst),
        FinalStage::ExitFirstAbove { value } => (value, Statistic::ExitFirst),
        FinalStage::ExitNormAbove { value } => (value, Statistic::AbsExit),
    };
    let stages = run_stages(
        PathState::start(start),
        levels.len() + extra,
        ladder.n_per_level,
        seed_tags(seed, TAG_SPLIT, threshold),
        |k, state, rng| {
            if k < levels.len() {
                return match advance(region, state, policy, StopRule::FirstAtLeast(levels[k]), rng)? {
                    Advance::Stopped(s) => Ok(Some(s)),
                    Advance::Exited(_) => Ok(None),
                };
            }
            let outcome = match advance(region, state.clone(), policy, StopRule::Exit, rng)? {
                Advance::Exited(o) => o,
                Advance::Stopped(_) => unreachable!("StopRule::Exit never stops early"),
            };
            let success = match final_stage {
                FinalStage::ExitFirstAbove { value } => outcome.exit_point.first > value,
                FinalStage::ExitNormAbove { value } => outcome.exit_point.norm() > value,
                FinalStage::ReachLast => unreachable!(),
            };
            Ok(success.then_some(state))
        },
    )?;
    Ok(SplittingTrace {
        estimate: estimate_from(&stages, threshold, statistic),
        fractions: stages.fractions,
    })
}

/// Splitting estimate of `P{tau > t_K}` along time levels.
pub fn splitting_time_tail(
    region: &ParabolaRegion,
    start: &PointND,
    ladder: &LevelLadder,
    policy: &StepPolicy,
    seed: u64,
) -> Result<SplittingTrace> {
    check_start(region, start)?;
    policy.validate()?;
    if !(ladder.levels[0] > 0.0) {
        return Err(invalid("time levels must be positive"));
    }
    let levels = &ladder.levels;
    let stages = run_stages(
        PathState::start(start),
        levels.len(),
        ladder.n_per_level,
        seed_tags(seed, TAG_TIME_SPLIT, ladder.last()),
        |k, state, rng| match advance(region, state, policy, StopRule::TimeAtLeast(levels[k]), rng)? {
            Advance::Stopped(s) => Ok(Some(s)),
            Advance::Exited(_) => Ok(None),
        },
    )?;
    Ok(SplittingTrace {
        estimate: estimate_from(&stages, ladder.last(), Statistic::ExitTime),
        fractions: stages.fractions,
    })
}

/// Default first-coordinate ladder for the event `|B_tau| > t`.
///
/// Any exit beyond the sphere of radius `t` lands at first coordinate above
/// the crosscut `x(t)`, so such a path passes every level below `x(t)` first.
/// The last level sits one unit short of `x(t)` (or halfway from the start,
/// if closer) so that grid-time sampling of the path cannot miss it.
pub fn position_ladder(region: &ParabolaRegion, start_first: f64, t: f64, n_per_level: usize) -> Result<LevelLadder> {
    let x_t = region.crosscut_x(t)?;
    if !(x_t > start_first) {
        return Err(invalid(format!("threshold {t} is not beyond the start")));
    }
    let target = x_t - (0.5 * (x_t - start_first)).min(1.0);
    let rate = crate::special::rate_position(region)?;
    let k = default_stage_count(rate, target, 1.0 - region.alpha());
    make_levels(region.alpha(), target, k, start_first)?.with_paths(n_per_level)
}

/// Splitting estimate of `P{|B_tau| > t}` with the default ladder.
pub fn position_tail(
    region: &ParabolaRegion,
    start: &PointND,
    t: f64,
    n_per_level: usize,
    policy: &StepPolicy,
    seed: u64,
) -> Result<SplittingTrace> {
    let ladder = position_ladder(region, start.first, t, n_per_level)?;
    splitting_run_with(region, start, &ladder, FinalStage::ExitNormAbove { value: t }, policy, seed)
}

/// Default time ladder for `P{tau > t}`: levels uniform in `t^q` with
/// `q = (1 - alpha)/(1 + alpha)`.
///
/// The stage count uses the exact exit-time constant where it is known and
/// `2 t^q` stages otherwise.
pub fn time_ladder(region: &ParabolaRegion, t: f64, n_per_level: usize) -> Result<LevelLadder> {
    let q = crate::special::exponent_time(region.alpha())?;
    let known = region.dim() == 2 && region.alpha() == 0.5 && region.a_coef() == 1.0;
    let k = if known {
        default_stage_count(crate::special::lifshits_shi_constant_2d_half(), t, q)
    } else {
        default_stage_count(4.0, t, q)
    };
    make_time_levels(q, t, k)?.with_paths(n_per_level)
}

/// Splitting estimate of `P{tau > t}` with the default ladder.
pub fn time_tail(
    region: &ParabolaRegion,
    start: &PointND,
    t: f64,
    n_per_level: usize,
    policy: &StepPolicy,
    seed: u64,
) -> Result<SplittingTrace> {
    let ladder = time_ladder(region, t, n_per_level)?;
    splitting_time_tail(region, start, &ladder, policy, seed)
}

/// Bracket for `P{|B_tau| > t}` from first-coordinate exit tails.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PositionBracket {
    pub t: f64,
    /// `t - A^2 t^(2 alpha - 1)`.
    pub shifted_t: f64,
    /// Estimate of `P{B^1_tau > t}`.
    pub lower: f64,
    /// Estimate of `P{B^1_tau > t - A^2 t^(2 alpha - 1)}`.
    pub upper: f64,
}

impl PositionBracket {
    pub fn relative_width(&self) -> f64 {
        (self.upper - self.lower) / self.lower
    }
}

/// Log-linear interpolation of a tail table in the threshold.
fn interpolate_tail(table: &[(f64, f64)], u: f64) -> Result<f64> {
    if let Some(&(_, p)) = table.iter().find(|(t, _)| (t - u).abs() <= 1e-12 * (1.0 + u.abs())) {
        return Ok(p);
    }
    let i = table.partition_point(|(t, _)| *t < u);
    if i == 0 || i == table.len() {
        return Err(invalid(format!("threshold {u} lies outside the tabulated range")));
    }
    let (t0, p0) = table[i - 1];
    let (t1, p1) = table[i];
    if !(p0 > 0.0 && p1 > 0.0) {
        return Err(invalid("cannot interpolate through a zero tail estimate"));
    }
    let w = (u - t0) / (t1 - t0);
    Ok((p0.ln() + w * (p1.ln() - p0.ln())).exp())
}

/// Turns estimates of `P{B^1_tau > u}` into brackets for `P{|B_tau| > t}` at
/// every tabulated `t` whose shifted threshold is covered by the table.
pub fn position_tail_from_first(region: &ParabolaRegion, estimates_first: &[SurvivalEstimate]) -> Result<Vec<PositionBracket>> {
    let mut table: Vec<(f64, f64)> = estimates_first.iter().map(|e| (e.threshold_t, e.p_hat)).collect();
    table.sort_by(|a, b| a.0.total_cmp(&b.0));
    if table.windows(2).any(|w| w[0].0 == w[1].0) {
        return Err(invalid("duplicate thresholds in the tail table"));
    }
    let a2 = region.a_coef() * region.a_coef();
    let mut out = Vec::new();
    for &(t, lower) in &table {
        let shifted_t = t - a2 * t.powf(2.0 * region.alpha() - 1.0);
        if let Ok(upper) = interpolate_tail(&table, shifted_t) {
            out.push(PositionBracket {
                t,
                shifted_t,
                lower,
                upper,
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampler::{simulate_paths, survival_estimate};

    fn planar() -> ParabolaRegion {
        ParabolaRegion::new(0.5, 1.0, 2).unwrap()
    }

    #[test]
    fn levels_examples() {
        let ladder = make_levels(0.5, 16.0, 3, 1.0).unwrap();
        for (u, want) in ladder.levels.iter().zip([4.0, 9.0, 16.0]) {
            assert!((u - want).abs() < 1e-12);
        }
        assert_eq!(make_levels(0.5, 7.0, 1, 1.0).unwrap().levels, vec![7.0]);
        assert_eq!(ladder.n_per_level, DEFAULT_PATHS_PER_LEVEL);
        assert!(make_levels(0.5, 0.5, 2, 1.0).is_err());
        assert!(make_levels(0.5, 5.0, 0, 1.0).is_err());
    }

    #[test]
    fn levels_equally_spaced() {
        for alpha in [0.25, 0.5, 0.75] {
            let ladder = make_levels(alpha, 50.0, 7, 1.3).unwrap();
            let s: Vec<f64> = ladder.levels.iter().map(|u| u.powf(1.0 - alpha)).collect();
            let gap0 = s[0] - 1.3f64.powf(1.0 - alpha);
            for w in s.windows(2) {
                assert!((w[1] - w[0] - gap0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn default_counts() {
        assert_eq!(default_stage_count(std::f64::consts::PI, 25.0, 0.5), 8);
        assert_eq!(default_stage_count(0.1, 1.0, 0.5), 1);
    }

    #[test]
    fn single_level_matches_crude() {
        let region = planar();
        let start = PointND::on_axis(1.0, 2);
        let policy = StepPolicy::for_start(&start);
        let ladder = make_levels(0.5, 4.0, 1, 1.0).unwrap().with_paths(20_000).unwrap();
        let split = splitting_run(&region, &start, &ladder, &policy, 7).unwrap();
        let batch = simulate_paths(&region, &start, &policy, 8, 20_000).unwrap();
        let crude = survival_estimate(&batch.outcomes, 4.0, Statistic::MaxFirst).unwrap();
        let se = (split.std_err.powi(2) + crude.std_err.powi(2)).sqrt();
        assert!((split.p_hat - crude.p_hat).abs() < 3.0 * se, "{} vs {}", split.p_hat, crude.p_hat);
    }

    #[test]
    fn tail_decreases() {
        let region = planar();
        let start = PointND::on_axis(1.0, 2);
        let policy = StepPolicy::for_start(&start);
        let near = position_tail(&region, &start, 4.0, 2048, &policy, 1).unwrap().estimate;
        let far = position_tail(&region, &start, 9.0, 2048, &policy, 1).unwrap().estimate;
        assert!(far.p_hat + 3.0 * (near.std_err.powi(2) + far.std_err.powi(2)).sqrt() < near.p_hat);
        assert!(near.approximate_se && far.approximate_se);
    }

    #[test]
    fn extinction_reports_stage() {
        let region = planar();
        let start = PointND::on_axis(1.0, 2);
        let ladder = make_levels(0.5, 400.0, 2, 1.0).unwrap().with_paths(8).unwrap();
        let est = splitting_run(&region, &start, &ladder, &StepPolicy::for_start(&start), 3).unwrap();
        assert_eq!(est.p_hat, 0.0);
        assert!(est.extinct_stage.is_some());
        assert!(est.upper_bound.unwrap() > 0.0);
    }

    #[test]
    fn deterministic_runs() {
        let region = ParabolaRegion::new(0.5, 1.0, 3).unwrap();
        let start = PointND::on_axis(1.0, 3);
        let policy = StepPolicy::for_start(&start);
        let a = position_tail(&region, &start, 4.0, 256, &policy, 99).unwrap();
        let b = position_tail(&region, &start, 4.0, 256, &policy, 99).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn time_levels() {
        let ladder = make_time_levels(1.0 / 3.0, 64.0, 4).unwrap();
        for (u, want) in ladder.levels.iter().zip([1.0, 8.0, 27.0, 64.0]) {
            assert!((u - want).abs() < 1e-9);
        }
    }

    #[test]
    fn bracket_thresholds() {
        let region = planar();
        let table: Vec<SurvivalEstimate> = [98.0, 99.5, 100.0]
            .iter()
            .map(|&t| SurvivalEstimate::binomial(t, (1000.0 * (-t / 10.0f64).exp()) as usize + 1, 1000, Method::Crude, Statistic::ExitFirst))
            .collect();
        let brackets = position_tail_from_first(&region, &table).unwrap();
        let at100 = brackets.iter().find(|b| b.t == 100.0).unwrap();
        assert_eq!(at100.shifted_t, 99.0);
        assert!(at100.lower <= at100.upper);
        assert!(brackets.iter().all(|b| b.t != 98.0));
    }

    #[test]
    fn interpolation_is_log_linear() {
        let table = [(1.0, 1e-2), (3.0, 1e-4)];
        assert!((interpolate_tail(&table, 2.0).unwrap() - 1e-3).abs() < 1e-15);
        assert!(interpolate_tail(&table, 0.5).is_err());
    }
}
