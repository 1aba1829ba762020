//! Subcommand implementations. Each returns the full output text; `main`
//! writes it once.

use serde::Serialize;

use parashape::carleman::{carleman_report, x0, CarlemanParams};
use parashape::rare_event::{
    default_stage_count, make_levels, position_tail, splitting_run, splitting_run_with, time_tail, FinalStage,
};
use parashape::sampler::{
    simulate_paths, survival_estimate, wos_sample, wos_survival_estimate, Method, Statistic, StepPolicy,
    SurvivalEstimate,
};
use parashape::special::{exponent_time, lambda1_ball, rate_position};
use parashape::stats::{fit_rate, predict_table, TailPoint, TailQuantity};
use parashape::strip_pde::{decay_fit, decay_sweep, BesselMode, EpsModel, SweepConfig};
use parashape::{ParabolaRegion, PointND};

use crate::config::FileConfig;
use crate::error::{CliError, CliResult};
use crate::records::{config_hash, csv_table, jsonl, read_jsonl, FitRecord, PdeFitRecord, SimulationRecord, VERSION};
use crate::{CarlemanArgs, EpsKindArg, FitArgs, MethodArg, PdeArgs, RegionArgs, ReportArgs, SimulateArgs, StatisticArg};

const DEFAULT_THRESHOLDS: [f64; 4] = [4.0, 9.0, 16.0, 25.0];
const DEFAULT_PATHS: usize = 100_000;
const DEFAULT_EPS_SHELL: f64 = 1e-6;
const SEED_ENV: &str = "PARASHAPE_SEED";

#[derive(Debug, Clone, Copy, Serialize)]
struct RegionSettings {
    alpha: f64,
    a_coef: f64,
    dim: usize,
}

fn resolve_region(args: &RegionArgs, file: &FileConfig) -> CliResult<(RegionSettings, ParabolaRegion)> {
    let settings = RegionSettings {
        alpha: pick(args.alpha, file.f64("region.alpha")?, 0.5),
        a_coef: pick(args.a_coef, file.f64("region.a_coef")?, 1.0),
        dim: pick(args.dim, file.usize("region.dim")?, 2),
    };
    let region = ParabolaRegion::new(settings.alpha, settings.a_coef, settings.dim)?;
    Ok((settings, region))
}

fn pick<T>(flag: Option<T>, file: Option<T>, default: T) -> T {
    flag.or(file).unwrap_or(default)
}

fn resolve_seed(flag: Option<u64>, file: &FileConfig) -> CliResult<u64> {
    if let Some(seed) = flag.or(file.u64("run.seed")?) {
        return Ok(seed);
    }
    match std::env::var(SEED_ENV) {
        Ok(text) => text
            .trim()
            .parse()
            .map_err(|_| CliError::config(format!("{SEED_ENV} must be an unsigned integer, got `{text}`"))),
        Err(_) => Ok(0),
    }
}

fn parse_choice<T: clap::ValueEnum>(file: &FileConfig, key: &str) -> CliResult<Option<T>> {
    match file.string(key)? {
        None => Ok(None),
        Some(text) => T::from_str(&text, true)
            .map(Some)
            .map_err(|_| CliError::config(format!("invalid value `{text}` for `{key}`"))),
    }
}

fn statistic_of(arg: StatisticArg) -> Statistic {
    match arg {
        StatisticArg::AbsExit => Statistic::AbsExit,
        StatisticArg::ExitFirst => Statistic::ExitFirst,
        StatisticArg::MaxRadius => Statistic::MaxRadius,
        StatisticArg::MaxFirst => Statistic::MaxFirst,
        StatisticArg::ExitTime => Statistic::ExitTime,
    }
}

fn method_of(arg: MethodArg) -> Method {
    match arg {
        MethodArg::Crude => Method::Crude,
        MethodArg::Wos => Method::Wos,
        MethodArg::Splitting => Method::Splitting,
    }
}

#[derive(Debug, Clone, Serialize)]
struct PredictRow {
    quantity: TailQuantity,
    exponent_q: f64,
    rate: Option<f64>,
    prefactor_power: Option<f64>,
    dim: usize,
    alpha: f64,
    a_coef: f64,
    config_hash: String,
    version: String,
}

pub fn predict(args: &RegionArgs, file: &FileConfig) -> CliResult<String> {
    let (settings, region) = resolve_region(args, file)?;
    let hash = config_hash(&("predict", settings));
    let rows: Vec<PredictRow> = predict_table(&region)?
        .into_iter()
        .map(|p| PredictRow {
            quantity: p.quantity,
            exponent_q: p.exponent_q,
            rate: p.rate,
            prefactor_power: p.prefactor_power,
            dim: settings.dim,
            alpha: settings.alpha,
            a_coef: settings.a_coef,
            config_hash: hash.clone(),
            version: VERSION.to_string(),
        })
        .collect();
    csv_table(&rows)
}

#[derive(Debug, Clone, Serialize)]
struct SimulateSettings {
    region: RegionSettings,
    seed: u64,
    method: Method,
    statistic: Statistic,
    thresholds: Vec<f64>,
    paths: usize,
    n_per_level: usize,
    start: Vec<f64>,
    policy: StepPolicy,
    eps_shell: f64,
}

fn resolve_simulate(args: &SimulateArgs, file: &FileConfig) -> CliResult<(SimulateSettings, ParabolaRegion)> {
    let (region_settings, region) = resolve_region(&args.region, file)?;
    let method = method_of(pick(args.method, parse_choice(file, "run.method")?, MethodArg::Crude));
    let statistic = statistic_of(pick(args.statistic, parse_choice(file, "run.statistic")?, StatisticArg::AbsExit));
    let thresholds = pick(args.thresholds.clone(), file.f64_list("run.thresholds")?, DEFAULT_THRESHOLDS.to_vec());
    if thresholds.is_empty() || thresholds.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
        return Err(CliError::config("thresholds must be positive and finite"));
    }
    if thresholds.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(CliError::config("thresholds must be strictly increasing"));
    }
    let start = pick(args.start.clone(), file.f64_list("run.start")?, {
        let mut s = vec![0.0; region.dim()];
        s[0] = 1.0;
        s
    });
    if start.len() != region.dim() {
        return Err(CliError::config(format!("start has {} coordinates, region dimension is {}", start.len(), region.dim())));
    }
    let point = PointND::new(start[0], start[1..].to_vec());
    if !region.contains(&point) {
        return Err(CliError::config("start point lies outside the region"));
    }
    let base = StepPolicy::for_start(&point);
    let policy = StepPolicy {
        dt_max: pick(args.dt_max, file.f64("run.dt_max")?, base.dt_max),
        kappa: pick(args.kappa, file.f64("run.kappa")?, base.kappa),
        dt_min: base.dt_min.min(pick(args.dt_max, file.f64("run.dt_max")?, base.dt_max)),
        ..base
    };
    policy.validate()?;
    match (method, statistic) {
        (Method::Wos, s) if !s.available_from_wos() => {
            return Err(CliError::config(format!(
                "method wos yields exit positions only; statistic {} needs path simulation",
                statistic_name(s)
            )))
        }
        (Method::Splitting, Statistic::MaxRadius) => {
            return Err(CliError::config("splitting does not support statistic max_radius"))
        }
        _ => {}
    }
    let settings = SimulateSettings {
        region: region_settings,
        seed: resolve_seed(args.seed, file)?,
        method,
        statistic,
        thresholds,
        paths: pick(args.paths, file.usize("run.paths")?, DEFAULT_PATHS),
        n_per_level: pick(args.n_per_level, file.usize("run.n_per_level")?, parashape::rare_event::DEFAULT_PATHS_PER_LEVEL),
        start,
        policy,
        eps_shell: pick(args.eps_shell, file.f64("run.eps_shell")?, DEFAULT_EPS_SHELL),
    };
    if settings.paths == 0 || settings.n_per_level == 0 {
        return Err(CliError::config("path counts must be positive"));
    }
    Ok((settings, region))
}

fn statistic_name(s: Statistic) -> String {
    serde_json::to_value(s)
        .ok()
        .and_then(|v| v.as_str().map(str::to_string))
        .unwrap_or_default()
}

fn splitting_estimate(region: &ParabolaRegion, start: &PointND, t: f64, s: &SimulateSettings) -> CliResult<SurvivalEstimate> {
    let n = s.n_per_level;
    let policy = &s.policy;
    let estimate = match s.statistic {
        Statistic::AbsExit => position_tail(region, start, t, n, policy, s.seed)?.estimate,
        Statistic::ExitTime => time_tail(region, start, t, n, policy, s.seed)?.estimate,
        Statistic::MaxFirst => {
            let k = default_stage_count(rate_position(region)?, t, 1.0 - region.alpha());
            let ladder = make_levels(region.alpha(), t, k, start.first)?.with_paths(n)?;
            splitting_run(region, start, &ladder, policy, s.seed)?
        }
        Statistic::ExitFirst => {
            let top = t - (0.5 * (t - start.first)).min(1.0);
            let k = default_stage_count(rate_position(region)?, top, 1.0 - region.alpha());
            let ladder = make_levels(region.alpha(), top, k, start.first)?.with_paths(n)?;
            splitting_run_with(region, start, &ladder, FinalStage::ExitFirstAbove { value: t }, policy, s.seed)?.estimate
        }
        Statistic::MaxRadius => unreachable!("rejected during validation"),
    };
    Ok(estimate)
}

pub fn simulate(args: &SimulateArgs, file: &FileConfig) -> CliResult<String> {
    let (settings, region) = resolve_simulate(args, file)?;
    let hash = config_hash(&("simulate", &settings));
    let start = PointND::new(settings.start[0], settings.start[1..].to_vec());
    let estimates: Vec<SurvivalEstimate> = match settings.method {
        Method::Crude => {
            let batch = simulate_paths(&region, &start, &settings.policy, settings.seed, settings.paths)?;
            settings
                .thresholds
                .iter()
                .map(|&t| {
                    // Truncation is reported in the record; a run where every
                    // path hit the step cap carries no information at all.
                    let mut e = if batch.outcomes.is_empty() {
                        let mut e = SurvivalEstimate::binomial(t, 0, 0, Method::Crude, settings.statistic);
                        e.upper_bound = None;
                        e
                    } else {
                        survival_estimate(&batch.outcomes, t, settings.statistic)?
                    };
                    e.truncated = batch.truncated;
                    Ok(e)
                })
                .collect::<CliResult<_>>()?
        }
        Method::Wos => {
            let points = wos_sample(&region, &start, settings.eps_shell, settings.seed, settings.paths)?;
            settings
                .thresholds
                .iter()
                .map(|&t| Ok(wos_survival_estimate(&points, t, settings.statistic)?))
                .collect::<CliResult<_>>()?
        }
        Method::Splitting => settings
            .thresholds
            .iter()
            .map(|&t| splitting_estimate(&region, &start, t, &settings))
            .collect::<CliResult<_>>()?,
    };
    let records: Vec<SimulationRecord> = estimates
        .into_iter()
        .map(|e| SimulationRecord {
            t: e.threshold_t,
            p_hat: e.p_hat,
            std_err: e.std_err,
            n_paths: e.n_paths,
            method: e.method,
            seed: settings.seed,
            statistic: e.statistic,
            upper_bound: e.upper_bound,
            extinct_stage: e.extinct_stage,
            truncated: e.truncated,
            approximate_se: e.approximate_se,
            dim: settings.region.dim,
            alpha: settings.region.alpha,
            a_coef: settings.region.a_coef,
            config_hash: hash.clone(),
            version: VERSION.to_string(),
        })
        .collect();
    Ok(jsonl(&records))
}

/// Theoretical exponent for a statistic: `(1 - alpha)/(1 + alpha)` for exit
/// times, `1 - alpha` for the position statistics.
fn default_q(statistic: Statistic, alpha: f64) -> CliResult<f64> {
    Ok(match statistic {
        Statistic::ExitTime => exponent_time(alpha)?,
        _ => 1.0 - alpha,
    })
}

pub fn fit(args: &FitArgs, file: &FileConfig) -> CliResult<String> {
    let records: Vec<SimulationRecord> = read_jsonl(&args.input)?;
    let first = records
        .first()
        .ok_or_else(|| CliError::config(format!("{} holds no records", args.input.display())))?;
    let consistent = records.iter().all(|r| {
        r.statistic == first.statistic && r.dim == first.dim && r.alpha == first.alpha && r.a_coef == first.a_coef
    });
    if !consistent {
        return Err(CliError::config("records mix statistics or regions"));
    }
    let q = match args.q.or(file.f64("fit.q")?) {
        Some(q) => q,
        None => default_q(first.statistic, first.alpha)?,
    };
    if !(q > 0.0 && q <= 1.0) {
        return Err(CliError::config(format!("q must lie in (0, 1], got {q}")));
    }
    let points: Vec<TailPoint> = records
        .iter()
        .filter(|r| r.p_hat > 0.0)
        .map(|r| TailPoint {
            t: r.t,
            p_hat: r.p_hat,
            std_err: r.std_err,
        })
        .collect();
    let fit = fit_rate(&points, q)?;
    let hash = config_hash(&("fit", q, &records));
    let record = FitRecord {
        statistic: first.statistic,
        dim: first.dim,
        alpha: first.alpha,
        a_coef: first.a_coef,
        exponent_q: fit.exponent_q,
        rate_hat: fit.rate_hat,
        intercept_hat: fit.intercept_hat,
        ci_lo: fit.ci_lo,
        ci_hi: fit.ci_hi,
        n_points: fit.n_points,
        residual_rms: fit.residual_rms,
        seed: first.seed,
        config_hash: hash,
        version: VERSION.to_string(),
    };
    Ok(jsonl(&[record]))
}

#[derive(Debug, Clone, Serialize)]
struct PdeSettings {
    dim: usize,
    s_values: Vec<f64>,
    nv: usize,
    length: f64,
    eps: EpsModel,
}

fn resolve_eps(args: &PdeArgs, file: &FileConfig) -> CliResult<EpsModel> {
    let kind = pick(args.eps_kind, parse_choice(file, "pde.eps_kind")?, EpsKindArg::Zero);
    let value = pick(args.eps_value, file.f64("pde.eps_value")?, 0.0);
    let rate = pick(args.eps_rate, file.f64("pde.eps_rate")?, 1.0);
    let frequency = pick(args.eps_frequency, file.f64("pde.eps_frequency")?, 1.0);
    let origin = pick(args.eps_origin, file.f64("pde.eps_origin")?, 0.0);
    Ok(match kind {
        EpsKindArg::Zero => EpsModel::Zero,
        EpsKindArg::Constant => EpsModel::Constant { value },
        EpsKindArg::Decaying => EpsModel::Decaying {
            amplitude: value,
            rate,
            origin,
        },
        EpsKindArg::Oscillating => EpsModel::Oscillating { amplitude: value, frequency },
    })
}

#[derive(Debug, Clone, Serialize)]
struct PdeRow {
    s: f64,
    k0: f64,
    sweeps: usize,
    config_hash: String,
    version: String,
}

pub fn pde(args: &PdeArgs, file: &FileConfig) -> CliResult<String> {
    let defaults = SweepConfig::new(2);
    let settings = PdeSettings {
        dim: pick(args.dim, file.usize("region.dim")?, 3),
        s_values: pick(args.s_values.clone(), file.f64_list("pde.s_values")?, vec![4.0, 6.0, 8.0, 10.0]),
        nv: pick(args.nv, file.usize("pde.nv")?, defaults.nv),
        length: pick(args.length, file.f64("pde.length")?, defaults.length),
        eps: resolve_eps(args, file)?,
    };
    if settings.s_values.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
        return Err(CliError::config("s values must be positive"));
    }
    if !(settings.length > 0.0) || settings.nv == 0 {
        return Err(CliError::config("length and nv must be positive"));
    }
    let config = SweepConfig {
        dim_n: settings.dim,
        length: settings.length,
        nv: settings.nv,
        eps: settings.eps,
    };
    let hash = config_hash(&("pde", &settings));
    let sweep = decay_sweep(&config, &settings.s_values)?;
    let rows: Vec<PdeRow> = sweep
        .iter()
        .map(|p| PdeRow {
            s: p.s,
            k0: p.k0,
            sweeps: p.sweeps,
            config_hash: hash.clone(),
            version: VERSION.to_string(),
        })
        .collect();
    if sweep.len() >= 3 {
        let s: Vec<f64> = sweep.iter().map(|p| p.s).collect();
        let k: Vec<f64> = sweep.iter().map(|p| p.k0).collect();
        let fit = decay_fit(&s, &k)?;
        let record = PdeFitRecord {
            dim: settings.dim,
            slope: fit.slope(),
            slope_theory: -BesselMode::new(settings.dim, 0.0)?.rate(),
            // The interval is on the rate; flip it onto the slope.
            ci_lo: -fit.ci_hi,
            ci_hi: -fit.ci_lo,
            n_points: fit.n_points,
            config_hash: hash.clone(),
            version: VERSION.to_string(),
        };
        eprintln!(
            "decay slope {:.6} (theory {:.6}) over {} cuts",
            record.slope, record.slope_theory, record.n_points
        );
        if let Some(path) = &args.fit_output {
            crate::records::emit(Some(path), &jsonl(&[record]))?;
        }
    }
    csv_table(&rows)
}

#[derive(Debug, Clone, Serialize)]
struct CarlemanSettings {
    lambda1: f64,
    a_coef: f64,
    alpha: f64,
    k_scale: f64,
    grid: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
struct CarlemanRow {
    id: String,
    x: f64,
    lhs: f64,
    rhs: f64,
    margin: f64,
    pass: bool,
    config_hash: String,
    version: String,
}

pub fn carleman(args: &CarlemanArgs, file: &FileConfig) -> CliResult<String> {
    let (region_settings, region) = resolve_region(&args.region, file)?;
    let lambda1 = match args.lambda1.or(file.f64("carleman.lambda1")?) {
        Some(l) => l,
        None => lambda1_ball(region.dim() - 1)?,
    };
    let k_scale = pick(args.k_scale, file.f64("carleman.k_scale")?, 1.0);
    let params = CarlemanParams::new(lambda1, region_settings.a_coef, region_settings.alpha)?.perturbed(k_scale);
    let grid = match args.grid.clone().or(file.f64_list("carleman.grid")?) {
        Some(g) => g,
        None => {
            let start = x0(&params);
            (0..20).map(|i| start * (1.0 + 0.5 * i as f64)).collect()
        }
    };
    if grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(CliError::config("Carleman grid must be strictly increasing"));
    }
    let settings = CarlemanSettings {
        lambda1,
        a_coef: region_settings.a_coef,
        alpha: region_settings.alpha,
        k_scale,
        grid,
    };
    let hash = config_hash(&("carleman", &settings));
    let rows = carleman_report(&params, &settings.grid)?;
    let failed = rows.iter().filter(|r| !r.pass).count();
    eprintln!("{} checks, {failed} failed", rows.len());
    let rows: Vec<CarlemanRow> = rows
        .into_iter()
        .map(|r| CarlemanRow {
            id: r.id.to_string(),
            x: r.x,
            lhs: r.lhs,
            rhs: r.rhs,
            margin: r.margin,
            pass: r.pass,
            config_hash: hash.clone(),
            version: VERSION.to_string(),
        })
        .collect();
    csv_table(&rows)
}

#[derive(Debug, Clone, Serialize)]
struct ReportRow {
    quantity: TailQuantity,
    statistic: Statistic,
    dim: usize,
    alpha: f64,
    a_coef: f64,
    exponent_q: f64,
    rate_hat: f64,
    ci_lo: f64,
    ci_hi: f64,
    rate_theory: Option<f64>,
    rel_error: Option<f64>,
    fit_hash: String,
    version: String,
}

pub fn report(args: &ReportArgs) -> CliResult<String> {
    let mut rows = Vec::new();
    for path in &args.inputs {
        let fits: Vec<FitRecord> = read_jsonl(path)?;
        for fit in fits {
            let region = ParabolaRegion::new(fit.alpha, fit.a_coef, fit.dim)?;
            let quantity = match fit.statistic {
                Statistic::ExitTime => TailQuantity::ExitTime,
                _ => TailQuantity::ExitPosition,
            };
            let prediction = predict_table(&region)?
                .into_iter()
                .find(|p| p.quantity == quantity)
                .expect("predict_table covers both quantities");
            if (prediction.exponent_q - fit.exponent_q).abs() > 1e-12 {
                return Err(CliError::config(format!(
                    "{}: fit used q = {} but the prediction for {} has q = {}",
                    path.display(),
                    fit.exponent_q,
                    statistic_name(fit.statistic),
                    prediction.exponent_q
                )));
            }
            rows.push(ReportRow {
                quantity,
                statistic: fit.statistic,
                dim: fit.dim,
                alpha: fit.alpha,
                a_coef: fit.a_coef,
                exponent_q: fit.exponent_q,
                rate_hat: fit.rate_hat,
                ci_lo: fit.ci_lo,
                ci_hi: fit.ci_hi,
                rate_theory: prediction.rate,
                rel_error: prediction.rate.map(|r| (fit.rate_hat - r).abs() / r),
                fit_hash: fit.config_hash,
                version: VERSION.to_string(),
            });
        }
    }
    csv_table(&rows)
}
