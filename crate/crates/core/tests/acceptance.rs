//! End-to-end acceptance checks. Runs as a plain binary (no libtest harness)
//! and prints one PASS/FAIL line per criterion.
//!
//! `cargo test -p parashape-core --test acceptance -- 2 5` runs a subset.

use std::f64::consts::PI;
use std::process::ExitCode;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use parashape::carleman::{carleman_report, x0, CarlemanParams, CheckId};
use parashape::conformal::{s_slope, strip_hm};
use parashape::rare_event::{position_tail, time_tail};
use parashape::sampler::{
    simulate_paths, survival_estimate, wos_sample, wos_survival_estimate, Statistic, StepPolicy, Strip,
    SurvivalEstimate,
};
use parashape::special::{first_zero, lambda1_ball, lifshits_shi_constant_2d_half, rate_position, BesselOrder};
use parashape::stats::{fit_rate, RateFit, TailPoint};
use parashape::strip_pde::{decay_fit, decay_sweep, residual_of, phi_delta, EpsModel, StripProblem, SweepConfig};
use parashape::{ParabolaRegion, PointND};

const SEED: u64 = 2024;
const SPLIT_PATHS: usize = 16_384;
const POSITION_TS: [f64; 4] = [4.0, 9.0, 16.0, 25.0];
const TIME_TS: [f64; 3] = [8.0, 27.0, 64.0];

struct Verdict {
    pass: bool,
    detail: String,
}

impl Verdict {
    fn new(pass: bool, detail: String) -> Self {
        Self { pass, detail }
    }
}

fn within_budget(elapsed: Duration, minutes: f64) -> bool {
    elapsed.as_secs_f64() <= 60.0 * minutes
}

fn region(dim: usize) -> ParabolaRegion {
    ParabolaRegion::new(0.5, 1.0, dim).unwrap()
}

fn tail_point(e: &SurvivalEstimate) -> TailPoint {
    TailPoint {
        t: e.threshold_t,
        p_hat: e.p_hat,
        std_err: e.std_err,
    }
}

fn show(points: &[TailPoint]) -> String {
    points
        .iter()
        .map(|p| format!("t={} p={:.4e}±{:.1e}", p.t, p.p_hat, p.std_err))
        .collect::<Vec<_>>()
        .join(", ")
}

struct Dataset {
    points: Vec<TailPoint>,
    elapsed: Duration,
    note: String,
}

fn position_dataset(dim: usize) -> Dataset {
    let region = region(dim);
    let start = PointND::on_axis(1.0, dim);
    let policy = StepPolicy::for_start(&start);
    let clock = Instant::now();
    let points = POSITION_TS
        .iter()
        .map(|&t| tail_point(&position_tail(&region, &start, t, SPLIT_PATHS, &policy, SEED).unwrap().estimate))
        .collect();
    Dataset {
        points,
        elapsed: clock.elapsed(),
        note: String::new(),
    }
}

fn planar_position() -> &'static Dataset {
    static DATA: OnceLock<Dataset> = OnceLock::new();
    DATA.get_or_init(|| position_dataset(2))
}

fn planar_time() -> &'static Dataset {
    static DATA: OnceLock<Dataset> = OnceLock::new();
    DATA.get_or_init(|| {
        let region = region(2);
        let start = PointND::on_axis(1.0, 2);
        let policy = StepPolicy::for_start(&start);
        let clock = Instant::now();
        let crude_batch = simulate_paths(&region, &start, &policy, SEED, 200_000).unwrap();
        let crude = survival_estimate(&crude_batch.outcomes, TIME_TS[0], Statistic::ExitTime).unwrap();
        let mut points: Vec<TailPoint> = TIME_TS
            .iter()
            .map(|&t| tail_point(&time_tail(&region, &start, t, SPLIT_PATHS, &policy, SEED).unwrap().estimate))
            .collect();
        // Inverse-variance combination of the crude and splitting estimates at the first threshold.
        let split = points[0];
        let agree = (crude.p_hat - split.p_hat).abs() <= 3.0 * (crude.std_err.powi(2) + split.std_err.powi(2)).sqrt();
        let (wc, ws) = (crude.std_err.powi(-2), split.std_err.powi(-2));
        points[0] = TailPoint {
            t: split.t,
            p_hat: (wc * crude.p_hat + ws * split.p_hat) / (wc + ws),
            std_err: (wc + ws).powf(-0.5),
        };
        Dataset {
            points,
            elapsed: clock.elapsed(),
            note: format!(
                "crude t=8 {:.4e}±{:.1e} vs splitting {:.4e}±{:.1e} ({})",
                crude.p_hat,
                crude.std_err,
                split.p_hat,
                split.std_err,
                if agree { "agree" } else { "DISAGREE" }
            ),
        }
    })
}

fn rate_verdict(data: &Dataset, q: f64, theory: f64, tolerance: f64, minutes: f64) -> Verdict {
    let fit = fit_rate(&data.points, q).unwrap();
    let rel = (fit.rate_hat - theory).abs() / theory;
    let covers = fit.ci_covers(theory);
    let in_time = within_budget(data.elapsed, minutes);
    Verdict::new(
        rel <= tolerance && covers && in_time,
        format!(
            "rate_hat={:.4} theory={:.4} rel_err={:.3} (tol {tolerance}) ci=[{:.4},{:.4}] covers={covers} data: {} {}; {:.0}s of {minutes} min",
            fit.rate_hat,
            theory,
            rel,
            fit.ci_lo,
            fit.ci_hi,
            show(&data.points),
            data.note,
            data.elapsed.as_secs_f64()
        ),
    )
}

fn criterion_1() -> Verdict {
    let clock = Instant::now();
    let strip = Strip::standard();
    let start = PointND::new(0.0, vec![0.0]);
    let mut ok = true;
    let mut parts = Vec::new();
    for (i, s) in [1.0, 2.0, 3.0].into_iter().enumerate() {
        let points = wos_sample(&strip, &start, 1e-6, SEED + i as u64, 1_000_000).unwrap();
        let est = wos_survival_estimate(&points, s, Statistic::ExitFirst).unwrap();
        let exact = strip_hm(s);
        let z = (est.p_hat - exact) / est.std_err;
        ok &= z.abs() <= 3.0;
        parts.push(format!("s={s}: {:.5} vs {:.5} (z={z:.2})", est.p_hat, exact));
    }
    let elapsed = clock.elapsed();
    ok &= within_budget(elapsed, 1.0);
    Verdict::new(ok, format!("{}; {:.1}s of 1 min", parts.join(", "), elapsed.as_secs_f64()))
}

fn criterion_2() -> Verdict {
    rate_verdict(planar_position(), 0.5, PI, 0.15, 10.0)
}

fn criterion_3() -> Verdict {
    let theory = rate_position(&region(3)).unwrap();
    rate_verdict(&position_dataset(3), 0.5, theory, 0.15, 15.0)
}

fn criterion_4() -> Verdict {
    let data = planar_time();
    let mut v = rate_verdict(data, 1.0 / 3.0, lifshits_shi_constant_2d_half(), 0.25, 20.0);
    // The exit-time criterion asks for the tolerance only; report coverage without requiring it.
    let fit = fit_rate(&data.points, 1.0 / 3.0).unwrap();
    let rel = (fit.rate_hat - lifshits_shi_constant_2d_half()).abs() / lifshits_shi_constant_2d_half();
    v.pass = rel <= 0.25 && within_budget(data.elapsed, 20.0);
    v
}

fn rms_pair(points: &[TailPoint]) -> (RateFit, RateFit) {
    (fit_rate(points, 0.5).unwrap(), fit_rate(points, 1.0 / 3.0).unwrap())
}

fn criterion_5() -> Verdict {
    let (pos_half, pos_third) = rms_pair(&planar_position().points);
    let (time_half, time_third) = rms_pair(&planar_time().points);
    let position_ok = pos_half.residual_rms <= 0.5 * pos_third.residual_rms;
    let time_ok = time_third.residual_rms <= 0.5 * time_half.residual_rms;
    Verdict::new(
        position_ok && time_ok,
        format!(
            "position rms q=1/2 {:.4} vs q=1/3 {:.4}; time rms q=1/3 {:.4} vs q=1/2 {:.4}",
            pos_half.residual_rms, pos_third.residual_rms, time_third.residual_rms, time_half.residual_rms
        ),
    )
}

fn criterion_6() -> Verdict {
    let clock = Instant::now();
    let s_values = [4.0, 6.0, 8.0, 10.0];
    let slope_of = |dim: usize| {
        let sweep = decay_sweep(&SweepConfig::new(dim), &s_values).unwrap();
        let k: Vec<f64> = sweep.iter().map(|p| p.k0).collect();
        (decay_fit(&s_values, &k).unwrap().slope(), k)
    };
    let j0 = first_zero(BesselOrder::new(0.0).unwrap()).unwrap();
    let target3 = -2.0 * j0 / PI;
    let (slope3, _) = slope_of(3);
    let (slope2, k2) = slope_of(2);
    let worst_hm = s_values
        .iter()
        .zip(&k2)
        .map(|(&s, &k)| (k / strip_hm(s) - 1.0).abs())
        .fold(0.0, f64::max);
    let elapsed = clock.elapsed();
    let ok3 = ((slope3 - target3) / target3).abs() <= 0.05;
    let ok2 = (slope2 + 1.0).abs() <= 0.05;
    let ok_hm = worst_hm <= 0.02;
    Verdict::new(
        ok3 && ok2 && ok_hm && within_budget(elapsed, 5.0),
        format!(
            "n=3 slope {slope3:.4} vs {target3:.4}; n=2 slope {slope2:.4}; max |k0/strip_hm - 1| {worst_hm:.4}; {:.1}s of 5 min",
            elapsed.as_secs_f64()
        ),
    )
}

fn criterion_7() -> Verdict {
    let mut worst = f64::INFINITY;
    let mut ok = true;
    for n in [3usize, 4, 5] {
        for delta in [0.1, 0.2, 0.5] {
            let models = [
                EpsModel::Constant { value: delta / 2.0 },
                EpsModel::Constant { value: -delta / 2.0 },
                EpsModel::Oscillating { amplitude: delta / 2.0, frequency: 1.7 },
                EpsModel::Decaying { amplitude: delta / 2.0, rate: 0.8, origin: 0.0 },
            ];
            for eps in models {
                let p = StripProblem::new(n, 4.0, 0.0, 512, 128).unwrap().with_eps(eps);
                let res = residual_of(&p, |u, v| phi_delta(u, v, n, delta, 4.0).unwrap()).unwrap();
                let scaled = res.interior_min() / p.residual_scale();
                worst = worst.min(scaled);
                ok &= scaled >= -1e-8;
            }
        }
    }
    Verdict::new(ok, format!("min residual / scale = {worst:.3e} over n in {{3,4,5}}, delta in {{0.1,0.2,0.5}}, 4 eps models"))
}

fn criterion_8() -> Verdict {
    let mut ok = true;
    let mut parts = Vec::new();
    for (dim, ts) in [(2usize, [1.5_f64, 2.0, 3.0, 4.0]), (3, [1.5, 2.0, 2.5, 3.0])] {
        let region = region(dim);
        let start = PointND::on_axis(1.0, dim);
        let batch = simulate_paths(&region, &start, &StepPolicy::for_start(&start), SEED + dim as u64, 1_000_000).unwrap();
        let invariants = batch
            .outcomes
            .iter()
            .all(|o| o.exit_point.norm() <= o.max_radius && o.exit_point.first <= o.max_first);
        ok &= invariants && batch.truncated == 0;
        for t in ts {
            let shifted = t - region.a_coef().powi(2) * t.powf(2.0 * region.alpha() - 1.0);
            let lo = survival_estimate(&batch.outcomes, t, Statistic::ExitFirst).unwrap();
            let mid = survival_estimate(&batch.outcomes, t, Statistic::AbsExit).unwrap();
            let hi = survival_estimate(&batch.outcomes, shifted, Statistic::ExitFirst).unwrap();
            let first = lo.p_hat <= mid.p_hat + 3.0 * (lo.std_err.powi(2) + mid.std_err.powi(2)).sqrt();
            let second = mid.p_hat <= hi.p_hat + 3.0 * (mid.std_err.powi(2) + hi.std_err.powi(2)).sqrt();
            ok &= first && second;
            parts.push(format!("n={dim} t={t}: {:.4e} <= {:.4e} <= {:.4e}", lo.p_hat, mid.p_hat, hi.p_hat));
        }
        parts.push(format!("n={dim} invariants hold on {} paths, {} truncated", batch.outcomes.len(), batch.truncated));
    }
    Verdict::new(ok, parts.join("; "))
}

fn criterion_9() -> Verdict {
    let sets = [
        CarlemanParams::new(lambda1_ball(1).unwrap(), 1.0, 0.5).unwrap(),
        CarlemanParams::new(lambda1_ball(2).unwrap(), 1.0, 0.5).unwrap(),
        CarlemanParams::new(lambda1_ball(2).unwrap(), 2.0, 0.25).unwrap(),
    ];
    let mut ok = true;
    let mut parts = Vec::new();
    for params in &sets {
        let start = x0(params);
        let grid: Vec<f64> = (0..20).map(|i| start * (1.0 + 0.5 * i as f64)).collect();
        let rows = carleman_report(params, &grid).unwrap();
        let required = [CheckId::LogGIdentity, CheckId::HUpper, CheckId::HLower];
        let failures = rows.iter().filter(|r| required.contains(&r.id) && !r.pass).count();
        let lower_rows = rows.iter().filter(|r| r.id == CheckId::HLower).count();
        ok &= failures == 0 && lower_rows == 20;
        let broken = carleman_report(&params.perturbed(2.5), &grid).unwrap();
        let control_fails = broken.iter().any(|r| r.id == CheckId::HLower && !r.pass);
        ok &= control_fails;
        let mild = carleman_report(&params.perturbed(1.1), &grid).unwrap();
        let mild_fails = mild.iter().any(|r| r.id == CheckId::HLower && !r.pass);
        parts.push(format!(
            "lambda1={:.4} A={} alpha={}: {} rows, {failures} failures; K x2.5 control fails={control_fails}; K x1.1 fails={mild_fails}",
            params.lambda1,
            params.a_coef,
            params.alpha,
            rows.len()
        ));
    }
    Verdict::new(ok, parts.join("; "))
}

fn criterion_10() -> Verdict {
    let mut worst: f64 = 0.0;
    for n in 2..=5usize {
        let strip_rate = 2.0 * first_zero(BesselOrder::for_dimension(n, 0.0).unwrap()).unwrap() / PI;
        for a in [0.5, 1.0, 2.0] {
            for alpha in [0.25, 0.5, 0.75] {
                let direct = rate_position(&ParabolaRegion::new(alpha, a, n).unwrap()).unwrap();
                let composed = strip_rate * s_slope(alpha, a);
                worst = worst.max((direct - composed).abs() / direct);
            }
        }
    }
    Verdict::new(worst <= 1e-12, format!("max relative gap {worst:.2e} over 36 cases"))
}

fn main() -> ExitCode {
    let criteria: [(u32, &str, fn() -> Verdict); 10] = [
        (1, "strip harmonic measure by walk on spheres", criterion_1),
        (2, "planar exit-position rate", criterion_2),
        (3, "three-dimensional exit-position rate", criterion_3),
        (4, "planar exit-time rate", criterion_4),
        (5, "exponent discrimination", criterion_5),
        (6, "strip PDE decay", criterion_6),
        (7, "sub-solution sign", criterion_7),
        (8, "position sandwich and path invariants", criterion_8),
        (9, "Carleman inequalities", criterion_9),
        (10, "rate consistency identity", criterion_10),
    ];
    let selected: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = Vec::new();
    for (id, name, check) in criteria {
        if !selected.is_empty() && !selected.contains(&id) {
            continue;
        }
        let clock = Instant::now();
        let verdict = check();
        let status = if verdict.pass { "PASS" } else { "FAIL" };
        println!(
            "criterion {id:>2} {status} [{name}] ({:.1}s) {}",
            clock.elapsed().as_secs_f64(),
            verdict.detail
        );
        if !verdict.pass {
            failed.push(id);
        }
    }
    if failed.is_empty() {
        println!("acceptance: all selected criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: failed criteria {failed:?}");
        ExitCode::FAILURE
    }
}
