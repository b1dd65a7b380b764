//! Experiment orchestration: configs in, metrics and reports out.

mod config;
mod output;

use std::path::Path;

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

pub use config::{CompressorKind, ExperimentConfig};
pub use output::{
    compare_csv, metrics_csv, metrics_path, reports_jsonl, reports_path, summary_csv,
    summary_path, write_file, CompareRow, MetricsRow, ReportRecord, SummaryRow, COMPARE_HEADER,
    METRICS_HEADER, SUMMARY_HEADER,
};

use crate::algo::{run_algorithm, RoundTrace, RunConfig, TraceDetail};
use crate::error::{Error, Result};
use crate::parallel::Exec;
use crate::problems::{Family, ProblemSpec};
use crate::rng::{Purpose, Streams};
use crate::stationarity::{
    classify, iota_from_delta, schedule_for_problem, ParamSchedule, StationarityReport,
};
use crate::vector::ModelVector;

/// Algorithm parameters after applying any requested schedule.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedRun {
    pub config: RunConfig,
    pub schedule: Option<ParamSchedule>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeedRun {
    pub seed: u64,
    pub schedule: Option<ParamSchedule>,
    pub metrics: Vec<MetricsRow>,
    pub reports: Vec<ReportRecord>,
    pub summary: SummaryRow,
}

/// `x₀ = offset·e₁ + scale·z` with `z` drawn from the seed's init stream.
pub fn initial_point(cfg: &ExperimentConfig, seed: u64) -> ModelVector {
    let mut x = ModelVector::zeros(cfg.d);
    if cfg.init_scale != 0.0 {
        let mut rng = Streams::new(seed).stream(Purpose::Init, 0, 0);
        for v in x.iter_mut() {
            let z: f64 = StandardNormal.sample(&mut rng);
            *v = cfg.init_scale * z;
        }
    }
    x[0] += cfg.init_offset;
    x
}

pub fn resolve_run(cfg: &ExperimentConfig, problem: &ProblemSpec, seed: u64) -> Result<ResolvedRun> {
    cfg.validate()?;
    let compressor = cfg.compressor_spec()?;
    let x0 = initial_point(cfg, seed);
    let schedule = match cfg.schedule {
        Some(order) => Some(schedule_for_problem(
            order,
            problem,
            &cfg.noise(),
            &x0,
            compressor.mu(cfg.d)?,
            cfg.epsilon,
            iota_from_delta(cfg.delta)?,
            cfg.kappas(),
            cfg.r.unwrap_or(0.0),
            seed,
        )?),
        None => None,
    };
    let eta = cfg
        .eta
        .or(schedule.map(|s| s.eta))
        .ok_or_else(|| Error::config("eta is not set"))?;
    let rounds = cfg
        .rounds
        .or(schedule.map(|s| s.rounds))
        .ok_or_else(|| Error::config("T is not set"))?;
    let p = cfg.p.or(schedule.map(|s| s.p)).unwrap_or(1);
    let r = cfg.r.or(schedule.map(|s| s.r)).unwrap_or(0.0);
    let config = RunConfig::new(eta, p, r, rounds, compressor, seed)
        .with_split_p(cfg.p_fcc.unwrap_or(p), cfg.p_batch.unwrap_or(p))
        .with_x0(x0)
        .with_detail(TraceDetail::Light);
    config.validate(problem)?;
    Ok(ResolvedRun { config, schedule })
}

/// Turn a trace into metric rows, stationarity reports and a summary.
pub fn evaluate_trace(
    cfg: &ExperimentConfig,
    problem: &ProblemSpec,
    run: &RunConfig,
    trace: &RoundTrace,
) -> Result<(Vec<MetricsRow>, Vec<ReportRecord>, SummaryRow)> {
    let seed = run.seed;
    let last = trace.rounds();
    let mut metrics = Vec::new();
    let mut reports = Vec::new();
    let (mut up, mut down) = (0usize, 0usize);
    let mut bytes_to_threshold = None;
    let mut fosp = 0usize;
    let mut final_f = 0.0;
    let mut final_grad_norm = 0.0;

    for (t, (x, e)) in trace.iterates().zip(trace.mean_errors()).enumerate() {
        let grad_norm = problem.gradient_direct(x)?.norm();
        if grad_norm <= cfg.epsilon {
            fosp += 1;
        }
        if bytes_to_threshold.is_none() && grad_norm <= cfg.threshold {
            bytes_to_threshold = Some(up);
        }
        let recorded = t % cfg.record_stride == 0 || t == last;
        let probe = cfg.lambda_stride > 0 && t % cfg.lambda_stride == 0;
        if recorded || probe {
            let f = problem.objective(x)?;
            let lambda_min = if probe {
                let report = classify(problem, x, cfg.epsilon, problem.rho)?;
                reports.push(ReportRecord { seed, t, report });
                Some(report.lambda_min)
            } else {
                None
            };
            if recorded {
                metrics.push(MetricsRow {
                    t,
                    f,
                    grad_norm,
                    lambda_min,
                    uplink_bytes_cum: up,
                    downlink_bytes_cum: down,
                    e_norm: e.norm(),
                    seed,
                });
            }
            if t == last {
                final_f = f;
                final_grad_norm = grad_norm;
            }
        }
        if let Some(record) = trace.records.get(t) {
            up += record.uplink_bytes;
            down += record.downlink_bytes;
        }
    }

    let summary = SummaryRow {
        seed,
        algo: trace.algorithm.clone(),
        rounds: last,
        eta: run.eta,
        p_fcc: run.p_fcc,
        p_batch: run.p_batch,
        r: run.r,
        final_f,
        final_grad_norm,
        uplink_bytes: up,
        downlink_bytes: down,
        bytes_to_threshold,
        fosp_fraction: fosp as f64 / (last + 1) as f64,
    };
    Ok((metrics, reports, summary))
}

fn run_seed(cfg: &ExperimentConfig, problem: &ProblemSpec, seed: u64) -> Result<SeedRun> {
    let resolved = resolve_run(cfg, problem, seed)?;
    let trace = run_algorithm(cfg.algo, &resolved.config, problem, &cfg.noise())?;
    let (metrics, reports, summary) = evaluate_trace(cfg, problem, &resolved.config, &trace)?;
    Ok(SeedRun {
        seed,
        schedule: resolved.schedule,
        metrics,
        reports,
        summary,
    })
}

/// Run every seed without touching the file system.
pub fn execute(cfg: &ExperimentConfig, exec: Exec) -> Result<Vec<SeedRun>> {
    cfg.validate()?;
    let problem = cfg.build_problem()?;
    exec.map_indexed(cfg.seeds.len(), |i| run_seed(cfg, &problem, cfg.seeds[i]))
        .into_iter()
        .collect()
}

pub fn write_outputs(dir: &Path, runs: &[SeedRun]) -> Result<()> {
    for run in runs {
        write_file(&metrics_path(dir, run.seed), &metrics_csv(&run.metrics))?;
        write_file(&reports_path(dir, run.seed), &reports_jsonl(&run.reports)?)?;
    }
    let summaries: Vec<SummaryRow> = runs.iter().map(|r| r.summary.clone()).collect();
    write_file(&summary_path(dir), &summary_csv(&summaries))
}

/// Run all seeds and write `metrics_<seed>.csv`, `reports_<seed>.jsonl` and
/// `summary.csv` into `cfg.out_dir`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<SeedRun>> {
    let runs = execute(cfg, Exec::default())?;
    write_outputs(&cfg.out_dir, &runs)?;
    Ok(runs)
}

/// Median treating `None` as +∞; `None` when the median itself is infinite.
pub fn median_with_unreached(values: &[Option<f64>]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v: Vec<f64> = values.iter().map(|x| x.unwrap_or(f64::INFINITY)).collect();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    let med = if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    };
    med.is_finite().then_some(med)
}

fn median(values: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<Option<f64>> = values.map(Some).collect();
    median_with_unreached(&v).unwrap_or(f64::NAN)
}

/// One row per config, aligned on a shared problem.
pub fn compare(cfgs: &[ExperimentConfig], exec: Exec) -> Result<Vec<CompareRow>> {
    let first = cfgs
        .first()
        .ok_or_else(|| Error::config("compare needs at least one config"))?;
    if let Some(bad) = cfgs.iter().position(|c| !c.same_problem(first)) {
        return Err(Error::config(format!(
            "config {bad} describes a different problem than config 0"
        )));
    }
    let mut rows = Vec::with_capacity(cfgs.len());
    for (idx, cfg) in cfgs.iter().enumerate() {
        let runs = execute(cfg, exec)?;
        let summaries: Vec<&SummaryRow> = runs.iter().map(|r| &r.summary).collect();
        let per_seed: Vec<Option<usize>> = summaries.iter().map(|s| s.bytes_to_threshold).collect();
        let as_f64: Vec<Option<f64>> = per_seed.iter().map(|b| b.map(|b| b as f64)).collect();
        rows.push(CompareRow {
            label: format!("{idx}:{}", cfg.algo),
            algo: cfg.algo.to_string(),
            seeds: runs.len(),
            median_final_f: median(summaries.iter().map(|s| s.final_f)),
            median_final_grad_norm: median(summaries.iter().map(|s| s.final_grad_norm)),
            median_uplink_bytes: median(summaries.iter().map(|s| s.uplink_bytes as f64)),
            median_bytes_to_threshold: median_with_unreached(&as_f64),
            reached: per_seed.iter().filter(|b| b.is_some()).count(),
            per_seed_bytes_to_threshold: per_seed,
        });
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EscapeStats {
    pub seeds: Vec<u64>,
    /// First `t` with `f(x_t) ≤ f(0) − Δ`, per seed.
    pub escape_times: Vec<Option<usize>>,
    pub fraction: f64,
    pub median_time: Option<f64>,
    pub threshold_f: f64,
}

/// Start each seed at `offset·e₁` on the saddle quartic and record when the
/// objective first drops `escape_delta` below the saddle value.
pub fn saddle_escape_trial(
    cfg: &ExperimentConfig,
    offset: f64,
    seeds: &[u64],
    exec: Exec,
) -> Result<EscapeStats> {
    if cfg.family != Family::SaddleQuartic {
        return Err(Error::config("saddle trials need the saddle_quartic family"));
    }
    let mut cfg = cfg.clone();
    cfg.init_offset = offset;
    cfg.init_scale = 0.0;
    cfg.validate()?;
    let problem = cfg.build_problem()?;
    let threshold_f = problem.objective(&ModelVector::zeros(cfg.d))? - cfg.escape_delta;
    let times = exec
        .map_indexed(seeds.len(), |i| -> Result<Option<usize>> {
            let resolved = resolve_run(&cfg, &problem, seeds[i])?;
            let trace = run_algorithm(cfg.algo, &resolved.config, &problem, &cfg.noise())?;
            for (t, x) in trace.iterates().enumerate() {
                if problem.objective(x)? <= threshold_f {
                    return Ok(Some(t));
                }
            }
            Ok(None)
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let escaped = times.iter().filter(|t| t.is_some()).count();
    let as_f64: Vec<Option<f64>> = times.iter().map(|t| t.map(|t| t as f64)).collect();
    Ok(EscapeStats {
        seeds: seeds.to_vec(),
        fraction: escaped as f64 / seeds.len().max(1) as f64,
        median_time: median_with_unreached(&as_f64),
        escape_times: times,
        threshold_f,
    })
}

/// Schedule for the first configured seed.
pub fn schedule_only(cfg: &ExperimentConfig) -> Result<ParamSchedule> {
    let order = cfg
        .schedule
        .ok_or_else(|| Error::config("no schedule order requested"))?;
    let problem = cfg.build_problem()?;
    let seed = cfg.seeds.first().copied().unwrap_or(0);
    let compressor = cfg.compressor_spec()?;
    schedule_for_problem(
        order,
        &problem,
        &cfg.noise(),
        &initial_point(cfg, seed),
        compressor.mu(cfg.d)?,
        cfg.epsilon,
        iota_from_delta(cfg.delta)?,
        cfg.kappas(),
        cfg.r.unwrap_or(0.0),
        seed,
    )
}

/// Stationarity report at a single point, used by the CLI.
pub fn report_at(cfg: &ExperimentConfig, x: &ModelVector) -> Result<StationarityReport> {
    let problem = cfg.build_problem()?;
    classify(&problem, x, cfg.epsilon, problem.rho)
}
