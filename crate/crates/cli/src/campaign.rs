//! Monte-Carlo campaigns: replications of every scenario run on a worker
//! pool, scored against the generating truth, and aggregated.
//!
//! Replication `r` of scenario `s` (both 0-based) draws its dataset from seed
//! `mix_seed(campaign_seed, s, r)`. With `fixed_parameters` the coefficients
//! and error covariance come from `mix_seed(campaign_seed, s, u64::MAX)`
//! instead. Both methods score the same dataset.

use std::path::Path;

use rayon::prelude::*;

use hdiv::multiple_testing::{score, ControlMode, ErrorMetrics};
use hdiv::simgen::{gen_dataset, mix_seed};
use hdiv::two_stage::IvDataset;

use crate::config::{CampaignConfig, Method, Scenario};
use crate::csvio::{format_float, write_rows};
use crate::error::{CliError, CliResult};
use crate::pipeline::{control_modes, decisions, run_iv, run_naive, PipelineOptions};

pub const PARAMETER_REPLICATION: u64 = u64::MAX;
const STREAM_CV_FIRST: u64 = 6;
const STREAM_CV_SECOND: u64 = 7;

/// A campaign fails when more than this share of (replication, method) runs fail.
pub const FAILURE_LIMIT: f64 = 0.05;

pub const SUMMARY_HEADER: [&str; 9] =
    ["scenario", "method", "mode", "level", "reps_ok", "reps_failed", "mean_error", "power_mean", "power_sd"];

pub const RAW_HEADER: [&str; 14] = [
    "scenario",
    "replication",
    "seed",
    "method",
    "mode",
    "level",
    "status",
    "threshold",
    "rejected",
    "false_discoveries",
    "true_discoveries",
    "error",
    "power",
    "message",
];

#[derive(Debug, Clone, PartialEq)]
pub struct LevelOutcome {
    pub mode: ControlMode,
    pub threshold: f64,
    pub metrics: ErrorMetrics,
}

impl LevelOutcome {
    /// FDP in FDR mode, false-discovery count in FDV mode.
    pub fn error(&self) -> f64 {
        match self.mode {
            ControlMode::Fdr(_) => self.metrics.fdp,
            ControlMode::Fdv(_) => self.metrics.false_discoveries as f64,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MethodOutcome {
    pub t_hat: Vec<f64>,
    pub levels: Vec<LevelOutcome>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Replication {
    pub scenario: usize,
    pub index: usize,
    pub seed: u64,
    /// Null flag per coordinate (empty when the dataset could not be drawn).
    pub null: Vec<bool>,
    /// Coordinates whose error is correlated with the response error.
    pub confounded: Vec<usize>,
    pub methods: Vec<(Method, Result<MethodOutcome, String>)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CampaignResult {
    pub replications: Vec<Replication>,
}

impl CampaignResult {
    pub fn failures(&self) -> (usize, usize) {
        let runs = self.replications.iter().flat_map(|r| &r.methods);
        runs.fold((0, 0), |(failed, total), (_, out)| (failed + out.is_err() as usize, total + 1))
    }

    /// `Campaign` error when failures exceed the limit.
    pub fn check_failures(&self) -> CliResult<()> {
        let (failed, total) = self.failures();
        if failed as f64 > FAILURE_LIMIT * total as f64 {
            Err(CliError::Campaign { failed, total })
        } else {
            Ok(())
        }
    }
}

pub fn replication_seed(campaign_seed: u64, scenario: usize, replication: usize) -> u64 {
    mix_seed(campaign_seed, scenario as u64, replication as u64)
}

pub fn pipeline_options(scenario: &Scenario, seed: u64) -> PipelineOptions {
    PipelineOptions {
        first_stage: scenario.first_stage.tuning(mix_seed(seed, STREAM_CV_FIRST, 0)),
        second_stage: scenario.second_stage.tuning(mix_seed(seed, STREAM_CV_SECOND, 0)),
        ..PipelineOptions::default()
    }
}

fn score_method(dataset: &IvDataset, method: Method, scenario: &Scenario, options: &PipelineOptions, null: &[bool]) -> hdiv::Result<MethodOutcome> {
    let t_hat = match method {
        Method::Iv => run_iv(dataset, options)?.stats.t_hat,
        Method::Naive => run_naive(dataset, options)?.stats.t_hat,
    };
    let truth = hdiv::multiple_testing::TruthLabels::from_null_flags(null.to_vec());
    let modes = control_modes(&scenario.alphas, &scenario.ks);
    let levels = decisions(t_hat.as_slice(), &modes)?
        .into_iter()
        .map(|d| Ok(LevelOutcome { mode: d.mode, threshold: d.threshold, metrics: score(&d, &truth)? }))
        .collect::<hdiv::Result<_>>()?;
    Ok(MethodOutcome { t_hat: t_hat.as_slice().to_vec(), levels })
}

pub fn run_replication(config: &CampaignConfig, scenario_index: usize, index: usize) -> Replication {
    let scenario = &config.scenarios[scenario_index];
    let seed = replication_seed(config.seed, scenario_index, index);
    let mut sim = scenario.sim.clone();
    sim.seed = seed;
    if scenario.fixed_parameters {
        sim.parameter_seed = Some(mix_seed(config.seed, scenario_index as u64, PARAMETER_REPLICATION));
    }
    let fail_all = |message: String| Replication {
        scenario: scenario_index,
        index,
        seed,
        null: Vec::new(),
        confounded: Vec::new(),
        methods: config.methods.iter().map(|&m| (m, Err(message.clone()))).collect(),
    };
    let (dataset, truth) = match gen_dataset(&sim) {
        Ok(d) => d,
        Err(e) => {
            log::warn!("{} replication {index}: data generation failed: {e}", scenario.name);
            return fail_all(format!("data generation: {e}"));
        }
    };
    let null: Vec<bool> = (0..truth.labels.len()).map(|i| truth.labels.is_null(i)).collect();
    let options = pipeline_options(scenario, seed);
    let methods = config
        .methods
        .iter()
        .map(|&m| {
            let out = score_method(&dataset, m, scenario, &options, &null).map_err(|e| {
                log::warn!("{} replication {index} ({}): {e}", scenario.name, m.as_str());
                e.to_string()
            });
            (m, out)
        })
        .collect();
    Replication { scenario: scenario_index, index, seed, null, confounded: truth.confounded, methods }
}

/// Runs every replication on `workers` threads. Results come back in
/// (scenario, replication) order whatever the scheduling.
pub fn run_campaign(config: &CampaignConfig, workers: usize) -> CliResult<CampaignResult> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| CliError::Usage(format!("cannot start {workers} workers: {e}")))?;
    let jobs: Vec<(usize, usize)> = config
        .scenarios
        .iter()
        .enumerate()
        .flat_map(|(s, sc)| (0..sc.replications).map(move |r| (s, r)))
        .collect();
    log::info!("running {} replications on {} workers", jobs.len(), workers.max(1));
    let replications = pool.install(|| jobs.par_iter().map(|&(s, r)| run_replication(config, s, r)).collect());
    Ok(CampaignResult { replications })
}

/// One per-replication, per-method, per-level line of the raw file.
#[derive(Debug, Clone, PartialEq)]
pub struct RawRow {
    pub scenario: String,
    pub replication: usize,
    pub seed: u64,
    pub method: Method,
    pub mode: ControlMode,
    pub outcome: Result<LevelOutcome, String>,
}

pub fn raw_rows(config: &CampaignConfig, result: &CampaignResult) -> Vec<RawRow> {
    let mut rows = Vec::new();
    for rep in &result.replications {
        let scenario = &config.scenarios[rep.scenario];
        let modes = control_modes(&scenario.alphas, &scenario.ks);
        for (method, out) in &rep.methods {
            for (k, &mode) in modes.iter().enumerate() {
                rows.push(RawRow {
                    scenario: scenario.name.clone(),
                    replication: rep.index,
                    seed: rep.seed,
                    method: *method,
                    mode,
                    outcome: out.as_ref().map(|o| o.levels[k].clone()).map_err(Clone::clone),
                });
            }
        }
    }
    rows
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub scenario: String,
    pub method: Method,
    pub mode: ControlMode,
    pub reps_ok: usize,
    pub reps_failed: usize,
    pub mean_error: f64,
    pub power_mean: f64,
    /// Sample standard deviation (divisor R − 1); 0 when R = 1.
    pub power_sd: f64,
}

fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n;
    if values.len() == 1 {
        return (mean, 0.0);
    }
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    (mean, (ss / (n - 1.0)).sqrt())
}

/// Aggregates raw rows per (scenario, method, mode), in first-seen order.
/// Failed replications are counted and left out of the means.
pub fn summarize(rows: &[RawRow]) -> Vec<SummaryRow> {
    let mut keys: Vec<(&str, Method, ControlMode)> = Vec::new();
    for row in rows {
        let key = (row.scenario.as_str(), row.method, row.mode);
        if !keys.contains(&key) {
            keys.push(key);
        }
    }
    keys.into_iter()
        .map(|(scenario, method, mode)| {
            let group: Vec<&RawRow> =
                rows.iter().filter(|r| r.scenario == scenario && r.method == method && r.mode == mode).collect();
            let ok: Vec<&LevelOutcome> = group.iter().filter_map(|r| r.outcome.as_ref().ok()).collect();
            let errors: Vec<f64> = ok.iter().map(|o| o.error()).collect();
            let powers: Vec<f64> = ok.iter().map(|o| o.metrics.power).collect();
            let (power_mean, power_sd) = mean_sd(&powers);
            SummaryRow {
                scenario: scenario.to_string(),
                method,
                mode,
                reps_ok: ok.len(),
                reps_failed: group.len() - ok.len(),
                mean_error: mean_sd(&errors).0,
                power_mean,
                power_sd,
            }
        })
        .collect()
}

fn level_text(mode: ControlMode) -> String {
    mode.level().to_string()
}

fn float_cell(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        format_float(v)
    }
}

pub fn write_summary(path: &Path, summary: &[SummaryRow]) -> CliResult<()> {
    let header: Vec<String> = SUMMARY_HEADER.iter().map(|s| s.to_string()).collect();
    let rows: Vec<Vec<String>> = summary
        .iter()
        .map(|s| {
            vec![
                s.scenario.clone(),
                s.method.as_str().to_string(),
                s.mode.label().to_string(),
                level_text(s.mode),
                s.reps_ok.to_string(),
                s.reps_failed.to_string(),
                float_cell(s.mean_error),
                float_cell(s.power_mean),
                float_cell(s.power_sd),
            ]
        })
        .collect();
    write_rows(path, Some(&header), &rows)
}

pub fn write_raw(path: &Path, raw: &[RawRow]) -> CliResult<()> {
    let header: Vec<String> = RAW_HEADER.iter().map(|s| s.to_string()).collect();
    let rows: Vec<Vec<String>> = raw
        .iter()
        .map(|r| {
            let mut cells = vec![
                r.scenario.clone(),
                r.replication.to_string(),
                r.seed.to_string(),
                r.method.as_str().to_string(),
                r.mode.label().to_string(),
                level_text(r.mode),
            ];
            match &r.outcome {
                Ok(o) => cells.extend([
                    "ok".to_string(),
                    format_float(o.threshold),
                    o.metrics.rejected.to_string(),
                    o.metrics.false_discoveries.to_string(),
                    o.metrics.true_discoveries.to_string(),
                    format_float(o.error()),
                    format_float(o.metrics.power),
                    String::new(),
                ]),
                Err(message) => {
                    cells.push("failed".to_string());
                    cells.extend(std::iter::repeat_n(String::new(), 6));
                    cells.push(message.clone());
                }
            }
            cells
        })
        .collect();
    write_rows(path, Some(&header), &rows)
}

/// Runs the campaign and writes `summary.csv` and `raw.csv` into `output`.
/// Outputs are written even when the failure limit is exceeded.
pub fn cmd_simulate(config: &CampaignConfig, workers: usize, output: &Path) -> CliResult<Vec<SummaryRow>> {
    std::fs::create_dir_all(output).map_err(|e| CliError::io(output, e))?;
    let result = run_campaign(config, workers)?;
    let raw = raw_rows(config, &result);
    let summary = summarize(&raw);
    write_raw(&output.join("raw.csv"), &raw)?;
    write_summary(&output.join("summary.csv"), &summary)?;
    let (failed, total) = result.failures();
    log::info!("{} runs, {failed} failed; results in {}", total, output.display());
    result.check_failures()?;
    Ok(summary)
}
