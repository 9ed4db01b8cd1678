//! Real-data workflow: fit the IV pipeline to `Y`, `X`, `Z` files, test every
//! covariate, refit on the selections and compare R² against two baselines
//! on the raw covariates.

use std::path::{Path, PathBuf};

use hdiv::linalg::{center_vector, standardize};
use hdiv::multiple_testing::{ControlMode, DecisionSet};
use hdiv::two_stage::{fitted_values, refit_ols, IvDataset};
use hdiv::{DenseMatrix, Error, RealVector};

use crate::csvio::{format_float, load_csv, load_vector, write_rows};
use crate::error::{CliError, CliResult};
use crate::pipeline::{run_iv, run_naive, IvRun, NaiveRun, PipelineOptions};

pub const DEFAULT_ALPHA: f64 = 0.1;
pub const DEFAULT_K: f64 = 2.0;
pub const DEFAULT_REFIT_PVALUE: f64 = 0.05;

pub const COEFFICIENT_HEADER: [&str; 9] =
    ["id", "name", "beta_hat", "refitted_beta_hat", "t_hat", "p_value", "fdr_rejected", "fdv_rejected", "flag"];

/// `1 − Σ(y − ŷ)² / Σ(y − ȳ)²`.
pub fn compute_r2(y: &RealVector, fitted: &RealVector) -> hdiv::Result<f64> {
    if y.len() != fitted.len() {
        return Err(Error::DimensionMismatch(format!("{} responses, {} fitted values", y.len(), fitted.len())));
    }
    let (centered, _) = center_vector(y);
    let total = centered.norm_squared();
    if !(total > 0.0) {
        return Err(Error::ZeroVarianceResponse);
    }
    Ok(1.0 - (y - fitted).norm_squared() / total)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalyzeOptions {
    pub alpha: f64,
    pub k: f64,
    /// Per-coordinate p-value cutoff defining the refit selections.
    pub refit_pvalue: f64,
    pub pipeline: PipelineOptions,
}

impl Default for AnalyzeOptions {
    fn default() -> Self {
        AnalyzeOptions { alpha: DEFAULT_ALPHA, k: DEFAULT_K, refit_pvalue: DEFAULT_REFIT_PVALUE, pipeline: PipelineOptions::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RefitScenario {
    /// IV-test selection, refit on predicted covariates.
    IvTest,
    /// Naive-test selection, refit on raw covariates.
    NaiveTest,
    /// Naive Lasso support, refit on raw covariates.
    NaiveLasso,
}

impl RefitScenario {
    pub const ALL: [RefitScenario; 3] = [RefitScenario::IvTest, RefitScenario::NaiveTest, RefitScenario::NaiveLasso];

    pub fn as_str(&self) -> &'static str {
        match self {
            RefitScenario::IvTest => "iv_test_refit",
            RefitScenario::NaiveTest => "naive_test_refit",
            RefitScenario::NaiveLasso => "naive_lasso_refit",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RefitOutcome {
    pub scenario: RefitScenario,
    pub selected: Vec<usize>,
    /// Coefficients and R², or why the refit failed.
    pub fit: Result<(RealVector, f64), String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientRow {
    pub id: usize,
    pub beta_hat: f64,
    pub refitted: Option<f64>,
    pub t_hat: f64,
    pub pvalue: f64,
    pub fdr_rejected: bool,
    pub fdv_rejected: bool,
    pub flag: Option<&'static str>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisReport {
    pub rows: Vec<CoefficientRow>,
    pub fdr: DecisionSet,
    pub fdv: DecisionSet,
    pub refits: Vec<RefitOutcome>,
    pub iv: IvRun,
    pub naive: NaiveRun,
}

fn refit(y: &RealVector, design: &DenseMatrix, scenario: RefitScenario, selected: Vec<usize>) -> RefitOutcome {
    let fit = refit_ols(y, design, &selected)
        .and_then(|coef| {
            let r2 = compute_r2(y, &fitted_values(y, design, &coef))?;
            Ok((coef, r2))
        })
        .map_err(|e| {
            log::warn!("{} refit on {} columns failed: {e}", scenario.as_str(), selected.len());
            e.to_string()
        });
    RefitOutcome { scenario, selected, fit }
}

fn below(pvalues: &RealVector, cutoff: f64) -> Vec<usize> {
    (0..pvalues.len()).filter(|&i| pvalues[i] < cutoff).collect()
}

/// Runs the analysis on a dataset whose instruments are already standardized.
pub fn analyze(dataset: &IvDataset, options: &AnalyzeOptions) -> CliResult<AnalysisReport> {
    if !(options.alpha > 0.0 && options.alpha < 1.0) {
        return Err(CliError::Usage(format!("alpha {} outside (0, 1)", options.alpha)));
    }
    if !(options.refit_pvalue > 0.0 && options.refit_pvalue <= 1.0) {
        return Err(CliError::Usage(format!("refit p-value cutoff {} outside (0, 1]", options.refit_pvalue)));
    }
    let iv = run_iv(dataset, &options.pipeline)?;
    let naive = run_naive(dataset, &options.pipeline)?;
    let t_hat = iv.stats.t_hat.as_slice();
    let fdr = DecisionSet::new(ControlMode::Fdr(options.alpha), t_hat)?;
    let fdv = DecisionSet::new(ControlMode::Fdv(options.k), t_hat)?;

    let y = &dataset.y;
    let lasso_support = (0..naive.fit.beta_hat.len()).filter(|&j| naive.fit.beta_hat[j] != 0.0).collect();
    let refits = vec![
        refit(y, &iv.first.d_hat, RefitScenario::IvTest, below(&iv.stats.pvalues, options.refit_pvalue)),
        refit(y, &dataset.x, RefitScenario::NaiveTest, below(&naive.stats.pvalues, options.refit_pvalue)),
        refit(y, &dataset.x, RefitScenario::NaiveLasso, lasso_support),
    ];

    let refitted = refits[0].fit.as_ref().ok().map(|(coef, _)| coef);
    let rows = (0..dataset.covariates())
        .map(|i| CoefficientRow {
            id: i,
            beta_hat: iv.second.beta_hat[i],
            refitted: refitted.filter(|_| refits[0].selected.contains(&i)).map(|c| c[i]),
            t_hat: t_hat[i],
            pvalue: iv.stats.pvalues[i],
            fdr_rejected: fdr.rejected.contains(&i),
            fdv_rejected: fdv.rejected.contains(&i),
            flag: iv.stats.flags[i].map(|f| f.as_str()),
        })
        .collect();
    Ok(AnalysisReport { rows, fdr, fdv, refits, iv, naive })
}

#[derive(Debug, Clone, PartialEq)]
pub struct InputFiles {
    pub y: PathBuf,
    pub x: PathBuf,
    pub z: PathBuf,
    pub header: bool,
}

/// Loads the three files, checks row counts and standardizes `Z`.
/// Returns the `X` column names when headers are present.
pub fn load_dataset(files: &InputFiles) -> CliResult<(IvDataset, Option<Vec<String>>)> {
    let y = load_vector(&files.y, files.header)?;
    let x = load_csv(&files.x, files.header)?;
    let z = load_csv(&files.z, files.header)?;
    for (path, rows) in [(&files.x, x.data.nrows()), (&files.z, z.data.nrows())] {
        if rows != y.len() {
            return Err(CliError::Data(format!(
                "{} has {rows} data rows but {} has {}",
                path.display(),
                files.y.display(),
                y.len()
            )));
        }
    }
    let (z_std, _) = standardize(&z.data).map_err(|e| match e {
        Error::ZeroVarianceColumn(j) => CliError::Data(format!("{}: column {} is constant", files.z.display(), j + 1)),
        other => other.into(),
    })?;
    Ok((IvDataset::new(y, x.data, z_std)?, x.header))
}

fn flag_cell(b: bool) -> String {
    (b as u8).to_string()
}

/// Writes `coefficients.csv`, `thresholds.csv` and `r2.csv` into `output`.
pub fn write_report(report: &AnalysisReport, names: Option<&[String]>, output: &Path) -> CliResult<()> {
    std::fs::create_dir_all(output).map_err(|e| CliError::io(output, e))?;
    let header: Vec<String> = COEFFICIENT_HEADER.iter().map(|s| s.to_string()).collect();
    let rows: Vec<Vec<String>> = report
        .rows
        .iter()
        .map(|r| {
            vec![
                r.id.to_string(),
                names.and_then(|n| n.get(r.id)).cloned().unwrap_or_default(),
                format_float(r.beta_hat),
                r.refitted.map(format_float).unwrap_or_default(),
                format_float(r.t_hat),
                format_float(r.pvalue),
                flag_cell(r.fdr_rejected),
                flag_cell(r.fdv_rejected),
                r.flag.unwrap_or("").to_string(),
            ]
        })
        .collect();
    write_rows(&output.join("coefficients.csv"), Some(&header), &rows)?;

    let header: Vec<String> = ["mode", "level", "threshold", "rejected"].map(String::from).to_vec();
    let rows: Vec<Vec<String>> = [&report.fdr, &report.fdv]
        .iter()
        .map(|d| vec![d.mode.label().into(), d.mode.level().to_string(), format_float(d.threshold), d.rejected.len().to_string()])
        .collect();
    write_rows(&output.join("thresholds.csv"), Some(&header), &rows)?;

    let header: Vec<String> = ["scenario", "selected", "r2", "message"].map(String::from).to_vec();
    let rows: Vec<Vec<String>> = report
        .refits
        .iter()
        .map(|r| {
            let (r2, message) = match &r.fit {
                Ok((_, r2)) => (format_float(*r2), String::new()),
                Err(m) => (String::new(), m.clone()),
            };
            vec![r.scenario.as_str().into(), r.selected.len().to_string(), r2, message]
        })
        .collect();
    write_rows(&output.join("r2.csv"), Some(&header), &rows)
}

pub fn cmd_analyze(files: &InputFiles, options: &AnalyzeOptions, output: &Path) -> CliResult<AnalysisReport> {
    let (dataset, names) = load_dataset(files)?;
    let report = analyze(&dataset, options)?;
    write_report(&report, names.as_deref(), output)?;
    log::info!(
        "{} covariates: {} FDR-rejected, {} FDV-rejected; results in {}",
        report.rows.len(),
        report.fdr.rejected.len(),
        report.fdv.rejected.len(),
        output.display()
    );
    Ok(report)
}
