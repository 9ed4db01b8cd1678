//! The two analysis pipelines run on every dataset: the instrumented
//! two-stage fit and the naive single-stage fit on raw covariates.

use hdiv::inference::{run_inference, run_inference_naive, InferenceOptions, TestStatistics};
use hdiv::multiple_testing::{ControlMode, DecisionSet};
use hdiv::two_stage::{fit_first_stage, fit_naive, fit_second_stage, CvGrid, FirstStageFit, IvDataset, SecondStageFit, Tuning};
use hdiv::Result;

use crate::config::StageTuning;

pub const CV_GRID_LEN: usize = 50;
pub const CV_GRID_RATIO: f64 = 0.01;

impl StageTuning {
    /// CV fold assignment is seeded so a replication is reproducible.
    pub fn tuning(&self, seed: u64) -> Tuning {
        match *self {
            StageTuning::Scaled(p) => Tuning::Scaled(p),
            StageTuning::CrossValidation { folds } => Tuning::CrossValidation {
                folds,
                grid: CvGrid::Relative { len: CV_GRID_LEN, ratio: CV_GRID_RATIO },
                seed,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOptions {
    pub first_stage: Tuning,
    pub second_stage: Tuning,
    pub inference: InferenceOptions,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        PipelineOptions {
            first_stage: Tuning::default(),
            second_stage: Tuning::default(),
            inference: InferenceOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IvRun {
    pub first: FirstStageFit,
    pub second: SecondStageFit,
    pub stats: TestStatistics,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NaiveRun {
    pub fit: SecondStageFit,
    pub stats: TestStatistics,
}

/// Expects instruments already standardized.
pub fn run_iv(dataset: &IvDataset, options: &PipelineOptions) -> Result<IvRun> {
    let first = fit_first_stage(dataset, &options.first_stage)?;
    let second = fit_second_stage(&dataset.y, &first.d_hat, &options.second_stage)?;
    let stats = run_inference(&dataset.y, &first.d_hat, &second.beta_hat, &options.inference)?;
    Ok(IvRun { first, second, stats })
}

pub fn run_naive(dataset: &IvDataset, options: &PipelineOptions) -> Result<NaiveRun> {
    let fit = fit_naive(&dataset.y, &dataset.x, &options.second_stage)?;
    let stats = run_inference_naive(&dataset.y, &dataset.x, &fit.beta_hat, &options.inference)?;
    Ok(NaiveRun { fit, stats })
}

/// FDR modes for every α, then FDV modes for every k.
pub fn control_modes(alphas: &[f64], ks: &[f64]) -> Vec<ControlMode> {
    alphas.iter().map(|&a| ControlMode::Fdr(a)).chain(ks.iter().map(|&k| ControlMode::Fdv(k))).collect()
}

pub fn decisions(t_hat: &[f64], modes: &[ControlMode]) -> Result<Vec<DecisionSet>> {
    modes.iter().map(|&m| DecisionSet::new(m, t_hat)).collect()
}
