//! Penalized least-squares engine: coordinate-descent Lasso, scaled Lasso and
//! K-fold cross-validation of the penalty.

mod cv;
mod lasso;
mod scaled;

pub use cv::{default_lambda_grid, kfold_cv_lambda, CvResult};
pub use lasso::{
    certify, kkt_violation, lambda_max, lasso_objective, soft_threshold, solve_lasso, CrossMoments, GramDesign,
    LassoProblem, LassoSettings, LassoSolution,
};
pub use scaled::{quantile_lambda, scaled_lasso, universal_lambda, ScaledLassoFit, ScaledPenalty, SCALED_MAX_ITERATIONS, SCALED_SIGMA_TOLERANCE};
