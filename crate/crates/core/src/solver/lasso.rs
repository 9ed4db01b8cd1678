use crate::error::{Error, Result};
use crate::linalg::{ensure_finite_matrix, ensure_finite_vector, scaled_gram, DenseMatrix, RealVector};

/// `sign(z) * max(|z| - t, 0)`.
#[inline]
pub fn soft_threshold(z: f64, t: f64) -> f64 {
    debug_assert!(t >= 0.0);
    if z > t {
        z - t
    } else if z < -t {
        z + t
    } else {
        0.0
    }
}

/// Stopping rules for coordinate descent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LassoSettings {
    /// Largest coefficient change allowed in the final sweep.
    pub tolerance: f64,
    pub max_sweeps: usize,
    /// Bound on the KKT residual required before declaring convergence.
    pub kkt_tolerance: f64,
    /// Keep the objective value after every sweep in [`LassoSolution::objective_trace`].
    pub record_objective: bool,
}

impl Default for LassoSettings {
    fn default() -> Self {
        LassoSettings {
            tolerance: 1e-7,
            max_sweeps: 10_000,
            kkt_tolerance: 1e-6,
            record_objective: false,
        }
    }
}

/// `(1/2n)‖y − Xβ‖² + λ‖β‖₁` with no intercept.
#[derive(Debug, Clone, Copy)]
pub struct LassoProblem<'a> {
    response: &'a RealVector,
    design: &'a DenseMatrix,
    lambda: f64,
}

impl<'a> LassoProblem<'a> {
    pub fn new(response: &'a RealVector, design: &'a DenseMatrix, lambda: f64) -> Result<Self> {
        if response.len() != design.nrows() {
            return Err(Error::DimensionMismatch(format!(
                "response has {} entries, design has {} rows",
                response.len(),
                design.nrows()
            )));
        }
        if !(lambda >= 0.0) || !lambda.is_finite() {
            return Err(Error::InvalidArgument(format!("penalty must be finite and nonnegative, got {lambda}")));
        }
        ensure_finite_matrix(design, "design")?;
        ensure_finite_vector(response, "response")?;
        Ok(LassoProblem { response, design, lambda })
    }

    pub fn response(&self) -> &RealVector {
        self.response
    }

    pub fn design(&self) -> &DenseMatrix {
        self.design
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn objective(&self, coefficients: &[f64]) -> f64 {
        lasso_objective(self.response, self.design, self.lambda, coefficients)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LassoSolution {
    pub coefficients: RealVector,
    pub objective: f64,
    pub sweeps: usize,
    pub converged: bool,
    /// Objective after each sweep, only filled when requested in the settings.
    pub objective_trace: Vec<f64>,
}

impl LassoSolution {
    pub fn support(&self) -> Vec<usize> {
        self.coefficients
            .iter()
            .enumerate()
            .filter(|(_, b)| **b != 0.0)
            .map(|(j, _)| j)
            .collect()
    }

    pub fn l1_norm(&self) -> f64 {
        self.coefficients.iter().map(|b| b.abs()).sum()
    }
}

/// Penalized objective evaluated directly from the data.
pub fn lasso_objective(response: &RealVector, design: &DenseMatrix, lambda: f64, coefficients: &[f64]) -> f64 {
    let n = response.len() as f64;
    let beta = RealVector::from_column_slice(coefficients);
    let residual = response - design * &beta;
    residual.norm_squared() / (2.0 * n) + lambda * beta.iter().map(|b| b.abs()).sum::<f64>()
}

/// Smallest penalty whose solution is identically zero: `‖Xᵀy‖∞ / n`.
pub fn lambda_max(response: &RealVector, design: &DenseMatrix) -> f64 {
    let n = response.len() as f64;
    design.tr_mul(response).amax() / n
}

/// Largest violation of the Lasso optimality conditions given the gradient
/// `g = Xᵀ(y − Xβ)/n`. Inactive coordinates need `|g_j| ≤ λ`, active ones
/// `g_j = λ·sign(β_j)`.
pub fn kkt_violation(gradient: &[f64], coefficients: &[f64], lambda: f64) -> f64 {
    gradient
        .iter()
        .zip(coefficients)
        .map(|(&g, &b)| {
            if b == 0.0 {
                (g.abs() - lambda).max(0.0)
            } else {
                (g - lambda * b.signum()).abs()
            }
        })
        .fold(0.0, f64::max)
}

/// Coordinate descent on the residual form; works directly on raw (unstandardized) columns.
pub fn solve_lasso(problem: &LassoProblem<'_>, settings: &LassoSettings, warm_start: Option<&[f64]>) -> Result<LassoSolution> {
    let x = problem.design;
    let y = problem.response;
    let lambda = problem.lambda;
    let n = x.nrows();
    let m = x.ncols();
    let nf = n as f64;

    let mut beta = initial_coefficients(m, warm_start)?;
    let col_norms: Vec<f64> = x.column_iter().map(|c| c.norm_squared() / nf).collect();
    for (b, &norm) in beta.iter_mut().zip(&col_norms) {
        if norm == 0.0 {
            *b = 0.0;
        }
    }
    let mut residual = y - x * RealVector::from_column_slice(&beta);

    let mut trace = Vec::new();
    let mut sweeps = 0;
    let mut converged = false;
    while sweeps < settings.max_sweeps {
        sweeps += 1;
        let mut max_change = 0.0_f64;
        for j in 0..m {
            let norm = col_norms[j];
            if norm == 0.0 {
                continue;
            }
            let col = x.column(j);
            let z = col.dot(&residual) / nf + norm * beta[j];
            let updated = soft_threshold(z, lambda) / norm;
            let delta = updated - beta[j];
            if delta != 0.0 {
                residual.axpy(-delta, &col, 1.0);
                beta[j] = updated;
                max_change = max_change.max(delta.abs());
            }
        }
        if settings.record_objective {
            trace.push(residual.norm_squared() / (2.0 * nf) + lambda * l1(&beta));
        }
        if !residual.iter().all(|r| r.is_finite()) {
            return Err(Error::NonFinite("objective diverged during coordinate descent".into()));
        }
        if max_change <= settings.tolerance {
            // refresh the residual to shed accumulated rounding, then certify
            residual = y - x * RealVector::from_column_slice(&beta);
            let gradient: Vec<f64> = x.tr_mul(&residual).iter().map(|g| g / nf).collect();
            if kkt_violation(&gradient, &beta, lambda) <= settings.kkt_tolerance {
                converged = true;
                break;
            }
        }
    }

    let objective = residual.norm_squared() / (2.0 * nf) + lambda * l1(&beta);
    if !objective.is_finite() {
        return Err(Error::NonFinite("objective is not finite".into()));
    }
    let solution = LassoSolution {
        coefficients: RealVector::from_vec(beta),
        objective,
        sweeps,
        converged,
        objective_trace: trace,
    };
    debug_assert!(!solution.converged || certify(problem, &solution) <= settings.kkt_tolerance);
    Ok(solution)
}

/// KKT residual of a solution recomputed from scratch.
pub fn certify(problem: &LassoProblem<'_>, solution: &LassoSolution) -> f64 {
    let n = problem.design.nrows() as f64;
    let residual = problem.response - problem.design * &solution.coefficients;
    let gradient: Vec<f64> = problem.design.tr_mul(&residual).iter().map(|g| g / n).collect();
    kkt_violation(&gradient, solution.coefficients.as_slice(), problem.lambda)
}

fn initial_coefficients(m: usize, warm_start: Option<&[f64]>) -> Result<Vec<f64>> {
    match warm_start {
        None => Ok(vec![0.0; m]),
        Some(w) if w.len() == m && w.iter().all(|v| v.is_finite()) => Ok(w.to_vec()),
        Some(w) => Err(Error::DimensionMismatch(format!(
            "warm start has {} entries (or non-finite values), expected {m}",
            w.len()
        ))),
    }
}

fn l1(beta: &[f64]) -> f64 {
    beta.iter().map(|b| b.abs()).sum()
}

/// A design whose scaled Gram matrix `XᵀX/n` is computed once and shared by
/// many Lasso fits with different responses or penalties (covariance updates).
///
/// Coordinates listed in `excluded` are pinned at zero, which lets a single
/// Gram matrix serve every leave-one-column-out regression.
#[derive(Debug, Clone)]
pub struct GramDesign<'a> {
    design: &'a DenseMatrix,
    gram: DenseMatrix,
}

/// Cross-products of one response with a [`GramDesign`]: `Xᵀy/n` and `yᵀy/n`.
#[derive(Debug, Clone)]
pub struct CrossMoments {
    pub xty: Vec<f64>,
    pub yty: f64,
}

impl<'a> GramDesign<'a> {
    pub fn new(design: &'a DenseMatrix) -> Result<Self> {
        ensure_finite_matrix(design, "design")?;
        Ok(GramDesign { design, gram: scaled_gram(design) })
    }

    pub fn design(&self) -> &DenseMatrix {
        self.design
    }

    pub fn gram(&self) -> &DenseMatrix {
        &self.gram
    }

    pub fn nobs(&self) -> usize {
        self.design.nrows()
    }

    pub fn nvars(&self) -> usize {
        self.design.ncols()
    }

    pub fn moments(&self, response: &RealVector) -> Result<CrossMoments> {
        if response.len() != self.nobs() {
            return Err(Error::DimensionMismatch(format!(
                "response has {} entries, design has {} rows",
                response.len(),
                self.nobs()
            )));
        }
        ensure_finite_vector(response, "response")?;
        let n = self.nobs() as f64;
        Ok(CrossMoments {
            xty: self.design.tr_mul(response).iter().map(|v| v / n).collect(),
            yty: response.norm_squared() / n,
        })
    }

    /// Moments of design column `column` against the design itself.
    pub fn column_moments(&self, column: usize) -> CrossMoments {
        CrossMoments {
            xty: self.gram.column(column).iter().copied().collect(),
            yty: self.gram[(column, column)],
        }
    }

    pub fn solve(
        &self,
        moments: &CrossMoments,
        lambda: f64,
        settings: &LassoSettings,
        warm_start: Option<&[f64]>,
        excluded: Option<usize>,
    ) -> Result<LassoSolution> {
        let mut beta = initial_coefficients(self.nvars(), warm_start)?;
        let (sweeps, converged, trace, gradient) =
            covariance_descent(&self.gram, &moments.xty, moments.yty, lambda, &mut beta, settings, excluded)?;
        let objective = 0.5 * moments.yty - 0.5 * beta.iter().zip(moments.xty.iter().zip(&gradient)).map(|(b, (c, g))| b * (c + g)).sum::<f64>()
            + lambda * l1(&beta);
        if !objective.is_finite() {
            return Err(Error::NonFinite("objective is not finite".into()));
        }
        Ok(LassoSolution {
            coefficients: RealVector::from_vec(beta),
            objective,
            sweeps,
            converged,
            objective_trace: trace,
        })
    }
}

/// Covariance-update coordinate descent: keeps `g = Xᵀy/n − Gβ` current so
/// each coordinate update costs O(1) plus O(m) when the coefficient moves.
///
/// After a full sweep that moved something, the nonzero coordinates are
/// cycled on their own (with the Gram block copied out, so an update costs
/// O(|active|)) until they settle; convergence is only declared after a full
/// sweep.
fn covariance_descent(
    gram: &DenseMatrix,
    xty: &[f64],
    yty: f64,
    lambda: f64,
    beta: &mut [f64],
    settings: &LassoSettings,
    excluded: Option<usize>,
) -> Result<(usize, bool, Vec<f64>, Vec<f64>)> {
    let m = gram.ncols();
    if xty.len() != m || beta.len() != m {
        return Err(Error::DimensionMismatch(format!("cross-product length {} vs {m} variables", xty.len())));
    }
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::InvalidArgument(format!("penalty must be finite and nonnegative, got {lambda}")));
    }
    let skip = |j: usize| excluded == Some(j) || gram[(j, j)] <= 0.0;
    for j in 0..m {
        if skip(j) {
            beta[j] = 0.0;
        }
    }
    let refresh = |beta: &[f64]| -> Vec<f64> {
        let mut g = xty.to_vec();
        for (k, &b) in beta.iter().enumerate() {
            if b != 0.0 {
                for (gi, gk) in g.iter_mut().zip(gram.column(k).iter()) {
                    *gi -= gk * b;
                }
            }
        }
        g
    };
    // only nonzero coefficients contribute, so a gradient restricted to a
    // superset of the support is enough
    let objective = |beta: &[f64], idx: &mut dyn Iterator<Item = (usize, f64)>| -> f64 {
        let fit: f64 = idx.map(|(j, gj)| beta[j] * (xty[j] + gj)).sum();
        0.5 * yty - 0.5 * fit + lambda * l1(beta)
    };

    let mut g = refresh(beta);
    let mut trace = Vec::new();
    let mut sweeps = 0;
    let mut converged = false;
    while sweeps < settings.max_sweeps {
        sweeps += 1;
        let mut max_change = 0.0_f64;
        for j in 0..m {
            if skip(j) {
                continue;
            }
            let gjj = gram[(j, j)];
            let z = g[j] + gjj * beta[j];
            let updated = soft_threshold(z, lambda) / gjj;
            let delta = updated - beta[j];
            if delta != 0.0 {
                for (gi, gk) in g.iter_mut().zip(gram.column(j).iter()) {
                    *gi -= gk * delta;
                }
                beta[j] = updated;
                max_change = max_change.max(delta.abs());
            }
        }
        if settings.record_objective {
            trace.push(objective(beta, &mut g.iter().copied().enumerate()));
        }
        if !max_change.is_finite() {
            return Err(Error::NonFinite("objective diverged during coordinate descent".into()));
        }
        if max_change <= settings.tolerance {
            g = refresh(beta);
            let active: Vec<(f64, f64)> = (0..m).filter(|&j| !skip(j)).map(|j| (g[j], beta[j])).collect();
            let (gs, bs): (Vec<f64>, Vec<f64>) = active.into_iter().unzip();
            if kkt_violation(&gs, &bs, lambda) <= settings.kkt_tolerance {
                converged = true;
                break;
            }
            continue;
        }

        let active: Vec<usize> = (0..m).filter(|&j| beta[j] != 0.0).collect();
        let k = active.len();
        let block: Vec<f64> = active.iter().flat_map(|&c| active.iter().map(move |&r| gram[(r, c)])).collect();
        let mut local: Vec<f64> = active.iter().map(|&j| g[j]).collect();
        let mut moved = vec![0.0; k];
        while sweeps < settings.max_sweeps {
            sweeps += 1;
            let mut max_change = 0.0_f64;
            for a in 0..k {
                let j = active[a];
                let col = &block[a * k..(a + 1) * k];
                let z = local[a] + col[a] * beta[j];
                let updated = soft_threshold(z, lambda) / col[a];
                let delta = updated - beta[j];
                if delta != 0.0 {
                    for (gi, gk) in local.iter_mut().zip(col) {
                        *gi -= gk * delta;
                    }
                    beta[j] = updated;
                    moved[a] += delta;
                    max_change = max_change.max(delta.abs());
                }
            }
            if settings.record_objective {
                trace.push(objective(beta, &mut active.iter().copied().zip(local.iter().copied())));
            }
            if !max_change.is_finite() {
                return Err(Error::NonFinite("objective diverged during coordinate descent".into()));
            }
            if max_change <= settings.tolerance {
                break;
            }
        }
        for (a, &j) in active.iter().enumerate() {
            if moved[a] != 0.0 {
                for (gi, gk) in g.iter_mut().zip(gram.column(j).iter()) {
                    *gi -= gk * moved[a];
                }
            }
        }
    }
    Ok((sweeps, converged, trace, g))
}
