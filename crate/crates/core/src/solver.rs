//! The Riemannian Gauss-Newton iteration with full trace recording.
//!
//! Each step solves the linearized least-squares problem in the tangent
//! basis and retracts the result back to the manifold. The method carries no
//! globalization; divergence from a bad start shows up in the trace instead
//! of being damped away.

use crate::cpd::{condition_number, gn_step, gradient, residual, Tensor};
use crate::error::{Error, Result};
use crate::linalg::norm;
use crate::manifold::{retract, ProductPoint};
use itertools::Itertools;

/// Solver configuration.
#[derive(Debug, Clone)]
pub struct SolverConfig {
    pub max_iters: usize,
    pub grad_tol: f64,
    pub step_tol: f64,
    /// When set, every trace record carries the distance to this point.
    pub record_reference: Option<ProductPoint>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            max_iters: 100,
            grad_tol: 1e-12,
            step_tol: 1e-14,
            record_reference: None,
        }
    }
}

/// Why the iteration stopped.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SolverStatus {
    GradientTolerance,
    StepTolerance,
    MaxIterations,
    JacobianSingular,
    RetractionFailed,
}

impl SolverStatus {
    /// Stopping by a tolerance is success; everything else is a failure.
    pub fn is_converged(&self) -> bool {
        matches!(
            self,
            SolverStatus::GradientTolerance | SolverStatus::StepTolerance
        )
    }
}

impl std::fmt::Display for SolverStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            SolverStatus::GradientTolerance => "grad-tol",
            SolverStatus::StepTolerance => "step-tol",
            SolverStatus::MaxIterations => "max-iters",
            SolverStatus::JacobianSingular => "jacobian-singular",
            SolverStatus::RetractionFailed => "retraction-failed",
        };
        f.write_str(s)
    }
}

/// One row of the iteration trace, recorded at iterate x_k before stepping.
#[derive(Debug, Clone)]
pub struct IterationRecord {
    pub iter: usize,
    /// Distance to the reference point, when one was configured.
    pub error: Option<f64>,
    pub residual_norm: f64,
    pub grad_norm: f64,
    /// NaN when the step could not be computed (singular Jacobian).
    pub step_norm: f64,
    pub sigma_min: f64,
    pub kappa: f64,
}

#[derive(Debug, Clone)]
pub struct IterationTrace {
    pub records: Vec<IterationRecord>,
    pub status: SolverStatus,
}

impl IterationTrace {
    /// Error column, for rate fitting; empty if no reference was recorded.
    pub fn errors(&self) -> Vec<f64> {
        self.records.iter().filter_map(|r| r.error).collect()
    }
}

/// Run the Gauss-Newton iteration from `x0` on `target`.
///
/// Stops when the gradient norm falls below `grad_tol`, the step norm falls
/// below `step_tol`, or `max_iters` retractions have been taken. A singular
/// Jacobian or a failed retraction terminates early with the partial trace.
pub fn solve(
    target: &Tensor,
    x0: &ProductPoint,
    cfg: &SolverConfig,
) -> Result<(ProductPoint, IterationTrace)> {
    if cfg.grad_tol <= 0.0 || cfg.step_tol <= 0.0 {
        return Err(Error::invalid("solver tolerances must be positive"));
    }
    if x0.shape() != target.shape() {
        return Err(Error::shape("initial point and target tensor disagree"));
    }
    if let Some(reference) = &cfg.record_reference {
        // Fail fast instead of erroring mid-trace.
        distance(x0, reference)?;
    }

    let mut x = x0.clone();
    let mut records = Vec::new();
    let status;

    let mut k = 0usize;
    loop {
        let f = residual(&x, target)?;
        let residual_norm = norm(&f);
        let grad = gradient(&x, target)?;
        let grad_norm = grad.norm();
        let report = condition_number(&x)?;
        let error = match &cfg.record_reference {
            Some(reference) => Some(distance(&x, reference)?),
            None => None,
        };

        let step = match gn_step(&x, target) {
            Ok(s) => s,
            Err(Error::IllConditionedJacobian { .. }) => {
                records.push(IterationRecord {
                    iter: k,
                    error,
                    residual_norm,
                    grad_norm,
                    step_norm: f64::NAN,
                    sigma_min: report.sigma_min,
                    kappa: report.kappa,
                });
                status = SolverStatus::JacobianSingular;
                break;
            }
            Err(e) => return Err(e),
        };
        let step_norm = step.norm();

        records.push(IterationRecord {
            iter: k,
            error,
            residual_norm,
            grad_norm,
            step_norm,
            sigma_min: report.sigma_min,
            kappa: report.kappa,
        });

        if grad_norm <= cfg.grad_tol {
            status = SolverStatus::GradientTolerance;
            break;
        }
        if step_norm <= cfg.step_tol {
            status = SolverStatus::StepTolerance;
            break;
        }
        if k == cfg.max_iters {
            status = SolverStatus::MaxIterations;
            break;
        }

        match retract(&x, &step) {
            Ok(next) => x = next,
            Err(Error::RetractionFailed { .. }) => {
                status = SolverStatus::RetractionFailed;
                break;
            }
            Err(e) => return Err(e),
        }
        k += 1;
    }

    Ok((x, IterationTrace { records, status }))
}

/// Distance between two decompositions in the concatenated ambient space,
/// minimized over matchings of their terms. The per-term ambient vectors are
/// scale- and sign-gauge free, so no factor canonicalization is needed.
pub fn distance(p: &ProductPoint, q: &ProductPoint) -> Result<f64> {
    if p.rank() != q.rank() {
        return Err(Error::invalid(format!(
            "rank mismatch: {} vs {}",
            p.rank(),
            q.rank()
        )));
    }
    if p.shape() != q.shape() {
        return Err(Error::shape("points live on different tensor spaces"));
    }
    let r = p.rank();
    let mut best = f64::INFINITY;
    for perm in (0..r).permutations(r) {
        let mut acc = 0.0;
        for (i, &pi) in perm.iter().enumerate() {
            acc += p.terms()[i]
                .ambient()
                .iter()
                .zip(q.terms()[pi].ambient())
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>();
        }
        best = best.min(acc.sqrt());
    }
    Ok(best)
}
