//! Empirical verification of the quantities that drive the local convergence
//! analysis: the Jacobian Lipschitz constant, pseudoinverse and singular-value
//! perturbation gaps (Wedin, Weyl), second-order Taylor remainders, the
//! heuristic rate constant, and convergence-order fitting on solver traces.
//!
//! The perturbation bounds compare Jacobians of different base points, which
//! only makes sense in a common frame: every matrix here is the derivative
//! composed with the tangent projection, expressed in ambient coordinates.
//! For a product of rank-1 manifolds that matrix has the block form
//! `[U_1 U_1^T | ... | U_r U_r^T]` and its pseudoinverse stacks
//! `U_i * pinv([U_1 ... U_r])` vertically; both have the same singular values
//! as the tangent-basis Jacobian.

use crate::cpd::{jacobian, phi};
use crate::error::{Error, Result};
use crate::linalg::{compact_svd, norm, spectral_norm, Matrix};
use crate::manifold::{ambient_distance, retract, ProductPoint};
use crate::rng::ExperimentRng;
use crate::solver::IterationTrace;

/// Golden-ratio style constant of the pseudoinverse perturbation bound.
pub const WEDIN_CONSTANT: f64 = 1.618033988749895; // (1 + sqrt(5)) / 2

/// Sampling radius for the Lipschitz-constant estimate in [`estimate_bounds`].
pub const LIPSCHITZ_RADIUS: f64 = 1e-3;

/// Sample count for the Lipschitz-constant estimate in [`estimate_bounds`].
pub const LIPSCHITZ_SAMPLES: usize = 100;

/// Error magnitude below which distances are dominated by roundoff; fits
/// must ignore anything smaller.
pub fn error_floor(x_star: &ProductPoint) -> f64 {
    100.0 * f64::EPSILON * x_star.ambient_norm()
}

/// Bundle of estimated constants for rate reporting.
#[derive(Debug, Clone)]
pub struct BoundEstimates {
    pub c_hat: f64,
    pub gamma_f_hat: f64,
    pub gamma_i_hat: f64,
    pub gamma_r_hat: f64,
    pub e_hat: f64,
    pub theoretical_linear_rate: f64,
    pub alpha: f64,
}

/// Estimate every rate constant around a limit point: the Lipschitz constant
/// of the projected Jacobian (sampled, radius 1e-3), the second-order
/// constants of the residual map, the identity embedding and the retraction
/// (max remainder / t^2 over sampled directions and steps), the heuristic
/// constant from the first iterate, and the leading linear-rate constant.
pub fn estimate_bounds(
    x_star: &ProductPoint,
    x1: &ProductPoint,
    residual_star: f64,
    alpha: f64,
    seed: u64,
) -> Result<BoundEstimates> {
    if !(0.0 < alpha && alpha < 1.0) {
        return Err(Error::invalid("alpha must lie in (0, 1)"));
    }
    let c_hat = estimate_lipschitz_c(x_star, LIPSCHITZ_RADIUS, LIPSCHITZ_SAMPLES, seed)?;

    let basis = x_star.tangent_basis()?;
    let mut rng = ExperimentRng::seed_from_u64(seed ^ 0x5bd1_e995);
    let steps = [1e-2, 1e-3, 1e-4];
    let mut gamma_f_hat = 0.0f64;
    let mut gamma_i_hat = 0.0f64;
    let mut gamma_r_hat = 0.0f64;
    for _ in 0..20 {
        let mut coords = rng.normal_vec(basis.dim());
        let nc = norm(&coords);
        for c in coords.iter_mut() {
            *c /= nc;
        }
        let eta = basis.vector_from_coords(coords)?;
        for &t in &steps {
            let y = retract(x_star, &eta.scaled(t))?;
            gamma_f_hat = gamma_f_hat.max(taylor_remainder(TaylorMap::Phi, x_star, &y)? / (t * t));
            gamma_i_hat =
                gamma_i_hat.max(taylor_remainder(TaylorMap::Identity, x_star, &y)? / (t * t));
            gamma_r_hat =
                gamma_r_hat.max(crate::manifold::retraction_defect(x_star, &eta, t)? / (t * t));
        }
    }

    let e_hat = heuristic_rate_constant(x1, x_star).unwrap_or(f64::NAN);
    let kappa = 1.0 / compact_svd(&jacobian(x_star)?)?
        .singular_values
        .last()
        .copied()
        .expect("nonempty spectrum");
    let theoretical = theoretical_linear_rate(kappa, c_hat, residual_star, alpha)?;
    Ok(BoundEstimates {
        c_hat,
        gamma_f_hat,
        gamma_i_hat,
        gamma_r_hat,
        e_hat,
        theoretical_linear_rate: theoretical,
        alpha,
    })
}

/// Derivative of the residual map composed with the orthogonal tangent
/// projection, as an `N x rN` matrix in ambient coordinates.
pub fn projected_jacobian(p: &ProductPoint) -> Result<Matrix<f64>> {
    let basis = p.tangent_basis()?;
    let n = p.shape().ambient_dim();
    let r = p.rank();
    let mut m = Matrix::zeros(n, r * n);
    for i in 0..r {
        let u = basis.block(i);
        let uut = u.matmul(&u.transpose());
        for c in 0..n {
            m.col_mut(i * n + c).copy_from_slice(uut.col(c));
        }
    }
    Ok(m)
}

/// Moore-Penrose pseudoinverse of the projected Jacobian, `rN x N`.
pub fn projected_pseudoinverse(p: &ProductPoint) -> Result<Matrix<f64>> {
    let u = jacobian(p)?;
    let svd = compact_svd(&u)?;
    let sigma_max = svd.singular_values[0];
    let rank_tol = (u.rows().max(u.cols())) as f64 * f64::EPSILON * sigma_max;
    let n = p.shape().ambient_dim();
    let r = p.rank();
    let sd = p.shape().segre_dim();

    // pinv(U) = V diag(1/sigma) left^T, assembled column by column.
    let mut pinv_u = Matrix::zeros(u.cols(), n);
    for (j, &sigma) in svd.singular_values.iter().enumerate() {
        if sigma <= rank_tol {
            return Err(Error::IllConditionedJacobian {
                sigma_min: sigma,
                tolerance: rank_tol,
            });
        }
        let vcol = svd.right.col(j);
        let ucol = svd.left.col(j);
        for (c, &uc) in ucol.iter().enumerate().take(n) {
            let w = uc / sigma;
            let col = pinv_u.col_mut(c);
            for i in 0..u.cols() {
                col[i] += w * vcol[i];
            }
        }
    }

    // Stack U_i * rows(i) of pinv(U) vertically.
    let basis = p.tangent_basis()?;
    let mut out = Matrix::zeros(r * n, n);
    for i in 0..r {
        let block = basis.block(i);
        for c in 0..n {
            let coef: Vec<f64> = (0..sd).map(|k| pinv_u[(i * sd + k, c)]).collect();
            let contrib = block.matvec(&coef);
            let col = out.col_mut(c);
            for (row, v) in contrib.iter().enumerate() {
                col[i * n + row] = *v;
            }
        }
    }
    Ok(out)
}

/// Sampled estimate of the Lipschitz constant of the projected Jacobian over
/// a geodesic ball of the given radius around `x_star`. Samples are retracted
/// random tangent vectors; the same seed reproduces the same sample stream,
/// and a longer stream extends a shorter one.
pub fn estimate_lipschitz_c(
    x_star: &ProductPoint,
    radius: f64,
    num_samples: usize,
    seed: u64,
) -> Result<f64> {
    if num_samples == 0 {
        return Err(Error::invalid("need at least one sample"));
    }
    if radius <= 0.0 {
        return Err(Error::invalid("radius must be positive"));
    }
    let basis = x_star.tangent_basis()?;
    let reference = projected_jacobian(x_star)?;
    let mut rng = ExperimentRng::seed_from_u64(seed);
    let mut best = 0.0f64;
    for _ in 0..num_samples {
        let mut coords = rng.normal_vec(basis.dim());
        let scale = radius * rng.uniform() / norm(&coords);
        for c in coords.iter_mut() {
            *c *= scale;
        }
        let x = retract(x_star, &basis.vector_from_coords(coords)?)?;
        let dist = ambient_distance(x_star, &x)?;
        if dist == 0.0 {
            continue;
        }
        let gap = spectral_norm(&reference.sub(&projected_jacobian(&x)?))?;
        best = best.max(gap / dist);
    }
    Ok(best)
}

/// Pseudoinverse perturbation gap: left side `||J^+ - J_star^+||` and the
/// bound `(1+sqrt(5))/2 * ||J^+|| * ||J_star^+|| * ||J - J_star||`.
pub fn wedin_gap(x: &ProductPoint, x_star: &ProductPoint) -> Result<(f64, f64)> {
    let p = projected_pseudoinverse(x)?;
    let p_star = projected_pseudoinverse(x_star)?;
    let lhs = spectral_norm(&p.sub(&p_star))?;
    let j_gap = spectral_norm(&projected_jacobian(x)?.sub(&projected_jacobian(x_star)?))?;
    let rhs = WEDIN_CONSTANT * spectral_norm(&p)? * spectral_norm(&p_star)? * j_gap;
    Ok((lhs, rhs))
}

/// Singular-value perturbation gap: `|sigma_min(J_star) - sigma_min(J)|`
/// against `||J_star - J||` in the spectral norm.
pub fn weyl_check(x: &ProductPoint, x_star: &ProductPoint) -> Result<(f64, f64)> {
    let m = x.tangent_basis()?.dim();
    let sv = compact_svd(&projected_jacobian(x)?)?.singular_values;
    let sv_star = compact_svd(&projected_jacobian(x_star)?)?.singular_values;
    let lhs = (sv[m - 1] - sv_star[m - 1]).abs();
    let rhs = spectral_norm(&projected_jacobian(x)?.sub(&projected_jacobian(x_star)?))?;
    Ok((lhs, rhs))
}

/// Matrix-level variant of the singular-value gap, for direct perturbation
/// probes: `(|sigma_min(a) - sigma_min(b)|, ||a - b||_2)`.
pub fn weyl_gap_matrices(a: &Matrix<f64>, b: &Matrix<f64>) -> Result<(f64, f64)> {
    let sa = compact_svd(a)?.singular_values;
    let sb = compact_svd(b)?.singular_values;
    let lhs = (sa.last().unwrap() - sb.last().unwrap()).abs();
    let rhs = spectral_norm(&a.sub(b))?;
    Ok((lhs, rhs))
}

/// Which map a Taylor remainder probes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TaylorMap {
    /// The residual map: remainder of `F(y) - F(x) - dF_x P (y - x)`.
    Phi,
    /// The identity embedding: remainder of `(y - x) - P (y - x)`.
    Identity,
}

/// Raw second-order Taylor remainder of the chosen map between two nearby
/// points, using the tangent projection at `x`.
pub fn taylor_remainder(map: TaylorMap, x: &ProductPoint, y: &ProductPoint) -> Result<f64> {
    if x.rank() != y.rank() || x.shape() != y.shape() {
        return Err(Error::shape("points live on different products"));
    }
    let basis = x.tangent_basis()?;
    let deltas: Vec<Vec<f64>> = x
        .terms()
        .iter()
        .zip(y.terms())
        .map(|(a, b)| {
            b.ambient()
                .iter()
                .zip(a.ambient())
                .map(|(yb, xa)| yb - xa)
                .collect()
        })
        .collect();
    let projected = basis.project(&deltas)?;
    match map {
        TaylorMap::Phi => {
            // F(y) - F(x) = phi(y) - phi(x) regardless of the data tensor.
            let fx = phi(x);
            let fy = phi(y);
            // dF_x applied to the projected step: sum of the per-term
            // ambient realizations.
            let n = x.shape().ambient_dim();
            let mut linear = vec![0.0; n];
            for term in projected.ambient_terms() {
                for (l, t) in linear.iter_mut().zip(term) {
                    *l += t;
                }
            }
            let mut acc = 0.0;
            for ((a, b), l) in fy.data().iter().zip(fx.data()).zip(&linear) {
                let d = a - b - l;
                acc += d * d;
            }
            Ok(acc.sqrt())
        }
        TaylorMap::Identity => {
            let mut acc = 0.0;
            for (delta, proj) in deltas.iter().zip(projected.ambient_terms()) {
                for (d, p) in delta.iter().zip(proj) {
                    let w = d - p;
                    acc += w * w;
                }
            }
            Ok(acc.sqrt())
        }
    }
}

/// Heuristic estimate of the linear-rate constant: the pseudoinverse gap
/// between the first iterate and the limit, divided by their distance.
pub fn heuristic_rate_constant(x1: &ProductPoint, x_star: &ProductPoint) -> Result<f64> {
    let dist = ambient_distance(x1, x_star)?;
    if dist == 0.0 {
        return Err(Error::invalid(
            "rate constant undefined at zero distance from the reference",
        ));
    }
    let gap = spectral_norm(&projected_pseudoinverse(x1)?.sub(&projected_pseudoinverse(x_star)?))?;
    Ok(gap / dist)
}

/// Leading multiplicative constant of the linear-rate bound:
/// `(1+sqrt(5))/2 * C * kappa^2 * ||F(x_star)|| / alpha`.
pub fn theoretical_linear_rate(
    kappa: f64,
    c_hat: f64,
    residual_star: f64,
    alpha: f64,
) -> Result<f64> {
    if !(0.0 < alpha && alpha < 1.0) {
        return Err(Error::invalid("alpha must lie in (0, 1)"));
    }
    Ok(WEDIN_CONSTANT * c_hat * kappa * kappa * residual_star / alpha)
}

/// Least-squares fit of `log e_{k+1} = order * log e_k + log constant` over
/// consecutive error pairs with both entries above `floor`.
pub fn fit_order(errors: &[f64], floor: f64) -> Result<(f64, f64)> {
    let pairs: Vec<(f64, f64)> = errors
        .windows(2)
        .filter(|w| w[0] > floor && w[1] > floor)
        .map(|w| (w[0].ln(), w[1].ln()))
        .collect();
    if pairs.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "only {} error pairs above the floor {floor:.3e}",
            pairs.len()
        )));
    }
    let n = pairs.len() as f64;
    let xm = pairs.iter().map(|p| p.0).sum::<f64>() / n;
    let ym = pairs.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pairs.iter().map(|p| (p.0 - xm) * (p.0 - xm)).sum();
    if sxx == 0.0 {
        return Err(Error::InsufficientData(
            "all error pairs share one abscissa; order is not identifiable".to_string(),
        ));
    }
    let sxy: f64 = pairs.iter().map(|p| (p.0 - xm) * (p.1 - ym)).sum();
    let order = sxy / sxx;
    let constant = (ym - order * xm).exp();
    Ok((order, constant))
}

/// Order fit on a solver trace via its recorded reference errors.
pub fn estimate_order(trace: &IterationTrace, floor: f64) -> Result<(f64, f64)> {
    let errors = trace.errors();
    if errors.iter().filter(|&&e| e > floor).count() < 3 {
        return Err(Error::InsufficientData(
            "need at least 3 trace errors above the floor".to_string(),
        ));
    }
    fit_order(&errors, floor)
}

/// Geometric mean of consecutive per-step error ratios over the window
/// `[lo, hi]`; `None` when fewer than two trace points fall inside.
pub fn fit_step_ratio(errors: &[f64], lo: f64, hi: f64) -> Option<f64> {
    let logs: Vec<f64> = errors
        .windows(2)
        .filter(|w| w[0] >= lo && w[0] <= hi && w[1] >= lo && w[1] <= hi)
        .map(|w| (w[1] / w[0]).ln())
        .collect();
    if logs.is_empty() {
        return None;
    }
    Some((logs.iter().sum::<f64>() / logs.len() as f64).exp())
}
