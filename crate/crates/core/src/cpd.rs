//! The sum-of-rank-1 parameterization, its least-squares residual, Jacobian
//! in the orthonormal tangent basis, Riemannian gradient, Gauss-Newton step,
//! and the geometric condition number.
//!
//! The Jacobian is represented in the per-term orthonormal tangent bases, so
//! its smallest singular value directly yields the condition number of the
//! decomposition: kappa = 1 / sigma_min. In that basis the Gauss-Newton step
//! is the minimal-norm least-squares solution of `J c = -F`.

use crate::error::{Error, Result};
use crate::linalg::{compact_svd, norm, pinv_apply, Matrix};
use crate::manifold::{ProductPoint, Shape, TangentVector};

/// A dense real tensor, stored lexicographically with the first index slowest
/// (row-major; the last index varies fastest).
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Shape,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Shape, data: Vec<f64>) -> Result<Self> {
        if data.len() != shape.ambient_dim() {
            return Err(Error::invalid(format!(
                "tensor data length {} != ambient dimension {}",
                data.len(),
                shape.ambient_dim()
            )));
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid("tensor has non-finite entries"));
        }
        Ok(Tensor { shape, data })
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn norm(&self) -> f64 {
        norm(&self.data)
    }

    /// Entry at a full multi-index.
    pub fn at(&self, indices: &[usize]) -> f64 {
        let strides = self.shape.strides();
        let lin: usize = indices.iter().zip(&strides).map(|(i, s)| i * s).sum();
        self.data[lin]
    }
}

/// Condition-number report for a decomposition point.
#[derive(Debug, Clone)]
pub struct ConditionReport {
    /// 1 / sigma_min, or +infinity when the Jacobian is numerically singular.
    pub kappa: f64,
    /// Smallest singular value of the Jacobian.
    pub sigma_min: f64,
    /// All singular values, nonincreasing, length r * segre_dim.
    pub full_spectrum: Vec<f64>,
}

/// Sum of the rank-1 terms.
pub fn phi(p: &ProductPoint) -> Tensor {
    let n = p.shape().ambient_dim();
    let mut data = vec![0.0; n];
    for term in p.terms() {
        for (d, a) in data.iter_mut().zip(term.ambient()) {
            *d += a;
        }
    }
    Tensor {
        shape: p.shape().clone(),
        data,
    }
}

/// Residual `F = phi(p) - target`.
pub fn residual(p: &ProductPoint, target: &Tensor) -> Result<Vec<f64>> {
    if p.shape() != target.shape() {
        return Err(Error::shape("point and target tensor disagree"));
    }
    Ok(phi(p)
        .data
        .iter()
        .zip(target.data())
        .map(|(a, b)| a - b)
        .collect())
}

/// Least-squares objective `0.5 * ||F||^2`.
pub fn objective(p: &ProductPoint, target: &Tensor) -> Result<f64> {
    let f = residual(p, target)?;
    Ok(0.5 * f.iter().map(|x| x * x).sum::<f64>())
}

/// Jacobian of the parameterization restricted to the tangent space, in the
/// orthonormal tangent basis: the horizontal concatenation `[U_1 ... U_r]`.
pub fn jacobian(p: &ProductPoint) -> Result<Matrix<f64>> {
    let basis = p.tangent_basis()?;
    let n = p.shape().ambient_dim();
    let m = basis.dim();
    let mut j = Matrix::zeros(n, m);
    let sd = basis.segre_dim();
    for i in 0..basis.rank() {
        let block = basis.block(i);
        for c in 0..sd {
            j.col_mut(i * sd + c).copy_from_slice(block.col(c));
        }
    }
    Ok(j)
}

/// Riemannian gradient of the objective in tangent coordinates: `J^T F`.
pub fn gradient(p: &ProductPoint, target: &Tensor) -> Result<TangentVector> {
    let f = residual(p, target)?;
    let basis = p.tangent_basis()?;
    let mut coords = Vec::with_capacity(basis.dim());
    for i in 0..basis.rank() {
        coords.extend(basis.block(i).tr_matvec(&f));
    }
    basis.vector_from_coords(coords)
}

/// Relative threshold below which the Jacobian is declared non-injective for
/// the purpose of taking a Gauss-Newton step.
pub fn injectivity_tolerance(sigma_max: f64) -> f64 {
    1e3 * f64::EPSILON * sigma_max
}

/// Gauss-Newton step in tangent coordinates: the minimal-norm minimizer of
/// `||J c + F||`, i.e. `c = -pinv(J) F`.
pub fn gn_step(p: &ProductPoint, target: &Tensor) -> Result<TangentVector> {
    let f = residual(p, target)?;
    let j = jacobian(p)?;
    let svd = compact_svd(&j)?;
    let sigma_max = svd.singular_values[0];
    let sigma_min = *svd.singular_values.last().expect("nonempty spectrum");
    let tolerance = injectivity_tolerance(sigma_max);
    if sigma_min <= tolerance {
        return Err(Error::IllConditionedJacobian {
            sigma_min,
            tolerance,
        });
    }
    let step: Vec<f64> = pinv_apply(&j, &f)?.iter().map(|x| -x).collect();
    p.tangent_basis()?.vector_from_coords(step)
}

/// Geometric condition number of the decomposition: the reciprocal of the
/// smallest singular value of the Jacobian in the orthonormal tangent basis.
pub fn condition_number(p: &ProductPoint) -> Result<ConditionReport> {
    let j = jacobian(p)?;
    let svd = compact_svd(&j)?;
    let full_spectrum = svd.singular_values;
    let sigma_max = full_spectrum[0];
    let sigma_min = *full_spectrum.last().expect("nonempty spectrum");
    let rank_tol = (j.rows().max(j.cols())) as f64 * f64::EPSILON * sigma_max;
    let kappa = if sigma_min > rank_tol {
        1.0 / sigma_min
    } else {
        f64::INFINITY
    };
    Ok(ConditionReport {
        kappa,
        sigma_min,
        full_spectrum,
    })
}
