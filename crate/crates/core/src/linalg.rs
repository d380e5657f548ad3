//! Self-contained dense linear algebra on small matrices.
//!
//! Everything here is built on a one-sided Jacobi SVD, which is accurate to
//! machine precision on the matrix sizes this crate works with (tens of rows
//! and columns). The module is generic over a real scalar so that an
//! extended-precision type can be dropped in; `f64` is the instantiation used
//! by the rest of the crate.

use crate::error::{Error, Result};
use num_traits::Float;
use std::fmt::{Debug, Display};

/// Real scalar abstraction. `f64` is the only instantiation exercised by the
/// crate itself, but the algorithms do not assume binary64.
pub trait Scalar: Float + Debug + Display + Default + 'static {}

impl<T> Scalar for T where T: Float + Debug + Display + Default + 'static {}

/// Convert an `f64` constant into the working scalar type.
#[inline]
pub(crate) fn cst<T: Scalar>(x: f64) -> T {
    T::from(x).expect("scalar conversion")
}

/// Dense matrix, column-major storage.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<T = f64> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    /// Build from explicit entries in column-major order.
    pub fn from_col_major(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::invalid(format!(
                "matrix data length {} != {}x{}",
                data.len(),
                rows,
                cols
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut m = Matrix::zeros(rows, cols);
        for j in 0..cols {
            for i in 0..rows {
                m[(i, j)] = f(i, j);
            }
        }
        m
    }

    pub fn from_columns(rows: usize, columns: &[Vec<T>]) -> Result<Self> {
        let mut m = Matrix::zeros(rows, columns.len());
        for (j, col) in columns.iter().enumerate() {
            if col.len() != rows {
                return Err(Error::invalid(format!(
                    "column {} has length {}, expected {}",
                    j,
                    col.len(),
                    rows
                )));
            }
            m.col_mut(j).copy_from_slice(col);
        }
        Ok(m)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn col(&self, j: usize) -> &[T] {
        &self.data[j * self.rows..(j + 1) * self.rows]
    }

    pub fn col_mut(&mut self, j: usize) -> &mut [T] {
        &mut self.data[j * self.rows..(j + 1) * self.rows]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn transpose(&self) -> Matrix<T> {
        Matrix::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn matmul(&self, other: &Matrix<T>) -> Matrix<T> {
        assert_eq!(self.cols, other.rows, "matmul dimension mismatch");
        let mut out = Matrix::zeros(self.rows, other.cols);
        for j in 0..other.cols {
            let bcol = other.col(j);
            let ocol = out.col_mut(j);
            for (k, &bkj) in bcol.iter().enumerate() {
                if bkj == T::zero() {
                    continue;
                }
                let acol = self.col(k);
                for i in 0..self.rows {
                    ocol[i] = ocol[i] + acol[i] * bkj;
                }
            }
        }
        out
    }

    pub fn matvec(&self, v: &[T]) -> Vec<T> {
        assert_eq!(self.cols, v.len(), "matvec dimension mismatch");
        let mut out = vec![T::zero(); self.rows];
        for (j, &vj) in v.iter().enumerate() {
            let col = self.col(j);
            for i in 0..self.rows {
                out[i] = out[i] + col[i] * vj;
            }
        }
        out
    }

    /// `A^T v` without forming the transpose.
    pub fn tr_matvec(&self, v: &[T]) -> Vec<T> {
        assert_eq!(self.rows, v.len(), "tr_matvec dimension mismatch");
        (0..self.cols).map(|j| dot(self.col(j), v)).collect()
    }

    pub fn frobenius_norm(&self) -> T {
        self.data
            .iter()
            .fold(T::zero(), |acc, &x| acc + x * x)
            .sqrt()
    }

    pub fn max_abs(&self) -> T {
        self.data
            .iter()
            .fold(T::zero(), |acc, &x| acc.max(x.abs()))
    }

    pub fn sub(&self, other: &Matrix<T>) -> Matrix<T> {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| a - b)
                .collect(),
        }
    }
}

impl<T: Scalar> std::ops::Index<(usize, usize)> for Matrix<T> {
    type Output = T;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[j * self.rows + i]
    }
}

impl<T: Scalar> std::ops::IndexMut<(usize, usize)> for Matrix<T> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[j * self.rows + i]
    }
}

pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

pub fn norm<T: Scalar>(v: &[T]) -> T {
    dot(v, v).sqrt()
}

/// Compact singular value decomposition `A = left * diag(singular_values) * right^T`.
#[derive(Debug, Clone)]
pub struct SvdFactors<T = f64> {
    /// `rows x k` with orthonormal columns.
    pub left: Matrix<T>,
    /// Nonincreasing, nonnegative, length `k = min(rows, cols)`.
    pub singular_values: Vec<T>,
    /// `cols x k` with orthonormal columns.
    pub right: Matrix<T>,
}

const MAX_JACOBI_SWEEPS: usize = 60;

/// Compact SVD via one-sided Jacobi rotations.
pub fn compact_svd<T: Scalar>(a: &Matrix<T>) -> Result<SvdFactors<T>> {
    if !a.is_finite() {
        return Err(Error::invalid("svd input contains non-finite entries"));
    }
    if a.rows() >= a.cols() {
        jacobi_svd_tall(a)
    } else {
        // Work on the transpose and swap the factors.
        let f = jacobi_svd_tall(&a.transpose())?;
        Ok(SvdFactors {
            left: f.right,
            singular_values: f.singular_values,
            right: f.left,
        })
    }
}

/// One-sided Jacobi on a tall matrix (rows >= cols): orthogonalize the columns
/// of a working copy `B = A * V` by plane rotations, then read off
/// `sigma_j = ||b_j||` and `u_j = b_j / sigma_j`.
fn jacobi_svd_tall<T: Scalar>(a: &Matrix<T>) -> Result<SvdFactors<T>> {
    let n = a.rows();
    let p = a.cols();
    let mut b = a.clone();
    let mut v = Matrix::<T>::identity(p);
    let eps = T::epsilon();

    for _ in 0..MAX_JACOBI_SWEEPS {
        let mut rotated = false;
        for j in 0..p {
            for k in (j + 1)..p {
                let alpha = dot(b.col(j), b.col(j));
                let beta = dot(b.col(k), b.col(k));
                let gamma = dot(b.col(j), b.col(k));
                if gamma.abs() <= eps * (alpha * beta).sqrt() || gamma == T::zero() {
                    continue;
                }
                rotated = true;
                let tau = (beta - alpha) / (cst::<T>(2.0) * gamma);
                let t = tau.signum() / (tau.abs() + (T::one() + tau * tau).sqrt());
                let c = T::one() / (T::one() + t * t).sqrt();
                let s = c * t;
                rotate_cols(&mut b, j, k, c, s);
                rotate_cols(&mut v, j, k, c, s);
            }
        }
        if !rotated {
            break;
        }
    }

    // Column norms are the singular values; sort nonincreasing.
    let mut order: Vec<usize> = (0..p).collect();
    let norms: Vec<T> = (0..p).map(|j| norm(b.col(j))).collect();
    order.sort_by(|&x, &y| norms[y].partial_cmp(&norms[x]).expect("finite norms"));

    let sigma_max = norms[order[0]];
    let tiny = sigma_max * eps * cst::<T>(n.max(p) as f64);

    let mut left = Matrix::<T>::zeros(n, p);
    let mut right = Matrix::<T>::zeros(p, p);
    let mut singular_values = Vec::with_capacity(p);
    for (dst, &src) in order.iter().enumerate() {
        let sigma = norms[src];
        singular_values.push(sigma);
        right.col_mut(dst).copy_from_slice(v.col(src));
        if sigma > tiny && sigma > T::zero() {
            let bc = b.col(src);
            let lc = left.col_mut(dst);
            for i in 0..n {
                lc[i] = bc[i] / sigma;
            }
        } else {
            // sigma is (numerically) zero: the left vector is not determined
            // by B, complete the orthonormal basis deterministically instead.
            let col = complete_orthonormal_column(&left, dst);
            left.col_mut(dst).copy_from_slice(&col);
        }
    }

    Ok(SvdFactors {
        left,
        singular_values,
        right,
    })
}

fn rotate_cols<T: Scalar>(m: &mut Matrix<T>, j: usize, k: usize, c: T, s: T) {
    for i in 0..m.rows() {
        let x = m[(i, j)];
        let y = m[(i, k)];
        m[(i, j)] = c * x - s * y;
        m[(i, k)] = s * x + c * y;
    }
}

/// First standard basis vector that, orthogonalized against columns `0..filled`,
/// keeps more than half its norm. Two Gram-Schmidt passes for stability.
fn complete_orthonormal_column<T: Scalar>(m: &Matrix<T>, filled: usize) -> Vec<T> {
    let n = m.rows();
    for candidate in 0..n {
        let mut w = vec![T::zero(); n];
        w[candidate] = T::one();
        for _ in 0..2 {
            for j in 0..filled {
                let proj = dot(&w, m.col(j));
                let col = m.col(j);
                for i in 0..n {
                    w[i] = w[i] - proj * col[i];
                }
            }
        }
        let nw = norm(&w);
        if nw > cst::<T>(0.5) {
            for x in w.iter_mut() {
                *x = *x / nw;
            }
            return w;
        }
    }
    unreachable!("fewer than rows columns are filled, a basis vector must survive")
}

/// Minimal-norm least-squares solution `A^+ b`. Singular values below
/// `max(rows, cols) * eps * sigma_max` are treated as zero.
pub fn pinv_apply<T: Scalar>(a: &Matrix<T>, b: &[T]) -> Result<Vec<T>> {
    if b.len() != a.rows() {
        return Err(Error::invalid(format!(
            "pinv_apply: rhs length {} != rows {}",
            b.len(),
            a.rows()
        )));
    }
    let svd = compact_svd(a)?;
    let sigma_max = svd.singular_values.first().copied().unwrap_or(T::zero());
    let tol = cst::<T>(a.rows().max(a.cols()) as f64) * T::epsilon() * sigma_max;
    let mut x = vec![T::zero(); a.cols()];
    for (j, &sigma) in svd.singular_values.iter().enumerate() {
        if sigma <= tol {
            continue;
        }
        let coef = dot(svd.left.col(j), b) / sigma;
        let vcol = svd.right.col(j);
        for i in 0..a.cols() {
            x[i] = x[i] + coef * vcol[i];
        }
    }
    Ok(x)
}

/// Smallest singular value `sigma_cols(A)` of a matrix with `cols <= rows`.
pub fn smallest_singular_value<T: Scalar>(a: &Matrix<T>) -> Result<T> {
    if a.cols() > a.rows() {
        return Err(Error::invalid(format!(
            "smallest_singular_value requires cols <= rows, got {}x{}",
            a.rows(),
            a.cols()
        )));
    }
    let svd = compact_svd(a)?;
    Ok(*svd.singular_values.last().expect("at least one column"))
}

/// Largest singular value (spectral norm).
pub fn spectral_norm<T: Scalar>(a: &Matrix<T>) -> Result<T> {
    let svd = compact_svd(a)?;
    Ok(svd.singular_values.first().copied().unwrap_or(T::zero()))
}

/// Orthonormal basis of the orthogonal complement of `v`, as the trailing
/// `n-1` columns of the Householder reflector that maps `v` to a multiple of
/// `e_1`. Deterministic for a fixed input.
pub fn orthonormal_complement<T: Scalar>(v: &[T]) -> Result<Matrix<T>> {
    let n = v.len();
    let nv = norm(v);
    if nv == T::zero() || !nv.is_finite() {
        return Err(Error::invalid(
            "orthonormal_complement of a zero or non-finite vector",
        ));
    }
    // w = v + sign(v_0) ||v|| e_1, reflector H = I - 2 w w^T / (w^T w).
    let sign = if v[0] >= T::zero() { T::one() } else { -T::one() };
    let mut w: Vec<T> = v.to_vec();
    w[0] = w[0] + sign * nv;
    let wtw = dot(&w, &w);
    let mut q = Matrix::zeros(n, n - 1);
    for j in 1..n {
        let scale = cst::<T>(2.0) * w[j] / wtw;
        let col = q.col_mut(j - 1);
        for i in 0..n {
            col[i] = -scale * w[i];
        }
        col[j] = col[j] + T::one();
    }
    Ok(q)
}
