//! The manifold of rank-1 tensors (Segre manifold), its r-fold product,
//! orthonormal tangent bases, tangent-space projection, and a rank-1
//! retraction based on higher-order orthogonal iteration (HOOI).
//!
//! A point on the product manifold is an r-tuple of rank-1 terms, each given
//! by its factor vectors. The tangent space at a term is spanned by an
//! orthonormal block
//!
//! ```text
//! U_i = [ a^1 x ... x a^d | Q_1 x a^2 x ... x a^d | ... | a^1 x ... x Q_d ]
//! ```
//!
//! where every `a^k` is normalized, `x` is the Kronecker product, and `Q_k`
//! holds an orthonormal basis of the complement of `a^k`. The first column is
//! the scaling direction; the remaining blocks rotate one mode at a time.

use crate::error::{Error, Result};
use crate::linalg::{dot, norm, orthonormal_complement, Matrix};

/// Mode sizes (m_1, ..., m_d) of a dense tensor space with d >= 3 modes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Shape {
    mode_sizes: Vec<usize>,
}

impl Shape {
    pub fn new(mode_sizes: Vec<usize>) -> Result<Self> {
        if mode_sizes.len() < 3 {
            return Err(Error::invalid(format!(
                "tensor order must be >= 3, got {}",
                mode_sizes.len()
            )));
        }
        if mode_sizes.iter().any(|&m| m < 2) {
            return Err(Error::invalid("every mode size must be >= 2"));
        }
        Ok(Shape { mode_sizes })
    }

    pub fn order(&self) -> usize {
        self.mode_sizes.len()
    }

    pub fn mode_sizes(&self) -> &[usize] {
        &self.mode_sizes
    }

    /// Total dimension N = m_1 * ... * m_d of the ambient tensor space.
    pub fn ambient_dim(&self) -> usize {
        self.mode_sizes.iter().product()
    }

    /// Dimension 1 + sum(m_k - 1) of the rank-1 manifold.
    pub fn segre_dim(&self) -> usize {
        1 + self.mode_sizes.iter().map(|m| m - 1).sum::<usize>()
    }

    /// Strides for lexicographic order with the first index slowest.
    pub(crate) fn strides(&self) -> Vec<usize> {
        let d = self.order();
        let mut s = vec![1usize; d];
        for k in (0..d - 1).rev() {
            s[k] = s[k + 1] * self.mode_sizes[k + 1];
        }
        s
    }
}

/// Kronecker product of two vectors; `kron(a, b)[i*len(b)+j] = a[i]*b[j]`,
/// matching the lexicographic tensor layout.
pub(crate) fn kron(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(a.len() * b.len());
    for &x in a {
        for &y in b {
            out.push(x * y);
        }
    }
    out
}

fn kron_all(vs: &[&[f64]]) -> Vec<f64> {
    let mut acc = vs[0].to_vec();
    for v in &vs[1..] {
        acc = kron(&acc, v);
    }
    acc
}

/// A rank-1 tensor stored as its factor vectors together with the cached
/// vectorized outer product.
#[derive(Debug, Clone)]
pub struct RankOnePoint {
    factors: Vec<Vec<f64>>,
    ambient: Vec<f64>,
}

impl RankOnePoint {
    pub fn new(factors: Vec<Vec<f64>>) -> Result<Self> {
        if factors.len() < 3 {
            return Err(Error::invalid("a rank-1 term needs at least 3 factors"));
        }
        for (k, f) in factors.iter().enumerate() {
            if f.len() < 2 {
                return Err(Error::invalid(format!("factor {k} has length < 2")));
            }
            if f.iter().any(|x| !x.is_finite()) {
                return Err(Error::invalid(format!("factor {k} has non-finite entries")));
            }
            if norm(f) == 0.0 {
                return Err(Error::invalid(format!("factor {k} is the zero vector")));
            }
        }
        let refs: Vec<&[f64]> = factors.iter().map(|f| f.as_slice()).collect();
        let ambient = kron_all(&refs);
        Ok(RankOnePoint { factors, ambient })
    }

    pub fn factors(&self) -> &[Vec<f64>] {
        &self.factors
    }

    pub fn ambient(&self) -> &[f64] {
        &self.ambient
    }

    pub fn ambient_norm(&self) -> f64 {
        norm(&self.ambient)
    }

    pub fn shape(&self) -> Result<Shape> {
        Shape::new(self.factors.iter().map(|f| f.len()).collect())
    }

    /// Orthonormal tangent block U_i of this term, N x segre_dim.
    pub fn tangent_block(&self) -> Result<(Matrix<f64>, Vec<Matrix<f64>>)> {
        let shape = self.shape()?;
        let d = shape.order();
        let n = shape.ambient_dim();
        let hats: Vec<Vec<f64>> = self
            .factors
            .iter()
            .map(|f| {
                let nf = norm(f);
                f.iter().map(|x| x / nf).collect()
            })
            .collect();

        let mut columns: Vec<Vec<f64>> = Vec::with_capacity(shape.segre_dim());
        let hat_refs: Vec<&[f64]> = hats.iter().map(|h| h.as_slice()).collect();
        columns.push(kron_all(&hat_refs));

        let mut complements = Vec::with_capacity(d);
        for k in 0..d {
            let q = orthonormal_complement(&self.factors[k])?;
            for c in 0..q.cols() {
                let mut parts: Vec<&[f64]> = hat_refs.clone();
                parts[k] = q.col(c);
                columns.push(kron_all(&parts));
            }
            complements.push(q);
        }
        Ok((Matrix::from_columns(n, &columns)?, complements))
    }
}

/// A point on the r-fold product of the rank-1 manifold.
#[derive(Debug, Clone)]
pub struct ProductPoint {
    shape: Shape,
    terms: Vec<RankOnePoint>,
}

impl ProductPoint {
    pub fn new(terms: Vec<RankOnePoint>) -> Result<Self> {
        if terms.is_empty() {
            return Err(Error::invalid("a product point needs at least one term"));
        }
        let shape = terms[0].shape()?;
        for (i, t) in terms.iter().enumerate().skip(1) {
            if t.shape()? != shape {
                return Err(Error::shape(format!("term {i} disagrees with term 0")));
            }
        }
        let r = terms.len();
        if r * shape.segre_dim() >= shape.ambient_dim() {
            return Err(Error::invalid(format!(
                "rank {r} * manifold dimension {} >= ambient dimension {}",
                shape.segre_dim(),
                shape.ambient_dim()
            )));
        }
        Ok(ProductPoint { shape, terms })
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.terms.len()
    }

    pub fn terms(&self) -> &[RankOnePoint] {
        &self.terms
    }

    /// Norm of the concatenated per-term ambient vectors.
    pub fn ambient_norm(&self) -> f64 {
        self.terms
            .iter()
            .map(|t| dot(t.ambient(), t.ambient()))
            .sum::<f64>()
            .sqrt()
    }

    pub fn tangent_basis(&self) -> Result<TangentBasis> {
        let mut blocks = Vec::with_capacity(self.rank());
        let mut complements = Vec::with_capacity(self.rank());
        for t in &self.terms {
            let (u, q) = t.tangent_block()?;
            blocks.push(u);
            complements.push(q);
        }
        Ok(TangentBasis {
            segre_dim: self.shape.segre_dim(),
            ambient_dim: self.shape.ambient_dim(),
            blocks,
            complements,
        })
    }
}

/// Index-aligned distance between two product points in the concatenated
/// ambient space (no term permutation; see `solver::distance` for the
/// permutation-minimized variant).
pub fn ambient_distance(p: &ProductPoint, q: &ProductPoint) -> Result<f64> {
    if p.rank() != q.rank() || p.shape() != q.shape() {
        return Err(Error::shape("points live on different products"));
    }
    let mut acc = 0.0;
    for (a, b) in p.terms().iter().zip(q.terms()) {
        acc += a
            .ambient()
            .iter()
            .zip(b.ambient())
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>();
    }
    Ok(acc.sqrt())
}

/// Per-term orthonormal tangent blocks of a product point, together with the
/// per-mode complement matrices used to build them.
#[derive(Debug, Clone)]
pub struct TangentBasis {
    segre_dim: usize,
    ambient_dim: usize,
    blocks: Vec<Matrix<f64>>,
    complements: Vec<Vec<Matrix<f64>>>,
}

impl TangentBasis {
    pub fn rank(&self) -> usize {
        self.blocks.len()
    }

    /// Total tangent dimension m = r * segre_dim.
    pub fn dim(&self) -> usize {
        self.rank() * self.segre_dim
    }

    pub fn segre_dim(&self) -> usize {
        self.segre_dim
    }

    pub fn block(&self, i: usize) -> &Matrix<f64> {
        &self.blocks[i]
    }

    pub fn complements(&self, i: usize) -> &[Matrix<f64>] {
        &self.complements[i]
    }

    /// Assemble a tangent vector from coordinates in this basis.
    pub fn vector_from_coords(&self, coords: Vec<f64>) -> Result<TangentVector> {
        if coords.len() != self.dim() {
            return Err(Error::invalid(format!(
                "coordinate length {} != tangent dimension {}",
                coords.len(),
                self.dim()
            )));
        }
        let ambient_terms = (0..self.rank())
            .map(|i| {
                self.blocks[i].matvec(&coords[i * self.segre_dim..(i + 1) * self.segre_dim])
            })
            .collect();
        Ok(TangentVector {
            coords,
            ambient_terms,
        })
    }

    /// Orthogonal projection of per-term ambient vectors onto the tangent
    /// space: coordinates are `U_i^T delta_i`.
    pub fn project(&self, deltas: &[Vec<f64>]) -> Result<TangentVector> {
        if deltas.len() != self.rank() {
            return Err(Error::shape(format!(
                "{} ambient vectors for a rank-{} point",
                deltas.len(),
                self.rank()
            )));
        }
        let mut coords = Vec::with_capacity(self.dim());
        for (i, delta) in deltas.iter().enumerate() {
            if delta.len() != self.ambient_dim {
                return Err(Error::shape(format!(
                    "ambient vector {i} has length {}, expected {}",
                    delta.len(),
                    self.ambient_dim
                )));
            }
            coords.extend(self.blocks[i].tr_matvec(delta));
        }
        self.vector_from_coords(coords)
    }
}

/// Element of the tangent space, stored both as coordinates in the
/// orthonormal basis and as the per-term ambient realization.
#[derive(Debug, Clone)]
pub struct TangentVector {
    coords: Vec<f64>,
    ambient_terms: Vec<Vec<f64>>,
}

impl TangentVector {
    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn ambient_terms(&self) -> &[Vec<f64>] {
        &self.ambient_terms
    }

    /// The norm in coordinates; equals the product-space ambient norm because
    /// the basis blocks are orthonormal.
    pub fn norm(&self) -> f64 {
        norm(&self.coords)
    }

    pub fn is_zero(&self) -> bool {
        self.coords.iter().all(|&c| c == 0.0)
    }

    pub fn scaled(&self, t: f64) -> TangentVector {
        TangentVector {
            coords: self.coords.iter().map(|c| c * t).collect(),
            ambient_terms: self
                .ambient_terms
                .iter()
                .map(|v| v.iter().map(|x| x * t).collect())
                .collect(),
        }
    }
}

/// Projection of per-term ambient vectors onto the tangent space at `p`.
pub fn project_ambient_to_tangent(p: &ProductPoint, deltas: &[Vec<f64>]) -> Result<TangentVector> {
    p.tangent_basis()?.project(deltas)
}

pub const MAX_HOOI_ITERS: usize = 50;
const HOOI_TOL: f64 = 1e-14;

/// Contract `data` over all modes except `k` with the unit vectors `units`,
/// leaving a vector of length m_k.
fn contract_except(data: &[f64], shape: &Shape, k: usize, units: &[Vec<f64>]) -> Vec<f64> {
    let sizes = shape.mode_sizes();
    let strides = shape.strides();
    let d = shape.order();
    let mut out = vec![0.0; sizes[k]];
    for (lin, &x) in data.iter().enumerate() {
        let mut rem = lin;
        let mut weight = x;
        let mut ik = 0;
        for mode in 0..d {
            let idx = rem / strides[mode];
            rem %= strides[mode];
            if mode == k {
                ik = idx;
            } else {
                weight *= units[mode][idx];
            }
        }
        out[ik] += weight;
    }
    out
}

/// Best rank-1 approximation of `data` by HOOI, initialized at `init`.
/// Returns canonicalized factors: all factor norms equal, the sign gauge
/// fixed so the first nonzero entry of the first factor is positive.
fn rank_one_approx(
    data: &[f64],
    shape: &Shape,
    init: &[Vec<f64>],
    term: usize,
) -> Result<Vec<Vec<f64>>> {
    let d = shape.order();
    let mut units: Vec<Vec<f64>> = init
        .iter()
        .map(|f| {
            let nf = norm(f);
            f.iter().map(|x| x / nf).collect()
        })
        .collect();

    let fail = |reason: &str, units: &[Vec<f64>]| Error::RetractionFailed {
        term,
        reason: reason.to_string(),
        factors: units.to_vec(),
    };

    let mut converged = false;
    for _ in 0..MAX_HOOI_ITERS {
        let mut change = 0.0f64;
        for k in 0..d {
            let mut v = contract_except(data, shape, k, &units);
            let nv = norm(&v);
            if nv == 0.0 {
                return Err(fail("mode contraction vanished", &units));
            }
            for x in v.iter_mut() {
                *x /= nv;
            }
            // Sign-insensitive factor change: the final coefficient absorbs
            // any flips, so compare against the closer of +/- the old factor.
            let aligned = if dot(&v, &units[k]) < 0.0 { -1.0 } else { 1.0 };
            let diff = v
                .iter()
                .zip(&units[k])
                .map(|(a, b)| (a - aligned * b) * (a - aligned * b))
                .sum::<f64>()
                .sqrt();
            change = change.max(diff);
            units[k] = v;
        }
        if change < HOOI_TOL {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(fail("no convergence within the iteration budget", &units));
    }

    // Coefficient of the rank-1 approximation.
    let mut lambda = 0.0;
    {
        let strides = shape.strides();
        for (lin, &x) in data.iter().enumerate() {
            let mut rem = lin;
            let mut w = x;
            for mode in 0..d {
                let idx = rem / strides[mode];
                rem %= strides[mode];
                w *= units[mode][idx];
            }
            lambda += w;
        }
    }
    if lambda == 0.0 {
        return Err(fail("zero rank-1 coefficient", &units));
    }

    // Gauge: balance norms to |lambda|^(1/d); push all signs into the last
    // factor except that the first factor keeps a positive leading entry.
    let scale = lambda.abs().powf(1.0 / d as f64);
    let mut sign = lambda.signum();
    for unit in units.iter_mut().take(d - 1) {
        if let Some(&lead) = unit.iter().find(|x| **x != 0.0) {
            if lead < 0.0 {
                for x in unit.iter_mut() {
                    *x = -*x;
                }
                sign = -sign;
            }
        }
    }
    let mut factors: Vec<Vec<f64>> = units
        .iter()
        .map(|u| u.iter().map(|x| x * scale).collect())
        .collect();
    if sign < 0.0 {
        for x in factors[d - 1].iter_mut() {
            *x = -*x;
        }
    }
    Ok(factors)
}

/// Retraction: each term of `p + eta` is replaced by its best rank-1
/// approximation, computed by HOOI initialized at the current factors.
/// A zero tangent vector returns `p` unchanged.
pub fn retract(p: &ProductPoint, eta: &TangentVector) -> Result<ProductPoint> {
    if eta.coords().len() != p.rank() * p.shape().segre_dim() {
        return Err(Error::shape("tangent vector does not match the point"));
    }
    if eta.coords().iter().any(|c| !c.is_finite()) {
        return Err(Error::invalid("tangent vector has non-finite coordinates"));
    }
    if eta.is_zero() {
        return Ok(p.clone());
    }
    let mut terms = Vec::with_capacity(p.rank());
    for (i, (term, step)) in p.terms().iter().zip(eta.ambient_terms()).enumerate() {
        let moved: Vec<f64> = term
            .ambient()
            .iter()
            .zip(step)
            .map(|(a, e)| a + e)
            .collect();
        if norm(&moved) == 0.0 {
            return Err(Error::RetractionFailed {
                term: i,
                reason: "step lands on the zero tensor".to_string(),
                factors: term.factors().to_vec(),
            });
        }
        let factors = rank_one_approx(&moved, p.shape(), term.factors(), i)?;
        terms.push(RankOnePoint::new(factors)?);
    }
    ProductPoint::new(terms)
}

/// Second-order defect `|| R(p, t*eta) - p - t*eta ||` over the concatenated
/// per-term ambient vectors.
pub fn retraction_defect(p: &ProductPoint, eta: &TangentVector, t: f64) -> Result<f64> {
    let moved = retract(p, &eta.scaled(t))?;
    let mut acc = 0.0;
    for ((new_term, old_term), step) in moved.terms().iter().zip(p.terms()).zip(eta.ambient_terms())
    {
        acc += new_term
            .ambient()
            .iter()
            .zip(old_term.ambient())
            .zip(step)
            .map(|((rn, a), e)| {
                let d = rn - a - t * e;
                d * d
            })
            .sum::<f64>();
    }
    Ok(acc.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::ExperimentRng;

    fn e(i: usize, n: usize) -> Vec<f64> {
        let mut v = vec![0.0; n];
        v[i] = 1.0;
        v
    }

    pub(crate) fn random_point(rng: &mut ExperimentRng, r: usize) -> ProductPoint {
        let terms = (0..r)
            .map(|_| {
                RankOnePoint::new(vec![
                    rng.normal_vec(3),
                    rng.normal_vec(3),
                    rng.normal_vec(3),
                ])
                .unwrap()
            })
            .collect();
        ProductPoint::new(terms).unwrap()
    }

    fn random_unit_tangent(rng: &mut ExperimentRng, basis: &TangentBasis) -> TangentVector {
        let mut c = rng.normal_vec(basis.dim());
        let nc = norm(&c);
        for x in c.iter_mut() {
            *x /= nc;
        }
        basis.vector_from_coords(c).unwrap()
    }

    #[test]
    fn shape_validation() {
        assert!(Shape::new(vec![3, 3]).is_err());
        assert!(Shape::new(vec![3, 1, 3]).is_err());
        let s = Shape::new(vec![3, 4, 5]).unwrap();
        assert_eq!(s.ambient_dim(), 60);
        assert_eq!(s.segre_dim(), 1 + 2 + 3 + 4);
    }

    #[test]
    fn rank_one_rejects_zero_factor() {
        assert!(RankOnePoint::new(vec![vec![0.0, 0.0], e(0, 3), e(0, 3)]).is_err());
    }

    #[test]
    fn ambient_is_outer_product() {
        let p = RankOnePoint::new(vec![
            vec![1.0, 2.0, 0.5],
            vec![-1.0, 3.0, 2.0],
            vec![0.0, 1.0, 4.0],
        ])
        .unwrap();
        let shape = p.shape().unwrap();
        let strides = shape.strides();
        for i in 0..3 {
            for j in 0..3 {
                for k in 0..3 {
                    let lin = i * strides[0] + j * strides[1] + k * strides[2];
                    let expect = p.factors()[0][i] * p.factors()[1][j] * p.factors()[2][k];
                    assert!((p.ambient()[lin] - expect).abs() <= 1e-14 * expect.abs().max(1.0));
                }
            }
        }
    }

    #[test]
    fn tangent_block_of_standard_basis_point() {
        // e1 x e1 x e1 in 3x3x3: the 7 columns are standard basis tensors at
        // multi-indices (111),(211),(311),(121),(131),(112),(113).
        let p = RankOnePoint::new(vec![e(0, 3), e(0, 3), e(0, 3)]).unwrap();
        let (u, _) = p.tangent_block().unwrap();
        assert_eq!((u.rows(), u.cols()), (27, 7));
        let expected_indices = [
            (0, 0, 0),
            (1, 0, 0),
            (2, 0, 0),
            (0, 1, 0),
            (0, 2, 0),
            (0, 0, 1),
            (0, 0, 2),
        ];
        for (c, &(i, j, k)) in expected_indices.iter().enumerate() {
            let lin = i * 9 + j * 3 + k;
            for row in 0..27 {
                let expect = if row == lin { 1.0 } else { 0.0 };
                assert!(
                    (u[(row, c)].abs() - expect).abs() <= 1e-14,
                    "column {c} is not +/- the basis tensor at ({i},{j},{k})"
                );
            }
            assert!(u[(lin, c)].abs() > 0.99);
        }
    }

    #[test]
    fn tangent_block_is_orthonormal() {
        let mut rng = ExperimentRng::seed_from_u64(2);
        for _ in 0..20 {
            let p = RankOnePoint::new(vec![
                rng.normal_vec(3),
                rng.normal_vec(4),
                rng.normal_vec(2),
            ])
            .unwrap();
            let (u, _) = p.tangent_block().unwrap();
            let gram = u.transpose().matmul(&u);
            assert!(gram.sub(&Matrix::identity(u.cols())).max_abs() <= 1e-12);
            // First column is the normalized ambient vector.
            let na = p.ambient_norm();
            for (row, &a) in p.ambient().iter().enumerate() {
                assert!((u[(row, 0)] - a / na).abs() <= 1e-13);
            }
        }
    }

    /// Finite-difference oracle: the column span of the tangent block must
    /// match the span of directional derivatives of the outer-product map
    /// under single-factor perturbations.
    #[test]
    fn tangent_block_spans_finite_difference_directions() {
        let mut rng = ExperimentRng::seed_from_u64(3);
        let p = RankOnePoint::new(vec![
            rng.normal_vec(3),
            rng.normal_vec(3),
            rng.normal_vec(3),
        ])
        .unwrap();
        let (u, _) = p.tangent_block().unwrap();
        let t = 1e-7;

        // Build 1 + sum(m_k - 1) directions: scale the whole term, then move
        // each factor along its complement directions.
        let mut dirs: Vec<Vec<f64>> = Vec::new();
        let base = p.ambient().to_vec();
        dirs.push(base.clone());
        for k in 0..3 {
            let q = orthonormal_complement(&p.factors()[k]).unwrap();
            for c in 0..q.cols() {
                let mut factors = p.factors().to_vec();
                for (x, dq) in factors[k].iter_mut().zip(q.col(c)) {
                    *x += t * dq;
                }
                let moved = RankOnePoint::new(factors).unwrap();
                let fd: Vec<f64> = moved
                    .ambient()
                    .iter()
                    .zip(&base)
                    .map(|(m, b)| (m - b) / t)
                    .collect();
                dirs.push(fd);
            }
        }

        // Every finite-difference direction must lie in span(U) up to O(t).
        for d in &dirs {
            let coords = u.tr_matvec(d);
            let reproj = u.matvec(&coords);
            let resid: f64 = d
                .iter()
                .zip(&reproj)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            assert!(resid <= 1e-6 * norm(d).max(1.0), "residual {resid}");
        }
    }

    #[test]
    fn projection_fixes_tangent_vectors() {
        let mut rng = ExperimentRng::seed_from_u64(4);
        let p = random_point(&mut rng, 2);
        let basis = p.tangent_basis().unwrap();
        let coords = rng.normal_vec(basis.dim());
        let v = basis.vector_from_coords(coords.clone()).unwrap();
        let w = basis.project(v.ambient_terms()).unwrap();
        for (a, b) in coords.iter().zip(w.coords()) {
            assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn projection_kills_normal_vectors() {
        let mut rng = ExperimentRng::seed_from_u64(5);
        let p = random_point(&mut rng, 2);
        let basis = p.tangent_basis().unwrap();
        // Project a random ambient vector, subtract the projection; what is
        // left must project to zero.
        let deltas: Vec<Vec<f64>> = (0..2).map(|_| rng.normal_vec(27)).collect();
        let proj = basis.project(&deltas).unwrap();
        let residuals: Vec<Vec<f64>> = deltas
            .iter()
            .zip(proj.ambient_terms())
            .map(|(d, pa)| d.iter().zip(pa).map(|(x, y)| x - y).collect())
            .collect();
        let second = basis.project(&residuals).unwrap();
        assert!(second.norm() <= 1e-12);
    }

    #[test]
    fn projection_pythagoras() {
        let mut rng = ExperimentRng::seed_from_u64(6);
        for _ in 0..20 {
            let p = random_point(&mut rng, 2);
            let basis = p.tangent_basis().unwrap();
            let deltas: Vec<Vec<f64>> = (0..2).map(|_| rng.normal_vec(27)).collect();
            let proj = basis.project(&deltas).unwrap();
            let total: f64 = deltas.iter().map(|d| dot(d, d)).sum();
            let tangential: f64 = proj.norm().powi(2);
            let normal: f64 = deltas
                .iter()
                .zip(proj.ambient_terms())
                .map(|(d, pa)| d.iter().zip(pa).map(|(x, y)| (x - y) * (x - y)).sum::<f64>())
                .sum();
            assert!((total - tangential - normal).abs() <= 1e-10 * total);
        }
    }

    #[test]
    fn projection_is_symmetric() {
        let mut rng = ExperimentRng::seed_from_u64(7);
        let p = random_point(&mut rng, 2);
        let basis = p.tangent_basis().unwrap();
        let a: Vec<Vec<f64>> = (0..2).map(|_| rng.normal_vec(27)).collect();
        let b: Vec<Vec<f64>> = (0..2).map(|_| rng.normal_vec(27)).collect();
        let pa = basis.project(&a).unwrap();
        let pb = basis.project(&b).unwrap();
        let lhs: f64 = pa
            .ambient_terms()
            .iter()
            .zip(&b)
            .map(|(x, y)| dot(x, y))
            .sum();
        let rhs: f64 = a
            .iter()
            .zip(pb.ambient_terms())
            .map(|(x, y)| dot(x, y))
            .sum();
        assert!((lhs - rhs).abs() <= 1e-10 * lhs.abs().max(1.0));
    }

    #[test]
    fn retract_zero_is_identity_bitwise() {
        let mut rng = ExperimentRng::seed_from_u64(8);
        let p = random_point(&mut rng, 2);
        let basis = p.tangent_basis().unwrap();
        let zero = basis.vector_from_coords(vec![0.0; basis.dim()]).unwrap();
        let q = retract(&p, &zero).unwrap();
        for (a, b) in p.terms().iter().zip(q.terms()) {
            for (fa, fb) in a.factors().iter().zip(b.factors()) {
                assert_eq!(fa, fb);
            }
        }
    }

    #[test]
    fn retract_along_scaling_direction_is_exact() {
        let mut rng = ExperimentRng::seed_from_u64(9);
        let p = random_point(&mut rng, 2);
        let basis = p.tangent_basis().unwrap();
        let t = 0.37;
        // Scaling direction of term 0 only.
        let mut coords = vec![0.0; basis.dim()];
        coords[0] = t;
        let eta = basis.vector_from_coords(coords).unwrap();
        let q = retract(&p, &eta).unwrap();
        let scale = 1.0 + t / p.terms()[0].ambient_norm();
        for (row, (a, b)) in p.terms()[0]
            .ambient()
            .iter()
            .zip(q.terms()[0].ambient())
            .enumerate()
        {
            assert!(
                (b - scale * a).abs() <= 1e-10 * a.abs().max(1.0),
                "row {row}: {b} vs {}",
                scale * a
            );
        }
        // The untouched term is unchanged up to the gauge (same ambient).
        for (a, b) in p.terms()[1].ambient().iter().zip(q.terms()[1].ambient()) {
            assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn retract_fails_on_annihilating_step() {
        let p = ProductPoint::new(vec![
            RankOnePoint::new(vec![e(0, 3), e(0, 3), e(0, 3)]).unwrap(),
            RankOnePoint::new(vec![e(1, 3), e(1, 3), e(1, 3)]).unwrap(),
        ])
        .unwrap();
        // Ambient step that cancels term 0 exactly: -e1 x e1 x e1 is the
        // negated scaling direction with magnitude ||ambient|| = 1.
        let basis = p.tangent_basis().unwrap();
        let mut coords = vec![0.0; basis.dim()];
        coords[0] = -1.0;
        let eta = basis.vector_from_coords(coords).unwrap();
        match retract(&p, &eta) {
            Err(Error::RetractionFailed { term, .. }) => assert_eq!(term, 0),
            other => panic!("expected retraction failure, got {other:?}"),
        }
    }

    #[test]
    fn retraction_local_rigidity() {
        let mut rng = ExperimentRng::seed_from_u64(10);
        for _ in 0..10 {
            let p = random_point(&mut rng, 2);
            let basis = p.tangent_basis().unwrap();
            let eta = random_unit_tangent(&mut rng, &basis);
            let t = 1e-5;
            let plus = retract(&p, &eta.scaled(t)).unwrap();
            let minus = retract(&p, &eta.scaled(-t)).unwrap();
            // Central difference of t -> R(p, t*eta) at 0 must equal eta.
            let mut err2 = 0.0;
            for ((tp, tm), step) in plus.terms().iter().zip(minus.terms()).zip(eta.ambient_terms())
            {
                for ((ap, am), e) in tp.ambient().iter().zip(tm.ambient()).zip(step) {
                    let d = (ap - am) / (2.0 * t) - e;
                    err2 += d * d;
                }
            }
            assert!(err2.sqrt() <= 1e-4, "rigidity defect {}", err2.sqrt());
        }
    }

    #[test]
    fn retraction_defect_is_second_order() {
        let mut rng = ExperimentRng::seed_from_u64(11);
        let ts = [1e-2, 1e-3, 1e-4, 1e-5];
        for _ in 0..25 {
            let p = random_point(&mut rng, 2);
            let basis = p.tangent_basis().unwrap();
            let eta = random_unit_tangent(&mut rng, &basis);
            let defects: Vec<f64> = ts
                .iter()
                .map(|&t| retraction_defect(&p, &eta, t).unwrap())
                .collect();
            // log-log slope fit
            let xs: Vec<f64> = ts.iter().map(|t| t.ln()).collect();
            let ys: Vec<f64> = defects.iter().map(|d| d.ln()).collect();
            let xm = xs.iter().sum::<f64>() / xs.len() as f64;
            let ym = ys.iter().sum::<f64>() / ys.len() as f64;
            let slope = xs
                .iter()
                .zip(&ys)
                .map(|(x, y)| (x - xm) * (y - ym))
                .sum::<f64>()
                / xs.iter().map(|x| (x - xm) * (x - xm)).sum::<f64>();
            assert!((1.9..=2.1).contains(&slope), "slope {slope}");
            // defect(t)/t^2 bounded by a fixed constant across the grid.
            let gamma = defects[0] / ts[0].powi(2);
            for (d, t) in defects.iter().zip(&ts) {
                assert!(d / (t * t) <= 4.0 * gamma.max(1.0));
            }
        }
    }

    #[test]
    fn retraction_defect_zero_for_scaling_direction() {
        let mut rng = ExperimentRng::seed_from_u64(12);
        let p = random_point(&mut rng, 2);
        let basis = p.tangent_basis().unwrap();
        let mut coords = vec![0.0; basis.dim()];
        coords[0] = 1.0;
        coords[basis.segre_dim()] = -0.5;
        let nrm = norm(&coords);
        for c in coords.iter_mut() {
            *c /= nrm;
        }
        let eta = basis.vector_from_coords(coords).unwrap();
        let d = retraction_defect(&p, &eta, 1e-3).unwrap();
        assert!(d <= 1e-12, "scaling defect {d}");
        assert_eq!(retraction_defect(&p, &eta, 0.0).unwrap(), 0.0);
    }
}
