//! Seeded property suites over random decompositions: second-order Taylor
//! and retraction behavior, pseudoinverse and singular-value perturbation
//! inequalities, and gradient consistency. Shared by the command-line
//! `check` subcommand and the acceptance tests.

use crate::cpd::{gradient, jacobian, objective, residual, Tensor};
use crate::diagnostics::{taylor_remainder, wedin_gap, weyl_check, TaylorMap};
use crate::error::Result;
use crate::linalg::norm;
use crate::manifold::{retract, retraction_defect, ProductPoint, RankOnePoint, TangentVector};
use crate::rng::ExperimentRng;

/// Outcome of one property suite.
#[derive(Debug, Clone)]
pub struct CheckOutcome {
    pub property: String,
    pub passed: bool,
    pub cases: usize,
    pub violations: usize,
    pub detail: String,
}

impl std::fmt::Display for CheckOutcome {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{}: {} ({} cases, {} violations; {})",
            self.property,
            if self.passed { "ok" } else { "FAILED" },
            self.cases,
            self.violations,
            self.detail
        )
    }
}

pub const TAYLOR_STEPS: [f64; 4] = [1e-2, 1e-3, 1e-4, 1e-5];
pub const SLOPE_RANGE: (f64, f64) = (1.9, 2.1);

fn random_point(rng: &mut ExperimentRng) -> ProductPoint {
    ProductPoint::new(
        (0..2)
            .map(|_| {
                RankOnePoint::new(vec![
                    rng.normal_vec(3),
                    rng.normal_vec(3),
                    rng.normal_vec(3),
                ])
                .expect("gaussian factors are nonzero")
            })
            .collect(),
    )
    .expect("rank 2 on 3x3x3 is valid")
}

fn random_unit_tangent(rng: &mut ExperimentRng, p: &ProductPoint) -> Result<TangentVector> {
    let basis = p.tangent_basis()?;
    let mut c = rng.normal_vec(basis.dim());
    let nc = norm(&c);
    for x in c.iter_mut() {
        *x /= nc;
    }
    basis.vector_from_coords(c)
}

fn loglog_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let n = lx.len() as f64;
    let xm = lx.iter().sum::<f64>() / n;
    let ym = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|x| (x - xm) * (x - xm)).sum();
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - xm) * (y - ym)).sum();
    sxy / sxx
}

/// Second-order scaling of the Taylor remainders of the residual map and the
/// identity embedding over `configs` random (point, direction) pairs.
pub fn check_taylor(seed: u64, configs: usize) -> Result<CheckOutcome> {
    let mut rng = ExperimentRng::seed_from_u64(seed);
    let mut violations = 0;
    let mut worst: f64 = 2.0;
    for _ in 0..configs {
        let p = random_point(&mut rng);
        let eta = random_unit_tangent(&mut rng, &p)?;
        for map in [TaylorMap::Phi, TaylorMap::Identity] {
            let rems: Vec<f64> = TAYLOR_STEPS
                .iter()
                .map(|&t| {
                    let y = retract(&p, &eta.scaled(t))?;
                    taylor_remainder(map, &p, &y)
                })
                .collect::<Result<_>>()?;
            let slope = loglog_slope(&TAYLOR_STEPS, &rems);
            if !(SLOPE_RANGE.0..=SLOPE_RANGE.1).contains(&slope) {
                violations += 1;
            }
            if (slope - 2.0).abs() > (worst - 2.0).abs() {
                worst = slope;
            }
        }
    }
    Ok(CheckOutcome {
        property: "taylor".to_string(),
        passed: violations == 0,
        cases: 2 * configs,
        violations,
        detail: format!("worst slope {worst:.4}"),
    })
}

/// Retraction axioms: fixed point at zero, second-order defect scaling, and
/// local rigidity by central differences.
pub fn check_retraction(seed: u64, configs: usize) -> Result<CheckOutcome> {
    let mut rng = ExperimentRng::seed_from_u64(seed);
    let mut violations = 0;
    let mut worst: f64 = 2.0;
    for _ in 0..configs {
        let p = random_point(&mut rng);
        let basis = p.tangent_basis()?;
        let eta = random_unit_tangent(&mut rng, &p)?;

        let zero = basis.vector_from_coords(vec![0.0; basis.dim()])?;
        let fixed = retract(&p, &zero)?;
        let same = p
            .terms()
            .iter()
            .zip(fixed.terms())
            .all(|(a, b)| a.factors() == b.factors());
        if !same {
            violations += 1;
        }

        let defects: Vec<f64> = TAYLOR_STEPS
            .iter()
            .map(|&t| retraction_defect(&p, &eta, t))
            .collect::<Result<_>>()?;
        let slope = loglog_slope(&TAYLOR_STEPS, &defects);
        if !(SLOPE_RANGE.0..=SLOPE_RANGE.1).contains(&slope) {
            violations += 1;
        }
        if (slope - 2.0).abs() > (worst - 2.0).abs() {
            worst = slope;
        }

        let t = 1e-5;
        let plus = retract(&p, &eta.scaled(t))?;
        let minus = retract(&p, &eta.scaled(-t))?;
        let mut err2 = 0.0;
        for ((tp, tm), step) in plus
            .terms()
            .iter()
            .zip(minus.terms())
            .zip(eta.ambient_terms())
        {
            for ((ap, am), e) in tp.ambient().iter().zip(tm.ambient()).zip(step) {
                let d = (ap - am) / (2.0 * t) - e;
                err2 += d * d;
            }
        }
        if err2.sqrt() > 1e-4 {
            violations += 1;
        }
    }
    Ok(CheckOutcome {
        property: "retraction".to_string(),
        passed: violations == 0,
        cases: 3 * configs,
        violations,
        detail: format!("worst defect slope {worst:.4}"),
    })
}

/// Sample a pair of nearby points around the pencil member for parameter `s`.
fn nearby_pair(rng: &mut ExperimentRng, s: u32) -> Result<(ProductPoint, ProductPoint)> {
    let family = crate::experiment::make_pencil(s);
    let r1 = 1e-2 * (0.1 + 0.9 * rng.uniform());
    let r2 = 1e-2 * (0.1 + 0.9 * rng.uniform());
    let d1 = random_unit_tangent(rng, &family.point)?;
    let a = retract(&family.point, &d1.scaled(r1))?;
    let d2 = random_unit_tangent(rng, &family.point)?;
    let b = retract(&family.point, &d2.scaled(r2))?;
    Ok((a, b))
}

/// Pseudoinverse perturbation inequality on nearby pairs around the family
/// members, `pairs_per_s` pairs for each s in {0, 1, 3, 5}.
pub fn check_wedin(seed: u64, pairs_per_s: usize) -> Result<CheckOutcome> {
    let mut rng = ExperimentRng::seed_from_u64(seed);
    let mut violations = 0;
    let mut worst_ratio: f64 = 0.0;
    for s in [0u32, 1, 3, 5] {
        for _ in 0..pairs_per_s {
            let (a, b) = nearby_pair(&mut rng, s)?;
            let (lhs, rhs) = wedin_gap(&a, &b)?;
            if lhs > rhs * (1.0 + 1e-8) {
                violations += 1;
            }
            if rhs > 0.0 {
                worst_ratio = worst_ratio.max(lhs / rhs);
            }
        }
    }
    Ok(CheckOutcome {
        property: "wedin".to_string(),
        passed: violations == 0,
        cases: 4 * pairs_per_s,
        violations,
        detail: format!("largest lhs/rhs {worst_ratio:.4}"),
    })
}

/// Singular-value perturbation inequality on the same sampling scheme.
pub fn check_weyl(seed: u64, pairs_per_s: usize) -> Result<CheckOutcome> {
    let mut rng = ExperimentRng::seed_from_u64(seed);
    let mut violations = 0;
    let mut worst_ratio: f64 = 0.0;
    for s in [0u32, 1, 3, 5] {
        for _ in 0..pairs_per_s {
            let (a, b) = nearby_pair(&mut rng, s)?;
            let (lhs, rhs) = weyl_check(&a, &b)?;
            if lhs > rhs * (1.0 + 1e-10) {
                violations += 1;
            }
            if rhs > 0.0 {
                worst_ratio = worst_ratio.max(lhs / rhs);
            }
        }
    }
    Ok(CheckOutcome {
        property: "weyl".to_string(),
        passed: violations == 0,
        cases: 4 * pairs_per_s,
        violations,
        detail: format!("largest lhs/rhs {worst_ratio:.4}"),
    })
}

/// Gradient consistency: tangent-coordinate gradient against central finite
/// differences of the objective through the retraction, and the normal
/// equations of the Gauss-Newton step.
pub fn check_gradient(seed: u64, configs: usize) -> Result<CheckOutcome> {
    let mut rng = ExperimentRng::seed_from_u64(seed);
    let mut violations = 0;
    let mut worst: f64 = 0.0;
    let h = 1e-6;
    for _ in 0..configs {
        let p = random_point(&mut rng);
        let target = Tensor::new(p.shape().clone(), rng.normal_vec(27))?;
        let g = gradient(&p, &target)?;
        let basis = p.tangent_basis()?;
        for c in 0..basis.dim() {
            let mut coords = vec![0.0; basis.dim()];
            coords[c] = 1.0;
            let dir = basis.vector_from_coords(coords)?;
            let plus = objective(&retract(&p, &dir.scaled(h))?, &target)?;
            let minus = objective(&retract(&p, &dir.scaled(-h))?, &target)?;
            let fd = (plus - minus) / (2.0 * h);
            let gap = (fd - g.coords()[c]).abs();
            worst = worst.max(gap);
            if gap > 1e-4 {
                violations += 1;
            }
        }
        // Normal equations of the Gauss-Newton step.
        let step = crate::cpd::gn_step(&p, &target)?;
        let j = jacobian(&p)?;
        let f = residual(&p, &target)?;
        let lhs = j.tr_matvec(&j.matvec(step.coords()));
        let rhs: Vec<f64> = j.tr_matvec(&f).iter().map(|x| -x).collect();
        let scale = norm(&rhs).max(1.0);
        for (a, b) in lhs.iter().zip(&rhs) {
            if (a - b).abs() > 1e-8 * scale {
                violations += 1;
            }
        }
    }
    Ok(CheckOutcome {
        property: "gradient".to_string(),
        passed: violations == 0,
        cases: configs * 28,
        violations,
        detail: format!("worst finite-difference gap {worst:.3e}"),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_suites_pass() {
        assert!(check_taylor(1, 5).unwrap().passed);
        assert!(check_retraction(2, 5).unwrap().passed);
        assert!(check_wedin(3, 10).unwrap().passed);
        assert!(check_weyl(4, 10).unwrap().passed);
        assert!(check_gradient(5, 2).unwrap().passed);
    }
}
