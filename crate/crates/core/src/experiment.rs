//! Experiment harness: a parametrized family of rank-2 decompositions whose
//! condition number grows with the parameter `s`, plus randomly and
//! adversarially perturbed solver runs around each family member.
//!
//! For each `s` the harness builds the 3x3x3 family point, perturbs the
//! starting decomposition on the manifold and (optionally) the data tensor
//! in ambient space, runs the Gauss-Newton iteration in both the
//! perturbed-target (linear) and exact-target (quadratic) regimes, and emits
//! traces together with the estimated rate constants.
//!
//! Randomness is drawn from one seeded stream per `s`, so runs are
//! reproducible and per-s bundles are independent.

use crate::cpd::{condition_number, gn_step, phi, residual, Tensor};
use crate::diagnostics::{error_floor, estimate_bounds, fit_step_ratio, wedin_gap, BoundEstimates};
use crate::error::{Error, Result};
use crate::io::{
    write_bounds_csv, write_decomposition, write_tensor, write_trace_csv, BoundsRow,
};
use crate::linalg::{compact_svd, norm};
use crate::manifold::{retract, ProductPoint, RankOnePoint, TangentVector};
use crate::rng::ExperimentRng;
use crate::solver::{solve, IterationTrace, SolverConfig};
use std::fmt::Write as _;
use std::path::Path;

/// Default reporting value of the free rate parameter alpha.
pub const DEFAULT_ALPHA: f64 = 0.9;

/// Step for the central-difference gradient of the adversarial functional.
pub const ADVERSARIAL_FD_STEP: f64 = 1e-6;

/// One member of the pencil family: the decomposition x(s) and its tensor.
#[derive(Debug, Clone)]
pub struct PencilFamily {
    pub s: u32,
    pub point: ProductPoint,
    pub tensor: Tensor,
}

/// The rank-2 family on 3x3x3 tensors: the first term is `e1^x3` at `s = 0`
/// and `(e2 - 2^-s e1)^x3` for `s > 0`; the second term is always `e2^x3`.
/// The terms become collinear as `s` grows, so the condition number blows up.
pub fn make_pencil(s: u32) -> PencilFamily {
    let e1 = vec![1.0, 0.0, 0.0];
    let e2 = vec![0.0, 1.0, 0.0];
    let a = if s == 0 {
        e1
    } else {
        vec![-(2f64.powi(-(s as i32))), 1.0, 0.0]
    };
    let term1 = RankOnePoint::new(vec![a.clone(), a.clone(), a]).expect("family term");
    let term2 = RankOnePoint::new(vec![e2.clone(), e2.clone(), e2]).expect("family term");
    let point = ProductPoint::new(vec![term1, term2]).expect("family point");
    let tensor = phi(&point);
    PencilFamily { s, point, tensor }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentKind {
    Random,
    Adversarial,
}

impl std::fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ExperimentKind::Random => "random",
            ExperimentKind::Adversarial => "adversarial",
        })
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentSpec {
    pub kind: ExperimentKind,
    pub s_values: Vec<u32>,
    pub start_perturbation: f64,
    pub data_perturbation: f64,
    pub seed: u64,
    /// Run only the exact-target (zero-residual) regime.
    pub zero_residual: bool,
}

impl ExperimentSpec {
    pub fn new(kind: ExperimentKind) -> Self {
        ExperimentSpec {
            kind,
            s_values: vec![0, 1, 3, 5],
            start_perturbation: 1e-4,
            data_perturbation: 1e-8,
            seed: 0,
            zero_residual: false,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.s_values.is_empty() {
            return Err(Error::invalid("need at least one s value"));
        }
        if self.start_perturbation <= 0.0 || self.data_perturbation <= 0.0 {
            return Err(Error::invalid("perturbation magnitudes must be positive"));
        }
        Ok(())
    }
}

/// One solver run: the target it solved, where it started, where it ended,
/// and the trace with errors measured against the converged point.
#[derive(Debug, Clone)]
pub struct RegimeRun {
    pub target: Tensor,
    pub initial: ProductPoint,
    pub solution: ProductPoint,
    pub trace: IterationTrace,
    pub residual_star: f64,
}

/// Everything produced for one `s`.
#[derive(Debug, Clone)]
pub struct SBundle {
    pub s: u32,
    pub family: PencilFamily,
    pub start: ProductPoint,
    pub linear: Option<RegimeRun>,
    pub quadratic: RegimeRun,
    pub bounds: BoundsRow,
    /// Estimated rate constants around the limit point.
    pub estimates: BoundEstimates,
    /// Pseudoinverse gap (lhs, rhs) between the start and the solution;
    /// recorded for adversarial runs.
    pub wedin: Option<(f64, f64)>,
}

impl SBundle {
    /// The run the per-s diagnostics refer to: the perturbed-target run when
    /// present, otherwise the exact-target run.
    pub fn primary(&self) -> &RegimeRun {
        self.linear.as_ref().unwrap_or(&self.quadratic)
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub kind: ExperimentKind,
    pub seed: u64,
    pub bundles: Vec<SBundle>,
}

/// Solve and then re-solve with the converged point as the error reference,
/// so the trace carries distances to the limit the run actually found.
fn solve_with_self_reference(target: &Tensor, x0: &ProductPoint) -> Result<RegimeRun> {
    let base_cfg = SolverConfig::default();
    let (solution, _) = solve(target, x0, &base_cfg)?;
    let cfg = SolverConfig {
        record_reference: Some(solution.clone()),
        ..base_cfg
    };
    let (solution, trace) = solve(target, x0, &cfg)?;
    let residual_star = norm(&residual(&solution, target)?);
    Ok(RegimeRun {
        target: target.clone(),
        initial: x0.clone(),
        solution,
        trace,
        residual_star,
    })
}

/// Unit-norm tangent vector with standard normal coordinates.
fn random_unit_tangent(rng: &mut ExperimentRng, p: &ProductPoint) -> Result<TangentVector> {
    let basis = p.tangent_basis()?;
    let mut coords = rng.normal_vec(basis.dim());
    let nc = norm(&coords);
    for c in coords.iter_mut() {
        *c /= nc;
    }
    basis.vector_from_coords(coords)
}

/// First Gauss-Newton iterate from `x0` toward `target`.
fn first_iterate(target: &Tensor, x0: &ProductPoint) -> Result<ProductPoint> {
    let step = gn_step(x0, target)?;
    retract(x0, &step)
}

fn assemble_bundle(
    s: u32,
    family: PencilFamily,
    start: ProductPoint,
    linear: Option<RegimeRun>,
    quadratic: RegimeRun,
    wedin: Option<(f64, f64)>,
    seed: u64,
) -> Result<SBundle> {
    let primary = linear.as_ref().unwrap_or(&quadratic);
    let x_star = &primary.solution;
    let report = condition_number(x_star)?;
    let x1 = first_iterate(&primary.target, &start).unwrap_or_else(|_| start.clone());
    let estimates = estimate_bounds(x_star, &x1, primary.residual_star, DEFAULT_ALPHA, seed)?;
    let floor = error_floor(x_star);
    let errors = primary.trace.errors();
    let fitted_rate = fit_step_ratio(&errors, 10.0 * floor, 1e-3).unwrap_or(f64::NAN);
    let fitted_order = crate::diagnostics::fit_order(&errors, floor)
        .map(|(order, _)| order)
        .unwrap_or(f64::NAN);
    let bounds = BoundsRow {
        s,
        kappa_star: report.kappa,
        residual_star: primary.residual_star,
        c_hat: estimates.c_hat,
        e_hat: estimates.e_hat,
        theoretical_rate: estimates.theoretical_linear_rate,
        fitted_rate,
        fitted_order,
    };
    Ok(SBundle {
        s,
        family,
        start,
        linear,
        quadratic,
        bounds,
        estimates,
        wedin,
    })
}

fn random_bundle(spec: &ExperimentSpec, s: u32) -> Result<SBundle> {
    let mut rng = ExperimentRng::derive(spec.seed, s as u64);
    let family = make_pencil(s);

    // Perturbed start: retract a random unit tangent direction.
    let direction = random_unit_tangent(&mut rng, &family.point)?;
    let start = retract(&family.point, &direction.scaled(spec.start_perturbation))?;

    // Perturbed data: a normalized ambient Gaussian tensor.
    let linear = if spec.zero_residual {
        None
    } else {
        let mut noise = rng.normal_vec(family.tensor.shape().ambient_dim());
        let nn = norm(&noise);
        let perturbed: Vec<f64> = family
            .tensor
            .data()
            .iter()
            .zip(&noise)
            .map(|(a, z)| a + spec.data_perturbation * z / nn)
            .collect();
        noise.clear();
        let target = Tensor::new(family.tensor.shape().clone(), perturbed)?;
        Some(solve_with_self_reference(&target, &start)?)
    };

    let quadratic = solve_with_self_reference(&family.tensor, &start)?;
    assemble_bundle(s, family, start, linear, quadratic, None, spec.seed)
}

/// Numeric gradient of the pseudoinverse-gap functional
/// `x -> 0.5 || (pinv(J at base) - pinv(J at x)) noise ||^2`
/// by central differences along each tangent basis direction of `at`,
/// returned in tangent coordinates at `at`.
///
/// The adversarial construction evaluates this at `at == base`, where the
/// functional attains its minimum: the analytic gradient vanishes and the
/// differences pick up the leading odd-order variation of the pseudoinverse,
/// which is exactly the direction the perturbation is after.
pub fn pinv_gap_gradient(
    base: &ProductPoint,
    at: &ProductPoint,
    noise: &[f64],
    fd_step: f64,
) -> Result<Vec<f64>> {
    let basis = at.tangent_basis()?;
    if noise.len() != base.shape().ambient_dim() {
        return Err(Error::invalid(format!(
            "noise tensor has length {}, expected {}",
            noise.len(),
            base.shape().ambient_dim()
        )));
    }
    let pinv_base = crate::diagnostics::projected_pseudoinverse(base)?;
    let base_applied = pinv_base.matvec(noise);

    let value = |x: &ProductPoint| -> Result<f64> {
        let applied = crate::diagnostics::projected_pseudoinverse(x)?.matvec(noise);
        let gap2: f64 = base_applied
            .iter()
            .zip(&applied)
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        Ok(0.5 * gap2)
    };

    let mut grad = Vec::with_capacity(basis.dim());
    for j in 0..basis.dim() {
        let mut coords = vec![0.0; basis.dim()];
        coords[j] = fd_step;
        let plus = retract(at, &basis.vector_from_coords(coords.clone())?)?;
        coords[j] = -fd_step;
        let minus = retract(at, &basis.vector_from_coords(coords)?)?;
        grad.push((value(&plus)? - value(&minus)?) / (2.0 * fd_step));
    }
    Ok(grad)
}

/// Left singular vector of the smallest (m-th) singular value of the
/// Jacobian at `p`, with the sign fixed so the entry of largest magnitude is
/// positive.
pub fn smallest_left_singular_vector(p: &ProductPoint) -> Result<Vec<f64>> {
    let j = crate::cpd::jacobian(p)?;
    let svd = compact_svd(&j)?;
    let mut u = svd.left.col(j.cols() - 1).to_vec();
    let lead = u
        .iter()
        .cloned()
        .max_by(|a, b| a.abs().partial_cmp(&b.abs()).expect("finite"))
        .unwrap_or(0.0);
    if lead < 0.0 {
        for x in u.iter_mut() {
            *x = -*x;
        }
    }
    Ok(u)
}

fn adversarial_bundle(spec: &ExperimentSpec, s: u32) -> Result<SBundle> {
    let mut rng = ExperimentRng::derive(spec.seed, s as u64);
    let family = make_pencil(s);

    // Adversarial direction from the pseudoinverse-gap functional.
    let noise = rng.normal_vec(family.tensor.shape().ambient_dim());
    let mut grad = pinv_gap_gradient(&family.point, &family.point, &noise, ADVERSARIAL_FD_STEP)?;
    let ng = norm(&grad);
    if ng == 0.0 {
        return Err(Error::invalid("degenerate adversarial gradient"));
    }
    for g in grad.iter_mut() {
        *g = *g / ng * spec.start_perturbation;
    }
    let basis = family.point.tangent_basis()?;
    let start = retract(&family.point, &basis.vector_from_coords(grad)?)?;

    // Data perturbation along the least-stable left singular direction.
    let u_min = smallest_left_singular_vector(&start)?;
    let linear = if spec.zero_residual {
        None
    } else {
        let perturbed: Vec<f64> = family
            .tensor
            .data()
            .iter()
            .zip(&u_min)
            .map(|(a, z)| a + spec.data_perturbation * z)
            .collect();
        let target = Tensor::new(family.tensor.shape().clone(), perturbed)?;
        Some(solve_with_self_reference(&target, &start)?)
    };
    let quadratic = solve_with_self_reference(&family.tensor, &start)?;

    let primary_solution = linear
        .as_ref()
        .map(|r| r.solution.clone())
        .unwrap_or_else(|| quadratic.solution.clone());
    let wedin = wedin_gap(&start, &primary_solution).ok();
    assemble_bundle(s, family, start, linear, quadratic, wedin, spec.seed)
}

pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentOutput> {
    spec.validate()?;
    let mut bundles = Vec::with_capacity(spec.s_values.len());
    for &s in &spec.s_values {
        let bundle = match spec.kind {
            ExperimentKind::Random => random_bundle(spec, s)?,
            ExperimentKind::Adversarial => adversarial_bundle(spec, s)?,
        };
        bundles.push(bundle);
    }
    Ok(ExperimentOutput {
        kind: spec.kind,
        seed: spec.seed,
        bundles,
    })
}

/// Write an experiment output as a directory of CSV and JSON files:
/// per-s traces, targets, start and solution decompositions, one bounds
/// summary, per-s solver statuses, and (for adversarial runs) the
/// pseudoinverse-gap records.
pub fn write_experiment(output: &ExperimentOutput, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut bounds = Vec::new();
    let mut status = String::from("s,linear_status,quadratic_status\n");
    let mut wedin_rows = String::from("s,lhs,rhs\n");
    let mut any_wedin = false;

    for bundle in &output.bundles {
        let s = bundle.s;
        bounds.push(bundle.bounds.clone());

        write_tensor(&bundle.family.tensor, &dir.join(format!("s{s}_tensor.json")))?;
        write_decomposition(&bundle.start, &dir.join(format!("s{s}_init.json")))?;
        write_decomposition(
            &bundle.primary().solution,
            &dir.join(format!("s{s}_xstar.json")),
        )?;
        write_tensor(
            &bundle.primary().target,
            &dir.join(format!("s{s}_target.json")),
        )?;

        if let Some(linear) = &bundle.linear {
            write_trace_csv(&linear.trace, &dir.join(format!("s{s}_linear_trace.csv")))?;
        }
        write_trace_csv(
            &bundle.quadratic.trace,
            &dir.join(format!("s{s}_quadratic_trace.csv")),
        )?;

        let linear_status = bundle
            .linear
            .as_ref()
            .map(|r| r.trace.status.to_string())
            .unwrap_or_else(|| "skipped".to_string());
        let _ = writeln!(
            status,
            "{s},{linear_status},{}",
            bundle.quadratic.trace.status
        );

        if let Some((lhs, rhs)) = bundle.wedin {
            any_wedin = true;
            let _ = writeln!(wedin_rows, "{s},{lhs},{rhs}");
        }
    }

    write_bounds_csv(&bounds, &dir.join("bounds.csv"))?;
    std::fs::write(dir.join("status.csv"), status)?;
    if any_wedin {
        std::fs::write(dir.join("wedin.csv"), wedin_rows)?;
    }
    Ok(())
}
