//! File formats: JSON for tensors and decompositions, CSV for traces and
//! bound summaries.
//!
//! Floating-point values are serialized as shortest round-trip decimals, so
//! write-then-read reproduces binary64 data bit-exactly and identical runs
//! produce byte-identical files.

use crate::cpd::Tensor;
use crate::error::{Error, Result};
use crate::manifold::{ProductPoint, RankOnePoint, Shape};
use crate::solver::IterationTrace;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::Path;

#[derive(Serialize, Deserialize)]
struct TensorFile {
    dims: Vec<usize>,
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct DecompositionFile {
    rank: usize,
    factors: Vec<Vec<Vec<f64>>>,
}

fn parse_error(path: &Path, err: &serde_json::Error) -> Error {
    Error::Parse {
        path: path.display().to_string(),
        line: err.line(),
        column: err.column(),
        message: err.to_string(),
    }
}

fn semantic_error(path: &Path, message: String) -> Error {
    Error::Parse {
        path: path.display().to_string(),
        line: 0,
        column: 0,
        message,
    }
}

pub fn read_tensor(path: &Path) -> Result<Tensor> {
    let text = std::fs::read_to_string(path)?;
    let file: TensorFile = serde_json::from_str(&text).map_err(|e| parse_error(path, &e))?;
    let shape = Shape::new(file.dims).map_err(|e| semantic_error(path, e.to_string()))?;
    Tensor::new(shape, file.data).map_err(|e| semantic_error(path, e.to_string()))
}

pub fn write_tensor(tensor: &Tensor, path: &Path) -> Result<()> {
    let file = TensorFile {
        dims: tensor.shape().mode_sizes().to_vec(),
        data: tensor.data().to_vec(),
    };
    std::fs::write(path, serde_json::to_string_pretty(&file).expect("serialize"))?;
    Ok(())
}

pub fn read_decomposition(path: &Path) -> Result<ProductPoint> {
    let text = std::fs::read_to_string(path)?;
    let file: DecompositionFile =
        serde_json::from_str(&text).map_err(|e| parse_error(path, &e))?;
    if file.factors.len() != file.rank {
        return Err(semantic_error(
            path,
            format!(
                "declared rank {} but {} terms present",
                file.rank,
                file.factors.len()
            ),
        ));
    }
    let terms = file
        .factors
        .into_iter()
        .map(RankOnePoint::new)
        .collect::<Result<Vec<_>>>()
        .map_err(|e| semantic_error(path, e.to_string()))?;
    ProductPoint::new(terms).map_err(|e| semantic_error(path, e.to_string()))
}

pub fn write_decomposition(point: &ProductPoint, path: &Path) -> Result<()> {
    let file = DecompositionFile {
        rank: point.rank(),
        factors: point
            .terms()
            .iter()
            .map(|t| t.factors().to_vec())
            .collect(),
    };
    std::fs::write(path, serde_json::to_string_pretty(&file).expect("serialize"))?;
    Ok(())
}

fn fmt_f64(x: f64) -> String {
    if x.is_nan() {
        "nan".to_string()
    } else if x.is_infinite() {
        if x > 0.0 { "inf" } else { "-inf" }.to_string()
    } else {
        format!("{x}")
    }
}

pub const TRACE_HEADER: &str = "iter,error,residual,grad_norm,step_norm,sigma_min,kappa";

pub fn trace_to_csv(trace: &IterationTrace) -> String {
    let mut out = String::from(TRACE_HEADER);
    out.push('\n');
    for r in &trace.records {
        let error = r.error.map(fmt_f64).unwrap_or_default();
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.iter,
            error,
            fmt_f64(r.residual_norm),
            fmt_f64(r.grad_norm),
            fmt_f64(r.step_norm),
            fmt_f64(r.sigma_min),
            fmt_f64(r.kappa)
        );
    }
    out
}

pub fn write_trace_csv(trace: &IterationTrace, path: &Path) -> Result<()> {
    std::fs::write(path, trace_to_csv(trace))?;
    Ok(())
}

pub const BOUNDS_HEADER: &str =
    "s,kappa_star,residual_star,C_hat,E_hat,theoretical_rate,fitted_rate,fitted_order";

/// One row of the per-s bound summary.
#[derive(Debug, Clone)]
pub struct BoundsRow {
    pub s: u32,
    pub kappa_star: f64,
    pub residual_star: f64,
    pub c_hat: f64,
    pub e_hat: f64,
    pub theoretical_rate: f64,
    pub fitted_rate: f64,
    pub fitted_order: f64,
}

pub fn bounds_to_csv(rows: &[BoundsRow]) -> String {
    let mut out = String::from(BOUNDS_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.s,
            fmt_f64(r.kappa_star),
            fmt_f64(r.residual_star),
            fmt_f64(r.c_hat),
            fmt_f64(r.e_hat),
            fmt_f64(r.theoretical_rate),
            fmt_f64(r.fitted_rate),
            fmt_f64(r.fitted_order)
        );
    }
    out
}

pub fn write_bounds_csv(rows: &[BoundsRow], path: &Path) -> Result<()> {
    std::fs::write(path, bounds_to_csv(rows))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::ExperimentRng;
    use crate::solver::{IterationRecord, SolverStatus};

    #[test]
    fn tensor_roundtrip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.json");
        let shape = Shape::new(vec![3, 3, 3]).unwrap();
        let mut data = vec![0.0; 27];
        data[0] = 1.0;
        data[13] = 1.0;
        let t = Tensor::new(shape, data).unwrap();
        write_tensor(&t, &path).unwrap();
        let back = read_tensor(&path).unwrap();
        assert_eq!(t.data(), back.data());
        assert_eq!(t.shape(), back.shape());
    }

    #[test]
    fn fuzzed_tensor_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.json");
        let mut rng = ExperimentRng::seed_from_u64(60);
        let shape = Shape::new(vec![4, 5, 10]).unwrap();
        let data = rng.normal_vec(200);
        let t = Tensor::new(shape, data.clone()).unwrap();
        write_tensor(&t, &path).unwrap();
        let back = read_tensor(&path).unwrap();
        for (a, b) in data.iter().zip(back.data()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn decomposition_roundtrip_keeps_signs() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.json");
        let p = ProductPoint::new(vec![
            RankOnePoint::new(vec![
                vec![-1.5, 0.25, 0.0],
                vec![0.1, -0.2, 0.3],
                vec![1.0, 1.0, -1.0],
            ])
            .unwrap(),
            RankOnePoint::new(vec![
                vec![0.0, 1.0, 0.0],
                vec![0.0, 1.0, 0.0],
                vec![0.0, 1.0, 0.0],
            ])
            .unwrap(),
        ])
        .unwrap();
        write_decomposition(&p, &path).unwrap();
        let back = read_decomposition(&path).unwrap();
        for (a, b) in p.terms().iter().zip(back.terms()) {
            for (fa, fb) in a.factors().iter().zip(b.factors()) {
                assert_eq!(fa, fb);
            }
        }
    }

    #[test]
    fn malformed_file_reports_location() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.json");
        std::fs::write(&path, "{\"dims\": [3,3,3],\n\"data\": [1.0, oops]}").unwrap();
        match read_tensor(&path) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn rank_mismatch_is_a_parse_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.json");
        std::fs::write(
            &path,
            "{\"rank\": 2, \"factors\": [[[1.0,0.0],[1.0,0.0],[1.0,0.0]]]}",
        )
        .unwrap();
        assert!(matches!(read_decomposition(&path), Err(Error::Parse { .. })));
    }

    #[test]
    fn trace_csv_layout() {
        let trace = IterationTrace {
            records: vec![IterationRecord {
                iter: 0,
                error: None,
                residual_norm: 0.5,
                grad_norm: 0.25,
                step_norm: 0.125,
                sigma_min: 1.0,
                kappa: 1.0,
            }],
            status: SolverStatus::GradientTolerance,
        };
        let csv = trace_to_csv(&trace);
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), TRACE_HEADER);
        assert_eq!(lines.next().unwrap(), "0,,0.5,0.25,0.125,1,1");
    }
}
