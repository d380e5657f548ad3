//! End-to-end tests of the command-line interface and its exit codes.

use std::path::Path;
use std::process::Command;

fn rgn() -> Command {
    Command::new(env!("CARGO_BIN_EXE_rgn"))
}

fn write_family_files(dir: &Path) -> (std::path::PathBuf, std::path::PathBuf) {
    // A(1) as tensor JSON and a perturbed x(1) as the initial decomposition.
    let tensor = dir.join("tensor.json");
    let init = dir.join("init.json");
    let a = [-0.5, 1.0, 0.0];
    let mut data = vec![0.0f64; 27];
    for i in 0..3 {
        for j in 0..3 {
            for k in 0..3 {
                data[i * 9 + j * 3 + k] = a[i] * a[j] * a[k];
            }
        }
    }
    data[13] += 1.0; // + e2 x e2 x e2
    let data_json: Vec<String> = data.iter().map(|x| format!("{x}")).collect();
    std::fs::write(
        &tensor,
        format!("{{\"dims\": [3,3,3], \"data\": [{}]}}", data_json.join(",")),
    )
    .unwrap();
    std::fs::write(
        &init,
        "{\"rank\": 2, \"factors\": [\
         [[-0.5001, 1.0, 0.0002], [-0.4999, 1.0001, 0.0], [-0.5, 0.9999, 0.0001]],\
         [[0.0001, 1.0, 0.0], [0.0, 0.9999, 0.0001], [0.0, 1.0, 0.0002]]]}",
    )
    .unwrap();
    (tensor, init)
}

#[test]
fn condition_reports_family_kappa() {
    let dir = tempfile::tempdir().unwrap();
    let dec = dir.path().join("dec.json");
    std::fs::write(
        &dec,
        "{\"rank\": 2, \"factors\": [\
         [[1.0,0.0,0.0],[1.0,0.0,0.0],[1.0,0.0,0.0]],\
         [[0.0,1.0,0.0],[0.0,1.0,0.0],[0.0,1.0,0.0]]]}",
    )
    .unwrap();
    let out = rgn().args(["condition", "--dec"]).arg(&dec).output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("kappa = 1.000000e0"), "{text}");
    assert!(text.contains("tangent_dim = 14"), "{text}");
}

#[test]
fn condition_rejects_malformed_file_with_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let dec = dir.path().join("bad.json");
    std::fs::write(&dec, "{\"rank\": oops").unwrap();
    let out = rgn().args(["condition", "--dec"]).arg(&dec).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn condition_rejects_missing_file_with_exit_2() {
    let out = rgn()
        .args(["condition", "--dec", "/nonexistent/nope.json"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn solve_writes_a_trace_and_succeeds() {
    let dir = tempfile::tempdir().unwrap();
    let (tensor, init) = write_family_files(dir.path());
    let trace = dir.path().join("trace.csv");
    let out = rgn()
        .args(["solve", "--tensor"])
        .arg(&tensor)
        .arg("--init")
        .arg(&init)
        .arg("--trace")
        .arg(&trace)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&trace).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "iter,error,residual,grad_norm,step_norm,sigma_min,kappa"
    );
    assert!(lines.count() >= 2);
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("status = "), "{stdout}");
}

#[test]
fn solve_reports_failure_with_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let (tensor, init) = write_family_files(dir.path());
    let trace = dir.path().join("trace.csv");
    // One iteration with impossible tolerances cannot converge.
    let out = rgn()
        .args(["solve", "--max-iters", "1", "--grad-tol", "1e-300", "--step-tol", "1e-300"])
        .arg("--tensor")
        .arg(&tensor)
        .arg("--init")
        .arg(&init)
        .arg("--trace")
        .arg(&trace)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(trace.exists());
}

#[test]
fn experiment_is_deterministic_across_invocations() {
    let dir = tempfile::tempdir().unwrap();
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    for out in [&out_a, &out_b] {
        let status = rgn()
            .args(["experiment", "--kind", "random", "--s", "0,1", "--seed", "7", "--out"])
            .arg(out)
            .output()
            .unwrap();
        assert!(status.status.success());
    }
    for name in ["bounds.csv", "s0_linear_trace.csv", "s1_quadratic_trace.csv", "status.csv"] {
        let a = std::fs::read(out_a.join(name)).unwrap();
        let b = std::fs::read(out_b.join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between identical runs");
    }
}

#[test]
fn adversarial_experiment_writes_wedin_records() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("adv");
    let status = rgn()
        .args(["experiment", "--kind", "adversarial", "--s", "0", "--seed", "3", "--out"])
        .arg(&out)
        .output()
        .unwrap();
    assert!(status.status.success());
    let wedin = std::fs::read_to_string(out.join("wedin.csv")).unwrap();
    let mut lines = wedin.lines();
    assert_eq!(lines.next().unwrap(), "s,lhs,rhs");
    let row: Vec<f64> = lines
        .next()
        .unwrap()
        .split(',')
        .skip(1)
        .map(|x| x.parse().unwrap())
        .collect();
    assert!(row[0] <= row[1] * (1.0 + 1e-8), "wedin row {row:?}");
}

#[test]
fn check_subcommand_passes_for_each_property() {
    for property in ["taylor", "retraction", "gradient"] {
        let out = rgn()
            .args(["check", "--property", property, "--seed", "1"])
            .output()
            .unwrap();
        assert!(
            out.status.success(),
            "{property}: {}",
            String::from_utf8_lossy(&out.stdout)
        );
        let text = String::from_utf8(out.stdout).unwrap();
        assert!(text.contains("ok"), "{text}");
    }
}
