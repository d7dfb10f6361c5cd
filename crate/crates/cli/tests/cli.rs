use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};
use tempfile::TempDir;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dqaem")).args(args).output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn write_config(dir: &Path, name: &str, value: &Value) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, serde_json::to_string_pretty(value).unwrap()).unwrap();
    path
}

fn generate(dir: &Path, n: usize, seed: u64) -> PathBuf {
    let cfg = write_config(
        dir,
        "generate.json",
        &json!({
            "seed": seed,
            "n": n,
            "model": {"paper": {"variance": 0.5}},
            "data_out": dir.join("data.csv"),
            "truth_out": dir.join("truth.json"),
        }),
    );
    let out = run(&["generate", "-c", cfg.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    dir.join("data.csv")
}

fn fit_config(dir: &Path, solver: &str, data: &Path, tag: &str) -> PathBuf {
    write_config(
        dir,
        &format!("fit_{tag}.json"),
        &json!({
            "solver": solver,
            "data": data,
            "m": 3,
            "k": 2,
            "seed": 4,
            "limits": {"max_iter": 300, "tol": 1e-6},
            "beads": 8,
            "schedule": {"gamma_init": 0.5, "total_steps": 20},
            "trace_out": dir.join(format!("trace_{tag}.csv")),
            "params_out": dir.join(format!("params_{tag}.json")),
        }),
    )
}

fn trace_rows(path: &Path) -> Vec<Vec<String>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

#[test]
fn generate_writes_rows_and_sidecar() {
    let dir = TempDir::new().unwrap();
    let data = generate(dir.path(), 10, 7);
    let text = fs::read_to_string(&data).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap();
    assert!(header.contains("y_1") && header.contains("label"), "{header}");
    assert_eq!(lines.count(), 10);
    let truth: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("truth.json")).unwrap()).unwrap();
    assert_eq!(truth["seed"], 7);
    assert_eq!(truth["n"], 10);
}

#[test]
fn generate_is_deterministic_and_labels_follow_weights() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    let da = generate(a.path(), 3000, 11);
    let db = generate(b.path(), 3000, 11);
    let text = fs::read_to_string(&da).unwrap();
    assert_eq!(text, fs::read_to_string(db).unwrap());

    let header: Vec<&str> = text.lines().next().unwrap().split(',').collect();
    let col = header.iter().position(|h| *h == "label").unwrap();
    let mut counts = [0usize; 3];
    for line in text.lines().skip(1) {
        let label: usize = line.split(',').nth(col).unwrap().parse().unwrap();
        counts[label - 1] += 1;
    }
    for c in counts {
        assert!((c as f64 / 3000.0 - 1.0 / 3.0).abs() < 0.03, "{counts:?}");
    }
}

#[test]
fn em_fit_writes_a_monotone_trace() {
    let dir = TempDir::new().unwrap();
    let data = generate(dir.path(), 200, 3);
    let cfg = fit_config(dir.path(), "em", &data, "em");
    let out = run(&["fit", "-c", cfg.to_str().unwrap()]);
    assert!(matches!(code(&out), 0 | 5), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = trace_rows(&dir.path().join("trace_em.csv"));
    assert!(rows.len() > 1);
    let objective: Vec<f64> = rows.iter().map(|r| r[1].parse().unwrap()).collect();
    for pair in objective.windows(2) {
        assert!(pair[1] - pair[0] >= -1e-9, "{pair:?}");
    }
    assert!(dir.path().join("params_em.json").is_file());
}

#[test]
fn dqaem_at_zero_gamma_reproduces_em() {
    let dir = TempDir::new().unwrap();
    let data = generate(dir.path(), 200, 3);
    let em = fit_config(dir.path(), "em", &data, "em");
    let dq = fit_config(dir.path(), "dqaem", &data, "dq");
    let a = run(&["fit", "-c", em.to_str().unwrap()]);
    let b = run(&["fit", "-c", dq.to_str().unwrap(), "--set", "schedule.gamma_init=0"]);
    assert_eq!(code(&a), code(&b));
    let strip = |rows: Vec<Vec<String>>| rows.into_iter().map(|r| r[..5].join(",")).collect::<Vec<_>>();
    let ra = strip(trace_rows(&dir.path().join("trace_em.csv")));
    let rb = strip(trace_rows(&dir.path().join("trace_dq.csv")));
    assert_eq!(ra, rb);
    assert_eq!(
        fs::read_to_string(dir.path().join("params_em.json")).unwrap(),
        fs::read_to_string(dir.path().join("params_dq.json")).unwrap()
    );
}

#[test]
fn fit_exit_codes() {
    let dir = TempDir::new().unwrap();
    let data = generate(dir.path(), 100, 5);
    let cfg = fit_config(dir.path(), "dqaem", &data, "x");
    let path = cfg.to_str().unwrap();
    assert_eq!(code(&run(&["fit", "-c", path, "--set", "limits.max_iter=2"])), 5);
    assert_eq!(code(&run(&["fit", "-c", path, "--set", "limits.max_iter=0"])), 2);
    assert_eq!(code(&run(&["fit", "-c", path, "--set", "data=/nonexistent/data.csv"])), 2);
    assert_eq!(code(&run(&["fit", "-c", path, "--set", "solver=newton"])), 2);
    assert_eq!(code(&run(&["fit", "-c", path, "--set", "bogus=1"])), 2);
    assert_eq!(code(&run(&["fit", "-c", "/nonexistent/config.json"])), 2);
}

fn comparison_config(dir: &Path, out: &Path) -> PathBuf {
    write_config(
        dir,
        "experiment.json",
        &json!({
            "experiment": "comparison",
            "output_dir": out,
            "threads": 1,
            "comparison": {
                "truth": {"paper": {"variance": 0.5}},
                "n": 120,
                "data_seed": 1,
                "init_seed": 1000,
                "trials": 4,
                "fit_k": 1,
                "beads": 4,
                "schedule": {"gamma_init": 1.0, "total_steps": 10},
                "em": {"max_iter": 100, "tol": 1e-5},
                "dqaem": {"max_iter": 100, "tol": 1e-5},
            }
        }),
    )
}

#[test]
fn comparison_experiment_writes_reports() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("run");
    let cfg = comparison_config(dir.path(), &out);
    let res = run(&["experiment", "-c", cfg.to_str().unwrap()]);
    assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));
    for f in ["comparison.json", "comparison.md", "traces/trial_0000_em.csv", "traces/trial_0003_dqaem.csv"] {
        assert!(out.join(f).is_file(), "{f} missing");
    }
    let report: Value = serde_json::from_str(&fs::read_to_string(out.join("comparison.json")).unwrap()).unwrap();
    let t = &report["table"];
    let cells: u64 = ["both_success", "em_only", "dqaem_only", "both_fail"]
        .iter()
        .map(|k| t[k].as_u64().unwrap())
        .sum();
    assert_eq!(cells, 4);

    let again = dir.path().join("again");
    let res = run(&["experiment", "-c", cfg.to_str().unwrap(), "--set", &format!("output_dir={}", again.display())]);
    assert_eq!(code(&res), 0);
    assert_eq!(
        fs::read_to_string(out.join("comparison.json")).unwrap(),
        fs::read_to_string(again.join("comparison.json")).unwrap()
    );
}

#[test]
fn experiment_section_mismatch_is_a_config_error() {
    let dir = TempDir::new().unwrap();
    let cfg = comparison_config(dir.path(), &dir.path().join("run"));
    let res = run(&["experiment", "-c", cfg.to_str().unwrap(), "--set", "experiment=monotonicity"]);
    assert_eq!(code(&res), 2);
}

#[test]
fn monotonicity_experiment_passes() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("mono");
    let cfg = write_config(
        dir.path(),
        "mono.json",
        &json!({
            "experiment": "monotonicity",
            "output_dir": out,
            "threads": 1,
            "monotonicity": {
                "data": {"generate": {"model": {"paper": {"variance": 0.5}}, "n": 80, "seed": 2}},
                "models": [1, 3],
                "iters": 1500,
                "restarts": 2,
                "fit_k": 1,
                "init_seed": 5,
            }
        }),
    );
    let res = run(&["experiment", "-c", cfg.to_str().unwrap()]);
    assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));
    for f in ["monotonicity.json", "monotonicity.md", "monotonicity_m1.csv", "monotonicity_m3.csv"] {
        assert!(out.join(f).is_file(), "{f} missing");
    }
}

fn verify_config(dir: &Path) -> PathBuf {
    write_config(dir, "verify.json", &json!({"seed": 1, "report_out": dir.join("report.json")}))
}

#[test]
fn verify_passes_by_default() {
    let dir = TempDir::new().unwrap();
    let cfg = verify_config(dir.path());
    let res = run(&["verify", "-c", cfg.to_str().unwrap()]);
    assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stdout));
    let stdout = String::from_utf8_lossy(&res.stdout);
    assert!(stdout.contains("PASS") && !stdout.contains("FAIL"), "{stdout}");
    let report: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(report["all_passed"], true);
}

#[test]
fn verify_detects_a_perturbed_partition_function() {
    let dir = TempDir::new().unwrap();
    let cfg = verify_config(dir.path());
    let res = run(&["verify", "-c", cfg.to_str().unwrap(), "--set", "perturb_log_partition=1e-3"]);
    assert_eq!(code(&res), 4);
    assert!(String::from_utf8_lossy(&res.stdout).contains("FAIL"));
}

#[test]
fn verify_with_no_gates_warns() {
    let dir = TempDir::new().unwrap();
    let cfg = verify_config(dir.path());
    let res = run(&["verify", "-c", cfg.to_str().unwrap(), "--set", "gates=[]"]);
    assert_eq!(code(&res), 0);
    assert!(String::from_utf8_lossy(&res.stderr).contains("warning"));
}

#[test]
fn malformed_config_is_rejected() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("bad.json");
    fs::write(&path, "{ not json").unwrap();
    assert_eq!(code(&run(&["verify", "-c", path.to_str().unwrap()])), 2);
    let cfg = verify_config(dir.path());
    assert_eq!(code(&run(&["verify", "-c", cfg.to_str().unwrap(), "--set", "seed"])), 2);
}
