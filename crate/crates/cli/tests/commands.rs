use std::path::Path;
use std::process::Command;

use lgp::experiments::{metrics_from_table, METRICS_SCHEMA};
use lgp::io::{read_dataset, read_model, read_trajectory, Table};
use lgp_cli::run_command;

fn run(args: &[&str]) -> i32 {
    let mut argv = vec!["lgp"];
    argv.extend_from_slice(args);
    run_command(argv)
}

fn p(dir: &Path, name: &str) -> String {
    dir.join(name).display().to_string()
}

fn small_model(dir: &Path, mode: &str, name: &str) {
    let data = p(dir, "data.csv");
    if !Path::new(&data).exists() {
        assert_eq!(run(&["gen-data", "--system", "pendulum1", "--n", "25", "--h", "0.05", "--seed", "7", "--out", &data]), 0);
    }
    let code = run(&[
        "train", "--data", &data, "--mode", mode, "--restarts", "2", "--max-iter", "40", "--seed", "7",
        "--out", &p(dir, name), "--report", &p(dir, &format!("{name}.report.json")),
    ]);
    assert_eq!(code, 0);
}

#[test]
fn smoke_gen_train_rollout() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    small_model(d, "continuous", "model.json");
    let code = run(&[
        "rollout", "--model", &p(d, "model.json"), "--steps", "20", "--seed", "7",
        "--out", &p(d, "roll.csv"), "--diagnostics", &p(d, "diag.json"),
    ]);
    assert_eq!(code, 0);
    let data = read_dataset(&d.join("data.csv")).unwrap();
    assert_eq!(data.len(), 25);
    let model = read_model(&d.join("model.json")).unwrap();
    assert_eq!(model.n_q(), 1);
    let roll = read_trajectory(&d.join("roll.csv")).unwrap();
    assert_eq!(roll.trajectory.q.len(), 22);
    assert!(roll.converged.iter().all(|&c| c));
    let diag: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(d.join("diag.json")).unwrap()).unwrap();
    assert_eq!(diag["steps_completed"], 20);
    assert!(diag["rmse"].as_f64().unwrap() < 1e-2);
    assert!(d.join("model.json.report.json").exists());
}

#[test]
fn simulate_output_feeds_rollout_scenario() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    small_model(d, "continuous", "model.json");
    let traj = p(d, "truth.csv");
    assert_eq!(run(&["simulate", "--system", "pendulum1", "--steps", "10", "--q0", "0.5", "--qdot0", "-0.3", "--out", &traj]), 0);
    let rec = read_trajectory(Path::new(&traj)).unwrap();
    assert_eq!(rec.trajectory.q.len(), 12);
    assert_eq!(rec.trajectory.q[0][0], 0.5);
    let code = run(&["rollout", "--model", &p(d, "model.json"), "--scenario", &traj, "--steps", "10", "--out", &p(d, "r.csv"), "--diagnostics", &p(d, "r.json")]);
    assert_eq!(code, 0);
}

#[test]
fn unknown_flag_is_usage_error() {
    assert_eq!(run(&["rollout", "--bogus"]), 1);
    assert_eq!(run(&["no-such-command"]), 1);
    assert_eq!(run(&["gen-data", "--system", "pendulum9x", "--n", "5", "--out", "/nonexistent/x.csv"]), 1);
    assert_eq!(run(&["--help"]), 0);
}

#[test]
fn discrete_hamiltonian_export_is_numerical_failure() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    small_model(d, "discrete", "disc.json");
    let code = run(&["export-field", "--model", &p(d, "disc.json"), "--observable", "hamiltonian", "--out", &p(d, "h.csv")]);
    assert_eq!(code, 2);
    assert!(!d.join("h.csv").exists());
    let code = run(&["export-field", "--model", &p(d, "disc.json"), "--observable", "lagrangian", "--q-range", "-1:1:3", "--v-range", "-2:2:4", "--out", &p(d, "l.csv")]);
    assert_eq!(code, 0);
    let t = Table::read(&d.join("l.csv")).unwrap();
    assert_eq!(t.rows.len(), 12);
}

#[test]
fn identical_invocations_give_identical_files() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    small_model(a.path(), "continuous", "m.json");
    small_model(b.path(), "continuous", "m.json");
    for f in ["data.csv", "m.json"] {
        let x = std::fs::read(a.path().join(f)).unwrap();
        let y = std::fs::read(b.path().join(f)).unwrap();
        assert_eq!(x, y, "{f} differs");
    }
}

#[test]
fn output_dir_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let status = Command::new(env!("CARGO_BIN_EXE_lgp"))
        .args(["gen-data", "--system", "oscillator", "--n", "5", "--seed", "1"])
        .env("LGP_OUTPUT_DIR", dir.path())
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    assert_eq!(read_dataset(&dir.path().join("dataset.csv")).unwrap().len(), 5);
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

#[test]
fn benchmark_summary_matches_rows() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let plan = d.join("plan.toml");
    std::fs::write(
        &plan,
        r#"
system = "pendulum"
n_q = [1]
n_train = [15]
h_train = [0.05]
methods = ["physics", "baseline"]
scenarios = 4
horizon = 6
seed = 3

[train]
restarts = 1
max_iter = 20
slack_grid = [1e-6, 1e-3]
heldout_steps = 20
"#,
    )
    .unwrap();
    let out = d.join("out");
    let code = run(&["--jobs", "2", "benchmark", "--plan", &plan.display().to_string(), "--out-dir", &out.display().to_string()]);
    assert_eq!(code, 0);
    let metrics = Table::read(&out.join("metrics.csv")).unwrap();
    assert_eq!(metrics.schema, METRICS_SCHEMA);
    let rows = metrics_from_table(&metrics).unwrap();
    assert_eq!(rows.len(), 8);
    let summary = Table::read(&out.join("summary.csv")).unwrap();
    let mc = summary.column("median_rmse").unwrap();
    let rc = summary.column("run_id").unwrap();
    for s in &summary.rows {
        let id: usize = s[rc].parse().unwrap();
        let m = median(rows.iter().filter(|r| r.run_id == id).map(|r| r.rmse).collect());
        let got: f64 = s[mc].parse().unwrap();
        assert!((got - m).abs() <= 1e-12 * m.abs().max(1.0), "run {id}: {got} vs {m}");
    }
    assert!(out.join("report.json").exists());
}

#[test]
fn bad_plan_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let plan = dir.path().join("plan.toml");
    std::fs::write(&plan, "system = \"pendulum\"\nunknown_key = 1\n").unwrap();
    assert_eq!(run(&["benchmark", "--plan", &plan.display().to_string()]), 1);
}
