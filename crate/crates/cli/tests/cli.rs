use std::path::{Path, PathBuf};

use nalgebra::DVector;
use rbocp::{builtin, rnea};
use rbocp_cli::config::ExperimentConfig;
use rbocp_cli::run_from;

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn rbocp(args: &[&str]) -> u8 {
    run_from(std::iter::once("rbocp").chain(args.iter().copied()))
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let p = dir.join("cfg.json");
    std::fs::write(&p, text).unwrap();
    p
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r.records().map(|rec| rec.unwrap().iter().map(String::from).collect()).collect();
    (header, rows)
}

fn column(header: &[String], name: &str) -> usize {
    header.iter().position(|h| h == name).unwrap_or_else(|| panic!("missing column {name}"))
}

const PENDULUM_MINIMAL: &str = r#"{
  "model": { "builtin": "pendulum" },
  "horizon": { "T": 1.0, "N": 20 },
  "cost": { "q_weight": 1.0, "u_weight": 0.01, "q_ref": [1.0] }
}"#;

#[test]
fn solve_writes_trajectory_and_trace() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = configs().join("pendulum_swing.json");
    let out = tmp.path().join("out");
    assert_eq!(rbocp(&["solve", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]), 0);

    let (header, rows) = read_csv(&out.join("trajectory.csv"));
    assert_eq!(rows.len(), 41);
    assert_eq!(&header[..4], ["stage", "t", "q0", "v0"]);
    assert!(rows[40][column(&header, "u0")].is_empty());

    let (th, trace) = read_csv(&out.join("trace.csv"));
    assert_eq!(th, ["iter", "kkt_error", "cost", "alpha", "eps", "t_stage_ms", "t_riccati_ms", "t_expand_ms"]);
    let last: f64 = trace.last().unwrap()[1].parse().unwrap();
    assert!(last < 1e-8, "final kkt error {last}");
}

#[test]
fn trajectory_satisfies_inverse_dynamics_after_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = configs().join("pendulum_swing.json");
    let out = tmp.path().join("out");
    assert_eq!(rbocp(&["solve", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]), 0);

    let tree = builtin("pendulum").unwrap();
    let (header, rows) = read_csv(&out.join("trajectory.csv"));
    let get = |row: &Vec<String>, name: &str| DVector::from_element(1, row[column(&header, name)].parse::<f64>().unwrap());
    for row in &rows[..rows.len() - 1] {
        let tau = rnea(&tree, &get(row, "q0"), &get(row, "v0"), &get(row, "a0"), &[]).unwrap();
        assert!((tau[0] - get(row, "u0")[0]).abs() < 1e-8);
    }
}

#[test]
fn zero_stages_is_a_config_error() {
    let text = PENDULUM_MINIMAL.replace("\"N\": 20", "\"N\": 0");
    let err = ExperimentConfig::from_json(&text).unwrap_err();
    assert!(err.to_string().contains("horizon.N"), "{err}");

    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &text);
    assert_eq!(rbocp(&["solve", "--config", cfg.to_str().unwrap(), "--out", tmp.path().to_str().unwrap()]), 1);
}

#[test]
fn unknown_keys_are_rejected() {
    let text = PENDULUM_MINIMAL.replace("\"q_ref\"", "\"q_reff\"");
    let err = ExperimentConfig::from_json(&text).unwrap_err();
    assert!(err.to_string().contains("q_reff"), "{err}");
}

#[test]
fn wrong_reference_length_names_the_field() {
    let text = PENDULUM_MINIMAL.replace("[1.0]", "[1.0, 2.0]");
    let err = ExperimentConfig::from_json(&text).and_then(|c| c.problem().map(|_| ())).unwrap_err();
    assert!(err.to_string().contains("q_ref"), "{err}");
}

#[test]
fn missing_config_and_bad_flags_exit_one() {
    assert_eq!(rbocp(&["solve"]), 1);
    assert_eq!(rbocp(&["solve", "--threads", "0"]), 1);
    assert_eq!(rbocp(&["frobnicate"]), 1);
    assert_eq!(rbocp(&["solve", "--config", "/nonexistent/cfg.json"]), 1);
}

#[test]
fn iteration_cap_exits_two() {
    let tmp = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(configs().join("pendulum_swing.json"))
        .unwrap()
        .replacen('{', r#"{ "solver": { "max_iters": 1 },"#, 1);
    let cfg = write_config(tmp.path(), &text);
    let out = tmp.path().join("out");
    assert_eq!(rbocp(&["solve", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]), 2);
    assert!(out.join("trajectory.csv").exists());
}

#[test]
fn repeated_runs_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = configs().join("foot_contact.json");
    let files = |tag: &str| {
        let out = tmp.path().join(tag);
        let args = ["solve", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--threads", "1", "--no-timing"];
        assert_eq!(rbocp(&args), 0);
        ["trajectory.csv", "trace.csv"].map(|f| std::fs::read(out.join(f)).unwrap())
    };
    assert_eq!(files("a"), files("b"));
}

#[test]
fn thread_count_does_not_change_results() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = configs().join("foot_contact.json");
    let traj = |threads: &str| {
        let out = tmp.path().join(threads);
        let args = ["solve", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--threads", threads, "--no-timing"];
        assert_eq!(rbocp(&args), 0);
        std::fs::read(out.join("trajectory.csv")).unwrap()
    };
    assert_eq!(traj("1"), traj("3"));
}

#[test]
fn robustness_writes_summary_and_traces() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("r");
    assert_eq!(rbocp(&["robustness", "--trials", "2", "--out", out.to_str().unwrap(), "--no-timing"]), 0);
    let (header, rows) = read_csv(&out.join("summary.csv"));
    assert_eq!(rows.len(), 4);
    assert!(header.contains(&"converged".to_string()));
    for k in ["invdyn/trace_000.csv", "invdyn/trace_001.csv", "ilqr/trace_000.csv"] {
        assert!(out.join(k).exists(), "{k}");
    }
}

#[test]
fn benchmark_writes_one_row_per_combination() {
    let tmp = tempfile::tempdir().unwrap();
    let text = r#"{
      "model": { "chain": 2 },
      "horizon": { "T": 1.0, "N": 5 },
      "cost": { "q_weight": 1.0 },
      "benchmark": { "trials": 3, "warmup": 1, "dofs": [2, 3], "stages": [5], "threads": [1, 2] }
    }"#;
    let cfg = write_config(tmp.path(), text);
    let out = tmp.path().join("b");
    assert_eq!(rbocp(&["benchmark", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]), 0);
    let (_, rows) = read_csv(&out.join("benchmark.csv"));
    // two invdyn rows (one per thread count) and one ilqr row per dof
    assert_eq!(rows.len(), 6);
}

#[test]
fn check_passes_on_a_small_suite() {
    assert_eq!(rbocp(&["check", "--instances", "5"]), 0);
}
