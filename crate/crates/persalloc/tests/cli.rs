//! End-to-end tests of the command-line binary: exit codes, file outputs,
//! and byte-level reproducibility.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_persalloc"))
        .args(args)
        .output()
        .expect("binary should launch")
}

fn read(dir: &Path, name: &str) -> String {
    fs::read_to_string(dir.join(name)).unwrap_or_else(|e| panic!("missing {name}: {e}"))
}

#[test]
fn q1_reruns_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let out_a = tmp.path().join("a");
    let out_b = tmp.path().join("b");
    for out in [&out_a, &out_b] {
        let st = run(&[
            "q1",
            "--seed", "42",
            "--repetitions", "30",
            "--grid", "0:0.25:0.05",
            "--out", out.to_str().unwrap(),
        ]);
        assert!(st.status.success(), "stderr: {}", String::from_utf8_lossy(&st.stderr));
    }
    for name in ["q1_samples.csv", "q1_aggregate.csv", "q1_fit.csv"] {
        assert_eq!(read(&out_a, name), read(&out_b, name), "{name} differs between reruns");
    }
}

#[test]
fn thread_count_does_not_change_output() {
    let tmp = tempfile::tempdir().unwrap();
    let mut outputs = Vec::new();
    for threads in ["1", "8"] {
        let out = tmp.path().join(format!("t{threads}"));
        let st = run(&[
            "q2",
            "--seed", "7",
            "--repetitions", "40",
            "--f", "0.075",
            "--threads", threads,
            "--out", out.to_str().unwrap(),
        ]);
        assert!(st.status.success(), "stderr: {}", String::from_utf8_lossy(&st.stderr));
        outputs.push((read(&out, "heatmap.csv"), read(&out, "q2_fit.csv")));
    }
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn q2_heatmap_mass_sums_to_one() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("q2");
    let st = run(&[
        "q2",
        "--seed", "3",
        "--repetitions", "50",
        "--out", out.to_str().unwrap(),
    ]);
    assert!(st.status.success());
    let total: f64 = read(&out, "heatmap.csv")
        .lines()
        .filter(|l| !l.starts_with('#') && !l.starts_with("delta_oeb_bin"))
        .map(|l| l.rsplit(',').next().unwrap().parse::<f64>().unwrap())
        .sum();
    assert!((total - 1.0).abs() < 1e-9, "total mass {total}");
}

#[test]
fn q3_writes_axis_rows() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("q3");
    let st = run(&[
        "q3",
        "--axis", "avg-delta-oeb",
        "--repetitions", "20",
        "--grid", "0.05:0.25:0.10",
        "--out", out.to_str().unwrap(),
    ]);
    assert!(st.status.success(), "stderr: {}", String::from_utf8_lossy(&st.stderr));
    let body: Vec<String> = read(&out, "q3.csv")
        .lines()
        .filter(|l| !l.starts_with('#'))
        .map(str::to_string)
        .collect();
    assert_eq!(body[0], "axis,x,mean_rho,std_rho");
    assert_eq!(body.len(), 1 + 3);
    assert!(body[1].starts_with("avg_delta_oeb,0.05,"));
}

#[test]
fn missing_scenario_exits_3_with_path() {
    let st = run(&["solve", "--scenario", "missing.json"]);
    assert_eq!(st.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&st.stderr).contains("missing.json"));
}

#[test]
fn invalid_grid_exits_1() {
    let st = run(&["q1", "--grid", "backwards"]);
    assert_eq!(st.status.code(), Some(1));
}

#[test]
fn invalid_scenario_content_exits_1_naming_treatment() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("bad.json");
    fs::write(
        &path,
        r#"{"illnesses":["a"],
            "treatments":[{"illness":0,"label":"broken","csr_mean":0.5,"csr_std":0.0,"oeb":-1.0}],
            "population":{"n1":3,"n2":0},
            "f":0.075}"#,
    )
    .unwrap();
    let st = run(&["validate", "--scenario", path.to_str().unwrap()]);
    assert_eq!(st.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&st.stderr).contains("broken"));
}

#[test]
fn solve_builtin_scenario_writes_assignment() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("solve");
    let st = run(&[
        "solve",
        "--scenario", "bc-table1",
        "--seed", "5",
        "--out", out.to_str().unwrap(),
    ]);
    assert!(st.status.success(), "stderr: {}", String::from_utf8_lossy(&st.stderr));
    let json: serde_json::Value = serde_json::from_str(&read(&out, "assignment.json")).unwrap();
    let cost = json["total_cost"].as_f64().unwrap();
    let budget = json["budget"].as_f64().unwrap();
    let objective = json["objective"].as_f64().unwrap();
    let bound = json["lp_relaxation_bound"].as_f64().unwrap();
    assert!(cost <= budget + 1e-9);
    assert!(bound >= objective - 1e-9);
    assert!(!json["chosen"].as_array().unwrap().is_empty());
}

#[test]
fn validate_builtin_scenario_succeeds() {
    let st = run(&["validate", "--scenario", "bc-table1"]);
    assert!(st.status.success());
    assert!(String::from_utf8_lossy(&st.stdout).contains("scenario ok"));
}
