use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_gen2sat"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn run_stdin(args: &[&str], input: &str) -> Output {
    use std::io::Write;
    use std::process::Stdio;
    let mut child = bin().args(args).stdin(Stdio::piped()).stdout(Stdio::piped()).stderr(Stdio::piped()).spawn().unwrap();
    child.stdin.take().unwrap().write_all(input.as_bytes()).unwrap();
    child.wait_with_output().unwrap()
}

fn json(o: &Output) -> Value {
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    serde_json::from_slice(&o.stdout).unwrap()
}

#[test]
fn help_matches_golden_files() {
    let golden = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden");
    let mut cases = vec![("help", vec!["--help"])];
    for c in ["solve", "gen", "bounds", "explore", "branch", "sweep", "threshold", "rounds"] {
        cases.push((c, vec![c, "--help"]));
    }
    for (name, args) in cases {
        let out = run(&args);
        assert!(out.status.success());
        let expected = std::fs::read_to_string(golden.join(format!("{name}.txt"))).unwrap();
        assert_eq!(String::from_utf8(out.stdout).unwrap(), expected, "help for {name} changed");
    }
}

#[test]
fn solve_exit_codes_and_witness() {
    let unsat = "c all four clauses over two variables\np cnf 2 4\n1 2 0\n-1 2 0\n1 -2 0\n-1 -2 0\n";
    let o = run_stdin(&["solve"], unsat);
    assert_eq!(o.status.code(), Some(20));
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.starts_with("UNSAT\n"));
    assert!(text.contains("contradiction variable"));

    let sat = "p cnf 3 2\n-1 2 0\n-2 -3 0\n";
    let o = run_stdin(&["solve", "-"], sat);
    assert_eq!(o.status.code(), Some(10));
    let text = String::from_utf8(o.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("SAT"));
    let vals: Vec<i64> = lines.next().unwrap().split_whitespace().skip(1).map(|t| t.parse().unwrap()).collect();
    assert_eq!(vals.last(), Some(&0));
    let assign: Vec<bool> = vals[..3].iter().map(|&v| v > 0).collect();
    assert!(!assign[0] || assign[1]);
    assert!(!assign[1] || !assign[2]);
}

#[test]
fn malformed_dimacs_is_an_error() {
    let o = run_stdin(&["solve"], "p cnf 2 1\n1 2 -1 0\n");
    assert_eq!(o.status.code(), Some(1));
    assert!(!o.stderr.is_empty());
}

#[test]
fn usage_errors_exit_two() {
    for args in [
        vec!["bounds", "--alphas", "1,1"],
        vec!["bounds", "--alphas", "1,1,1", "--unknown"],
        vec!["gen", "--n", "2", "--alphas", "9,9,9"],
        vec!["explore", "--n", "10", "--alphas", "1,1,1", "--start", "11"],
        vec!["rounds", "--n", "10000", "--alphas", "0.5,0.5,0.5"],
        vec!["sweep", "--n", "100", "--ray", "1,1,1", "--lambdas", "1,0.5", "--trials", "3"],
        vec!["nonsense"],
    ] {
        let o = run(&args);
        assert_eq!(o.status.code(), Some(2), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    }
}

#[test]
fn bounds_reports_closed_form_rho() {
    let o = run(&["bounds", "--alphas", "1,1,1"]);
    assert!(String::from_utf8_lossy(&o.stdout).contains("\"rho\": 1.0"));
    let v = json(&run(&["bounds", "--alphas", "4,0,4", "--n", "1000"]));
    assert_eq!(v["rho"], 2.0);
    assert!(v["first_moment_bound"].is_number());
}

#[test]
fn gen_writes_sidecar_and_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("f.cnf");
    let o = bin().args(["gen", "--n", "400", "--alphas", "0.5,1.5,2", "--seed", "17", "--out"]).arg(&path).output().unwrap();
    assert!(o.status.success());
    let side: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("f.cnf.json")).unwrap()).unwrap();
    assert_eq!(side["n"], 400);
    assert_eq!(side["seed"], 17);
    assert_eq!(side["alpha1"], 1.5);
    let text = std::fs::read_to_string(&path).unwrap();
    let stdout = run(&["gen", "--n", "400", "--alphas", "0.5,1.5,2", "--seed", "17"]).stdout;
    assert_eq!(text.as_bytes(), stdout.as_slice());
    let code = bin().arg("solve").arg(&path).status().unwrap().code();
    assert!(matches!(code, Some(10) | Some(20)));
}

#[test]
fn explore_emits_one_line_per_step() {
    let o = run(&["explore", "--n", "2500", "--alphas", "2,2,2", "--steps", "30", "--seed", "8"]);
    assert!(o.status.success());
    let lines: Vec<Value> = String::from_utf8(o.stdout).unwrap().lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert!(!lines.is_empty() && lines.len() <= 30);
    for (i, l) in lines.iter().enumerate() {
        assert_eq!(l["t"], i + 1);
        assert!(l["current_type"] == "positive" || l["current_type"] == "negative");
    }
    let summary: Value = serde_json::from_slice(&o.stderr).unwrap();
    assert!(summary["tau"].as_u64().unwrap() <= 30);
}

#[test]
fn sweep_reads_toml_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("sweep.toml");
    std::fs::write(&cfg, "n = [200]\nray = [1.0, 1.0, 1.0]\nlambdas = [0.5, 2.0]\ntrials = 10\nseed = 4\n").unwrap();
    let o = bin().arg("sweep").arg("--config").arg(&cfg).output().unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = String::from_utf8(o.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "n,alpha0,alpha1,alpha2,rho,trials,sat,p_hat,ci_lo,ci_hi,seconds");
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("200,0.5,0.5,0.5,0.5,10,"));

    std::fs::write(&cfg, "n = [200]\nalphas = [1.0, 1.0, 1.0]\ntrials = 10\nbogus = 1\n").unwrap();
    let o = bin().arg("sweep").arg("--config").arg(&cfg).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn threshold_output_shapes() {
    let v = json(&run(&["threshold", "--ray", "0,1,5", "--n", "1000"]));
    assert_eq!(v["outcome"], "no_transition");
    let v = json(&run(&["threshold", "--ray", "2,0,2", "--n", "3000", "--trials", "60", "--tol", "0.05", "--seed", "1"]));
    assert_eq!(v["outcome"], "crossing");
    let lambda = v["lambda"].as_f64().unwrap();
    let rho = v["rho_at_crossing"].as_f64().unwrap();
    assert!((rho - lambda).abs() < 1e-12);
    let b = &v["bracket"];
    assert!(b[1].as_f64().unwrap() - b[0].as_f64().unwrap() <= 0.05);
    assert!((0.8..1.3).contains(&rho), "{rho}");
}

#[test]
fn seeded_runs_repeat_exactly() {
    let args = ["branch", "--alphas", "3,1,2", "--trials", "500", "--horizon", "200", "--seed", "5"];
    assert_eq!(run(&args).stdout, run(&args).stdout);
    let args = ["rounds", "--n", "10000", "--alphas", "3,3,3", "--reps", "3", "--seed", "2"];
    let a = json(&run(&args));
    assert_eq!(a, json(&run(&args)));
    assert_eq!(a["outcomes"].as_array().unwrap().len(), 3);
}
