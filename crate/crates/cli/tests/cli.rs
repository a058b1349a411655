use std::path::PathBuf;
use std::process::{Command, Output};

fn sticky(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sticky")).args(args).output().expect("run sticky")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn json(o: &Output) -> serde_json::Value {
    serde_json::from_slice(&o.stdout).unwrap_or_else(|e| panic!("{e}: {}", stdout(o)))
}

fn scratch(name: &str) -> PathBuf {
    let d = std::env::temp_dir().join(format!("sticky-cli-{}-{name}", std::process::id()));
    let _ = std::fs::remove_dir_all(&d);
    d
}

#[test]
fn heat_kernel_at_origin() {
    let o = sticky(&["density", "--x", "0", "--y", "0", "--t", "1"]);
    assert!(o.status.success());
    let v = json(&o);
    assert!((v["value"].as_f64().unwrap() - 0.398942280401).abs() < 1e-11);
}

#[test]
fn diagonal_call_matches_reduced_integrand() {
    let full = json(&sticky(&["density", "--x", "0,0", "--y", "0.3,0.3", "--t", "0.5", "--theta", "1.5"]));
    let red = json(&sticky(&["density", "--x", "0,0", "--y", "0.3,0.3", "--t", "0.5", "--theta", "1.5", "--method", "reduced"]));
    let (a, b) = (full["value"].as_f64().unwrap(), red["value"].as_f64().unwrap());
    assert!((a - b).abs() < 1e-9, "{a} vs {b}");
}

#[test]
fn increasing_start_point_is_a_domain_error() {
    let o = sticky(&["density", "--x", "0,1", "--y", "0,0", "--t", "1"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("domain error"));
}

#[test]
fn verify_boundary_and_summation_pass() {
    let o = sticky(&["verify", "--identity", "boundary", "--n", "4"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(json(&o)["passed"], true);
    let o = sticky(&["verify", "--identity", "summation", "--m", "5", "--seed", "11"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(json(&o)["checks"].as_u64().unwrap() >= 50);
}

#[test]
fn verify_constants_at_three() {
    let v = json(&sticky(&["verify", "--identity", "constants", "--n", "3"]));
    for (part, c2) in [("diffusion", "4"), ("drift", "-4")] {
        assert_eq!(v[part]["c0"], "0");
        assert_eq!(v[part]["c1"], "0");
        assert_eq!(v[part]["c2"], c2);
    }
}

#[test]
fn stochastic_commands_require_a_seed() {
    assert_eq!(sticky(&["verify", "--identity", "summation", "--m", "3"]).status.code(), Some(2));
    assert_eq!(sticky(&["compare", "--paths", "10"]).status.code(), Some(2));
}

#[test]
fn compare_unit_and_zero_paths() {
    let o = sticky(&["compare", "--preset", "unit", "--paths", "500", "--seed", "3", "--eps", "0.1"]);
    assert!(o.status.success());
    assert!(json(&o)["z"].as_f64().unwrap().abs() < 0.1);
    assert_eq!(sticky(&["compare", "--preset", "unit", "--paths", "0", "--seed", "3"]).status.code(), Some(2));
}

#[test]
fn compare_gauss_is_within_three_sigma() {
    let o = sticky(&["compare", "--preset", "gauss", "--paths", "40000", "--seed", "5", "--eps", "0.05", "--theta", "0.5"]);
    assert!(o.status.success(), "{}", stdout(&o));
    assert!(json(&o)["z"].as_f64().unwrap().abs() <= 3.0);
}

#[test]
fn output_is_independent_of_thread_count() {
    let args = ["compare", "--preset", "gap", "--paths", "20000", "--seed", "9", "--eps", "0.05"];
    let one = sticky(&[&args[..], &["--threads", "1"]].concat());
    let three = sticky(&[&args[..], &["--threads", "3"]].concat());
    assert_eq!(one.stdout, three.stdout);
}

#[test]
fn atoms_first_order_is_heat_kernel() {
    let o = sticky(&["atoms", "--n-max", "1", "--y", "0,1", "--t", "2"]);
    let text = stdout(&o);
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(rows.len(), 2);
    for (row, y) in rows.iter().zip([0.0f64, 1.0]) {
        let m: f64 = row.split(',').nth(3).unwrap().parse().unwrap();
        let want = (-y * y / 4.0).exp() / (4.0 * std::f64::consts::PI).sqrt();
        assert!((m - want).abs() < 1e-11);
    }
}

#[test]
fn fredholm_zero_lambda_and_consistency() {
    let o = sticky(&["fredholm", "--lambda", "0,0.5", "--t", "2", "--theta", "1.5", "--max-terms", "4"]);
    assert!(o.status.success());
    let text = stdout(&o);
    let rows: Vec<Vec<f64>> = text.lines().skip(1).map(|l| l.split(',').map(|v| v.parse().unwrap()).collect()).collect();
    assert_eq!(rows[0][5], 1.5);
    assert_eq!(rows[0][4], 1.0);
    assert!(rows[1][7].abs() <= 1e-5);
}

#[test]
fn config_file_with_flag_override_and_out_dir() {
    let dir = scratch("cfg");
    std::fs::create_dir_all(&dir).unwrap();
    let cfg = dir.join("run.toml");
    std::fs::write(&cfg, "command = \"density\"\nx = [0.0]\ny = [0.5]\nt = 4.0\ntheta = 2.0\n").unwrap();
    let out = dir.join("out");
    let o = sticky(&["density", "--config", cfg.to_str().unwrap(), "--t", "1", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v = json(&o);
    assert_eq!(v["t"], 1.0);
    assert_eq!(v["theta"], 2.0);
    assert_eq!(std::fs::read(out.join("density.json")).unwrap(), o.stdout);
    // the saved config reproduces the run byte for byte
    let again = sticky(&["density", "--config", out.join("density.toml").to_str().unwrap()]);
    assert_eq!(again.stdout, o.stdout);
    assert_eq!(sticky(&["atoms", "--config", cfg.to_str().unwrap()]).status.code(), Some(2));
    let _ = std::fs::remove_dir_all(&dir);
}

#[test]
fn help_names_the_computed_objects() {
    for (cmd, words) in [
        ("density", "Transition density"),
        ("verify", "identities"),
        ("compare", "random walks in random environment"),
        ("atoms", "atom sizes"),
        ("fredholm", "Fredholm determinant"),
    ] {
        let o = sticky(&[cmd, "--help"]);
        assert!(o.status.success());
        assert!(stdout(&o).contains(words), "{cmd}");
    }
}
