use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::{Command, Output};

fn models() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../models")
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_shrinkstab"))
        .args(args)
        .env("SHRINKSTAB_THREADS", "1")
        .output()
        .expect("binary runs")
}

fn model(name: &str) -> String {
    models().join(format!("{name}.toml")).display().to_string()
}

fn json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).expect("json on stdout")
}

#[test]
fn verify_sphere_exits_zero() {
    let out = run(&["verify", &model("sphere")]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v = json(&out);
    assert!(v["checks"].as_array().unwrap().iter().all(|c| c["pass"] == true));
}

#[test]
fn wrong_radius_fails_its_checks() {
    let out = run(&["verify", &model("sphere_radius1")]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("FAIL shrinker_residual"));
}

#[test]
fn clifford_torus_is_unstable() {
    let out = run(&["stability", &model("clifford"), "--res", "24"]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn unknown_model_key_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    std::fs::write(&path, "kind = \"sphere\"\nn = 2\np = 1\nwobble = 3\n").unwrap();
    let out = run(&["verify", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(64));
}

#[test]
fn usage_errors_exit_64() {
    assert_eq!(run(&["verify"]).status.code(), Some(64));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(64));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
}

#[test]
fn spectrum_writes_csv_and_eigenfields() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("fields.csv");
    let out = run(&["spectrum", &model("sphere"), "--count", "4", "--export-eigenfields", file.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("index,eigenvalue,classification,rayleigh_residual"));
    let first: f64 = lines.next().unwrap().split(',').nth(1).unwrap().parse().unwrap();
    assert!((first + 2.0).abs() < 1e-8, "{first}");
    let exported = std::fs::read_to_string(&file).unwrap();
    assert!(exported.lines().count() > 10);
}

#[test]
fn entropy_of_the_circle() {
    let out = run(&["entropy", &model("circle")]);
    assert_eq!(out.status.code(), Some(0));
    let lambda = json(&out)["data"]["lambda"].as_f64().unwrap();
    let exact = (2.0 * std::f64::consts::PI / std::f64::consts::E).sqrt();
    assert!((lambda - exact).abs() < 1e-6, "{lambda} vs {exact}");
}

#[test]
fn json_output_is_reproducible() {
    let a = run(&["verify", &model("plane")]);
    let b = run(&["verify", &model("plane")]);
    assert_eq!(a.stdout, b.stdout);
}

fn verdicts(name: &str, res: usize) -> BTreeMap<String, bool> {
    let out = run(&["verify", &model(name), "--res", &res.to_string()]);
    let v = json(&out);
    v["checks"]
        .as_array()
        .unwrap()
        .iter()
        .map(|c| (c["name"].as_str().unwrap().to_string(), c["pass"].as_bool().unwrap()))
        .collect()
}

/// Doubling the resolution never turns a passing check into a failing one.
#[test]
fn refinement_keeps_passing_checks() {
    for name in ["circle", "sphere", "plane", "cylinder"] {
        let mut prev = verdicts(name, 16);
        for res in [32, 64] {
            let next = verdicts(name, res);
            for (check, pass) in &prev {
                if *pass {
                    assert_eq!(next.get(check), Some(&true), "{name}: {check} regressed at res {res}");
                }
            }
            prev = next;
        }
    }
}
