use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn aecurv(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_aecurv"))
        .args(args)
        .env("AECURV_THREADS", "2")
        .output()
        .expect("binary runs")
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("valid JSON on stdout")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn eval_flat_is_zero() {
    let out = aecurv(&["eval", "--metric", "flat", "--at", "5,0,0"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let v = json(&out);
    assert_eq!(v["schema"], 1);
    let f = &v["result"]["frames"][0];
    assert_eq!(f["q"].as_f64(), Some(0.0));
    assert_eq!(f["scalar"].as_f64(), Some(0.0));
    for key in ["ricci", "schouten", "bach", "t", "j", "g_j"] {
        for row in f[key].as_array().unwrap() {
            assert!(
                row.as_array()
                    .unwrap()
                    .iter()
                    .all(|x| x.as_f64() == Some(0.0)),
                "{key}"
            );
        }
    }
}

#[test]
fn eval_schwarzschild_is_scalar_flat() {
    let out = aecurv(&[
        "eval",
        "--metric",
        "schwarzschild_isotropic",
        "--param",
        "m=1",
        "--at",
        "10,0,0",
    ]);
    assert_eq!(code(&out), 0);
    let r = json(&out)["result"]["frames"][0]["scalar"]
        .as_f64()
        .unwrap();
    assert!(r.abs() < 1e-10, "{r}");
}

#[test]
fn eval_low_order_is_a_contract_error() {
    let out = aecurv(&[
        "eval",
        "--metric",
        "schwarzschild_isotropic",
        "--at",
        "10,0,0",
        "--order",
        "3",
    ]);
    assert_eq!(code(&out), 3);
    assert!(stderr(&out).contains("Q requires derivative order 4"));
    assert!(out.stdout.is_empty());
}

#[test]
fn config_and_domain_errors() {
    assert_eq!(
        code(&aecurv(&["eval", "--metric", "nope", "--at", "1,2,3"])),
        2
    );
    assert_eq!(
        code(&aecurv(&["eval", "--metric", "flat", "--at", "1,2"])),
        2
    );
    assert_eq!(
        code(&aecurv(&["eval", "--metric", "flat", "--param", "n"])),
        2
    );
    assert_eq!(
        code(&aecurv(&["flux", "--metric", "flat", "--radii", "1"])),
        2
    );
    assert_eq!(code(&aecurv(&["eval", "--bogus"])), 2);
    let inside = aecurv(&["eval", "--metric", "flat", "--at", "0.5,0,0"]);
    assert_eq!(code(&inside), 3);
    assert!(stderr(&inside).contains("excluded ball"));
}

#[test]
fn check_passes_on_flat_and_conformal() {
    let out = aecurv(&[
        "check", "--metric", "flat", "--param", "n=5", "--count", "10",
    ]);
    assert_eq!(code(&out), 0);
    for r in json(&out)["result"]["report"]["residuals"]
        .as_array()
        .unwrap()
    {
        assert_eq!(r["max"].as_f64(), Some(0.0));
    }
    let out = aecurv(&["check", "--metric", "conformal", "--count", "20"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
}

#[test]
fn corrupted_formula_fails_the_check() {
    let out = aecurv(&[
        "check",
        "--metric",
        "conformal",
        "--count",
        "5",
        "--fault",
        "bach-laplacian",
    ]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("tolerance breach"));
    assert_eq!(json(&out)["result"]["passed"], false);
}

#[test]
fn check_needs_order_five() {
    let out = aecurv(&["check", "--metric", "flat", "--order", "4"]);
    assert_eq!(code(&out), 3);
    assert!(stderr(&out).contains("requires derivative order 5"));
}

#[test]
fn flux_adm_schwarzschild() {
    let out = aecurv(&[
        "flux",
        "adm",
        "--metric",
        "schwarzschild_isotropic",
        "--param",
        "m=1",
    ]);
    assert_eq!(code(&out), 0);
    let lim = json(&out)["result"]["functionals"][0]["limit"]
        .as_f64()
        .unwrap();
    assert!((lim - 1.0).abs() < 1e-4, "{lim}");
}

#[test]
fn flux_energy_ratio_in_five_dimensions() {
    let out = aecurv(&[
        "flux",
        "thm45",
        "--metric",
        "conformal",
        "--param",
        "n=5",
        "--param",
        "u=1 + a*r^(-1)",
        "--param",
        "exponent=1.3333333333333333",
        "--quad-degree",
        "2",
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let r = &json(&out)["result"]["energy_ratio"];
    let ratio = r["ratio"].as_f64().unwrap();
    assert!((ratio - 1.0 / 32.0).abs() < 0.01 / 32.0, "{ratio}");
}

#[test]
fn flux_on_flat_is_zero() {
    let out = aecurv(&[
        "flux",
        "adm",
        "adm-einstein",
        "energy",
        "gj",
        "charge",
        "--metric",
        "flat",
        "--quad-degree",
        "2",
        "--format",
        "csv",
    ]);
    assert_eq!(code(&out), 0);
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("functional,radius,value,fit"));
    for l in lines {
        let v: f64 = l.split(',').nth(2).unwrap().parse().unwrap();
        assert_eq!(v, 0.0, "{l}");
    }
}

#[test]
fn decay_of_schwarzschild_metric() {
    let out = aecurv(&[
        "decay",
        "--metric",
        "schwarzschild_isotropic",
        "--field",
        "metric",
        "--norm",
        "inf:-1",
    ]);
    assert_eq!(code(&out), 0);
    let r = &json(&out)["result"]["report"];
    let e = r["exponent"].as_f64().unwrap();
    assert!((e - 1.0).abs() < 0.05, "{e}");
    assert_eq!(r["norms"][0]["p"], "inf");
}

#[test]
fn linearize_diagonal_perturbation() {
    let out = aecurv(&[
        "linearize",
        "--metric",
        "diagonal_perturbation",
        "--param",
        "n=4",
        "--param",
        "eps=1",
    ]);
    assert_eq!(code(&out), 0);
    let s = json(&out)["result"]["points"][0]["slope"].as_f64().unwrap();
    assert!((s - 2.0).abs() < 0.1, "{s}");
}

#[test]
fn catalog_lists_five_entries() {
    let out = aecurv(&["catalog"]);
    assert_eq!(code(&out), 0);
    assert_eq!(json(&out)["result"]["entries"].as_array().unwrap().len(), 5);
}

fn run_to(dir: &Path, name: &str, args: &[&str]) -> Vec<u8> {
    let path = dir.join(name);
    let mut full: Vec<&str> = args.to_vec();
    let p = path.to_str().unwrap().to_string();
    full.push("--out");
    full.push(&p);
    let out = aecurv(&full);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    std::fs::read(&path).unwrap()
}

#[test]
fn outputs_are_deterministic_and_replayable() {
    let dir = tempfile::tempdir().unwrap();
    let args = [
        "decay",
        "--metric",
        "product_decay",
        "--param",
        "tau=1.5",
        "--seed",
        "7",
        "--radii",
        "1,5",
    ];
    let a = run_to(dir.path(), "a.json", &args);
    let b = run_to(dir.path(), "b.json", &args);
    assert_eq!(a, b);
    let first = dir.path().join("a.json");
    let replayed = run_to(dir.path(), "c.json", &["replay", first.to_str().unwrap()]);
    assert_eq!(a, replayed);
    let v: Value = serde_json::from_slice(&a).unwrap();
    assert_eq!(v["config"]["samples"], 64);
    assert_eq!(v["config"]["seed"], 7);
}

#[test]
fn points_and_metric_files() {
    let dir = tempfile::tempdir().unwrap();
    let pts = dir.path().join("pts.txt");
    std::fs::write(&pts, "# two points\n3 0 0\n0, 4, 1\n").unwrap();
    let metric = dir.path().join("m.json");
    std::fs::write(
        &metric,
        r#"{"dim": 3, "components": [["1 + a/r", "0", "0"], ["1 + a/r", "0"], ["1 + a/r"]], "params": {"a": 0.5}, "inner_radius": 1.0}"#,
    )
    .unwrap();
    let out = aecurv(&[
        "eval",
        "--metric-file",
        metric.to_str().unwrap(),
        "--points",
        pts.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert_eq!(json(&out)["result"]["frames"].as_array().unwrap().len(), 2);
}

#[test]
fn decay_with_yamabe_and_harmonic_probes() {
    let out = aecurv(&[
        "decay",
        "--metric",
        "schwarzschild_isotropic",
        "--radii",
        "1,4",
        "--yamabe",
        "--harmonic",
        "256",
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let r = &json(&out)["result"];
    assert_eq!(r["yamabe"]["all_positive"], true);
    assert!(r["harmonic"]["residual"].as_f64().unwrap() < 1e-6);
    let bad = aecurv(&[
        "decay",
        "--metric",
        "diagonal_perturbation",
        "--harmonic",
        "64",
    ]);
    assert_eq!(code(&bad), 2);
}
