use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn graphbreak(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_graphbreak"))
        .args(args)
        .env("GRAPHBREAK_THREADS", "2")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = graphbreak(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn error_of(out: &Output) -> Value {
    serde_json::from_slice(&out.stderr).expect("stderr carries error json")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn construct_then_criterion_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let bundle = dir.path().join("bundle.json");
    let curve = dir.path().join("curve.csv");
    let summary = ok(&["construct", "--lambda", "0.75", "--n", "32", "--eps", "0.1", "--dim", "1", "-o", p(&bundle), "--csv", p(&curve)]);
    assert_eq!(summary.lines().count(), 1);
    let b = json(&bundle);
    assert!((b["delta"].as_f64().unwrap() - 0.583333).abs() < 1e-6);
    assert!((b["extrema"]["min"].as_f64().unwrap() + 7.0 / 12.0).abs() < 1e-9);
    assert!(b["extrema"]["max"].as_f64().unwrap() <= 1.0 / 32.0);
    let csv = fs::read_to_string(&curve).unwrap();
    assert!(csv.starts_with("x1,potential,derivative\n"));
    assert_eq!(csv.lines().count(), 1025);

    let report = dir.path().join("criterion.json");
    ok(&["criterion", "--bundle", p(&bundle), "-o", p(&report)]);
    let r = json(&report);
    assert_eq!(r["verdict"], "DestructionCertified");
    assert_eq!(r["mode"], "Exact1D");
}

#[test]
fn criterion_triple_examples() {
    let certified: Value = serde_json::from_str(&ok(&["criterion", "--lambda", "0.5", "--m", "-0.8", "--M", "0.01"])).unwrap();
    assert_eq!(certified["verdict"], "DestructionCertified");
    let none: Value = serde_json::from_str(&ok(&["criterion", "--lambda", "0.5", "--m", "0", "--big-m", "0"])).unwrap();
    assert_eq!(none["verdict"], "NoConclusion");
    let paper: Value =
        serde_json::from_str(&ok(&["criterion", "--lambda", "0.5", "--m", "-0.9", "--M", "0.01", "--dim", "2", "--mode", "paper"]))
            .unwrap();
    assert_eq!(paper["mode"], "PaperAsymptoticDD");
}

#[test]
fn threshold_table() {
    let rows: Vec<Value> = serde_json::from_str(&ok(&["threshold", "--lambda-grid", "0.1:0.9:0.1"])).unwrap();
    assert_eq!(rows.len(), 9);
    let half = rows.iter().find(|r| r["lambda"] == 0.5).unwrap();
    assert!((half["k0"].as_f64().unwrap() - 1.2).abs() < 1e-12);
}

#[test]
fn simulate_then_herman_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("sim.json");
    let cloud = dir.path().join("cloud.csv");
    let graph = dir.path().join("graph.json");
    ok(&[
        "simulate", "--map", "std", "--lambda", "0.5", "--k", "0.1", "--starts", "16", "-o", p(&report), "--cloud", p(&cloud),
        "--graph-out", p(&graph),
    ]);
    let r = json(&report);
    assert_eq!(r["fold_detected"], false);
    assert_eq!(r["label"], "empirical");
    assert_eq!(r["points"], 16 * 16 * 200);
    let csv = fs::read_to_string(&cloud).unwrap();
    assert!(csv.starts_with("x1,y1\n"));
    assert_eq!(csv.lines().count(), 16 * 16 * 200 + 1);

    let herman = dir.path().join("herman.json");
    ok(&["herman", "--graph", p(&graph), "--k", "0.1", "--lambda", "0.5", "-o", p(&herman)]);
    let h = json(&herman);
    assert!(h["residual_formula"].as_f64().unwrap() < 1e-8);
    assert!(h["residual_invariance"].as_f64().unwrap() < 1e-8);
    assert!(h["derivative_identity"].as_f64().unwrap() < 1e-5);
}

#[test]
fn large_standard_map_is_not_a_graph() {
    let out: Value = serde_json::from_str(&ok(&[
        "simulate", "--map", "std", "--lambda", "0.5", "--k", "2.0", "--transient", "500", "--keep", "200",
    ]))
    .unwrap();
    assert_eq!(out["verdict"], "NonGraph");
    assert_eq!(out["fold_detected"], true);
}

#[test]
fn herman_accepts_a_bundle_potential() {
    let dir = tempfile::tempdir().unwrap();
    let bundle = dir.path().join("bundle.json");
    ok(&["construct", "--lambda", "0.5", "--n", "8", "-o", p(&bundle)]);
    // the unperturbed circle is not invariant once the bundle is switched on
    let graph = dir.path().join("flat.json");
    fs::write(&graph, r#"{"dim":1,"resolution":32,"components":[{"dim":1,"resolution":32,"values":[0.0,0.0,0.0,0.0,0.0,0.0,0.0,0.0,0.0,0.0,0.0,0.0,0.0,0.0,0.0,0.0,0.0,0.0,0.0,0.0,0.0,0.0,0.0,0.0,0.0,0.0,0.0,0.0,0.0,0.0,0.0,0.0]}],"witness":null}"#).unwrap();
    let h: Value = serde_json::from_str(&ok(&["herman", "--graph", p(&graph), "--bundle", p(&bundle)])).unwrap();
    assert!(h["residual_invariance"].as_f64().unwrap() > 1e-6);
    let flat: Value = serde_json::from_str(&ok(&["herman", "--graph", p(&graph), "--lambda", "0.5"])).unwrap();
    assert!(flat["residual_formula"].as_f64().unwrap() < 1e-12);
}

#[test]
fn approx_report() {
    let out: Value = serde_json::from_str(&ok(&["approx", "--func", "exp-sin", "--degree", "16"])).unwrap();
    assert_eq!(out["N"], 16);
    assert!(out["achieved_error"].as_f64().unwrap() < 1e-3);
    assert!(out["bound"].as_f64().is_some());

    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("samples.txt");
    let values: Vec<String> = (0..64).map(|i| (2.0 * std::f64::consts::PI * i as f64 / 64.0).cos().to_string()).collect();
    fs::write(&input, values.join("\n")).unwrap();
    let out: Value =
        serde_json::from_str(&ok(&["approx", "--func", "samples", "--input", p(&input), "--degree", "8", "--k", "1"])).unwrap();
    assert!(out["achieved_error"].as_f64().unwrap() < 1e-12);
}

#[test]
fn validation_errors_exit_with_two() {
    for args in [
        &["construct", "--lambda", "1.2", "--n", "8"][..],
        &["construct", "--lambda", "0.0", "--n", "8"],
        &["construct", "--lambda", "0.5", "--n", "8", "--eps", "1.5"],
        &["construct", "--lambda", "0.5", "--n", "8", "--eps", "0"],
        &["simulate", "--map", "std", "--lambda", "1.0", "--k", "0.1"],
        &["criterion", "--lambda", "0.5"],
    ] {
        let out = graphbreak(args);
        assert_eq!(out.status.code(), Some(2), "{args:?}");
        let e = error_of(&out);
        assert_eq!(e["exit_code"], 2);
        assert!(e["error"].is_string());
    }
    let out = graphbreak(&["frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_of(&out)["error"], "UnknownCommand");
    let out = graphbreak(&["construct", "--lambda", "0.5", "--n", "8", "--bogus", "1"]);
    assert_eq!(error_of(&out)["error"], "BadConfig");
}

#[test]
fn numerical_failures_exit_with_three() {
    // an exploding standard map leaves the bounded region
    let out = graphbreak(&["simulate", "--map", "std", "--lambda", "0.5", "--k", "1e9", "--starts", "4"]);
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(error_of(&out)["error"], "Overflow");
}

#[test]
fn config_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, "# shared\nlambda = 0.25\n\n[construct]\nn = 8\neps = 0.2\n[threshold]\nlambda_grid = 0.5:0.5:0.1\n").unwrap();
    let out = dir.path().join("b.json");
    ok(&["--config", p(&cfg), "construct", "--lambda", "0.75", "-o", p(&out)]);
    let b = json(&out);
    assert_eq!(b["lambda"], 0.75);
    assert_eq!(b["n"], 8);
    assert_eq!(b["epsilon"], 0.2);

    let bad = dir.path().join("bad.cfg");
    fs::write(&bad, "this is not a pair\n").unwrap();
    let res = graphbreak(&["--config", p(&bad), "threshold"]);
    assert_eq!(res.status.code(), Some(2));
    assert_eq!(error_of(&res)["error"], "BadConfig");
}

#[test]
fn outputs_are_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let runs: Vec<[Vec<u8>; 2]> = (0..2)
        .map(|i| {
            let b = dir.path().join(format!("b{i}.json"));
            let s = dir.path().join(format!("s{i}.json"));
            ok(&["construct", "--lambda", "0.75", "--n", "16", "-o", p(&b)]);
            ok(&["simulate", "--map", "bundle", "--bundle", p(&b), "--starts", "8", "--transient", "100", "--keep", "50", "-o", p(&s)]);
            [fs::read(&b).unwrap(), fs::read(&s).unwrap()]
        })
        .collect();
    assert_eq!(runs[0], runs[1]);
}

#[test]
fn two_dimensional_bundle_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let bundle = dir.path().join("b2.json");
    ok(&["construct", "--lambda", "0.75", "--n", "8", "--dim", "2", "-o", p(&bundle)]);
    let b = json(&bundle);
    assert_eq!(b["d"], 2);
    let c: Value = serde_json::from_str(&ok(&["criterion", "--bundle", p(&bundle)])).unwrap();
    assert_eq!(c["mode"], "ExactDD");
    let s: Value =
        serde_json::from_str(&ok(&["simulate", "--map", "bundle", "--bundle", p(&bundle), "--starts", "8", "--transient", "100", "--keep", "20"]))
            .unwrap();
    assert_eq!(s["parameters"]["beta"].as_array().unwrap().len(), 2);
}
