// SPDX-License-Identifier: MIT OR Apache-2.0

use std::path::Path;
use std::process::{Command, Output};

use concept_subspace::io::{check_units, read_records};
use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_concept-subspace"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn report(path: &Path) -> Value {
    let v: Value = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    check_units(&v).unwrap();
    v
}

fn num(v: &Value) -> f64 {
    v["value"].as_f64().unwrap_or_else(|| panic!("not a tagged number: {v}"))
}

#[test]
fn build_toy_writes_readable_files() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("ce");
    let o = run(&["build-toy", "--preset", "counterexample", "--samples", "200", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["lm.json", "records.cgrp", "projector.json"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let file = read_records(&out.join("records.cgrp")).unwrap();
    assert_eq!(file.dim, 2);
    assert!(!file.records.is_empty());
}

#[test]
fn counterexample_metrics_match_oracle() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.json");
    let o = run(&["metrics", "--preset", "counterexample", "--out", path.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v = report(&path);
    let m = &v["sections"]["metrics"];
    let h = |p: f64| -(p * p.log2() + (1.0 - p) * (1.0 - p).log2());
    assert!((num(&m["mi"]["mi_c_hperp_correlational"]) - h(0.7)).abs() < 1e-9);
    assert!(num(&m["mi"]["mi_q_c_hperp"]) <= 1e-6);
    assert!((num(&m["ratios"]["erasure"]) - 1.0).abs() <= 1e-6);
    assert_eq!(m["epsilon_flags"]["is_eraser"], true);
    // Undefined ratios are null and explained in the notes.
    assert!(m["ratios"]["containment"]["value"].is_null());
    assert!(v["notes"].as_array().unwrap().iter().any(|n| n.as_str().unwrap().contains("containment")));
}

#[test]
fn reports_are_deterministic_apart_from_timing() {
    let dir = tempfile::tempdir().unwrap();
    let mut docs = Vec::new();
    for i in 0..2 {
        let path = dir.path().join(format!("r{i}.json"));
        let o = run(&[
            "metrics", "--preset", "causal", "--mode", "mc", "--samples", "500", "--seed", "3", "--out",
            path.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        let mut v = report(&path);
        v.as_object_mut().unwrap().remove("timing");
        docs.push(serde_json::to_string(&v).unwrap());
    }
    assert_eq!(docs[0], docs[1]);
}

#[test]
fn verify_theorem1_passes_on_causal_toy() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.json");
    let o = run(&["verify-theorem1", "--seed", "7", "--out", path.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v = report(&path);
    assert!(num(&v["sections"]["theorem1"]["max_abs"]) <= 1e-9);
}

#[test]
fn verify_theorem1_fails_with_wrong_projector() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("other");
    // The oracle of a differently seeded toy removes a different subspace.
    let o = run(&["build-toy", "--preset", "causal", "--samples", "10", "--seed", "99", "--out", out.to_str().unwrap()]);
    assert!(o.status.success());
    let p = out.join("projector.json");
    let o = run(&["verify-theorem1", "--seed", "7", "--projector", p.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn verify_decomposition_passes() {
    let o = run(&["verify-decomposition", "--preset", "counterexample"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["command"], "verify-decomposition");
}

#[test]
fn exit_codes() {
    assert_eq!(run(&["metrics", "--mode", "sideways"]).status.code(), Some(2));
    assert_eq!(run(&[]).status.code(), Some(2));
    let o = run(&["metrics", "--lm", "/nonexistent/lm.json"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("lm.json"));
    assert_eq!(run(&["metrics", "--preset", "counterexample", "--samples", "0"]).status.code(), Some(1));
}

#[test]
fn fit_projector_recovers_oracle_and_records_only_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("toy");
    let o = run(&[
        "build-toy", "--preset", "causal", "--dim", "5", "--concepts", "3", "--contexts", "6", "--samples", "3000",
        "--seed", "4", "--out", out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let records = out.join("records.cgrp");
    let fitted = dir.path().join("fitted.json");
    let o = run(&[
        "fit-projector",
        "--records",
        records.to_str().unwrap(),
        "--compare",
        out.join("projector.json").to_str().unwrap(),
        "--out",
        fitted.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    check_units(&v).unwrap();
    assert!(num(&v["sections"]["fit"]["angle_to_oracle"]) < 5.0);
    assert_eq!(num(&v["sections"]["fit"]["rank_removed"]), 2.0);

    let path = dir.path().join("corr.json");
    let o = run(&[
        "metrics",
        "--records",
        records.to_str().unwrap(),
        "--projector",
        fitted.to_str().unwrap(),
        "--out",
        path.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v = report(&path);
    assert_eq!(v["mode"], "records");
    assert!(v["sections"]["metrics"].is_null());
    assert!(num(&v["sections"]["correlational"]["mi_c_h"]) > 0.0);
}

#[test]
fn oblique_fit_cannot_drive_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("toy");
    assert!(run(&["build-toy", "--preset", "causal", "--samples", "500", "--out", out.to_str().unwrap()]).status.success());
    let fitted = dir.path().join("oblique.json");
    let o = run(&[
        "fit-projector",
        "--records",
        out.join("records.cgrp").to_str().unwrap(),
        "--fit-mode",
        "oblique",
        "--out",
        fitted.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let o = run(&["metrics", "--preset", "causal", "--projector", fitted.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("oblique"));
}

#[test]
fn do_eval_prints_table_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("do.json");
    let o = run(&["do-eval", "--preset", "counterexample", "--samples", "2000", "--out", path.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.contains("erased"));
    let v = report(&path);
    let fc = &v["sections"]["forced_choice"];
    assert_eq!(num(&fc["orig_acc"]), 1.0);
    assert_eq!(num(&fc["do_acc"]), 1.0);
    assert_eq!(num(&fc["erased_acc"]), 0.5);
}
