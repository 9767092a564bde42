use std::path::Path;

use clap::Parser;
use lyapcert::models::save_matrix;
use lyapcert::numkernel::{from_real_rows, identity, real};
use serde_json::Value;

use crate::{main_with_args, run, Cli};

/// Exit code and error text of one invocation, as the binary would see them.
fn lyapcert(dir: &Path, args: &[&str]) -> (i32, String) {
    let mut argv = vec!["lyapcert".to_owned()];
    argv.extend(args.iter().map(|s| s.to_string()));
    if args[0] != "recheck" {
        argv.push("--out-dir".into());
        argv.push(dir.to_str().unwrap().into());
    }
    match Cli::try_parse_from(&argv) {
        Err(e) => (main_with_args(&argv), e.to_string()),
        Ok(cli) => match run(cli) {
            Ok(code) => (code, String::new()),
            Err(e) => (1, format!("error: {e:#}")),
        },
    }
}

fn report(dir: &Path, command: &str) -> Value {
    let text = std::fs::read_to_string(dir.join(format!("{command}.report.json"))).unwrap();
    serde_json::from_str(&text).unwrap()
}

fn recheck(dir: &Path, command: &str) -> i32 {
    let path = dir.join(format!("{command}.report.json"));
    lyapcert(dir, &["recheck", path.to_str().unwrap()]).0
}

#[test]
fn certify_heat_is_certified() {
    let dir = tempfile::tempdir().unwrap();
    let (code, _) = lyapcert(dir.path(), &["certify", "--family", "heat", "--n", "16"]);
    assert_eq!(code, 0);
    let r = report(dir.path(), "certify");
    assert_eq!(r["verdict"], "certified");
    assert!(r["certificate"]["epsilon"].as_f64().unwrap() > 0.0);
    assert_eq!(recheck(dir.path(), "certify"), 0);
}

#[test]
fn unstable_jordan_is_refuted() {
    let dir = tempfile::tempdir().unwrap();
    let (code, _) = lyapcert(dir.path(), &["certify", "--family", "jordan", "--n", "3", "--lambda", "1"]);
    assert_eq!(code, 2);
    let r = report(dir.path(), "certify");
    assert_eq!(r["verdict"], "refuted");
    assert!((r["witness"]["lambda"][0].as_f64().unwrap() - 1.0).abs() < 1e-12);
    assert_eq!(recheck(dir.path(), "certify"), 0);
}

#[test]
fn malformed_matrix_file_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("notamatrix.json");
    std::fs::write(&bad, "{\"rows\": 2}").unwrap();
    let (code, text) = lyapcert(dir.path(), &["certify", "--file", bad.to_str().unwrap()]);
    assert_eq!(code, 1);
    assert!(text.contains("error"), "{text}");
    let (code, _) = lyapcert(dir.path(), &["certify", "--file", dir.path().join("missing.json").to_str().unwrap()]);
    assert_eq!(code, 1);
    assert_eq!(lyapcert(dir.path(), &["certify", "--no-such-flag"]).0, 1);
}

#[test]
fn tolerance_may_only_tighten() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(lyapcert(dir.path(), &["certify", "--family", "heat", "--tol", "1e-6"]).0, 1);
    assert_eq!(lyapcert(dir.path(), &["certify", "--family", "heat", "--tol", "1e-9"]).0, 0);
}

#[test]
fn q0_examples() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(lyapcert(dir.path(), &["q0", "--family", "heat", "--n", "8"]).0, 0);
    let r = report(dir.path(), "q0");
    assert!(r["details"]["relative_gap_to_algebraic"].as_f64().unwrap() <= 1e-6, "{}", r["details"]);
    assert_eq!(recheck(dir.path(), "q0"), 0);

    assert_eq!(lyapcert(dir.path(), &["q0", "--family", "random-stable", "--n", "12", "--seed", "7"]).0, 0);
    let r = report(dir.path(), "q0");
    assert!(r["certificate"]["margin"].as_f64().unwrap() <= 1e-8 + r["details"]["tail_bound"].as_f64().unwrap());
    assert_eq!(recheck(dir.path(), "q0"), 0);

    assert_eq!(lyapcert(dir.path(), &["q0", "--family", "jordan", "--n", "3", "--lambda", "0.5"]).0, 2);
}

#[test]
fn resolvent_examples() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(lyapcert(dir.path(), &["resolvent", "--family", "heat", "--n", "16", "--delta0", "auto"]).0, 0);
    assert_eq!(recheck(dir.path(), "resolvent"), 0);
    let csv = std::fs::read_to_string(dir.path().join("resolvent_right.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "re_lambda,im_lambda,resolvent_norm,bound,ratio");

    let neg_i = dir.path().join("neg_identity.json");
    save_matrix(&(-identity(2)), &neg_i).unwrap();
    assert_eq!(lyapcert(dir.path(), &["resolvent", "--file", neg_i.to_str().unwrap()]).0, 0);
    let worst = report(dir.path(), "resolvent")["details"]["right"]["worst_ratio"].as_f64().unwrap();
    assert!((worst - 1.0).abs() <= 1e-6, "{worst}");

    let (code, text) = lyapcert(dir.path(), &["resolvent", "--file", neg_i.to_str().unwrap(), "--delta0", "10"]);
    assert_eq!(code, 1);
    assert!(text.contains("0.999999"), "suggested maximal delta0 missing: {text}");
}

#[test]
fn perturb_examples() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["perturb", "--family", "heat", "--n", "8", "--random-trials", "100", "--alpha", "2"];
    assert_eq!(lyapcert(dir.path(), &args).0, 0);
    let r = report(dir.path(), "perturb");
    assert_eq!(r["details"]["summaries"][0]["passed"], 100);
    assert_eq!(recheck(dir.path(), "perturb"), 0);

    let neg_i = dir.path().join("neg_identity.json");
    save_matrix(&(-identity(2)), &neg_i).unwrap();
    // ‖Q‖ = 1/2, so the radius at α = 2 is 1/2.
    let b = dir.path().join("b.json");
    save_matrix(&(identity(2) * real(0.75)), &b).unwrap();
    let (file, b) = (neg_i.to_str().unwrap(), b.to_str().unwrap());
    assert_eq!(lyapcert(dir.path(), &["perturb", "--file", file, "--b-file", b, "--alpha", "2"]).0, 2);
    assert_eq!(report(dir.path(), "perturb")["verdict"], "fail");
    assert_eq!(recheck(dir.path(), "perturb"), 0);

    assert_eq!(lyapcert(dir.path(), &["perturb", "--file", file, "--b-file", b, "--alpha", "1"]).0, 1);
    assert_eq!(lyapcert(dir.path(), &["perturb", "--family", "heat", "--random-trials", "5", "--alpha", "1"]).0, 1);
}

#[test]
fn leftinv_examples() {
    let dir = tempfile::tempdir().unwrap();
    let neg_i = dir.path().join("neg_identity.json");
    save_matrix(&(-identity(2)), &neg_i).unwrap();
    assert_eq!(lyapcert(dir.path(), &["leftinv", "--file", neg_i.to_str().unwrap()]).0, 0);
    let d = report(dir.path(), "leftinv")["details"].clone();
    assert!((d["c"].as_f64().unwrap() - 1.0).abs() < 1e-12);
    assert!((d["alpha"].as_f64().unwrap() - 1.0).abs() < 1e-9);
    assert!((d["theta"].as_f64().unwrap() - 0.5).abs() < 1e-12);
    assert_eq!(recheck(dir.path(), "leftinv"), 0);

    let rot = dir.path().join("rotation.json");
    save_matrix(&from_real_rows(2, 2, &[-0.1, 1.0, -1.0, -0.1]), &rot).unwrap();
    assert_eq!(lyapcert(dir.path(), &["leftinv", "--file", rot.to_str().unwrap()]).0, 0);
    let d = report(dir.path(), "leftinv")["details"].clone();
    assert!((d["alpha"].as_f64().unwrap() - 0.1).abs() < 1e-9);
    assert!((d["theta"].as_f64().unwrap() - 5.0).abs() < 1e-9);
    assert!((d["theta_lower_bound"].as_f64().unwrap() - 5.0).abs() < 1e-6);
    assert_eq!(recheck(dir.path(), "leftinv"), 0);
}

#[test]
fn refute_and_gen() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(lyapcert(dir.path(), &["refute", "--family", "jordan", "--n", "3", "--lambda", "0.5"]).0, 2);
    assert_eq!(recheck(dir.path(), "refute"), 0);
    // A stable model has no witness: inconclusive, which is not a success.
    assert_eq!(lyapcert(dir.path(), &["refute", "--family", "heat"]).0, 2);
    assert_eq!(report(dir.path(), "refute")["verdict"], "inconclusive");

    assert_eq!(lyapcert(dir.path(), &["gen", "--family", "upwind", "--n", "4"]).0, 0);
    assert!(dir.path().join("matrix.json").exists());
    assert_eq!(recheck(dir.path(), "gen"), 0);
}

#[test]
fn tampered_report_fails_recheck() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(lyapcert(dir.path(), &["certify", "--family", "heat", "--n", "6"]).0, 0);
    let path = dir.path().join("certify.report.json");
    let mut r: Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    let eps = r["certificate"]["epsilon"].as_f64().unwrap();
    r["certificate"]["epsilon"] = Value::from(eps * 1.01);
    std::fs::write(&path, serde_json::to_string(&r).unwrap()).unwrap();
    assert_eq!(recheck(dir.path(), "certify"), 2);
}
