use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn znkz(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_znkz"))
        .args(args)
        .env_remove("ZNKZ_PRECISION")
        .output()
        .expect("run znkz")
}

fn report(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("json on stdout")
}

fn curve(dir: &Path, text: &str) -> String {
    let p = dir.join("curve.json");
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

const N2M2: &str = r#"{"N": 2, "m": 2, "lambdas": [[0, 0], [1, 0], [2, 0], [3, 0]]}"#;

#[test]
fn malformed_input_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    for text in ["{", r#"{"N": 2}"#, r#"{"N": 2, "m": 2, "lambdas": [[0,0],[0,0],[1,0],[2,0]]}"#] {
        let path = curve(dir.path(), text);
        let out = znkz(&["periods", &path]);
        assert_eq!(out.status.code(), Some(2), "{text}");
        let err: Value = serde_json::from_slice(&out.stderr).unwrap();
        assert_eq!(err["error"], "input");
    }
    assert_eq!(znkz(&["periods", "/nonexistent/curve.json"]).status.code(), Some(2));
    let path = curve(dir.path(), N2M2);
    assert_eq!(znkz(&["--precision", "32", "periods", &path]).status.code(), Some(2));
}

#[test]
fn dim_count_report() {
    let out = znkz(&["dim-count", "--N", "3", "--m", "2"]);
    assert_eq!(out.status.code(), Some(0));
    let v = report(&out);
    assert_eq!(v["mult"], 5);
    assert_eq!(v["I"], 4);
    assert_eq!(v["ratio"], "5/4");
    assert_eq!(v["command"], "dim-count");
}

#[test]
fn kz_and_singlet_checks_pass() {
    let dir = tempfile::tempdir().unwrap();
    let path = curve(dir.path(), N2M2);
    let out = znkz(&["check-kz", &path]);
    assert_eq!(out.status.code(), Some(0));
    let v = report(&out);
    assert_eq!(v["pass"], true);
    assert_eq!(v["precision_bits"], 128);
    assert_eq!(v["input_sha256"].as_str().unwrap().len(), 64);
    assert_eq!(znkz(&["check-singlet", &path]).status.code(), Some(0));
    // an impossible tolerance turns the same residual into a failed check
    assert_eq!(znkz(&["check-kz", &path, "--tolerance", "0"]).status.code(), Some(1));
}

#[test]
fn precision_sources() {
    let dir = tempfile::tempdir().unwrap();
    let path = curve(dir.path(), r#"{"N": 3, "m": 1, "lambdas": [0, 1, 3], "precision_bits": 96}"#);
    assert_eq!(report(&znkz(&["periods", &path]))["precision_bits"], 96);
    assert_eq!(report(&znkz(&["--precision", "160", "periods", &path]))["precision_bits"], 160);
    let plain = curve(dir.path(), r#"{"N": 3, "m": 1, "lambdas": [0, 1, 3]}"#);
    let out = Command::new(env!("CARGO_BIN_EXE_znkz"))
        .args(["periods", &plain])
        .env("ZNKZ_PRECISION", "200")
        .output()
        .unwrap();
    assert_eq!(report(&out)["precision_bits"], 200);
}

#[test]
fn identity_exit_codes() {
    let out = znkz(&["check-identities", "--id", "rel1", "--N", "2", "--m", "2", "--trials", "10"]);
    assert_eq!(out.status.code(), Some(0));
    let v = report(&out);
    let rows = v["results"].as_array().unwrap();
    assert!(!rows.is_empty());
    assert!(rows.iter().all(|r| r["id"] == "rel1" && r["pass"] == true && r["trials"] == 10));
    let out = znkz(&["check-identities", "--id", "rel4", "--N", "2", "--m", "1", "--indices", "1,1", "--trials", "10"]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(znkz(&["check-identities", "--id", "bogus", "--N", "2", "--m", "2"]).status.code(), Some(2));
    assert_eq!(znkz(&["check-identities", "--id", "rel1", "--N", "2", "--m", "2", "--indices", "9,9"]).status.code(), Some(2));
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let path = curve(dir.path(), N2M2);
    for args in [vec!["solve", &path], vec!["check-thomae", &path], vec!["theta-solve", &path]] {
        let a = znkz(&args);
        let b = znkz(&args);
        assert_eq!(a.status.code(), Some(0), "{args:?}");
        assert_eq!(a.stdout, b.stdout, "{args:?}");
    }
    let a = znkz(&["check-identities", "--N", "2", "--m", "1", "--trials", "5", "--seed", "7"]);
    let b = znkz(&["check-identities", "--N", "2", "--m", "1", "--trials", "5", "--seed", "7"]);
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn output_file_and_fixtures() {
    let dir = tempfile::tempdir().unwrap();
    let path = curve(dir.path(), N2M2);
    let target = dir.path().join("periods.json");
    let out = znkz(&["-o", target.to_str().unwrap(), "periods", &path, "--export-cycles"]);
    assert_eq!(out.status.code(), Some(0));
    let v: Value = serde_json::from_str(&std::fs::read_to_string(&target).unwrap()).unwrap();
    for key in ["A", "tau", "sigma", "D", "err", "cycles"] {
        assert!(v.get(key).is_some(), "{key}");
    }
    let fx = dir.path().join("fx");
    assert_eq!(znkz(&["--fixtures", fx.to_str().unwrap()]).status.code(), Some(0));
    let names: Vec<_> = std::fs::read_dir(&fx).unwrap().map(|e| e.unwrap().file_name()).collect();
    assert_eq!(names.len(), 6);
    let exp: Value = serde_json::from_str(&std::fs::read_to_string(fx.join("n2m2.expected.json")).unwrap()).unwrap();
    assert_eq!(exp["provenance"]["precision_bits"], 128);
}

#[test]
fn checked_in_fixtures_are_reproduced() {
    let repo = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures");
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(znkz(&["--fixtures", dir.path().to_str().unwrap()]).status.code(), Some(0));
    for entry in std::fs::read_dir(dir.path()).unwrap() {
        let name = entry.unwrap().file_name();
        let fresh = std::fs::read(dir.path().join(&name)).unwrap();
        let stored = std::fs::read(repo.join(&name)).unwrap();
        assert!(fresh == stored, "{name:?} differs from the checked-in copy");
    }
}
