use std::path::PathBuf;
use std::process::{Command, Output};

use serde_json::Value;

fn data(name: &str) -> String {
    let p: PathBuf = [env!("CARGO_MANIFEST_DIR"), "..", "..", "data", name].iter().collect();
    p.to_string_lossy().into_owned()
}

fn nfcount(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nfcount"))
        .args(args)
        .env_remove("NFCOUNT_CACHE_DIR")
        .output()
        .expect("spawn nfcount")
}

fn json_ok(args: &[&str]) -> Value {
    let out = nfcount(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("JSON report")
}

/// #{(a, b) : a > 0, b ≥ 0, a² + b² ≤ x, a² + b² ≡ r mod q}, i.e. Gaussian integers in the first quadrant.
fn quadrant_points(x: i64, q: i64, r: i64) -> u64 {
    let mut c = 0;
    for a in 1..=((x as f64).sqrt() as i64 + 1) {
        for b in 0..=((x as f64).sqrt() as i64 + 1) {
            let n = a * a + b * b;
            if n <= x && n.rem_euclid(q) == r.rem_euclid(q) {
                c += 1;
            }
        }
    }
    c
}

#[test]
fn field_info_gaussian() {
    let r = json_ok(&["field-info", "--field", &data("qi.json")]);
    assert_eq!(r["degree"], 2);
    assert_eq!(r["discriminant"], -4);
    assert_eq!(r["signature"], serde_json::json!([0, 1]));
    assert_eq!(r["units"]["mu_order"], 4);
    let split = r["splitting"].as_array().unwrap();
    let p5 = split.iter().find(|e| e["p"] == 5).unwrap();
    assert_eq!(p5["class"], "P1");
    let p3 = split.iter().find(|e| e["p"] == 3).unwrap();
    assert_eq!(p3["class"], "P2");
}

#[test]
fn rho_small_prime() {
    let r = json_ok(&["rho", "--field", &data("qi.json"), "-p", "5", "-m", "1", "-A", "1"]);
    assert_eq!(r["count"], 4);
    assert_eq!(r["backend"], "closed_form");
    // x² + y² ≡ 1 mod 8 with (x, y) ≡ (1, 0) mod 4: x odd, y ≡ 0 mod 4 gives x² ≡ 1, y² ≡ 0 mod 8
    let r = json_ok(&["rho", "--field", &data("qi.json"), "-p", "2", "-m", "3", "-A", "1", "--modulus", "4", "--base", "1,0"]);
    assert_eq!(r["count"], 4);
}

#[test]
fn usage_errors_exit_two() {
    let out = nfcount(&["--bogus"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
    let out = nfcount(&["rho", "--field", &data("qi.json"), "-p", "5", "-m", "1"]);
    assert_eq!(out.status.code(), Some(2));
    let out = nfcount(&["field-info", "--field", &data("missing.json")]);
    assert_eq!(out.status.code(), Some(2));
    // q with a prime factor ≥ w
    let out = nfcount(&["wtrick", "--field", &data("qi.json"), "--W", "64", "--w", "3", "-A", "1", "-T", "100", "-q", "3"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(nfcount(&["--help"]).status.success());
}

#[test]
fn budget_exhaustion_exits_three() {
    let out = nfcount(&["rho", "--field", &data("cubic23.json"), "-p", "23", "-m", "3", "-A", "1", "--budget", "1000"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("budget"));
}

#[test]
fn rk_partial_sum_matches_quadrant_count() {
    let r = json_ok(&["rk", "--field", &data("qi.json"), "-x", "1000"]);
    assert_eq!(r["partial_sum"]["sum"], quadrant_points(1000, 1, 0));
    let r = json_ok(&["rk", "--field", &data("qi.json"), "-m", "65"]);
    assert_eq!(r["r_k"], 4);
}

#[test]
fn repr_points_have_the_right_norm() {
    let r = json_ok(&["repr", "--field", &data("qi.json"), "-m", "25", "--cone", "sector:4", "--points"]);
    assert_eq!(r["count"], 3);
    for p in r["points"].as_array().unwrap() {
        let (a, b) = (p[0].as_i64().unwrap(), p[1].as_i64().unwrap());
        assert_eq!(a * a + b * b, 25);
    }
}

#[test]
fn progression_sum_matches_quadrant_count() {
    let r = json_ok(&["progression", "--field", &data("qi.json"), "--cone", "sector:4", "-x", "2000", "-q", "4", "-A", "1"]);
    assert_eq!(r["result"]["sum"], quadrant_points(2000, 4, 1));
}

#[test]
fn local_densities() {
    let r = json_ok(&["alpha", "--config", &data("config7.json"), "-p", "5", "--c", "1,2"]);
    assert_eq!(r["value"], "1/125");
    assert_eq!(r["agree"], true);
    let r = json_ok(&["beta", "--config", &data("config7.json"), "-p", "2"]);
    assert_eq!(r["value"], "1");
    assert_eq!(r["stabilized"], true);
}

#[test]
fn count_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("count.csv");
    let report = dir.path().join("count.json");
    let out = nfcount(&[
        "count",
        "--config",
        &data("config7.json"),
        "-T",
        "40",
        "--csv",
        csv.to_str().unwrap(),
        "--report",
        report.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let r: Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    let text = std::fs::read_to_string(&csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("orthant,count"));
    let total: u64 = lines.map(|l| l.split(',').nth(1).unwrap().parse::<u64>().unwrap()).sum();
    assert_eq!(r["N"], total);
    let manifest: Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("count.json.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["subcommand"], "count");
    assert!(manifest["config_hashes"].as_object().unwrap().len() >= 3);
}

#[test]
fn seeded_reports_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let mut reports = Vec::new();
    let mut hashes = Vec::new();
    for (i, threads) in ["1", "2"].iter().enumerate() {
        let path = dir.path().join(format!("r{i}.json"));
        let out = nfcount(&[
            "--seed",
            "7",
            "--threads",
            threads,
            "beta-inf",
            "--config",
            &data("config7.json"),
            "--points",
            "4096",
            "--report",
            path.to_str().unwrap(),
        ]);
        assert!(out.status.success());
        reports.push(std::fs::read(&path).unwrap());
        let m: Value = serde_json::from_slice(&std::fs::read(dir.path().join(format!("r{i}.json.manifest.json"))).unwrap()).unwrap();
        hashes.push(m["report_sha256"].clone());
    }
    assert_eq!(reports[0], reports[1]);
    assert_eq!(hashes[0], hashes[1]);
}

#[test]
fn cache_env_overrides_flag() {
    let env_dir = tempfile::tempdir().unwrap();
    let flag_dir = tempfile::tempdir().unwrap();
    let run = || {
        let m = env_dir.path().join("m.json");
        let out = Command::new(env!("CARGO_BIN_EXE_nfcount"))
            .args(["field-info", "--field", &data("cubic23.json"), "--cache-dir", flag_dir.path().to_str().unwrap()])
            .args(["--manifest", m.to_str().unwrap()])
            .env("NFCOUNT_CACHE_DIR", env_dir.path())
            .output()
            .unwrap();
        assert!(out.status.success());
        let v: Value = serde_json::from_str(&std::fs::read_to_string(m).unwrap()).unwrap();
        (v["cache"]["hits"].as_u64().unwrap(), v["cache"]["misses"].as_u64().unwrap())
    };
    assert_eq!(run(), (0, 1));
    assert_eq!(run(), (1, 0));
    assert_eq!(std::fs::read_dir(flag_dir.path()).unwrap().count(), 0);
    assert!(std::fs::read_dir(env_dir.path()).unwrap().any(|e| e.unwrap().file_name().to_string_lossy().starts_with("splitting-")));
}

#[test]
fn majorant_audit_example() {
    let r = json_ok(&[
        "majorant-audit",
        "--field",
        &data("qi.json"),
        "--f",
        "tau2",
        "--gamma",
        "0.125",
        "--c1",
        "6",
        "--T",
        "1e5",
        "--analytic-T",
        "1e8",
        "--W-override",
        "w=5",
    ]);
    // w = 5 keeps the primes 2 and 3
    let alphas: Vec<u64> = r["w"]["alphas"].as_array().unwrap().iter().map(|a| a[0].as_u64().unwrap()).collect();
    assert_eq!(alphas, vec![2, 3]);
    let checks = r["checks"].as_array().unwrap();
    let status = |n: &str| checks.iter().find(|c| c["name"] == n).unwrap()["status"].clone();
    assert_eq!(status("rk_decomposition"), "pass");
    assert_eq!(status("pointwise_majorant_tau2"), "pass");
    // every even m is exceptional at T = 10⁵, a band failure and not a pointwise one
    assert_eq!(status("exceptional_density"), "fail");
    assert_eq!(r["pass"], false);
}

#[test]
fn w_override_forms() {
    let base = ["majorant-audit", "--field", "", "--f", "tau2", "--T", "2000", "--no-counter"];
    let field = data("qi.json");
    let mut args = base.to_vec();
    args[2] = &field;
    let mut explicit = args.clone();
    explicit.extend(["--W-override", "W=64"]);
    let r = json_ok(&explicit);
    assert_eq!(r["w"]["modulus"], "64");
    assert_eq!(r["w_mod"], 64);
    let mut clash = args.clone();
    clash.extend(["--W-override", "W=64", "--W-override", "w=5"]);
    assert_eq!(nfcount(&clash).status.code(), Some(2));
    let mut bad = args.clone();
    bad.extend(["--W-override", "z=1"]);
    assert_eq!(nfcount(&bad).status.code(), Some(2));
}
