//! Command-level behavior: exit codes, reports and written files.

mod common;

use common::*;
use lexmarket::cli::{run, Execution, EXIT_INPUT, EXIT_NEGATIVE, EXIT_OK};
use lexmarket::io::{load_allocation, load_price_system, parse_allocation};
use lexmarket::rational::{q, qf};
use serde_json::Value;
use std::path::PathBuf;
use std::process::Command;

fn lexmarket(args: &[&str]) -> Execution {
    let mut all = vec!["lexmarket"];
    all.extend_from_slice(args);
    run(all)
}

fn result(exec: &Execution) -> Value {
    let v: Value = serde_json::from_str(&exec.stdout).expect("json report");
    v["result"].clone()
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("lexmarket-cli-{}-{name}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    dir
}

#[test]
fn validate_exit_codes() {
    let ok = lexmarket(&["validate", &fixture_path("table2", "economy")]);
    assert_eq!(ok.code, EXIT_OK, "{}", ok.stderr);
    let bad = lexmarket(&["validate", &fixture_path("invalid-column-sum", "economy")]);
    assert_eq!(bad.code, EXIT_NEGATIVE);
    let violations = result(&bad)["violations"].as_array().unwrap().clone();
    assert!(violations.iter().any(|v| v["good"] == 2), "{violations:?}");

    let dir = scratch("truncated");
    std::fs::create_dir_all(&dir).unwrap();
    let text = std::fs::read_to_string(fixture("table2-economy.json")).unwrap();
    let cut = dir.join("cut.json");
    std::fs::write(&cut, &text[..text.len() / 2]).unwrap();
    let exec = lexmarket(&["validate", cut.to_str().unwrap()]);
    assert_eq!(exec.code, EXIT_INPUT);
    assert!(exec.stderr.contains("line"), "{}", exec.stderr);
}

#[test]
fn verify_lde_on_fixtures() {
    let triple = |t: &str| {
        [
            fixture_path(t, "economy"),
            fixture_path(t, "allocation"),
            fixture_path(t, "prices"),
        ]
    };
    let [e, x, p] = triple("table3");
    assert_eq!(lexmarket(&["verify-lde", &e, &x, &p, "--cbp", "all"]).code, EXIT_OK);
    let [e4, x4, p4] = triple("table4");
    assert_eq!(lexmarket(&["verify-lde", &e4, &x4, &p4]).code, EXIT_OK);

    let dir = scratch("zeroed");
    std::fs::create_dir_all(&dir).unwrap();
    let zeroed = dir.join("prices.json");
    std::fs::write(
        &zeroed,
        r#"{"d": 2, "P": [["1", "0", "0"], ["0", "1", "0"]], "alpha": [["0", "0", "0"], ["0", "0", "0"]]}"#,
    )
    .unwrap();
    let exec = lexmarket(&["verify-lde", &e, &x, zeroed.to_str().unwrap()]);
    assert_eq!(exec.code, EXIT_NEGATIVE);
    assert!(exec
        .stdout
        .contains("dividend identity violated (agent 3, currency 2)"));

    // shape mismatch: Table 2 prices against the Table 3 economy
    let exec = lexmarket(&["verify-lde", &e, &x, &fixture_path("table2", "prices")]);
    assert_eq!(exec.code, EXIT_INPUT);
}

#[test]
fn core_commands() {
    let (e1, x1) = (fixture_path("table1", "economy"), fixture_path("table1", "allocation"));
    assert_eq!(lexmarket(&["core", &e1, &x1, "--notion", "stable"]).code, EXIT_OK);
    let exec = lexmarket(&["core", &e1, &x1, "--notion", "rejective", "--replicas", "2"]);
    assert_eq!(exec.code, EXIT_NEGATIVE);
    let r = result(&exec);
    let members = r["witness"]["members"].as_array().unwrap();
    let role = |a: u64| {
        members
            .iter()
            .find(|m| m["agent"] == a)
            .map(|m| m["role"].as_str().unwrap().to_string())
    };
    assert_eq!(role(1).as_deref(), Some("allocation"));
    assert_eq!(role(3).as_deref(), Some("endowment"));
    assert_eq!(r["witness_check"]["recheck"], "ok");

    let (e3, x3) = (fixture_path("table3", "economy"), fixture_path("table3", "allocation"));
    let exec = lexmarket(&["core", &e3, &x3, "--notion", "rejective", "--replicas", "inf"]);
    assert_eq!(exec.code, EXIT_OK);
    let bad = lexmarket(&["core", &e3, &x3, "--notion", "rejective", "--replicas", "0"]);
    assert_eq!(bad.code, EXIT_INPUT);
}

#[test]
fn certify_writes_systems_or_witness() {
    let dir = scratch("certify");
    let (e3, x3) = (fixture_path("table3", "economy"), fixture_path("table3", "allocation"));
    let exec = lexmarket(&["certify", &e3, &x3, "--out", dir.to_str().unwrap()]);
    assert_eq!(exec.code, EXIT_OK, "{}", exec.stderr);
    let strong = load_price_system(&dir.join("prices.json")).unwrap();
    assert!(dir.join("certified-prices.json").exists());
    assert_eq!(strong.p[0][0], q(1));

    let (e1, x1) = (fixture_path("table1", "economy"), fixture_path("table1", "allocation"));
    let exec = lexmarket(&["certify", &e1, &x1, "--out", dir.to_str().unwrap()]);
    assert_eq!(exec.code, EXIT_NEGATIVE);
    assert!(dir.join("witness.json").exists());
    assert_eq!(result(&exec)["recheck"], "ok");
}

#[test]
fn certify_satiating_allocation_gives_zero_prices() {
    let dir = scratch("satiating");
    std::fs::create_dir_all(&dir).unwrap();
    let econ = dir.join("economy.json");
    std::fs::write(
        &econ,
        r#"{"agents": [
            {"utilities": ["1", "0"], "endowment": ["0", "1"]},
            {"utilities": ["0", "1"], "endowment": ["1", "0"]}
        ]}"#,
    )
    .unwrap();
    let alloc = dir.join("allocation.json");
    std::fs::write(&alloc, r#"{"rows": [["1", "0"], ["0", "1"]]}"#).unwrap();
    let out = dir.join("out");
    let exec = lexmarket(&[
        "certify",
        econ.to_str().unwrap(),
        alloc.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(exec.code, EXIT_OK, "{}", exec.stdout);
    let sys = load_price_system(&out.join("prices.json")).unwrap();
    assert!(sys.p.iter().flatten().all(|v| *v == q(0)));

    let exec = lexmarket(&["solve", econ.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(exec.code, EXIT_OK);
    assert_eq!(result(&exec)["construction"], "satiation");
}

#[test]
fn decompose_examples() {
    let dir = scratch("decompose");
    std::fs::create_dir_all(&dir).unwrap();
    let id = dir.join("identity.json");
    std::fs::write(&id, r#"{"rows": [["1", "0", "0"], ["0", "1", "0"], ["0", "0", "1"]]}"#).unwrap();
    let exec = lexmarket(&["decompose", id.to_str().unwrap()]);
    assert_eq!(exec.code, EXIT_OK);
    assert_eq!(result(&exec)["count"], 1);

    let half = dir.join("half.json");
    std::fs::write(
        &half,
        r#"{"rows": [["1/2", "1/2", "0"], ["1/2", "1/2", "0"], ["0", "0", "1"]]}"#,
    )
    .unwrap();
    let r = result(&lexmarket(&["decompose", half.to_str().unwrap()]));
    let mut seen: Vec<Vec<u64>> = r["terms"]
        .as_array()
        .unwrap()
        .iter()
        .map(|t| {
            assert_eq!(t["weight"], "1/2");
            t["assignment"]
                .as_array()
                .unwrap()
                .iter()
                .map(|v| v.as_u64().unwrap())
                .collect()
        })
        .collect();
    seen.sort();
    assert_eq!(seen, vec![vec![1, 2, 3], vec![2, 1, 3]]);

    let exec = lexmarket(&["decompose", &fixture_path("table4", "allocation")]);
    assert_eq!(exec.code, EXIT_OK);
    assert_eq!(result(&exec)["reconstruction_exact"], true);

    let skew = dir.join("skew.json");
    std::fs::write(&skew, r#"{"rows": [["1/2", "1/2"], ["1/3", "2/3"]]}"#).unwrap();
    assert_eq!(lexmarket(&["decompose", skew.to_str().unwrap()]).code, EXIT_INPUT);
}

#[test]
fn solve_table2_single_currency() {
    let dir = scratch("solve2");
    let exec = lexmarket(&[
        "solve",
        &fixture_path("table2", "economy"),
        "--out",
        dir.to_str().unwrap(),
    ]);
    assert_eq!(exec.code, EXIT_OK, "{}", exec.stderr);
    let sys = load_price_system(&dir.join("prices.json")).unwrap();
    assert_eq!(sys.d, 1);
    // proportional to (2, 0) with dividends proportional to (1/3, 1/3, 0)
    assert_eq!(sys.p[0][1], q(0));
    let scale = &sys.p[0][0] / q(2);
    assert_eq!(sys.alpha[0], vec![qf(1, 3) * &scale, qf(1, 3) * &scale, q(0)]);
    let x = load_allocation(&dir.join("allocation.json")).unwrap();
    assert_eq!(x, allocation("table2"));
    assert!(dir.join("curve.csv").exists());
    assert!(dir.join("report.json").exists());
}

#[test]
fn solve_is_deterministic_and_exact_on_table3() {
    let a = lexmarket(&["solve", &fixture_path("table3", "economy")]);
    let b = lexmarket(&["solve", &fixture_path("table3", "economy")]);
    assert_eq!(a.code, EXIT_OK);
    assert_eq!(a.stdout, b.stdout);
    let r = result(&a);
    let x = parse_allocation(r["allocation"].to_string().as_bytes()).unwrap();
    assert_eq!(x, allocation("table3"));
    assert_eq!(r["prices"]["alpha"][1][2], "1/2");
}

#[test]
fn binary_exit_codes_and_thread_variable() {
    let bin = env!("CARGO_BIN_EXE_lexmarket");
    let out = Command::new(bin)
        .args(["validate", &fixture_path("table3", "economy")])
        .env("LEXMARKET_THREADS", "2")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(EXIT_OK));
    let bad = Command::new(bin)
        .args(["validate", &fixture_path("table3", "economy")])
        .env("LEXMARKET_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(bad.status.code(), Some(EXIT_INPUT));
    let human = Command::new(bin)
        .args(["validate", &fixture_path("table3", "economy"), "--human"])
        .output()
        .unwrap();
    assert!(String::from_utf8_lossy(&human.stdout).contains("valid"));
}
