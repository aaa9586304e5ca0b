//! Replays the checked-in fuzz corpora through the same assertions as the fuzz targets.

use lexmarket::economy::validate_economy;
use lexmarket::io::{
    economy_json, parse_allocation, parse_economy, parse_price_system, to_json_string,
};
use lexmarket::rational::{fmt_q, parse_q};
use std::path::PathBuf;

fn corpus(target: &str) -> Vec<(String, Vec<u8>)> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../fuzz/corpus")
        .join(target);
    let mut out: Vec<(String, Vec<u8>)> = std::fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|f| {
            let p = f.unwrap().path();
            (p.display().to_string(), std::fs::read(&p).unwrap())
        })
        .collect();
    out.sort();
    assert!(!out.is_empty(), "empty corpus {target}");
    out
}

#[test]
fn economy_seeds() {
    let mut accepted = 0;
    for (name, data) in corpus("parse_economy") {
        if let Ok(e) = parse_economy(&data) {
            accepted += 1;
            let _ = validate_economy(&e);
            let again = parse_economy(to_json_string(&economy_json(&e)).as_bytes()).unwrap();
            assert_eq!(again, e, "{name}");
        }
    }
    assert!(accepted > 0);
}

#[test]
fn allocation_seeds() {
    for (name, data) in corpus("parse_allocation") {
        if let Ok(x) = parse_allocation(&data) {
            let again = parse_allocation(to_json_string(&x).as_bytes()).unwrap();
            assert_eq!(again, x, "{name}");
        }
    }
}

#[test]
fn price_system_seeds() {
    for (name, data) in corpus("parse_price_system") {
        let sys = parse_price_system(&data).unwrap_or_else(|e| panic!("{name}: {e}"));
        assert_eq!(sys.p.len(), sys.d);
        let again = parse_price_system(to_json_string(&sys).as_bytes()).unwrap();
        assert_eq!(again, sys, "{name}");
    }
}

#[test]
fn rational_seeds() {
    for (name, data) in corpus("parse_rational") {
        if let Ok(text) = std::str::from_utf8(&data) {
            if let Ok(v) = parse_q(text) {
                assert_eq!(parse_q(&fmt_q(&v)).unwrap(), v, "{name}");
            }
        }
    }
}
