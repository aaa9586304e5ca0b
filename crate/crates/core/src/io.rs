//! JSON file formats.
//!
//! Rationals are written as strings (`"3/4"`, `"2"`, `"0.25"`) or JSON integers; JSON floats
//! are rejected so that every input is exact.
//!
//! Economy:
//!
//! ```json
//! {
//!   "goods": ["A", "B"],
//!   "supply": ["1", "2"],
//!   "agents": [
//!     {"name": "1", "utilities": ["2", "1"], "endowment": ["1/3", "2/3"]}
//!   ]
//! }
//! ```
//!
//! `goods` and `supply` are optional (default labels `A, B, ...` and unit supply); an
//! optional `n` must equal the number of agents. Allocations are `{"rows": [[...], ...]}` and
//! price systems `{"d": 2, "P": [[...], ...], "alpha": [[...], ...]}`.

use crate::economy::{default_good_labels, Allocation, Economy};
use crate::lde_model::LexPriceSystem;
use crate::rational::{one, serde_q, Q};
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: String,
        source: std::io::Error,
    },
    #[error("cannot write {path}: {source}")]
    Write {
        path: String,
        source: std::io::Error,
    },
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("shape error: {0}")]
    Shape(String),
}

impl From<serde_json::Error> for IoError {
    fn from(e: serde_json::Error) -> Self {
        // serde_json appends its own position; keep only the message
        let full = e.to_string();
        let message = match full.rfind(" at line ") {
            Some(k) => full[..k].to_string(),
            None => full,
        };
        IoError::Parse {
            line: e.line(),
            column: e.column(),
            message,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AgentFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    name: Option<String>,
    #[serde(with = "serde_q::vec")]
    utilities: Vec<Q>,
    #[serde(with = "serde_q::vec")]
    endowment: Vec<Q>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EconomyFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    goods: Option<Vec<String>>,
    #[serde(
        default,
        skip_serializing_if = "Option::is_none",
        with = "opt_vec"
    )]
    supply: Option<Vec<Q>>,
    agents: Vec<AgentFile>,
}

mod opt_vec {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &Option<Vec<Q>>, s: S) -> Result<S::Ok, S::Error> {
        match v {
            Some(v) => serde_q::vec::serialize(v, s),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Vec<Q>>, D::Error> {
        Option::<Vec<serde_q::QS>>::deserialize(d)
            .map(|o| o.map(|v| v.into_iter().map(|x| x.0).collect()))
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct AllocationFile {
    #[serde(with = "serde_q::mat")]
    rows: Vec<Vec<Q>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct PriceFile {
    d: usize,
    #[serde(rename = "P", with = "serde_q::mat")]
    p: Vec<Vec<Q>>,
    #[serde(with = "serde_q::mat")]
    alpha: Vec<Vec<Q>>,
}

fn rectangular(what: &str, rows: &[Vec<Q>], width: usize) -> Result<(), IoError> {
    for (i, r) in rows.iter().enumerate() {
        if r.len() != width {
            return Err(IoError::Shape(format!(
                "{what} row {} has {} entries, expected {width}",
                i + 1,
                r.len()
            )));
        }
    }
    Ok(())
}

/// Parses an economy. Shapes are checked here; value invariants are left to
/// [`crate::economy::validate_economy`].
pub fn parse_economy(bytes: &[u8]) -> Result<Economy, IoError> {
    let f: EconomyFile = serde_json::from_slice(bytes)?;
    let n = f.agents.len();
    if n == 0 {
        return Err(IoError::Shape("economy has no agents".into()));
    }
    if let Some(declared) = f.n {
        if declared != n {
            return Err(IoError::Shape(format!("n = {declared} but {n} agents are listed")));
        }
    }
    let m = f.agents[0].utilities.len();
    if m == 0 {
        return Err(IoError::Shape("economy has no goods".into()));
    }
    for (i, a) in f.agents.iter().enumerate() {
        if a.utilities.len() != m || a.endowment.len() != m {
            return Err(IoError::Shape(format!(
                "agent {} lists {} utilities and {} endowment entries, expected {m}",
                i + 1,
                a.utilities.len(),
                a.endowment.len()
            )));
        }
    }
    let goods = match f.goods {
        Some(g) if g.len() != m => {
            return Err(IoError::Shape(format!("{} good labels for {m} goods", g.len())))
        }
        Some(g) => g,
        None => default_good_labels(m),
    };
    let supply = match f.supply {
        Some(s) if s.len() != m => {
            return Err(IoError::Shape(format!("{} supplies for {m} goods", s.len())))
        }
        Some(s) => s,
        None => vec![one(); m],
    };
    let agent_labels = f
        .agents
        .iter()
        .enumerate()
        .map(|(i, a)| a.name.clone().unwrap_or_else(|| (i + 1).to_string()))
        .collect();
    let (utilities, endowments) = f
        .agents
        .into_iter()
        .map(|a| (a.utilities, a.endowment))
        .unzip();
    Ok(Economy {
        agent_labels,
        good_labels: goods,
        utilities,
        endowments,
        supply,
    })
}

/// Parses an allocation; rows must be non-empty and of equal length.
pub fn parse_allocation(bytes: &[u8]) -> Result<Allocation, IoError> {
    let f: AllocationFile = serde_json::from_slice(bytes)?;
    let width = f.rows.first().map(|r| r.len()).unwrap_or(0);
    if width == 0 {
        return Err(IoError::Shape("allocation is empty".into()));
    }
    rectangular("allocation", &f.rows, width)?;
    Ok(Allocation::new(f.rows))
}

/// Parses a lexicographic price system; `d` must match both matrices.
pub fn parse_price_system(bytes: &[u8]) -> Result<LexPriceSystem, IoError> {
    let f: PriceFile = serde_json::from_slice(bytes)?;
    if f.d == 0 {
        return Err(IoError::Shape("d must be at least 1".into()));
    }
    if f.p.len() != f.d || f.alpha.len() != f.d {
        return Err(IoError::Shape(format!(
            "d = {} but P has {} rows and alpha has {}",
            f.d,
            f.p.len(),
            f.alpha.len()
        )));
    }
    rectangular("P", &f.p, f.p[0].len())?;
    rectangular("alpha", &f.alpha, f.alpha[0].len())?;
    Ok(LexPriceSystem::new(f.p, f.alpha))
}

/// Economy in the file format above; `supply` is written only when not all ones.
pub fn economy_json(e: &Economy) -> serde_json::Value {
    let f = EconomyFile {
        n: None,
        goods: Some(e.good_labels.clone()),
        supply: if e.has_unit_supply() {
            None
        } else {
            Some(e.supply.clone())
        },
        agents: (0..e.n_agents())
            .map(|i| AgentFile {
                name: Some(e.agent_labels[i].clone()),
                utilities: e.utilities[i].clone(),
                endowment: e.endowments[i].clone(),
            })
            .collect(),
    };
    serde_json::to_value(f).expect("economy serializes")
}

/// Pretty JSON with a trailing newline. Key order follows struct declarations, so output
/// is byte-stable.
pub fn to_json_string<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("value serializes");
    s.push('\n');
    s
}

pub fn read_file(path: &Path) -> Result<Vec<u8>, IoError> {
    std::fs::read(path).map_err(|source| IoError::Read {
        path: path.display().to_string(),
        source,
    })
}

pub fn write_file(path: &Path, contents: &str) -> Result<(), IoError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|source| IoError::Write {
            path: dir.display().to_string(),
            source,
        })?;
    }
    std::fs::write(path, contents).map_err(|source| IoError::Write {
        path: path.display().to_string(),
        source,
    })
}

pub fn load_economy(path: &Path) -> Result<Economy, IoError> {
    parse_economy(&read_file(path)?)
}

pub fn load_allocation(path: &Path) -> Result<Allocation, IoError> {
    parse_allocation(&read_file(path)?)
}

pub fn load_price_system(path: &Path) -> Result<LexPriceSystem, IoError> {
    parse_price_system(&read_file(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::qf;

    const TABLE2: &str = r#"{
  "goods": ["A", "B"],
  "supply": ["1", "2"],
  "agents": [
    {"name": "1", "utilities": ["2", "1"], "endowment": ["1/3", "2/3"]},
    {"name": "2", "utilities": [2, 1], "endowment": ["1/3", "2/3"]},
    {"name": "3", "utilities": ["0", "1"], "endowment": ["1/3", "2/3"]}
  ]
}"#;

    #[test]
    fn economy_round_trip() {
        let e = parse_economy(TABLE2.as_bytes()).unwrap();
        assert_eq!(e.n_agents(), 3);
        assert_eq!(e.supply[1], qf(2, 1));
        assert_eq!(e.endowments[2][0], qf(1, 3));
        let again = parse_economy(to_json_string(&economy_json(&e)).as_bytes()).unwrap();
        assert_eq!(again, e);
    }

    #[test]
    fn truncated_input_reports_position() {
        let cut = &TABLE2[..TABLE2.len() / 2];
        match parse_economy(cut.as_bytes()) {
            Err(IoError::Parse { line, .. }) => assert!(line >= 4),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn floats_rejected() {
        let s = TABLE2.replace("\"1/3\", \"2/3\"]}", "0.3, 0.7]}");
        let err = parse_economy(s.as_bytes()).unwrap_err().to_string();
        assert!(err.contains("floating point"), "{err}");
    }

    #[test]
    fn ragged_rows_rejected() {
        let s = TABLE2.replace("[\"0\", \"1\"]", "[\"0\"]");
        assert!(matches!(parse_economy(s.as_bytes()), Err(IoError::Shape(_))));
        assert!(matches!(
            parse_allocation(br#"{"rows": [["1", "0"], ["1"]]}"#),
            Err(IoError::Shape(_))
        ));
    }

    #[test]
    fn price_system_shape() {
        let ok = br#"{"d": 1, "P": [["2", "0"]], "alpha": [["1/3", "1/3", "0"]]}"#;
        let sys = parse_price_system(ok).unwrap();
        assert_eq!(sys.d, 1);
        let bad = br#"{"d": 2, "P": [["2", "0"]], "alpha": [["1/3", "1/3", "0"]]}"#;
        assert!(matches!(parse_price_system(bad), Err(IoError::Shape(_))));
    }
}
