//! Economies, allocations and lotteries over exact rationals.
//!
//! Goods carry a supply `s_j` (default 1). An economy is valid when every column of the
//! endowment matrix sums to the supply of its good and the supplies sum to the number of
//! agents, so that the allocation set (rows sum to 1, columns sum to supply) is non-empty.

use crate::rational::{dot, fmt_q, one, q, sum, zero, Q};
use num::{Signed, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EconomyError {
    #[error("index out of range: {0}")]
    Index(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("replica count must be at least 1")]
    ZeroReplicas,
    #[error("perturbation must lie strictly between 0 and 1, got {0}")]
    EpsilonRange(String),
    #[error("allocation is not in the feasible set: {0}")]
    NotFeasible(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Economy {
    pub agent_labels: Vec<String>,
    pub good_labels: Vec<String>,
    /// `u[i][j]`
    pub utilities: Vec<Vec<Q>>,
    /// `omega[i][j]`
    pub endowments: Vec<Vec<Q>>,
    /// supply of each good
    pub supply: Vec<Q>,
}

/// One violated invariant, with the offending coordinates (1-based).
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub invariant: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub agent: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub good: Option<usize>,
    pub detail: String,
}

impl Economy {
    /// Builds an economy with unit supplies and default labels.
    pub fn new(utilities: Vec<Vec<Q>>, endowments: Vec<Vec<Q>>) -> Self {
        let m = utilities.first().map_or(0, |r| r.len());
        Self::with_supply(utilities, endowments, vec![one(); m])
    }

    pub fn with_supply(utilities: Vec<Vec<Q>>, endowments: Vec<Vec<Q>>, supply: Vec<Q>) -> Self {
        let n = utilities.len();
        let m = supply.len();
        Economy {
            agent_labels: (1..=n).map(|i| i.to_string()).collect(),
            good_labels: default_good_labels(m),
            utilities,
            endowments,
            supply,
        }
    }

    /// Supplies implied by the endowment columns.
    pub fn with_implied_supply(utilities: Vec<Vec<Q>>, endowments: Vec<Vec<Q>>) -> Self {
        let m = utilities.first().map_or(0, |r| r.len());
        let supply = (0..m)
            .map(|j| endowments.iter().fold(zero(), |a, r| a + &r[j]))
            .collect();
        Self::with_supply(utilities, endowments, supply)
    }

    pub fn n_agents(&self) -> usize {
        self.utilities.len()
    }

    pub fn n_goods(&self) -> usize {
        self.supply.len()
    }

    pub fn has_unit_supply(&self) -> bool {
        self.supply.iter().all(|s| *s == one())
    }

    pub fn u(&self, i: usize) -> &[Q] {
        &self.utilities[i]
    }

    pub fn omega(&self, i: usize) -> &[Q] {
        &self.endowments[i]
    }

    /// Goods in `argmax_j u_ij`.
    pub fn favorites(&self, i: usize) -> Vec<usize> {
        let best = self.max_utility(i);
        (0..self.n_goods())
            .filter(|&j| self.utilities[i][j] == best)
            .collect()
    }

    pub fn max_utility(&self, i: usize) -> Q {
        self.utilities[i].iter().max().cloned().unwrap_or_else(zero)
    }

    /// Smallest positive gap `u_ij - u_il` over all agents, if any.
    pub fn min_strict_gap(&self) -> Option<Q> {
        let mut best: Option<Q> = None;
        for row in &self.utilities {
            for a in row {
                for b in row {
                    if a > b {
                        let g = a - b;
                        if best.as_ref().is_none_or(|x| &g < x) {
                            best = Some(g);
                        }
                    }
                }
            }
        }
        best
    }
}

pub fn default_good_labels(m: usize) -> Vec<String> {
    (0..m)
        .map(|j| {
            if m <= 26 {
                ((b'A' + j as u8) as char).to_string()
            } else {
                format!("g{}", j + 1)
            }
        })
        .collect()
}

/// Allocation matrix `x[i][j]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Allocation {
    #[serde(with = "crate::rational::serde_q::mat")]
    pub rows: Vec<Vec<Q>>,
}

impl Allocation {
    pub fn new(rows: Vec<Vec<Q>>) -> Self {
        Allocation { rows }
    }

    pub fn row(&self, i: usize) -> &[Q] {
        &self.rows[i]
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_cols(&self) -> usize {
        self.rows.first().map_or(0, |r| r.len())
    }

    pub fn column_sums(&self) -> Vec<Q> {
        (0..self.n_cols())
            .map(|j| self.rows.iter().fold(zero(), |a, r| a + &r[j]))
            .collect()
    }

    /// Checks membership in the allocation set of `e`.
    pub fn check_feasible(&self, e: &Economy) -> Result<(), EconomyError> {
        if self.rows.len() != e.n_agents() {
            return Err(EconomyError::Shape(format!(
                "allocation has {} rows, economy has {} agents",
                self.rows.len(),
                e.n_agents()
            )));
        }
        for (i, r) in self.rows.iter().enumerate() {
            if r.len() != e.n_goods() {
                return Err(EconomyError::Shape(format!(
                    "allocation row {} has {} entries, economy has {} goods",
                    i + 1,
                    r.len(),
                    e.n_goods()
                )));
            }
            if let Some(j) = r.iter().position(|v| v.is_negative()) {
                return Err(EconomyError::NotFeasible(format!(
                    "negative entry at agent {}, good {}",
                    i + 1,
                    j + 1
                )));
            }
            if sum(r) != one() {
                return Err(EconomyError::NotFeasible(format!(
                    "row {} sums to {}",
                    i + 1,
                    fmt_q(&sum(r))
                )));
            }
        }
        for (j, c) in self.column_sums().iter().enumerate() {
            if *c != e.supply[j] {
                return Err(EconomyError::NotFeasible(format!(
                    "column {} sums to {}, supply is {}",
                    j + 1,
                    fmt_q(c),
                    fmt_q(&e.supply[j])
                )));
            }
        }
        Ok(())
    }
}

/// A sub-probability vector over goods.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Lottery {
    pub y: Vec<Q>,
}

impl Lottery {
    pub fn new(y: Vec<Q>) -> Result<Self, EconomyError> {
        if y.iter().any(|v| v.is_negative()) {
            return Err(EconomyError::NotFeasible("negative lottery entry".into()));
        }
        if sum(&y) > one() {
            return Err(EconomyError::NotFeasible("lottery mass exceeds 1".into()));
        }
        Ok(Lottery { y })
    }
}

/// Lists every violated invariant of `e`; an empty list means the economy is valid.
pub fn validate_economy(e: &Economy) -> Vec<Violation> {
    let mut out = Vec::new();
    let n = e.n_agents();
    let m = e.n_goods();
    let push = |out: &mut Vec<Violation>, inv: &str, a: Option<usize>, g: Option<usize>, d: String| {
        out.push(Violation {
            invariant: inv.into(),
            agent: a.map(|i| i + 1),
            good: g.map(|j| j + 1),
            detail: d,
        })
    };
    if e.endowments.len() != n {
        push(
            &mut out,
            "shape",
            None,
            None,
            format!("{} utility rows but {} endowment rows", n, e.endowments.len()),
        );
        return out;
    }
    if e.agent_labels.len() != n || e.good_labels.len() != m {
        push(&mut out, "shape", None, None, "label count mismatch".into());
    }
    for i in 0..n {
        for (what, row) in [("utilities", &e.utilities[i]), ("endowment", &e.endowments[i])] {
            if row.len() != m {
                push(
                    &mut out,
                    "shape",
                    Some(i),
                    None,
                    format!("{what} row has {} entries, expected {m}", row.len()),
                );
            }
        }
    }
    if !out.is_empty() {
        return out;
    }
    for i in 0..n {
        for j in 0..m {
            if e.utilities[i][j].is_negative() {
                push(
                    &mut out,
                    "u >= 0",
                    Some(i),
                    Some(j),
                    format!("utility {}", fmt_q(&e.utilities[i][j])),
                );
            }
            if e.endowments[i][j].is_negative() {
                push(
                    &mut out,
                    "omega >= 0",
                    Some(i),
                    Some(j),
                    format!("endowment {}", fmt_q(&e.endowments[i][j])),
                );
            }
        }
    }
    for j in 0..m {
        if !e.supply[j].is_positive() {
            push(
                &mut out,
                "supply > 0",
                None,
                Some(j),
                format!("supply {}", fmt_q(&e.supply[j])),
            );
        }
        let c = e.endowments.iter().fold(zero(), |a, r| a + &r[j]);
        if c != e.supply[j] {
            push(
                &mut out,
                "good column sum = supply",
                None,
                Some(j),
                format!("column sums to {}, supply is {}", fmt_q(&c), fmt_q(&e.supply[j])),
            );
        }
    }
    let total = sum(&e.supply);
    if total != q(n as i64) {
        push(
            &mut out,
            "total supply = agent count",
            None,
            None,
            format!("total supply {} for {} agents", fmt_q(&total), n),
        );
    }
    out
}

/// Agent `r*n + i` is replica `r` of agent `i`; good `r*m + j` is copy `r` of good `j`.
/// Replica copies of a good are perfect substitutes and each copy keeps the original supply.
pub fn replicate(e: &Economy, copies: usize) -> Result<Economy, EconomyError> {
    if copies == 0 {
        return Err(EconomyError::ZeroReplicas);
    }
    let n = e.n_agents();
    let m = e.n_goods();
    let mut utilities = Vec::with_capacity(n * copies);
    let mut endowments = Vec::with_capacity(n * copies);
    let mut agent_labels = Vec::new();
    for r in 0..copies {
        for i in 0..n {
            let mut urow = Vec::with_capacity(m * copies);
            let mut wrow = vec![zero(); m * copies];
            for _ in 0..copies {
                urow.extend(e.utilities[i].iter().cloned());
            }
            for j in 0..m {
                wrow[r * m + j] = e.endowments[i][j].clone();
            }
            utilities.push(urow);
            endowments.push(wrow);
            agent_labels.push(if copies == 1 {
                e.agent_labels[i].clone()
            } else {
                format!("{}#{}", e.agent_labels[i], r + 1)
            });
        }
    }
    let mut good_labels = Vec::new();
    let mut supply = Vec::new();
    for r in 0..copies {
        for j in 0..m {
            good_labels.push(if copies == 1 {
                e.good_labels[j].clone()
            } else {
                format!("{}#{}", e.good_labels[j], r + 1)
            });
            supply.push(e.supply[j].clone());
        }
    }
    Ok(Economy {
        agent_labels,
        good_labels,
        utilities,
        endowments,
        supply,
    })
}

/// Replicates an allocation the same way [`replicate`] replicates endowments.
pub fn replicate_allocation(x: &Allocation, copies: usize) -> Allocation {
    let n = x.n_rows();
    let m = x.n_cols();
    let mut rows = Vec::with_capacity(n * copies);
    for r in 0..copies {
        for i in 0..n {
            let mut row = vec![zero(); m * copies];
            for j in 0..m {
                row[r * m + j] = x.rows[i][j].clone();
            }
            rows.push(row);
        }
    }
    Allocation { rows }
}

/// Splits every good with integral supply `k` into `k` unit-supply goods.
///
/// Endowments are split greedily: agents fill copy 1 in index order, then copy 2, and so on.
/// Returns the split economy and, for each new good, the index of its original good.
/// Goods with non-integral supply cannot be split and yield an error.
pub fn split_unit_supply(e: &Economy) -> Result<(Economy, Vec<usize>), EconomyError> {
    let n = e.n_agents();
    let mut origin = Vec::new();
    let mut cols: Vec<Vec<Q>> = Vec::new();
    let mut good_labels = Vec::new();
    for j in 0..e.n_goods() {
        let s = &e.supply[j];
        if !s.is_integer() || !s.is_positive() {
            return Err(EconomyError::NotFeasible(format!(
                "good {} has non-integral supply {}",
                e.good_labels[j],
                fmt_q(s)
            )));
        }
        let k: usize = s.to_integer().try_into().unwrap_or(0);
        let column: Vec<Q> = (0..n).map(|i| e.endowments[i][j].clone()).collect();
        let pieces = split_column(&column, k);
        for (c, piece) in pieces.into_iter().enumerate() {
            origin.push(j);
            cols.push(piece);
            good_labels.push(if k == 1 {
                e.good_labels[j].clone()
            } else {
                format!("{}#{}", e.good_labels[j], c + 1)
            });
        }
    }
    let utilities = (0..n)
        .map(|i| origin.iter().map(|&j| e.utilities[i][j].clone()).collect())
        .collect();
    let endowments = (0..n)
        .map(|i| cols.iter().map(|c| c[i].clone()).collect())
        .collect();
    let m2 = origin.len();
    Ok((
        Economy {
            agent_labels: e.agent_labels.clone(),
            good_labels,
            utilities,
            endowments,
            supply: vec![one(); m2],
        },
        origin,
    ))
}

/// Splits a column with integral total `k` into `k` columns of total 1 each.
pub fn split_column(column: &[Q], k: usize) -> Vec<Vec<Q>> {
    let n = column.len();
    let mut out = vec![vec![zero(); n]; k];
    let mut copy = 0usize;
    let mut room = one();
    for (i, v) in column.iter().enumerate() {
        let mut left = v.clone();
        while left.is_positive() && copy < k {
            let take = if left <= room { left.clone() } else { room.clone() };
            out[copy][i] += &take;
            left -= &take;
            room -= &take;
            if room.is_zero() {
                copy += 1;
                room = one();
            }
        }
    }
    out
}

/// `omega_eps_ij = (eps/n) s_j + (1 - eps) omega_ij`.
pub fn perturb(e: &Economy, eps: &Q) -> Result<Economy, EconomyError> {
    if !(eps.is_positive() && *eps < one()) {
        return Err(EconomyError::EpsilonRange(fmt_q(eps)));
    }
    let n = q(e.n_agents() as i64);
    let share = eps / &n;
    let keep = one() - eps;
    let endowments = e
        .endowments
        .iter()
        .map(|row| {
            row.iter()
                .zip(&e.supply)
                .map(|(w, s)| &share * s + &keep * w)
                .collect()
        })
        .collect();
    Ok(Economy {
        endowments,
        ..e.clone()
    })
}

/// `u_i . y` exactly.
pub fn utility(e: &Economy, i: usize, y: &[Q]) -> Result<Q, EconomyError> {
    if i >= e.n_agents() {
        return Err(EconomyError::Index(format!(
            "agent {} of {}",
            i + 1,
            e.n_agents()
        )));
    }
    if y.len() != e.n_goods() {
        return Err(EconomyError::Shape(format!(
            "lottery has {} entries, expected {}",
            y.len(),
            e.n_goods()
        )));
    }
    Ok(dot(&e.utilities[i], y))
}
