//! Birkhoff-von Neumann decomposition by greedy peeling.

use crate::economy::split_column;
use crate::rational::{fmt_q, one, zero, Q};
use num::{Signed, Zero};
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BvnError {
    #[error("matrix is not doubly stochastic: {0}")]
    NotBistochastic(String),
    #[error("no permutation on the support (internal error)")]
    NoPermutation,
}

/// One term: weight and `perm[i]` = good assigned to agent `i`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BvnTerm {
    #[serde(with = "crate::rational::serde_q")]
    pub weight: Q,
    pub perm: Vec<usize>,
}

fn check_bistochastic(x: &[Vec<Q>]) -> Result<(), BvnError> {
    let n = x.len();
    for (i, r) in x.iter().enumerate() {
        if r.len() != n {
            return Err(BvnError::NotBistochastic(format!("row {} has wrong length", i + 1)));
        }
        if r.iter().any(|v| v.is_negative()) {
            return Err(BvnError::NotBistochastic(format!("row {} has a negative entry", i + 1)));
        }
        let s: Q = r.iter().sum();
        if s != one() {
            return Err(BvnError::NotBistochastic(format!(
                "row {} sums to {}",
                i + 1,
                fmt_q(&s)
            )));
        }
    }
    for j in 0..n {
        let s: Q = x.iter().map(|r| &r[j]).sum();
        if s != one() {
            return Err(BvnError::NotBistochastic(format!(
                "column {} sums to {}",
                j + 1,
                fmt_q(&s)
            )));
        }
    }
    Ok(())
}

/// Lexicographically smallest permutation of maximum total weight on the support of `x`.
fn best_permutation(x: &[Vec<Q>]) -> Option<Vec<usize>> {
    let n = x.len();
    // optimistic bound per suffix of rows
    let row_max: Vec<Q> = x
        .iter()
        .map(|r| r.iter().max().cloned().unwrap_or_else(zero))
        .collect();
    let mut suffix = vec![zero(); n + 1];
    for i in (0..n).rev() {
        suffix[i] = &suffix[i + 1] + &row_max[i];
    }
    struct Search<'a> {
        x: &'a [Vec<Q>],
        suffix: Vec<Q>,
        used: Vec<bool>,
        cur: Vec<usize>,
        best: Option<(Q, Vec<usize>)>,
    }
    fn dfs(s: &mut Search, i: usize, acc: Q) {
        let n = s.x.len();
        if i == n {
            if s.best.as_ref().is_none_or(|(w, _)| acc > *w) {
                s.best = Some((acc, s.cur.clone()));
            }
            return;
        }
        if let Some((w, _)) = &s.best {
            if &acc + &s.suffix[i] <= *w {
                return;
            }
        }
        for j in 0..n {
            if s.used[j] || s.x[i][j].is_zero() {
                continue;
            }
            s.used[j] = true;
            s.cur.push(j);
            let next = &acc + &s.x[i][j];
            dfs(s, i + 1, next);
            s.cur.pop();
            s.used[j] = false;
        }
    }
    let mut s = Search {
        x,
        suffix,
        used: vec![false; n],
        cur: Vec::new(),
        best: None,
    };
    dfs(&mut s, 0, zero());
    s.best.map(|(_, p)| p)
}

/// Decomposes a doubly stochastic matrix into at most `n^2 - 2n + 2` weighted permutations.
pub fn bvn_decompose(x: &[Vec<Q>]) -> Result<Vec<BvnTerm>, BvnError> {
    check_bistochastic(x)?;
    let n = x.len();
    let mut rest: Vec<Vec<Q>> = x.to_vec();
    let mut remaining = one();
    let mut out = Vec::new();
    while remaining.is_positive() {
        let perm = best_permutation(&rest).ok_or(BvnError::NoPermutation)?;
        let w = (0..n)
            .map(|i| rest[i][perm[i]].clone())
            .min()
            .ok_or(BvnError::NoPermutation)?;
        for i in 0..n {
            rest[i][perm[i]] -= &w;
        }
        remaining -= &w;
        out.push(BvnTerm { weight: w, perm });
    }
    Ok(out)
}

/// Decomposes an allocation whose columns sum to integral supplies. Columns are split into
/// unit copies first; the returned permutations refer to original good indices.
pub fn decompose_allocation(rows: &[Vec<Q>], supply: &[Q]) -> Result<Vec<BvnTerm>, BvnError> {
    let n = rows.len();
    let mut origin = Vec::new();
    let mut cols: Vec<Vec<Q>> = Vec::new();
    for (j, s) in supply.iter().enumerate() {
        if !s.is_integer() || !s.is_positive() {
            return Err(BvnError::NotBistochastic(format!(
                "good {} has non-integral supply {}",
                j + 1,
                fmt_q(s)
            )));
        }
        let k: usize = s.to_integer().try_into().unwrap_or(0);
        let col: Vec<Q> = rows.iter().map(|r| r.get(j).cloned().unwrap_or_else(zero)).collect();
        let colsum: Q = col.iter().sum();
        if colsum != *s {
            return Err(BvnError::NotBistochastic(format!(
                "column {} sums to {}, supply is {}",
                j + 1,
                fmt_q(&colsum),
                fmt_q(s)
            )));
        }
        for piece in split_column(&col, k) {
            origin.push(j);
            cols.push(piece);
        }
    }
    let square: Vec<Vec<Q>> = (0..n).map(|i| cols.iter().map(|c| c[i].clone()).collect()).collect();
    let terms = bvn_decompose(&square)?;
    Ok(terms
        .into_iter()
        .map(|t| BvnTerm {
            weight: t.weight,
            perm: t.perm.into_iter().map(|c| origin[c]).collect(),
        })
        .collect())
}

/// Sums `weight * permutation matrix` over `terms` with `m` columns.
pub fn reconstruct(terms: &[BvnTerm], n: usize, m: usize) -> Vec<Vec<Q>> {
    let mut x = vec![vec![zero(); m]; n];
    for t in terms {
        for (i, &j) in t.perm.iter().enumerate() {
            x[i][j] += &t.weight;
        }
    }
    x
}
