//! Shared fixtures, random instances and brute-force oracles for the integration tests.
#![allow(dead_code)]

use lexmarket::core_stability::BlockMode;
use lexmarket::io::{load_allocation, load_economy, load_price_system};
use lexmarket::rational::{q, qf, Q};
use lexmarket::{Allocation, Economy, LexPriceSystem};
use num::Zero;
use rand::Rng;
use std::path::PathBuf;

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures")
        .join(name)
}

pub fn fixture_path(table: &str, part: &str) -> String {
    fixture(&format!("{table}-{part}.json")).display().to_string()
}

pub fn economy(table: &str) -> Economy {
    load_economy(&fixture(&format!("{table}-economy.json"))).unwrap()
}

pub fn allocation(table: &str) -> Allocation {
    load_allocation(&fixture(&format!("{table}-allocation.json"))).unwrap()
}

pub fn prices(table: &str) -> LexPriceSystem {
    load_price_system(&fixture(&format!("{table}-prices.json"))).unwrap()
}

/// Tables with a published price system.
pub const PRICED_TABLES: [&str; 7] = [
    "table2",
    "table3",
    "table4",
    "table5-eps8",
    "table5-eps16",
    "table5-eps32",
    "table6",
];

/// One economy per fixture family (table6 shares the table4 economy).
pub const TABLE_ECONOMIES: [&str; 6] = ["table1", "table2", "table3", "table4", "table5-eps8", "table6"];

/// `(1/4) * sum of four random permutation matrices`.
pub fn random_bistochastic<R: Rng>(rng: &mut R, n: usize) -> Vec<Vec<Q>> {
    let mut x = vec![vec![q(0); n]; n];
    for _ in 0..4 {
        let mut perm: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            let j = rng.gen_range(0..=i);
            perm.swap(i, j);
        }
        for i in 0..n {
            x[i][perm[i]] += qf(1, 4);
        }
    }
    x
}

/// Three agents, three goods: integer utilities in `0..5`, endowments on the quarter grid.
pub fn random_economy<R: Rng>(rng: &mut R) -> Economy {
    let u: Vec<Vec<Q>> = (0..3)
        .map(|_| (0..3).map(|_| q(rng.gen_range(0..5))).collect())
        .collect();
    let om = random_bistochastic(rng, 3);
    Economy::new(u, om)
}

pub fn dot(a: &[Q], b: &[Q]) -> Q {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// All lotteries over `m` goods with entries in multiples of `1/den`.
pub fn grid_lotteries(m: usize, den: i64) -> Vec<Vec<Q>> {
    fn rec(m: usize, left: i64, cur: &mut Vec<i64>, out: &mut Vec<Vec<i64>>) {
        if cur.len() + 1 == m {
            cur.push(left);
            out.push(cur.clone());
            cur.pop();
            return;
        }
        for k in 0..=left {
            cur.push(k);
            rec(m, left - k, cur, out);
            cur.pop();
        }
    }
    let mut raw = Vec::new();
    rec(m, den, &mut Vec::new(), &mut raw);
    raw.into_iter()
        .map(|r| r.into_iter().map(|k| qf(k, den)).collect())
        .collect()
}

/// Brute-force blocking oracle: some coalition and grid consumptions `y_i` (resolution
/// `1/den`) with `sum (y_i - omega_i) <= 0` improving on `x` in the given mode.
pub fn grid_blocks(e: &Economy, x: &Allocation, mode: BlockMode, den: i64) -> bool {
    let n = e.n_agents();
    let m = e.n_goods();
    let grid = grid_lotteries(m, den);
    let ux: Vec<Q> = (0..n).map(|i| dot(&e.utilities[i], x.row(i))).collect();
    // per agent: grid points that are weakly better, tagged with strictness
    let options: Vec<Vec<(&Vec<Q>, bool)>> = (0..n)
        .map(|i| {
            grid.iter()
                .filter_map(|y| {
                    let v = dot(&e.utilities[i], y);
                    if v > ux[i] {
                        Some((y, true))
                    } else if v == ux[i] && mode == BlockMode::WeakBlocking {
                        Some((y, false))
                    } else {
                        None
                    }
                })
                .collect()
        })
        .collect();
    for mask in 1u32..(1 << n) {
        let members: Vec<usize> = (0..n).filter(|i| mask & (1 << i) != 0).collect();
        let mut budget = vec![q(0); m];
        for &i in &members {
            for j in 0..m {
                budget[j] += &e.endowments[i][j];
            }
        }
        if search(&members, 0, &options, &mut budget, false) {
            return true;
        }
    }
    false
}

/// Compares a blocking verdict (`member` = not blocked) with the grid oracle. A block found
/// on the grid is exact, so a member verdict against it is always a disagreement; a block the
/// grid misses may need finer coordinates, so the grid is refined before disagreeing.
pub fn grid_disagrees(e: &Economy, x: &Allocation, mode: BlockMode, member: bool) -> bool {
    if member {
        return grid_blocks(e, x, mode, 12);
    }
    ![12, 24, 36].iter().any(|&d| grid_blocks(e, x, mode, d))
}

fn search(
    members: &[usize],
    k: usize,
    options: &[Vec<(&Vec<Q>, bool)>],
    budget: &mut Vec<Q>,
    strict: bool,
) -> bool {
    if k == members.len() {
        return strict;
    }
    for (y, s) in &options[members[k]] {
        if y.iter().zip(budget.iter()).any(|(a, b)| a > b) {
            continue;
        }
        for (b, a) in budget.iter_mut().zip(y.iter()) {
            *b -= a;
        }
        let found = search(members, k + 1, options, budget, strict || *s);
        for (b, a) in budget.iter_mut().zip(y.iter()) {
            *b += a;
        }
        if found {
            return true;
        }
    }
    false
}

/// Largest `sum_i w[i][perm[i]]` over permutations.
pub fn best_permutation(w: &[Vec<Q>]) -> Q {
    fn rec(w: &[Vec<Q>], i: usize, used: &mut Vec<bool>) -> Q {
        if i == w.len() {
            return Q::zero();
        }
        let mut best: Option<Q> = None;
        for j in 0..w.len() {
            if used[j] {
                continue;
            }
            used[j] = true;
            let v = &w[i][j] + rec(w, i + 1, used);
            used[j] = false;
            if best.as_ref().is_none_or(|b| v > *b) {
                best = Some(v);
            }
        }
        best.unwrap_or_else(Q::zero)
    }
    rec(w, 0, &mut vec![false; w.len()])
}
