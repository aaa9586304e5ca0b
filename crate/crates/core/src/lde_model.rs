//! Lexicographic price systems and the equilibrium predicates.
//!
//! Currencies and agents are 0-indexed internally. Reports print 1-based indices.

use crate::economy::{Allocation, Economy};
use crate::lp_kernel::{
    max_linear_over, restricted_vertices, solve_lp, Direction, LinearProgram, LpError, LpStatus,
    Sense, VertexError,
};
use crate::rational::{dot, fmt_q, max0, one, serde_q, sub_vec, sum, zero, Q};
use num::{Signed, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ModelError {
    #[error("length mismatch: {0}")]
    Length(String),
    #[error("invalid lottery: {0}")]
    Lottery(String),
    #[error(transparent)]
    Lp(#[from] LpError),
    #[error(transparent)]
    Vertex(#[from] VertexError),
}

/// `(d, P, alpha)` with `P` of shape `d x goods` and `alpha` of shape `d x agents`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LexPriceSystem {
    pub d: usize,
    #[serde(rename = "P", with = "serde_q::mat")]
    pub p: Vec<Vec<Q>>,
    #[serde(with = "serde_q::mat")]
    pub alpha: Vec<Vec<Q>>,
}

impl LexPriceSystem {
    pub fn new(p: Vec<Vec<Q>>, alpha: Vec<Vec<Q>>) -> Self {
        LexPriceSystem {
            d: p.len(),
            p,
            alpha,
        }
    }

    /// Single currency with all prices and dividends zero.
    pub fn zero(goods: usize, agents: usize) -> Self {
        Self::new(vec![vec![zero(); goods]], vec![vec![zero(); agents]])
    }

    pub fn check_shape(&self, e: &Economy) -> Result<(), ModelError> {
        if self.d == 0 || self.p.len() != self.d || self.alpha.len() != self.d {
            return Err(ModelError::Length(format!(
                "d = {} but P has {} rows and alpha has {}",
                self.d,
                self.p.len(),
                self.alpha.len()
            )));
        }
        for (k, row) in self.p.iter().enumerate() {
            if row.len() != e.n_goods() {
                return Err(ModelError::Length(format!(
                    "price row {} has {} entries, expected {}",
                    k + 1,
                    row.len(),
                    e.n_goods()
                )));
            }
        }
        for (k, row) in self.alpha.iter().enumerate() {
            if row.len() != e.n_agents() {
                return Err(ModelError::Length(format!(
                    "dividend row {} has {} entries, expected {}",
                    k + 1,
                    row.len(),
                    e.n_agents()
                )));
            }
        }
        Ok(())
    }

    pub fn income(&self, e: &Economy, i: usize, k: usize) -> Q {
        dot(&self.p[k], e.omega(i)) + &self.alpha[k][i]
    }
}

/// `v <=_lex w`.
pub fn lex_leq(v: &[Q], w: &[Q]) -> Result<bool, ModelError> {
    if v.len() != w.len() {
        return Err(ModelError::Length(format!("{} vs {}", v.len(), w.len())));
    }
    for (a, b) in v.iter().zip(w) {
        if a != b {
            return Ok(a < b);
        }
    }
    Ok(true)
}

/// `alpha_ik = max(p_k.(x_i - omega_i), 0)`.
pub fn dividends_from(e: &Economy, x: &Allocation, p: &[Vec<Q>]) -> Vec<Vec<Q>> {
    p.iter()
        .map(|pk| {
            (0..e.n_agents())
                .map(|i| max0(dot(pk, &sub_vec(x.row(i), e.omega(i)))))
                .collect()
        })
        .collect()
}

/// First currency with positive income, or `d - 1`.
pub fn agent_tier(e: &Economy, sys: &LexPriceSystem, i: usize) -> usize {
    (0..sys.d)
        .find(|&k| sys.income(e, i, k).is_positive())
        .unwrap_or(sys.d - 1)
}

/// First currency with a non-zero price for good `j`, or `d - 1`.
pub fn good_tier(sys: &LexPriceSystem, j: usize) -> usize {
    (0..sys.d)
        .find(|&k| !sys.p[k][j].is_zero())
        .unwrap_or(sys.d - 1)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TierIndexSet {
    /// `k_i` per agent
    pub agent_tiers: Vec<usize>,
    /// `k^j` per good
    pub good_tiers: Vec<usize>,
    /// `S_k`: goods unpriced in every currency before `k`
    pub free_goods: Vec<Vec<usize>>,
    /// `T_k`: agents with positive income in some currency before `k`
    pub funded_agents: Vec<Vec<usize>>,
}

pub fn tier_indices(e: &Economy, sys: &LexPriceSystem) -> TierIndexSet {
    let n = e.n_agents();
    let m = e.n_goods();
    let free_goods = (0..sys.d)
        .map(|k| {
            (0..m)
                .filter(|&j| (0..k).all(|l| sys.p[l][j].is_zero()))
                .collect()
        })
        .collect();
    let funded_agents = (0..sys.d)
        .map(|k| {
            (0..n)
                .filter(|&i| (0..k).any(|l| sys.income(e, i, l).is_positive()))
                .collect()
        })
        .collect();
    TierIndexSet {
        agent_tiers: (0..n).map(|i| agent_tier(e, sys, i)).collect(),
        good_tiers: (0..m).map(|j| good_tier(sys, j)).collect(),
        free_goods,
        funded_agents,
    }
}

/// Budget rows `p_k.y <= p_k.omega_i + alpha_ik` for `k <= k_i`.
pub fn budget_rows(e: &Economy, i: usize, sys: &LexPriceSystem) -> Vec<(Vec<Q>, Q)> {
    let ki = agent_tier(e, sys, i);
    (0..=ki)
        .map(|k| (sys.p[k].clone(), sys.income(e, i, k)))
        .collect()
}

fn check_lottery(e: &Economy, y: &[Q]) -> Result<(), ModelError> {
    if y.len() != e.n_goods() {
        return Err(ModelError::Length(format!(
            "lottery has {} entries, expected {}",
            y.len(),
            e.n_goods()
        )));
    }
    if y.iter().any(|v| v.is_negative()) || sum(y) > one() {
        return Err(ModelError::Lottery(
            "entries must be nonnegative with total at most 1".into(),
        ));
    }
    Ok(())
}

pub fn budget_contains(
    e: &Economy,
    i: usize,
    y: &[Q],
    sys: &LexPriceSystem,
) -> Result<bool, ModelError> {
    check_lottery(e, y)?;
    Ok(budget_rows(e, i, sys)
        .iter()
        .all(|(p, b)| dot(p, y) <= *b))
}

/// Maximum utility over the budget set and an optimal bundle.
pub fn demand(e: &Economy, i: usize, sys: &LexPriceSystem) -> Result<(Q, Vec<Q>), ModelError> {
    let rows = budget_rows(e, i, sys);
    match max_linear_over(e.u(i), &rows, &[])? {
        Some(r) => Ok(r),
        // the zero bundle is always affordable because incomes are nonnegative when prices are
        None => Err(ModelError::Lottery("empty budget set".into())),
    }
}

pub fn check_simple_prices(sys: &LexPriceSystem) -> bool {
    let m = sys.p.first().map_or(0, |r| r.len());
    (0..m).all(|j| sys.p.iter().filter(|r| !r[j].is_zero()).count() <= 1)
}

/// Exact witness attached to a failed condition.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Witness {
    Bundle {
        agent: usize,
        #[serde(with = "serde_q::vec")]
        y: Vec<Q>,
    },
    Aggregate {
        terms: Vec<AggregateTerm>,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AggregateTerm {
    pub agent: usize,
    #[serde(with = "serde_q")]
    pub beta: Q,
    #[serde(with = "serde_q::vec")]
    pub y: Vec<Q>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Condition {
    pub name: String,
    pub passed: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub agent: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub currency: Option<usize>,
    pub detail: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<Witness>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Default)]
pub struct VerificationReport {
    pub verdict: bool,
    pub conditions: Vec<Condition>,
}

impl VerificationReport {
    fn new() -> Self {
        VerificationReport {
            verdict: true,
            conditions: Vec::new(),
        }
    }

    fn pass(&mut self, name: &str, detail: String) {
        self.conditions.push(Condition {
            name: name.into(),
            passed: true,
            agent: None,
            currency: None,
            detail,
            witness: None,
        });
    }

    fn fail(
        &mut self,
        name: &str,
        agent: Option<usize>,
        currency: Option<usize>,
        detail: String,
        witness: Option<Witness>,
    ) {
        self.verdict = false;
        self.conditions.push(Condition {
            name: name.into(),
            passed: false,
            agent: agent.map(|a| a + 1),
            currency: currency.map(|k| k + 1),
            detail,
            witness,
        });
    }

    /// Appends the conditions of `other`, combining verdicts.
    pub fn merge(&mut self, other: VerificationReport) {
        self.verdict &= other.verdict;
        self.conditions.extend(other.conditions);
    }

    pub fn failures(&self) -> impl Iterator<Item = &Condition> {
        self.conditions.iter().filter(|c| !c.passed)
    }

    pub fn single(name: &str, passed: bool, detail: String) -> Self {
        let mut r = Self::new();
        if passed {
            r.pass(name, detail);
        } else {
            r.fail(name, None, None, detail, None);
        }
        r
    }
}

fn vec_str(v: &[Q]) -> String {
    format!("({})", v.iter().map(fmt_q).collect::<Vec<_>>().join(", "))
}

/// Checks the three defining conditions of an LDE, plus allocation feasibility.
pub fn verify_lde(
    e: &Economy,
    x: &Allocation,
    sys: &LexPriceSystem,
) -> Result<VerificationReport, ModelError> {
    sys.check_shape(e)?;
    let mut r = VerificationReport::new();
    match x.check_feasible(e) {
        Ok(()) => r.pass("allocation feasible", "rows sum to 1, columns to supply".into()),
        Err(err) => {
            r.fail("allocation feasible", None, None, err.to_string(), None);
            return Ok(r);
        }
    }

    let mut sign_ok = true;
    for j in 0..e.n_goods() {
        if let Some(k) = (0..sys.d).find(|&k| !sys.p[k][j].is_zero()) {
            if sys.p[k][j].is_negative() {
                sign_ok = false;
                r.fail(
                    "first non-zero price positive",
                    None,
                    Some(k),
                    format!("good {} has first non-zero price {}", j + 1, fmt_q(&sys.p[k][j])),
                    None,
                );
            }
        }
    }
    if sign_ok {
        r.pass("first non-zero price positive", "every price column".into());
    }

    let div = dividends_from(e, x, &sys.p);
    let mut div_ok = true;
    for k in 0..sys.d {
        for i in 0..e.n_agents() {
            if sys.alpha[k][i] != div[k][i] {
                div_ok = false;
                r.fail(
                    "dividend identity",
                    Some(i),
                    Some(k),
                    format!(
                        "dividend identity violated (agent {}, currency {}): alpha = {}, expected {}",
                        i + 1,
                        k + 1,
                        fmt_q(&sys.alpha[k][i]),
                        fmt_q(&div[k][i])
                    ),
                    None,
                );
            }
        }
    }
    if div_ok {
        r.pass("dividend identity", "alpha = max(p.(x - omega), 0)".into());
    }
    if !sign_ok || !div_ok {
        return Ok(r);
    }

    for i in 0..e.n_agents() {
        let xi = x.row(i);
        if !budget_contains(e, i, xi, sys)? {
            r.fail(
                "affordable",
                Some(i),
                None,
                format!("agent {} cannot afford {}", i + 1, vec_str(xi)),
                Some(Witness::Bundle {
                    agent: i + 1,
                    y: xi.to_vec(),
                }),
            );
            continue;
        }
        let (best, y) = demand(e, i, sys)?;
        let got = dot(e.u(i), xi);
        if best > got {
            r.fail(
                "utility maximizing",
                Some(i),
                None,
                format!(
                    "agent {} gets {} but can afford {} with {}",
                    i + 1,
                    fmt_q(&got),
                    fmt_q(&best),
                    vec_str(&y)
                ),
                Some(Witness::Bundle { agent: i + 1, y }),
            );
        }
    }
    if r.verdict {
        r.pass("demand", "every agent receives a best affordable bundle".into());
    }
    Ok(r)
}

/// `min p_k.y` over `{y in Delta_- : u_i.y >= u_i.x_i, p_l.y = p_l.x_i for l < k}`.
fn cheapest_in_currency(
    e: &Economy,
    x: &Allocation,
    sys: &LexPriceSystem,
    i: usize,
    k: usize,
) -> Result<(Q, Vec<Q>), ModelError> {
    let m = e.n_goods();
    let xi = x.row(i);
    let mut lp = LinearProgram::<Q>::new(m, Direction::Min);
    lp.c = sys.p[k].clone();
    lp.add_row(vec![one(); m], Sense::Le, one());
    lp.add_row(e.u(i).to_vec(), Sense::Ge, dot(e.u(i), xi));
    for l in 0..k {
        lp.add_row(sys.p[l].clone(), Sense::Eq, dot(&sys.p[l], xi));
    }
    let sol = solve_lp(&lp)?;
    match sol.status {
        LpStatus::Optimal => Ok((sol.objective, sol.x)),
        // x_i itself is feasible, so this only happens on malformed input
        _ => Ok((dot(&sys.p[k], xi), xi.to_vec())),
    }
}

fn cbp_report(
    e: &Economy,
    x: &Allocation,
    sys: &LexPriceSystem,
    weak: bool,
) -> Result<VerificationReport, ModelError> {
    sys.check_shape(e)?;
    let name = if weak { "weak cheapest bundle" } else { "strong cheapest bundle" };
    let mut r = VerificationReport::new();
    for i in 0..e.n_agents() {
        let last = if weak { agent_tier(e, sys, i) } else { sys.d - 1 };
        for k in 0..=last {
            let (v, y) = cheapest_in_currency(e, x, sys, i, k)?;
            let cost = dot(&sys.p[k], x.row(i));
            if v < cost {
                r.fail(
                    name,
                    Some(i),
                    Some(k),
                    format!(
                        "agent {} has a weakly preferred bundle {} costing {} < {} in currency {}",
                        i + 1,
                        vec_str(&y),
                        fmt_q(&v),
                        fmt_q(&cost),
                        k + 1
                    ),
                    Some(Witness::Bundle { agent: i + 1, y }),
                );
                break;
            }
        }
    }
    if r.verdict {
        r.pass(name, "no cheaper weakly preferred bundle".into());
    }
    Ok(r)
}

pub fn check_strong_cbp(
    e: &Economy,
    x: &Allocation,
    sys: &LexPriceSystem,
) -> Result<VerificationReport, ModelError> {
    cbp_report(e, x, sys, false)
}

pub fn check_weak_cbp(
    e: &Economy,
    x: &Allocation,
    sys: &LexPriceSystem,
) -> Result<VerificationReport, ModelError> {
    cbp_report(e, x, sys, true)
}

/// Vertices of each agent's weakly preferred set `{y in Delta_- : u_i.y >= u_i.x_i}`.
pub fn weakly_preferred_vertices(
    e: &Economy,
    x: &Allocation,
) -> Result<Vec<Vec<Vec<Q>>>, ModelError> {
    let all: Vec<usize> = (0..e.n_goods()).collect();
    (0..e.n_agents())
        .map(|i| {
            let t = dot(e.u(i), x.row(i));
            Ok(restricted_vertices(e.u(i), Some(&t), &all, &[])?)
        })
        .collect()
}

pub fn check_aggregate_cbp(
    e: &Economy,
    x: &Allocation,
    sys: &LexPriceSystem,
) -> Result<VerificationReport, ModelError> {
    sys.check_shape(e)?;
    let m = e.n_goods();
    let verts = weakly_preferred_vertices(e, x)?;
    // one column per (agent, vertex), holding v - x_i
    let mut cols: Vec<(usize, Vec<Q>, Vec<Q>)> = Vec::new();
    for (i, vs) in verts.iter().enumerate() {
        for v in vs {
            cols.push((i, v.clone(), sub_vec(v, x.row(i))));
        }
    }
    let name = "aggregate cheapest bundle";
    let mut r = VerificationReport::new();
    for k in 0..sys.d {
        let nv = cols.len();
        let mut lp = LinearProgram::<Q>::new(nv, Direction::Min);
        for (c, (_, _, z)) in cols.iter().enumerate() {
            lp.c[c] = dot(&sys.p[k], z);
        }
        for l in 0..k {
            lp.add_row(cols.iter().map(|(_, _, z)| dot(&sys.p[l], z)).collect(), Sense::Eq, zero());
        }
        for j in 0..m {
            if (0..k).any(|l| sys.p[l][j].is_positive()) {
                lp.add_row(cols.iter().map(|(_, _, z)| z[j].clone()).collect(), Sense::Le, zero());
            }
        }
        lp.add_row(vec![one(); nv], Sense::Eq, one());
        let sol = solve_lp(&lp)?;
        if sol.status == LpStatus::Optimal && sol.objective.is_negative() {
            let terms = cols
                .iter()
                .zip(&sol.x)
                .filter(|(_, b)| b.is_positive())
                .map(|((i, v, _), b)| AggregateTerm {
                    agent: i + 1,
                    beta: b.clone(),
                    y: v.clone(),
                })
                .collect();
            r.fail(
                name,
                None,
                Some(k),
                format!(
                    "a convex combination of weakly preferred bundles is cheaper by {} in currency {}",
                    fmt_q(&-sol.objective.clone()),
                    k + 1
                ),
                Some(Witness::Aggregate { terms }),
            );
            break;
        }
    }
    if r.verdict {
        r.pass(name, "no cheaper aggregate deviation".into());
    }
    Ok(r)
}

/// Multiplies price row `k` and dividend row `k` by `factors[k] > 0`.
pub fn scale_rows(sys: &LexPriceSystem, factors: &[Q]) -> LexPriceSystem {
    LexPriceSystem {
        d: sys.d,
        p: sys
            .p
            .iter()
            .zip(factors)
            .map(|(r, f)| r.iter().map(|v| v * f).collect())
            .collect(),
        alpha: sys
            .alpha
            .iter()
            .zip(factors)
            .map(|(r, f)| r.iter().map(|v| v * f).collect())
            .collect(),
    }
}

/// Goods with `k^j < k_i` that agent `i` holds or owns, which must not exist in an LDE
/// with the strong cheapest bundle property.
pub fn higher_tier_holdings(
    e: &Economy,
    x: &Allocation,
    sys: &LexPriceSystem,
) -> Vec<(usize, usize)> {
    let t = tier_indices(e, sys);
    let mut out = Vec::new();
    for i in 0..e.n_agents() {
        for j in 0..e.n_goods() {
            if t.good_tiers[j] < t.agent_tiers[i]
                && (!x.rows[i][j].is_zero() || !e.endowments[i][j].is_zero())
            {
                out.push((i, j));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::{q, qf};

    fn table3() -> (Economy, Allocation, LexPriceSystem) {
        let d = qf(1, 10);
        let u = vec![
            vec![q(2), q(1), q(0)],
            vec![q(2), q(1), q(1) + d],
            vec![q(0), q(1), q(0)],
        ];
        let h = qf(1, 2);
        let w = vec![
            vec![h.clone(), h.clone(), q(0)],
            vec![h.clone(), h.clone(), q(0)],
            vec![q(0), q(0), q(1)],
        ];
        let x = Allocation::new(vec![
            vec![h.clone(), h.clone(), q(0)],
            vec![h.clone(), q(0), h.clone()],
            vec![q(0), h.clone(), h.clone()],
        ]);
        let sys = LexPriceSystem::new(
            vec![vec![q(1), q(0), q(0)], vec![q(0), q(1), q(0)]],
            vec![vec![q(0); 3], vec![q(0), q(0), h]],
        );
        (Economy::new(u, w), x, sys)
    }

    #[test]
    fn lex_examples() {
        assert!(lex_leq(&[q(0), q(1)], &[q(1), q(-5)]).unwrap());
        assert!(lex_leq(&[q(1), q(0)], &[q(1), q(0)]).unwrap());
        assert!(!lex_leq(&[q(1), q(2), q(3)], &[q(1), q(2), q(2)]).unwrap());
        assert!(lex_leq(&[q(1)], &[q(1), q(2)]).is_err());
    }

    #[test]
    fn table3_dividends_and_verdicts() {
        let (e, x, sys) = table3();
        assert_eq!(dividends_from(&e, &x, &sys.p), sys.alpha);
        assert!(verify_lde(&e, &x, &sys).unwrap().verdict);
        assert!(check_strong_cbp(&e, &x, &sys).unwrap().verdict);
        assert!(check_weak_cbp(&e, &x, &sys).unwrap().verdict);
        assert!(check_aggregate_cbp(&e, &x, &sys).unwrap().verdict);
        assert!(check_simple_prices(&sys));
    }

    #[test]
    fn table3_budget_and_demand() {
        let (e, _, sys) = table3();
        assert!(budget_contains(&e, 2, &[q(0), qf(1, 2), qf(1, 2)], &sys).unwrap());
        assert!(!budget_contains(&e, 2, &[qf(1, 4), q(0), q(0)], &sys).unwrap());
        assert!(budget_contains(&e, 0, &[qf(1, 2), qf(1, 2), q(0)], &sys).unwrap());
        assert!(budget_contains(&e, 0, &[qf(1, 2), q(1), q(0)], &sys).is_err());
        assert_eq!(demand(&e, 2, &sys).unwrap().0, qf(1, 2));
    }

    #[test]
    fn zeroed_dividend_fails() {
        let (e, x, mut sys) = table3();
        sys.alpha[1][2] = q(0);
        let r = verify_lde(&e, &x, &sys).unwrap();
        assert!(!r.verdict);
        let f = r.failures().next().unwrap();
        assert_eq!((f.agent, f.currency), (Some(3), Some(2)));
        assert!(f.detail.starts_with("dividend identity violated (agent 3, currency 2)"));
    }

    #[test]
    fn simple_prices_rejects_two_currencies() {
        let sys = LexPriceSystem::new(vec![vec![q(1)], vec![q(-1)]], vec![vec![q(0)], vec![q(0)]]);
        assert!(!check_simple_prices(&sys));
    }
}
