//! Pareto efficiency, individual rationality, weak/strong core, stability and the rejective
//! core, with exact coalition witnesses.
//!
//! Strictness is handled by maximizing a slack `sigma <= 1`; a coalition blocks or rejects iff
//! the optimal slack is positive.

use crate::economy::{replicate, replicate_allocation, Allocation, Economy};
use crate::lp_kernel::{solve_lp, Direction, LinearProgram, LpError, LpStatus, Sense};
use crate::rational::{dot, fmt_q, one, q, serde_q, sum, zero, Q};
use num::{Integer, One, Signed, Zero};
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

pub const MAX_BLOCK_AGENTS: usize = 12;
pub const MAX_REJECT_AGENTS: usize = 8;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CoreError {
    #[error("instance too large: {0}")]
    TooLarge(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error(transparent)]
    Lp(#[from] LpError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    /// brings its endowment and must strictly improve
    Endowment,
    /// brings its allocation and must not get worse
    Allocation,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Member {
    /// 1-based agent (type) index
    pub agent: usize,
    pub role: Role,
    /// share of the coalition, or replica count at finite replication
    #[serde(with = "serde_q")]
    pub multiplicity: Q,
    /// per-copy consumption
    #[serde(with = "serde_q::vec")]
    pub y: Vec<Q>,
    pub strict: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CoalitionWitness {
    pub members: Vec<Member>,
    #[serde(with = "serde_q")]
    pub slack: Q,
    /// replica level for finite witnesses
    #[serde(skip_serializing_if = "Option::is_none")]
    pub replicas: Option<usize>,
}

impl CoalitionWitness {
    /// 1-based agents per role.
    pub fn agents_with(&self, role: Role) -> Vec<usize> {
        let mut v: Vec<usize> = self
            .members
            .iter()
            .filter(|m| m.role == role)
            .map(|m| m.agent)
            .collect();
        v.sort();
        v.dedup();
        v
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StabilityWitness {
    Coalition(CoalitionWitness),
    Improvement {
        #[serde(with = "serde_q::mat")]
        rows: Vec<Vec<Q>>,
    },
    Agent {
        agent: usize,
        #[serde(with = "serde_q")]
        allocation_utility: Q,
        #[serde(with = "serde_q")]
        endowment_utility: Q,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct StabilityVerdict {
    pub notion: String,
    pub verdict: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<StabilityWitness>,
}

impl StabilityVerdict {
    fn yes(notion: &str) -> Self {
        StabilityVerdict {
            notion: notion.into(),
            verdict: true,
            witness: None,
        }
    }
    fn no(notion: &str, w: StabilityWitness) -> Self {
        StabilityVerdict {
            notion: notion.into(),
            verdict: false,
            witness: Some(w),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Replicas {
    Finite(usize),
    Infinite,
}

impl Replicas {
    pub fn label(&self) -> String {
        match self {
            Replicas::Finite(n) => format!("rejective({n})"),
            Replicas::Infinite => "rejective(inf)".into(),
        }
    }
}

fn check_shape(e: &Economy, x: &Allocation) -> Result<(), CoreError> {
    if x.n_rows() != e.n_agents() || x.rows.iter().any(|r| r.len() != e.n_goods()) {
        return Err(CoreError::Shape(format!(
            "allocation is {}x{}, economy is {}x{}",
            x.n_rows(),
            x.n_cols(),
            e.n_agents(),
            e.n_goods()
        )));
    }
    Ok(())
}

/// Fractional Pareto optimality: no `y` in the allocation set weakly improves everyone and
/// strictly improves someone.
pub fn is_fpo(e: &Economy, x: &Allocation) -> Result<StabilityVerdict, CoreError> {
    check_shape(e, x)?;
    let n = e.n_agents();
    let m = e.n_goods();
    let nv = n * m + n;
    let mut lp = LinearProgram::<Q>::new(nv, Direction::Max);
    for i in 0..n {
        lp.c[n * m + i] = one();
    }
    for i in 0..n {
        let r: Vec<(usize, Q)> = (0..m).map(|j| (i * m + j, one())).collect();
        lp.add_sparse(&r, Sense::Eq, one());
    }
    for j in 0..m {
        let r: Vec<(usize, Q)> = (0..n).map(|i| (i * m + j, one())).collect();
        lp.add_sparse(&r, Sense::Eq, e.supply[j].clone());
    }
    for i in 0..n {
        let mut r: Vec<(usize, Q)> = (0..m).map(|j| (i * m + j, e.utilities[i][j].clone())).collect();
        r.push((n * m + i, -one()));
        lp.add_sparse(&r, Sense::Ge, dot(e.u(i), x.row(i)));
    }
    let sol = solve_lp(&lp)?;
    if sol.status == LpStatus::Optimal && sol.objective.is_positive() {
        let rows = (0..n).map(|i| sol.x[i * m..(i + 1) * m].to_vec()).collect();
        return Ok(StabilityVerdict::no("fpo", StabilityWitness::Improvement { rows }));
    }
    Ok(StabilityVerdict::yes("fpo"))
}

pub fn is_ir(e: &Economy, x: &Allocation) -> Result<StabilityVerdict, CoreError> {
    check_shape(e, x)?;
    for i in 0..e.n_agents() {
        let a = dot(e.u(i), x.row(i));
        let w = dot(e.u(i), e.omega(i));
        if a < w {
            return Ok(StabilityVerdict::no(
                "ir",
                StabilityWitness::Agent {
                    agent: i + 1,
                    allocation_utility: a,
                    endowment_utility: w,
                },
            ));
        }
    }
    Ok(StabilityVerdict::yes("ir"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockMode {
    /// every member strictly better: absence means weak-core membership
    StrongBlocking,
    /// every member weakly better, one strictly: absence means strong-core membership
    WeakBlocking,
}

/// Coalitions ordered by size, then lexicographically.
pub fn coalitions(n: usize) -> Vec<Vec<usize>> {
    let mut out: Vec<Vec<usize>> = (1u32..(1u32 << n))
        .map(|mask| (0..n).filter(|&i| mask & (1 << i) != 0).collect())
        .collect();
    out.sort_by(|a: &Vec<usize>, b: &Vec<usize>| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
    out
}

/// Best redistribution of the coalition's endowments; returns the witness if it blocks.
pub fn coalition_blocks(
    e: &Economy,
    x: &Allocation,
    coalition: &[usize],
    mode: BlockMode,
) -> Result<Option<CoalitionWitness>, CoreError> {
    let m = e.n_goods();
    let c = coalition.len();
    // y (c*m), then slack: sigma (strong blocking) or t_i (weak blocking)
    let n_slack = match mode {
        BlockMode::StrongBlocking => 1,
        BlockMode::WeakBlocking => c,
    };
    let mut lp = LinearProgram::<Q>::new(c * m + n_slack, Direction::Max);
    for s in 0..n_slack {
        lp.c[c * m + s] = one();
    }
    if mode == BlockMode::StrongBlocking {
        lp.free[c * m] = true;
        lp.add_sparse(&[(c * m, one())], Sense::Le, one());
    } else {
        let r: Vec<(usize, Q)> = (0..c).map(|k| (c * m + k, one())).collect();
        lp.add_sparse(&r, Sense::Le, one());
    }
    for (k, _) in coalition.iter().enumerate() {
        let r: Vec<(usize, Q)> = (0..m).map(|j| (k * m + j, one())).collect();
        lp.add_sparse(&r, Sense::Le, one());
    }
    for j in 0..m {
        let r: Vec<(usize, Q)> = (0..c).map(|k| (k * m + j, one())).collect();
        let avail: Q = coalition.iter().map(|&i| &e.endowments[i][j]).sum();
        lp.add_sparse(&r, Sense::Le, avail);
    }
    for (k, &i) in coalition.iter().enumerate() {
        let mut r: Vec<(usize, Q)> = (0..m).map(|j| (k * m + j, e.utilities[i][j].clone())).collect();
        let s = match mode {
            BlockMode::StrongBlocking => c * m,
            BlockMode::WeakBlocking => c * m + k,
        };
        r.push((s, -one()));
        lp.add_sparse(&r, Sense::Ge, dot(e.u(i), x.row(i)));
    }
    let sol = solve_lp(&lp)?;
    if sol.status != LpStatus::Optimal || !sol.objective.is_positive() {
        return Ok(None);
    }
    let members = coalition
        .iter()
        .enumerate()
        .map(|(k, &i)| {
            let y = sol.x[k * m..(k + 1) * m].to_vec();
            let strict = dot(e.u(i), &y) > dot(e.u(i), x.row(i));
            Member {
                agent: i + 1,
                role: Role::Endowment,
                multiplicity: one(),
                y,
                strict,
            }
        })
        .collect();
    Ok(Some(CoalitionWitness {
        members,
        slack: sol.objective,
        replicas: None,
    }))
}

pub fn block_search(
    e: &Economy,
    x: &Allocation,
    mode: BlockMode,
) -> Result<StabilityVerdict, CoreError> {
    check_shape(e, x)?;
    let n = e.n_agents();
    if n > MAX_BLOCK_AGENTS {
        return Err(CoreError::TooLarge(format!(
            "{n} agents exceeds the coalition cap {MAX_BLOCK_AGENTS}"
        )));
    }
    let notion = match mode {
        BlockMode::StrongBlocking => "weak_core",
        BlockMode::WeakBlocking => "strong_core",
    };
    let found = coalitions(n)
        .into_par_iter()
        .map(|c| coalition_blocks(e, x, &c, mode))
        .find_first(|r| !matches!(r, Ok(None)));
    match found {
        Some(Ok(Some(w))) => Ok(StabilityVerdict::no(notion, StabilityWitness::Coalition(w))),
        Some(Err(err)) => Err(err),
        _ => Ok(StabilityVerdict::yes(notion)),
    }
}

/// The economy `(u, x)`: allocations become endowments.
pub fn allocation_economy(e: &Economy, x: &Allocation) -> Economy {
    Economy {
        endowments: x.rows.clone(),
        ..e.clone()
    }
}

/// Weak core on `(u, omega)` and strong core on `(u, x)`.
pub fn is_stable(e: &Economy, x: &Allocation) -> Result<StabilityVerdict, CoreError> {
    let weak = block_search(e, x, BlockMode::StrongBlocking)?;
    if !weak.verdict {
        return Ok(StabilityVerdict {
            notion: "stable".into(),
            ..weak
        });
    }
    let strong = block_search(&allocation_economy(e, x), x, BlockMode::WeakBlocking)?;
    Ok(StabilityVerdict {
        notion: "stable".into(),
        ..strong
    })
}

/// Multiplicities of a role pattern: free shares summing to at most 1, or fixed counts.
enum Mult<'a> {
    Free,
    Fixed { c1: &'a [Q], c2: &'a [Q] },
}

/// Solves the rejection LP for endowment-bringers `s` and allocation-bringers `c2`.
/// Returns the witness when the optimal slack is positive.
fn pattern_lp(
    e: &Economy,
    x: &Allocation,
    s: &[usize],
    c2: &[usize],
    mult: Mult,
) -> Result<Option<CoalitionWitness>, CoreError> {
    let m = e.n_goods();
    // roles: (agent, role)
    let roles: Vec<(usize, Role)> = s
        .iter()
        .map(|&i| (i, Role::Endowment))
        .chain(c2.iter().map(|&i| (i, Role::Allocation)))
        .collect();
    let nr = roles.len();
    if nr == 0 {
        return Ok(None);
    }
    // variables: beta (nr), W (nr*m), sigma
    let beta = |r: usize| r;
    let wv = |r: usize, j: usize| nr + r * m + j;
    let sig = nr + nr * m;
    let mut lp = LinearProgram::<Q>::new(sig + 1, Direction::Max);
    lp.c[sig] = one();
    lp.free[sig] = true;
    lp.add_sparse(&[(sig, one())], Sense::Le, one());
    match mult {
        Mult::Free => {
            let r: Vec<(usize, Q)> = (0..nr).map(|r| (beta(r), one())).collect();
            lp.add_sparse(&r, Sense::Le, one());
        }
        Mult::Fixed { c1, c2: b2 } => {
            for r in 0..nr {
                let v = if r < s.len() { &c1[r] } else { &b2[r - s.len()] };
                lp.add_sparse(&[(beta(r), one())], Sense::Eq, v.clone());
            }
        }
    }
    for r in 0..nr {
        let mut row: Vec<(usize, Q)> = (0..m).map(|j| (wv(r, j), one())).collect();
        row.push((beta(r), -one()));
        lp.add_sparse(&row, Sense::Le, zero());
    }
    for j in 0..m {
        let mut row: Vec<(usize, Q)> = (0..nr).map(|r| (wv(r, j), one())).collect();
        for (r, &(i, role)) in roles.iter().enumerate() {
            let brought = match role {
                Role::Endowment => &e.endowments[i][j],
                Role::Allocation => &x.rows[i][j],
            };
            if !brought.is_zero() {
                row.push((beta(r), -brought.clone()));
            }
        }
        lp.add_sparse(&row, Sense::Le, zero());
    }
    let gain_row = |r: usize, i: usize| -> Vec<(usize, Q)> {
        let mut row: Vec<(usize, Q)> = (0..m).map(|j| (wv(r, j), e.utilities[i][j].clone())).collect();
        row.push((beta(r), -dot(e.u(i), x.row(i))));
        row
    };
    let mut total_gain: Vec<(usize, Q)> = Vec::new();
    for (r, &(i, role)) in roles.iter().enumerate() {
        let mut row = gain_row(r, i);
        match role {
            Role::Endowment => {
                row.push((sig, -one()));
                lp.add_sparse(&row, Sense::Ge, zero());
            }
            Role::Allocation => {
                total_gain.extend(row.iter().cloned());
                lp.add_sparse(&row, Sense::Ge, zero());
            }
        }
    }
    if s.is_empty() {
        total_gain.push((sig, -one()));
        lp.add_sparse(&total_gain, Sense::Ge, zero());
    }
    let sol = solve_lp(&lp)?;
    if sol.status != LpStatus::Optimal || !sol.objective.is_positive() {
        return Ok(None);
    }
    let mut members = Vec::new();
    for (r, &(i, role)) in roles.iter().enumerate() {
        let b = &sol.x[beta(r)];
        if !b.is_positive() {
            continue;
        }
        let y: Vec<Q> = (0..m).map(|j| &sol.x[wv(r, j)] / b).collect();
        let strict = dot(e.u(i), &y) > dot(e.u(i), x.row(i));
        members.push(Member {
            agent: i + 1,
            role,
            multiplicity: b.clone(),
            y,
            strict,
        });
    }
    Ok(Some(CoalitionWitness {
        members,
        slack: sol.objective,
        replicas: None,
    }))
}

/// Subsets of agents ordered by size, then lexicographically, starting with the empty set.
fn role_supports(n: usize) -> Vec<Vec<usize>> {
    let mut v = vec![vec![]];
    v.extend(coalitions(n));
    v
}

/// Fractional rejection at the replica limit for a fixed endowment-bringer support `s`.
fn reject_fractional(
    e: &Economy,
    x: &Allocation,
    s: &[usize],
) -> Result<Option<CoalitionWitness>, CoreError> {
    let all: Vec<usize> = (0..e.n_agents()).collect();
    let Some(_) = pattern_lp(e, x, s, &all, Mult::Free)? else {
        return Ok(None);
    };
    // drop allocation-bringer types one at a time while rejection persists
    let mut c2 = all;
    let mut k = 0;
    while k < c2.len() {
        let mut trial = c2.clone();
        trial.remove(k);
        if pattern_lp(e, x, s, &trial, Mult::Free)?.is_some() {
            c2 = trial;
        } else {
            k += 1;
        }
    }
    pattern_lp(e, x, s, &c2, Mult::Free)
}

/// Rejection in the replica limit with endowment-bringers drawn from `s`.
pub fn reject_with_support(
    e: &Economy,
    x: &Allocation,
    s: &[usize],
) -> Result<Option<CoalitionWitness>, CoreError> {
    reject_fractional(e, x, s)
}

/// Integer rejection in the `N`-replica economy for endowment-bringer support `s`.
fn reject_integer(
    e: &Economy,
    x: &Allocation,
    s: &[usize],
    copies: usize,
) -> Result<Option<CoalitionWitness>, CoreError> {
    let n = e.n_agents();
    let all: Vec<usize> = (0..n).collect();
    let nn = q(copies as i64);
    let mut a = vec![1usize; s.len()];
    loop {
        let c1: Vec<Q> = a.iter().map(|&v| q(v as i64)).collect();
        let b_of = |c2: &[usize]| -> Vec<Q> {
            c2.iter()
                .map(|i| match s.iter().position(|t| t == i) {
                    Some(p) => &nn - &c1[p],
                    None => nn.clone(),
                })
                .collect()
        };
        let b = b_of(&all);
        if pattern_lp(e, x, s, &all, Mult::Fixed { c1: &c1, c2: &b })?.is_some() {
            let mut c2 = all.clone();
            let mut k = 0;
            while k < c2.len() {
                let mut trial = c2.clone();
                trial.remove(k);
                let bt = b_of(&trial);
                if pattern_lp(e, x, s, &trial, Mult::Fixed { c1: &c1, c2: &bt })?.is_some() {
                    c2 = trial;
                } else {
                    k += 1;
                }
            }
            let bt = b_of(&c2);
            let w = pattern_lp(e, x, s, &c2, Mult::Fixed { c1: &c1, c2: &bt })?;
            return Ok(w.map(|mut w| {
                w.replicas = Some(copies);
                w
            }));
        }
        // next multiplicity vector in {1..N}^|s|
        let mut p = a.len();
        loop {
            if p == 0 {
                return Ok(None);
            }
            p -= 1;
            if a[p] < copies {
                a[p] += 1;
                for v in a.iter_mut().skip(p + 1) {
                    *v = 1;
                }
                break;
            }
        }
    }
}

/// Searches for a rejecting coalition at replica level `N`, or in the replica limit.
pub fn reject_search(
    e: &Economy,
    x: &Allocation,
    replicas: Replicas,
) -> Result<StabilityVerdict, CoreError> {
    check_shape(e, x)?;
    let n = e.n_agents();
    if n > MAX_REJECT_AGENTS {
        return Err(CoreError::TooLarge(format!(
            "{n} agents exceeds the pattern cap {MAX_REJECT_AGENTS}"
        )));
    }
    if let Replicas::Finite(0) = replicas {
        return Err(CoreError::Shape("replica count must be at least 1".into()));
    }
    let notion = replicas.label();
    let supports = role_supports(n);
    let limit: Vec<Option<CoalitionWitness>> = supports
        .par_iter()
        .map(|s| reject_fractional(e, x, s))
        .collect::<Result<_, _>>()?;
    let found = match replicas {
        Replicas::Infinite => limit.into_iter().flatten().next(),
        Replicas::Finite(copies) => {
            // a finite rejection scales to a fractional one, so only rejecting supports matter
            let cands: Vec<&Vec<usize>> = supports
                .iter()
                .zip(&limit)
                .filter(|(_, w)| w.is_some())
                .map(|(s, _)| s)
                .collect();
            let res: Vec<Option<CoalitionWitness>> = cands
                .par_iter()
                .map(|s| reject_integer(e, x, s, copies))
                .collect::<Result<_, _>>()?;
            res.into_iter().flatten().next()
        }
    };
    Ok(match found {
        Some(w) => StabilityVerdict::no(&notion, StabilityWitness::Coalition(w)),
        None => StabilityVerdict::yes(&notion),
    })
}

/// Endowment-bringers only, one copy each: the replica-one restriction of the rejective core.
pub fn endowment_coalition_rejects(
    e: &Economy,
    x: &Allocation,
    coalition: &[usize],
) -> Result<Option<CoalitionWitness>, CoreError> {
    let ones = vec![one(); coalition.len()];
    pattern_lp(e, x, coalition, &[], Mult::Fixed { c1: &ones, c2: &[] })
}

/// Exact recheck of a witness with rational multiplicities.
pub fn recheck_witness(e: &Economy, x: &Allocation, w: &CoalitionWitness) -> Result<(), String> {
    let m = e.n_goods();
    if w.members.is_empty() {
        return Err("empty coalition".into());
    }
    let mut used = vec![zero(); m];
    let mut brought = vec![zero(); m];
    let mut any_strict = false;
    let has_c1 = w.members.iter().any(|mb| mb.role == Role::Endowment);
    for mb in &w.members {
        let i = mb.agent.checked_sub(1).filter(|&i| i < e.n_agents()).ok_or("agent index")?;
        if !mb.multiplicity.is_positive() {
            return Err(format!("agent {} has non-positive multiplicity", mb.agent));
        }
        if mb.y.len() != m || mb.y.iter().any(|v| v.is_negative()) || sum(&mb.y) > one() {
            return Err(format!("agent {} consumes an invalid lottery", mb.agent));
        }
        let src = match mb.role {
            Role::Endowment => e.omega(i),
            Role::Allocation => x.row(i),
        };
        for j in 0..m {
            used[j] += &mb.multiplicity * &mb.y[j];
            brought[j] += &mb.multiplicity * &src[j];
        }
        let gy = dot(e.u(i), &mb.y);
        let gx = dot(e.u(i), x.row(i));
        match mb.role {
            Role::Endowment if gy <= gx => {
                return Err(format!("agent {} does not strictly improve", mb.agent));
            }
            Role::Allocation if gy < gx => {
                return Err(format!("agent {} is made worse off", mb.agent));
            }
            _ => {}
        }
        any_strict |= gy > gx;
    }
    if !has_c1 && !any_strict {
        return Err("nobody strictly improves".into());
    }
    for j in 0..m {
        if used[j] > brought[j] {
            return Err(format!(
                "good {} over-consumed: {} > {}",
                j + 1,
                fmt_q(&used[j]),
                fmt_q(&brought[j])
            ));
        }
    }
    Ok(())
}

/// Integer role counts `(type, role, copies)` obtained by clearing denominators.
pub fn integer_scaling(w: &CoalitionWitness) -> (Vec<(usize, Role, usize)>, usize) {
    let mut l = num::BigInt::one();
    for mb in &w.members {
        l = l.lcm(mb.multiplicity.denom());
    }
    let ql = Q::from_integer(l);
    let counts: Vec<(usize, Role, usize)> = w
        .members
        .iter()
        .map(|mb| {
            let c = (&mb.multiplicity * &ql).to_integer();
            (mb.agent, mb.role, usize::try_from(c).unwrap_or(usize::MAX))
        })
        .collect();
    let mut per_type = std::collections::BTreeMap::new();
    for (a, _, c) in &counts {
        *per_type.entry(*a).or_insert(0usize) += c;
    }
    let level = per_type.values().copied().max().unwrap_or(1);
    (counts, level)
}

/// Rebuilds `w` with integer multiplicities inside the replica economy and checks it there
/// agent by agent. Consumption of each good is spread over its copies in proportion to what
/// the coalition brings of each copy. Returns the replica level used.
pub fn verify_in_replica(
    e: &Economy,
    x: &Allocation,
    w: &CoalitionWitness,
) -> Result<usize, String> {
    let (counts, level) = match w.replicas {
        Some(nrep) => (
            w.members
                .iter()
                .map(|mb| {
                    let c = usize::try_from(mb.multiplicity.to_integer()).unwrap_or(usize::MAX);
                    (mb.agent, mb.role, c)
                })
                .collect::<Vec<_>>(),
            nrep,
        ),
        None => integer_scaling(w),
    };
    if level == 0 || level > 64 {
        return Err(format!("replica level {level} out of range"));
    }
    let n = e.n_agents();
    let m = e.n_goods();
    let re = replicate(e, level).map_err(|err| err.to_string())?;
    let rx = replicate_allocation(x, level);
    // assign concrete replica agents
    let mut next_copy = vec![0usize; n];
    let mut agents: Vec<(usize, Role, Vec<Q>)> = Vec::new();
    for ((a, role, c), mb) in counts.iter().zip(&w.members) {
        let i = a - 1;
        if w.replicas.is_some() && !mb.multiplicity.is_integer() {
            return Err("non-integral multiplicity at finite replication".into());
        }
        for _ in 0..*c {
            let r = next_copy[i];
            next_copy[i] += 1;
            if r >= level {
                return Err(format!("type {a} needs more than {level} copies"));
            }
            agents.push((r * n + i, *role, mb.y.clone()));
        }
    }
    let mm = m * level;
    let mut brought = vec![zero(); mm];
    for (ra, role, _) in &agents {
        let src = match role {
            Role::Endowment => &re.endowments[*ra],
            Role::Allocation => &rx.rows[*ra],
        };
        for g in 0..mm {
            brought[g] += &src[g];
        }
    }
    let mut any_strict = false;
    let mut used = vec![zero(); mm];
    for (ra, role, y) in &agents {
        let mut ry = vec![zero(); mm];
        for j in 0..m {
            let tot: Q = (0..level).map(|r| &brought[r * m + j]).sum();
            if y[j].is_zero() {
                continue;
            }
            if tot.is_zero() {
                return Err(format!("good {} consumed but not brought", j + 1));
            }
            for r in 0..level {
                ry[r * m + j] = &y[j] * &brought[r * m + j] / &tot;
            }
        }
        let gy = dot(&re.utilities[*ra], &ry);
        let gx = dot(&re.utilities[*ra], &rx.rows[*ra]);
        match role {
            Role::Endowment if gy <= gx => return Err("endowment-bringer not strictly better".into()),
            Role::Allocation if gy < gx => return Err("allocation-bringer worse off".into()),
            _ => {}
        }
        any_strict |= gy > gx;
        for g in 0..mm {
            used[g] += &ry[g];
        }
    }
    if !any_strict {
        return Err("nobody strictly improves".into());
    }
    if (0..mm).any(|g| used[g] > brought[g]) {
        return Err("resource balance fails in the replica economy".into());
    }
    Ok(level)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::qf;

    pub(crate) fn table1() -> (Economy, Allocation) {
        let h = qf(1, 2);
        let z = q(0);
        let u = vec![
            vec![q(0), q(0), q(1), q(1)],
            vec![q(2), q(0), q(1), q(0)],
            vec![q(0), q(1), q(2), q(0)],
            vec![q(0), q(0), q(0), q(1)],
        ];
        let w = vec![
            vec![h.clone(), z.clone(), z.clone(), h.clone()],
            vec![z.clone(), z.clone(), q(1), z.clone()],
            vec![z.clone(), z.clone(), h.clone(), h.clone()],
            vec![z.clone(), h.clone(), z.clone(), h.clone()],
        ];
        let x = vec![
            vec![z.clone(), z.clone(), h.clone(), h.clone()],
            vec![h.clone(), z.clone(), h.clone(), z.clone()],
            vec![z.clone(), h.clone(), h.clone(), z.clone()],
            vec![z.clone(), z.clone(), z.clone(), q(1)],
        ];
        (Economy::with_implied_supply(u, w), Allocation::new(x))
    }

    #[test]
    fn table1_stable_but_rejected() {
        let (e, x) = table1();
        assert!(is_stable(&e, &x).unwrap().verdict);
        let v = reject_search(&e, &x, Replicas::Finite(2)).unwrap();
        assert!(!v.verdict);
        let Some(StabilityWitness::Coalition(w)) = v.witness else { panic!() };
        assert_eq!(w.agents_with(Role::Endowment), vec![3]);
        assert_eq!(w.agents_with(Role::Allocation), vec![1]);
        assert!(recheck_witness(&e, &x, &w).is_ok());
        assert_eq!(verify_in_replica(&e, &x, &w), Ok(2));
    }

    #[test]
    fn no_trade_is_ir() {
        let (e, _) = table1();
        let x = Allocation::new(e.endowments.clone());
        assert!(is_ir(&e, &x).unwrap().verdict);
    }

    #[test]
    fn coalition_order() {
        let c = coalitions(3);
        assert_eq!(c[0], vec![0]);
        assert_eq!(c[3], vec![0, 1]);
        assert_eq!(c[6], vec![0, 1, 2]);
    }
}
