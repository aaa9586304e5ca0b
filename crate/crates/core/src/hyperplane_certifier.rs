//! Builds lexicographic prices for an allocation by repeatedly separating the set of
//! desirable net trades from the strictly negative orthant on the unpriced goods, then
//! modifies the prices so that the strong cheapest bundle property holds.

use crate::core_stability::{
    recheck_witness, reject_search, reject_with_support, verify_in_replica, CoalitionWitness,
    CoreError, Replicas, StabilityWitness,
};
use crate::economy::{Allocation, Economy};
use crate::lde_model::{
    agent_tier, budget_rows, check_aggregate_cbp, check_simple_prices, check_strong_cbp,
    check_weak_cbp, dividends_from, tier_indices, verify_lde, AggregateTerm, LexPriceSystem,
    ModelError, VerificationReport,
};
use crate::lp_kernel::{
    max_linear_over, restricted_vertices, solve_lp, Direction, LinearProgram, LpError, LpStatus,
    Sense, VertexError,
};
use crate::rational::{dot, fmt_q, one, serde_q, sub_vec, zero, Q};
use num::{Signed, Zero};
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CertError {
    #[error(transparent)]
    Lp(#[from] LpError),
    #[error(transparent)]
    Vertex(#[from] VertexError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error("aggregate cheapest bundle violation detected in currency {currency}")]
    AggregateViolation {
        currency: usize,
        terms: Vec<AggregateTerm>,
    },
    #[error("separation failed but no rejecting coalition was found")]
    Inconsistent,
    #[error("separating price vector prices no unpriced good")]
    NoProgress,
    #[error("allocation is not feasible: {0}")]
    Allocation(String),
}

/// Where a generator of the separation problem comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GeneratorKind {
    /// strict improvement over the allocation, net of the endowment
    Strict,
    /// weak improvement, net of the allocation, restricted to unpriced goods
    Weak,
    /// weak improvement of an agent with income; pooled before the sign restriction
    Pooled,
}

#[derive(Debug, Clone)]
pub struct Generator {
    pub agent: usize,
    pub kind: GeneratorKind,
    pub z: Vec<Q>,
}

#[derive(Debug, Clone)]
pub enum Separation {
    Found(Vec<Q>),
    /// convex weights on the generators of a point in the negative orthant
    Infeasible(Vec<Q>),
}

/// Finds `p >= 0` supported on `S` with `sum_S p = 1` and `p.z >= 0` for every plain generator
/// and every point of the pooled hull whose coordinates outside `S` are nonpositive.
/// Among separators, one maximizing `min_S p_j` is returned.
pub fn separating_hyperplane(
    generators: &[Generator],
    s: &[usize],
    m: usize,
) -> Result<Separation, CertError> {
    let outside: Vec<usize> = (0..m).filter(|j| !s.contains(j)).collect();
    let ns = s.len();
    let no = outside.len();
    // variables: p_S (ns), theta (no), t
    let tv = ns + no;
    let mut lp = LinearProgram::<Q>::new(tv + 1, Direction::Max);
    lp.c[tv] = one();
    lp.free[tv] = true;
    for g in generators {
        let mut row: Vec<(usize, Q)> = s
            .iter()
            .enumerate()
            .filter(|(_, &j)| !g.z[j].is_zero())
            .map(|(k, &j)| (k, g.z[j].clone()))
            .collect();
        if g.kind == GeneratorKind::Pooled {
            row.extend(
                outside
                    .iter()
                    .enumerate()
                    .filter(|(_, &j)| !g.z[j].is_zero())
                    .map(|(k, &j)| (ns + k, g.z[j].clone())),
            );
        }
        lp.add_sparse(&row, Sense::Ge, zero());
    }
    let norm: Vec<(usize, Q)> = (0..ns).map(|k| (k, one())).collect();
    lp.add_sparse(&norm, Sense::Eq, one());
    for k in 0..ns {
        lp.add_sparse(&[(tv, one()), (k, -one())], Sense::Le, zero());
    }
    let sol = solve_lp(&lp)?;
    match sol.status {
        LpStatus::Optimal => {
            let mut p = vec![zero(); m];
            for (k, &j) in s.iter().enumerate() {
                p[j] = sol.x[k].clone();
            }
            Ok(Separation::Found(p))
        }
        _ => {
            let mut w: Vec<Q> = sol.y[..generators.len()].iter().map(|v| -v.clone()).collect();
            let tot: Q = w.iter().sum();
            if tot.is_positive() {
                for v in w.iter_mut() {
                    *v = &*v / &tot;
                }
            }
            Ok(Separation::Infeasible(w))
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct IterationTrace {
    pub currency: usize,
    /// 1-based goods still unpriced when the iteration starts
    pub unpriced: Vec<usize>,
    /// 1-based agents with income when the iteration starts
    pub funded: Vec<usize>,
    pub generators: usize,
    #[serde(with = "serde_q::vec")]
    pub price: Vec<Q>,
}

#[derive(Debug, Clone, Serialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum CertifyOutcome {
    Certified {
        system: LexPriceSystem,
        report: VerificationReport,
        trace: Vec<IterationTrace>,
    },
    Refuted {
        witness: CoalitionWitness,
        /// replica level at which the integer-scaled witness was re-verified
        replica_level: Option<usize>,
        trace: Vec<IterationTrace>,
    },
}

fn satiates_everyone(e: &Economy, x: &Allocation) -> bool {
    (0..e.n_agents()).all(|i| dot(e.u(i), x.row(i)) == e.max_utility(i))
}

/// Runs the recursive separation procedure on `x`.
pub fn certify(e: &Economy, x: &Allocation) -> Result<CertifyOutcome, CertError> {
    x.check_feasible(e)
        .map_err(|err| CertError::Allocation(err.to_string()))?;
    let n = e.n_agents();
    let m = e.n_goods();
    let all: Vec<usize> = (0..m).collect();
    let mut trace = Vec::new();
    if satiates_everyone(e, x) {
        let sys = LexPriceSystem::zero(m, n);
        let report = certify_report(e, x, &sys)?;
        return Ok(CertifyOutcome::Certified {
            system: sys,
            report,
            trace,
        });
    }
    let mut s: Vec<usize> = all.clone();
    let mut t: Vec<bool> = vec![false; n];
    let mut prices: Vec<Vec<Q>> = Vec::new();
    let mut divs: Vec<Vec<Q>> = Vec::new();
    while !s.is_empty() {
        let k = prices.len();
        if k >= m {
            return Err(CertError::NoProgress);
        }
        let mut gens: Vec<Generator> = Vec::new();
        for i in 0..n {
            let xi = x.row(i);
            let ui = e.u(i);
            let ti = dot(ui, xi);
            if t[i] {
                for v in restricted_vertices(ui, Some(&ti), &all, &[])? {
                    gens.push(Generator {
                        agent: i,
                        kind: GeneratorKind::Pooled,
                        z: sub_vec(&v, xi),
                    });
                }
                continue;
            }
            let verts = restricted_vertices(ui, Some(&ti), &s, &[])?;
            let best_on_s = s.iter().map(|&j| &ui[j]).max().cloned().unwrap_or_else(zero);
            if best_on_s > ti {
                for v in &verts {
                    gens.push(Generator {
                        agent: i,
                        kind: GeneratorKind::Strict,
                        z: sub_vec(v, e.omega(i)),
                    });
                }
            }
            for v in verts {
                gens.push(Generator {
                    agent: i,
                    kind: GeneratorKind::Weak,
                    z: sub_vec(&v, xi),
                });
            }
        }
        let mut step = IterationTrace {
            currency: k + 1,
            unpriced: s.iter().map(|j| j + 1).collect(),
            funded: (0..n).filter(|&i| t[i]).map(|i| i + 1).collect(),
            generators: gens.len(),
            price: Vec::new(),
        };
        let p = match separating_hyperplane(&gens, &s, m)? {
            Separation::Found(p) => p,
            Separation::Infeasible(w) => {
                trace.push(step);
                return refute(e, x, &gens, &w, trace);
            }
        };
        step.price = p.clone();
        trace.push(step);
        let alpha: Vec<Q> = (0..n)
            .map(|i| crate::rational::max0(dot(&p, &sub_vec(x.row(i), e.omega(i)))))
            .collect();
        let before = s.len();
        s.retain(|&j| !p[j].is_positive());
        if s.len() == before {
            return Err(CertError::NoProgress);
        }
        for i in 0..n {
            if (dot(&p, e.omega(i)) + &alpha[i]).is_positive() {
                t[i] = true;
            }
        }
        prices.push(p);
        divs.push(alpha);
        // agents without income already hold a favorite free bundle
        let free_rows: Vec<(Vec<Q>, Q)> = prices.iter().map(|r| (r.clone(), zero())).collect();
        let mut done = true;
        for i in (0..n).filter(|&i| !t[i]) {
            let best = max_linear_over(e.u(i), &[], &free_rows)?
                .map(|(v, _)| v)
                .unwrap_or_else(zero);
            if best > dot(e.u(i), x.row(i)) {
                done = false;
                break;
            }
        }
        if done {
            s.clear();
        }
    }
    let sys = LexPriceSystem::new(prices, divs);
    let report = certify_report(e, x, &sys)?;
    Ok(CertifyOutcome::Certified {
        system: sys,
        report,
        trace,
    })
}

fn certify_report(
    e: &Economy,
    x: &Allocation,
    sys: &LexPriceSystem,
) -> Result<VerificationReport, CertError> {
    let mut r = VerificationReport::single(
        "simple prices",
        check_simple_prices(sys),
        "each good priced in at most one currency".into(),
    );
    r.merge(verify_lde(e, x, sys)?);
    r.merge(check_weak_cbp(e, x, sys)?);
    r.merge(check_aggregate_cbp(e, x, sys)?);
    Ok(r)
}

/// Turns an infeasible separation into a re-verified rejecting coalition.
fn refute(
    e: &Economy,
    x: &Allocation,
    gens: &[Generator],
    weights: &[Q],
    trace: Vec<IterationTrace>,
) -> Result<CertifyOutcome, CertError> {
    let mut support: Vec<usize> = gens
        .iter()
        .zip(weights)
        .filter(|(g, w)| g.kind == GeneratorKind::Strict && w.is_positive())
        .map(|(g, _)| g.agent)
        .collect();
    support.sort();
    support.dedup();
    let mut witness = reject_with_support(e, x, &support)?;
    if witness.is_none() {
        let v = reject_search(e, x, Replicas::Infinite)?;
        if let Some(StabilityWitness::Coalition(w)) = v.witness {
            witness = Some(w);
        }
    }
    let witness = witness.ok_or(CertError::Inconsistent)?;
    recheck_witness(e, x, &witness).map_err(|_| CertError::Inconsistent)?;
    let replica_level = verify_in_replica(e, x, &witness).ok();
    Ok(CertifyOutcome::Refuted {
        witness,
        replica_level,
        trace,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct StrengthenedSystem {
    pub system: LexPriceSystem,
    /// `r^(k)`, zero on goods unpriced before currency `k`
    #[serde(with = "serde_q::mat")]
    pub modifications: Vec<Vec<Q>>,
}

/// Vertices of `{y in C_i(p) : u_i.y >= u_i.x_i}`.
fn preferred_budget_vertices(
    e: &Economy,
    x: &Allocation,
    sys: &LexPriceSystem,
    i: usize,
) -> Result<Vec<Vec<Q>>, CertError> {
    let all: Vec<usize> = (0..e.n_goods()).collect();
    let t = dot(e.u(i), x.row(i));
    Ok(restricted_vertices(e.u(i), Some(&t), &all, &budget_rows(e, i, sys))?)
}

pub fn budget_vertices(
    e: &Economy,
    sys: &LexPriceSystem,
    i: usize,
) -> Result<Vec<Vec<Q>>, CertError> {
    let all: Vec<usize> = (0..e.n_goods()).collect();
    Ok(restricted_vertices(e.u(i), None, &all, &budget_rows(e, i, sys))?)
}

/// Adds to each price row a correction on goods already priced in earlier currencies so
/// that agents with income never find a weakly preferred affordable bundle cheaper.
pub fn strengthen(
    e: &Economy,
    x: &Allocation,
    sys: &LexPriceSystem,
) -> Result<(StrengthenedSystem, VerificationReport), CertError> {
    sys.check_shape(e)?;
    let m = e.n_goods();
    let tiers = tier_indices(e, sys);
    let mut q_rows = Vec::with_capacity(sys.d);
    let mut mods = Vec::with_capacity(sys.d);
    let cache: Vec<Vec<Vec<Q>>> = (0..e.n_agents())
        .map(|i| preferred_budget_vertices(e, x, sys, i))
        .collect::<Result<_, _>>()?;
    for k in 0..sys.d {
        let priced: Vec<usize> = (0..m).filter(|j| !tiers.free_goods[k].contains(j)).collect();
        let mut r = vec![zero(); m];
        if !priced.is_empty() && !tiers.funded_agents[k].is_empty() {
            let np = priced.len();
            // r = r_plus - r_minus, minimize total magnitude
            let mut lp = LinearProgram::<Q>::new(2 * np, Direction::Min);
            for v in lp.c.iter_mut() {
                *v = one();
            }
            let mut rows_src: Vec<(usize, Vec<Q>)> = Vec::new();
            for &i in &tiers.funded_agents[k] {
                for y in &cache[i] {
                    let dz = sub_vec(y, x.row(i));
                    let mut row: Vec<(usize, Q)> = Vec::new();
                    for (c, &j) in priced.iter().enumerate() {
                        if !dz[j].is_zero() {
                            row.push((c, dz[j].clone()));
                            row.push((np + c, -dz[j].clone()));
                        }
                    }
                    lp.add_sparse(&row, Sense::Ge, -dot(&sys.p[k], &dz));
                    rows_src.push((i, y.clone()));
                }
            }
            let sol = solve_lp(&lp)?;
            if sol.status != LpStatus::Optimal {
                let terms = rows_src
                    .iter()
                    .zip(&sol.y)
                    .filter(|(_, v)| v.is_negative())
                    .map(|((i, y), v)| AggregateTerm {
                        agent: i + 1,
                        beta: -v.clone(),
                        y: y.clone(),
                    })
                    .collect();
                return Err(CertError::AggregateViolation {
                    currency: k + 1,
                    terms,
                });
            }
            for (c, &j) in priced.iter().enumerate() {
                r[j] = &sol.x[c] - &sol.x[np + c];
            }
        }
        q_rows.push(
            sys.p[k]
                .iter()
                .zip(&r)
                .map(|(a, b)| a + b)
                .collect::<Vec<Q>>(),
        );
        mods.push(r);
    }
    let gamma = dividends_from(e, x, &q_rows);
    let out = LexPriceSystem::new(q_rows, gamma);
    let mut report = verify_lde(e, x, &out)?;
    report.merge(check_strong_cbp(e, x, &out)?);
    let mut same_budget = true;
    let mut same_tier = true;
    let mut detail = Vec::new();
    for i in 0..e.n_agents() {
        if budget_vertices(e, sys, i)? != budget_vertices(e, &out, i)? {
            same_budget = false;
            detail.push(format!("agent {} budget polytope changed", i + 1));
        }
        if agent_tier(e, sys, i) != agent_tier(e, &out, i) {
            same_tier = false;
            detail.push(format!("agent {} first funded currency changed", i + 1));
        }
    }
    report.merge(VerificationReport::single(
        "budget sets preserved",
        same_budget,
        if same_budget {
            "budget polytope vertex sets equal for every agent".into()
        } else {
            detail.join("; ")
        },
    ));
    report.merge(VerificationReport::single(
        "first funded currency preserved",
        same_tier,
        "k_i unchanged for every agent".into(),
    ));
    Ok((
        StrengthenedSystem {
            system: out,
            modifications: mods,
        },
        report,
    ))
}

/// Formats a price row for traces and diagnostics.
pub fn row_string(v: &[Q]) -> String {
    v.iter().map(fmt_q).collect::<Vec<_>>().join(" ")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::{q, qf};

    fn table3() -> (Economy, Allocation) {
        let d = qf(1, 10);
        let h = qf(1, 2);
        let u = vec![
            vec![q(2), q(1), q(0)],
            vec![q(2), q(1), q(1) + d],
            vec![q(0), q(1), q(0)],
        ];
        let w = vec![
            vec![h.clone(), h.clone(), q(0)],
            vec![h.clone(), h.clone(), q(0)],
            vec![q(0), q(0), q(1)],
        ];
        let x = Allocation::new(vec![
            vec![h.clone(), h.clone(), q(0)],
            vec![h.clone(), q(0), h.clone()],
            vec![q(0), h.clone(), h],
        ]);
        (Economy::new(u, w), x)
    }

    #[test]
    fn unit_generators_give_uniform_prices() {
        let gens: Vec<Generator> = (0..3)
            .map(|j| {
                let mut z = vec![q(0); 3];
                z[j] = q(1);
                Generator {
                    agent: 0,
                    kind: GeneratorKind::Weak,
                    z,
                }
            })
            .collect();
        match separating_hyperplane(&gens, &[0, 1, 2], 3).unwrap() {
            Separation::Found(p) => assert_eq!(p, vec![qf(1, 3); 3]),
            _ => panic!("expected a separator"),
        }
    }

    #[test]
    fn negative_generator_is_infeasible() {
        let gens = vec![Generator {
            agent: 0,
            kind: GeneratorKind::Weak,
            z: vec![q(-1), q(-1)],
        }];
        assert!(matches!(
            separating_hyperplane(&gens, &[0, 1], 2).unwrap(),
            Separation::Infeasible(_)
        ));
    }

    #[test]
    fn table3_certify_and_strengthen() {
        let (e, x) = table3();
        let CertifyOutcome::Certified { system, report, .. } = certify(&e, &x).unwrap() else {
            panic!("expected certification");
        };
        assert!(report.verdict, "{report:?}");
        assert_eq!(system.p[0], vec![q(1), q(0), q(0)]);
        assert_eq!(system.p[1], vec![q(0), q(1), q(0)]);
        assert_eq!(system.alpha[1], vec![q(0), q(0), qf(1, 2)]);
        let (st, rep) = strengthen(&e, &x, &system).unwrap();
        assert!(rep.verdict, "{rep:?}");
        assert!(check_strong_cbp(&e, &x, &st.system).unwrap().verdict);
    }
}
