//! Exact LDE extraction from a solved price curve.

use super::tiers::{extrapolate, tier_decompose, TierDecomposition};
use super::{eps_grid, solve_curve, FixedPointParams, PriceCurve, SolverError};
use crate::economy::{Allocation, Economy};
use crate::hyperplane_certifier::{certify, strengthen, CertifyOutcome};
use crate::lde_model::{
    check_strong_cbp, dividends_from, verify_lde, LexPriceSystem, VerificationReport,
};
use crate::lp_kernel::{max_welfare, solve_lp, Direction, LinearProgram, LpStatus, Sense};
use crate::rational::{one, rationalize, simplest_within, zero, Q};
use serde::Serialize;

/// Snap tolerances tried in order when rounding the limit allocation.
pub const SNAP_TOLERANCES: [f64; 4] = [1e-2, 1e-3, 1e-4, 1e-5];
/// Largest common denominator tried when rounding the whole limit allocation to a grid.
pub const MAX_GRID_DENOMINATOR: i64 = 240;
/// Number of grid roundings kept.
pub const GRID_CANDIDATES: usize = 3;

#[derive(Debug, Clone, Serialize)]
pub struct ExtractParams {
    pub fixed_point: FixedPointParams,
    pub t_min: u32,
    pub t_max: u32,
    pub denominator_cap: u64,
}

impl Default for ExtractParams {
    fn default() -> Self {
        ExtractParams {
            fixed_point: FixedPointParams::default(),
            t_min: 4,
            t_max: 16,
            denominator_cap: 1_000_000,
        }
    }
}

/// Which construction produced the verified tuple.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ExtractPath {
    /// every agent receives a favorite good at zero prices
    Satiation,
    /// price rows read off the tier decomposition
    Tiers,
    /// price rows from the hyperplane certifier, then strengthened
    Certified,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExtractOutcome {
    pub x: Allocation,
    pub system: LexPriceSystem,
    pub report: VerificationReport,
    pub path: ExtractPath,
    pub decomposition: Option<TierDecomposition>,
    pub decomposition_error: Option<String>,
    pub curve: PriceCurve,
    /// notes on candidates that did not verify
    pub attempts: Vec<String>,
}

/// An allocation giving every agent only favorite goods, if one exists.
pub fn satiating_allocation(e: &Economy) -> Result<Option<Allocation>, SolverError> {
    let n = e.n_agents();
    let favs: Vec<Vec<usize>> = (0..n).map(|i| e.favorites(i)).collect();
    let w: Vec<Vec<Q>> = (0..n)
        .map(|i| {
            (0..e.n_goods())
                .map(|j| if favs[i].contains(&j) { one() } else { zero() })
                .collect()
        })
        .collect();
    let sol = max_welfare(&w, &e.supply)?;
    if sol.value == Q::from_integer((n as i64).into()) {
        Ok(Some(Allocation::new(sol.x)))
    } else {
        Ok(None)
    }
}

/// Closest point of the allocation set to `target` in the L1 norm (exact LP).
fn project(e: &Economy, target: &[Vec<Q>]) -> Result<Allocation, SolverError> {
    let n = e.n_agents();
    let m = e.n_goods();
    let nm = n * m;
    // x, d+, d-
    let mut lp = LinearProgram::<Q>::new(3 * nm, Direction::Min);
    for k in nm..3 * nm {
        lp.c[k] = one();
    }
    for i in 0..n {
        for j in 0..m {
            let k = i * m + j;
            lp.add_sparse(
                &[(k, one()), (nm + k, -one()), (2 * nm + k, one())],
                Sense::Eq,
                target[i][j].clone(),
            );
        }
    }
    for i in 0..n {
        let row: Vec<(usize, Q)> = (0..m).map(|j| (i * m + j, one())).collect();
        lp.add_sparse(&row, Sense::Eq, one());
    }
    for j in 0..m {
        let col: Vec<(usize, Q)> = (0..n).map(|i| (i * m + j, one())).collect();
        lp.add_sparse(&col, Sense::Eq, e.supply[j].clone());
    }
    let sol = solve_lp(&lp)?;
    if sol.status != LpStatus::Optimal {
        return Err(SolverError::Inconclusive("projection program infeasible".into()));
    }
    Ok(Allocation::new(
        (0..n).map(|i| sol.x[i * m..(i + 1) * m].to_vec()).collect(),
    ))
}

fn full_report(e: &Economy, x: &Allocation, sys: &LexPriceSystem) -> Result<VerificationReport, SolverError> {
    let mut r = verify_lde(e, x, sys).map_err(|err| SolverError::Inconclusive(err.to_string()))?;
    r.merge(check_strong_cbp(e, x, sys).map_err(|err| SolverError::Inconclusive(err.to_string()))?);
    Ok(r)
}

fn failure_summary(r: &VerificationReport) -> String {
    r.failures()
        .map(|c| c.detail.clone())
        .take(2)
        .collect::<Vec<_>>()
        .join("; ")
}

/// Limit allocation candidates: extrapolated `x^eps` rounded jointly to the coarsest fitting
/// grids `1/D`, snapped entrywise at each tolerance, then the denominator-capped rounding;
/// each projected exactly onto the allocation set.
fn candidates(e: &Economy, curve: &PriceCurve, cap: u64) -> Result<Vec<(String, Allocation)>, SolverError> {
    let n = e.n_agents();
    let m = e.n_goods();
    let eps: Vec<f64> = curve.samples.iter().map(|s| s.eps).collect();
    let limit: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            (0..m)
                .map(|j| {
                    let ys: Vec<f64> = curve.samples.iter().map(|s| s.eq.x[i][j]).collect();
                    extrapolate(&eps, &ys)
                })
                .collect()
        })
        .collect();
    let mut out: Vec<(String, Allocation)> = Vec::new();
    let mut push = |label: String, target: Vec<Vec<Q>>| -> Result<bool, SolverError> {
        let x = project(e, &target)?;
        if out.iter().any(|(_, y)| *y == x) {
            return Ok(false);
        }
        out.push((label, x));
        Ok(true)
    };
    // joint rounding to a grid 1/D, accepted when every entry is within a quarter step
    let mut kept = 0;
    for den in 1..=MAX_GRID_DENOMINATOR {
        if kept == GRID_CANDIDATES {
            break;
        }
        let df = den as f64;
        let fits = limit
            .iter()
            .flatten()
            .all(|v| (v * df - (v * df).round()).abs() < 0.25);
        if !fits {
            continue;
        }
        let target = limit
            .iter()
            .map(|r| {
                r.iter()
                    .map(|v| Q::new(((v.max(0.0) * df).round() as i64).into(), den.into()))
                    .collect()
            })
            .collect();
        if push(format!("grid 1/{den}"), target)? {
            kept += 1;
        }
    }
    for tol in SNAP_TOLERANCES {
        let target = limit
            .iter()
            .map(|r| r.iter().map(|v| simplest_within(v.clamp(0.0, f64::MAX), tol)).collect())
            .collect();
        push(format!("snap {tol:e}"), target)?;
    }
    let target = limit
        .iter()
        .map(|r| r.iter().map(|v| rationalize(v.max(0.0), cap)).collect())
        .collect();
    push(format!("denominator cap {cap}"), target)?;
    Ok(out)
}

/// Computes an LDE with the strong cheapest bundle property. Every returned tuple has
/// passed exact verification; otherwise the error describes what was tried.
pub fn extract_lde(e: &Economy, params: &ExtractParams) -> Result<ExtractOutcome, SolverError> {
    let n = e.n_agents();
    let m = e.n_goods();
    if let Some(x) = satiating_allocation(e)? {
        let sys = LexPriceSystem::zero(m, n);
        let report = full_report(e, &x, &sys)?;
        if report.verdict {
            return Ok(ExtractOutcome {
                x,
                system: sys,
                report,
                path: ExtractPath::Satiation,
                decomposition: None,
                decomposition_error: None,
                curve: PriceCurve::default(),
                attempts: Vec::new(),
            });
        }
    }
    let grid = eps_grid(params.t_min, params.t_max)?;
    let curve = solve_curve(e, &params.fixed_point, &grid)?;
    if curve.samples.is_empty() {
        return Err(SolverError::TooFewSamples(0));
    }
    // a short curve still yields allocation candidates for certification
    let (decomposition, decomposition_error) = match tier_decompose(&curve, 1e-4) {
        Ok(d) => (Some(d), None),
        Err(err) => (None, Some(err.to_string())),
    };
    let mut attempts = Vec::new();
    for (label, x) in candidates(e, &curve, params.denominator_cap)? {
        if let Some(dec) = decomposition.as_ref().filter(|d| d.d > 0) {
            let p: Vec<Vec<Q>> = dec.p[..=dec.m].to_vec();
            let alpha = dividends_from(e, &x, &p);
            let sys = LexPriceSystem::new(p, alpha);
            let report = full_report(e, &x, &sys)?;
            if report.verdict {
                return Ok(ExtractOutcome {
                    x,
                    system: sys,
                    report,
                    path: ExtractPath::Tiers,
                    decomposition,
                    decomposition_error,
                    curve,
                    attempts,
                });
            }
            attempts.push(format!("{label}, tier prices: {}", failure_summary(&report)));
        }
        match certify(e, &x) {
            Ok(CertifyOutcome::Certified { system, .. }) => match strengthen(e, &x, &system) {
                Ok((strong, _)) => {
                    let report = full_report(e, &x, &strong.system)?;
                    if report.verdict {
                        return Ok(ExtractOutcome {
                            x,
                            system: strong.system,
                            report,
                            path: ExtractPath::Certified,
                            decomposition,
                            decomposition_error,
                            curve,
                            attempts,
                        });
                    }
                    attempts.push(format!(
                        "{label}, strengthened prices: {}",
                        failure_summary(&report)
                    ));
                }
                Err(err) => attempts.push(format!("{label}, strengthen: {err}")),
            },
            Ok(CertifyOutcome::Refuted { .. }) => {
                attempts.push(format!("{label}: allocation is not in the rejective core"))
            }
            Err(err) => attempts.push(format!("{label}, certify: {err}")),
        }
    }
    Err(SolverError::Inconclusive(attempts.join(" | ")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::{q, qf};

    fn table3() -> Economy {
        let h = qf(1, 2);
        Economy::new(
            vec![
                vec![q(2), q(1), q(0)],
                vec![q(2), q(1), qf(11, 10)],
                vec![q(0), q(1), q(0)],
            ],
            vec![
                vec![h.clone(), h.clone(), q(0)],
                vec![h.clone(), h, q(0)],
                vec![q(0), q(0), q(1)],
            ],
        )
    }

    #[test]
    fn table3_solution() {
        let e = table3();
        let out = extract_lde(&e, &ExtractParams::default()).unwrap();
        assert_eq!(out.path, ExtractPath::Tiers);
        let h = qf(1, 2);
        assert_eq!(
            out.x.rows,
            vec![
                vec![h.clone(), h.clone(), q(0)],
                vec![h.clone(), q(0), h.clone()],
                vec![q(0), h.clone(), h.clone()],
            ]
        );
        assert!(out.report.verdict);
    }
}
