//! Computing an LDE: dividend equilibria of perturbed economies along a grid of `eps`,
//! tier decomposition of the price curve, and exact extraction of the limit.

mod extract;
mod numeric;
mod tiers;

pub use extract::{extract_lde, satiating_allocation, ExtractOutcome, ExtractParams, ExtractPath};
pub use numeric::{
    budget_max, phi, regularized_assignment, solve_dividend_equilibrium, track,
    DividendEquilibrium, NumEconomy, PathPoint, PhiEval,
};
pub use tiers::{extrapolate, tier_decompose, Surplus, TierDecomposition};

use crate::economy::{perturb, Economy, EconomyError};
use crate::lp_kernel::LpError;
use crate::rational::Q;
use num::{BigInt, One};
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-positive endowment entry (agent {agent}, good {good})")]
    NonPositiveEndowment { agent: usize, good: usize },
    #[error("no strict utility difference; every allocation of favorites satiates")]
    NoStrictPair,
    #[error("no fixed point found within budget (best residual {best_residual:.3e})")]
    NoFixedPoint { best_residual: f64 },
    #[error("only {0} grid points solved; at least 4 are needed")]
    TooFewSamples(usize),
    #[error("tier classification ambiguous at good {good}: {detail}")]
    AmbiguousTier { good: usize, detail: String },
    #[error("invalid epsilon grid: {0}")]
    Grid(String),
    #[error("no verified LDE found: {0}")]
    Inconclusive(String),
    #[error(transparent)]
    Lp(#[from] LpError),
    #[error(transparent)]
    Economy(#[from] EconomyError),
}

/// Parameters of the fixed-point map and its search.
#[derive(Debug, Clone, Serialize)]
pub struct FixedPointParams {
    pub eta: f64,
    /// upper cap on weights; `None` uses `2 / gap` with `gap` the smallest strict utility
    /// difference
    pub lambda_bar: Option<f64>,
    /// lower cap on weights
    pub eps: f64,
    pub delta: f64,
    pub damping: f64,
    pub max_iters: usize,
    pub residual_tol: f64,
    pub restarts: usize,
    pub seed: u64,
}

impl Default for FixedPointParams {
    fn default() -> Self {
        FixedPointParams {
            eta: 0.5,
            lambda_bar: None,
            eps: 1.0 / 16.0,
            delta: 1.0 / 256.0,
            damping: 0.5,
            max_iters: 5000,
            residual_tol: 1e-7,
            restarts: 8,
            seed: 0,
        }
    }
}

impl FixedPointParams {
    /// Same search settings at grid point `eps`, with `delta = eps^2`.
    pub fn at(&self, eps: f64) -> Self {
        FixedPointParams {
            eps,
            delta: eps * eps,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CurveSample {
    pub eps: f64,
    pub eq: DividendEquilibrium,
}

#[derive(Debug, Clone, Serialize)]
pub struct DroppedSample {
    pub eps: f64,
    pub reason: String,
}

/// Solved grid points, `eps` strictly decreasing.
#[derive(Debug, Clone, Default, Serialize)]
pub struct PriceCurve {
    pub samples: Vec<CurveSample>,
    pub dropped: Vec<DroppedSample>,
}

impl PriceCurve {
    /// CSV with one line per sample: `eps,residual,alpha,p_1..p_m`.
    pub fn to_csv(&self) -> String {
        let m = self.samples.first().map_or(0, |s| s.eq.p.len());
        let mut out = String::from("eps,residual,alpha");
        for j in 0..m {
            out.push_str(&format!(",p{}", j + 1));
        }
        out.push('\n');
        for s in &self.samples {
            out.push_str(&format!("{:e},{:e},{:e}", s.eps, s.eq.residual, s.eq.alpha));
            for v in &s.eq.p {
                out.push_str(&format!(",{v:e}"));
            }
            out.push('\n');
        }
        out
    }
}

/// `eps_t = 2^-t` for `t` in `t_min..=t_max`.
pub fn eps_grid(t_min: u32, t_max: u32) -> Result<Vec<Q>, SolverError> {
    if t_min == 0 || t_min > t_max || t_max > 60 {
        return Err(SolverError::Grid(format!(
            "need 1 <= t_min <= t_max <= 60, got {t_min}..{t_max}"
        )));
    }
    Ok((t_min..=t_max)
        .map(|t| Q::new(BigInt::one(), BigInt::one() << t as usize))
        .collect())
}

/// Regularization at which the solution path starts; the map is smooth there.
pub const PATH_START_DELTA: f64 = 1.0;

/// Solves the perturbed economies along `grid` by path following: the first point is
/// solved at `delta = PATH_START_DELTA` and tracked down to `delta = eps^2`, each later
/// point is tracked from the previous solution. When tracking fails the point is retried
/// with restarts; if that fails too it is dropped and recorded, and after two consecutive
/// drops with at least four samples in hand the rest of the grid is skipped.
pub fn solve_curve(
    e: &Economy,
    params: &FixedPointParams,
    grid: &[Q],
) -> Result<PriceCurve, SolverError> {
    let base = NumEconomy::from_exact(e);
    let mut curve = PriceCurve::default();
    let mut failures = 0;
    let mut current: Option<PathPoint> = None;
    for eps in grid {
        let epsf = crate::rational::to_f64(eps);
        if failures >= 2 && curve.samples.len() >= 4 {
            curve.dropped.push(DroppedSample {
                eps: epsf,
                reason: "skipped after two consecutive failures".into(),
            });
            continue;
        }
        let target = params.at(epsf);
        let pe = NumEconomy::from_exact(&perturb(e, eps)?);
        let from = match &current {
            Some(p) => Ok(p.clone()),
            None => {
                let start = FixedPointParams {
                    delta: PATH_START_DELTA,
                    ..target.clone()
                };
                solve_dividend_equilibrium(&pe, &start, None).map(|eq| PathPoint {
                    eps: epsf,
                    delta: PATH_START_DELTA,
                    lambda: eq.lambda,
                })
            }
        };
        let tracked = from.and_then(|f| track(&base, params, &f, epsf, target.delta));
        let solved = match tracked {
            Ok(pt) => {
                let ev = phi(&pe, &pt.lambda, &target)?;
                Ok(numeric::package(&pe, ev, pt.lambda))
            }
            Err(SolverError::NoFixedPoint { .. }) => {
                let warm = current.as_ref().map(|c| c.lambda.clone());
                solve_dividend_equilibrium(&pe, &target, warm.as_deref())
            }
            Err(err) => Err(err),
        };
        match solved {
            Ok(eq) => {
                failures = 0;
                current = Some(PathPoint {
                    eps: epsf,
                    delta: target.delta,
                    lambda: eq.lambda.clone(),
                });
                curve.samples.push(CurveSample { eps: epsf, eq });
            }
            Err(SolverError::NoFixedPoint { best_residual }) => {
                failures += 1;
                curve.dropped.push(DroppedSample {
                    eps: epsf,
                    reason: format!("best residual {best_residual:.3e}"),
                })
            }
            Err(err) => return Err(err),
        }
    }
    Ok(curve)
}
