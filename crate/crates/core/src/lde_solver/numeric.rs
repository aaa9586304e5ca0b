//! Floating-point dividend-equilibrium solver on a perturbed economy.

use super::{FixedPointParams, SolverError};
use crate::economy::Economy;
use crate::lp_kernel::max_welfare;
use crate::rational::to_f64;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

/// Floating-point copy of an economy.
#[derive(Debug, Clone)]
pub struct NumEconomy {
    pub u: Vec<Vec<f64>>,
    pub omega: Vec<Vec<f64>>,
    pub supply: Vec<f64>,
}

impl NumEconomy {
    pub fn from_exact(e: &Economy) -> Self {
        let conv = |m: &Vec<Vec<crate::rational::Q>>| -> Vec<Vec<f64>> {
            m.iter().map(|r| r.iter().map(to_f64).collect()).collect()
        };
        NumEconomy {
            u: conv(&e.utilities),
            omega: conv(&e.endowments),
            supply: e.supply.iter().map(to_f64).collect(),
        }
    }

    pub fn n(&self) -> usize {
        self.u.len()
    }

    pub fn m(&self) -> usize {
        self.supply.len()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DividendEquilibrium {
    pub x: Vec<Vec<f64>>,
    pub p: Vec<f64>,
    pub alpha: f64,
    pub lambda: Vec<f64>,
    /// `max_i |lambda_i - phi_i(lambda)|`
    pub residual: f64,
    /// largest `u_i^delta - u_i.x_i` over agents; zero at an exact equilibrium
    pub demand_gap: f64,
    /// largest deviation of a row or column sum of `x` from its target
    pub feasibility_gap: f64,
}

/// One evaluation of the fixed-point map.
#[derive(Debug, Clone)]
pub struct PhiEval {
    pub value: Vec<f64>,
    pub p: Vec<f64>,
    pub x: Vec<Vec<f64>>,
    pub alpha: f64,
    pub gaps: Vec<f64>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Regularized assignment: `argmax sum w_ij x_ij - delta |x|^2` over rows summing to 1 and
/// columns summing to `supply`. Semismooth Newton on the dual, started from the duals of
/// the unregularized assignment program.
pub fn regularized_assignment(w: &[Vec<f64>], supply: &[f64], delta: f64) -> Vec<Vec<f64>> {
    if delta <= 0.0 {
        return vertex_assignment(w, supply);
    }
    match max_welfare::<f64>(w, supply) {
        Ok(s) => regularized_from(w, supply, delta, &s.alpha, &s.beta),
        Err(_) => {
            let a: Vec<f64> = w
                .iter()
                .map(|r| r.iter().cloned().fold(f64::NEG_INFINITY, f64::max))
                .collect();
            regularized_from(w, supply, delta, &a, &vec![0.0; supply.len()])
        }
    }
}

fn regularized_from(
    w: &[Vec<f64>],
    supply: &[f64],
    delta: f64,
    a0: &[f64],
    b0: &[f64],
) -> Vec<Vec<f64>> {
    let n = w.len();
    let m = supply.len();
    let two_d = 2.0 * delta;
    // shift so that every tight cell starts with unit mass
    let mut a: Vec<f64> = a0.iter().map(|v| v - delta).collect();
    let mut b: Vec<f64> = b0.iter().map(|v| v - delta).collect();
    let mut prev_gnorm = f64::INFINITY;
    let primal = |a: &[f64], b: &[f64]| -> Vec<Vec<f64>> {
        (0..n)
            .map(|i| (0..m).map(|j| (w[i][j] - a[i] - b[j]).max(0.0) / two_d).collect())
            .collect()
    };
    let dual = |a: &[f64], b: &[f64]| -> f64 {
        let mut v: f64 = a.iter().sum::<f64>() + dot(supply, b);
        for i in 0..n {
            for j in 0..m {
                let t = (w[i][j] - a[i] - b[j]).max(0.0);
                v += t * t / (2.0 * two_d);
            }
        }
        v
    };
    let mut x = primal(&a, &b);
    for _ in 0..200 {

        let mut g = vec![0.0; n + m];
        for i in 0..n {
            g[i] = 1.0 - x[i].iter().sum::<f64>();
        }
        for j in 0..m {
            g[n + j] = supply[j] - x.iter().map(|r| r[j]).sum::<f64>();
        }
        let gnorm = g.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
        if gnorm < 1e-13 || (gnorm < 1e-9 && gnorm > 0.5 * prev_gnorm) {
            break;
        }
        prev_gnorm = gnorm;
        // Hessian scaled by 2 delta: active-set Laplacian plus a small ridge
        let mut h = DMatrix::<f64>::zeros(n + m, n + m);
        for i in 0..n {
            for j in 0..m {
                if w[i][j] - a[i] - b[j] > 0.0 {
                    h[(i, i)] += 1.0;
                    h[(n + j, n + j)] += 1.0;
                    h[(i, n + j)] += 1.0;
                    h[(n + j, i)] += 1.0;
                }
            }
        }
        for k in 0..n + m {
            h[(k, k)] += 1e-9;
        }
        let rhs = DVector::from_iterator(n + m, g.iter().map(|v| -v * two_d));
        let step = match h.clone().cholesky() {
            Some(c) => c.solve(&rhs),
            None => match h.lu().solve(&rhs) {
                Some(s) => s,
                None => break,
            },
        };
        let f0 = dual(&a, &b);
        let slope: f64 = (0..n + m).map(|k| g[k] * step[k]).sum();
        let grad_norm = |x: &[Vec<f64>]| -> f64 {
            let mut r = 0.0f64;
            for row in x {
                r = r.max((1.0 - row.iter().sum::<f64>()).abs());
            }
            for (j, s) in supply.iter().enumerate() {
                r = r.max((s - x.iter().map(|row| row[j]).sum::<f64>()).abs());
            }
            r
        };
        let mut t = 1.0;
        let mut accepted = false;
        for attempt in 0..80 {
            let na: Vec<f64> = (0..n).map(|i| a[i] + t * step[i]).collect();
            let nb: Vec<f64> = (0..m).map(|j| b[j] + t * step[n + j]).collect();
            // near the optimum the dual decrease drops below rounding; the full step is
            // then judged by the gradient instead
            let full_ok = attempt == 0 && grad_norm(&primal(&na, &nb)) < gnorm;
            if full_ok || dual(&na, &nb) <= f0 + 1e-4 * t * slope {
                a = na;
                b = nb;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            break;
        }
        x = primal(&a, &b);
    }
    x
}

/// Welfare-maximizing vertex, used when no regularization is requested.
fn vertex_assignment(w: &[Vec<f64>], supply: &[f64]) -> Vec<Vec<f64>> {
    match max_welfare::<f64>(w, supply) {
        Ok(s) => s.x,
        Err(_) => vec![vec![0.0; supply.len()]; w.len()],
    }
}

/// `max u.y` over `y >= 0, sum y <= 1, p.y <= budget`. Some optimum has at most two
/// non-zero coordinates, one of which may be the unspent share.
pub fn budget_max(u: &[f64], p: &[f64], budget: f64) -> f64 {
    let m = u.len();
    let mut best = 0.0f64;
    for j in 0..m {
        if p[j] <= budget {
            best = best.max(u[j]);
        }
    }
    // pairs (j expensive, l cheap), l = m stands for the unspent share
    for j in 0..m {
        if p[j] <= budget {
            continue;
        }
        for l in 0..=m {
            let (pl, ul) = if l == m { (0.0, 0.0) } else { (p[l], u[l]) };
            if pl > budget {
                continue;
            }
            let t = (budget - pl) / (p[j] - pl);
            best = best.max(t * u[j] + (1.0 - t) * ul);
        }
    }
    best
}

pub(super) fn lambda_bar(e: &NumEconomy, params: &FixedPointParams) -> Result<f64, SolverError> {
    if let Some(l) = params.lambda_bar {
        return Ok(l);
    }
    let mut gap = f64::INFINITY;
    for row in &e.u {
        for a in row {
            for b in row {
                if a > b {
                    gap = gap.min(a - b);
                }
            }
        }
    }
    if gap.is_finite() {
        Ok(2.0 / gap)
    } else {
        Err(SolverError::NoStrictPair)
    }
}

/// Evaluates the fixed-point map at `lambda`.
pub fn phi(
    e: &NumEconomy,
    lambda: &[f64],
    params: &FixedPointParams,
) -> Result<PhiEval, SolverError> {
    let n = e.n();
    if lambda.len() != n {
        return Err(SolverError::Shape(format!(
            "lambda has {} entries, economy has {} agents",
            lambda.len(),
            n
        )));
    }
    if let Some((i, j)) = (0..n)
        .flat_map(|i| (0..e.m()).map(move |j| (i, j)))
        .find(|&(i, j)| e.omega[i][j] <= 0.0)
    {
        return Err(SolverError::NonPositiveEndowment {
            agent: i + 1,
            good: j + 1,
        });
    }
    let lbar = lambda_bar(e, params)?;
    let w: Vec<Vec<f64>> = e
        .u
        .iter()
        .zip(lambda)
        .map(|(r, l)| r.iter().map(|v| v * l).collect())
        .collect();
    let base = max_welfare::<f64>(&w, &e.supply)?;
    // VCG prices: marginal welfare of one more unit of each good
    let p = (0..e.m())
        .map(|l| {
            let mut caps = e.supply.clone();
            caps[l] += 1.0;
            Ok((max_welfare::<f64>(&w, &caps)?.value - base.value).max(0.0))
        })
        .collect::<Result<Vec<f64>, SolverError>>()?;
    let x = if params.delta > 0.0 {
        regularized_from(&w, &e.supply, params.delta, &base.alpha, &base.beta)
    } else {
        base.x.clone()
    };
    let alpha = (0..n)
        .map(|k| dot(&p, &x[k]) - dot(&p, &e.omega[k]))
        .fold(0.0f64, f64::max);
    let denom = params.eta + (1.0 - params.eta) * p.iter().sum::<f64>();
    let mut value = Vec::with_capacity(n);
    let mut gaps = Vec::with_capacity(n);
    for i in 0..n {
        let budget = dot(&p, &e.omega[i]) + alpha;
        let g = budget_max(&e.u[i], &p, budget) - dot(&e.u[i], &x[i]);
        gaps.push(g);
        let v = (lambda[i] + g.clamp(0.0, 1.0)) / denom;
        value.push(v.clamp(params.eps, lbar));
    }
    Ok(PhiEval {
        value,
        p,
        x,
        alpha,
        gaps,
    })
}

fn residual(ev: &PhiEval, lambda: &[f64]) -> f64 {
    ev.value
        .iter()
        .zip(lambda)
        .fold(0.0f64, |acc, (f, l)| acc.max((f - l).abs()))
}

pub(super) fn package(e: &NumEconomy, ev: PhiEval, lambda: Vec<f64>) -> DividendEquilibrium {
    let r = residual(&ev, &lambda);
    let mut feas = 0.0f64;
    for row in &ev.x {
        feas = feas.max((row.iter().sum::<f64>() - 1.0).abs());
    }
    for (j, s) in e.supply.iter().enumerate() {
        feas = feas.max((ev.x.iter().map(|r| r[j]).sum::<f64>() - s).abs());
    }
    DividendEquilibrium {
        demand_gap: ev.gaps.iter().cloned().fold(0.0f64, f64::max),
        feasibility_gap: feas,
        x: ev.x,
        p: ev.p,
        alpha: ev.alpha,
        lambda,
        residual: r,
    }
}

/// Damped iteration `lambda <- (1 - s) lambda + s phi(lambda)`; stops early when the
/// residual stagnates. Returns the best iterate seen and its residual.
fn damped(
    e: &NumEconomy,
    start: Vec<f64>,
    params: &FixedPointParams,
) -> Result<(Vec<f64>, f64), SolverError> {
    let s = params.damping;
    let mut lam = start;
    let mut best = (lam.clone(), f64::INFINITY);
    let mut last_improvement = 0usize;
    for it in 0..params.max_iters {
        let ev = phi(e, &lam, params)?;
        let r = residual(&ev, &lam);
        if r < best.1 * 0.999 {
            best = (lam.clone(), r);
            last_improvement = it;
        }
        if r <= params.residual_tol || it - last_improvement > 50 {
            break;
        }
        lam = lam
            .iter()
            .zip(&ev.value)
            .map(|(l, f)| (1.0 - s) * l + s * f)
            .collect();
    }
    Ok(best)
}

/// Levenberg-Marquardt on `phi(lambda) - lambda` inside the box `[eps, lambda_bar]`. Unless
/// `patient`, gives up early when progress stalls.
pub(super) fn levenberg_marquardt(
    e: &NumEconomy,
    start: Vec<f64>,
    params: &FixedPointParams,
    lbar: f64,
    patient: bool,
) -> Result<(Vec<f64>, f64), SolverError> {
    let n = start.len();
    let h = (params.delta * 1e-3).clamp(1e-12, 1e-7);
    let f = |lam: &[f64]| -> Result<Vec<f64>, SolverError> {
        let ev = phi(e, lam, params)?;
        Ok(ev.value.iter().zip(lam).map(|(v, l)| v - l).collect())
    };
    let norm2 = |v: &[f64]| v.iter().map(|a| a * a).sum::<f64>();
    let inf = |v: &[f64]| v.iter().fold(0.0f64, |acc, a| acc.max(a.abs()));
    let mut lam = start;
    let mut fx = f(&lam)?;
    let mut mu = 1e-3;
    // residual at the last checkpoint; LM stops when twenty iterations gain less than a tenth
    let mut checkpoint = inf(&fx);
    for it in 1..=300 {
        let r = inf(&fx);
        if r <= params.residual_tol {
            break;
        }
        if !patient && it % 20 == 0 {
            if r > 0.9 * checkpoint {
                break;
            }
            checkpoint = r;
        }
        let mut jac = DMatrix::<f64>::zeros(n, n);
        for k in 0..n {
            let mut l2 = lam.clone();
            // step inward when at the upper face of the box
            let hk = if lam[k] + h > lbar { -h } else { h };
            l2[k] += hk;
            let f2 = f(&l2)?;
            for r in 0..n {
                jac[(r, k)] = (f2[r] - fx[r]) / hk;
            }
        }
        let fv = DVector::from_column_slice(&fx);
        let jtj = jac.transpose() * &jac;
        let jtf = jac.transpose() * &fv;
        let mut improved = false;
        while mu < 1e14 {
            let mut a = jtj.clone();
            for k in 0..n {
                a[(k, k)] += mu * (1.0 + jtj[(k, k)]);
            }
            let step = match a.lu().solve(&(-&jtf)) {
                Some(s) => s,
                None => {
                    mu *= 4.0;
                    continue;
                }
            };
            let cand: Vec<f64> = (0..n)
                .map(|k| (lam[k] + step[k]).clamp(params.eps, lbar))
                .collect();
            let fc = f(&cand)?;
            if norm2(&fc) < norm2(&fx) {
                lam = cand;
                fx = fc;
                mu = (mu / 3.0).max(1e-12);
                improved = true;
                break;
            }
            mu *= 4.0;
        }
        if !improved {
            break;
        }
    }
    let r = inf(&fx);
    Ok((lam, r))
}

/// Newton steps with one-sided difference Jacobians taken at tiny offsets, so that each
/// Jacobian belongs to a single smooth piece of the map; candidate steps are tried under a
/// max-norm line search and the first that halves the residual, else the best, is taken. Finishes solves where Levenberg-Marquardt stalls
/// on a kink.
pub(super) fn piecewise_newton(
    e: &NumEconomy,
    start: Vec<f64>,
    params: &FixedPointParams,
    lbar: f64,
) -> Result<(Vec<f64>, f64), SolverError> {
    let n = start.len();
    let f = |lam: &[f64]| -> Result<Vec<f64>, SolverError> {
        let ev = phi(e, lam, params)?;
        Ok(ev.value.iter().zip(lam).map(|(v, l)| v - l).collect())
    };
    let inf = |v: &[f64]| v.iter().fold(0.0f64, |acc, a| acc.max(a.abs()));
    let mut lam = start;
    let mut fx = f(&lam)?;
    let mut r = inf(&fx);
    let mut slow = 0;
    for _ in 0..40 {
        if r <= params.residual_tol * 0.1 || slow >= 3 {
            break;
        }
        let mut best: Option<(Vec<f64>, Vec<f64>, f64)> = None;
        'variants: for sign in [1.0, -1.0] {
            for h in [1e-9, 1e-11] {
                let mut jac = DMatrix::<f64>::zeros(n, n);
                for k in 0..n {
                    let mut l2 = lam.clone();
                    l2[k] += sign * h;
                    let f2 = f(&l2)?;
                    for row in 0..n {
                        jac[(row, k)] = (f2[row] - fx[row]) / (sign * h);
                    }
                }
                let Some(step) = jac.lu().solve(&(-DVector::from_column_slice(&fx))) else {
                    continue;
                };
                let mut t = 1.0;
                for _ in 0..30 {
                    let cand: Vec<f64> = (0..n)
                        .map(|k| (lam[k] + t * step[k]).clamp(params.eps, lbar))
                        .collect();
                    let fc = f(&cand)?;
                    let rc = inf(&fc);
                    if rc < r {
                        if best.as_ref().is_none_or(|b| rc < b.2) {
                            best = Some((cand, fc, rc));
                        }
                        break;
                    }
                    t *= 0.5;
                }
                // a variant that halves the residual is taken without trying the rest
                if best.as_ref().is_some_and(|b| b.2 <= 0.5 * r) {
                    break 'variants;
                }
            }
        }
        match best {
            Some((c, fc, rc)) => {
                slow = if rc > 0.5 * r { slow + 1 } else { 0 };
                lam = c;
                fx = fc;
                r = rc;
            }
            None => break,
        }
    }
    Ok((lam, r))
}

/// Residual below which a stalled Levenberg-Marquardt solve is handed to piecewise Newton.
const POLISH_THRESHOLD: f64 = 1e-3;

/// Levenberg-Marquardt followed, when it stalls near a solution, by piecewise Newton.
pub(super) fn local_solve(
    e: &NumEconomy,
    start: Vec<f64>,
    params: &FixedPointParams,
    lbar: f64,
    patient: bool,
) -> Result<(Vec<f64>, f64), SolverError> {
    let (lam, r) = levenberg_marquardt(e, start, params, lbar, patient)?;
    if r <= params.residual_tol || r > POLISH_THRESHOLD {
        return Ok((lam, r));
    }
    piecewise_newton(e, lam, params, lbar)
}

impl NumEconomy {
    /// `omega_ij <- (eps/n) s_j + (1 - eps) omega_ij`.
    pub fn perturbed(&self, eps: f64) -> NumEconomy {
        let n = self.n() as f64;
        NumEconomy {
            u: self.u.clone(),
            omega: self
                .omega
                .iter()
                .map(|r| {
                    r.iter()
                        .zip(&self.supply)
                        .map(|(w, s)| eps / n * s + (1.0 - eps) * w)
                        .collect()
                })
                .collect(),
            supply: self.supply.clone(),
        }
    }
}

/// A point on the solution path: weights solving the map at `(eps, delta)`.
#[derive(Debug, Clone)]
pub struct PathPoint {
    pub eps: f64,
    pub delta: f64,
    pub lambda: Vec<f64>,
}

/// Smallest continuation step, as a fraction of the log-distance between endpoints.
const MIN_PATH_STEP: f64 = 1.0 / 512.0;

/// Follows the fixed point from `from` to `(eps, delta)` of the perturbed `base` economy,
/// moving `log eps` and `log delta` linearly with adaptive steps; each step is a
/// Levenberg-Marquardt solve warm-started by a secant predictor.
pub fn track(
    base: &NumEconomy,
    params: &FixedPointParams,
    from: &PathPoint,
    eps: f64,
    delta: f64,
) -> Result<PathPoint, SolverError> {
    let (le0, ld0) = (from.eps.ln(), from.delta.ln());
    let (le1, ld1) = (eps.ln(), delta.ln());
    let mut s = 0.0f64;
    let mut h = 1.0f64;
    let mut lam = from.lambda.clone();
    let mut prev: Option<(f64, Vec<f64>)> = None;
    let mut best_r = f64::INFINITY;
    while s < 1.0 {
        let s_new = (s + h).min(1.0);
        let e_s = (le0 + (le1 - le0) * s_new).exp();
        let d_s = (ld0 + (ld1 - ld0) * s_new).exp();
        let p_s = FixedPointParams {
            eps: e_s,
            delta: d_s,
            ..params.clone()
        };
        let econ = base.perturbed(e_s);
        let lbar = lambda_bar(&econ, &p_s)?;
        let start: Vec<f64> = match &prev {
            Some((s0, l0)) if s > *s0 => {
                let k = (s_new - s) / (s - s0);
                lam.iter().zip(l0).map(|(a, b)| a + (a - b) * k).collect()
            }
            _ => lam.clone(),
        };
        let start: Vec<f64> = start.iter().map(|l| l.clamp(e_s, lbar)).collect();
        let (l, r) = local_solve(&econ, start, &p_s, lbar, false)?;
        if r <= params.residual_tol {
            prev = Some((s, std::mem::replace(&mut lam, l)));
            s = s_new;
            h = (h * 1.25).min(1.0);
        } else {
            best_r = best_r.min(r);
            h /= 2.0;
            if h < MIN_PATH_STEP {
                return Err(SolverError::NoFixedPoint { best_residual: best_r });
            }
        }
    }
    Ok(PathPoint {
        eps,
        delta,
        lambda: lam,
    })
}

/// Searches for a fixed point of `phi`. Without a warm start: damped iteration, then
/// Levenberg-Marquardt, then seeded random restarts on `[0.2, 2]^n`. With a warm start:
/// Levenberg-Marquardt from it, then restarts alternating between small perturbations of
/// the warm start and random points.
pub fn solve_dividend_equilibrium(
    e: &NumEconomy,
    params: &FixedPointParams,
    warm: Option<&[f64]>,
) -> Result<DividendEquilibrium, SolverError> {
    let n = e.n();
    let lbar = lambda_bar(e, params)?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut best: Option<(Vec<f64>, f64)> = None;
    for attempt in 0..=params.restarts {
        let start: Vec<f64> = match (attempt, warm) {
            (0, Some(w)) => w.to_vec(),
            (0, None) => vec![1.0; n],
            (k, Some(w)) if k % 2 == 1 => w
                .iter()
                .map(|l| l * (1.0 + rng.gen_range(-0.02..0.02)))
                .collect(),
            _ => (0..n).map(|_| rng.gen_range(0.2..2.0)).collect(),
        };
        let start: Vec<f64> = start.iter().map(|l| l.clamp(params.eps, lbar)).collect();
        let (lam, r) = if warm.is_some() {
            (start, f64::INFINITY)
        } else {
            damped(e, start, params)?
        };
        let (lam, r) = if r <= params.residual_tol {
            (lam, r)
        } else {
            local_solve(e, lam, params, lbar, true)?
        };
        if best.as_ref().is_none_or(|b| r < b.1) {
            best = Some((lam, r));
        }
        if r <= params.residual_tol {
            break;
        }
    }
    let (lam, r) = best.expect("at least one attempt");
    if r > params.residual_tol {
        return Err(SolverError::NoFixedPoint { best_residual: r });
    }
    let ev = phi(e, &lam, params)?;
    Ok(package(e, ev, lam))
}
