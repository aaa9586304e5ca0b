//! Peeling a vanishing price curve into lexicographic currencies.

use super::{PriceCurve, SolverError};
use crate::rational::{simplest_within, to_f64, zero, Q};
use serde::Serialize;

/// Goods share a tier when their fitted slopes differ by less than this.
pub const SLOPE_WINDOW: f64 = 0.25;
/// A slope this close to the window edge is reported as ambiguous.
pub const AMBIGUITY_MARGIN: f64 = 0.05;
/// Final-sample magnitude ratio accepted inside one tier.
pub const RATIO_WINDOW: (f64, f64) = (1e-2, 1e2);

/// Limit of the surplus ratio in the last currency.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum Surplus {
    Finite(f64),
    Infinite,
}

#[derive(Debug, Clone, Serialize)]
pub struct TierDecomposition {
    pub d: usize,
    /// representative good of each tier (0-based)
    pub representatives: Vec<usize>,
    /// goods classified into each tier
    pub classes: Vec<Vec<usize>>,
    #[serde(with = "crate::rational::serde_q::mat")]
    pub p: Vec<Vec<Q>>,
    /// `C_k` sampled on the grid (normalized curve)
    pub scales: Vec<Vec<f64>>,
    /// fitted log-log slope of each tier's representative
    pub slopes: Vec<f64>,
    /// surplus currency (0-based)
    pub m: usize,
    pub surplus: Surplus,
    pub eps: Vec<f64>,
}

impl TierDecomposition {
    /// `C_{k+1} / C_k` at the smallest grid point, per consecutive pair of tiers.
    pub fn final_scale_ratios(&self) -> Vec<f64> {
        self.scales
            .windows(2)
            .map(|w| {
                let a = *w[0].last().unwrap_or(&0.0);
                let b = *w[1].last().unwrap_or(&0.0);
                if a > 0.0 {
                    b / a
                } else {
                    f64::INFINITY
                }
            })
            .collect()
    }
}

/// Least-squares slope of `ys` against `xs`.
fn slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut num = 0.0;
    let mut den = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        num += (x - mx) * (y - my);
        den += (x - mx) * (x - mx);
    }
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

/// Value at `eps = 0` of the line fitted through the last three samples.
pub fn extrapolate(eps: &[f64], ys: &[f64]) -> f64 {
    let k = eps.len().min(3);
    let xs = &eps[eps.len() - k..];
    let vs = &ys[ys.len() - k..];
    if k < 2 {
        return vs[k - 1];
    }
    let b = slope(xs, vs);
    let mx = xs.iter().sum::<f64>() / k as f64;
    let my = vs.iter().sum::<f64>() / k as f64;
    my - b * mx
}

fn log_slope(eps: &[f64], vals: &[f64], tol: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = eps
        .iter()
        .zip(vals)
        .zip(tol)
        .filter(|((_, v), t)| v.abs() > **t)
        .map(|((e, v), _)| (e.ln(), v.abs().ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let (xs, ys): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
    Some(slope(&xs, &ys))
}

/// Classifies goods by the rate at which their normalized prices vanish and extracts the
/// limit price rows, scales and surplus index. `snap_tol` is the rationalization tolerance
/// for the limit ratios.
pub fn tier_decompose(curve: &PriceCurve, snap_tol: f64) -> Result<TierDecomposition, SolverError> {
    let samples = &curve.samples;
    if samples.len() < 4 {
        return Err(SolverError::TooFewSamples(samples.len()));
    }
    if samples.windows(2).any(|w| w[1].eps >= w[0].eps) {
        return Err(SolverError::Shape("grid must be strictly decreasing".into()));
    }
    let eps: Vec<f64> = samples.iter().map(|s| s.eps).collect();
    let t_len = samples.len();
    let m = samples[0].eq.p.len();
    let n = samples[0].eq.x.len();
    // normalize each sample by its largest price
    let scale: Vec<f64> = samples
        .iter()
        .map(|s| s.eq.p.iter().cloned().fold(0.0f64, f64::max))
        .collect();
    let pn: Vec<Vec<f64>> = samples
        .iter()
        .zip(&scale)
        .map(|(s, &c)| {
            if c > 1e-14 {
                s.eq.p.iter().map(|v| v / c).collect()
            } else {
                vec![0.0; m]
            }
        })
        .collect();
    let surplus: Vec<f64> = samples
        .iter()
        .zip(&scale)
        .map(|(s, &c)| {
            if c > 1e-14 {
                ((s.eps / n as f64) * s.eq.p.iter().sum::<f64>() + s.eq.alpha) / c
            } else {
                0.0
            }
        })
        .collect();
    let zero_tol: Vec<Vec<f64>> = pn
        .iter()
        .map(|r| r.iter().map(|v| 1e-13 + 1e-6 * v.abs()).collect())
        .collect();
    let mut rest = pn.clone();
    let mut reps = Vec::new();
    let mut classes = Vec::new();
    let mut rows: Vec<Vec<Q>> = Vec::new();
    let mut scales = Vec::new();
    let mut slopes = Vec::new();
    for _ in 0..m {
        let col = |r: &Vec<Vec<f64>>, j: usize| -> Vec<f64> { r.iter().map(|s| s[j]).collect() };
        let tol_j = |j: usize| -> Vec<f64> { zero_tol.iter().map(|s| s[j]).collect() };
        let mut fitted: Vec<(usize, f64)> = Vec::new();
        for j in 0..m {
            let v = col(&rest, j);
            let t = tol_j(j);
            if v.iter().zip(&t).all(|(a, b)| a.abs() <= *b) {
                continue;
            }
            if let Some(s) = log_slope(&eps, &v, &t) {
                fitted.push((j, s));
            }
        }
        if fitted.is_empty() {
            break;
        }
        let min_slope = fitted.iter().map(|f| f.1).fold(f64::INFINITY, f64::min);
        for &(j, s) in &fitted {
            if ((s - min_slope) - SLOPE_WINDOW).abs() < AMBIGUITY_MARGIN {
                return Err(SolverError::AmbiguousTier {
                    good: j + 1,
                    detail: format!(
                        "slope {s:.3} vs leading slope {min_slope:.3}; refine the epsilon grid"
                    ),
                });
            }
        }
        let last = t_len - 1;
        let near: Vec<usize> = fitted
            .iter()
            .filter(|f| f.1 - min_slope < SLOPE_WINDOW)
            .map(|f| f.0)
            .collect();
        let rep = *near
            .iter()
            .max_by(|&&a, &&b| {
                rest[last][a]
                    .abs()
                    .partial_cmp(&rest[last][b].abs())
                    .unwrap_or(std::cmp::Ordering::Equal)
                    .then(b.cmp(&a))
            })
            .expect("non-empty class");
        let rep_last = rest[last][rep].abs();
        let class: Vec<usize> = near
            .into_iter()
            .filter(|&j| {
                let r = rest[last][j].abs() / rep_last;
                r >= RATIO_WINDOW.0 && r <= RATIO_WINDOW.1
            })
            .collect();
        let c_k: Vec<f64> = rest.iter().map(|s| s[rep].abs()).collect();
        let mut row = vec![zero(); m];
        for &j in &class {
            let ratios: Vec<f64> = rest.iter().zip(&c_k).map(|(s, c)| s[j] / c).collect();
            row[j] = if j == rep {
                Q::from_integer(1.into())
            } else {
                simplest_within(extrapolate(&eps, &ratios), snap_tol)
            };
        }
        let row_f: Vec<f64> = row.iter().map(to_f64).collect();
        for (t, s) in rest.iter_mut().enumerate() {
            for j in 0..m {
                s[j] -= c_k[t] * row_f[j];
            }
        }
        slopes.push(min_slope);
        reps.push(rep);
        classes.push(class);
        rows.push(row);
        scales.push(c_k);
    }
    let d = rows.len();
    if d == 0 {
        return Ok(TierDecomposition {
            d: 0,
            representatives: reps,
            classes,
            p: rows,
            scales,
            slopes,
            m: 0,
            surplus: Surplus::Finite(0.0),
            eps,
        });
    }
    // surplus currency: first tier whose scale does not dominate the surplus
    let mut m_idx = d - 1;
    let mut surplus_value = Surplus::Finite(0.0);
    let mut found = false;
    for (k, c) in scales.iter().enumerate() {
        let ratio: Vec<f64> = surplus.iter().zip(c).map(|(s, c)| s / c).collect();
        let tol = vec![1e-14; t_len];
        let Some(b) = log_slope(&eps, &ratio, &tol) else {
            continue;
        };
        if b < SLOPE_WINDOW {
            m_idx = k;
            found = true;
            surplus_value = if b < -SLOPE_WINDOW {
                Surplus::Infinite
            } else {
                Surplus::Finite(extrapolate(&eps, &ratio).max(0.0))
            };
            break;
        }
    }
    if !found {
        let c = &scales[d - 1];
        let ratio: Vec<f64> = surplus.iter().zip(c).map(|(s, c)| s / c).collect();
        surplus_value = Surplus::Finite(extrapolate(&eps, &ratio).max(0.0));
    }
    Ok(TierDecomposition {
        d,
        representatives: reps,
        classes,
        p: rows,
        scales,
        slopes,
        m: m_idx,
        surplus: surplus_value,
        eps,
    })
}

#[cfg(test)]
mod tests {
    use super::super::{CurveSample, DividendEquilibrium};
    use super::*;
    use crate::rational::qf;

    fn curve(prices: impl Fn(f64) -> Vec<f64>) -> PriceCurve {
        let samples = (4..=12)
            .map(|t| {
                let eps = 0.5f64.powi(t);
                let p = prices(eps);
                CurveSample {
                    eps,
                    eq: DividendEquilibrium {
                        x: vec![vec![0.0; p.len()]],
                        p,
                        alpha: 0.0,
                        lambda: vec![1.0],
                        residual: 0.0,
                        demand_gap: 0.0,
                        feasibility_gap: 0.0,
                    },
                }
            })
            .collect();
        PriceCurve {
            samples,
            dropped: Vec::new(),
        }
    }

    #[test]
    fn two_rates_give_two_currencies() {
        let d = tier_decompose(&curve(|e| vec![1.0, 4.0 * e, 0.0]), 1e-4).unwrap();
        assert_eq!(d.d, 2);
        assert_eq!(d.classes, vec![vec![0], vec![1]]);
        assert_eq!(d.p[0], vec![qf(1, 1), qf(0, 1), qf(0, 1)]);
        assert_eq!(d.p[1], vec![qf(0, 1), qf(1, 1), qf(0, 1)]);
        assert!((d.slopes[1] - 1.0).abs() < 1e-9);
        // surplus eps * sum p is of the order of the second scale
        assert_eq!(d.m, 1);
        match d.surplus {
            Surplus::Finite(v) => assert!((v - 0.25).abs() < 1e-3, "{v}"),
            Surplus::Infinite => panic!("finite surplus expected"),
        }
    }

    #[test]
    fn shared_rate_goods_form_one_row() {
        let d = tier_decompose(&curve(|e| vec![2.0, 3.0 * e, e, e * e]), 1e-4).unwrap();
        assert_eq!(d.d, 3);
        assert_eq!(d.p[1], vec![qf(0, 1), qf(1, 1), qf(1, 3), qf(0, 1)]);
        assert_eq!(d.p[2], vec![qf(0, 1), qf(0, 1), qf(0, 1), qf(1, 1)]);
    }

    #[test]
    fn constant_curve_is_one_currency() {
        let d = tier_decompose(&curve(|_| vec![1.0, 0.5, 0.0]), 1e-4).unwrap();
        assert_eq!(d.d, 1);
        assert_eq!(d.p[0], vec![qf(1, 1), qf(1, 2), qf(0, 1)]);
    }

    #[test]
    fn slope_on_window_edge_is_ambiguous() {
        let err = tier_decompose(&curve(|e| vec![1.0, e.powf(0.25)]), 1e-4).unwrap_err();
        assert!(matches!(err, SolverError::AmbiguousTier { good: 2, .. }), "{err}");
    }

    #[test]
    fn short_curve_rejected() {
        let mut c = curve(|_| vec![1.0]);
        c.samples.truncate(3);
        assert!(matches!(tier_decompose(&c, 1e-4), Err(SolverError::TooFewSamples(3))));
    }

    #[test]
    fn extrapolate_linear_tail() {
        let eps = [0.25, 0.125, 0.0625];
        let ys: Vec<f64> = eps.iter().map(|e| 0.5 - 2.0 * e).collect();
        assert!((extrapolate(&eps, &ys) - 0.5).abs() < 1e-12);
    }
}
