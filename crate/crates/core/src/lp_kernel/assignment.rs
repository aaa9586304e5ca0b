//! Weighted assignment programs over the allocation set, VCG prices and budget-constrained
//! utility maximization.

use super::scalar::Scalar;
use super::simplex::{solve_lp, Direction, LinearProgram, LpError, LpStatus, Sense};
use crate::economy::{Allocation, Economy};
use crate::rational::Q;

#[derive(Debug, Clone)]
pub struct WelfareSolution<T: Scalar> {
    pub x: Vec<Vec<T>>,
    pub value: T,
    /// row duals
    pub alpha: Vec<T>,
    /// column duals (nonnegative)
    pub beta: Vec<T>,
}

/// `max sum_ij w_ij x_ij` over rows summing to 1 and columns bounded by `caps`.
pub fn max_welfare<T: Scalar>(w: &[Vec<T>], caps: &[T]) -> Result<WelfareSolution<T>, LpError> {
    let n = w.len();
    let m = caps.len();
    let mut lp = LinearProgram::<T>::new(n * m, Direction::Max);
    for i in 0..n {
        for j in 0..m {
            lp.c[i * m + j] = w[i][j].clone();
        }
    }
    for i in 0..n {
        let e: Vec<(usize, T)> = (0..m).map(|j| (i * m + j, T::one())).collect();
        lp.add_sparse(&e, Sense::Eq, T::one());
    }
    for (j, cap) in caps.iter().enumerate() {
        let e: Vec<(usize, T)> = (0..n).map(|i| (i * m + j, T::one())).collect();
        lp.add_sparse(&e, Sense::Le, cap.clone());
    }
    let sol = solve_lp(&lp)?;
    if sol.status != LpStatus::Optimal {
        return Err(LpError::Dimension(
            "assignment program has no optimum (capacities too small)".into(),
        ));
    }
    let x = (0..n)
        .map(|i| sol.x[i * m..(i + 1) * m].to_vec())
        .collect();
    Ok(WelfareSolution {
        x,
        value: sol.objective,
        alpha: sol.y[..n].to_vec(),
        beta: sol.y[n..].to_vec(),
    })
}

/// `w_ij = lambda_i u_ij`.
pub fn weighted_utilities<T: Scalar>(e: &Economy, lambda: &[T]) -> Vec<Vec<T>> {
    e.utilities
        .iter()
        .zip(lambda)
        .map(|(row, l)| row.iter().map(|u| l.mul(&T::from_q(u))).collect())
        .collect()
}

/// Welfare-maximizing allocation with dual pair `(alpha, beta)`, complementary slackness checked.
pub fn max_welfare_assignment(
    e: &Economy,
    lambda: &[Q],
) -> Result<(Allocation, (Vec<Q>, Vec<Q>)), LpError> {
    let w = weighted_utilities::<Q>(e, lambda);
    let sol = max_welfare(&w, &e.supply)?;
    for i in 0..e.n_agents() {
        for j in 0..e.n_goods() {
            let slack = &sol.alpha[i] + &sol.beta[j] - &w[i][j];
            if num::Signed::is_negative(&slack)
                || (num::Signed::is_positive(&slack) && num::Signed::is_positive(&sol.x[i][j]))
            {
                return Err(LpError::Recheck(format!(
                    "complementary slackness fails at ({i},{j})"
                )));
            }
        }
    }
    Ok((Allocation::new(sol.x), (sol.alpha, sol.beta)))
}

/// `p_l = W(capacity s_l + 1 on good l) - W(base)`.
pub fn vcg_prices_generic<T: Scalar>(w: &[Vec<T>], supply: &[T]) -> Result<Vec<T>, LpError> {
    let base = max_welfare(w, supply)?.value;
    (0..supply.len())
        .map(|l| {
            let mut caps = supply.to_vec();
            caps[l] = caps[l].add(&T::one());
            let v = max_welfare(w, &caps)?.value;
            let p = v.sub(&base);
            Ok(if p.is_neg() { T::zero() } else { p })
        })
        .collect()
}

pub fn vcg_prices(e: &Economy, lambda: &[Q]) -> Result<Vec<Q>, LpError> {
    let w = weighted_utilities::<Q>(e, lambda);
    vcg_prices_generic(&w, &e.supply)
}

/// `max u.y` over `y >= 0, sum y <= 1, a_k.y <= b_k`, plus optional equality rows.
/// Returns `None` when the polytope is empty.
pub fn max_linear_over<T: Scalar>(
    u: &[T],
    le_rows: &[(Vec<T>, T)],
    eq_rows: &[(Vec<T>, T)],
) -> Result<Option<(T, Vec<T>)>, LpError> {
    let m = u.len();
    let mut lp = LinearProgram::<T>::new(m, Direction::Max);
    lp.c = u.to_vec();
    lp.add_row(vec![T::one(); m], Sense::Le, T::one());
    for (a, b) in le_rows {
        lp.add_row(a.clone(), Sense::Le, b.clone());
    }
    for (a, b) in eq_rows {
        lp.add_row(a.clone(), Sense::Eq, b.clone());
    }
    let sol = solve_lp(&lp)?;
    match sol.status {
        LpStatus::Optimal => Ok(Some((sol.objective, sol.x))),
        _ => Ok(None),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::{q, qf};

    fn econ(u: Vec<Vec<i64>>) -> Economy {
        let n = u.len();
        let uq = u.into_iter().map(|r| r.into_iter().map(q).collect()).collect();
        let w = (0..n)
            .map(|i| (0..n).map(|j| if i == j { q(1) } else { q(0) }).collect())
            .collect();
        Economy::new(uq, w)
    }

    #[test]
    fn identity_assignment() {
        let e = econ(vec![vec![2, 0], vec![0, 2]]);
        let (x, (a, b)) = max_welfare_assignment(&e, &[q(1), q(1)]).unwrap();
        assert_eq!(x.rows, vec![vec![q(1), q(0)], vec![q(0), q(1)]]);
        let total: Q = a.iter().sum::<Q>() + b.iter().sum::<Q>();
        assert_eq!(total, q(4));
    }

    #[test]
    fn vcg_examples() {
        let e = econ(vec![vec![2, 0], vec![0, 2]]);
        assert_eq!(vcg_prices(&e, &[q(1), q(1)]).unwrap(), vec![q(0), q(0)]);
        let e = econ(vec![vec![2, 1], vec![2, 1]]);
        assert_eq!(vcg_prices(&e, &[q(1), q(1)]).unwrap(), vec![q(1), q(0)]);
    }

    #[test]
    fn budget_max() {
        let u = vec![q(2), q(1), q(0)];
        let rows = vec![(vec![q(1), q(0), q(0)], qf(1, 2))];
        let (v, y) = max_linear_over(&u, &rows, &[]).unwrap().unwrap();
        assert_eq!(v, qf(3, 2));
        assert_eq!(y, vec![qf(1, 2), qf(1, 2), q(0)]);
    }
}
