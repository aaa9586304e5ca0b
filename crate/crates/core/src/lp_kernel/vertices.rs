//! Exact vertex enumeration for small polytopes `{y : A y <= b}`.
//!
//! Every subset of `d` constraints is solved by Gaussian elimination; feasible unique
//! solutions are kept. Desk-scale only: dimension and subset counts are capped.

use crate::economy::Economy;
use crate::rational::{dot, one, zero, Q};
use num::{Signed, Zero};
use thiserror::Error;

pub const MAX_DIM: usize = 12;
pub const MAX_SUBSETS: u128 = 2_000_000;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum VertexError {
    #[error("instance too large for vertex enumeration: {0}")]
    TooLarge(String),
}

fn binom(n: usize, k: usize) -> u128 {
    let k = k.min(n - k.min(n));
    let mut r: u128 = 1;
    for i in 0..k {
        r = r * (n - i) as u128 / (i + 1) as u128;
    }
    r
}

/// Solves the square system `M z = r`; `None` if singular.
pub fn solve_square(mut m: Vec<Vec<Q>>, mut r: Vec<Q>) -> Option<Vec<Q>> {
    let d = r.len();
    for col in 0..d {
        let piv = (col..d).find(|&i| !m[i][col].is_zero())?;
        m.swap(col, piv);
        r.swap(col, piv);
        let inv = one() / &m[col][col];
        for v in m[col].iter_mut() {
            *v = &*v * &inv;
        }
        r[col] = &r[col] * &inv;
        for i in 0..d {
            if i == col || m[i][col].is_zero() {
                continue;
            }
            let f = m[i][col].clone();
            for k in col..d {
                let t = &f * &m[col][k];
                m[i][k] -= t;
            }
            let t = &f * &r[col];
            r[i] -= t;
        }
    }
    Some(r)
}

/// Vertices of `{y in Q^d : a_k . y <= b_k}`, sorted and deduplicated.
pub fn enumerate_vertices(dim: usize, a: &[Vec<Q>], b: &[Q]) -> Result<Vec<Vec<Q>>, VertexError> {
    if dim > MAX_DIM {
        return Err(VertexError::TooLarge(format!("dimension {dim} > {MAX_DIM}")));
    }
    if dim == 0 {
        return Ok(if b.iter().all(|v| !v.is_negative()) {
            vec![vec![]]
        } else {
            vec![]
        });
    }
    let mc = a.len();
    if mc < dim {
        return Ok(vec![]);
    }
    if binom(mc, dim) > MAX_SUBSETS {
        return Err(VertexError::TooLarge(format!(
            "{mc} constraints in dimension {dim}"
        )));
    }
    let mut out: Vec<Vec<Q>> = Vec::new();
    let mut idx: Vec<usize> = (0..dim).collect();
    loop {
        let mat: Vec<Vec<Q>> = idx.iter().map(|&k| a[k].clone()).collect();
        let rhs: Vec<Q> = idx.iter().map(|&k| b[k].clone()).collect();
        if let Some(z) = solve_square(mat, rhs) {
            if a.iter().zip(b).all(|(row, bk)| dot(row, &z) <= *bk) {
                out.push(z);
            }
        }
        // next combination
        let mut p = dim;
        loop {
            if p == 0 {
                out.sort();
                out.dedup();
                return Ok(out);
            }
            p -= 1;
            if idx[p] < mc - dim + p {
                idx[p] += 1;
                for k in p + 1..dim {
                    idx[k] = idx[k - 1] + 1;
                }
                break;
            }
        }
    }
}

/// Vertices of `{y in Delta_- : u.y >= t, y_j = 0 for j not in S}` plus extra `<=` rows,
/// expressed in full coordinates.
pub fn restricted_vertices(
    u: &[Q],
    t: Option<&Q>,
    support: &[usize],
    extra_le: &[(Vec<Q>, Q)],
) -> Result<Vec<Vec<Q>>, VertexError> {
    let m = u.len();
    let d = support.len();
    let mut a = Vec::new();
    let mut b = Vec::new();
    for k in 0..d {
        let mut row = vec![zero(); d];
        row[k] = -one();
        a.push(row);
        b.push(zero());
    }
    a.push(vec![one(); d]);
    b.push(one());
    if let Some(t) = t {
        a.push(support.iter().map(|&j| -u[j].clone()).collect());
        b.push(-t.clone());
    }
    for (row, rhs) in extra_le {
        a.push(support.iter().map(|&j| row[j].clone()).collect());
        b.push(rhs.clone());
    }
    let vs = enumerate_vertices(d, &a, &b)?;
    let mut full: Vec<Vec<Q>> = vs
        .into_iter()
        .map(|z| {
            let mut y = vec![zero(); m];
            for (k, &j) in support.iter().enumerate() {
                y[j] = z[k].clone();
            }
            y
        })
        .collect();
    full.sort();
    full.dedup();
    Ok(full)
}

/// Vertices of `{y in Delta_- : u_i.y >= t, y_j = 0 for j not in S}`.
pub fn preferred_vertices(
    e: &Economy,
    i: usize,
    t: &Q,
    support: &[usize],
) -> Result<Vec<Vec<Q>>, VertexError> {
    restricted_vertices(&e.utilities[i], Some(t), support, &[])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::{q, qf};

    fn unit(m: usize, j: usize) -> Vec<Q> {
        let mut v = vec![q(0); m];
        v[j] = q(1);
        v
    }

    #[test]
    fn threshold_zero_gives_simplex_corners() {
        let u = vec![q(2), q(1), q(0)];
        let v = restricted_vertices(&u, Some(&q(0)), &[0, 1, 2], &[]).unwrap();
        let mut expect = vec![vec![q(0); 3], unit(3, 0), unit(3, 1), unit(3, 2)];
        expect.sort();
        assert_eq!(v, expect);
    }

    #[test]
    fn threshold_max_gives_favorites() {
        let u = vec![q(2), q(2), q(0)];
        let v = restricted_vertices(&u, Some(&q(2)), &[0, 1, 2], &[]).unwrap();
        assert_eq!(v, vec![unit(3, 1), unit(3, 0)]);
    }

    #[test]
    fn table3_agent1() {
        let u = vec![q(2), q(1), q(0)];
        let v = restricted_vertices(&u, Some(&qf(3, 2)), &[0, 1, 2], &[]).unwrap();
        let mut expect = vec![
            unit(3, 0),
            vec![qf(3, 4), q(0), qf(1, 4)],
            vec![qf(1, 2), qf(1, 2), q(0)],
            vec![qf(3, 4), q(0), q(0)],
        ];
        expect.sort();
        assert_eq!(v, expect);
    }
}
