//! Two-phase dense simplex with Bland's rule.
//!
//! Rows are flipped so that every right-hand side is nonnegative. `<=` rows start with their
//! slack in the basis, every other row gets an artificial. The initial basis columns form an
//! identity, so `B^-1` can be read off the final tableau to produce exact duals and Farkas rays.

use super::scalar::Scalar;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum Sense {
    Le,
    Eq,
    Ge,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum Direction {
    Max,
    Min,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LpError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("iteration limit reached")]
    IterationLimit,
    #[error("solution failed its optimality recheck: {0}")]
    Recheck(String),
}

#[derive(Debug, Clone)]
pub struct LinearProgram<T: Scalar> {
    pub direction: Direction,
    pub c: Vec<T>,
    pub a: Vec<Vec<T>>,
    pub b: Vec<T>,
    pub senses: Vec<Sense>,
    /// `true` marks a variable without lower bound.
    pub free: Vec<bool>,
}

impl<T: Scalar> LinearProgram<T> {
    pub fn new(n_vars: usize, direction: Direction) -> Self {
        LinearProgram {
            direction,
            c: vec![T::zero(); n_vars],
            a: Vec::new(),
            b: Vec::new(),
            senses: Vec::new(),
            free: vec![false; n_vars],
        }
    }

    pub fn n_vars(&self) -> usize {
        self.c.len()
    }

    pub fn n_rows(&self) -> usize {
        self.a.len()
    }

    pub fn add_var(&mut self, cost: T, free: bool) -> usize {
        self.c.push(cost);
        self.free.push(free);
        for row in &mut self.a {
            row.push(T::zero());
        }
        self.c.len() - 1
    }

    pub fn add_row(&mut self, coeffs: Vec<T>, sense: Sense, rhs: T) {
        debug_assert_eq!(coeffs.len(), self.n_vars());
        self.a.push(coeffs);
        self.senses.push(sense);
        self.b.push(rhs);
    }

    pub fn add_sparse(&mut self, entries: &[(usize, T)], sense: Sense, rhs: T) {
        let mut row = vec![T::zero(); self.n_vars()];
        for (j, v) in entries {
            row[*j] = row[*j].add(v);
        }
        self.add_row(row, sense, rhs);
    }

    fn check_dims(&self) -> Result<(), LpError> {
        let n = self.c.len();
        if self.free.len() != n {
            return Err(LpError::Dimension("free flags".into()));
        }
        if self.b.len() != self.a.len() || self.senses.len() != self.a.len() {
            return Err(LpError::Dimension("row count".into()));
        }
        if let Some(i) = self.a.iter().position(|r| r.len() != n) {
            return Err(LpError::Dimension(format!("row {i} has wrong width")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone)]
pub struct LpSolution<T: Scalar> {
    pub status: LpStatus,
    /// Optimal point, or a feasible point when unbounded.
    pub x: Vec<T>,
    /// Optimal duals, or a Farkas ray when infeasible.
    pub y: Vec<T>,
    pub objective: T,
    /// Improving ray when unbounded.
    pub ray: Vec<T>,
}

impl<T: Scalar> LpSolution<T> {
    pub fn is_optimal(&self) -> bool {
        self.status == LpStatus::Optimal
    }
}

struct Tableau<T: Scalar> {
    rows: Vec<Vec<T>>,
    rhs: Vec<T>,
    basis: Vec<usize>,
    /// reduced costs `z_j - c_j`, and current objective value
    obj: Vec<T>,
    obj_val: T,
}

impl<T: Scalar> Tableau<T> {
    fn pivot(&mut self, r: usize, e: usize) {
        let piv = self.rows[r][e].clone();
        let inv = T::one().div(&piv);
        for v in self.rows[r].iter_mut() {
            if !v.is_zero() {
                *v = v.mul(&inv);
            }
        }
        self.rhs[r] = self.rhs[r].mul(&inv);
        self.rows[r][e] = T::one();
        let nz: Vec<usize> = (0..self.rows[r].len())
            .filter(|&j| !self.rows[r][j].is_zero())
            .collect();
        let prow: Vec<T> = nz.iter().map(|&j| self.rows[r][j].clone()).collect();
        let prhs = self.rhs[r].clone();
        for i in 0..self.rows.len() {
            if i == r {
                continue;
            }
            let f = self.rows[i][e].clone();
            if f.is_zero() {
                continue;
            }
            for (k, &j) in nz.iter().enumerate() {
                self.rows[i][j] = self.rows[i][j].sub(&f.mul(&prow[k]));
            }
            self.rows[i][e] = T::zero();
            self.rhs[i] = self.rhs[i].sub(&f.mul(&prhs));
        }
        let f = self.obj[e].clone();
        if !f.is_zero() {
            for (k, &j) in nz.iter().enumerate() {
                self.obj[j] = self.obj[j].sub(&f.mul(&prow[k]));
            }
            self.obj[e] = T::zero();
            self.obj_val = self.obj_val.sub(&f.mul(&prhs));
        }
        self.basis[r] = e;
    }

    fn set_objective(&mut self, cost: &[T]) {
        let w = self.obj.len();
        let mut obj: Vec<T> = cost.iter().map(|c| c.neg()).collect();
        let mut val = T::zero();
        for (r, &bv) in self.basis.iter().enumerate() {
            let cb = &cost[bv];
            if cb.is_zero() {
                continue;
            }
            for (j, o) in obj.iter_mut().enumerate().take(w) {
                let t = &self.rows[r][j];
                if !t.is_zero() {
                    *o = o.add(&cb.mul(t));
                }
            }
            val = val.add(&cb.mul(&self.rhs[r]));
        }
        self.obj = obj;
        self.obj_val = val;
    }

    /// Bland's rule iterations of a maximization. Returns the entering column of an
    /// unbounded direction, or `None` at optimality.
    fn run(&mut self, allowed: usize, max_iter: usize) -> Result<Option<usize>, LpError> {
        for _ in 0..max_iter {
            let Some(e) = (0..allowed).find(|&j| self.obj[j].is_neg()) else {
                return Ok(None);
            };
            let mut best: Option<(usize, T)> = None;
            for r in 0..self.rows.len() {
                let a = &self.rows[r][e];
                if !a.is_pos() {
                    continue;
                }
                let ratio = self.rhs[r].div(a);
                best = match best {
                    None => Some((r, ratio)),
                    Some((br, bratio)) => {
                        let better = if ratio.approx_eq(&bratio) {
                            self.basis[r] < self.basis[br]
                        } else {
                            ratio < bratio
                        };
                        if better {
                            Some((r, ratio))
                        } else {
                            Some((br, bratio))
                        }
                    }
                };
            }
            match best {
                None => return Ok(Some(e)),
                Some((r, _)) => self.pivot(r, e),
            }
        }
        Err(LpError::IterationLimit)
    }
}

/// Solves `lp`. With exact arithmetic, optimal solutions are rechecked for primal/dual
/// feasibility and zero gap.
pub fn solve_lp<T: Scalar>(lp: &LinearProgram<T>) -> Result<LpSolution<T>, LpError> {
    let sol = solve_unchecked(lp)?;
    if T::EXACT && sol.status == LpStatus::Optimal {
        if let Err(msg) = recheck_optimal(lp, &sol) {
            return Err(LpError::Recheck(msg));
        }
    }
    Ok(sol)
}

pub fn solve_unchecked<T: Scalar>(lp: &LinearProgram<T>) -> Result<LpSolution<T>, LpError> {
    lp.check_dims()?;
    let n = lp.n_vars();
    let m = lp.n_rows();
    let sign = match lp.direction {
        Direction::Max => T::one(),
        Direction::Min => T::one().neg(),
    };

    // standard-form columns: x+ for each var, x- for free vars, then slacks, then artificials
    let mut col_of_var: Vec<(usize, Option<usize>)> = Vec::with_capacity(n);
    let mut ncol = 0usize;
    for j in 0..n {
        let pos = ncol;
        ncol += 1;
        let neg = if lp.free[j] {
            ncol += 1;
            Some(ncol - 1)
        } else {
            None
        };
        col_of_var.push((pos, neg));
    }

    // row flips and effective senses
    let mut flip = vec![false; m];
    let mut eff = lp.senses.clone();
    for i in 0..m {
        let must = lp.b[i].is_neg();
        let prefer = lp.b[i].is_zero() && lp.senses[i] == Sense::Ge;
        if must || prefer {
            flip[i] = true;
            eff[i] = match lp.senses[i] {
                Sense::Le => Sense::Ge,
                Sense::Ge => Sense::Le,
                Sense::Eq => Sense::Eq,
            };
        }
    }
    let mut slack_col = vec![None; m];
    for i in 0..m {
        if eff[i] != Sense::Eq {
            slack_col[i] = Some(ncol);
            ncol += 1;
        }
    }
    let n_real = ncol;
    let mut init_col = vec![0usize; m];
    let mut is_art = Vec::new();
    for i in 0..m {
        if eff[i] == Sense::Le {
            init_col[i] = slack_col[i].unwrap();
        } else {
            init_col[i] = ncol;
            is_art.push(ncol);
            ncol += 1;
        }
    }
    let width = ncol;

    let mut rows = vec![vec![T::zero(); width]; m];
    let mut rhs = vec![T::zero(); m];
    for i in 0..m {
        let f = if flip[i] { T::one().neg() } else { T::one() };
        for j in 0..n {
            let v = &lp.a[i][j];
            if v.is_zero() {
                continue;
            }
            let fv = f.mul(v);
            let (p, q) = col_of_var[j];
            rows[i][p] = fv.clone();
            if let Some(q) = q {
                rows[i][q] = fv.neg();
            }
        }
        if let Some(s) = slack_col[i] {
            rows[i][s] = match eff[i] {
                Sense::Le => T::one(),
                _ => T::one().neg(),
            };
        }
        if init_col[i] >= n_real {
            rows[i][init_col[i]] = T::one();
        }
        rhs[i] = f.mul(&lp.b[i]);
    }
    let mut tab = Tableau {
        rows,
        rhs,
        basis: init_col.clone(),
        obj: vec![T::zero(); width],
        obj_val: T::zero(),
    };
    let max_iter = 50_000 + 100 * (width + m);

    // phase 1
    if !is_art.is_empty() {
        let mut cost1 = vec![T::zero(); width];
        for &a in &is_art {
            cost1[a] = T::one().neg();
        }
        tab.set_objective(&cost1);
        tab.run(n_real, max_iter)?;
        if tab.obj_val.is_neg() {
            let w = duals_from(&tab, &cost1, &init_col);
            let y: Vec<T> = (0..m)
                .map(|i| if flip[i] { w[i].neg() } else { w[i].clone() })
                .collect();
            return Ok(LpSolution {
                status: LpStatus::Infeasible,
                x: Vec::new(),
                y,
                objective: T::zero(),
                ray: Vec::new(),
            });
        }
        // drive zero-valued artificials out of the basis
        for r in 0..m {
            if tab.basis[r] >= n_real {
                if let Some(j) = (0..n_real).find(|&j| !tab.rows[r][j].is_zero()) {
                    tab.pivot(r, j);
                }
            }
        }
    }

    // phase 2
    let mut cost2 = vec![T::zero(); width];
    for j in 0..n {
        let cj = sign.mul(&lp.c[j]);
        let (p, q) = col_of_var[j];
        cost2[p] = cj.clone();
        if let Some(q) = q {
            cost2[q] = cj.neg();
        }
    }
    tab.set_objective(&cost2);
    let unbounded = tab.run(n_real, max_iter)?;

    let mut xs = vec![T::zero(); width];
    for (r, &bv) in tab.basis.iter().enumerate() {
        xs[bv] = tab.rhs[r].clone();
    }
    let x: Vec<T> = col_of_var
        .iter()
        .map(|&(p, q)| match q {
            Some(q) => xs[p].sub(&xs[q]),
            None => xs[p].clone(),
        })
        .collect();

    if let Some(e) = unbounded {
        let mut d = vec![T::zero(); width];
        d[e] = T::one();
        for (r, &bv) in tab.basis.iter().enumerate() {
            d[bv] = tab.rows[r][e].neg();
        }
        let ray: Vec<T> = col_of_var
            .iter()
            .map(|&(p, q)| match q {
                Some(q) => d[p].sub(&d[q]),
                None => d[p].clone(),
            })
            .collect();
        return Ok(LpSolution {
            status: LpStatus::Unbounded,
            objective: dotv(&lp.c, &x),
            x,
            y: Vec::new(),
            ray,
        });
    }

    let w = duals_from(&tab, &cost2, &init_col);
    let y: Vec<T> = (0..m)
        .map(|i| {
            let v = if flip[i] { w[i].neg() } else { w[i].clone() };
            sign.mul(&v)
        })
        .collect();
    Ok(LpSolution {
        status: LpStatus::Optimal,
        objective: dotv(&lp.c, &x),
        x,
        y,
        ray: Vec::new(),
    })
}

/// `w_i = sum_r c_B[r] * (B^-1)[r][i]`, with `B^-1` read from the initial basis columns.
fn duals_from<T: Scalar>(tab: &Tableau<T>, cost: &[T], init_col: &[usize]) -> Vec<T> {
    init_col
        .iter()
        .map(|&col| {
            let mut s = T::zero();
            for (r, &bv) in tab.basis.iter().enumerate() {
                let cb = &cost[bv];
                let t = &tab.rows[r][col];
                if !cb.is_zero() && !t.is_zero() {
                    s = s.add(&cb.mul(t));
                }
            }
            s
        })
        .collect()
}

fn dotv<T: Scalar>(a: &[T], b: &[T]) -> T {
    let mut s = T::zero();
    for (x, y) in a.iter().zip(b) {
        if !x.is_zero() && !y.is_zero() {
            s = s.add(&x.mul(y));
        }
    }
    s
}

fn row_activity<T: Scalar>(lp: &LinearProgram<T>, i: usize, x: &[T]) -> T {
    dotv(&lp.a[i], x)
}

fn col_activity<T: Scalar>(lp: &LinearProgram<T>, j: usize, y: &[T]) -> T {
    let mut s = T::zero();
    for (i, yi) in y.iter().enumerate() {
        let a = &lp.a[i][j];
        if !a.is_zero() && !yi.is_zero() {
            s = s.add(&a.mul(yi));
        }
    }
    s
}

/// Checks primal feasibility of `x`.
pub fn check_primal<T: Scalar>(lp: &LinearProgram<T>, x: &[T]) -> Result<(), String> {
    if x.len() != lp.n_vars() {
        return Err("primal length".into());
    }
    for (j, v) in x.iter().enumerate() {
        if !lp.free[j] && v.is_neg() {
            return Err(format!("variable {j} negative"));
        }
    }
    for i in 0..lp.n_rows() {
        let act = row_activity(lp, i, x);
        let d = act.sub(&lp.b[i]);
        let ok = match lp.senses[i] {
            Sense::Le => !d.is_pos(),
            Sense::Ge => !d.is_neg(),
            Sense::Eq => d.is_zero(),
        };
        if !ok {
            return Err(format!("row {i} violated"));
        }
    }
    Ok(())
}

/// Independent recheck: primal feasible, dual feasible, equal objectives.
pub fn recheck_optimal<T: Scalar>(lp: &LinearProgram<T>, sol: &LpSolution<T>) -> Result<(), String> {
    check_primal(lp, &sol.x)?;
    let y = &sol.y;
    if y.len() != lp.n_rows() {
        return Err("dual length".into());
    }
    // express as a max problem: max s*c x, duals s*y
    let s = match lp.direction {
        Direction::Max => T::one(),
        Direction::Min => T::one().neg(),
    };
    let ys: Vec<T> = y.iter().map(|v| s.mul(v)).collect();
    for (i, v) in ys.iter().enumerate() {
        let ok = match lp.senses[i] {
            Sense::Le => !v.is_neg(),
            Sense::Ge => !v.is_pos(),
            Sense::Eq => true,
        };
        if !ok {
            return Err(format!("dual sign on row {i}"));
        }
    }
    for j in 0..lp.n_vars() {
        let red = col_activity(lp, j, &ys).sub(&s.mul(&lp.c[j]));
        let ok = if lp.free[j] { red.is_zero() } else { !red.is_neg() };
        if !ok {
            return Err(format!("dual constraint {j}"));
        }
    }
    let primal = s.mul(&dotv(&lp.c, &sol.x));
    let dual = dotv(&ys, &lp.b);
    if !primal.approx_eq(&dual) {
        return Err(format!("duality gap {:?} vs {:?}", primal, dual));
    }
    Ok(())
}

/// Checks a Farkas certificate of infeasibility.
pub fn check_farkas<T: Scalar>(lp: &LinearProgram<T>, y: &[T]) -> bool {
    if y.len() != lp.n_rows() {
        return false;
    }
    for (i, v) in y.iter().enumerate() {
        let ok = match lp.senses[i] {
            Sense::Le => !v.is_neg(),
            Sense::Ge => !v.is_pos(),
            Sense::Eq => true,
        };
        if !ok {
            return false;
        }
    }
    for j in 0..lp.n_vars() {
        let a = col_activity(lp, j, y);
        let ok = if lp.free[j] { a.is_zero() } else { !a.is_neg() };
        if !ok {
            return false;
        }
    }
    dotv(y, &lp.b).is_neg()
}

/// Checks an unbounded ray: `A d` respects row senses with zero rhs and `c d` improves.
pub fn check_ray<T: Scalar>(lp: &LinearProgram<T>, d: &[T]) -> bool {
    if d.len() != lp.n_vars() {
        return false;
    }
    for (j, v) in d.iter().enumerate() {
        if !lp.free[j] && v.is_neg() {
            return false;
        }
    }
    for i in 0..lp.n_rows() {
        let act = row_activity(lp, i, d);
        let ok = match lp.senses[i] {
            Sense::Le => !act.is_pos(),
            Sense::Ge => !act.is_neg(),
            Sense::Eq => act.is_zero(),
        };
        if !ok {
            return false;
        }
    }
    let gain = dotv(&lp.c, d);
    match lp.direction {
        Direction::Max => gain.is_pos(),
        Direction::Min => gain.is_neg(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::{q, qf, Q};

    #[test]
    fn max_x_le_one() {
        let mut lp = LinearProgram::<Q>::new(1, Direction::Max);
        lp.c[0] = q(1);
        lp.add_row(vec![q(1)], Sense::Le, q(1));
        let s = solve_lp(&lp).unwrap();
        assert!(s.is_optimal());
        assert_eq!(s.x, vec![q(1)]);
        assert_eq!(s.y, vec![q(1)]);
    }

    #[test]
    fn infeasible_has_farkas() {
        let mut lp = LinearProgram::<Q>::new(1, Direction::Max);
        lp.c[0] = q(1);
        lp.add_row(vec![q(1)], Sense::Le, q(-1));
        let s = solve_lp(&lp).unwrap();
        assert_eq!(s.status, LpStatus::Infeasible);
        assert!(check_farkas(&lp, &s.y));
    }

    #[test]
    fn unbounded_has_ray() {
        let mut lp = LinearProgram::<Q>::new(2, Direction::Max);
        lp.c = vec![q(1), q(1)];
        lp.add_row(vec![q(1), q(-1)], Sense::Le, q(1));
        let s = solve_lp(&lp).unwrap();
        assert_eq!(s.status, LpStatus::Unbounded);
        assert!(check_ray(&lp, &s.ray));
        assert!(check_primal(&lp, &s.x).is_ok());
    }

    #[test]
    fn min_with_free_and_equalities() {
        // min x0 + 2 x1, x0 free, x0 + x1 = 3, x0 >= -1 (as row), x1 >= 0
        let mut lp = LinearProgram::<Q>::new(2, Direction::Min);
        lp.c = vec![q(2), q(1)];
        lp.free[0] = true;
        lp.add_row(vec![q(1), q(1)], Sense::Eq, q(3));
        lp.add_row(vec![q(1), q(0)], Sense::Ge, qf(-1, 2));
        let s = solve_lp(&lp).unwrap();
        assert!(s.is_optimal());
        assert_eq!(s.x, vec![qf(-1, 2), qf(7, 2)]);
        assert_eq!(s.objective, qf(5, 2));
    }

    #[test]
    fn degenerate_redundant_rows() {
        let mut lp = LinearProgram::<Q>::new(2, Direction::Max);
        lp.c = vec![q(1), q(1)];
        lp.add_row(vec![q(1), q(1)], Sense::Eq, q(1));
        lp.add_row(vec![q(2), q(2)], Sense::Eq, q(2));
        lp.add_row(vec![q(1), q(0)], Sense::Ge, q(0));
        let s = solve_lp(&lp).unwrap();
        assert!(s.is_optimal());
        assert_eq!(s.objective, q(1));
    }

    #[test]
    fn float_instance() {
        let mut lp = LinearProgram::<f64>::new(2, Direction::Max);
        lp.c = vec![3.0, 2.0];
        lp.add_row(vec![1.0, 1.0], Sense::Le, 4.0);
        lp.add_row(vec![1.0, 3.0], Sense::Le, 6.0);
        lp.add_row(vec![1.0, 0.0], Sense::Le, 3.0);
        let s = solve_lp(&lp).unwrap();
        assert!((s.objective - 11.0).abs() < 1e-9);
    }
}
