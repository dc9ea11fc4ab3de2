//! Two-phase revised simplex for small equality-constrained linear programs
//!
//! ```text
//! minimize / maximize  c^T x   subject to  A x = b,  x >= 0
//! ```
//!
//! Rows are equilibrated by their largest absolute entry before solving. Phase
//! one minimizes the sum of artificial variables; the program is declared
//! infeasible when that optimum exceeds [`FEASIBILITY_TOL`]. Pricing falls back
//! to Bland's rule after a run of degenerate pivots, and a pivot budget turns
//! anything left over into [`LpStatus::NumericalFailure`].
//!
//! Phase one depends only on `(A, b)`, so [`EqualityPolytope::phase_one`]
//! returns a [`FeasibleBasis`] that can be re-optimized for many objectives.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Phase-one optimum above which the program is infeasible.
pub const FEASIBILITY_TOL: f64 = 1e-8;
/// Largest constraint residual accepted at a reported optimum.
pub const RESIDUAL_TOL: f64 = 1e-7;
/// Most negative component accepted at a reported optimum.
pub const NONNEG_TOL: f64 = 1e-9;

const PIVOT_TOL: f64 = 1e-9;
const COST_TOL: f64 = 1e-10;
const BLAND_AFTER: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sense {
    Minimize,
    Maximize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearProgram {
    pub objective: Vec<f64>,
    pub sense: Sense,
    pub eq_matrix: Vec<Vec<f64>>,
    pub eq_rhs: Vec<f64>,
}

impl LinearProgram {
    pub fn new(
        objective: Vec<f64>,
        sense: Sense,
        eq_matrix: Vec<Vec<f64>>,
        eq_rhs: Vec<f64>,
    ) -> Result<Self> {
        let lp = Self {
            objective,
            sense,
            eq_matrix,
            eq_rhs,
        };
        lp.validate()?;
        Ok(lp)
    }

    pub fn n_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn n_cons(&self) -> usize {
        self.eq_rhs.len()
    }

    fn validate(&self) -> Result<()> {
        if self.objective.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidProgram("non-finite objective coefficient".into()));
        }
        validate_system(&self.eq_matrix, &self.eq_rhs, self.n_vars())
    }
}

fn validate_system(matrix: &[Vec<f64>], rhs: &[f64], n_vars: usize) -> Result<()> {
    if n_vars == 0 {
        return Err(Error::InvalidProgram("no variables".into()));
    }
    if matrix.len() != rhs.len() {
        return Err(Error::InvalidProgram(format!(
            "{} constraint rows but {} right-hand sides",
            matrix.len(),
            rhs.len()
        )));
    }
    if matrix.len() > n_vars {
        return Err(Error::InvalidProgram(format!(
            "{} constraints exceed {} variables",
            matrix.len(),
            n_vars
        )));
    }
    for (i, row) in matrix.iter().enumerate() {
        if row.len() != n_vars {
            return Err(Error::InvalidProgram(format!(
                "row {i} has {} entries, expected {n_vars}",
                row.len()
            )));
        }
        if row.iter().any(|a| !a.is_finite()) || !rhs[i].is_finite() {
            return Err(Error::InvalidProgram(format!("row {i} has a non-finite entry")));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    NumericalFailure,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpOutcome {
    pub status: LpStatus,
    pub value: Option<f64>,
    pub solution: Option<Vec<f64>>,
    /// Max residual of the equilibrated constraints at `solution`.
    pub certificate_norm: f64,
    /// Phase-one optimum (sum of artificials) on the equilibrated system.
    pub phase_one_residual: f64,
    pub pivots: usize,
}

impl LpOutcome {
    fn without_point(status: LpStatus, phase_one_residual: f64, pivots: usize) -> Self {
        Self {
            status,
            value: None,
            solution: None,
            certificate_norm: f64::NAN,
            phase_one_residual,
            pivots,
        }
    }
}

/// Solves one program from scratch.
pub fn solve(lp: &LinearProgram) -> Result<LpOutcome> {
    lp.validate()?;
    let polytope = EqualityPolytope::new(lp.n_vars(), &lp.eq_matrix, &lp.eq_rhs)?;
    Ok(match polytope.phase_one() {
        PhaseOne::Feasible(basis) => basis.optimize(&lp.objective, lp.sense),
        PhaseOne::Infeasible { residual, pivots } => {
            LpOutcome::without_point(LpStatus::Infeasible, residual, pivots)
        }
        PhaseOne::NumericalFailure { pivots } => {
            LpOutcome::without_point(LpStatus::NumericalFailure, f64::NAN, pivots)
        }
    })
}

/// `{x >= 0 : A x = b}` with equilibrated rows.
#[derive(Debug, Clone)]
pub struct EqualityPolytope {
    rows: Vec<Vec<f64>>,
    rhs: Vec<f64>,
    n_vars: usize,
}

#[derive(Debug, Clone)]
pub enum PhaseOne {
    Feasible(FeasibleBasis),
    Infeasible { residual: f64, pivots: usize },
    NumericalFailure { pivots: usize },
}

impl EqualityPolytope {
    pub fn new(n_vars: usize, matrix: &[Vec<f64>], rhs: &[f64]) -> Result<Self> {
        validate_system(matrix, rhs, n_vars)?;
        let mut rows = Vec::with_capacity(matrix.len());
        let mut scaled_rhs = Vec::with_capacity(matrix.len());
        for (row, &b) in matrix.iter().zip(rhs) {
            let scale = row.iter().fold(0.0f64, |m, a| m.max(a.abs()));
            if scale > 0.0 {
                rows.push(row.iter().map(|a| a / scale).collect());
                scaled_rhs.push(b / scale);
            } else {
                rows.push(row.clone());
                scaled_rhs.push(b);
            }
        }
        Ok(Self {
            rows,
            rhs: scaled_rhs,
            n_vars,
        })
    }

    pub fn n_vars(&self) -> usize {
        self.n_vars
    }

    pub fn phase_one(&self) -> PhaseOne {
        let n = self.n_vars;
        // Zero rows are either trivially satisfied or contradictory.
        let mut active = Vec::new();
        for (i, row) in self.rows.iter().enumerate() {
            if row.iter().all(|a| *a == 0.0) {
                if self.rhs[i].abs() > FEASIBILITY_TOL {
                    return PhaseOne::Infeasible {
                        residual: self.rhs[i].abs(),
                        pivots: 0,
                    };
                }
            } else {
                active.push(i);
            }
        }
        // Flip rows so that b >= 0 and the artificial basis is feasible.
        let mut a = Vec::with_capacity(active.len());
        let mut b = Vec::with_capacity(active.len());
        for &i in &active {
            let sign = if self.rhs[i] < 0.0 { -1.0 } else { 1.0 };
            a.push(self.rows[i].iter().map(|v| sign * v).collect::<Vec<_>>());
            b.push(sign * self.rhs[i]);
        }
        let sys = System::new(&a, b, n);
        let m = sys.b.len();
        let mut cost = vec![0.0; n + m];
        cost[n..].iter_mut().for_each(|c| *c = 1.0);
        let mut basis: Vec<usize> = (n..n + m).collect();
        let mut pivots = 0;
        let end = sys.simplex(&cost, n + m, &mut basis, pivot_budget(m, n + m), &mut pivots);
        let x_b = match end {
            SimplexEnd::Optimal(x_b) => x_b,
            // Phase one is bounded below by zero.
            SimplexEnd::Unbounded | SimplexEnd::Failed => {
                return PhaseOne::NumericalFailure { pivots }
            }
        };
        let residual: f64 = basis
            .iter()
            .zip(&x_b)
            .filter(|(j, _)| **j >= n)
            .map(|(_, v)| v.max(0.0))
            .sum();
        if residual > FEASIBILITY_TOL {
            return PhaseOne::Infeasible { residual, pivots };
        }

        // Swap basic artificials for original columns where possible. Any
        // artificial left behind sits on a redundant row and stays at zero.
        for r in 0..m {
            if basis[r] < n {
                continue;
            }
            let Some(lu) = sys.factor_basis(&basis) else {
                return PhaseOne::NumericalFailure { pivots };
            };
            // Row r of B^-1 A is w^T A with B^T w = e_r.
            let mut e_r = vec![0.0; m];
            e_r[r] = 1.0;
            let w = lu.solve_transposed(&e_r);
            let zero = vec![0.0; n + m];
            let mut best: Option<(usize, f64)> = None;
            for j in (0..n).filter(|j| !basis.contains(j)) {
                let v = sys.reduced_cost(&zero, &w, j).abs();
                if v > PIVOT_TOL && best.is_none_or(|(_, bv)| v > bv) {
                    best = Some((j, v));
                }
            }
            if let Some((j, _)) = best {
                basis[r] = j;
                pivots += 1;
            }
        }
        let Some(x_b) = sys.basic_values(&basis) else {
            return PhaseOne::NumericalFailure { pivots };
        };
        PhaseOne::Feasible(FeasibleBasis {
            system: sys,
            basis,
            x_b,
            rows: self.rows.clone(),
            rhs: self.rhs.clone(),
            phase_one_residual: residual.max(0.0),
            phase_one_pivots: pivots,
        })
    }
}

/// Feasible basic solution after phase one, reusable across objectives.
#[derive(Debug, Clone)]
pub struct FeasibleBasis {
    system: System,
    basis: Vec<usize>,
    x_b: Vec<f64>,
    rows: Vec<Vec<f64>>,
    rhs: Vec<f64>,
    phase_one_residual: f64,
    phase_one_pivots: usize,
}

impl FeasibleBasis {
    pub fn phase_one_residual(&self) -> f64 {
        self.phase_one_residual
    }

    /// The basic feasible point found by phase one.
    pub fn point(&self) -> Vec<f64> {
        self.system.expand(&self.basis, &self.x_b)
    }

    pub fn optimize(&self, objective: &[f64], sense: Sense) -> LpOutcome {
        let mut basis = self.basis.clone();
        self.optimize_from(&mut basis, objective, sense)
    }

    /// Phase two started from `basis`, which must be a basis this polytope
    /// returned earlier; it is replaced by the final basis. Chains of similar
    /// objectives then need only a few pivots each.
    pub fn optimize_warm(&self, basis: &mut Vec<usize>, objective: &[f64], sense: Sense) -> LpOutcome {
        if basis.len() != self.basis.len() {
            basis.clone_from(&self.basis);
        }
        let cold = *basis == self.basis;
        let out = self.optimize_from(basis, objective, sense);
        if out.status == LpStatus::Optimal {
            return out;
        }
        basis.clone_from(&self.basis);
        if cold {
            return out;
        }
        let out = self.optimize_from(basis, objective, sense);
        if out.status != LpStatus::Optimal {
            basis.clone_from(&self.basis);
        }
        out
    }

    /// Basis found by phase one, usable as a warm start.
    pub fn initial_basis(&self) -> Vec<usize> {
        self.basis.clone()
    }

    fn optimize_from(&self, basis: &mut [usize], objective: &[f64], sense: Sense) -> LpOutcome {
        let n = self.system.n;
        assert_eq!(objective.len(), n, "objective length must match variable count");
        let m = self.basis.len();
        let mut cost = vec![0.0; n + m];
        for (c, v) in cost.iter_mut().zip(objective) {
            *c = match sense {
                Sense::Minimize => *v,
                Sense::Maximize => -*v,
            };
        }
        let mut pivots = 0;
        let end = self
            .system
            .simplex(&cost, n, basis, pivot_budget(m, n), &mut pivots);
        let pivots = pivots + self.phase_one_pivots;
        let x_b = match end {
            SimplexEnd::Optimal(x_b) => x_b,
            SimplexEnd::Unbounded => {
                return LpOutcome::without_point(LpStatus::Unbounded, self.phase_one_residual, pivots)
            }
            SimplexEnd::Failed => {
                return LpOutcome::without_point(
                    LpStatus::NumericalFailure,
                    self.phase_one_residual,
                    pivots,
                )
            }
        };
        let x = self.system.expand(basis, &x_b);
        let certificate = self
            .rows
            .iter()
            .zip(&self.rhs)
            .map(|(row, b)| (row.iter().zip(&x).map(|(a, v)| a * v).sum::<f64>() - b).abs())
            .fold(0.0, f64::max);
        let artificial_mass = basis
            .iter()
            .zip(&x_b)
            .filter(|(j, _)| **j >= n)
            .fold(0.0f64, |acc, (_, v)| acc.max(v.abs()));
        let status = if certificate > RESIDUAL_TOL
            || artificial_mass > RESIDUAL_TOL
            || x.iter().any(|v| *v < -NONNEG_TOL)
        {
            LpStatus::NumericalFailure
        } else {
            LpStatus::Optimal
        };
        let value = objective.iter().zip(&x).map(|(a, v)| a * v).sum();
        LpOutcome {
            status,
            value: Some(value),
            solution: Some(x),
            certificate_norm: certificate,
            phase_one_residual: self.phase_one_residual,
            pivots,
        }
    }
}

fn pivot_budget(m: usize, n: usize) -> usize {
    50 * (m + n) + 1_000
}

enum SimplexEnd {
    Optimal(Vec<f64>),
    Unbounded,
    Failed,
}

/// `[A | I] z = b` with `b >= 0`; columns `n..n+m` are the artificials.
#[derive(Debug, Clone)]
struct System {
    /// Column-major copy of `A`.
    cols: Vec<f64>,
    b: Vec<f64>,
    n: usize,
}

impl System {
    fn new(rows: &[Vec<f64>], b: Vec<f64>, n: usize) -> Self {
        let m = b.len();
        let mut cols = vec![0.0; n * m];
        for (i, row) in rows.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                cols[j * m + i] = *v;
            }
        }
        Self { cols, b, n }
    }

    fn m(&self) -> usize {
        self.b.len()
    }

    fn column_into(&self, j: usize, out: &mut [f64]) {
        let m = self.m();
        if j < self.n {
            out.copy_from_slice(&self.cols[j * m..(j + 1) * m]);
        } else {
            out.fill(0.0);
            out[j - self.n] = 1.0;
        }
    }

    fn column(&self, j: usize) -> Vec<f64> {
        let mut c = vec![0.0; self.m()];
        self.column_into(j, &mut c);
        c
    }

    /// `c_j - y . A_j`.
    fn reduced_cost(&self, cost: &[f64], y: &[f64], j: usize) -> f64 {
        let m = self.m();
        let dot = if j < self.n {
            self.cols[j * m..(j + 1) * m].iter().zip(y).map(|(a, v)| a * v).sum()
        } else {
            y[j - self.n]
        };
        cost[j] - dot
    }

    fn factor_basis(&self, basis: &[usize]) -> Option<Lu> {
        let m = self.m();
        // Column k of B is column basis[k]; stored row-major.
        let mut bm = vec![0.0; m * m];
        let mut col = vec![0.0; m];
        for (k, &j) in basis.iter().enumerate() {
            self.column_into(j, &mut col);
            for i in 0..m {
                bm[i * m + k] = col[i];
            }
        }
        Lu::factor(bm, m)
    }

    fn basic_values(&self, basis: &[usize]) -> Option<Vec<f64>> {
        self.factor_basis(basis).map(|lu| lu.solve(&self.b))
    }

    fn expand(&self, basis: &[usize], x_b: &[f64]) -> Vec<f64> {
        let mut x = vec![0.0; self.n];
        for (&j, &v) in basis.iter().zip(x_b) {
            if j < self.n {
                x[j] = v.max(0.0);
            }
        }
        x
    }

    /// Revised simplex over entering columns `0..n_cols`. Pricing is Dantzig's
    /// most negative reduced cost until `BLAND_AFTER` consecutive degenerate
    /// pivots, then Bland's rule for the rest of the run. The basis is
    /// refactored from scratch every iteration.
    fn simplex(
        &self,
        cost: &[f64],
        n_cols: usize,
        basis: &mut [usize],
        budget: usize,
        pivots: &mut usize,
    ) -> SimplexEnd {
        let m = self.m();
        let mut in_basis = vec![false; self.n + m];
        basis.iter().for_each(|&j| in_basis[j] = true);
        let mut degenerate_run = 0;
        loop {
            let Some(lu) = self.factor_basis(basis) else {
                return SimplexEnd::Failed;
            };
            let x_b = lu.solve(&self.b);
            let c_b: Vec<f64> = basis.iter().map(|&j| cost[j]).collect();
            let y = lu.solve_transposed(&c_b);
            let mut candidates = (0..n_cols)
                .filter(|&j| !in_basis[j])
                .map(|j| (j, self.reduced_cost(cost, &y, j)))
                .filter(|(_, r)| *r < -COST_TOL);
            let enter = if degenerate_run < BLAND_AFTER {
                candidates.min_by(|a, b| a.1.total_cmp(&b.1))
            } else {
                candidates.next()
            };
            let Some((enter, _)) = enter else {
                return SimplexEnd::Optimal(x_b);
            };
            let d = lu.solve(&self.column(enter));
            let mut leave: Option<(usize, f64)> = None;
            for r in 0..m {
                if d[r] > PIVOT_TOL {
                    let ratio = x_b[r].max(0.0) / d[r];
                    leave = match leave {
                        None => Some((r, ratio)),
                        Some((br, best)) => {
                            let tie = (ratio - best).abs() <= 1e-12 * (1.0 + best.abs());
                            if ratio < best && !tie || tie && basis[r] < basis[br] {
                                Some((r, ratio))
                            } else {
                                Some((br, best))
                            }
                        }
                    };
                }
            }
            let Some((row, step)) = leave else {
                return SimplexEnd::Unbounded;
            };
            if *pivots >= budget {
                return SimplexEnd::Failed;
            }
            // Once stalled, stay on Bland's rule so the run cannot cycle.
            if step > 0.0 && degenerate_run < BLAND_AFTER {
                degenerate_run = 0;
            } else {
                degenerate_run += 1;
            }
            in_basis[basis[row]] = false;
            in_basis[enter] = true;
            basis[row] = enter;
            *pivots += 1;
        }
    }
}

/// LU factorization with partial pivoting, `P A = L U`, row-major.
struct Lu {
    lu: Vec<f64>,
    perm: Vec<usize>,
    m: usize,
}

impl Lu {
    const SINGULAR_TOL: f64 = 1e-13;

    fn factor(mut lu: Vec<f64>, m: usize) -> Option<Self> {
        let mut perm: Vec<usize> = (0..m).collect();
        for k in 0..m {
            let p = (k..m).max_by(|&i, &j| lu[i * m + k].abs().total_cmp(&lu[j * m + k].abs()))?;
            if lu[p * m + k].abs() < Self::SINGULAR_TOL {
                return None;
            }
            if p != k {
                for c in 0..m {
                    lu.swap(k * m + c, p * m + c);
                }
                perm.swap(k, p);
            }
            let pivot = lu[k * m + k];
            for i in k + 1..m {
                let f = lu[i * m + k] / pivot;
                lu[i * m + k] = f;
                for j in k + 1..m {
                    lu[i * m + j] -= f * lu[k * m + j];
                }
            }
        }
        Some(Self { lu, perm, m })
    }

    #[inline]
    fn at(&self, i: usize, j: usize) -> f64 {
        self.lu[i * self.m + j]
    }

    /// Solves `A x = b`.
    fn solve(&self, b: &[f64]) -> Vec<f64> {
        let m = self.m;
        let mut x: Vec<f64> = self.perm.iter().map(|&i| b[i]).collect();
        for i in 0..m {
            for j in 0..i {
                x[i] -= self.at(i, j) * x[j];
            }
        }
        for i in (0..m).rev() {
            for j in i + 1..m {
                x[i] -= self.at(i, j) * x[j];
            }
            x[i] /= self.at(i, i);
        }
        x
    }

    /// Solves `A^T y = c`.
    fn solve_transposed(&self, c: &[f64]) -> Vec<f64> {
        let m = self.m;
        // U^T z = c, then L^T w = z, then y = P^T w.
        let mut z = c.to_vec();
        for i in 0..m {
            for j in 0..i {
                z[i] -= self.at(j, i) * z[j];
            }
            z[i] /= self.at(i, i);
        }
        for i in (0..m).rev() {
            for j in i + 1..m {
                z[i] -= self.at(j, i) * z[j];
            }
        }
        let mut y = vec![0.0; m];
        for (k, &i) in self.perm.iter().enumerate() {
            y[i] = z[k];
        }
        y
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lp(obj: &[f64], sense: Sense, a: &[&[f64]], b: &[f64]) -> LinearProgram {
        LinearProgram::new(
            obj.to_vec(),
            sense,
            a.iter().map(|r| r.to_vec()).collect(),
            b.to_vec(),
        )
        .unwrap()
    }

    #[test]
    fn minimize_first_coordinate() {
        let out = solve(&lp(&[1.0, 0.0], Sense::Minimize, &[&[1.0, 1.0]], &[1.0])).unwrap();
        assert_eq!(out.status, LpStatus::Optimal);
        assert!(out.value.unwrap().abs() < 1e-12);
        let x = out.solution.unwrap();
        assert!(x[0].abs() < 1e-12 && (x[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn forced_point() {
        let out = solve(&lp(
            &[1.0, 0.0],
            Sense::Maximize,
            &[&[1.0, 1.0], &[-1.0, 1.0]],
            &[1.0, 0.0],
        ))
        .unwrap();
        assert_eq!(out.status, LpStatus::Optimal);
        assert!((out.value.unwrap() - 0.5).abs() < 1e-12);
        assert!(out.certificate_norm < 1e-12);
    }

    #[test]
    fn contradictory_rows() {
        let out = solve(&lp(
            &[1.0, 1.0],
            Sense::Minimize,
            &[&[1.0, 1.0], &[1.0, 1.0]],
            &[1.0, 2.0],
        ))
        .unwrap();
        assert_eq!(out.status, LpStatus::Infeasible);
        assert!(out.phase_one_residual > FEASIBILITY_TOL);
        assert!(out.solution.is_none());
    }

    #[test]
    fn unbounded_direction() {
        let out = solve(&lp(&[-1.0, 0.0, 0.0], Sense::Minimize, &[&[1.0, -1.0, 0.0]], &[0.0])).unwrap();
        assert_eq!(out.status, LpStatus::Unbounded);
    }

    #[test]
    fn redundant_rows_are_tolerated() {
        let out = solve(&lp(
            &[0.0, 1.0, 2.0],
            Sense::Maximize,
            &[&[1.0, 1.0, 1.0], &[2.0, 2.0, 2.0], &[0.0, 0.0, 0.0]],
            &[1.0, 2.0, 0.0],
        ))
        .unwrap();
        assert_eq!(out.status, LpStatus::Optimal);
        assert!((out.value.unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn zero_row_with_nonzero_rhs_is_infeasible() {
        let out = solve(&lp(&[1.0, 1.0], Sense::Minimize, &[&[0.0, 0.0]], &[1.0])).unwrap();
        assert_eq!(out.status, LpStatus::Infeasible);
    }

    #[test]
    fn invalid_programs_rejected() {
        assert!(LinearProgram::new(vec![1.0], Sense::Minimize, vec![vec![1.0, 2.0]], vec![1.0]).is_err());
        assert!(LinearProgram::new(vec![1.0, f64::NAN], Sense::Minimize, vec![vec![1.0, 2.0]], vec![1.0]).is_err());
        assert!(LinearProgram::new(
            vec![1.0],
            Sense::Minimize,
            vec![vec![1.0], vec![2.0]],
            vec![1.0, 2.0]
        )
        .is_err());
        assert!(LinearProgram::new(vec![], Sense::Minimize, vec![], vec![]).is_err());
    }

    #[test]
    fn degenerate_cycling_example() {
        // Beale's example, which cycles under the textbook largest-coefficient rule.
        let a: &[&[f64]] = &[
            &[0.25, -8.0, -1.0, 9.0, 1.0, 0.0, 0.0],
            &[0.5, -12.0, -0.5, 3.0, 0.0, 1.0, 0.0],
            &[0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0],
        ];
        let out = solve(&lp(&[-0.75, 20.0, -0.5, 6.0, 0.0, 0.0, 0.0], Sense::Minimize, a, &[0.0, 0.0, 1.0]))
            .unwrap();
        assert_eq!(out.status, LpStatus::Optimal);
        assert!((out.value.unwrap() + 1.25).abs() < 1e-10);
    }

    #[test]
    fn basis_reuse_matches_fresh_solves() {
        let a = vec![vec![1.0; 5], vec![-2.0, -1.0, 0.0, 1.0, 2.0]];
        let b = vec![1.0, 0.3];
        let poly = EqualityPolytope::new(5, &a, &b).unwrap();
        let PhaseOne::Feasible(basis) = poly.phase_one() else {
            panic!("expected feasible")
        };
        for j in 0..5 {
            let mut c = vec![0.0; 5];
            c[..=j].iter_mut().for_each(|v| *v = 1.0);
            for sense in [Sense::Minimize, Sense::Maximize] {
                let reused = basis.optimize(&c, sense);
                let fresh = solve(&LinearProgram::new(c.clone(), sense, a.clone(), b.clone()).unwrap()).unwrap();
                assert!((reused.value.unwrap() - fresh.value.unwrap()).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn orthant_only() {
        let p = EqualityPolytope::new(3, &[], &[]).unwrap();
        let PhaseOne::Feasible(basis) = p.phase_one() else {
            panic!()
        };
        assert_eq!(basis.optimize(&[1.0, 2.0, 0.0], Sense::Minimize).value, Some(0.0));
        assert_eq!(basis.optimize(&[1.0, 2.0, 0.0], Sense::Maximize).status, LpStatus::Unbounded);
    }
}
