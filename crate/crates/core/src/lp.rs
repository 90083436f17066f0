//! Dense two-phase simplex with Bland's rule, generic over exact rationals and `f64`.

use std::fmt::Debug;
use std::ops::{Add, Div, Mul, Neg, Sub};

use num_traits::{One, Signed, Zero};

use crate::rational::Rational;

pub trait Scalar:
    Clone
    + Debug
    + PartialOrd
    + Zero
    + One
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    fn positive(&self) -> bool;
    fn negative(&self) -> bool;
    fn negligible(&self) -> bool {
        !self.positive() && !self.negative()
    }
}

impl Scalar for Rational {
    fn positive(&self) -> bool {
        Signed::is_positive(self)
    }
    fn negative(&self) -> bool {
        Signed::is_negative(self)
    }
}

const F64_TOL: f64 = 1e-9;

impl Scalar for f64 {
    fn positive(&self) -> bool {
        *self > F64_TOL
    }
    fn negative(&self) -> bool {
        *self < -F64_TOL
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Relation {
    Le,
    Ge,
    Eq,
}

#[derive(Clone, Debug)]
pub struct Row<T> {
    pub coeffs: Vec<T>,
    pub relation: Relation,
    pub rhs: T,
}

/// Linear program over `x >= 0`.
#[derive(Clone, Debug)]
pub struct LinearProgram<T> {
    pub vars: usize,
    pub objective: Vec<T>,
    pub maximize: bool,
    pub rows: Vec<Row<T>>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum LpOutcome<T> {
    Optimal { value: T, x: Vec<T> },
    Infeasible,
    Unbounded,
}

impl<T> LpOutcome<T> {
    pub fn is_feasible(&self) -> bool {
        !matches!(self, LpOutcome::Infeasible)
    }
}

impl<T: Scalar> LinearProgram<T> {
    pub fn new(vars: usize) -> Self {
        LinearProgram {
            vars,
            objective: vec![T::zero(); vars],
            maximize: true,
            rows: Vec::new(),
        }
    }

    pub fn maximize(mut self, objective: Vec<T>) -> Self {
        assert_eq!(objective.len(), self.vars);
        self.objective = objective;
        self.maximize = true;
        self
    }

    pub fn minimize(mut self, objective: Vec<T>) -> Self {
        assert_eq!(objective.len(), self.vars);
        self.objective = objective;
        self.maximize = false;
        self
    }

    pub fn add(&mut self, coeffs: Vec<T>, relation: Relation, rhs: T) {
        assert_eq!(coeffs.len(), self.vars);
        self.rows.push(Row {
            coeffs,
            relation,
            rhs,
        });
    }

    /// Sparse form of [`LinearProgram::add`].
    pub fn add_sparse(&mut self, terms: &[(usize, T)], relation: Relation, rhs: T) {
        let mut coeffs = vec![T::zero(); self.vars];
        for (j, c) in terms {
            coeffs[*j] = coeffs[*j].clone() + c.clone();
        }
        self.add(coeffs, relation, rhs);
    }

    pub fn solve(&self) -> LpOutcome<T> {
        Tableau::build(self).run(self)
    }
}

struct Tableau<T> {
    a: Vec<Vec<T>>,
    basis: Vec<usize>,
    cols: usize,
    artificial_from: usize,
}

impl<T: Scalar> Tableau<T> {
    fn build(lp: &LinearProgram<T>) -> Self {
        let n = lp.vars;
        let slacks = lp
            .rows
            .iter()
            .filter(|r| r.relation != Relation::Eq)
            .count();
        let artificials = lp.rows.len();
        let cols = n + slacks + artificials;
        let mut a = Vec::with_capacity(lp.rows.len());
        let mut basis = Vec::with_capacity(lp.rows.len());
        let mut slack = n;
        for (r, row) in lp.rows.iter().enumerate() {
            let flip = row.rhs.negative();
            let sign = |v: &T| if flip { -v.clone() } else { v.clone() };
            let mut line: Vec<T> = row.coeffs.iter().map(sign).collect();
            line.resize(cols + 1, T::zero());
            if row.relation != Relation::Eq {
                let s = if row.relation == Relation::Le {
                    T::one()
                } else {
                    -T::one()
                };
                line[slack] = sign(&s);
                slack += 1;
            }
            line[n + slacks + r] = T::one();
            line[cols] = sign(&row.rhs);
            a.push(line);
            basis.push(n + slacks + r);
        }
        Tableau {
            a,
            basis,
            cols,
            artificial_from: n + slacks,
        }
    }

    fn pivot(&mut self, r: usize, c: usize, cost: &mut [T]) {
        let piv = self.a[r][c].clone();
        for v in self.a[r].iter_mut() {
            *v = v.clone() / piv.clone();
        }
        let pivot_row = self.a[r].clone();
        for (rr, row) in self.a.iter_mut().enumerate() {
            if rr == r || row[c].negligible() {
                continue;
            }
            let f = row[c].clone();
            for (v, p) in row.iter_mut().zip(&pivot_row) {
                if !p.negligible() {
                    *v = v.clone() - f.clone() * p.clone();
                }
            }
            row[c] = T::zero();
        }
        if !cost[c].negligible() {
            let f = cost[c].clone();
            for (v, p) in cost.iter_mut().zip(&pivot_row) {
                if !p.negligible() {
                    *v = v.clone() - f.clone() * p.clone();
                }
            }
            cost[c] = T::zero();
        }
        self.basis[r] = c;
    }

    /// Minimizes the reduced-cost row over columns `< limit`; false when unbounded.
    fn optimize(&mut self, cost: &mut [T], limit: usize) -> bool {
        loop {
            let Some(c) = (0..limit).find(|&j| cost[j].negative()) else {
                return true;
            };
            let mut best: Option<(usize, T)> = None;
            for r in 0..self.a.len() {
                if !self.a[r][c].positive() {
                    continue;
                }
                let ratio = self.a[r][self.cols].clone() / self.a[r][c].clone();
                let better = match &best {
                    None => true,
                    Some((br, bv)) => {
                        ratio < *bv || (!(ratio > *bv) && self.basis[r] < self.basis[*br])
                    }
                };
                if better {
                    best = Some((r, ratio));
                }
            }
            match best {
                None => return false,
                Some((r, _)) => self.pivot(r, c, cost),
            }
        }
    }

    fn run(mut self, lp: &LinearProgram<T>) -> LpOutcome<T> {
        let width = self.cols + 1;
        // Phase one: minimize the sum of artificials.
        let mut cost = vec![T::zero(); width];
        for row in &self.a {
            for j in 0..width {
                if j < self.artificial_from || j == self.cols {
                    cost[j] = cost[j].clone() - row[j].clone();
                }
            }
        }
        self.optimize(&mut cost, self.artificial_from);
        if cost[self.cols].negative() {
            return LpOutcome::Infeasible;
        }
        // Drive remaining artificials out of the basis or drop redundant rows.
        let mut r = 0;
        while r < self.a.len() {
            if self.basis[r] >= self.artificial_from {
                match (0..self.artificial_from).find(|&j| !self.a[r][j].negligible()) {
                    Some(j) => self.pivot(r, j, &mut cost),
                    None => {
                        self.a.remove(r);
                        self.basis.remove(r);
                        continue;
                    }
                }
            }
            r += 1;
        }
        // Phase two.
        let mut cost = vec![T::zero(); width];
        for (j, c) in lp.objective.iter().enumerate() {
            cost[j] = if lp.maximize { -c.clone() } else { c.clone() };
        }
        for r in 0..self.a.len() {
            let b = self.basis[r];
            if !cost[b].negligible() {
                let f = cost[b].clone();
                for j in 0..width {
                    cost[j] = cost[j].clone() - f.clone() * self.a[r][j].clone();
                }
            }
        }
        if !self.optimize(&mut cost, self.artificial_from) {
            return LpOutcome::Unbounded;
        }
        let mut x = vec![T::zero(); lp.vars];
        for (r, &b) in self.basis.iter().enumerate() {
            if b < lp.vars {
                x[b] = self.a[r][self.cols].clone();
            }
        }
        let value = lp
            .objective
            .iter()
            .zip(&x)
            .fold(T::zero(), |acc, (c, v)| acc + c.clone() * v.clone());
        LpOutcome::Optimal { value, x }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::{int, rat};

    #[test]
    fn textbook_maximum() {
        // max 3x + 5y, x <= 4, 2y <= 12, 3x + 2y <= 18
        let mut lp = LinearProgram::new(2).maximize(vec![int(3), int(5)]);
        lp.add(vec![int(1), int(0)], Relation::Le, int(4));
        lp.add(vec![int(0), int(2)], Relation::Le, int(12));
        lp.add(vec![int(3), int(2)], Relation::Le, int(18));
        assert_eq!(
            lp.solve(),
            LpOutcome::Optimal {
                value: int(36),
                x: vec![int(2), int(6)]
            }
        );
    }

    #[test]
    fn equality_and_ge_rows() {
        // min x + y, x + y >= 1/2, x - y = 1/4
        let mut lp = LinearProgram::new(2).minimize(vec![int(1), int(1)]);
        lp.add(vec![int(1), int(1)], Relation::Ge, rat(1, 2));
        lp.add(vec![int(1), int(-1)], Relation::Eq, rat(1, 4));
        assert_eq!(
            lp.solve(),
            LpOutcome::Optimal {
                value: rat(1, 2),
                x: vec![rat(3, 8), rat(1, 8)]
            }
        );
    }

    #[test]
    fn infeasible_and_unbounded() {
        let mut lp = LinearProgram::new(1).maximize(vec![int(1)]);
        lp.add(vec![int(1)], Relation::Ge, int(2));
        assert_eq!(lp.solve(), LpOutcome::Unbounded);
        lp.add(vec![int(1)], Relation::Le, int(1));
        assert_eq!(lp.solve(), LpOutcome::Infeasible);
    }

    #[test]
    fn negative_rhs_and_redundant_rows() {
        let mut lp = LinearProgram::new(2).maximize(vec![int(1), int(2)]);
        lp.add(vec![int(-1), int(-1)], Relation::Ge, int(-3));
        lp.add(vec![int(1), int(1)], Relation::Le, int(3));
        lp.add(vec![int(2), int(2)], Relation::Eq, int(6));
        assert_eq!(
            lp.solve(),
            LpOutcome::Optimal {
                value: int(6),
                x: vec![int(0), int(3)]
            }
        );
    }

    #[test]
    fn float_agrees_with_exact() {
        let mut lp = LinearProgram::new(3).maximize(vec![2.0, 3.0, 1.0]);
        lp.add(vec![1.0, 1.0, 1.0], Relation::Le, 4.0);
        lp.add(vec![1.0, 3.0, 0.0], Relation::Le, 6.0);
        lp.add(vec![0.0, 1.0, 1.0], Relation::Ge, 1.0);
        match lp.solve() {
            LpOutcome::Optimal { value, .. } => assert!((value - 9.0).abs() < 1e-9),
            other => panic!("{:?}", other),
        }
    }
}
