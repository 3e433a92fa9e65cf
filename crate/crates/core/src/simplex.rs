//! Dense two-phase simplex for small linear programs.
//!
//! Problems here have at most a few thousand entries, so a full tableau with
//! Bland's anti-cycling rule is fast enough and easy to audit.

use crate::error::{Error, Result};

const EPS: f64 = 1e-10;

/// `maximize c.x` subject to `eq` rows (`a.x = b`), `le` rows (`a.x <= b`)
/// and `x >= 0`.
#[derive(Debug, Clone, Default)]
pub struct LinearProgram {
    pub objective: Vec<f64>,
    pub eq: Vec<(Vec<f64>, f64)>,
    pub le: Vec<(Vec<f64>, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LpOutcome {
    Optimal { x: Vec<f64>, value: f64 },
    Infeasible,
    Unbounded,
}

impl LinearProgram {
    pub fn new(objective: Vec<f64>) -> Self {
        Self {
            objective,
            ..Self::default()
        }
    }

    pub fn n_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn add_eq(&mut self, a: Vec<f64>, b: f64) {
        self.eq.push((a, b));
    }

    pub fn add_le(&mut self, a: Vec<f64>, b: f64) {
        self.le.push((a, b));
    }

    pub fn solve(&self) -> Result<LpOutcome> {
        let n = self.n_vars();
        for (a, _) in self.eq.iter().chain(&self.le) {
            if a.len() != n {
                return Err(Error::Lp(format!(
                    "constraint has {} coefficients for {} variables",
                    a.len(),
                    n
                )));
            }
        }
        Tableau::build(self).run(&self.objective)
    }
}

struct Tableau {
    /// Constraint rows; the last entry of each row is the right-hand side.
    rows: Vec<Vec<f64>>,
    basis: Vec<usize>,
    n_orig: usize,
    /// Columns below this index are original or slack variables.
    n_real: usize,
}

impl Tableau {
    fn build(lp: &LinearProgram) -> Self {
        let n = lp.n_vars();
        let m = lp.eq.len() + lp.le.len();
        let n_slack = lp.le.len();
        let n_real = n + n_slack;
        let width = n_real + m + 1;
        let mut rows = Vec::with_capacity(m);
        let mut basis = Vec::with_capacity(m);
        let constraints = lp
            .eq
            .iter()
            .map(|c| (c, None))
            .chain(lp.le.iter().enumerate().map(|(i, c)| (c, Some(n + i))));
        for (i, ((a, b), slack)) in constraints.enumerate() {
            let mut row = vec![0.0; width];
            row[..n].copy_from_slice(a);
            if let Some(s) = slack {
                row[s] = 1.0;
            }
            row[width - 1] = *b;
            if *b < 0.0 {
                row.iter_mut().for_each(|x| *x = -*x);
            }
            row[n_real + i] = 1.0;
            rows.push(row);
            basis.push(n_real + i);
        }
        Self {
            rows,
            basis,
            n_orig: n,
            n_real,
        }
    }

    fn width(&self) -> usize {
        self.n_real + self.rows.len() + 1
    }

    fn pivot(&mut self, obj: &mut [f64], r: usize, c: usize) {
        let p = self.rows[r][c];
        self.rows[r].iter_mut().for_each(|x| *x /= p);
        let pivot_row = self.rows[r].clone();
        for (i, row) in self.rows.iter_mut().enumerate() {
            if i != r {
                let f = row[c];
                if f != 0.0 {
                    row.iter_mut().zip(&pivot_row).for_each(|(x, p)| *x -= f * p);
                }
            }
        }
        let f = obj[c];
        if f != 0.0 {
            obj.iter_mut().zip(&pivot_row).for_each(|(x, p)| *x -= f * p);
        }
        self.basis[r] = c;
    }

    /// Minimizes the objective whose reduced costs are in `obj` (last entry is
    /// minus the current value), over columns `< allowed`. Returns false when
    /// unbounded.
    fn optimize(&mut self, obj: &mut [f64], allowed: usize) -> bool {
        let rhs = self.width() - 1;
        loop {
            let Some(c) = (0..allowed).find(|&j| obj[j] < -EPS) else {
                return true;
            };
            let mut leave: Option<(usize, f64)> = None;
            for (i, row) in self.rows.iter().enumerate() {
                if row[c] > EPS {
                    let ratio = row[rhs] / row[c];
                    leave = match leave {
                        None => Some((i, ratio)),
                        Some((bi, br)) => {
                            if ratio < br - EPS || (ratio <= br + EPS && self.basis[i] < self.basis[bi]) {
                                Some((i, ratio))
                            } else {
                                Some((bi, br))
                            }
                        }
                    };
                }
            }
            match leave {
                None => return false,
                Some((r, _)) => self.pivot(obj, r, c),
            }
        }
    }

    fn run(mut self, objective: &[f64]) -> Result<LpOutcome> {
        let width = self.width();
        let rhs = width - 1;

        // phase 1: minimize the sum of artificials
        let mut obj = vec![0.0; width];
        for j in self.n_real..rhs {
            obj[j] = 1.0;
        }
        for row in &self.rows {
            obj.iter_mut().zip(row).for_each(|(o, x)| *o -= x);
        }
        for j in self.n_real..rhs {
            obj[j] = 0.0;
        }
        if !self.optimize(&mut obj, rhs) {
            return Err(Error::Lp("phase one reported unbounded".into()));
        }
        let scale = 1.0 + self.rows.iter().map(|r| r[rhs].abs()).fold(0.0, f64::max);
        if -obj[rhs] > 1e-9 * scale {
            return Ok(LpOutcome::Infeasible);
        }

        // drive zero-valued artificials out of the basis; drop redundant rows
        let mut r = 0;
        while r < self.rows.len() {
            if self.basis[r] >= self.n_real {
                match (0..self.n_real).find(|&j| self.rows[r][j].abs() > EPS) {
                    Some(c) => {
                        let mut dummy = vec![0.0; width];
                        self.pivot(&mut dummy, r, c);
                    }
                    None => {
                        self.rows.remove(r);
                        self.basis.remove(r);
                        continue;
                    }
                }
            }
            r += 1;
        }

        // phase 2: minimize -c.x over real columns
        let mut obj = vec![0.0; width];
        for (j, c) in objective.iter().enumerate() {
            obj[j] = -c;
        }
        for (i, row) in self.rows.iter().enumerate() {
            let cb = obj[self.basis[i]];
            if cb != 0.0 {
                obj.iter_mut().zip(row).for_each(|(o, x)| *o -= cb * x);
            }
        }
        if !self.optimize(&mut obj, self.n_real) {
            return Ok(LpOutcome::Unbounded);
        }

        let mut x = vec![0.0; self.n_orig];
        for (i, &b) in self.basis.iter().enumerate() {
            if b < self.n_orig {
                x[b] = self.rows[i][rhs].max(0.0);
            }
        }
        let value = x.iter().zip(objective).map(|(x, c)| x * c).sum();
        Ok(LpOutcome::Optimal { x, value })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn optimal(lp: &LinearProgram) -> (Vec<f64>, f64) {
        match lp.solve().unwrap() {
            LpOutcome::Optimal { x, value } => (x, value),
            other => panic!("expected optimum, got {other:?}"),
        }
    }

    #[test]
    fn textbook_maximization() {
        // max 3x + 5y, x <= 4, 2y <= 12, 3x + 2y <= 18 -> (2, 6), 36
        let mut lp = LinearProgram::new(vec![3.0, 5.0]);
        lp.add_le(vec![1.0, 0.0], 4.0);
        lp.add_le(vec![0.0, 2.0], 12.0);
        lp.add_le(vec![3.0, 2.0], 18.0);
        let (x, v) = optimal(&lp);
        assert!((v - 36.0).abs() < 1e-9);
        assert!((x[0] - 2.0).abs() < 1e-9 && (x[1] - 6.0).abs() < 1e-9);
    }

    #[test]
    fn equality_and_negative_rhs() {
        // max x - y, x + y = 1, -x <= -0.25 (x >= 0.25), y >= 0.5 via -y <= -0.5
        let mut lp = LinearProgram::new(vec![1.0, -1.0]);
        lp.add_eq(vec![1.0, 1.0], 1.0);
        lp.add_le(vec![-1.0, 0.0], -0.25);
        lp.add_le(vec![0.0, -1.0], -0.5);
        let (x, v) = optimal(&lp);
        assert!((x[0] - 0.5).abs() < 1e-9);
        assert!(v.abs() < 1e-9);
    }

    #[test]
    fn infeasible_and_unbounded() {
        let mut lp = LinearProgram::new(vec![1.0]);
        lp.add_le(vec![1.0], -1.0);
        assert_eq!(lp.solve().unwrap(), LpOutcome::Infeasible);

        let mut lp = LinearProgram::new(vec![1.0, 0.0]);
        lp.add_le(vec![-1.0, 1.0], 1.0);
        assert_eq!(lp.solve().unwrap(), LpOutcome::Unbounded);
    }

    #[test]
    fn redundant_equalities() {
        let mut lp = LinearProgram::new(vec![1.0, 2.0]);
        lp.add_eq(vec![1.0, 1.0], 1.0);
        lp.add_eq(vec![2.0, 2.0], 2.0);
        let (x, v) = optimal(&lp);
        assert!((v - 2.0).abs() < 1e-9);
        assert!((x[1] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn degenerate_cycling_example() {
        // Beale's example cycles under the textbook largest-coefficient rule.
        let mut lp = LinearProgram::new(vec![0.75, -20.0, 0.5, -6.0]);
        lp.add_le(vec![0.25, -8.0, -1.0, 9.0], 0.0);
        lp.add_le(vec![0.5, -12.0, -0.5, 3.0], 0.0);
        lp.add_le(vec![0.0, 0.0, 1.0, 0.0], 1.0);
        let (_, v) = optimal(&lp);
        assert!((v - 1.25).abs() < 1e-9);
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let mut lp = LinearProgram::new(vec![1.0, 1.0]);
        lp.add_le(vec![1.0], 1.0);
        assert!(lp.solve().is_err());
    }
}
