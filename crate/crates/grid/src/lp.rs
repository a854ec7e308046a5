//! Dense two-phase simplex for the small linear programs behind the sparse
//! (ℓ1) curtailment and infeasibility solves.
//!
//! Problems are `minimize c·x` subject to row constraints and `x >= 0`.
//! Bland's rule is used throughout, so degenerate problems terminate.

use crate::error::GridError;

const PIVOT_EPS: f64 = 1e-10;
const COST_EPS: f64 = 1e-12;
const MAX_PIVOTS: usize = 50_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone)]
pub struct Constraint {
    pub coeffs: Vec<f64>,
    pub relation: Relation,
    pub rhs: f64,
}

#[derive(Debug, Clone, Default)]
pub struct LinearProgram {
    pub objective: Vec<f64>,
    pub constraints: Vec<Constraint>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LpOutcome {
    Optimal { x: Vec<f64>, objective: f64 },
    Infeasible,
    Unbounded,
}

impl LinearProgram {
    pub fn new(objective: Vec<f64>) -> Self {
        Self {
            objective,
            constraints: Vec::new(),
        }
    }

    pub fn constrain(&mut self, coeffs: Vec<f64>, relation: Relation, rhs: f64) -> &mut Self {
        assert_eq!(coeffs.len(), self.objective.len(), "constraint width");
        self.constraints.push(Constraint { coeffs, relation, rhs });
        self
    }

    pub fn solve(&self) -> Result<LpOutcome, GridError> {
        Tableau::build(self).run()
    }
}

struct Tableau {
    rows: Vec<Vec<f64>>,
    basis: Vec<usize>,
    n_vars: usize,
    /// Columns at and beyond this index are artificial.
    first_artificial: usize,
    cost: Vec<f64>,
}

impl Tableau {
    fn build(lp: &LinearProgram) -> Self {
        let n = lp.objective.len();
        let normalized: Vec<Constraint> = lp
            .constraints
            .iter()
            .map(|c| {
                if c.rhs < 0.0 {
                    Constraint {
                        coeffs: c.coeffs.iter().map(|a| -a).collect(),
                        relation: match c.relation {
                            Relation::Le => Relation::Ge,
                            Relation::Ge => Relation::Le,
                            Relation::Eq => Relation::Eq,
                        },
                        rhs: -c.rhs,
                    }
                } else {
                    c.clone()
                }
            })
            .collect();

        let n_slack = normalized.iter().filter(|c| c.relation != Relation::Eq).count();
        let n_art = normalized.iter().filter(|c| c.relation != Relation::Le).count();
        let width = n + n_slack + n_art + 1;
        let first_artificial = n + n_slack;

        let mut rows = Vec::with_capacity(normalized.len());
        let mut basis = Vec::with_capacity(normalized.len());
        let (mut next_slack, mut next_art) = (n, first_artificial);
        for c in &normalized {
            let mut row = vec![0.0; width];
            row[..n].copy_from_slice(&c.coeffs);
            row[width - 1] = c.rhs;
            match c.relation {
                Relation::Le => {
                    row[next_slack] = 1.0;
                    basis.push(next_slack);
                    next_slack += 1;
                }
                Relation::Ge => {
                    row[next_slack] = -1.0;
                    next_slack += 1;
                    row[next_art] = 1.0;
                    basis.push(next_art);
                    next_art += 1;
                }
                Relation::Eq => {
                    row[next_art] = 1.0;
                    basis.push(next_art);
                    next_art += 1;
                }
            }
            rows.push(row);
        }
        let mut cost = vec![0.0; width];
        cost[..n].copy_from_slice(&lp.objective);
        Self {
            rows,
            basis,
            n_vars: n,
            first_artificial,
            cost,
        }
    }

    fn width(&self) -> usize {
        self.cost.len()
    }

    /// Reduced-cost row for `cost` given the current basis; the last entry
    /// holds the negated objective value.
    fn reduced_costs(&self, cost: &[f64]) -> Vec<f64> {
        let mut d = cost.to_vec();
        for (row, &b) in self.rows.iter().zip(&self.basis) {
            let cb = cost[b];
            if cb != 0.0 {
                for (dj, aj) in d.iter_mut().zip(row) {
                    *dj -= cb * aj;
                }
            }
        }
        d
    }

    fn pivot(&mut self, d: &mut [f64], r: usize, c: usize) {
        let p = self.rows[r][c];
        for a in self.rows[r].iter_mut() {
            *a /= p;
        }
        let pivot_row = self.rows[r].clone();
        for (i, row) in self.rows.iter_mut().enumerate() {
            if i == r {
                continue;
            }
            let f = row[c];
            if f != 0.0 {
                for (a, b) in row.iter_mut().zip(&pivot_row) {
                    *a -= f * b;
                }
                row[c] = 0.0;
            }
        }
        let f = d[c];
        if f != 0.0 {
            for (a, b) in d.iter_mut().zip(&pivot_row) {
                *a -= f * b;
            }
            d[c] = 0.0;
        }
        self.basis[r] = c;
    }

    /// Runs simplex iterations over columns `< allowed`. Returns false when
    /// the problem is unbounded.
    fn iterate(&mut self, d: &mut [f64], allowed: usize) -> Result<bool, GridError> {
        let last = self.width() - 1;
        for _ in 0..MAX_PIVOTS {
            let Some(enter) = (0..allowed).find(|&j| d[j] < -COST_EPS) else {
                return Ok(true);
            };
            let mut leave: Option<(usize, f64)> = None;
            for (i, row) in self.rows.iter().enumerate() {
                let a = row[enter];
                if a > PIVOT_EPS {
                    let ratio = row[last] / a;
                    leave = match leave {
                        None => Some((i, ratio)),
                        Some((bi, br)) => {
                            let tie = (ratio - br).abs() <= 1e-12 * (1.0 + br.abs());
                            if ratio < br && !tie || tie && self.basis[i] < self.basis[bi] {
                                Some((i, ratio))
                            } else {
                                Some((bi, br))
                            }
                        }
                    };
                }
            }
            let Some((r, _)) = leave else {
                return Ok(false);
            };
            self.pivot(d, r, enter);
        }
        Err(GridError::Solver(format!("simplex exceeded {MAX_PIVOTS} pivots")))
    }

    fn run(mut self) -> Result<LpOutcome, GridError> {
        let width = self.width();
        let last = width - 1;

        if self.first_artificial < last {
            let mut phase1 = vec![0.0; width];
            for c in phase1.iter_mut().take(last).skip(self.first_artificial) {
                *c = 1.0;
            }
            let mut d = self.reduced_costs(&phase1);
            self.iterate(&mut d, last)?;
            let infeasibility = -d[last];
            let scale = 1.0 + self.rows.iter().map(|r| r[last].abs()).fold(0.0, f64::max);
            if infeasibility > 1e-9 * scale {
                return Ok(LpOutcome::Infeasible);
            }
            // Drive remaining (zero-level) artificials out of the basis.
            let mut i = 0;
            while i < self.rows.len() {
                if self.basis[i] >= self.first_artificial {
                    let replacement =
                        (0..self.first_artificial).find(|&j| self.rows[i][j].abs() > PIVOT_EPS);
                    match replacement {
                        Some(j) => {
                            self.pivot(&mut d, i, j);
                            i += 1;
                        }
                        None => {
                            self.rows.remove(i);
                            self.basis.remove(i);
                        }
                    }
                } else {
                    i += 1;
                }
            }
        }

        let cost = self.cost.clone();
        let mut d = self.reduced_costs(&cost);
        if !self.iterate(&mut d, self.first_artificial)? {
            return Ok(LpOutcome::Unbounded);
        }
        let mut x = vec![0.0; self.n_vars];
        for (row, &b) in self.rows.iter().zip(&self.basis) {
            if b < self.n_vars {
                x[b] = row[last].max(0.0);
            }
        }
        let objective = x.iter().zip(&self.cost).map(|(a, b)| a * b).sum();
        Ok(LpOutcome::Optimal { x, objective })
    }
}
