//! Dense revised simplex for `min cᵀx  s.t.  A x = b`, with each variable
//! either nonnegative or free.
//!
//! Phase 1 starts from an all-artificial basis. Pricing and the ratio test
//! follow Bland's rule, so the pivot sequence depends only on the input.
//! The basis is refactored from scratch on every iteration; problem sizes
//! here are at most a few hundred rows.

use crate::error::{Error, Result};
use crate::linalg::{DenseMatrix, Lu};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum VarKind {
    NonNeg,
    Free,
}

#[derive(Clone, Debug)]
pub(crate) struct EqualityLp {
    pub a: DenseMatrix,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
    pub kinds: Vec<VarKind>,
}

#[derive(Clone, Debug)]
pub(crate) struct LpResult {
    pub x: Vec<f64>,
    /// Row duals of the original (unflipped) rows: `c - Aᵀy = reduced`.
    pub duals: Vec<f64>,
    pub reduced: Vec<f64>,
    /// Basic column per row; indices `>= n` are artificial.
    pub basis: Vec<usize>,
    pub objective: f64,
}

const PIVOT_TOL: f64 = 1e-9;
const MAX_ITER: usize = 100_000;

struct Tableau<'a> {
    lp: &'a EqualityLp,
    /// Row signs applied so that the working right-hand side is nonnegative.
    sign: Vec<f64>,
    n: usize,
    m: usize,
    basis: Vec<usize>,
    opt_tol: f64,
}

enum Step {
    Optimal,
    Pivoted,
}

impl<'a> Tableau<'a> {
    fn column(&self, j: usize, out: &mut [f64]) {
        if j >= self.n {
            out.iter_mut().for_each(|v| *v = 0.0);
            out[j - self.n] = 1.0;
        } else {
            for i in 0..self.m {
                out[i] = self.sign[i] * self.lp.a[(i, j)];
            }
        }
    }

    fn rhs(&self) -> Vec<f64> {
        self.lp.b.iter().zip(&self.sign).map(|(b, s)| b * s).collect()
    }

    fn factor(&self) -> Result<Lu> {
        let m = self.m;
        let mut data = vec![0.0; m * m];
        let mut col = vec![0.0; m];
        for (r, &j) in self.basis.iter().enumerate() {
            self.column(j, &mut col);
            for i in 0..m {
                data[i * m + r] = col[i];
            }
        }
        let lu = Lu::factor_square(m, data);
        if m > 0 && !lu.is_nonsingular(1e-13) {
            return Err(Error::NumericalFailure("simplex basis became singular".into()));
        }
        Ok(lu)
    }

    fn is_free(&self, j: usize) -> bool {
        j < self.n && self.lp.kinds[j] == VarKind::Free
    }

    /// Smallest-index ratio test along `x_B - t·dir·w`; free basics never block.
    /// Artificial basics block in either direction when `pin_artificial`.
    fn ratio_test(&self, xb: &[f64], w: &[f64], dir: f64, pin_artificial: bool) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for r in 0..self.m {
            let j = self.basis[r];
            if self.is_free(j) {
                continue;
            }
            let rate = dir * w[r];
            let ratio = if j >= self.n && pin_artificial {
                if rate.abs() > PIVOT_TOL {
                    0.0
                } else {
                    continue;
                }
            } else if rate > PIVOT_TOL {
                xb[r].max(0.0) / rate
            } else {
                continue;
            };
            best = match best {
                None => Some((r, ratio)),
                Some((br, bv)) => {
                    let tie = (ratio - bv).abs() <= 1e-12 * (1.0 + bv.abs());
                    if ratio < bv && !tie || tie && self.basis[r] < self.basis[br] {
                        Some((r, ratio))
                    } else {
                        Some((br, bv))
                    }
                }
            };
        }
        best.map(|(r, _)| r)
    }

    fn step(&mut self, cost: &[f64], allow_artificial_entry: bool, pin_artificial: bool) -> Result<Step> {
        let lu = self.factor()?;
        let mut xb = self.rhs();
        lu.solve_in_place(&mut xb);
        let mut y: Vec<f64> = self.basis.iter().map(|&j| cost[j]).collect();
        lu.solve_transpose_in_place(&mut y);

        let mut in_basis = vec![false; self.n + self.m];
        for &j in &self.basis {
            in_basis[j] = true;
        }
        let total = if allow_artificial_entry { self.n + self.m } else { self.n };
        let mut col = vec![0.0; self.m];
        let mut entering = None;
        for j in 0..total {
            if in_basis[j] {
                continue;
            }
            self.column(j, &mut col);
            let d = cost[j] - col.iter().zip(&y).map(|(a, b)| a * b).sum::<f64>();
            if d < -self.opt_tol || (self.is_free(j) && d > self.opt_tol) {
                entering = Some((j, if d < 0.0 { 1.0 } else { -1.0 }));
                break;
            }
        }
        let Some((j, dir)) = entering else {
            return Ok(Step::Optimal);
        };
        self.column(j, &mut col);
        lu.solve_in_place(&mut col);
        match self.ratio_test(&xb, &col, dir, pin_artificial) {
            Some(r) => {
                self.basis[r] = j;
                Ok(Step::Pivoted)
            }
            None => Err(Error::Unbounded),
        }
    }

    fn run(&mut self, cost: &[f64], allow_artificial_entry: bool, pin_artificial: bool) -> Result<()> {
        for _ in 0..MAX_ITER {
            if let Step::Optimal = self.step(cost, allow_artificial_entry, pin_artificial)? {
                return Ok(());
            }
        }
        Err(Error::NumericalFailure("simplex iteration limit reached".into()))
    }

    /// Replaces zero-level artificial basics by structural columns where the
    /// row allows it. Rows where no structural column has a pivot are
    /// redundant and keep their artificial.
    fn drive_out_artificials(&mut self) -> Result<()> {
        for r in 0..self.m {
            if self.basis[r] < self.n {
                continue;
            }
            let lu = self.factor()?;
            let mut rho = vec![0.0; self.m];
            rho[r] = 1.0;
            lu.solve_transpose_in_place(&mut rho);
            let mut in_basis = vec![false; self.n];
            for &j in &self.basis {
                if j < self.n {
                    in_basis[j] = true;
                }
            }
            let mut col = vec![0.0; self.m];
            let mut pick: Option<(usize, f64)> = None;
            for j in 0..self.n {
                if in_basis[j] {
                    continue;
                }
                self.column(j, &mut col);
                let v: f64 = col.iter().zip(&rho).map(|(a, b)| a * b).sum::<f64>().abs();
                if v > PIVOT_TOL && pick.map_or(true, |(_, bv)| v > bv) {
                    pick = Some((j, v));
                }
            }
            if let Some((j, _)) = pick {
                self.basis[r] = j;
            }
        }
        Ok(())
    }

    /// Pivots nonbasic free variables into the basis. At an optimum their
    /// reduced cost is zero, so the objective does not change.
    fn crash_free_variables(&mut self) -> Result<()> {
        for j in 0..self.n {
            if !self.is_free(j) || self.basis.contains(&j) {
                continue;
            }
            let lu = self.factor()?;
            let mut xb = self.rhs();
            lu.solve_in_place(&mut xb);
            let mut w = vec![0.0; self.m];
            self.column(j, &mut w);
            lu.solve_in_place(&mut w);
            let r = self
                .ratio_test(&xb, &w, 1.0, true)
                .or_else(|| self.ratio_test(&xb, &w, -1.0, true))
                .ok_or_else(|| {
                    Error::NumericalFailure(format!("free variable {j} cannot enter the basis"))
                })?;
            self.basis[r] = j;
        }
        Ok(())
    }
}

pub(crate) fn solve(lp: &EqualityLp, opt_tol: f64, feas_tol: f64) -> Result<LpResult> {
    let (m, n) = (lp.a.rows(), lp.a.cols());
    if lp.b.len() != m || lp.c.len() != n || lp.kinds.len() != n {
        return Err(Error::DimensionMismatch("LP data".into()));
    }
    let sign: Vec<f64> = lp.b.iter().map(|&b| if b < 0.0 { -1.0 } else { 1.0 }).collect();
    let mut t = Tableau {
        lp,
        sign,
        n,
        m,
        basis: (n..n + m).collect(),
        opt_tol,
    };

    let mut phase1 = vec![0.0; n + m];
    phase1[n..].iter_mut().for_each(|v| *v = 1.0);
    t.run(&phase1, false, false)?;
    let lu = t.factor()?;
    let mut xb = t.rhs();
    lu.solve_in_place(&mut xb);
    let infeasibility: f64 = t
        .basis
        .iter()
        .zip(&xb)
        .filter(|(&j, _)| j >= n)
        .map(|(_, v)| v.max(0.0))
        .sum();
    let scale = 1.0 + lp.b.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if infeasibility > feas_tol * scale {
        return Err(Error::Infeasible);
    }
    t.drive_out_artificials()?;

    let mut phase2 = lp.c.clone();
    phase2.extend(std::iter::repeat(0.0).take(m));
    t.run(&phase2, false, true)?;
    t.crash_free_variables()?;

    let lu = t.factor()?;
    let mut xb = t.rhs();
    lu.solve_in_place(&mut xb);
    let mut x = vec![0.0; n];
    for (r, &j) in t.basis.iter().enumerate() {
        if j < n {
            x[j] = if lp.kinds[j] == VarKind::NonNeg { xb[r].max(0.0) } else { xb[r] };
        }
    }
    let mut y: Vec<f64> = t.basis.iter().map(|&j| phase2[j]).collect();
    lu.solve_transpose_in_place(&mut y);
    let duals: Vec<f64> = y.iter().zip(&t.sign).map(|(v, s)| v * s).collect();
    let reduced: Vec<f64> = (0..n)
        .map(|j| lp.c[j] - (0..m).map(|i| lp.a[(i, j)] * duals[i]).sum::<f64>())
        .collect();
    let objective = lp.c.iter().zip(&x).map(|(c, v)| c * v).sum();
    Ok(LpResult {
        x,
        duals,
        reduced,
        basis: t.basis,
        objective,
    })
}
