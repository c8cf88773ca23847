//! Exit probabilities for the full segment plus one extra particle.
//!
//! Stabilizing the full configuration on `C_n` with one extra particle at
//! `k` loses either one particle (through the left or the right boundary)
//! or two (one through each side). `SgrTable` holds the three
//! probabilities for every `k`, computed two independent ways: the closed
//! forms
//!
//! ```text
//! qL = (n-k+1)(n-k+2) / ((n+1)(n+2))
//! qR = k(k+1)         / ((n+1)(n+2))
//! qB = 2k(n-k+1)      / ((n+1)(n+2))
//! ```
//!
//! and a size-by-size recurrence solve
//! `qL_n(k) = (qL_n(k-1) + qL_n(k+1) + qL_{n-k}(1) qL_n(k-1)) / 3`,
//! whose tridiagonal systems are diagonally dominant and solved directly.

use crate::error::{Result, SandpileError};
use crate::linalg::solve_tridiagonal;
use crate::scalar::Scalar;

/// Exit probabilities on `C_n`, indexed by the extra particle's position
/// `k` in `0..=n+1`.
///
/// The boundary rows `k = 0` and `k = n + 1` store the conventions
/// `qL(0) = 1`, `qR(n+1) = 1` and zeros elsewhere, so boundary conditions
/// are testable data.
#[derive(Debug, Clone, PartialEq)]
pub struct SgrTable<S> {
    n: usize,
    ql: Vec<S>,
    qr: Vec<S>,
    qb: Vec<S>,
}

impl<S: Scalar> SgrTable<S> {
    /// Table filled from the closed forms.
    pub fn closed_form(n: usize) -> Result<SgrTable<S>> {
        check_n(n)?;
        let mut ql = Vec::with_capacity(n + 2);
        let mut qr = Vec::with_capacity(n + 2);
        let mut qb = Vec::with_capacity(n + 2);
        for k in 0..=n + 1 {
            let (l, r, b) = closed_form_triple(n, k);
            ql.push(l);
            qr.push(r);
            qb.push(b);
        }
        Ok(SgrTable { n, ql, qr, qb })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Probability that exactly one particle exits left.
    pub fn ql(&self, k: usize) -> &S {
        &self.ql[k]
    }

    /// Probability that exactly one particle exits right.
    pub fn qr(&self, k: usize) -> &S {
        &self.qr[k]
    }

    /// Probability that two particles exit, one through each side.
    pub fn qb(&self, k: usize) -> &S {
        &self.qb[k]
    }

    /// `(qL, qR, qB)` at `k`, cloned.
    pub fn triple(&self, k: usize) -> (S, S, S) {
        (self.ql[k].clone(), self.qr[k].clone(), self.qb[k].clone())
    }

    /// Rows `(k, qL, qR, qB)` over the full index range `0..=n+1`.
    pub fn rows(&self) -> impl Iterator<Item = (usize, &S, &S, &S)> {
        (0..=self.n + 1).map(move |k| (k, &self.ql[k], &self.qr[k], &self.qb[k]))
    }

    /// Interior sums `(sum qL, sum qR, sum qB)` over `k = 1..=n`; each
    /// equals `n / 3`.
    pub fn row_sums(&self) -> (S, S, S) {
        let sum = |v: &[S]| {
            v[1..=self.n]
                .iter()
                .fold(S::zero(), |acc, x| acc + x.clone())
        };
        (sum(&self.ql), sum(&self.qr), sum(&self.qb))
    }
}

fn check_n(n: usize) -> Result<()> {
    if n == 0 {
        return Err(SandpileError::InvalidParameter(
            "segment length n must be >= 1".into(),
        ));
    }
    Ok(())
}

fn closed_form_triple<S: Scalar>(n: usize, k: usize) -> (S, S, S) {
    let (n, k) = (n as i64, k as i64);
    let den = (n + 1) * (n + 2);
    (
        S::from_ratio((n - k + 1) * (n - k + 2), den),
        S::from_ratio(k * (k + 1), den),
        S::from_ratio(2 * k * (n - k + 1), den),
    )
}

/// Closed-form `(qL, qR, qB)` for the extra particle at `k` on `C_n`.
/// `k = 0` and `k = n + 1` return the boundary conventions.
pub fn sgr_closed_form<S: Scalar>(n: usize, k: usize) -> Result<(S, S, S)> {
    check_n(n)?;
    if k > n + 1 {
        return Err(SandpileError::InvalidParameter(format!(
            "position k must lie in 0..={}, got {k}",
            n + 1
        )));
    }
    Ok(closed_form_triple(n, k))
}

/// Exit-probability tables for every size `1..=max_n`, solved from the
/// recurrence rather than the closed forms.
///
/// The size-`n` recurrence couples to `qL_m(1)` for all `m < n`, so the
/// family is built bottom-up and kept around; [`crate::holes`] reuses it.
#[derive(Debug, Clone)]
pub struct SgrFamily<S> {
    tables: Vec<SgrTable<S>>,
}

impl<S: Scalar> SgrFamily<S> {
    /// Solve the recurrence for all sizes up to `max_n`.
    ///
    /// Each solution is substituted back into its recurrence; a residual
    /// above [`Scalar::tolerance`] raises [`SandpileError::SolverDiverged`],
    /// which would indicate an implementation bug (the systems are
    /// irreducibly diagonally dominant).
    pub fn solve(max_n: usize) -> Result<SgrFamily<S>> {
        check_n(max_n)?;
        let mut family = SgrFamily {
            tables: Vec::with_capacity(max_n),
        };
        for n in 1..=max_n {
            let table = family.solve_next(n)?;
            family.tables.push(table);
        }
        Ok(family)
    }

    pub fn max_n(&self) -> usize {
        self.tables.len()
    }

    pub fn table(&self, n: usize) -> &SgrTable<S> {
        &self.tables[n - 1]
    }

    /// `qL_m(1)`, extended by `qL_0(1) = 0` (position 1 of an empty
    /// segment is its right boundary).
    fn ql_first(&self, m: usize) -> S {
        if m == 0 {
            S::zero()
        } else {
            self.tables[m - 1].ql[1].clone()
        }
    }

    fn solve_next(&self, n: usize) -> Result<SgrTable<S>> {
        let three = S::from_ratio(3, 1);
        // Split coefficients c_k = qL_{n-k}(1), k = 1..=n.
        let c: Vec<S> = (1..=n).map(|k| self.ql_first(n - k)).collect();

        // Row k: -(1 + c_k) x_{k-1} + 3 x_k - x_{k+1} = 0, with x_0 = 1
        // folded into the first right-hand side and x_{n+1} = 0.
        let diag = vec![three.clone(); n];
        let sub: Vec<S> = (1..n).map(|i| -(S::one() + c[i].clone())).collect();
        let sup = vec![-S::one(); n.saturating_sub(1)];
        let mut rhs = vec![S::zero(); n];
        rhs[0] = S::one() + c[0].clone();

        let interior = solve_tridiagonal(&sub, &diag, &sup, &rhs)?;

        let mut ql = Vec::with_capacity(n + 2);
        ql.push(S::one());
        ql.extend(interior);
        ql.push(S::zero());

        // Residual of the recurrence itself, as an implementation check.
        let tol = S::tolerance();
        for k in 1..=n {
            let residual = three.clone() * ql[k].clone()
                - (S::one() + c[k - 1].clone()) * ql[k - 1].clone()
                - ql[k + 1].clone();
            if residual.abs() > tol {
                return Err(SandpileError::SolverDiverged {
                    residual: residual.approx(),
                });
            }
        }

        // qR by reflection symmetry, qB by complement.
        let qr: Vec<S> = (0..=n + 1).map(|k| ql[n + 1 - k].clone()).collect();
        let qb: Vec<S> = (0..=n + 1)
            .map(|k| S::one() - ql[k].clone() - qr[k].clone())
            .collect();
        Ok(SgrTable { n, ql, qr, qb })
    }
}
