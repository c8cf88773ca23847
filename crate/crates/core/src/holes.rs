//! Hole probabilities: where the empty vertex sits when two particles are
//! lost.
//!
//! When stabilizing the full configuration on `C_n` plus one particle at
//! `i` loses two particles, exactly one vertex `j` ends empty. The closed
//! form `h = 2i(n-i+1) / (n(n+1)(n+2))` does not depend on `j`; the
//! recurrence route solves, for each `j`, a coupled pair of relations:
//! a bulk relation expressing `h_n^j(i)` through boundary values and
//! smaller systems, and a boundary relation at `i = n`. Eliminating
//! `h_n^j(n-1)` between the bulk relation at `i = n - 1` and the boundary
//! relation pins the scalar `h_n^j(n)` (the coefficient `qR_{n-1}(n-1)/3`
//! is below one), after which the bulk relation yields every `i < n`.

use crate::error::{Result, SandpileError};
use crate::gambler::SgrFamily;
use crate::scalar::Scalar;

/// Hole probabilities on `C_n`, indexed by `(i, j)`: extra particle at
/// `i`, hole at `j`, both in `1..=n`.
#[derive(Debug, Clone, PartialEq)]
pub struct HoleTable<S> {
    n: usize,
    h: Vec<S>,
}

impl<S: Scalar> HoleTable<S> {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn h(&self, i: usize, j: usize) -> &S {
        debug_assert!(i >= 1 && i <= self.n && j >= 1 && j <= self.n);
        &self.h[(i - 1) * self.n + (j - 1)]
    }

    /// `sum_j h(i, j)`; equals the two-exit probability `qB_n(i)`.
    pub fn row_sum(&self, i: usize) -> S {
        (1..=self.n).fold(S::zero(), |acc, j| acc + self.h(i, j).clone())
    }

    /// `max_j h(i, j) - min_j h(i, j)`; zero when the hole location is
    /// exactly uniform.
    pub fn row_spread(&self, i: usize) -> S {
        let row = &self.h[(i - 1) * self.n..i * self.n];
        let mut min = row[0].clone();
        let mut max = row[0].clone();
        for v in &row[1..] {
            if *v < min {
                min = v.clone();
            }
            if *v > max {
                max = v.clone();
            }
        }
        max - min
    }

    /// Rows `(i, j, h)` in lexicographic order.
    pub fn rows(&self) -> impl Iterator<Item = (usize, usize, &S)> {
        let n = self.n;
        (1..=n).flat_map(move |i| (1..=n).map(move |j| (i, j, self.h(i, j))))
    }
}

fn check_index(n: usize, name: &str, v: usize) -> Result<()> {
    if v == 0 || v > n {
        return Err(SandpileError::InvalidParameter(format!(
            "{name} must lie in 1..={n}, got {v}"
        )));
    }
    Ok(())
}

/// Closed-form hole probability `2i(n-i+1) / (n(n+1)(n+2))`; independent
/// of `j`, which only gets validated.
pub fn hole_closed_form<S: Scalar>(n: usize, i: usize, j: usize) -> Result<S> {
    if n == 0 {
        return Err(SandpileError::InvalidParameter(
            "segment length n must be >= 1".into(),
        ));
    }
    check_index(n, "start position i", i)?;
    check_index(n, "hole position j", j)?;
    let (n, i) = (n as i64, i as i64);
    Ok(S::from_ratio(2 * i * (n - i + 1), n * (n + 1) * (n + 2)))
}

/// Hole tables for every size `1..=max_n`, solved from the recurrences,
/// together with the exit-probability family they are built on.
#[derive(Debug, Clone)]
pub struct HoleFamily<S> {
    tables: Vec<HoleTable<S>>,
    sgr: SgrFamily<S>,
}

impl<S: Scalar> HoleFamily<S> {
    /// Solve the hole recurrences for all sizes up to `max_n`.
    ///
    /// The base case `h_1^1(1) = 1/3` is the two-sided branch of a single
    /// toppling; every larger size reduces to smaller ones.
    pub fn solve(max_n: usize) -> Result<HoleFamily<S>> {
        let sgr = SgrFamily::solve(max_n)?;
        let mut family = HoleFamily {
            tables: Vec::with_capacity(max_n),
            sgr,
        };
        family.tables.push(HoleTable {
            n: 1,
            h: vec![S::from_ratio(1, 3)],
        });
        for n in 2..=max_n {
            let table = family.solve_next(n)?;
            family.tables.push(table);
        }
        Ok(family)
    }

    pub fn max_n(&self) -> usize {
        self.tables.len()
    }

    pub fn table(&self, n: usize) -> &HoleTable<S> {
        &self.tables[n - 1]
    }

    pub fn sgr(&self) -> &SgrFamily<S> {
        &self.sgr
    }

    /// The bulk-relation terms that involve only systems smaller than `n`:
    /// `sum_{x<j} h_{n-1}^x(i) h_{n-x}^{j-x}(n-x) + h_{n-1}^j(i) qR_{n-j}(n-j)`.
    fn bulk_tail(&self, n: usize, i: usize, j: usize) -> S {
        let prev = &self.tables[n - 2];
        let mut acc = S::zero();
        for x in 1..j {
            let sub = &self.tables[n - x - 1];
            acc = acc + prev.h(i, x).clone() * sub.h(n - x, j - x).clone();
        }
        if j < n {
            acc = acc + prev.h(i, j).clone() * self.sgr.table(n - j).qr(n - j).clone();
        }
        acc
    }

    fn solve_next(&self, n: usize) -> Result<HoleTable<S>> {
        let third = S::from_ratio(1, 3);
        let prev = &self.tables[n - 2];
        let sgr_n1 = self.sgr.table(n - 1);
        // Coefficient of h_n^j(n) after eliminating h_n^j(n-1); always < 1.
        let a = third.clone() * sgr_n1.qr(n - 1).clone();

        let mut h = vec![S::zero(); n * n];
        for j in 1..=n {
            let k_j = self.bulk_tail(n, n - 1, j);
            let c_j = if j < n {
                third.clone() * prev.h(n - 1, j).clone()
            } else {
                third.clone() * sgr_n1.ql(n - 1).clone()
            };
            let boundary = (third.clone() * k_j + c_j.clone()) / (S::one() - a.clone());
            h[(n - 1) * n + (j - 1)] = boundary.clone();

            for i in 1..n {
                let val = sgr_n1.qr(i).clone() * boundary.clone() + self.bulk_tail(n, i, j);
                h[(i - 1) * n + (j - 1)] = val;
            }

            // Boundary-relation residual; the bulk relation holds by
            // construction for i < n.
            let lhs = h[(n - 1) * n + (j - 1)].clone();
            let rhs = third.clone() * h[(n - 2) * n + (j - 1)].clone() + c_j;
            let residual = lhs - rhs;
            if residual.abs() > S::tolerance() {
                return Err(SandpileError::SolverDiverged {
                    residual: residual.approx(),
                });
            }
        }
        Ok(HoleTable { n, h })
    }
}
