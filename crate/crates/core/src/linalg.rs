//! Direct linear solvers, generic over the scalar type.

use crate::error::{Result, SandpileError};
use crate::scalar::Scalar;

/// Solve a tridiagonal system by forward elimination and back substitution.
///
/// The matrix has `diag` on the main diagonal (length `n`), `sub[i]` at
/// `(i+1, i)` and `sup[i]` at `(i, i+1)` (both length `n - 1`). No pivoting
/// is performed; the systems solved here are diagonally dominant.
pub fn solve_tridiagonal<S: Scalar>(sub: &[S], diag: &[S], sup: &[S], rhs: &[S]) -> Result<Vec<S>> {
    let n = diag.len();
    assert!(n > 0);
    assert_eq!(rhs.len(), n);
    if n > 1 {
        assert_eq!(sub.len(), n - 1);
        assert_eq!(sup.len(), n - 1);
    }

    // sup and rhs, rescaled by the running pivot.
    let mut c = vec![S::zero(); n.saturating_sub(1)];
    let mut d = vec![S::zero(); n];

    let pivot = diag[0].clone();
    if pivot.is_zero() {
        return Err(SandpileError::SingularSystem);
    }
    if n > 1 {
        c[0] = sup[0].clone() / pivot.clone();
    }
    d[0] = rhs[0].clone() / pivot;

    for i in 1..n {
        let mut piv = diag[i].clone();
        if i - 1 < c.len() {
            piv = piv - sub[i - 1].clone() * c[i - 1].clone();
        }
        if piv.is_zero() {
            return Err(SandpileError::SingularSystem);
        }
        if i < n - 1 {
            c[i] = sup[i].clone() / piv.clone();
        }
        d[i] = (rhs[i].clone() - sub[i - 1].clone() * d[i - 1].clone()) / piv;
    }

    let mut x = d;
    for i in (0..n - 1).rev() {
        let upd = x[i].clone() - c[i].clone() * x[i + 1].clone();
        x[i] = upd;
    }
    Ok(x)
}

/// Solve a dense system `A x = b` by Gaussian elimination with partial
/// pivoting. Consumes the inputs. Multipliers that are exactly zero are
/// skipped, which keeps exact-rational solves cheap on sparse rows.
#[allow(clippy::needless_range_loop)]
pub fn solve_dense<S: Scalar>(mut a: Vec<Vec<S>>, mut b: Vec<S>) -> Result<Vec<S>> {
    let n = a.len();
    assert!(n > 0);
    assert_eq!(b.len(), n);
    for row in &a {
        assert_eq!(row.len(), n);
    }

    for col in 0..n {
        let pivot_row = (col..n)
            .filter(|&r| !a[r][col].is_zero())
            .max_by(|&r, &s| {
                a[r][col]
                    .abs()
                    .partial_cmp(&a[s][col].abs())
                    .unwrap_or(std::cmp::Ordering::Equal)
            })
            .ok_or(SandpileError::SingularSystem)?;
        a.swap(col, pivot_row);
        b.swap(col, pivot_row);

        let pivot = a[col][col].clone();
        for row in col + 1..n {
            if a[row][col].is_zero() {
                continue;
            }
            let factor = a[row][col].clone() / pivot.clone();
            a[row][col] = S::zero();
            for k in col + 1..n {
                let upd = a[row][k].clone() - factor.clone() * a[col][k].clone();
                a[row][k] = upd;
            }
            let upd = b[row].clone() - factor * b[col].clone();
            b[row] = upd;
        }
    }

    let mut x = vec![S::zero(); n];
    for row in (0..n).rev() {
        let mut acc = b[row].clone();
        for col in row + 1..n {
            acc = acc - a[row][col].clone() * x[col].clone();
        }
        x[row] = acc / a[row][row].clone();
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Exact;

    #[test]
    fn tridiagonal_small_float() {
        // [2 1 0; 1 2 1; 0 1 2] x = [4, 8, 8] -> x = [1, 2, 3]
        let x =
            solve_tridiagonal::<f64>(&[1.0, 1.0], &[2.0, 2.0, 2.0], &[1.0, 1.0], &[4.0, 8.0, 8.0])
                .unwrap();
        for (got, want) in x.iter().zip([1.0, 2.0, 3.0]) {
            assert!((got - want).abs() < 1e-12);
        }
    }

    #[test]
    fn tridiagonal_exact_matches_dense() {
        let sub = vec![Exact::from_ratio(1, 2), Exact::from_ratio(-1, 3)];
        let diag = vec![
            Exact::from_ratio(3, 1),
            Exact::from_ratio(4, 1),
            Exact::from_ratio(5, 1),
        ];
        let sup = vec![Exact::from_ratio(-1, 1), Exact::from_ratio(2, 5)];
        let rhs = vec![
            Exact::from_ratio(1, 1),
            Exact::from_ratio(0, 1),
            Exact::from_ratio(7, 2),
        ];
        let x = solve_tridiagonal(&sub, &diag, &sup, &rhs).unwrap();

        let a = vec![
            vec![diag[0].clone(), sup[0].clone(), Exact::from_ratio(0, 1)],
            vec![sub[0].clone(), diag[1].clone(), sup[1].clone()],
            vec![Exact::from_ratio(0, 1), sub[1].clone(), diag[2].clone()],
        ];
        let y = solve_dense(a, rhs).unwrap();
        assert_eq!(x, y);
    }

    #[test]
    fn dense_requires_pivoting() {
        // Zero leading pivot forces a row swap.
        let a = vec![vec![0.0, 1.0], vec![1.0, 0.0]];
        let x = solve_dense(a, vec![2.0, 3.0]).unwrap();
        assert_eq!(x, vec![3.0, 2.0]);
    }

    #[test]
    fn dense_detects_singular() {
        let a = vec![vec![1.0, 2.0], vec![2.0, 4.0]];
        assert!(matches!(
            solve_dense(a, vec![1.0, 2.0]),
            Err(SandpileError::SingularSystem)
        ));
    }
}
