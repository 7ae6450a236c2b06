//! Slow, independent reference solvers used to cross-check the fast paths.
//!
//! Nothing here shares code with the Schur / Bartels–Stewart implementation.

use super::matrix::Matrix;
use crate::error::{Error, Result};

/// Largest `m·n` the dense Kronecker oracle accepts.
pub const ORACLE_MAX_UNKNOWNS: usize = 400;

/// Solves `A X + X B = C` through the `(mn)×(mn)` system
/// `(I ⊗ A + Bᵀ ⊗ I) vec(X) = vec(C)` with partial-pivoting Gaussian elimination.
pub fn sylvester_oracle(a: &Matrix, b: &Matrix, c: &Matrix) -> Result<Matrix> {
    let (m, n) = c.shape();
    if !a.is_square() || !b.is_square() || a.rows() != m || b.rows() != n {
        return Err(Error::shape(
            "sylvester_oracle",
            format!("A {:?}, B {:?}, C {:?}", a.shape(), b.shape(), c.shape()),
        ));
    }
    let size = m * n;
    if size > ORACLE_MAX_UNKNOWNS {
        return Err(Error::param("m*n", format!("{size} exceeds oracle limit {ORACLE_MAX_UNKNOWNS}")));
    }
    // column-major vec: unknown (i, j) lives at i + j*m
    let idx = |i: usize, j: usize| i + j * m;
    let mut sys = vec![vec![0.0; size + 1]; size];
    for i in 0..m {
        for j in 0..n {
            let r = idx(i, j);
            for k in 0..m {
                sys[r][idx(k, j)] += a[(i, k)];
            }
            for k in 0..n {
                sys[r][idx(i, k)] += b[(k, j)];
            }
            sys[r][size] = c[(i, j)];
        }
    }
    let scale = sys.iter().flat_map(|r| r[..size].iter()).fold(0.0f64, |s, v| s.max(v.abs()));
    let tol = 1e-12 * scale.max(1.0);

    for col in 0..size {
        let mut piv = col;
        for r in col + 1..size {
            if sys[r][col].abs() > sys[piv][col].abs() {
                piv = r;
            }
        }
        if sys[piv][col].abs() <= tol {
            return Err(Error::NoUniqueSolution { gap: sys[piv][col].abs(), tol });
        }
        sys.swap(col, piv);
        let pivot_row = sys[col].clone();
        for row in sys.iter_mut().skip(col + 1) {
            let f = row[col] / pivot_row[col];
            if f != 0.0 {
                for (x, p) in row[col..].iter_mut().zip(&pivot_row[col..]) {
                    *x -= f * p;
                }
            }
        }
    }
    let mut v = vec![0.0; size];
    for r in (0..size).rev() {
        let mut s = sys[r][size];
        for k in r + 1..size {
            s -= sys[r][k] * v[k];
        }
        v[r] = s / sys[r][r];
    }
    Ok(Matrix::from_fn(m, n, |i, j| v[idx(i, j)]))
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, ascending.
pub fn jacobi_eigenvalues(a: &Matrix) -> Result<Vec<f64>> {
    if !a.is_square() {
        return Err(Error::shape("jacobi_eigenvalues", format!("{:?}", a.shape())));
    }
    let n = a.rows();
    let scale = a.max_abs().max(1e-300);
    for i in 0..n {
        for j in 0..i {
            if (a[(i, j)] - a[(j, i)]).abs() > 1e-10 * scale {
                return Err(Error::Invalid("jacobi_eigenvalues requires a symmetric matrix".into()));
            }
        }
    }
    let mut s: Vec<Vec<f64>> = (0..n).map(|i| a.row(i).to_vec()).collect();
    for _sweep in 0..100 {
        let off: f64 = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| s[i][j] * s[i][j])
            .sum();
        if off.sqrt() <= 1e-15 * scale * n as f64 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if s[p][q] == 0.0 {
                    continue;
                }
                let theta = (s[q][q] - s[p][p]) / (2.0 * s[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let sn = t * c;
                for k in 0..n {
                    let (skp, skq) = (s[k][p], s[k][q]);
                    s[k][p] = c * skp - sn * skq;
                    s[k][q] = sn * skp + c * skq;
                }
                for k in 0..n {
                    let (spk, sqk) = (s[p][k], s[q][k]);
                    s[p][k] = c * spk - sn * sqk;
                    s[q][k] = sn * spk + c * sqk;
                }
            }
        }
    }
    let mut ev: Vec<f64> = (0..n).map(|i| s[i][i]).collect();
    ev.sort_by(f64::total_cmp);
    Ok(ev)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trivial_oracle_cases() {
        let one = Matrix::from_rows(&[[1.0]]).unwrap();
        let x = sylvester_oracle(&one, &one, &Matrix::from_rows(&[[4.0]]).unwrap()).unwrap();
        assert_eq!(x[(0, 0)], 2.0);
        let i2 = Matrix::identity(2);
        let x = sylvester_oracle(&i2, &i2, &i2.scale(2.0)).unwrap();
        assert_eq!(x, i2);
    }

    #[test]
    fn oracle_size_limit() {
        let a = Matrix::identity(21);
        let b = Matrix::identity(20);
        assert!(sylvester_oracle(&a, &b, &Matrix::zeros(21, 20)).is_err());
    }

    #[test]
    fn jacobi_on_known_spectrum() {
        let a = Matrix::from_rows(&[[2.0, 1.0], [1.0, 2.0]]).unwrap();
        let ev = jacobi_eigenvalues(&a).unwrap();
        assert!((ev[0] - 1.0).abs() < 1e-14 && (ev[1] - 3.0).abs() < 1e-14);
    }
}
