//! Real Schur decomposition `A = Q T Qᵀ`.
//!
//! General matrices go through Householder reduction to upper Hessenberg form
//! followed by Francis double-shift QR. Exactly symmetric matrices take the
//! tridiagonal route (Householder tridiagonalisation plus implicit QL), which
//! yields a diagonal `T` and is several times cheaper for the large graph
//! Laplacians used by the projection solver.

use super::matrix::{axpy, dot, Matrix};
use crate::error::{Error, Result};

const EPS: f64 = f64::EPSILON;

/// Iteration budget per dimension for the QR/QL sweeps.
pub const ITERATIONS_PER_DIM: usize = 30;

/// `A = Q T Qᵀ` with `Q` orthogonal and `T` quasi-upper-triangular.
#[derive(Debug, Clone, PartialEq)]
pub struct SchurForm {
    pub q: Matrix,
    pub t: Matrix,
}

/// One diagonal block of a quasi-triangular matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Block {
    pub start: usize,
    pub size: usize,
}

impl SchurForm {
    pub fn dim(&self) -> usize {
        self.t.rows()
    }

    /// Schur form of `c·A`, reusing `Q`.
    pub fn scaled(&self, c: f64) -> SchurForm {
        SchurForm { q: self.q.clone(), t: self.t.scale(c) }
    }

    /// Eigenvalues as `(re, im)` pairs read off the diagonal blocks.
    pub fn eigenvalues(&self) -> Vec<(f64, f64)> {
        let mut out = Vec::with_capacity(self.dim());
        for b in self.blocks() {
            let s = b.start;
            if b.size == 1 {
                out.push((self.t[(s, s)], 0.0));
            } else {
                let (a, bb, c, d) =
                    (self.t[(s, s)], self.t[(s, s + 1)], self.t[(s + 1, s)], self.t[(s + 1, s + 1)]);
                let mean = 0.5 * (a + d);
                let disc = 0.25 * (a - d) * (a - d) + bb * c;
                if disc >= 0.0 {
                    let r = disc.sqrt();
                    out.push((mean + r, 0.0));
                    out.push((mean - r, 0.0));
                } else {
                    let im = (-disc).sqrt();
                    out.push((mean, im));
                    out.push((mean, -im));
                }
            }
        }
        out
    }

    pub(crate) fn blocks(&self) -> Vec<Block> {
        quasi_blocks(&self.t)
    }

    /// `Q T Qᵀ`.
    pub fn reconstruct(&self) -> Matrix {
        self.q
            .matmul(&self.t)
            .and_then(|qt| qt.matmul_t(&self.q))
            .expect("Schur factors are square and conforming")
    }
}

pub(crate) fn quasi_blocks(t: &Matrix) -> Vec<Block> {
    let n = t.rows();
    let mut blocks = Vec::new();
    let mut i = 0;
    while i < n {
        if i + 1 < n && t[(i + 1, i)] != 0.0 {
            blocks.push(Block { start: i, size: 2 });
            i += 2;
        } else {
            blocks.push(Block { start: i, size: 1 });
            i += 1;
        }
    }
    blocks
}

/// Real Schur decomposition of a square matrix.
pub fn schur_decompose(a: &Matrix) -> Result<SchurForm> {
    if !a.is_square() {
        return Err(Error::shape("schur_decompose", format!("matrix is {:?}, not square", a.shape())));
    }
    if a.rows() == 0 {
        return Err(Error::shape("schur_decompose", "empty matrix"));
    }
    if !a.is_finite() {
        return Err(Error::NonFinite("schur_decompose input"));
    }
    let form = if is_exactly_symmetric(a) { symmetric_schur(a)? } else { general_schur(a)? };
    if !form.t.is_finite() || !form.q.is_finite() {
        return Err(Error::NonFinite("schur_decompose output"));
    }
    Ok(form)
}

fn is_exactly_symmetric(a: &Matrix) -> bool {
    let n = a.rows();
    (0..n).all(|i| (0..i).all(|j| a[(i, j)] == a[(j, i)]))
}

/// Householder vector for `x`: returns `(v, beta, alpha)` such that
/// `(I - beta v vᵀ) x = alpha e₁`, or `None` when `x` is already a multiple of `e₁`.
fn householder(x: &[f64]) -> Option<(Vec<f64>, f64, f64)> {
    let tail: f64 = x[1..].iter().map(|v| v * v).sum();
    if tail == 0.0 {
        return None;
    }
    let norm = (x[0] * x[0] + tail).sqrt();
    let alpha = if x[0] >= 0.0 { -norm } else { norm };
    let mut v = x.to_vec();
    v[0] -= alpha;
    let vtv = v[0] * v[0] + tail;
    Some((v, 2.0 / vtv, alpha))
}

fn general_schur(a: &Matrix) -> Result<SchurForm> {
    let n = a.rows();
    let mut h = a.clone();
    let mut q = Matrix::identity(n);

    // Hessenberg reduction.
    for k in 0..n.saturating_sub(2) {
        let x: Vec<f64> = (k + 1..n).map(|i| h[(i, k)]).collect();
        let Some((v, beta, alpha)) = householder(&x) else { continue };
        // left: rows k+1.., columns k..
        let mut w = vec![0.0; n - k];
        for (vi, i) in v.iter().zip(k + 1..n) {
            axpy(*vi, &h.row(i)[k..], &mut w);
        }
        for (vi, i) in v.iter().zip(k + 1..n) {
            axpy(-beta * vi, &w, &mut h.row_mut(i)[k..]);
        }
        h[(k + 1, k)] = alpha;
        for i in k + 2..n {
            h[(i, k)] = 0.0;
        }
        // right on H and on Q: columns k+1..
        for m in [&mut h, &mut q] {
            for r in 0..n {
                let row = &mut m.row_mut(r)[k + 1..];
                let s = dot(row, &v);
                axpy(-beta * s, &v, row);
            }
        }
    }

    francis_qr(&mut h, &mut q)?;

    for i in 0..n {
        for j in 0..i.saturating_sub(1) {
            h[(i, j)] = 0.0;
        }
    }
    Ok(SchurForm { q, t: h })
}

/// Francis double-shift QR on an upper Hessenberg matrix, accumulating into `v`.
fn francis_qr(h: &mut Matrix, v: &mut Matrix) -> Result<()> {
    let nn = h.rows();
    let budget = ITERATIONS_PER_DIM * nn;
    let mut total_iters = 0usize;
    let low = 0usize;
    let high = nn - 1;
    let mut exshift = 0.0;

    let mut norm = 0.0;
    for i in 0..nn {
        for j in i.saturating_sub(1)..nn {
            norm += h[(i, j)].abs();
        }
    }

    let mut n = nn as isize - 1;
    let mut iter = 0usize;
    let (mut p, mut q, mut r, mut s, mut z): (f64, f64, f64, f64, f64);
    let (mut w, mut x, mut y): (f64, f64, f64);
    while n >= low as isize {
        let nu = n as usize;
        // look for a single small subdiagonal element
        let mut l = nu;
        while l > low {
            s = h[(l - 1, l - 1)].abs() + h[(l, l)].abs();
            if s == 0.0 {
                s = norm;
            }
            if h[(l, l - 1)].abs() < EPS * s {
                break;
            }
            l -= 1;
        }

        if l == nu {
            // one root
            h[(nu, nu)] += exshift;
            if nu > low {
                h[(nu, nu - 1)] = 0.0;
            }
            n -= 1;
            iter = 0;
        } else if l == nu - 1 {
            // two roots
            w = h[(nu, nu - 1)] * h[(nu - 1, nu)];
            p = (h[(nu - 1, nu - 1)] - h[(nu, nu)]) / 2.0;
            q = p * p + w;
            z = q.abs().sqrt();
            h[(nu, nu)] += exshift;
            h[(nu - 1, nu - 1)] += exshift;
            if q >= 0.0 {
                // real pair: rotate to upper triangular
                z = if p >= 0.0 { p + z } else { p - z };
                x = h[(nu, nu - 1)];
                s = x.abs() + z.abs();
                p = x / s;
                q = z / s;
                r = (p * p + q * q).sqrt();
                p /= r;
                q /= r;
                for j in nu - 1..nn {
                    z = h[(nu - 1, j)];
                    h[(nu - 1, j)] = q * z + p * h[(nu, j)];
                    h[(nu, j)] = q * h[(nu, j)] - p * z;
                }
                for i in 0..=nu {
                    z = h[(i, nu - 1)];
                    h[(i, nu - 1)] = q * z + p * h[(i, nu)];
                    h[(i, nu)] = q * h[(i, nu)] - p * z;
                }
                for i in low..=high {
                    z = v[(i, nu - 1)];
                    v[(i, nu - 1)] = q * z + p * v[(i, nu)];
                    v[(i, nu)] = q * v[(i, nu)] - p * z;
                }
                h[(nu, nu - 1)] = 0.0;
            }
            if nu - 1 > low {
                h[(nu - 1, nu - 2)] = 0.0;
            }
            n -= 2;
            iter = 0;
        } else {
            total_iters += 1;
            if total_iters > budget {
                return Err(Error::NoConvergence { n: nn, budget });
            }
            x = h[(nu, nu)];
            y = 0.0;
            w = 0.0;
            if l < nu {
                y = h[(nu - 1, nu - 1)];
                w = h[(nu, nu - 1)] * h[(nu - 1, nu)];
            }
            // exceptional shifts
            if iter == 10 {
                exshift += x;
                for i in low..=nu {
                    h[(i, i)] -= x;
                }
                s = h[(nu, nu - 1)].abs() + h[(nu - 1, nu - 2)].abs();
                x = 0.75 * s;
                y = x;
                w = -0.4375 * s * s;
            }
            if iter == 30 {
                s = (y - x) / 2.0;
                s = s * s + w;
                if s > 0.0 {
                    s = s.sqrt();
                    if y < x {
                        s = -s;
                    }
                    s = x - w / ((y - x) / 2.0 + s);
                    for i in low..=nu {
                        h[(i, i)] -= s;
                    }
                    exshift += s;
                    x = 0.964;
                    y = x;
                    w = x;
                }
            }
            iter += 1;

            // look for two consecutive small subdiagonal elements
            let mut m = nu - 2;
            loop {
                z = h[(m, m)];
                r = x - z;
                s = y - z;
                p = (r * s - w) / h[(m + 1, m)] + h[(m, m + 1)];
                q = h[(m + 1, m + 1)] - z - r - s;
                r = h[(m + 2, m + 1)];
                s = p.abs() + q.abs() + r.abs();
                p /= s;
                q /= s;
                r /= s;
                if m == l {
                    break;
                }
                if h[(m, m - 1)].abs() * (q.abs() + r.abs())
                    < EPS * (p.abs() * (h[(m - 1, m - 1)].abs() + z.abs() + h[(m + 1, m + 1)].abs()))
                {
                    break;
                }
                m -= 1;
            }
            for i in m + 2..=nu {
                h[(i, i - 2)] = 0.0;
                if i > m + 2 {
                    h[(i, i - 3)] = 0.0;
                }
            }

            // double QR step on rows l..=n, columns m..=n
            for k in m..nu {
                let notlast = k != nu - 1;
                if k != m {
                    p = h[(k, k - 1)];
                    q = h[(k + 1, k - 1)];
                    r = if notlast { h[(k + 2, k - 1)] } else { 0.0 };
                    x = p.abs() + q.abs() + r.abs();
                    if x == 0.0 {
                        continue;
                    }
                    p /= x;
                    q /= x;
                    r /= x;
                } else {
                    x = 0.0;
                }
                s = (p * p + q * q + r * r).sqrt();
                if p < 0.0 {
                    s = -s;
                }
                if s != 0.0 {
                    if k != m {
                        h[(k, k - 1)] = -s * x;
                    } else if l != m {
                        h[(k, k - 1)] = -h[(k, k - 1)];
                    }
                    p += s;
                    x = p / s;
                    y = q / s;
                    z = r / s;
                    q /= p;
                    r /= p;

                    for j in k..nn {
                        p = h[(k, j)] + q * h[(k + 1, j)];
                        if notlast {
                            p += r * h[(k + 2, j)];
                            h[(k + 2, j)] -= p * z;
                        }
                        h[(k, j)] -= p * x;
                        h[(k + 1, j)] -= p * y;
                    }
                    for i in 0..=nu.min(k + 3) {
                        p = x * h[(i, k)] + y * h[(i, k + 1)];
                        if notlast {
                            p += z * h[(i, k + 2)];
                            h[(i, k + 2)] -= p * r;
                        }
                        h[(i, k)] -= p;
                        h[(i, k + 1)] -= p * q;
                    }
                    for i in low..=high {
                        p = x * v[(i, k)] + y * v[(i, k + 1)];
                        if notlast {
                            p += z * v[(i, k + 2)];
                            v[(i, k + 2)] -= p * r;
                        }
                        v[(i, k)] -= p;
                        v[(i, k + 1)] -= p * q;
                    }
                }
            }
        }
    }
    Ok(())
}

fn symmetric_schur(a: &Matrix) -> Result<SchurForm> {
    let n = a.rows();
    let mut s = a.clone();
    let mut reflectors: Vec<(usize, Vec<f64>, f64)> = Vec::new();
    let mut off = vec![0.0; n];

    for k in 0..n.saturating_sub(2) {
        let x = s.row(k)[k + 1..].to_vec();
        let Some((v, beta, alpha)) = householder(&x) else {
            off[k] = x[0];
            continue;
        };
        off[k] = alpha;
        let m = n - k - 1;
        // p = beta * S22 v
        let mut p = vec![0.0; m];
        for (pi, i) in p.iter_mut().zip(k + 1..n) {
            *pi = beta * dot(&s.row(i)[k + 1..], &v);
        }
        let kk = 0.5 * beta * dot(&p, &v);
        let w: Vec<f64> = p.iter().zip(&v).map(|(pi, vi)| pi - kk * vi).collect();
        for (ii, i) in (k + 1..n).enumerate() {
            let (vi, wi) = (v[ii], w[ii]);
            let row = &mut s.row_mut(i)[k + 1..];
            for j in 0..m {
                row[j] -= vi * w[j] + wi * v[j];
            }
        }
        reflectors.push((k, v, beta));
    }
    if n >= 2 {
        off[n - 2] = s[(n - 1, n - 2)];
    }
    let mut d: Vec<f64> = (0..n).map(|i| s[(i, i)]).collect();

    // Q = P_0 P_1 ... applied backwards to the identity.
    let mut q = Matrix::identity(n);
    for (k, v, beta) in reflectors.iter().rev() {
        let k = *k;
        let mut w = vec![0.0; n - k - 1];
        for (vi, i) in v.iter().zip(k + 1..n) {
            axpy(*vi, &q.row(i)[k + 1..], &mut w);
        }
        for (vi, i) in v.iter().zip(k + 1..n) {
            axpy(-beta * vi, &w, &mut q.row_mut(i)[k + 1..]);
        }
    }

    // rows of vt are the basis vectors
    let mut vt = q.transpose();
    tql2(&mut d, &mut off, &mut vt)?;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| d[i].total_cmp(&d[j]));
    let sorted_d: Vec<f64> = order.iter().map(|&i| d[i]).collect();
    let vt = vt.select_rows(&order);
    Ok(SchurForm { q: vt.transpose(), t: Matrix::from_diag(&sorted_d) })
}

/// Implicit QL on the symmetric tridiagonal `(d, e)` with `e[i] = T[i+1][i]`.
/// Rotations are applied to the rows of `vt`.
fn tql2(d: &mut [f64], e: &mut [f64], vt: &mut Matrix) -> Result<()> {
    let n = d.len();
    if n == 1 {
        return Ok(());
    }
    e[n - 1] = 0.0;
    let budget = ITERATIONS_PER_DIM * n;
    let mut total_iters = 0usize;
    let mut f = 0.0;
    let mut tst1: f64 = 0.0;
    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n {
            if e[m].abs() <= EPS * tst1 {
                break;
            }
            m += 1;
        }
        if m > l {
            loop {
                total_iters += 1;
                if total_iters > budget {
                    return Err(Error::NoConvergence { n, budget });
                }
                let mut g = d[l];
                let mut p = (d[l + 1] - g) / (2.0 * e[l]);
                let mut r = p.hypot(1.0);
                if p < 0.0 {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let mut h = g - d[l];
                for di in d.iter_mut().skip(l + 2) {
                    *di -= h;
                }
                f += h;

                p = d[m];
                let mut c = 1.0;
                let mut c2 = c;
                let mut c3 = c;
                let el1 = e[l + 1];
                let mut s = 0.0;
                let mut s2 = 0.0;
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    g = c * e[i];
                    h = c * p;
                    r = p.hypot(e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);
                    rotate_rows(vt, i, s, c);
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;
                if e[l].abs() <= EPS * tst1 {
                    break;
                }
            }
        }
        d[l] += f;
        e[l] = 0.0;
    }
    Ok(())
}

#[inline]
fn rotate_rows(vt: &mut Matrix, i: usize, s: f64, c: f64) {
    let n = vt.cols();
    let (first, second) = vt.as_mut_slice().split_at_mut((i + 1) * n);
    for (x, y) in first[i * n..].iter_mut().zip(&mut second[..n]) {
        let h = *y;
        *y = s * *x + c * h;
        *x = c * *x - s * h;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::oracle::jacobi_eigenvalues;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rng: &mut ChaCha8Rng, n: usize) -> Matrix {
        Matrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0))
    }

    fn check_invariants(a: &Matrix, f: &SchurForm) {
        let n = a.rows();
        let qtq = f.q.t_matmul(&f.q).unwrap();
        let orth = qtq.sub(&Matrix::identity(n)).unwrap().frobenius_norm();
        assert!(orth <= 1e-10 * (n as f64).sqrt(), "orthogonality {orth}");
        let rec = f.reconstruct().sub(a).unwrap().frobenius_norm();
        assert!(rec <= 1e-9 * a.frobenius_norm().max(1e-300), "reconstruction {rec}");
        for i in 0..n {
            for j in 0..i.saturating_sub(1) {
                assert_eq!(f.t[(i, j)], 0.0);
            }
        }
        // subdiagonal nonzeros must be isolated and belong to complex pairs
        for b in f.blocks() {
            if b.size == 2 {
                let s = b.start;
                let (p, q, r, t) = (f.t[(s, s)], f.t[(s, s + 1)], f.t[(s + 1, s)], f.t[(s + 1, s + 1)]);
                let disc = 0.25 * (p - t) * (p - t) + q * r;
                assert!(disc < 0.0, "2x2 block with real eigenvalues");
            }
        }
    }

    #[test]
    fn identity_is_its_own_schur_form() {
        let f = schur_decompose(&Matrix::identity(3)).unwrap();
        assert_eq!(f.q, Matrix::identity(3));
        assert_eq!(f.t, Matrix::identity(3));
    }

    #[test]
    fn diagonal_input() {
        let a = Matrix::from_diag(&[2.0, 5.0]);
        let f = schur_decompose(&a).unwrap();
        let mut ev: Vec<f64> = (0..2).map(|i| f.t[(i, i)]).collect();
        ev.sort_by(f64::total_cmp);
        assert_eq!(ev, vec![2.0, 5.0]);
        for i in 0..2 {
            for j in 0..2 {
                let v = f.q[(i, j)].abs();
                assert!(v == 0.0 || v == 1.0);
            }
        }
    }

    #[test]
    fn symmetric_matches_jacobi() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let b = random_matrix(&mut rng, 6);
        let a = b.add(&b.transpose()).unwrap();
        let f = schur_decompose(&a).unwrap();
        check_invariants(&a, &f);
        for i in 0..6 {
            for j in 0..6 {
                if i != j {
                    assert_eq!(f.t[(i, j)], 0.0);
                }
            }
        }
        let mut ours: Vec<f64> = (0..6).map(|i| f.t[(i, i)]).collect();
        ours.sort_by(f64::total_cmp);
        let oracle = jacobi_eigenvalues(&a).unwrap();
        for (x, y) in ours.iter().zip(&oracle) {
            assert!((x - y).abs() < 1e-8, "{x} vs {y}");
        }
    }

    #[test]
    fn general_random_invariants_over_many_seeds() {
        for seed in 0..120u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = 1 + (seed as usize % 12);
            let a = random_matrix(&mut rng, n);
            let f = schur_decompose(&a).unwrap();
            check_invariants(&a, &f);
        }
    }

    #[test]
    fn rotation_has_complex_block() {
        let a = Matrix::from_rows(&[[0.0, -1.0], [1.0, 0.0]]).unwrap();
        let f = schur_decompose(&a).unwrap();
        check_invariants(&a, &f);
        let ev = f.eigenvalues();
        assert!((ev[0].1.abs() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_non_square() {
        assert!(matches!(schur_decompose(&Matrix::zeros(2, 3)), Err(Error::Shape { .. })));
    }

    #[test]
    fn defective_and_zero_matrices() {
        let jordan = Matrix::from_rows(&[[1.0, 1.0, 0.0], [0.0, 1.0, 1.0], [0.0, 0.0, 1.0]]).unwrap();
        check_invariants(&jordan, &schur_decompose(&jordan).unwrap());
        let z = Matrix::zeros(4, 4);
        let f = schur_decompose(&z).unwrap();
        assert_eq!(f.t, z);
    }
}
