//! Bartels–Stewart solver for `A X + X B = C`.

use super::matrix::Matrix;
use super::schur::{quasi_blocks, schur_decompose, Block, SchurForm};
use crate::error::{Error, Result};

/// Relative residual accepted for a solve.
pub const RESIDUAL_TOL: f64 = 1e-8;
const ABS_FLOOR: f64 = 1e-12;

/// One side of a Sylvester operator: `scale · matrix`, with the Schur form of `matrix`.
///
/// Keeping the scale separate lets a caller factor a large matrix once and
/// reuse it for every multiple `c·M` (the graph term of the projection solver).
#[derive(Debug, Clone, Copy)]
pub struct OperatorSide<'a> {
    pub matrix: &'a Matrix,
    pub schur: &'a SchurForm,
    pub scale: f64,
}

impl<'a> OperatorSide<'a> {
    pub fn new(matrix: &'a Matrix, schur: &'a SchurForm) -> Self {
        OperatorSide { matrix, schur, scale: 1.0 }
    }

    pub fn scaled(self, scale: f64) -> Self {
        OperatorSide { scale: self.scale * scale, ..self }
    }

    fn eigenvalues(&self) -> Vec<(f64, f64)> {
        self.schur.eigenvalues().into_iter().map(|(re, im)| (re * self.scale, im * self.scale)).collect()
    }
}

/// Solves `A X + X B = C` for `X`.
pub fn solve_sylvester(a: &Matrix, b: &Matrix, c: &Matrix) -> Result<Matrix> {
    check_shapes(a, b, c)?;
    let sa = schur_decompose(a)?;
    let sb = schur_decompose(b)?;
    solve_sylvester_factored(OperatorSide::new(a, &sa), OperatorSide::new(b, &sb), c)
}

fn check_shapes(a: &Matrix, b: &Matrix, c: &Matrix) -> Result<()> {
    if !a.is_square() || !b.is_square() || c.rows() != a.rows() || c.cols() != b.rows() {
        return Err(Error::shape(
            "solve_sylvester",
            format!("A {:?}, B {:?}, C {:?}", a.shape(), b.shape(), c.shape()),
        ));
    }
    Ok(())
}

/// Smallest `|λ_A + λ_B|` over all eigenvalue pairs. Zero means the operator is singular.
pub fn eigenvalue_gap(a: OperatorSide<'_>, b: OperatorSide<'_>) -> f64 {
    let ea = a.eigenvalues();
    let eb = b.eigenvalues();
    let mut gap = f64::INFINITY;
    for &(ar, ai) in &ea {
        for &(br, bi) in &eb {
            gap = gap.min((ar + br).hypot(ai + bi));
        }
    }
    gap
}

/// `A X + X B = C` with both sides already in Schur form.
pub fn solve_sylvester_factored(a: OperatorSide<'_>, b: OperatorSide<'_>, c: &Matrix) -> Result<Matrix> {
    check_shapes(a.matrix, b.matrix, c)?;
    if a.schur.dim() != a.matrix.rows() || b.schur.dim() != b.matrix.rows() {
        return Err(Error::shape("solve_sylvester_factored", "Schur factors do not match operator"));
    }
    if !c.is_finite() {
        return Err(Error::NonFinite("solve_sylvester right-hand side"));
    }
    let scale = a.scale.abs() * a.matrix.frobenius_norm() + b.scale.abs() * b.matrix.frobenius_norm();
    let tol = ABS_FLOOR.max(64.0 * f64::EPSILON * scale);
    let gap = eigenvalue_gap(a, b);
    if gap <= tol {
        return Err(Error::NoUniqueSolution { gap, tol });
    }

    // F = Q_Aᵀ C Q_B
    let f = a.schur.q.t_matmul(c)?.matmul(&b.schur.q)?;
    let y = back_substitute(Some(&a.schur.t), a.scale, &b.schur.t, b.scale, &f, tol).map_err(|e| match e {
        Error::NoUniqueSolution { .. } => Error::NoUniqueSolution { gap, tol },
        other => other,
    })?;
    let x = a.schur.q.matmul(&y)?.matmul_t(&b.schur.q)?;
    if !x.is_finite() {
        return Err(Error::NonFinite("solve_sylvester solution"));
    }

    let mut r = a.matrix.matmul(&x)?.scale(a.scale);
    r.add_scaled(b.scale, &x.matmul(b.matrix)?)?;
    r.add_scaled(-1.0, c)?;
    let bound = RESIDUAL_TOL * c.frobenius_norm().max(1.0);
    if r.frobenius_norm() > bound {
        return Err(Error::NoUniqueSolution { gap, tol });
    }
    Ok(x)
}

/// `X B = C`, i.e. the Sylvester equation with a zero left operator.
pub fn solve_sylvester_zero_left(b: OperatorSide<'_>, c: &Matrix) -> Result<Matrix> {
    if !b.matrix.is_square() || c.cols() != b.matrix.rows() || b.schur.dim() != b.matrix.rows() {
        return Err(Error::shape(
            "solve_sylvester_zero_left",
            format!("B {:?}, C {:?}", b.matrix.shape(), c.shape()),
        ));
    }
    if !c.is_finite() {
        return Err(Error::NonFinite("solve_sylvester right-hand side"));
    }
    let tol = ABS_FLOOR.max(64.0 * f64::EPSILON * b.scale.abs() * b.matrix.frobenius_norm());
    let gap = b.eigenvalues().iter().fold(f64::INFINITY, |g, &(re, im)| g.min(re.hypot(im)));
    if gap <= tol {
        return Err(Error::NoUniqueSolution { gap, tol });
    }
    let f = c.matmul(&b.schur.q)?;
    let y = back_substitute(None, 0.0, &b.schur.t, b.scale, &f, tol)
        .map_err(|_| Error::NoUniqueSolution { gap, tol })?;
    let x = y.matmul_t(&b.schur.q)?;
    if !x.is_finite() {
        return Err(Error::NonFinite("solve_sylvester solution"));
    }
    let mut r = x.matmul(b.matrix)?.scale(b.scale);
    r.add_scaled(-1.0, c)?;
    if r.frobenius_norm() > RESIDUAL_TOL * c.frobenius_norm().max(1.0) {
        return Err(Error::NoUniqueSolution { gap, tol });
    }
    Ok(x)
}

/// Relative residual `‖A X + X B − C‖_F / max(1, ‖C‖_F)`.
pub fn sylvester_residual(a: &Matrix, b: &Matrix, c: &Matrix, x: &Matrix) -> Result<f64> {
    let mut r = a.matmul(x)?;
    r.add_scaled(1.0, &x.matmul(b)?)?;
    r.add_scaled(-1.0, c)?;
    Ok(r.frobenius_norm() / c.frobenius_norm().max(1.0))
}

/// Solves `ca·TA Y + cb·Y TB = F` for quasi-upper-triangular `TA`, `TB`.
///
/// Row blocks of `TA` are processed bottom-up, column blocks of `TB` left to right;
/// each block pair is a 1×1, 2×2 or 4×4 dense system.
/// `ta = None` stands for a zero left operator.
fn back_substitute(ta: Option<&Matrix>, ca: f64, tb: &Matrix, cb: f64, f: &Matrix, tol: f64) -> Result<Matrix> {
    let (m, n) = f.shape();
    let a_blocks = match ta {
        Some(ta) => quasi_blocks(ta),
        None => (0..m).map(|start| Block { start, size: 1 }).collect(),
    };
    let b_blocks = quasi_blocks(tb);
    let mut y = Matrix::zeros(m, n);

    for bj in &b_blocks {
        for ai in a_blocks.iter().rev() {
            let mut rhs = [0.0; 4];
            for p in 0..ai.size {
                let i = ai.start + p;
                for q in 0..bj.size {
                    let j = bj.start + q;
                    let mut v = f[(i, j)];
                    if let Some(ta) = ta {
                        let mut acc = 0.0;
                        for (t, k) in ta.row(i)[ai.start + ai.size..].iter().zip(ai.start + ai.size..m) {
                            acc += t * y[(k, j)];
                        }
                        v -= ca * acc;
                    }
                    let mut acc = 0.0;
                    let yi = y.row(i);
                    for k in 0..bj.start {
                        acc += yi[k] * tb[(k, j)];
                    }
                    v -= cb * acc;
                    rhs[p * bj.size + q] = v;
                }
            }
            let sol = solve_block(ta, ca, *ai, tb, cb, *bj, rhs, tol)?;
            for p in 0..ai.size {
                for q in 0..bj.size {
                    y[(ai.start + p, bj.start + q)] = sol[p * bj.size + q];
                }
            }
        }
    }
    Ok(y)
}

#[allow(clippy::too_many_arguments)]
fn solve_block(
    ta: Option<&Matrix>,
    ca: f64,
    ai: Block,
    tb: &Matrix,
    cb: f64,
    bj: Block,
    rhs: [f64; 4],
    tol: f64,
) -> Result<[f64; 4]> {
    let (sa, sb) = (ai.size, bj.size);
    let dim = sa * sb;
    let mut m = [[0.0; 5]; 4];
    for p in 0..sa {
        for q in 0..sb {
            let row = p * sb + q;
            if let Some(ta) = ta {
                for pp in 0..sa {
                    m[row][pp * sb + q] += ca * ta[(ai.start + p, ai.start + pp)];
                }
            }
            for qq in 0..sb {
                m[row][p * sb + qq] += cb * tb[(bj.start + qq, bj.start + q)];
            }
            m[row][4] = rhs[row];
        }
    }
    let mut out = [0.0; 4];
    let sol = gauss_solve(&mut m[..dim], dim, tol)?;
    out[..dim].copy_from_slice(&sol[..dim]);
    Ok(out)
}

/// Gaussian elimination with partial pivoting on an augmented system whose
/// right-hand side is stored in column 4.
fn gauss_solve(m: &mut [[f64; 5]], dim: usize, tol: f64) -> Result<[f64; 4]> {
    for col in 0..dim {
        let piv = (col..dim).max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs())).unwrap();
        if m[piv][col].abs() <= tol {
            return Err(Error::NoUniqueSolution { gap: m[piv][col].abs(), tol });
        }
        m.swap(col, piv);
        for r in col + 1..dim {
            let factor = m[r][col] / m[col][col];
            if factor != 0.0 {
                for c in col..dim {
                    m[r][c] -= factor * m[col][c];
                }
                m[r][4] -= factor * m[col][4];
            }
        }
    }
    let mut x = [0.0; 4];
    for r in (0..dim).rev() {
        let mut v = m[r][4];
        for c in r + 1..dim {
            v -= m[r][c] * x[c];
        }
        x[r] = v / m[r][r];
    }
    Ok(x)
}
