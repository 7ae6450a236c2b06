//! Sample-similarity graph over seen-class features and its normalised Laplacian.

use crate::error::{Error, Result};
use crate::linalg::{dot, Matrix};

pub const DEFAULT_NEIGHBOURS: usize = 10;

/// Symmetric, nonnegative k-nearest-neighbour affinity graph.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityGraph {
    weights: Matrix,
    degrees: Vec<f64>,
}

impl SimilarityGraph {
    /// Wraps an explicit weight matrix after checking it is a valid affinity matrix.
    pub fn from_weights(weights: Matrix) -> Result<Self> {
        if !weights.is_square() {
            return Err(Error::shape("SimilarityGraph", format!("weights are {:?}", weights.shape())));
        }
        let n = weights.rows();
        for i in 0..n {
            if weights[(i, i)] != 0.0 {
                return Err(Error::Invalid(format!("nonzero self-loop at vertex {i}")));
            }
            for j in 0..i {
                if weights[(i, j)] != weights[(j, i)] {
                    return Err(Error::Invalid(format!("weights not symmetric at ({i}, {j})")));
                }
                if weights[(i, j)] < 0.0 {
                    return Err(Error::Invalid(format!("negative weight at ({i}, {j})")));
                }
            }
        }
        let degrees: Vec<f64> = weights.row_iter().map(|r| r.iter().sum()).collect();
        if let Some(u) = degrees.iter().position(|&d| d <= 0.0) {
            return Err(Error::IsolatedVertex(u));
        }
        Ok(SimilarityGraph { weights, degrees })
    }

    pub fn n(&self) -> usize {
        self.degrees.len()
    }

    pub fn weights(&self) -> &Matrix {
        &self.weights
    }

    pub fn degrees(&self) -> &[f64] {
        &self.degrees
    }
}

/// Connects every row of `features` to its `k` most cosine-similar rows.
///
/// Similarities are clamped to `[0, 1]` and the graph is symmetrised with an
/// elementwise max. Vertices left with zero degree are an error.
pub fn build_similarity(features: &Matrix, k: usize) -> Result<SimilarityGraph> {
    let n = features.rows();
    if n < 2 {
        return Err(Error::param("features", format!("need at least 2 samples, got {n}")));
    }
    if k == 0 || k >= n {
        return Err(Error::param("k", format!("must satisfy 1 <= k < {n}, got {k}")));
    }
    let unit = features.normalize_rows()?;
    let mut w = Matrix::zeros(n, n);
    let mut order: Vec<usize> = Vec::with_capacity(n - 1);
    let mut sims = vec![0.0; n];
    for u in 0..n {
        let fu = unit.row(u);
        for (v, s) in sims.iter_mut().enumerate() {
            *s = dot(fu, unit.row(v));
        }
        order.clear();
        order.extend((0..n).filter(|&v| v != u));
        // most similar first, ties to the lower index
        order.sort_by(|&a, &b| sims[b].total_cmp(&sims[a]).then(a.cmp(&b)));
        for &v in &order[..k] {
            w[(u, v)] = sims[v].clamp(0.0, 1.0);
        }
    }
    for u in 0..n {
        for v in 0..u {
            let m = w[(u, v)].max(w[(v, u)]);
            w[(u, v)] = m;
            w[(v, u)] = m;
        }
        w[(u, u)] = 0.0;
    }
    SimilarityGraph::from_weights(w)
}

/// `L = I − D^{-1/2} W D^{-1/2}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Laplacian {
    matrix: Matrix,
}

impl Laplacian {
    pub fn n(&self) -> usize {
        self.matrix.rows()
    }

    pub fn matrix(&self) -> &Matrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> Matrix {
        self.matrix
    }
}

pub fn normalized_laplacian(g: &SimilarityGraph) -> Result<Laplacian> {
    let n = g.n();
    if let Some(u) = g.degrees.iter().position(|&d| d <= 0.0) {
        return Err(Error::IsolatedVertex(u));
    }
    let w = &g.weights;
    let matrix = Matrix::from_fn(n, n, |u, v| {
        let off = w[(u, v)] / (g.degrees[u] * g.degrees[v]).sqrt();
        if u == v { 1.0 - off } else { -off }
    });
    Ok(Laplacian { matrix })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::jacobi_eigenvalues;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identical_rows_get_unit_weight() {
        let f = Matrix::from_rows(&[[0.6, 0.8], [0.6, 0.8]]).unwrap();
        let g = build_similarity(&f, 1).unwrap();
        assert_eq!(g.weights()[(0, 1)], 1.0);
        assert_eq!(g.weights()[(1, 0)], 1.0);
    }

    #[test]
    fn orthogonal_rows_are_isolated() {
        let f = Matrix::from_rows(&[[1.0, 0.0], [0.0, 1.0]]).unwrap();
        assert_eq!(build_similarity(&f, 1), Err(Error::IsolatedVertex(0)));
    }

    #[test]
    fn rejects_bad_k_and_zero_rows() {
        let f = Matrix::from_rows(&[[1.0, 0.0], [1.0, 1.0], [0.5, 1.0]]).unwrap();
        assert!(matches!(build_similarity(&f, 0), Err(Error::InvalidParameter { .. })));
        assert!(matches!(build_similarity(&f, 3), Err(Error::InvalidParameter { .. })));
        let z = Matrix::from_rows(&[[1.0, 0.0], [0.0, 0.0]]).unwrap();
        assert_eq!(build_similarity(&z, 1), Err(Error::ZeroNorm(1)));
    }

    #[test]
    fn knn_structure_on_random_rows() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let f = Matrix::from_fn(50, 8, |_, _| rng.random_range(0.0..1.0));
        let g = build_similarity(&f, 5).unwrap();
        let w = g.weights();
        for u in 0..50 {
            let nz = w.row(u).iter().filter(|&&x| x != 0.0).count();
            assert!((5..=49).contains(&nz), "row {u} has {nz} nonzeros");
            assert_eq!(w[(u, u)], 0.0);
            for v in 0..50 {
                assert_eq!(w[(u, v)], w[(v, u)]);
                assert!((0.0..=1.0).contains(&w[(u, v)]));
            }
        }
    }

    #[test]
    fn two_vertex_laplacians() {
        let expected = Matrix::from_rows(&[[1.0, -1.0], [-1.0, 1.0]]).unwrap();
        for s in [1.0, 2.0] {
            let w = Matrix::from_rows(&[[0.0, s], [s, 0.0]]).unwrap();
            let l = normalized_laplacian(&SimilarityGraph::from_weights(w).unwrap()).unwrap();
            assert_eq!(l.matrix(), &expected);
        }
    }

    #[test]
    fn spectrum_within_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let f = Matrix::from_fn(10, 4, |_, _| rng.random_range(0.0..1.0));
        let l = normalized_laplacian(&build_similarity(&f, 3).unwrap()).unwrap();
        let ev = jacobi_eigenvalues(l.matrix()).unwrap();
        assert!(ev[0].abs() < 1e-10);
        assert!(ev.iter().all(|&e| (-1e-10..=2.0 + 1e-10).contains(&e)));
    }

    #[test]
    fn zero_eigenvalues_count_components() {
        // two triangles and a separate edge: 3 components
        let mut w = Matrix::zeros(8, 8);
        for &(a, b) in &[(0, 1), (1, 2), (0, 2), (3, 4), (4, 5), (3, 5), (6, 7)] {
            w[(a, b)] = 0.5 + 0.1 * a as f64;
            w[(b, a)] = w[(a, b)];
        }
        let l = normalized_laplacian(&SimilarityGraph::from_weights(w.clone()).unwrap()).unwrap();
        let ev = jacobi_eigenvalues(l.matrix()).unwrap();
        assert_eq!(ev.iter().filter(|e| e.abs() < 1e-10).count(), 3);

        let mut w2 = Matrix::zeros(6, 6);
        for &(a, b) in &[(0, 1), (1, 2), (3, 4), (4, 5)] {
            w2[(a, b)] = 1.0;
            w2[(b, a)] = 1.0;
        }
        let l2 = normalized_laplacian(&SimilarityGraph::from_weights(w2).unwrap()).unwrap();
        let ev2 = jacobi_eigenvalues(l2.matrix()).unwrap();
        assert_eq!(ev2.iter().filter(|e| e.abs() < 1e-10).count(), 2);
    }
}
