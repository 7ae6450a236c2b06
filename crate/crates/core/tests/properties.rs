use hzsl_core::graph::{build_similarity, normalized_laplacian, SimilarityGraph};
use hzsl_core::inference::topk_superclasses;
use hzsl_core::linalg::{dot, solve_sylvester, sylvester_residual, Matrix};
use proptest::prelude::*;

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = Matrix> {
    prop::collection::vec(-1.0..1.0f64, rows * cols).prop_map(move |v| Matrix::from_vec(rows, cols, v).unwrap())
}

/// Square matrix with a diagonal shift large enough to keep the spectrum in the right half-plane.
fn stable(n: usize) -> impl Strategy<Value = Matrix> {
    matrix(n, n).prop_map(move |mut m| {
        m.add_diag(n as f64 + 0.5);
        m
    })
}

fn sylvester_case() -> impl Strategy<Value = (Matrix, Matrix, Matrix, Matrix)> {
    (1usize..7, 1usize..7).prop_flat_map(|(m, n)| (stable(m), stable(n), matrix(m, n), matrix(m, n)))
}

fn symmetric_weights() -> impl Strategy<Value = Matrix> {
    (3usize..12).prop_flat_map(|n| {
        prop::collection::vec(0.05..1.0f64, n * n).prop_map(move |v| {
            Matrix::from_fn(n, n, |i, j| if i == j { 0.0 } else { v[i.min(j) * n + i.max(j)] })
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn sylvester_is_linear_in_c((a, b, c1, c2) in sylvester_case(), s in -3.0..3.0f64) {
        let x1 = solve_sylvester(&a, &b, &c1).unwrap();
        let x2 = solve_sylvester(&a, &b, &c2).unwrap();
        let mut c = c1.scale(s);
        c.add_scaled(1.0, &c2).unwrap();
        let mut expect = x1.scale(s);
        expect.add_scaled(1.0, &x2).unwrap();
        let x = solve_sylvester(&a, &b, &c).unwrap();
        prop_assert!(x.sub(&expect).unwrap().max_abs() < 1e-10);
    }

    #[test]
    fn sylvester_recovers_planted_solution((a, b, x, _) in sylvester_case()) {
        let mut c = a.matmul(&x).unwrap();
        c.add_scaled(1.0, &x.matmul(&b).unwrap()).unwrap();
        let solved = solve_sylvester(&a, &b, &c).unwrap();
        prop_assert!(solved.sub(&x).unwrap().max_abs() < 1e-10);
        prop_assert!(sylvester_residual(&a, &b, &c, &solved).unwrap() < 1e-12);
    }

    #[test]
    fn laplacian_ignores_weight_scale(w in symmetric_weights(), c in 0.01..100.0f64) {
        let l1 = normalized_laplacian(&SimilarityGraph::from_weights(w.clone()).unwrap()).unwrap();
        let l2 = normalized_laplacian(&SimilarityGraph::from_weights(w.scale(c)).unwrap()).unwrap();
        prop_assert!(l1.matrix().sub(l2.matrix()).unwrap().max_abs() < 1e-12);
    }

    #[test]
    fn laplacian_quadratic_form(w in symmetric_weights(), seed in prop::collection::vec(-1.0..1.0f64, 12)) {
        let g = SimilarityGraph::from_weights(w.clone()).unwrap();
        let l = normalized_laplacian(&g).unwrap();
        let n = g.n();
        let f = &seed[..n];
        let lf = l.matrix().matmul(&Matrix::from_vec(n, 1, f.to_vec()).unwrap()).unwrap();
        let quad = dot(f, lf.as_slice());
        // ½ Σ w_ij (f_i/√d_i − f_j/√d_j)²
        let d = g.degrees();
        let mut expect = 0.0;
        for i in 0..n {
            for j in 0..n {
                let diff = f[i] / d[i].sqrt() - f[j] / d[j].sqrt();
                expect += 0.5 * w.row(i)[j] * diff * diff;
            }
        }
        prop_assert!((quad - expect).abs() < 1e-10 * (1.0 + expect.abs()));
        prop_assert!(quad >= -1e-12);
    }

    #[test]
    fn knn_laplacian_ignores_feature_scale(f in matrix(12, 4), c in 0.1..10.0f64) {
        let f = f.map(|v| v.abs() + 0.01);
        let l1 = normalized_laplacian(&build_similarity(&f, 4).unwrap()).unwrap();
        let l2 = normalized_laplacian(&build_similarity(&f.scale(c), 4).unwrap()).unwrap();
        prop_assert!(l1.matrix().sub(l2.matrix()).unwrap().max_abs() < 1e-12);
    }

    #[test]
    fn superclass_ranking_ignores_scale(x in prop::collection::vec(-1.0..1.0f64, 5), protos in matrix(6, 5), c in 0.1..10.0f64) {
        prop_assume!(dot(&x, &x) > 1e-6);
        let scaled: Vec<f64> = x.iter().map(|v| v * c).collect();
        let a = topk_superclasses(&x, &protos, 3).unwrap();
        let b = topk_superclasses(&scaled, &protos.scale(c), 3).unwrap();
        prop_assert_eq!(a.len(), 3);
        prop_assert_eq!(a, b);
    }
}
