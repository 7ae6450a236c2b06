//! Top-down hierarchical label inference for zero-shot, generalised zero-shot
//! and few-shot classification.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::hierarchy::{ClassHierarchy, SemanticTable};
use crate::linalg::{dot, norm, Matrix};
use crate::model::ProjectionModel;

pub const DEFAULT_TOP_K: usize = 3;
pub const DEFAULT_FSL_LAMBDA: f64 = 0.5;
/// Length of the ranked label list kept per prediction (enough for hit@5).
pub const RANK_DEPTH: usize = 5;

/// Feature-space prototypes `P Wᵀ`.
pub fn embed_prototypes(w: &Matrix, p: &Matrix) -> Result<Matrix> {
    if p.cols() != w.cols() {
        return Err(Error::shape("embed_prototypes", format!("W {:?}, P {:?}", w.shape(), p.shape())));
    }
    p.matmul_t(w)
}

/// Rows scaled to unit norm; zero rows stay zero (and sit at cosine distance 1 from everything).
fn unit_rows(m: &Matrix) -> Matrix {
    let mut out = m.clone();
    for i in 0..out.rows() {
        let row = out.row_mut(i);
        let n = norm(row);
        if n > 0.0 {
            row.iter_mut().for_each(|v| *v /= n);
        }
    }
    out
}

fn unit_vector(f: &[f64]) -> Result<Vec<f64>> {
    let n = norm(f);
    if n <= 0.0 || !n.is_finite() {
        return Err(Error::Invalid("feature vector has zero or non-finite norm".into()));
    }
    Ok(f.iter().map(|v| v / n).collect())
}

/// `k` nearest of `candidates` by cosine distance, ascending; ties to the lower index.
fn rank(unit_f: &[f64], unit_protos: &Matrix, candidates: impl Iterator<Item = usize>, k: usize) -> Vec<(usize, f64)> {
    let mut scored: Vec<(usize, f64)> = candidates.map(|c| (c, 1.0 - dot(unit_f, unit_protos.row(c)))).collect();
    scored.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    scored.truncate(k);
    scored
}

/// Indices of the `k` prototype rows nearest to `f` by cosine distance.
pub fn topk_superclasses(f: &[f64], proto_feat: &Matrix, k: usize) -> Result<Vec<usize>> {
    if proto_feat.rows() == 0 {
        return Err(Error::param("proto_feat", "no candidate prototypes"));
    }
    if f.len() != proto_feat.cols() {
        return Err(Error::shape("topk_superclasses", format!("f has {} entries, prototypes {:?}", f.len(), proto_feat.shape())));
    }
    let unit = unit_vector(f)?;
    Ok(rank(&unit, &unit_rows(proto_feat), 0..proto_feat.rows(), k).into_iter().map(|(c, _)| c).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct CandidateSet {
    /// `per_layer[l]`: surviving superclasses of layer `l`, nearest first.
    pub per_layer: Vec<Vec<usize>>,
    /// Classes left after pruning, ascending.
    pub leaf_candidates: Vec<usize>,
    /// Pruning removed every allowed class and the full allowed set was used instead.
    pub fallback: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub label: usize,
    pub distance: f64,
    /// Up to [`RANK_DEPTH`] labels, nearest first: leaf candidates, then the remaining allowed classes.
    pub ranking: Vec<usize>,
    pub candidates: CandidateSet,
}

/// Precomputed unit-norm feature-space prototypes for every layer and class.
#[derive(Debug, Clone)]
pub struct HierarchicalClassifier<'h> {
    hierarchy: &'h ClassHierarchy,
    layer_protos: Vec<Matrix>,
    class_protos: Matrix,
    top_k: usize,
}

impl<'h> HierarchicalClassifier<'h> {
    pub fn new(model: &ProjectionModel, hierarchy: &'h ClassHierarchy, sem: &SemanticTable, top_k: usize) -> Result<Self> {
        if top_k == 0 {
            return Err(Error::param("top_k", "must be at least 1"));
        }
        if model.n_layers() != hierarchy.n_layers() {
            return Err(Error::Invalid(format!(
                "model has {} layer projections, hierarchy has {} layers",
                model.n_layers(),
                hierarchy.n_layers()
            )));
        }
        if sem.len() != hierarchy.n_classes() {
            return Err(Error::Invalid(format!(
                "semantic table has {} classes, hierarchy has {}",
                sem.len(),
                hierarchy.n_classes()
            )));
        }
        if model.semantic_dim() != sem.dim() || hierarchy.semantic_dim() != sem.dim() {
            return Err(Error::shape(
                "HierarchicalClassifier",
                format!("model d_z {}, hierarchy d_z {}, semantics d_z {}", model.semantic_dim(), hierarchy.semantic_dim(), sem.dim()),
            ));
        }
        let layer_protos = model
            .layer_w
            .iter()
            .enumerate()
            .map(|(l, w)| embed_prototypes(w, hierarchy.prototypes(l)).map(|m| unit_rows(&m)))
            .collect::<Result<Vec<_>>>()?;
        let class_protos = unit_rows(&embed_prototypes(&model.class_w, sem.vectors())?);
        Ok(HierarchicalClassifier { hierarchy, layer_protos, class_protos, top_k })
    }

    pub fn feature_dim(&self) -> usize {
        self.class_protos.cols()
    }

    /// Mixes support-set means into the class prototypes of the supported classes:
    /// `λ·mean(unit support) + (1−λ)·unit embedded prototype`, renormalised.
    pub fn with_support(mut self, support: &Matrix, labels: &[usize], lambda: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&lambda) {
            return Err(Error::param("lambda", format!("must lie in [0, 1], got {lambda}")));
        }
        if support.rows() != labels.len() {
            return Err(Error::shape("with_support", format!("{} support rows, {} labels", support.rows(), labels.len())));
        }
        if support.cols() != self.feature_dim() {
            return Err(Error::shape("with_support", format!("support has {} columns, model {}", support.cols(), self.feature_dim())));
        }
        let n_classes = self.class_protos.rows();
        let unit = support.normalize_rows()?;
        let mut sums = Matrix::zeros(n_classes, support.cols());
        let mut counts = vec![0usize; n_classes];
        for (row, &c) in unit.row_iter().zip(labels) {
            if c >= n_classes {
                return Err(Error::OutOfRange { what: "support label", index: c, len: n_classes });
            }
            sums.row_mut(c).iter_mut().zip(row).for_each(|(s, v)| *s += v);
            counts[c] += 1;
        }
        for c in (0..n_classes).filter(|&c| counts[c] > 0) {
            let mean: Vec<f64> = sums.row(c).iter().map(|v| v / counts[c] as f64).collect();
            let row = self.class_protos.row_mut(c);
            for (p, m) in row.iter_mut().zip(&mean) {
                *p = lambda * m + (1.0 - lambda) * *p;
            }
            let n = norm(row);
            if n > 0.0 {
                row.iter_mut().for_each(|v| *v /= n);
            }
        }
        Ok(self)
    }

    fn allowed_mask(&self, restrict_to: &[usize]) -> Result<Vec<bool>> {
        if restrict_to.is_empty() {
            return Err(Error::param("restrict_to", "no allowed classes"));
        }
        let n = self.class_protos.rows();
        let mut mask = vec![false; n];
        for &c in restrict_to {
            if c >= n {
                return Err(Error::OutOfRange { what: "class", index: c, len: n });
            }
            mask[c] = true;
        }
        Ok(mask)
    }

    /// Top-down pruning from the coarsest layer, keeping `top_k` superclasses per layer.
    pub fn derive_candidates(&self, f: &[f64], restrict_to: &[usize]) -> Result<CandidateSet> {
        let mask = self.allowed_mask(restrict_to)?;
        self.check_dim(f.len())?;
        Ok(self.candidates(&unit_vector(f)?, &mask))
    }

    fn check_dim(&self, d: usize) -> Result<()> {
        if d != self.feature_dim() {
            return Err(Error::shape("HierarchicalClassifier", format!("features have {d} columns, model expects {}", self.feature_dim())));
        }
        Ok(())
    }

    fn candidates(&self, unit_f: &[f64], allowed: &[bool]) -> CandidateSet {
        let h = self.hierarchy;
        let top = h.n_layers() - 1;
        let mut per_layer = vec![Vec::new(); h.n_layers()];
        let mut current: Vec<usize> = (0..h.layer_sizes()[top]).collect();
        for l in (0..=top).rev() {
            let kept = rank(unit_f, &self.layer_protos[l], current.iter().copied(), self.top_k);
            per_layer[l] = kept.iter().map(|&(c, _)| c).collect();
            if l > 0 {
                current = per_layer[l].iter().flat_map(|&node| h.children_of(l, node)).collect();
            }
        }
        let mut leaf_candidates: Vec<usize> = (0..h.n_classes())
            .filter(|&c| allowed[c] && per_layer[0].contains(&h.ancestors_of(c).expect("valid class")[0]))
            .collect();
        let fallback = leaf_candidates.is_empty();
        if fallback {
            leaf_candidates = (0..allowed.len()).filter(|&c| allowed[c]).collect();
        }
        CandidateSet { per_layer, leaf_candidates, fallback }
    }

    fn classify(&self, unit_f: &[f64], allowed: &[bool], candidates: CandidateSet) -> Prediction {
        let mut ranked = rank(unit_f, &self.class_protos, candidates.leaf_candidates.iter().copied(), RANK_DEPTH);
        let (label, distance) = ranked[0];
        if ranked.len() < RANK_DEPTH {
            let rest = (0..allowed.len()).filter(|&c| allowed[c] && candidates.leaf_candidates.binary_search(&c).is_err());
            ranked.extend(rank(unit_f, &self.class_protos, rest, RANK_DEPTH - ranked.len()));
        }
        Prediction { label, distance, ranking: ranked.into_iter().map(|(c, _)| c).collect(), candidates }
    }

    fn run(&self, features: &Matrix, restrict_to: &[usize], prune: bool) -> Result<Vec<Prediction>> {
        let allowed = self.allowed_mask(restrict_to)?;
        self.check_dim(features.cols())?;
        let unit = features.normalize_rows()?;
        let all: Vec<usize> = (0..allowed.len()).filter(|&c| allowed[c]).collect();
        Ok((0..unit.rows())
            .into_par_iter()
            .map(|i| {
                let f = unit.row(i);
                let cands = if prune {
                    self.candidates(f, &allowed)
                } else {
                    CandidateSet { per_layer: Vec::new(), leaf_candidates: all.clone(), fallback: false }
                };
                self.classify(f, &allowed, cands)
            })
            .collect())
    }

    /// Hierarchically pruned nearest-prototype labels, restricted to `restrict_to`.
    pub fn predict(&self, features: &Matrix, restrict_to: &[usize]) -> Result<Vec<Prediction>> {
        self.run(features, restrict_to, true)
    }

    /// Nearest prototype over all of `restrict_to`, without pruning.
    pub fn predict_flat(&self, features: &Matrix, restrict_to: &[usize]) -> Result<Vec<Prediction>> {
        self.run(features, restrict_to, false)
    }
}

/// Zero-shot: candidates restricted to the unseen classes.
pub fn predict_zsl(
    model: &ProjectionModel,
    h: &ClassHierarchy,
    f_u: &Matrix,
    sem: &SemanticTable,
    top_k: usize,
) -> Result<Vec<Prediction>> {
    let unseen: Vec<usize> = sem.unseen_indices().collect();
    HierarchicalClassifier::new(model, h, sem, top_k)?.predict(f_u, &unseen)
}

/// Generalised zero-shot: every class is allowed.
pub fn predict_gzsl(
    model: &ProjectionModel,
    h: &ClassHierarchy,
    f_test: &Matrix,
    sem: &SemanticTable,
    top_k: usize,
) -> Result<Vec<Prediction>> {
    let all: Vec<usize> = (0..sem.len()).collect();
    HierarchicalClassifier::new(model, h, sem, top_k)?.predict(f_test, &all)
}

/// Few-shot: candidates restricted to the classes present in the support set,
/// whose prototypes mix support means with projected semantics.
#[allow(clippy::too_many_arguments)]
pub fn predict_fsl(
    model: &ProjectionModel,
    h: &ClassHierarchy,
    support: &Matrix,
    support_labels: &[usize],
    f_test: &Matrix,
    sem: &SemanticTable,
    lambda: f64,
    top_k: usize,
) -> Result<Vec<Prediction>> {
    let mut novel: Vec<usize> = support_labels.to_vec();
    novel.sort_unstable();
    novel.dedup();
    HierarchicalClassifier::new(model, h, sem, top_k)?
        .with_support(support, support_labels, lambda)?
        .predict(f_test, &novel)
}

/// CSV with columns `sample_id,predicted_class,distance,fallback_flag`;
/// `ids[i]` labels `preds[i]`.
pub fn predictions_csv(ids: &[usize], preds: &[Prediction], names: &[String]) -> Result<String> {
    if ids.len() != preds.len() {
        return Err(Error::shape("predictions_csv", format!("{} ids for {} predictions", ids.len(), preds.len())));
    }
    let mut out = String::from("sample_id,predicted_class,distance,fallback_flag\n");
    for (i, p) in ids.iter().zip(preds) {
        let name = names.get(p.label).ok_or(Error::OutOfRange { what: "class", index: p.label, len: names.len() })?;
        out.push_str(&format!("{i},{name},{},{}\n", p.distance, u8::from(p.candidates.fallback)));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hierarchy::build_hierarchy;
    use crate::projection::LayerParams;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Matrix {
        Matrix::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0))
    }

    fn identity_model(n_layers: usize, d: usize) -> ProjectionModel {
        let p = LayerParams::default();
        ProjectionModel::new(vec![Matrix::identity(d); n_layers], Matrix::identity(d), vec![p; n_layers], p).unwrap()
    }

    fn table(vectors: Matrix, seen: usize) -> SemanticTable {
        let names = (0..vectors.rows()).map(|i| format!("c{i}")).collect();
        SemanticTable::new(names, vectors, seen).unwrap()
    }

    /// Four classes on the unit circle, paired into two superclasses.
    fn four_classes() -> (SemanticTable, ClassHierarchy) {
        let v = Matrix::from_rows(&[[1.0, 0.1], [1.0, -0.1], [-1.0, 0.1], [-1.0, -0.1]]).unwrap();
        let protos = Matrix::from_rows(&[[1.0, 0.0], [-1.0, 0.0]]).unwrap();
        let h = ClassHierarchy::from_parts(2, vec![vec![0, 0, 1, 1]], vec![protos]).unwrap();
        (table(v, 2), h)
    }

    #[test]
    fn embedding() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = random(&mut rng, 4, 3);
        assert_eq!(embed_prototypes(&Matrix::identity(3), &p).unwrap(), p);
        assert_eq!(embed_prototypes(&random(&mut rng, 5, 3), &Matrix::zeros(2, 3)).unwrap().max_abs(), 0.0);
        let w = random(&mut rng, 5, 3);
        let e = embed_prototypes(&w, &p).unwrap();
        for i in 0..4 {
            for r in 0..5 {
                let expected: f64 = (0..3).map(|j| p[(i, j)] * w[(r, j)]).sum();
                assert!((e[(i, r)] - expected).abs() < 1e-14);
            }
        }
        assert!(embed_prototypes(&w, &Matrix::zeros(2, 4)).is_err());
    }

    #[test]
    fn topk_basics() {
        let one = Matrix::from_rows(&[[0.2, 0.3]]).unwrap();
        assert_eq!(topk_superclasses(&[1.0, 0.0], &one, 3).unwrap(), vec![0]);
        let protos = Matrix::from_rows(&[[1.0, 0.0], [0.0, 1.0], [0.6, 0.8]]).unwrap();
        assert_eq!(topk_superclasses(&[0.6, 0.8], &protos, 1).unwrap(), vec![2]);
        assert!(topk_superclasses(&[0.0, 0.0], &protos, 1).is_err());
        // exact ties go to the lower index
        let tied = Matrix::from_rows(&[[1.0, 1.0], [1.0, -1.0], [2.0, 2.0]]).unwrap();
        assert_eq!(topk_superclasses(&[1.0, 0.0], &tied, 3).unwrap(), vec![0, 1, 2]);
        // zero prototype sits at distance 1
        let z = Matrix::from_rows(&[[0.0, 0.0], [-1.0, 0.0]]).unwrap();
        assert_eq!(topk_superclasses(&[1.0, 0.0], &z, 2).unwrap(), vec![0, 1]);
    }

    #[test]
    fn topk_matches_exhaustive_sort() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..20 {
            let protos = random(&mut rng, 20, 6);
            let f: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
            let nf = norm(&f);
            let mut d: Vec<(f64, usize)> =
                (0..20).map(|i| (1.0 - dot(&f, protos.row(i)) / (nf * norm(protos.row(i))), i)).collect();
            d.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
            let expected: Vec<usize> = d[..3].iter().map(|x| x.1).collect();
            assert_eq!(topk_superclasses(&f, &protos, 3).unwrap(), expected);
        }
    }

    #[test]
    fn two_superclasses_keep_everything() {
        let (sem, h) = four_classes();
        let clf = HierarchicalClassifier::new(&identity_model(1, 2), &h, &sem, 3).unwrap();
        let c = clf.derive_candidates(&[1.0, 0.05], &[0, 1, 2, 3]).unwrap();
        assert_eq!(c.per_layer, vec![vec![0, 1]]);
        assert_eq!(c.leaf_candidates, vec![0, 1, 2, 3]);
        assert!(!c.fallback);
    }

    #[test]
    fn pruned_restriction_falls_back() {
        let (sem, h) = four_classes();
        let clf = HierarchicalClassifier::new(&identity_model(1, 2), &h, &sem, 1).unwrap();
        let c = clf.derive_candidates(&[1.0, 0.05], &[3]).unwrap();
        assert_eq!(c.per_layer, vec![vec![0]]);
        assert_eq!(c.leaf_candidates, vec![3]);
        assert!(c.fallback);
        let kept = clf.derive_candidates(&[-1.0, 0.05], &[3]).unwrap();
        assert_eq!(kept.leaf_candidates, vec![3]);
        assert!(!kept.fallback);
    }

    fn clustered(seed: u64) -> (SemanticTable, ClassHierarchy, Matrix, Vec<usize>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let centers = random(&mut rng, 5, 8).scale(3.0);
        let v = Matrix::from_fn(50, 8, |i, j| centers[(i % 5, j)] + 0.3 * rng.random_range(-1.0..1.0));
        let sem = table(v, 40);
        let h = build_hierarchy(&sem, 3, seed).unwrap();
        let labels: Vec<usize> = (0..200).map(|i| i % 50).collect();
        let f = Matrix::from_fn(200, 8, |i, j| sem.vectors()[(labels[i], j)] + 0.05 * rng.random_range(-1.0..1.0));
        (sem, h, f, labels)
    }

    #[test]
    fn predictions_lie_in_candidates_and_are_scale_invariant() {
        let (sem, h, f, _) = clustered(3);
        let model = identity_model(h.n_layers(), 8);
        let all: Vec<usize> = (0..50).collect();
        let clf = HierarchicalClassifier::new(&model, &h, &sem, 3).unwrap();
        let preds = clf.predict(&f, &all).unwrap();
        for p in &preds {
            assert!(p.candidates.leaf_candidates.contains(&p.label));
            assert_eq!(p.ranking[0], p.label);
            assert_eq!(p.ranking.len(), RANK_DEPTH);
            for l in 0..h.n_layers() {
                for &c in &p.candidates.leaf_candidates {
                    if !p.candidates.fallback {
                        assert!(p.candidates.per_layer[l].contains(&h.ancestors_of(c).unwrap()[l]));
                    }
                }
            }
        }
        for c in [1e-3, 7.5] {
            let scaled = clf.predict(&f.scale(c), &all).unwrap();
            let a: Vec<usize> = preds.iter().map(|p| p.label).collect();
            let b: Vec<usize> = scaled.iter().map(|p| p.label).collect();
            assert_eq!(a, b);
        }
        assert_eq!(preds, clf.predict(&f, &all).unwrap());
    }

    #[test]
    fn true_class_survives_when_ancestors_are_nearest() {
        let (sem, h, _, _) = clustered(4);
        let model = identity_model(h.n_layers(), 8);
        let clf = HierarchicalClassifier::new(&model, &h, &sem, 3).unwrap();
        let all: Vec<usize> = (0..50).collect();
        let mut checked = 0;
        for c in 0..50 {
            let f = sem.vector(c);
            let anc = h.ancestors_of(c).unwrap();
            let nearest_everywhere = (0..h.n_layers()).all(|l| {
                topk_superclasses(f, &embed_prototypes(&model.layer_w[l], h.prototypes(l)).unwrap(), 1).unwrap()[0]
                    == anc[l]
            });
            if nearest_everywhere {
                checked += 1;
                assert!(clf.derive_candidates(f, &all).unwrap().leaf_candidates.contains(&c));
            }
        }
        assert!(checked > 0);
    }

    #[test]
    fn single_unseen_class_takes_everything() {
        let (sem, h) = four_classes();
        let sem = table(sem.vectors().clone(), 3);
        let model = identity_model(1, 2);
        let f = Matrix::from_rows(&[[1.0, 0.0], [-1.0, 0.3], [0.2, 0.9]]).unwrap();
        let preds = predict_zsl(&model, &h, &f, &sem, 3).unwrap();
        assert!(preds.iter().all(|p| p.label == 3));
    }

    #[test]
    fn gzsl_without_unseen_is_seen_nn() {
        let (sem, h, f, labels) = clustered(5);
        let sem = table(sem.vectors().clone(), 50);
        let model = identity_model(h.n_layers(), 8);
        let preds = predict_gzsl(&model, &h, &sem.vectors().clone(), &sem, 3).unwrap();
        assert!(preds.iter().enumerate().all(|(c, p)| p.label == c));
        let flat = HierarchicalClassifier::new(&model, &h, &sem, 3).unwrap().predict_flat(&f, &(0..50).collect::<Vec<_>>()).unwrap();
        let acc = flat.iter().zip(&labels).filter(|(p, &t)| p.label == t).count();
        assert!(acc > 150);
    }

    #[test]
    fn fsl_limits() {
        let (sem, h, f, labels) = clustered(6);
        let model = identity_model(h.n_layers(), 8);
        let unseen: Vec<usize> = sem.unseen_indices().collect();
        let support_rows: Vec<usize> = (0..200).filter(|&i| labels[i] >= 40).take(20).collect();
        let support = f.select_rows(&support_rows);
        let support_labels: Vec<usize> = support_rows.iter().map(|&i| labels[i]).collect();
        let test_rows: Vec<usize> = (0..200).filter(|&i| labels[i] >= 40).collect();
        let test = f.select_rows(&test_rows);

        let zsl = predict_zsl(&model, &h, &test, &sem, 3).unwrap();
        let fsl0 = predict_fsl(&model, &h, &support, &support_labels, &test, &sem, 0.0, 3).unwrap();
        for (a, b) in zsl.iter().zip(&fsl0) {
            assert_eq!((a.label, &a.ranking, &a.candidates), (b.label, &b.ranking, &b.candidates));
            assert!((a.distance - b.distance).abs() < 1e-12);
        }

        // λ = 1: class prototypes are the normalised support means
        let fsl1 = predict_fsl(&model, &h, &support, &support_labels, &test, &sem, 1.0, 3).unwrap();
        let unit = support.normalize_rows().unwrap();
        for (p, row) in fsl1.iter().zip(test.normalize_rows().unwrap().row_iter()) {
            let c = p.label;
            let mut mean = vec![0.0; 8];
            let members: Vec<usize> = (0..support_labels.len()).filter(|&i| support_labels[i] == c).collect();
            for &i in &members {
                mean.iter_mut().zip(unit.row(i)).for_each(|(m, v)| *m += v / members.len() as f64);
            }
            let expected = 1.0 - dot(row, &mean) / norm(&mean);
            assert!((p.distance - expected).abs() < 1e-12);
            assert!(unseen.contains(&c));
        }
        assert!(predict_fsl(&model, &h, &support, &support_labels, &test, &sem, 1.5, 3).is_err());
    }

    #[test]
    fn csv_format() {
        let (sem, h) = four_classes();
        let clf = HierarchicalClassifier::new(&identity_model(1, 2), &h, &sem, 1).unwrap();
        let preds = clf.predict(&Matrix::from_rows(&[[1.0, 0.0], [1.0, 0.2]]).unwrap(), &[3]).unwrap();
        let csv = predictions_csv(&[7, 9], &preds, sem.names()).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "sample_id,predicted_class,distance,fallback_flag");
        assert!(lines[1].starts_with("7,c3,") && lines[1].ends_with(",1"));
        assert!(lines[2].starts_with("9,c3,"));
        assert_eq!(lines.len(), 3);
        assert!(predictions_csv(&[0], &preds, sem.names()).is_err());
    }

    #[test]
    fn rejects_bad_inputs() {
        let (sem, h) = four_classes();
        let clf = HierarchicalClassifier::new(&identity_model(1, 2), &h, &sem, 3).unwrap();
        let f = Matrix::from_rows(&[[1.0, 0.0], [0.0, 0.0]]).unwrap();
        assert_eq!(clf.predict(&f, &[0]), Err(Error::ZeroNorm(1)));
        assert!(clf.predict(&Matrix::identity(3), &[0]).is_err());
        assert!(clf.predict(&Matrix::identity(2), &[]).is_err());
        assert!(clf.predict(&Matrix::identity(2), &[9]).is_err());
        assert!(HierarchicalClassifier::new(&identity_model(2, 2), &h, &sem, 3).is_err());
    }
}
