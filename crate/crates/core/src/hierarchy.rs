//! Data-driven class hierarchy built by repeatedly clustering semantic vectors.
//!
//! Layer indices are zero-based in this API: layer 0 is the first superclass
//! layer directly above the leaf classes, layer `n_layers() - 1` the coarsest.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kmeans::kmeans;
use crate::linalg::{axpy, Matrix};

/// Class names with their semantic vectors, seen classes first.
#[derive(Debug, Clone, PartialEq)]
pub struct SemanticTable {
    names: Vec<String>,
    vectors: Matrix,
    seen_count: usize,
}

impl SemanticTable {
    pub fn new(names: Vec<String>, vectors: Matrix, seen_count: usize) -> Result<Self> {
        if names.len() != vectors.rows() {
            return Err(Error::shape(
                "SemanticTable",
                format!("{} names but {} vectors", names.len(), vectors.rows()),
            ));
        }
        if seen_count > names.len() {
            return Err(Error::param("seen_count", format!("{seen_count} > {} classes", names.len())));
        }
        let mut set = HashSet::new();
        for n in &names {
            if !set.insert(n.as_str()) {
                return Err(Error::Invalid(format!("duplicate class name `{n}`")));
            }
        }
        Ok(SemanticTable { names, vectors, seen_count })
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn vectors(&self) -> &Matrix {
        &self.vectors
    }

    pub fn dim(&self) -> usize {
        self.vectors.cols()
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn seen_count(&self) -> usize {
        self.seen_count
    }

    pub fn unseen_count(&self) -> usize {
        self.names.len() - self.seen_count
    }

    pub fn seen_indices(&self) -> std::ops::Range<usize> {
        0..self.seen_count
    }

    pub fn unseen_indices(&self) -> std::ops::Range<usize> {
        self.seen_count..self.names.len()
    }

    pub fn is_seen(&self, class: usize) -> bool {
        class < self.seen_count
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn vector(&self, class: usize) -> &[f64] {
        self.vectors.row(class)
    }
}

/// Tree over all classes with `n_layers()` superclass layers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "HierarchyDoc", into = "HierarchyDoc")]
pub struct ClassHierarchy {
    t: usize,
    layer_sizes: Vec<usize>,
    /// `parent_of[l][i]`: superclass in layer `l` of node `i` of layer `l-1` (leaves for `l = 0`).
    parent_of: Vec<Vec<usize>>,
    /// `leaf_ancestors[c][l]`.
    leaf_ancestors: Vec<Vec<usize>>,
    prototypes: Vec<Matrix>,
}

/// Sizes of the superclass layers for `n_classes` leaves and branching `t`.
pub fn layer_sizes(n_classes: usize, t: usize) -> Result<Vec<usize>> {
    if t < 2 {
        return Err(Error::param("t", format!("must be >= 2, got {t}")));
    }
    if n_classes < t {
        return Err(Error::param("t", format!("{t} exceeds the number of classes {n_classes}")));
    }
    let mut sizes = vec![n_classes / t];
    loop {
        let next = sizes[sizes.len() - 1] / t;
        if next < t {
            break;
        }
        sizes.push(next);
    }
    Ok(sizes)
}

/// Clusters leaves into `⌊n/t⌋` superclasses, then clusters each layer's
/// prototypes into `⌊r/t⌋` parents while that leaves at least `t` nodes.
pub fn build_hierarchy(sem: &SemanticTable, t: usize, seed: u64) -> Result<ClassHierarchy> {
    let sizes = layer_sizes(sem.len(), t)?;
    let mut parent_of = Vec::with_capacity(sizes.len());
    let mut leaf_ancestors: Vec<Vec<usize>> = vec![Vec::with_capacity(sizes.len()); sem.len()];
    let mut prototypes = Vec::with_capacity(sizes.len());
    let mut lower = sem.vectors().clone();

    for (l, &r) in sizes.iter().enumerate() {
        let km = kmeans(&lower, r, seed.wrapping_add(l as u64))?;
        for (c, anc) in leaf_ancestors.iter_mut().enumerate() {
            let below = if l == 0 { c } else { anc[l - 1] };
            anc.push(km.assignments[below]);
        }
        let protos = leaf_means(sem.vectors(), leaf_ancestors.iter().map(|a| a[l]), r);
        parent_of.push(km.assignments);
        lower = protos.clone();
        prototypes.push(protos);
    }
    Ok(ClassHierarchy { t, layer_sizes: sizes, parent_of, leaf_ancestors, prototypes })
}

fn leaf_means(vectors: &Matrix, membership: impl Iterator<Item = usize>, r: usize) -> Matrix {
    let mut sums = Matrix::zeros(r, vectors.cols());
    let mut counts = vec![0usize; r];
    for (row, s) in vectors.row_iter().zip(membership) {
        axpy(1.0, row, sums.row_mut(s));
        counts[s] += 1;
    }
    for (s, &cnt) in counts.iter().enumerate() {
        if cnt > 0 {
            sums.row_mut(s).iter_mut().for_each(|v| *v /= cnt as f64);
        }
    }
    sums
}

impl ClassHierarchy {
    /// Assembles a hierarchy from explicit parent maps and prototypes, validating structure.
    pub fn from_parts(
        t: usize,
        parent_of: Vec<Vec<usize>>,
        prototypes: Vec<Matrix>,
    ) -> Result<Self> {
        if parent_of.is_empty() {
            return Err(Error::Invalid("hierarchy needs at least one superclass layer".into()));
        }
        if prototypes.len() != parent_of.len() {
            return Err(Error::Invalid(format!(
                "{} parent maps but {} prototype layers",
                parent_of.len(),
                prototypes.len()
            )));
        }
        let layer_sizes: Vec<usize> = prototypes.iter().map(Matrix::rows).collect();
        let dim = prototypes[0].cols();
        for (l, map) in parent_of.iter().enumerate() {
            if l > 0 && map.len() != layer_sizes[l - 1] {
                return Err(Error::Invalid(format!(
                    "parent_of[{l}] has {} entries, layer {} has {} nodes",
                    map.len(),
                    l - 1,
                    layer_sizes[l - 1]
                )));
            }
            if let Some(&bad) = map.iter().find(|&&p| p >= layer_sizes[l]) {
                return Err(Error::Invalid(format!(
                    "parent_of[{l}] references superclass {bad}, layer has {}",
                    layer_sizes[l]
                )));
            }
            if prototypes[l].cols() != dim {
                return Err(Error::Invalid(format!("prototype dimension differs in layer {l}")));
            }
        }
        let leaf_ancestors = parent_of[0]
            .iter()
            .map(|&p0| {
                let mut anc = vec![p0];
                for map in &parent_of[1..] {
                    let last = anc[anc.len() - 1];
                    anc.push(map[last]);
                }
                anc
            })
            .collect();
        Ok(ClassHierarchy { t, layer_sizes, parent_of, leaf_ancestors, prototypes })
    }

    pub fn t(&self) -> usize {
        self.t
    }

    pub fn n_layers(&self) -> usize {
        self.layer_sizes.len()
    }

    pub fn n_classes(&self) -> usize {
        self.leaf_ancestors.len()
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn parent_of(&self, layer: usize) -> &[usize] {
        &self.parent_of[layer]
    }

    pub fn prototypes(&self, layer: usize) -> &Matrix {
        &self.prototypes[layer]
    }

    pub fn semantic_dim(&self) -> usize {
        self.prototypes[0].cols()
    }

    /// Superclass of `class` in every layer, finest first.
    pub fn ancestors_of(&self, class: usize) -> Result<&[usize]> {
        self.leaf_ancestors
            .get(class)
            .map(Vec::as_slice)
            .ok_or(Error::OutOfRange { what: "class", index: class, len: self.n_classes() })
    }

    /// Leaves whose layer-`layer` ancestor is `node`.
    pub fn leaves_under(&self, layer: usize, node: usize) -> Vec<usize> {
        (0..self.n_classes()).filter(|&c| self.leaf_ancestors[c][layer] == node).collect()
    }

    /// Nodes of layer `layer - 1` whose parent is `node` (leaves when `layer == 0`).
    pub fn children_of(&self, layer: usize, node: usize) -> Vec<usize> {
        self.parent_of[layer].iter().enumerate().filter(|(_, &p)| p == node).map(|(i, _)| i).collect()
    }

    /// Per-sample superclass semantic matrix for `layer`: row `i` is the
    /// prototype of the layer-`layer` ancestor of `labels[i]`.
    pub fn expand_superclass_matrix(&self, layer: usize, labels: &[usize]) -> Result<Matrix> {
        if layer >= self.n_layers() {
            return Err(Error::OutOfRange { what: "layer", index: layer, len: self.n_layers() });
        }
        let protos = &self.prototypes[layer];
        let mut out = Matrix::zeros(labels.len(), protos.cols());
        for (i, &c) in labels.iter().enumerate() {
            let s = self.ancestors_of(c)?[layer];
            out.row_mut(i).copy_from_slice(protos.row(s));
        }
        Ok(out)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("hierarchy serialises")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Format(format!("hierarchy JSON: {e}")))
    }
}

#[derive(Serialize, Deserialize)]
struct HierarchyDoc {
    t: usize,
    n_r: usize,
    layer_sizes: Vec<usize>,
    parent_of: Vec<Vec<usize>>,
    prototypes: Vec<Vec<Vec<f64>>>,
}

impl From<ClassHierarchy> for HierarchyDoc {
    fn from(h: ClassHierarchy) -> Self {
        HierarchyDoc {
            t: h.t,
            n_r: h.layer_sizes.len(),
            layer_sizes: h.layer_sizes,
            parent_of: h.parent_of,
            prototypes: h.prototypes.iter().map(|m| m.row_iter().map(<[f64]>::to_vec).collect()).collect(),
        }
    }
}

impl TryFrom<HierarchyDoc> for ClassHierarchy {
    type Error = Error;

    fn try_from(doc: HierarchyDoc) -> Result<Self> {
        let prototypes = doc.prototypes.iter().map(|rows| Matrix::from_rows(rows)).collect::<Result<Vec<_>>>()?;
        let h = ClassHierarchy::from_parts(doc.t, doc.parent_of, prototypes)?;
        if doc.n_r != h.n_layers() || doc.layer_sizes != h.layer_sizes {
            return Err(Error::Invalid(format!(
                "declared n_r {} / layer_sizes {:?} disagree with parent maps {:?}",
                doc.n_r, doc.layer_sizes, h.layer_sizes
            )));
        }
        Ok(h)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_table(n: usize, d: usize, seen: usize, seed: u64) -> SemanticTable {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v = Matrix::from_fn(n, d, |_, _| rng.random_range(-1.0..1.0));
        SemanticTable::new((0..n).map(|i| format!("c{i}")).collect(), v, seen).unwrap()
    }

    #[test]
    fn size_rule() {
        assert_eq!(layer_sizes(200, 5).unwrap(), vec![40, 8]);
        assert_eq!(layer_sizes(4, 2).unwrap(), vec![2]);
        assert_eq!(layer_sizes(50, 5).unwrap(), vec![10]);
        assert_eq!(layer_sizes(5, 3).unwrap(), vec![1]);
        assert!(layer_sizes(3, 5).is_err());
        assert!(layer_sizes(10, 1).is_err());
    }

    #[test]
    fn single_layer_example() {
        let sem = random_table(4, 3, 2, 1);
        let h = build_hierarchy(&sem, 2, 0).unwrap();
        assert_eq!(h.layer_sizes(), &[2]);
        assert_eq!(h.ancestors_of(3).unwrap().len(), 1);
        assert!(matches!(h.ancestors_of(4), Err(Error::OutOfRange { .. })));
    }

    #[test]
    fn two_layer_paths_are_consistent() {
        let sem = random_table(200, 10, 150, 2);
        let h = build_hierarchy(&sem, 5, 7).unwrap();
        assert_eq!(h.layer_sizes(), &[40, 8]);
        for c in 0..200 {
            let anc = h.ancestors_of(c).unwrap();
            assert_eq!(anc[0], h.parent_of(0)[c]);
            assert_eq!(anc[1], h.parent_of(1)[anc[0]]);
        }
        // leaves grouped by ancestor reproduce the parent maps
        for l in 0..2 {
            for node in 0..h.layer_sizes()[l] {
                let leaves = h.leaves_under(l, node);
                assert!(!leaves.is_empty());
                let expected: Vec<usize> = (0..200)
                    .filter(|&c| {
                        let mut x = h.parent_of(0)[c];
                        for up in 1..=l {
                            x = h.parent_of(up)[x];
                        }
                        x == node
                    })
                    .collect();
                assert_eq!(leaves, expected);
            }
        }
    }

    #[test]
    fn prototypes_are_leaf_means() {
        let sem = random_table(60, 6, 40, 3);
        let h = build_hierarchy(&sem, 3, 1).unwrap();
        assert_eq!(h.layer_sizes(), &[20, 6]);
        for l in 0..h.n_layers() {
            for node in 0..h.layer_sizes()[l] {
                let leaves = h.leaves_under(l, node);
                for d in 0..6 {
                    let mean: f64 = leaves.iter().map(|&c| sem.vector(c)[d]).sum::<f64>() / leaves.len() as f64;
                    assert!((mean - h.prototypes(l)[(node, d)]).abs() <= 1e-10);
                }
            }
        }
        assert_eq!(h, build_hierarchy(&sem, 3, 1).unwrap());
    }

    #[test]
    fn expanded_rows_are_prototypes() {
        let sem = random_table(30, 4, 20, 4);
        let h = build_hierarchy(&sem, 3, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let labels: Vec<usize> = (0..50).map(|_| rng.random_range(0..20)).collect();
        for l in 0..h.n_layers() {
            let e = h.expand_superclass_matrix(l, &labels).unwrap();
            for (i, &c) in labels.iter().enumerate() {
                let s = h.ancestors_of(c).unwrap()[l];
                assert_eq!(e.row(i), h.prototypes(l).row(s));
            }
        }
        let same = h.expand_superclass_matrix(0, &[5, 5, 5]).unwrap();
        assert_eq!(same.row(0), same.row(2));
        assert!(h.expand_superclass_matrix(0, &[30]).is_err());
        assert!(h.expand_superclass_matrix(9, &[0]).is_err());
    }

    #[test]
    fn json_round_trip() {
        let sem = random_table(40, 5, 30, 6);
        let h = build_hierarchy(&sem, 2, 3).unwrap();
        let back = ClassHierarchy::from_json(&h.to_json()).unwrap();
        assert_eq!(back, h);
        let doc: serde_json::Value = serde_json::from_str(&h.to_json()).unwrap();
        assert_eq!(doc["n_r"], serde_json::json!(h.n_layers()));
        assert_eq!(doc["layer_sizes"], serde_json::json!([20, 10, 5, 2]));
    }

    #[test]
    fn json_rejects_inconsistent_documents() {
        let bad = r#"{"t":2,"n_r":1,"layer_sizes":[2],"parent_of":[[0,2]],"prototypes":[[[0.0],[1.0]]]}"#;
        assert!(ClassHierarchy::from_json(bad).is_err());
        let lying = r#"{"t":2,"n_r":2,"layer_sizes":[2],"parent_of":[[0,1]],"prototypes":[[[0.0],[1.0]]]}"#;
        assert!(ClassHierarchy::from_json(lying).is_err());
    }

    #[test]
    fn table_validation() {
        let v = Matrix::zeros(2, 2);
        assert!(SemanticTable::new(vec!["a".into(), "a".into()], v.clone(), 1).is_err());
        assert!(SemanticTable::new(vec!["a".into()], v.clone(), 1).is_err());
        let t = SemanticTable::new(vec!["a".into(), "b".into()], v, 1).unwrap();
        assert_eq!(t.unseen_indices(), 1..2);
        assert_eq!(t.index_of("b"), Some(1));
    }
}
