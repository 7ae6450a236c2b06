//! Synthetic zero-shot benchmark with a planted feature map.
//!
//! Class semantics come from a two-level Gaussian mixture (superclusters of
//! classes), so the learned hierarchy has a ground truth. Features are
//! `z Mᵀ + σ·noise` for a planted `d_f × d_z` map `M` with orthonormal columns.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hierarchy::SemanticTable;
use crate::linalg::{dot, Matrix};

/// Classes per supercluster in the generated semantics.
pub const CLASSES_PER_SUPERCLUSTER: usize = 5;
/// Spread of classes around their supercluster centre, relative to the centre spread.
pub const CLASS_SPREAD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub p: usize,
    pub q: usize,
    pub d_f: usize,
    pub d_z: usize,
    pub n_per_class: usize,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec { p: 40, q: 10, d_f: 32, d_z: 16, n_per_class: 30, noise_sigma: 0.05, seed: 0 }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.p == 0 || self.q == 0 {
            return Err(Error::param("p/q", "need at least one seen and one unseen class"));
        }
        if self.n_per_class == 0 {
            return Err(Error::param("n_per_class", "must be at least 1"));
        }
        if self.d_z == 0 {
            return Err(Error::param("d_z", "must be at least 1"));
        }
        if self.d_f < self.d_z {
            return Err(Error::param("d_f", format!("d_f < d_z ({} < {}): planted map cannot be orthonormal", self.d_f, self.d_z)));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::param("noise_sigma", format!("must be finite and >= 0, got {}", self.noise_sigma)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticData {
    /// Seen classes first, then unseen.
    pub semantics: SemanticTable,
    pub train_features: Matrix,
    pub train_labels: Vec<usize>,
    /// Samples of every class, seen and unseen.
    pub test_features: Matrix,
    pub test_labels: Vec<usize>,
    pub planted: Matrix,
    /// Generating supercluster of each class.
    pub supercluster: Vec<usize>,
}

fn gaussian(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Matrix {
    Matrix::from_fn(r, c, |_, _| rng.sample::<f64, _>(StandardNormal))
}

/// `d_f × d_z` with orthonormal columns (modified Gram–Schmidt on a Gaussian draw).
fn orthonormal_columns(rng: &mut ChaCha8Rng, d_f: usize, d_z: usize) -> Matrix {
    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(d_z);
    while cols.len() < d_z {
        let mut v: Vec<f64> = (0..d_f).map(|_| rng.sample(StandardNormal)).collect();
        for u in &cols {
            let d = dot(&v, u);
            v.iter_mut().zip(u).for_each(|(a, b)| *a -= d * b);
        }
        let n = dot(&v, &v).sqrt();
        if n > 1e-8 {
            cols.push(v.into_iter().map(|x| x / n).collect());
        }
    }
    Matrix::from_fn(d_f, d_z, |i, j| cols[j][i])
}

pub fn gen_synthetic(spec: &SyntheticSpec) -> Result<SyntheticData> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n_classes = spec.p + spec.q;
    let n_super = (n_classes / CLASSES_PER_SUPERCLUSTER).max(1);

    let centres = gaussian(&mut rng, n_super, spec.d_z);
    let generated_super: Vec<usize> = (0..n_classes).map(|c| c % n_super).collect();
    let raw = Matrix::from_fn(n_classes, spec.d_z, |c, j| {
        centres[(generated_super[c], j)] + CLASS_SPREAD * rng.sample::<f64, _>(StandardNormal)
    });
    let raw = raw.normalize_rows()?;

    // unseen classes: one per supercluster in a shuffled order, cycling if q > n_super
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); n_super];
    for c in 0..n_classes {
        members[generated_super[c]].push(c);
    }
    for m in &mut members {
        m.shuffle(&mut rng);
    }
    let mut order: Vec<usize> = (0..n_super).collect();
    order.shuffle(&mut rng);
    let mut unseen = Vec::with_capacity(spec.q);
    let mut round = 0;
    while unseen.len() < spec.q {
        for &s in &order {
            if unseen.len() < spec.q && round < members[s].len() {
                unseen.push(members[s][round]);
            }
        }
        round += 1;
    }
    unseen.sort_unstable();
    let seen: Vec<usize> = (0..n_classes).filter(|c| unseen.binary_search(c).is_err()).collect();
    let ordering: Vec<usize> = seen.iter().chain(&unseen).copied().collect();

    let vectors = raw.select_rows(&ordering);
    let supercluster: Vec<usize> = ordering.iter().map(|&c| generated_super[c]).collect();
    let names: Vec<String> = ordering.iter().map(|&c| format!("class_{c:03}")).collect();
    let semantics = SemanticTable::new(names, vectors, spec.p)?;

    let planted = orthonormal_columns(&mut rng, spec.d_f, spec.d_z);
    let class_features = semantics.vectors().matmul_t(&planted)?;
    let draw = |classes: std::ops::Range<usize>, rng: &mut ChaCha8Rng| -> (Matrix, Vec<usize>) {
        let labels: Vec<usize> = classes.flat_map(|c| std::iter::repeat_n(c, spec.n_per_class)).collect();
        let f = Matrix::from_fn(labels.len(), spec.d_f, |i, j| {
            let noise = if spec.noise_sigma > 0.0 { spec.noise_sigma * rng.sample::<f64, _>(StandardNormal) } else { 0.0 };
            class_features[(labels[i], j)] + noise
        });
        (f, labels)
    };
    let (train_features, train_labels) = draw(0..spec.p, &mut rng);
    let (test_features, test_labels) = draw(0..n_classes, &mut rng);
    Ok(SyntheticData { semantics, train_features, train_labels, test_features, test_labels, planted, supercluster })
}
