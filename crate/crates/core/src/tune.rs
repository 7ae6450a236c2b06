//! Hyperparameter selection by class-wise cross-validation on the seen classes.
//!
//! Each fold holds out a group of seen classes, learns the class-level
//! projection on the rest and scores top-1 nearest-prototype accuracy on the
//! held-out classes' samples.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::embed_prototypes;
use crate::linalg::{dot, Matrix};
use crate::pipeline::{Dataset, RunConfig};
use crate::projection::{learn_class_projection, GraphRegulariser, LayerParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grid {
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub epsilon: Vec<f64>,
}

impl Default for Grid {
    fn default() -> Self {
        let unit: Vec<f64> = (1..=9).map(|i| i as f64 / 10.0).collect();
        Grid { alpha: unit.clone(), beta: unit, epsilon: vec![0.0, 1e-4, 1e-3, 1e-2, 1e-1] }
    }
}

impl Grid {
    /// Grid points in `alpha`-major order, inheriting the remaining fields from `base`.
    pub fn points(&self, base: &LayerParams) -> Vec<LayerParams> {
        let mut out = Vec::with_capacity(self.alpha.len() * self.beta.len() * self.epsilon.len());
        for &alpha in &self.alpha {
            for &beta in &self.beta {
                for &epsilon in &self.epsilon {
                    out.push(LayerParams { alpha, beta, epsilon, ..*base });
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneResult {
    pub best: LayerParams,
    pub best_score: f64,
    /// Mean held-out accuracy for every grid point, in grid order.
    pub scores: Vec<(LayerParams, f64)>,
}

fn split_folds(classes: &[usize], folds: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut shuffled = classes.to_vec();
    shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut out = vec![Vec::new(); folds];
    for (i, c) in shuffled.into_iter().enumerate() {
        out[i % folds].push(c);
    }
    out
}

/// Nearest-prototype accuracy of `w` on `f` (unit rows) restricted to `classes`.
fn held_out_accuracy(w: &Matrix, f: &Matrix, truth: &[usize], sem: &Matrix, classes: &[usize]) -> Result<f64> {
    let protos = embed_prototypes(w, &sem.select_rows(classes))?;
    let norms: Vec<f64> = protos.row_iter().map(|r| dot(r, r).sqrt()).collect();
    let mut hits = 0;
    for (row, &t) in f.row_iter().zip(truth) {
        let mut best = (0, f64::NEG_INFINITY);
        for (j, n) in norms.iter().enumerate() {
            let sim = if *n > 0.0 { dot(row, protos.row(j)) / n } else { 0.0 };
            if sim > best.1 {
                best = (j, sim);
            }
        }
        hits += usize::from(classes[best.0] == t);
    }
    Ok(hits as f64 / truth.len() as f64)
}

/// `folds`-fold class-wise cross-validation over `grid`; `gamma`, `max_iters`
/// and `rel_tol` come from `cfg.class`.
pub fn tune(data: &Dataset, cfg: &RunConfig, grid: &Grid, folds: usize) -> Result<TuneResult> {
    cfg.validate()?;
    let points = grid.points(&cfg.class);
    if points.is_empty() {
        return Err(Error::param("grid", "empty search grid"));
    }
    for p in &points {
        p.validate()?;
    }
    let train = data.train_indices();
    let mut seen: Vec<usize> = train.iter().map(|&i| data.labels[i]).collect();
    seen.sort_unstable();
    seen.dedup();
    if folds < 2 || folds > seen.len() {
        return Err(Error::param("folds", format!("need 2 <= folds <= {} seen classes, got {folds}", seen.len())));
    }
    let needs_graph = points.iter().any(|p| p.epsilon > 0.0);
    let sem = data.semantics.vectors();
    let mut totals = vec![0.0; points.len()];

    for mut fold in split_folds(&seen, folds, cfg.seed) {
        fold.sort_unstable();
        let (fit_idx, held_idx): (Vec<usize>, Vec<usize>) =
            train.iter().partition(|&&i| fold.binary_search(&data.labels[i]).is_err());
        let f = data.features.select_rows(&fit_idx).normalize_rows()?;
        let z = sem.select_rows(&fit_idx.iter().map(|&i| data.labels[i]).collect::<Vec<_>>());
        let held = data.features.select_rows(&held_idx).normalize_rows()?;
        let truth: Vec<usize> = held_idx.iter().map(|&i| data.labels[i]).collect();
        let graph = if needs_graph {
            if f.rows() > cfg.max_graph_samples {
                return Err(Error::param("max_graph_samples", format!("{} fold samples exceed {}", f.rows(), cfg.max_graph_samples)));
            }
            Some(GraphRegulariser::from_features(&f, cfg.k)?)
        } else {
            None
        };
        let scores = points
            .par_iter()
            .map(|p| {
                let fit = learn_class_projection(&f, &z, graph.as_ref(), p)?;
                held_out_accuracy(&fit.w, &held, &truth, sem, &fold)
            })
            .collect::<Result<Vec<f64>>>()?;
        totals.iter_mut().zip(scores).for_each(|(t, s)| *t += s);
    }

    let scores: Vec<(LayerParams, f64)> = points.into_iter().zip(totals.into_iter().map(|t| t / folds as f64)).collect();
    let (best, best_score) = scores.iter().fold(scores[0], |b, &s| if s.1 > b.1 { s } else { b });
    Ok(TuneResult { best, best_score, scores })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{gen_synthetic, SyntheticSpec};

    fn data() -> Dataset {
        let spec = SyntheticSpec { p: 15, q: 3, d_f: 10, d_z: 6, n_per_class: 6, noise_sigma: 0.05, seed: 2 };
        Dataset::from_synthetic(&gen_synthetic(&spec).unwrap()).unwrap()
    }

    #[test]
    fn folds_partition_classes() {
        let classes: Vec<usize> = (0..12).collect();
        let folds = split_folds(&classes, 5, 1);
        let mut all: Vec<usize> = folds.concat();
        all.sort_unstable();
        assert_eq!(all, classes);
        assert!(folds.iter().all(|f| f.len() >= 2));
        assert_eq!(folds, split_folds(&classes, 5, 1));
    }

    #[test]
    fn small_grid_search() {
        let d = data();
        let grid = Grid { alpha: vec![0.2, 0.8], beta: vec![0.5], epsilon: vec![0.0, 1e-2] };
        let cfg = RunConfig { k: 5, ..Default::default() };
        let r = tune(&d, &cfg, &grid, 5).unwrap();
        assert_eq!(r.scores.len(), 4);
        assert!(r.scores.iter().all(|(_, s)| (0.0..=1.0).contains(s)));
        assert!(r.scores.iter().all(|(_, s)| *s <= r.best_score));
        assert_eq!(r, tune(&d, &cfg, &grid, 5).unwrap());
        assert!(tune(&d, &cfg, &grid, 1).is_err());
        assert!(tune(&d, &cfg, &Grid { alpha: vec![], ..grid }, 5).is_err());
    }

    #[test]
    fn default_grid_shape() {
        let g = Grid::default();
        assert_eq!(g.points(&LayerParams::default()).len(), 9 * 9 * 5);
    }
}
