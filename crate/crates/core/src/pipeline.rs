//! End-to-end training and evaluation over a labelled dataset.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{
    gzsl_report, hit_at_k, sample_episodes, summarise_episodes, top1_accuracy, EpisodeClassifier, EpisodePool,
    EpisodeSpec, EvalReport,
};
use crate::graph::DEFAULT_NEIGHBOURS;
use crate::hierarchy::{ClassHierarchy, SemanticTable};
use crate::inference::{HierarchicalClassifier, Prediction, DEFAULT_FSL_LAMBDA, DEFAULT_TOP_K, RANK_DEPTH};
use crate::linalg::Matrix;
use crate::model::ProjectionModel;
use crate::projection::{learn_class_projection, learn_projection, GraphRegulariser, LayerParams};
use crate::synth::SyntheticData;

pub const DEFAULT_T: usize = 5;
pub const DEFAULT_MAX_GRAPH_SAMPLES: usize = 5000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Zsl,
    Gzsl,
    Fsl,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Zsl => "zsl",
            Mode::Gzsl => "gzsl",
            Mode::Fsl => "fsl",
        }
    }
}

fn d_t() -> usize {
    DEFAULT_T
}
fn d_k() -> usize {
    DEFAULT_NEIGHBOURS
}
fn d_top_k() -> usize {
    DEFAULT_TOP_K
}
fn d_lambda() -> f64 {
    DEFAULT_FSL_LAMBDA
}
fn d_max_graph() -> usize {
    DEFAULT_MAX_GRAPH_SAMPLES
}
fn d_mode() -> Mode {
    Mode::Zsl
}
fn d_layer() -> LayerParams {
    LayerParams::default()
}

/// Every knob of a run. All fields have defaults, so `{}` is a valid config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Hierarchy branching parameter.
    #[serde(default = "d_t")]
    pub t: usize,
    /// Neighbours per sample in the similarity graph.
    #[serde(default = "d_k")]
    pub k: usize,
    /// Shared by every superclass layer.
    #[serde(default = "d_layer")]
    pub layer: LayerParams,
    #[serde(default = "d_layer")]
    pub class: LayerParams,
    #[serde(default = "d_top_k")]
    pub top_k: usize,
    #[serde(default = "d_lambda")]
    pub fsl_lambda: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "d_mode")]
    pub mode: Mode,
    /// Largest training set for which the dense sample graph is built.
    #[serde(default = "d_max_graph")]
    pub max_graph_samples: usize,
    /// Few-shot episodes; `seed` here is ignored in favour of the run seed.
    #[serde(default)]
    pub episodes: EpisodeSpec,
}

impl Default for RunConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("defaults deserialise")
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.t < 2 {
            return Err(Error::param("t", format!("must be >= 2, got {}", self.t)));
        }
        if self.k == 0 {
            return Err(Error::param("k", "must be at least 1"));
        }
        if self.top_k == 0 {
            return Err(Error::param("top_k", "must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.fsl_lambda) {
            return Err(Error::param("fsl_lambda", format!("must lie in [0, 1], got {}", self.fsl_lambda)));
        }
        if self.max_graph_samples < 2 {
            return Err(Error::param("max_graph_samples", "must be at least 2"));
        }
        let e = &self.episodes;
        if e.n_way == 0 || e.k_shot == 0 || e.n_query == 0 || e.n_episodes == 0 {
            return Err(Error::param("episodes", "n_way, k_shot, n_query and n_episodes must be positive"));
        }
        self.layer.validate()?;
        self.class.validate()
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(s).map_err(|e| Error::Format(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Samples of all classes plus the seen/unseen split.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub semantics: SemanticTable,
    pub features: Matrix,
    /// Class index of every sample.
    pub labels: Vec<usize>,
    /// Seen-class samples held out of training for generalised evaluation, ascending.
    pub seen_test: Vec<usize>,
}

impl Dataset {
    pub fn new(semantics: SemanticTable, features: Matrix, labels: Vec<usize>, mut seen_test: Vec<usize>) -> Result<Self> {
        if features.rows() != labels.len() {
            return Err(Error::shape("Dataset", format!("{} feature rows, {} labels", features.rows(), labels.len())));
        }
        if let Some(&c) = labels.iter().find(|&&c| c >= semantics.len()) {
            return Err(Error::OutOfRange { what: "class label", index: c, len: semantics.len() });
        }
        seen_test.sort_unstable();
        seen_test.dedup();
        for &i in &seen_test {
            if i >= labels.len() {
                return Err(Error::OutOfRange { what: "seen_test sample", index: i, len: labels.len() });
            }
            if !semantics.is_seen(labels[i]) {
                return Err(Error::Invalid(format!("seen_test sample {i} belongs to unseen class `{}`", semantics.names()[labels[i]])));
            }
        }
        Ok(Dataset { semantics, features, labels, seen_test })
    }

    /// Training rows and test rows of a synthetic draw stacked, in that order.
    pub fn from_synthetic(data: &SyntheticData) -> Result<Self> {
        let (tr, te) = (&data.train_features, &data.test_features);
        let features = Matrix::from_vec(tr.rows() + te.rows(), tr.cols(), [tr.as_slice(), te.as_slice()].concat())?;
        let labels: Vec<usize> = data.train_labels.iter().chain(&data.test_labels).copied().collect();
        let seen_test = (tr.rows()..labels.len()).filter(|&i| data.semantics.is_seen(labels[i])).collect();
        Dataset::new(data.semantics.clone(), features, labels, seen_test)
    }

    /// Seen-class samples not held out.
    pub fn train_indices(&self) -> Vec<usize> {
        (0..self.labels.len())
            .filter(|&i| self.semantics.is_seen(self.labels[i]) && self.seen_test.binary_search(&i).is_err())
            .collect()
    }

    pub fn unseen_indices(&self) -> Vec<usize> {
        (0..self.labels.len()).filter(|&i| !self.semantics.is_seen(self.labels[i])).collect()
    }

    /// Unseen-class samples and held-out seen samples, ascending.
    pub fn gzsl_indices(&self) -> Vec<usize> {
        let mut idx = self.unseen_indices();
        idx.extend(&self.seen_test);
        idx.sort_unstable();
        idx
    }

    fn labels_at(&self, idx: &[usize]) -> Vec<usize> {
        idx.iter().map(|&i| self.labels[i]).collect()
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub model: ProjectionModel,
    /// Objective traces, superclass layers first (finest first), then the class level.
    pub traces: Vec<Vec<f64>>,
    pub converged: Vec<bool>,
}

/// Learns one projection per superclass layer plus the class-level projection.
pub fn train(data: &Dataset, h: &ClassHierarchy, cfg: &RunConfig) -> Result<TrainOutput> {
    cfg.validate()?;
    if h.n_classes() != data.semantics.len() {
        return Err(Error::Invalid(format!(
            "hierarchy covers {} classes, semantics list {}",
            h.n_classes(),
            data.semantics.len()
        )));
    }
    if h.semantic_dim() != data.semantics.dim() {
        return Err(Error::shape("train", format!("hierarchy d_z {}, semantics d_z {}", h.semantic_dim(), data.semantics.dim())));
    }
    let idx = data.train_indices();
    if idx.len() < 2 {
        return Err(Error::Invalid(format!("need at least 2 training samples, got {}", idx.len())));
    }
    let f = data.features.select_rows(&idx).normalize_rows()?;
    let labels = data.labels_at(&idx);

    let graph = if cfg.layer.epsilon > 0.0 || cfg.class.epsilon > 0.0 {
        if f.rows() > cfg.max_graph_samples {
            return Err(Error::param(
                "max_graph_samples",
                format!("{} training samples exceed the dense graph limit {}; raise it or set epsilon to 0", f.rows(), cfg.max_graph_samples),
            ));
        }
        Some(GraphRegulariser::from_features(&f, cfg.k)?)
    } else {
        None
    };

    let n_r = h.n_layers();
    let fits = (0..=n_r)
        .into_par_iter()
        .map(|l| {
            if l < n_r {
                let e0 = h.expand_superclass_matrix(l, &labels)?;
                learn_projection(&f, &e0, graph.as_ref(), &cfg.layer)
            } else {
                let z = data.semantics.vectors().select_rows(&labels);
                learn_class_projection(&f, &z, graph.as_ref(), &cfg.class)
            }
        })
        .collect::<Result<Vec<_>>>()?;

    let traces = fits.iter().map(|fit| fit.trace.clone()).collect();
    let converged = fits.iter().map(|fit| fit.converged).collect();
    let mut ws: Vec<Matrix> = Vec::with_capacity(n_r + 1);
    let mut es: Vec<Matrix> = Vec::with_capacity(n_r + 1);
    for fit in fits {
        ws.push(fit.w);
        es.push(fit.e_tilde);
    }
    let class_w = ws.pop().expect("class fit");
    let mut model = ProjectionModel::new(ws, class_w, vec![cfg.layer; n_r], cfg.class)?;
    model.final_e = Some(es);
    Ok(TrainOutput { model, traces, converged })
}

#[derive(Debug, Clone)]
pub struct EvalOutput {
    pub report: EvalReport,
    /// Dataset row of each prediction.
    pub sample_ids: Vec<usize>,
    pub predictions: Vec<Prediction>,
}

/// Few-shot adapter: per episode, mixes support means into the class prototypes.
pub struct FewShot<'a> {
    base: HierarchicalClassifier<'a>,
    lambda: f64,
}

impl<'a> FewShot<'a> {
    pub fn new(base: HierarchicalClassifier<'a>, lambda: f64) -> Self {
        FewShot { base, lambda }
    }

    pub fn predict_episode(&self, support: &Matrix, support_labels: &[usize], queries: &Matrix) -> Result<Vec<Prediction>> {
        let mut ways = support_labels.to_vec();
        ways.sort_unstable();
        ways.dedup();
        self.base.clone().with_support(support, support_labels, self.lambda)?.predict(queries, &ways)
    }
}

impl EpisodeClassifier for FewShot<'_> {
    fn classify(&self, support: &Matrix, support_labels: &[usize], queries: &Matrix) -> Result<Vec<usize>> {
        Ok(self.predict_episode(support, support_labels, queries)?.into_iter().map(|p| p.label).collect())
    }
}

pub fn evaluate(data: &Dataset, h: &ClassHierarchy, model: &ProjectionModel, cfg: &RunConfig, mode: Mode) -> Result<EvalOutput> {
    cfg.validate()?;
    let clf = HierarchicalClassifier::new(model, h, &data.semantics, cfg.top_k)?;
    let unseen: Vec<usize> = data.semantics.unseen_indices().collect();
    match mode {
        Mode::Zsl | Mode::Gzsl => {
            let (ids, allowed) = if mode == Mode::Zsl {
                (data.unseen_indices(), unseen)
            } else {
                if data.seen_test.is_empty() {
                    return Err(Error::Invalid("gzsl mode needs held-out seen samples (seen_test in the split)".into()));
                }
                (data.gzsl_indices(), (0..data.semantics.len()).collect())
            };
            if ids.is_empty() {
                return Err(Error::Invalid(format!("no test samples for {} mode", mode.as_str())));
            }
            let truth = data.labels_at(&ids);
            let predictions = clf.predict(&data.features.select_rows(&ids), &allowed)?;
            let pred: Vec<usize> = predictions.iter().map(|p| p.label).collect();
            let mut report = if mode == Mode::Zsl {
                EvalReport::basic("zsl", &pred, &truth)?
            } else {
                gzsl_report(&pred, &truth, |c| data.semantics.is_seen(c))?
            };
            let ranked: Vec<Vec<usize>> = predictions.iter().map(|p| p.ranking.clone()).collect();
            report.hit_at_k = Some(hit_at_k(&ranked, &truth, RANK_DEPTH)?);
            report.k = Some(RANK_DEPTH);
            report.fallbacks = Some(predictions.iter().filter(|p| p.candidates.fallback).count());
            Ok(EvalOutput { report, sample_ids: ids, predictions })
        }
        Mode::Fsl => {
            let ids = data.unseen_indices();
            let pool_features = data.features.select_rows(&ids);
            let pool_labels = data.labels_at(&ids);
            let pool = EpisodePool { features: &pool_features, labels: &pool_labels };
            let spec = EpisodeSpec { seed: cfg.seed, ..cfg.episodes };
            let episodes = sample_episodes(&pool, &spec)?;
            let fsl = FewShot::new(clf, cfg.fsl_lambda);
            let runs = episodes
                .par_iter()
                .map(|ep| {
                    let support_labels: Vec<usize> = ep.support.iter().map(|&i| pool_labels[i]).collect();
                    fsl.predict_episode(&pool_features.select_rows(&ep.support), &support_labels, &pool_features.select_rows(&ep.queries))
                })
                .collect::<Result<Vec<_>>>()?;
            let mut accs = Vec::with_capacity(runs.len());
            let (mut sample_ids, mut predictions, mut truth) = (Vec::new(), Vec::new(), Vec::new());
            for (ep, preds) in episodes.iter().zip(runs) {
                let t: Vec<usize> = ep.queries.iter().map(|&i| pool_labels[i]).collect();
                let p: Vec<usize> = preds.iter().map(|p| p.label).collect();
                accs.push(top1_accuracy(&p, &t)?);
                sample_ids.extend(ep.queries.iter().map(|&i| ids[i]));
                truth.extend(t);
                predictions.extend(preds);
            }
            let summary = summarise_episodes(&accs);
            let pred: Vec<usize> = predictions.iter().map(|p| p.label).collect();
            let mut report = EvalReport::basic("fsl", &pred, &truth)?;
            report.top1 = summary.mean;
            report.ci95 = Some(summary.ci95);
            report.fallbacks = Some(predictions.iter().filter(|p| p.candidates.fallback).count());
            Ok(EvalOutput { report, sample_ids, predictions })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hierarchy::build_hierarchy;
    use crate::synth::{gen_synthetic, SyntheticSpec};

    fn small() -> (Dataset, ClassHierarchy) {
        let spec = SyntheticSpec { p: 16, q: 4, d_f: 10, d_z: 6, n_per_class: 8, noise_sigma: 0.02, seed: 3 };
        let data = Dataset::from_synthetic(&gen_synthetic(&spec).unwrap()).unwrap();
        let h = build_hierarchy(&data.semantics, 2, 0).unwrap();
        (data, h)
    }

    #[test]
    fn config_defaults_and_validation() {
        let cfg = RunConfig::default();
        assert_eq!((cfg.t, cfg.k, cfg.top_k, cfg.mode), (5, 10, 3, Mode::Zsl));
        assert_eq!(cfg.layer.gamma, 0.01);
        assert!(RunConfig::from_json(r#"{"t": 1}"#).is_err());
        assert!(RunConfig::from_json(r#"{"bogus": 1}"#).is_err());
        assert!(RunConfig::from_json(r#"{"layer": {"alpha": 1.5, "beta": 0.5, "epsilon": 0}}"#).is_err());
        let cfg = RunConfig::from_json(r#"{"mode": "gzsl", "class": {"alpha": 0.2, "beta": 0.4, "epsilon": 0}}"#).unwrap();
        assert_eq!(cfg.mode, Mode::Gzsl);
        assert_eq!(cfg.class.alpha, 0.2);
    }

    #[test]
    fn dataset_partitions() {
        let (data, _) = small();
        let train = data.train_indices();
        let unseen = data.unseen_indices();
        assert_eq!(train.len(), 16 * 8);
        assert_eq!(unseen.len(), 4 * 8);
        assert_eq!(data.seen_test.len(), 16 * 8);
        assert_eq!(data.gzsl_indices().len(), 20 * 8);
        assert!(train.iter().all(|i| !data.seen_test.contains(i)));
        let bad = Dataset::new(data.semantics.clone(), data.features.clone(), data.labels.clone(), vec![unseen[0]]);
        assert!(bad.is_err());
    }

    #[test]
    fn train_and_evaluate_all_modes() {
        let (data, h) = small();
        let cfg = RunConfig { k: 5, episodes: EpisodeSpec { n_episodes: 20, n_way: 3, k_shot: 2, n_query: 4, seed: 0 }, ..Default::default() };
        let out = train(&data, &h, &cfg).unwrap();
        assert_eq!(out.model.n_layers(), h.n_layers());
        assert_eq!(out.traces.len(), h.n_layers() + 1);
        for t in &out.traces {
            for w in t.windows(2) {
                assert!(w[1] <= w[0] * (1.0 + 1e-9));
            }
        }
        let zsl = evaluate(&data, &h, &out.model, &cfg, Mode::Zsl).unwrap();
        assert_eq!(zsl.report.n_test, 32);
        assert!(zsl.predictions.iter().all(|p| p.label >= 16));
        let gzsl = evaluate(&data, &h, &out.model, &cfg, Mode::Gzsl).unwrap();
        let (s, u, hm) = (gzsl.report.acc_s.unwrap(), gzsl.report.acc_u.unwrap(), gzsl.report.hm.unwrap());
        assert!((hm - crate::eval::harmonic_mean(s, u)).abs() < 1e-15);
        let fsl = evaluate(&data, &h, &out.model, &cfg, Mode::Fsl).unwrap();
        assert!(fsl.report.ci95.is_some());
        assert_eq!(fsl.predictions.len(), 20 * 3 * 4);
        let again = evaluate(&data, &h, &out.model, &cfg, Mode::Fsl).unwrap();
        assert_eq!(fsl.report, again.report);
    }

    #[test]
    fn graph_cap_is_enforced() {
        let (data, h) = small();
        let cfg = RunConfig { k: 5, max_graph_samples: 50, ..Default::default() };
        assert!(matches!(train(&data, &h, &cfg), Err(Error::InvalidParameter { name: "max_graph_samples", .. })));
        let no_graph = RunConfig {
            max_graph_samples: 50,
            layer: LayerParams::new(0.5, 0.5, 0.0),
            class: LayerParams::new(0.5, 0.5, 0.0),
            ..Default::default()
        };
        assert!(train(&data, &h, &no_graph).is_ok());
    }
}
