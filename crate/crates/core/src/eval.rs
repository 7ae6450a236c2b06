//! Accuracy metrics, generalised zero-shot reports and few-shot episode evaluation.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::seq::{index, IndexedRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;

fn check_pair(pred: &[usize], truth: &[usize]) -> Result<()> {
    if pred.len() != truth.len() {
        return Err(Error::shape("metric", format!("{} predictions, {} labels", pred.len(), truth.len())));
    }
    if truth.is_empty() {
        return Err(Error::param("truth", "empty evaluation set"));
    }
    Ok(())
}

/// Fraction of exact matches.
pub fn top1_accuracy(pred: &[usize], truth: &[usize]) -> Result<f64> {
    check_pair(pred, truth)?;
    let hits = pred.iter().zip(truth).filter(|(p, t)| p == t).count();
    Ok(hits as f64 / truth.len() as f64)
}

/// Accuracy within each true class.
pub fn per_class_accuracy(pred: &[usize], truth: &[usize]) -> Result<BTreeMap<usize, f64>> {
    check_pair(pred, truth)?;
    let mut counts: BTreeMap<usize, (usize, usize)> = BTreeMap::new();
    for (p, t) in pred.iter().zip(truth) {
        let e = counts.entry(*t).or_default();
        e.0 += usize::from(p == t);
        e.1 += 1;
    }
    Ok(counts.into_iter().map(|(c, (hit, n))| (c, hit as f64 / n as f64)).collect())
}

/// Mean over classes of the class-conditional accuracy.
pub fn mean_per_class_accuracy(pred: &[usize], truth: &[usize]) -> Result<f64> {
    let per = per_class_accuracy(pred, truth)?;
    Ok(per.values().sum::<f64>() / per.len() as f64)
}

/// Fraction of samples whose true label is among the first `k` ranked labels.
pub fn hit_at_k(ranked: &[Vec<usize>], truth: &[usize], k: usize) -> Result<f64> {
    if ranked.len() != truth.len() {
        return Err(Error::shape("hit_at_k", format!("{} rankings, {} labels", ranked.len(), truth.len())));
    }
    if truth.is_empty() {
        return Err(Error::param("truth", "empty evaluation set"));
    }
    if k == 0 {
        return Err(Error::param("k", "must be at least 1"));
    }
    let hits = ranked.iter().zip(truth).filter(|(r, t)| r.iter().take(k).any(|c| c == *t)).count();
    Ok(hits as f64 / truth.len() as f64)
}

/// `2ab/(a+b)`, or 0 when both are 0.
pub fn harmonic_mean(a: f64, b: f64) -> f64 {
    if a + b > 0.0 {
        2.0 * a * b / (a + b)
    } else {
        0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub mode: String,
    pub n_test: usize,
    /// Fraction of test samples labelled correctly.
    pub top1: f64,
    /// Mean over classes of the per-class top-1 accuracy.
    pub mean_class_top1: f64,
    pub per_class_top1: BTreeMap<usize, f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hit_at_k: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub acc_s: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub acc_u: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hm: Option<f64>,
    /// Half-width of the 95% confidence interval of `top1` (episodic evaluation).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ci95: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fallbacks: Option<usize>,
}

impl EvalReport {
    /// Plain report for predictions against labels.
    pub fn basic(mode: &str, pred: &[usize], truth: &[usize]) -> Result<Self> {
        Ok(EvalReport {
            mode: mode.to_string(),
            n_test: truth.len(),
            top1: top1_accuracy(pred, truth)?,
            mean_class_top1: mean_per_class_accuracy(pred, truth)?,
            per_class_top1: per_class_accuracy(pred, truth)?,
            hit_at_k: None,
            k: None,
            acc_s: None,
            acc_u: None,
            hm: None,
            ci95: None,
            fallbacks: None,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialises")
    }

    /// Aligned two-column text table; per-class rows use `names` when given.
    pub fn to_table(&self, names: Option<&[String]>) -> String {
        let mut rows: Vec<(String, String)> = vec![
            ("mode".into(), self.mode.clone()),
            ("n_test".into(), self.n_test.to_string()),
            ("top1".into(), format!("{:.4}", self.top1)),
            ("mean_class_top1".into(), format!("{:.4}", self.mean_class_top1)),
        ];
        if let (Some(h), Some(k)) = (self.hit_at_k, self.k) {
            rows.push((format!("hit@{k}"), format!("{h:.4}")));
        }
        for (key, v) in [("acc_s", self.acc_s), ("acc_u", self.acc_u), ("hm", self.hm), ("ci95", self.ci95)] {
            if let Some(v) = v {
                rows.push((key.into(), format!("{v:.4}")));
            }
        }
        if let Some(f) = self.fallbacks {
            rows.push(("fallbacks".into(), f.to_string()));
        }
        for (&c, &a) in &self.per_class_top1 {
            let name = names.and_then(|n| n.get(c)).cloned().unwrap_or_else(|| c.to_string());
            rows.push((format!("class {name}"), format!("{a:.4}")));
        }
        let width = rows.iter().map(|r| r.0.len()).max().unwrap_or(0);
        let mut out = String::new();
        for (k, v) in rows {
            let _ = writeln!(out, "{k:<width$}  {v:>10}");
        }
        out
    }
}

/// Generalised zero-shot report: `acc_s` and `acc_u` are mean per-class
/// accuracies over the seen and unseen parts of the test set.
pub fn gzsl_report(pred: &[usize], truth: &[usize], is_seen: impl Fn(usize) -> bool) -> Result<EvalReport> {
    check_pair(pred, truth)?;
    let (mut ps, mut ts, mut pu, mut tu) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for (&p, &t) in pred.iter().zip(truth) {
        if is_seen(t) {
            ps.push(p);
            ts.push(t);
        } else {
            pu.push(p);
            tu.push(t);
        }
    }
    if ts.is_empty() || tu.is_empty() {
        return Err(Error::Invalid(format!(
            "generalised evaluation needs seen and unseen test samples (got {} seen, {} unseen)",
            ts.len(),
            tu.len()
        )));
    }
    let acc_s = mean_per_class_accuracy(&ps, &ts)?;
    let acc_u = mean_per_class_accuracy(&pu, &tu)?;
    let mut report = EvalReport::basic("gzsl", pred, truth)?;
    report.acc_s = Some(acc_s);
    report.acc_u = Some(acc_u);
    report.hm = Some(harmonic_mean(acc_s, acc_u));
    Ok(report)
}

/// A labelled pool of novel-class samples for episodic evaluation.
#[derive(Debug, Clone)]
pub struct EpisodePool<'a> {
    pub features: &'a Matrix,
    pub labels: &'a [usize],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EpisodeSpec {
    pub n_way: usize,
    pub k_shot: usize,
    /// Queries drawn per class.
    pub n_query: usize,
    pub n_episodes: usize,
    pub seed: u64,
}

impl Default for EpisodeSpec {
    fn default() -> Self {
        EpisodeSpec { n_way: 5, k_shot: 1, n_query: 15, n_episodes: 600, seed: 0 }
    }
}

/// One sampled episode: indices into the pool.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Episode {
    pub classes: Vec<usize>,
    pub support: Vec<usize>,
    pub queries: Vec<usize>,
}

/// Classifier evaluated on episodes.
pub trait EpisodeClassifier: Sync {
    /// Labels for every query row, given the labelled support rows.
    fn classify(&self, support: &Matrix, support_labels: &[usize], queries: &Matrix) -> Result<Vec<usize>>;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSummary {
    pub mean: f64,
    /// `1.96 · stderr` over episodes.
    pub ci95: f64,
    pub n_episodes: usize,
}

/// Draws episodes sequentially from one seeded generator: `n_way` classes
/// without replacement, then `k_shot` support and up to `n_query` query samples per class.
pub fn sample_episodes(pool: &EpisodePool<'_>, spec: &EpisodeSpec) -> Result<Vec<Episode>> {
    if spec.n_way == 0 || spec.k_shot == 0 || spec.n_query == 0 || spec.n_episodes == 0 {
        return Err(Error::param("episode", "n_way, k_shot, n_query and n_episodes must all be positive"));
    }
    if pool.features.rows() != pool.labels.len() {
        return Err(Error::shape("sample_episodes", format!("{} rows, {} labels", pool.features.rows(), pool.labels.len())));
    }
    let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &c) in pool.labels.iter().enumerate() {
        by_class.entry(c).or_default().push(i);
    }
    let classes: Vec<usize> = by_class.keys().copied().collect();
    if classes.len() < spec.n_way {
        return Err(Error::Invalid(format!("{} novel classes available, {}-way episodes requested", classes.len(), spec.n_way)));
    }
    if let Some((c, m)) = by_class.iter().find(|(_, m)| m.len() <= spec.k_shot) {
        return Err(Error::Invalid(format!(
            "class {c} has {} samples, need more than k_shot = {}",
            m.len(),
            spec.k_shot
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut episodes = Vec::with_capacity(spec.n_episodes);
    for _ in 0..spec.n_episodes {
        let mut chosen: Vec<usize> = index::sample(&mut rng, classes.len(), spec.n_way).into_iter().map(|i| classes[i]).collect();
        chosen.sort_unstable();
        let mut support = Vec::with_capacity(spec.n_way * spec.k_shot);
        let mut queries = Vec::with_capacity(spec.n_way * spec.n_query);
        for &c in &chosen {
            let members = &by_class[&c];
            let take = (spec.k_shot + spec.n_query).min(members.len());
            let mut picked: Vec<usize> = members.choose_multiple(&mut rng, take).copied().collect();
            let q = picked.split_off(spec.k_shot);
            support.extend(picked);
            queries.extend(q);
        }
        episodes.push(Episode { classes: chosen, support, queries });
    }
    Ok(episodes)
}

/// Mean accuracy over episodes with a 95% confidence half-width.
pub fn fsl_episode_eval(
    clf: &dyn EpisodeClassifier,
    pool: &EpisodePool<'_>,
    spec: &EpisodeSpec,
) -> Result<EpisodeSummary> {
    let episodes = sample_episodes(pool, spec)?;
    let accs = episodes
        .par_iter()
        .map(|ep| {
            let support = pool.features.select_rows(&ep.support);
            let support_labels: Vec<usize> = ep.support.iter().map(|&i| pool.labels[i]).collect();
            let queries = pool.features.select_rows(&ep.queries);
            let truth: Vec<usize> = ep.queries.iter().map(|&i| pool.labels[i]).collect();
            let pred = clf.classify(&support, &support_labels, &queries)?;
            top1_accuracy(&pred, &truth)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(summarise_episodes(&accs))
}

/// Mean and 95% half-width of per-episode accuracies.
pub fn summarise_episodes(accs: &[f64]) -> EpisodeSummary {
    let n = accs.len() as f64;
    let mean = accs.iter().sum::<f64>() / n;
    let var = if accs.len() > 1 { accs.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    EpisodeSummary { mean, ci95: 1.96 * (var / n).sqrt(), n_episodes: accs.len() }
}
