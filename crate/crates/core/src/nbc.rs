//! Gaussian naive Bayes over a feature subset, and the keep / offload
//! admission decision built on its posterior.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::Dataset;

pub const VARIANCE_FLOOR: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum NbcError {
    #[error("class {0} has fewer than two samples")]
    ClassTooSmall(usize),
    #[error("feature subset is empty")]
    EmptySubset,
    #[error("feature index {index} out of range for {m} features")]
    FeatureOutOfRange { index: usize, m: usize },
    #[error("row {0} has no class label")]
    Unlabeled(usize),
    #[error("training corpus is empty")]
    EmptyCorpus,
    #[error("unknown class {0}")]
    UnknownClass(usize),
    #[error("p_min must lie in [0, 1], got {0}")]
    InvalidThreshold(f64),
    #[error("inconsistent model parameters: {0}")]
    InvalidParameters(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NbcModel {
    class_ids: Vec<usize>,
    priors: Vec<f64>,
    feature_subset: Vec<usize>,
    /// `means[k][s]` for class `k` and the `s`-th subset feature.
    means: Vec<Vec<f64>>,
    variances: Vec<Vec<f64>>,
    #[serde(skip)]
    cache: Cache,
}

/// Per-class constants of the log density.
#[derive(Debug, Clone, Default, PartialEq)]
struct Cache {
    inv_var: Vec<Vec<f64>>,
    offset: Vec<f64>,
}

impl Cache {
    fn build(priors: &[f64], variances: &[Vec<f64>]) -> Self {
        let inv_var = variances
            .iter()
            .map(|vs| vs.iter().map(|v| 1.0 / v).collect())
            .collect();
        let offset = priors
            .iter()
            .zip(variances)
            .map(|(p, vs)| p.ln() - 0.5 * vs.iter().map(|v| (2.0 * PI * v).ln()).sum::<f64>())
            .collect();
        Self { inv_var, offset }
    }
}

impl NbcModel {
    /// Builds a model from explicit parameters. Variances below the floor are
    /// raised to it; `feature_subset` is sorted.
    pub fn from_parts(
        class_ids: Vec<usize>,
        priors: Vec<f64>,
        feature_subset: Vec<usize>,
        means: Vec<Vec<f64>>,
        variances: Vec<Vec<f64>>,
    ) -> Result<Self, NbcError> {
        let k = class_ids.len();
        if k == 0 {
            return Err(NbcError::EmptyCorpus);
        }
        if feature_subset.is_empty() {
            return Err(NbcError::EmptySubset);
        }
        let s = feature_subset.len();
        let shape_ok = priors.len() == k
            && means.len() == k
            && variances.len() == k
            && means.iter().all(|r| r.len() == s)
            && variances.iter().all(|r| r.len() == s);
        if !shape_ok {
            return Err(NbcError::InvalidParameters("shape mismatch".into()));
        }
        let total: f64 = priors.iter().sum();
        if priors.iter().any(|p| !(*p > 0.0)) || (total - 1.0).abs() > 1e-12 {
            return Err(NbcError::InvalidParameters(
                "priors must be positive and sum to one".into(),
            ));
        }
        let mut order: Vec<usize> = (0..s).collect();
        order.sort_by_key(|&i| feature_subset[i]);
        let permute = |rows: Vec<Vec<f64>>| -> Vec<Vec<f64>> {
            rows.into_iter()
                .map(|r| order.iter().map(|&i| r[i]).collect())
                .collect()
        };
        let means = permute(means);
        let variances: Vec<Vec<f64>> = permute(variances)
            .into_iter()
            .map(|r| r.into_iter().map(|v| v.max(VARIANCE_FLOOR)).collect())
            .collect();
        let mut feature_subset: Vec<usize> = order.iter().map(|&i| feature_subset[i]).collect();
        let before = feature_subset.len();
        feature_subset.dedup();
        if feature_subset.len() != before {
            return Err(NbcError::InvalidParameters("duplicate subset index".into()));
        }
        let cache = Cache::build(&priors, &variances);
        Ok(Self {
            class_ids,
            priors,
            feature_subset,
            means,
            variances,
            cache,
        })
    }

    pub fn class_ids(&self) -> &[usize] {
        &self.class_ids
    }

    pub fn priors(&self) -> &[f64] {
        &self.priors
    }

    pub fn feature_subset(&self) -> &[usize] {
        &self.feature_subset
    }

    pub fn mean(&self, class_idx: usize, subset_pos: usize) -> f64 {
        self.means[class_idx][subset_pos]
    }

    pub fn variance(&self, class_idx: usize, subset_pos: usize) -> f64 {
        self.variances[class_idx][subset_pos]
    }

    pub fn class_index(&self, class_id: usize) -> Option<usize> {
        self.class_ids.iter().position(|&c| c == class_id)
    }

    fn cache(&self) -> std::borrow::Cow<'_, Cache> {
        // models restored through serde arrive without the cache
        if self.cache.offset.len() == self.class_ids.len() {
            std::borrow::Cow::Borrowed(&self.cache)
        } else {
            std::borrow::Cow::Owned(Cache::build(&self.priors, &self.variances))
        }
    }

    /// Unnormalized log posterior per class: log P(C_k) + Σ log P(x_i | C_k).
    pub fn log_scores(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.class_ids.len()];
        self.log_scores_into(x, &mut out);
        out
    }

    pub fn log_scores_into(&self, x: &[f64], out: &mut [f64]) {
        let cache = self.cache();
        for (k, slot) in out.iter_mut().enumerate() {
            let means = &self.means[k];
            let inv = &cache.inv_var[k];
            let mut quad = 0.0;
            for (s, &j) in self.feature_subset.iter().enumerate() {
                let d = x[j] - means[s];
                quad += d * d * inv[s];
            }
            *slot = cache.offset[k] - 0.5 * quad;
        }
    }

    /// Normalized posterior. Evaluated in log space so that products over
    /// many features cannot underflow.
    pub fn posterior(&self, x: &[f64]) -> Vec<f64> {
        let mut p = self.log_scores(x);
        normalize_log(&mut p);
        p
    }
}

/// In-place log-sum-exp normalization.
pub(crate) fn normalize_log(scores: &mut [f64]) {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for s in scores.iter_mut() {
        *s = (*s - max).exp();
        total += *s;
    }
    for s in scores.iter_mut() {
        *s /= total;
    }
}

/// Fits class priors and per-class Gaussians on the labeled corpus.
pub fn train(corpus: &Dataset, feature_subset: &[usize]) -> Result<NbcModel, NbcError> {
    if feature_subset.is_empty() {
        return Err(NbcError::EmptySubset);
    }
    if corpus.is_empty() {
        return Err(NbcError::EmptyCorpus);
    }
    let m = corpus.dim();
    if let Some(&index) = feature_subset.iter().find(|&&j| j >= m) {
        return Err(NbcError::FeatureOutOfRange { index, m });
    }
    let mut subset = feature_subset.to_vec();
    subset.sort_unstable();
    subset.dedup();

    let mut members: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, label) in corpus.labels().enumerate() {
        let label = label.ok_or(NbcError::Unlabeled(i))?;
        members.entry(label).or_default().push(i);
    }
    if let Some((&id, _)) = members.iter().find(|(_, rows)| rows.len() < 2) {
        return Err(NbcError::ClassTooSmall(id));
    }

    let n = corpus.len() as f64;
    let mut class_ids = Vec::with_capacity(members.len());
    let mut priors = Vec::with_capacity(members.len());
    let mut means = Vec::with_capacity(members.len());
    let mut variances = Vec::with_capacity(members.len());
    for (id, rows) in &members {
        let count = rows.len() as f64;
        class_ids.push(*id);
        priors.push(count / n);
        let mut mu = Vec::with_capacity(subset.len());
        let mut var = Vec::with_capacity(subset.len());
        for &j in &subset {
            let mean = rows.iter().map(|&i| corpus.row(i)[j]).sum::<f64>() / count;
            let v = rows
                .iter()
                .map(|&i| {
                    let d = corpus.row(i)[j] - mean;
                    d * d
                })
                .sum::<f64>()
                / count;
            mu.push(mean);
            var.push(v.max(VARIANCE_FLOOR));
        }
        means.push(mu);
        variances.push(var);
    }
    // class frequencies can miss unity by an ulp or two
    let total: f64 = priors.iter().sum();
    for p in &mut priors {
        *p /= total;
    }
    let cache = Cache::build(&priors, &variances);
    Ok(NbcModel {
        class_ids,
        priors,
        feature_subset: subset,
        means,
        variances,
        cache,
    })
}

pub fn posterior(model: &NbcModel, x: &[f64]) -> Vec<f64> {
    model.posterior(x)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DecisionKind {
    KeepLocal,
    OffloadPeer(usize),
    OffloadCloud,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub kind: DecisionKind,
    pub posterior: Vec<f64>,
    /// Wall-clock time of the posterior and argmax, in microseconds.
    pub elapsed_us: f64,
}

/// Admission rule over an already computed posterior. Ties go to the local
/// class first, then to the lowest class id.
pub fn decide_posterior(
    class_ids: &[usize],
    posterior: &[f64],
    local_class: usize,
    p_min: f64,
) -> Result<DecisionKind, NbcError> {
    if !(0.0..=1.0).contains(&p_min) {
        return Err(NbcError::InvalidThreshold(p_min));
    }
    let local = class_ids
        .iter()
        .position(|&c| c == local_class)
        .ok_or(NbcError::UnknownClass(local_class))?;
    let max = posterior.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if posterior[local] >= max {
        return Ok(DecisionKind::KeepLocal);
    }
    let (best, _) = class_ids
        .iter()
        .zip(posterior)
        .filter(|(_, p)| **p >= max)
        .min_by_key(|(c, _)| **c)
        .expect("posterior is non-empty");
    if max >= p_min {
        Ok(DecisionKind::OffloadPeer(*best))
    } else {
        Ok(DecisionKind::OffloadCloud)
    }
}

/// Keep `x` locally when the local class is the most probable source,
/// otherwise offload it to the most probable peer, or to the cloud when that
/// peer's posterior is below `p_min`.
pub fn decide(
    model: &NbcModel,
    x: &[f64],
    local_class: usize,
    p_min: f64,
) -> Result<Decision, NbcError> {
    let start = Instant::now();
    let posterior = model.posterior(x);
    let kind = decide_posterior(&model.class_ids, &posterior, local_class, p_min)?;
    let elapsed_us = start.elapsed().as_secs_f64() * 1e6;
    Ok(Decision {
        kind,
        posterior,
        elapsed_us,
    })
}
