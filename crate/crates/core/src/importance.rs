//! Model-agnostic feature importance: split-half permutation importance,
//! Monte-Carlo Shapley values and a partial-dependence interaction statistic.

use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::Dataset;
use crate::nbc::{normalize_log, NbcModel};
use crate::seed::{self, stream_id};

#[derive(Debug, Error, PartialEq)]
pub enum ImportanceError {
    #[error("dataset has {have} rows, need at least {need}")]
    DatasetTooSmall { have: usize, need: usize },
    #[error("feature index {index} out of range for {m} features")]
    FeatureOutOfRange { index: usize, m: usize },
    #[error("instance index {index} out of range for {n} rows")]
    InstanceOutOfRange { index: usize, n: usize },
    #[error("invalid estimator config: {0}")]
    InvalidConfig(String),
}

/// The black box being explained: a deterministic score `f̂(x)` and a
/// non-negative loss over a labeled dataset.
pub trait PredictiveModel: Sync {
    fn predict(&self, x: &[f64]) -> f64;
    fn loss(&self, data: &Dataset) -> f64;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LossKind {
    LogLoss,
    Mse,
}

/// Posterior probability of one class of a naive Bayes model. The loss
/// compares it with the indicator "row label == local class"; unlabeled rows
/// count as foreign.
#[derive(Debug, Clone, Copy)]
pub struct LocalPosterior<'a> {
    model: &'a NbcModel,
    local_idx: usize,
    local_class: usize,
    loss: LossKind,
}

impl<'a> LocalPosterior<'a> {
    pub fn new(model: &'a NbcModel, local_class: usize, loss: LossKind) -> Option<Self> {
        let local_idx = model.class_index(local_class)?;
        Some(Self {
            model,
            local_idx,
            local_class,
            loss,
        })
    }
}

const LOG_LOSS_CLIP: f64 = 1e-15;

impl PredictiveModel for LocalPosterior<'_> {
    fn predict(&self, x: &[f64]) -> f64 {
        let k = self.model.class_ids().len();
        let mut stack = [0.0; 8];
        let mut heap;
        let scores: &mut [f64] = if k <= stack.len() {
            &mut stack[..k]
        } else {
            heap = vec![0.0; k];
            &mut heap
        };
        self.model.log_scores_into(x, scores);
        normalize_log(scores);
        scores[self.local_idx]
    }

    fn loss(&self, data: &Dataset) -> f64 {
        if data.is_empty() {
            return 0.0;
        }
        let total: f64 = data
            .vectors()
            .iter()
            .map(|v| {
                let p = self.predict(&v.values);
                let target = if v.source_label == Some(self.local_class) {
                    1.0
                } else {
                    0.0
                };
                match self.loss {
                    LossKind::Mse => (p - target) * (p - target),
                    LossKind::LogLoss => {
                        let p = p.clamp(LOG_LOSS_CLIP, 1.0 - LOG_LOSS_CLIP);
                        -(target * p.ln() + (1.0 - target) * (1.0 - p).ln())
                    }
                }
            })
            .sum();
        total / data.len() as f64
    }
}

fn check_feature(d: &Dataset, j: usize) -> Result<(), ImportanceError> {
    if j >= d.dim() {
        return Err(ImportanceError::FeatureOutOfRange { index: j, m: d.dim() });
    }
    Ok(())
}

fn check_size(d: &Dataset, need: usize) -> Result<(), ImportanceError> {
    if d.len() < need {
        return Err(ImportanceError::DatasetTooSmall {
            have: d.len(),
            need,
        });
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PfiEstimate {
    /// Mean of `e^p / e^o` over repetitions.
    pub ratio: f64,
    /// Baseline loss was zero; `ratio` is the sentinel 1.0.
    pub zero_baseline: bool,
}

/// Split-half permutation importance of feature `j`. Each repetition shuffles
/// the row order, pairs the first half with the second, and swaps the j-th
/// values inside every pair; the swapped dataset's loss is divided by the
/// baseline loss.
pub fn pfi<P: PredictiveModel + ?Sized>(
    model: &P,
    d: &Dataset,
    j: usize,
    repetitions: usize,
    seed: u64,
) -> Result<PfiEstimate, ImportanceError> {
    check_feature(d, j)?;
    check_size(d, 4)?;
    if repetitions == 0 {
        return Err(ImportanceError::InvalidConfig("repetitions must be at least 1".into()));
    }
    let baseline = model.loss(d);
    if baseline <= 0.0 {
        log::warn!("feature {j}: baseline loss is zero, permutation importance reported as 1.0");
        return Ok(PfiEstimate {
            ratio: 1.0,
            zero_baseline: true,
        });
    }
    let n = d.len();
    let half = n / 2;
    let mut rng = seed::rng(seed);
    let mut order: Vec<usize> = (0..n).collect();
    let mut swapped = d.clone();
    let mut total = 0.0;
    for _ in 0..repetitions {
        order.shuffle(&mut rng);
        for t in 0..half {
            let (a, b) = (order[t], order[half + t]);
            swapped.set(a, j, d.row(b)[j]);
            swapped.set(b, j, d.row(a)[j]);
        }
        total += model.loss(&swapped) / baseline;
        // restore column j
        for t in 0..half {
            let (a, b) = (order[t], order[half + t]);
            swapped.set(a, j, d.row(a)[j]);
            swapped.set(b, j, d.row(b)[j]);
        }
    }
    Ok(PfiEstimate {
        ratio: total / repetitions as f64,
        zero_baseline: false,
    })
}

/// Mean and sample standard deviation of the per-iteration differences.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShapleyEstimate {
    pub value: f64,
    pub std_dev: f64,
}

/// Monte-Carlo Shapley value ξ_ij of feature `j` for instance `i`.
///
/// Each iteration draws a random background row `z` and a random feature
/// order. `x⁺` takes `j` and every feature ordered before it from instance
/// `i` and the rest from `z`; `x⁻` is the same except that `j` also comes
/// from `z`. The estimate is the mean of `f̂(x⁺) − f̂(x⁻)`.
pub fn shapley_instance_stats<P: PredictiveModel + ?Sized>(
    model: &P,
    d: &Dataset,
    i: usize,
    j: usize,
    m_iters: usize,
    seed: u64,
) -> Result<ShapleyEstimate, ImportanceError> {
    check_feature(d, j)?;
    check_size(d, 2)?;
    if i >= d.len() {
        return Err(ImportanceError::InstanceOutOfRange { index: i, n: d.len() });
    }
    if m_iters == 0 {
        return Err(ImportanceError::InvalidConfig("m_iters must be at least 1".into()));
    }
    let mut rng = seed::rng(seed);
    Ok(shapley_with_rng(model, d, i, j, m_iters, &mut rng))
}

fn shapley_with_rng<P: PredictiveModel + ?Sized, R: Rng>(
    model: &P,
    d: &Dataset,
    i: usize,
    j: usize,
    m_iters: usize,
    rng: &mut R,
) -> ShapleyEstimate {
    let m = d.dim();
    let x = d.row(i);
    let mut order: Vec<usize> = (0..m).collect();
    let mut plus = vec![0.0; m];
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    for _ in 0..m_iters {
        let z = d.row(rng.random_range(0..d.len()));
        order.shuffle(rng);
        let mut from_instance = true;
        for &f in &order {
            plus[f] = if from_instance { x[f] } else { z[f] };
            if f == j {
                from_instance = false;
            }
        }
        let with_j = model.predict(&plus);
        plus[j] = z[j];
        let without_j = model.predict(&plus);
        let diff = with_j - without_j;
        sum += diff;
        sum_sq += diff * diff;
    }
    let n = m_iters as f64;
    let mean = sum / n;
    let var = if m_iters > 1 {
        ((sum_sq - n * mean * mean) / (n - 1.0)).max(0.0)
    } else {
        0.0
    };
    ShapleyEstimate {
        value: mean,
        std_dev: var.sqrt(),
    }
}

pub fn shapley_instance<P: PredictiveModel + ?Sized>(
    model: &P,
    d: &Dataset,
    i: usize,
    j: usize,
    m_iters: usize,
    seed: u64,
) -> Result<f64, ImportanceError> {
    shapley_instance_stats(model, d, i, j, m_iters, seed).map(|e| e.value)
}

/// Feature-level Shapley score: mean |ξ_ij| over a seeded sample of
/// `n_instances` distinct instances.
pub fn shapley_feature<P: PredictiveModel + ?Sized>(
    model: &P,
    d: &Dataset,
    j: usize,
    n_instances: usize,
    m_iters: usize,
    seed: u64,
) -> Result<f64, ImportanceError> {
    check_feature(d, j)?;
    check_size(d, 2)?;
    if n_instances == 0 || n_instances > d.len() {
        return Err(ImportanceError::InvalidConfig(format!(
            "n_instances must lie in 1..={}",
            d.len()
        )));
    }
    if m_iters == 0 {
        return Err(ImportanceError::InvalidConfig("m_iters must be at least 1".into()));
    }
    let mut rng = seed::rng(seed);
    let picks = sample(&mut rng, d.len(), n_instances).into_vec();
    let total: f64 = picks
        .iter()
        .map(|&i| shapley_with_rng(model, d, i, j, m_iters, &mut rng).value.abs())
        .sum();
    Ok(total / n_instances as f64)
}

/// `PD_j(v)`: mean prediction over all rows with feature `j` set to `v`.
pub fn partial_dependence<P: PredictiveModel + ?Sized>(
    model: &P,
    d: &Dataset,
    j: usize,
    v: f64,
) -> Result<f64, ImportanceError> {
    check_feature(d, j)?;
    check_size(d, 1)?;
    let mut buf = vec![0.0; d.dim()];
    let total: f64 = d
        .vectors()
        .iter()
        .map(|row| {
            buf.copy_from_slice(&row.values);
            buf[j] = v;
            model.predict(&buf)
        })
        .sum();
    Ok(total / d.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InteractionEstimate {
    /// Share of prediction variance left unexplained by `PD_j + PD_{-j}`,
    /// clamped to [0, 1].
    pub value: f64,
    /// Predictions were (numerically) constant; `value` is 0.
    pub degenerate: bool,
}

const DEGENERATE_VARIANCE: f64 = 1e-12;

/// Interaction strength of feature `j` with all other features:
/// `Σ_i [f̂(x_i) − PD_j(x_ij) − PD_{-j}(x_i,-j)]² / Σ_i f̂(x_i)²`, every term
/// mean-centered over the rows.
pub fn fit_interaction<P: PredictiveModel + ?Sized>(
    model: &P,
    d: &Dataset,
    j: usize,
) -> Result<InteractionEstimate, ImportanceError> {
    check_feature(d, j)?;
    check_size(d, 2)?;
    let n = d.len();
    let mut buf = vec![0.0; d.dim()];
    let mut f = Vec::with_capacity(n);
    let mut pd_j = Vec::with_capacity(n);
    let mut pd_rest = Vec::with_capacity(n);
    for i in 0..n {
        let x = d.row(i);
        f.push(model.predict(x));

        let v = x[j];
        let mut acc = 0.0;
        for r in 0..n {
            buf.copy_from_slice(d.row(r));
            buf[j] = v;
            acc += model.predict(&buf);
        }
        pd_j.push(acc / n as f64);

        buf.copy_from_slice(x);
        let mut acc = 0.0;
        for r in 0..n {
            buf[j] = d.row(r)[j];
            acc += model.predict(&buf);
        }
        pd_rest.push(acc / n as f64);
    }
    center(&mut f);
    center(&mut pd_j);
    center(&mut pd_rest);
    let denom: f64 = f.iter().map(|y| y * y).sum();
    if denom < DEGENERATE_VARIANCE {
        return Ok(InteractionEstimate {
            value: 0.0,
            degenerate: true,
        });
    }
    let numer: f64 = (0..n)
        .map(|i| {
            let r = f[i] - pd_j[i] - pd_rest[i];
            r * r
        })
        .sum();
    Ok(InteractionEstimate {
        value: (numer / denom).clamp(0.0, 1.0),
        degenerate: false,
    })
}

fn center(xs: &mut [f64]) {
    let mean = xs.iter().sum::<f64>() / xs.len() as f64;
    for x in xs {
        *x -= mean;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceConfig {
    pub pfi_repetitions: usize,
    /// Instances sampled for the feature-level Shapley score.
    pub shapley_instances: usize,
    pub shapley_iters: usize,
    /// Rows used for the interaction statistic, which costs O(n²)
    /// predictions per feature. `None` uses every row.
    pub fit_max_rows: Option<usize>,
    /// Evaluate features on the rayon pool.
    pub parallel: bool,
}

impl Default for ImportanceConfig {
    fn default() -> Self {
        Self {
            pfi_repetitions: 5,
            shapley_instances: 50,
            shapley_iters: 100,
            fit_max_rows: Some(100),
            parallel: true,
        }
    }
}

impl ImportanceConfig {
    pub fn validate(&self) -> Result<(), ImportanceError> {
        let bad = |s: &str| Err(ImportanceError::InvalidConfig(s.into()));
        if self.pfi_repetitions == 0 {
            return bad("pfi repetitions must be at least 1");
        }
        if self.shapley_instances == 0 || self.shapley_iters == 0 {
            return bad("shapley instances and iterations must be at least 1");
        }
        if self.fit_max_rows.is_some_and(|r| r < 2) {
            return bad("fit rows must be at least 2");
        }
        Ok(())
    }
}

/// Per-feature (F^PFI, F^SV, F^FIT).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceScores {
    pub pfi: Vec<f64>,
    pub shapley: Vec<f64>,
    pub fit: Vec<f64>,
    /// The baseline loss was zero and every PFI is the sentinel 1.0.
    pub zero_baseline: bool,
}

impl ImportanceScores {
    pub fn len(&self) -> usize {
        self.pfi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pfi.is_empty()
    }

    pub fn feature(&self, j: usize) -> [f64; 3] {
        [self.pfi[j], self.shapley[j], self.fit[j]]
    }
}

/// All three scores for every feature. Each (estimator, feature) pair draws
/// from its own stream seeded by `(master_seed, estimator, feature)`, so the
/// result does not depend on evaluation order or on `config.parallel`.
pub fn compute_all<P: PredictiveModel + ?Sized>(
    model: &P,
    d: &Dataset,
    config: &ImportanceConfig,
    master_seed: u64,
) -> Result<ImportanceScores, ImportanceError> {
    config.validate()?;
    check_size(d, 4)?;
    let fit_rows = match config.fit_max_rows {
        Some(max) if d.len() > max => {
            let mut rng = seed::derived_rng(master_seed, stream_id::FIT, u64::MAX);
            let mut rows = sample(&mut rng, d.len(), max).into_vec();
            rows.sort_unstable();
            Some(d.subset_rows(&rows))
        }
        _ => None,
    };
    let fit_data = fit_rows.as_ref().unwrap_or(d);
    let n_instances = config.shapley_instances.min(d.len());

    let one = |j: usize| -> Result<(PfiEstimate, f64, f64), ImportanceError> {
        let pfi = pfi(
            model,
            d,
            j,
            config.pfi_repetitions,
            seed::derive_seed(master_seed, stream_id::PFI, j as u64),
        )?;
        let sv = shapley_feature(
            model,
            d,
            j,
            n_instances,
            config.shapley_iters,
            seed::derive_seed(master_seed, stream_id::SHAPLEY, j as u64),
        )?;
        let fit = fit_interaction(model, fit_data, j)?;
        Ok((pfi, sv, fit.value))
    };
    let per_feature: Vec<_> = if config.parallel {
        (0..d.dim()).into_par_iter().map(one).collect::<Result<_, _>>()?
    } else {
        (0..d.dim()).map(one).collect::<Result<_, _>>()?
    };
    let zero_baseline = per_feature.iter().any(|(p, _, _)| p.zero_baseline);
    Ok(ImportanceScores {
        pfi: per_feature.iter().map(|(p, _, _)| p.ratio).collect(),
        shapley: per_feature.iter().map(|(_, s, _)| *s).collect(),
        fit: per_feature.iter().map(|(_, _, f)| *f).collect(),
        zero_baseline,
    })
}
