//! Sliding window over arrivals, the mean-shift novelty indicator, and the
//! node refit that runs when the indicator fires.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

use crate::aggregator::{self, AnnError, AnnWeights, SelectedFeatureSet, SelectionMode};
use crate::dataset::{self, Dataset, DatasetError, FeatureStats, FeatureVector};
use crate::importance::{self, ImportanceConfig, ImportanceError, ImportanceScores, LocalPosterior, LossKind};
use crate::nbc::{self, NbcError, NbcModel, VARIANCE_FLOOR};
use crate::seed::{self, stream_id};

#[derive(Debug, Error)]
pub enum StreamError {
    #[error("vector has {found} values, window expects {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("window holds {have} vectors, test needs {need}")]
    WindowTooEmpty { have: usize, need: usize },
    #[error("invalid stream config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Nbc(#[from] NbcError),
    #[error(transparent)]
    Importance(#[from] ImportanceError),
    #[error(transparent)]
    Ann(#[from] AnnError),
}

/// FIFO of the latest `capacity` arrivals.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowBuffer {
    capacity: usize,
    dim: usize,
    entries: VecDeque<FeatureVector>,
}

impl WindowBuffer {
    pub fn new(capacity: usize, dim: usize) -> Result<Self, StreamError> {
        if capacity == 0 {
            return Err(StreamError::InvalidConfig("window capacity must be at least 1".into()));
        }
        Ok(Self {
            capacity,
            dim,
            entries: VecDeque::with_capacity(capacity + 1),
        })
    }

    /// Appends `x`, returning the evicted oldest entry once over capacity.
    pub fn push(&mut self, x: FeatureVector) -> Result<Option<FeatureVector>, StreamError> {
        if x.dim() != self.dim {
            return Err(StreamError::DimensionMismatch {
                expected: self.dim,
                found: x.dim(),
            });
        }
        self.entries.push_back(x);
        if self.entries.len() > self.capacity {
            Ok(self.entries.pop_front())
        } else {
            Ok(None)
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.entries.len() == self.capacity
    }

    pub fn iter(&self) -> impl Iterator<Item = &FeatureVector> {
        self.entries.iter()
    }

    pub fn clear(&mut self) {
        self.entries.clear();
    }

    /// Removes and returns every entry, oldest first.
    pub fn drain(&mut self) -> Vec<FeatureVector> {
        self.entries.drain(..).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoveltyConfig {
    /// Family-wise significance level; each feature is tested at alpha / M.
    pub alpha: f64,
    /// Fraction of the window capacity that must be filled before testing.
    pub min_fill: f64,
}

impl Default for NoveltyConfig {
    fn default() -> Self {
        Self {
            alpha: 0.01,
            min_fill: 1.0,
        }
    }
}

impl NoveltyConfig {
    pub fn validate(&self) -> Result<(), StreamError> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(StreamError::InvalidConfig(format!("alpha {} not in (0, 1)", self.alpha)));
        }
        if !(self.min_fill > 0.0 && self.min_fill <= 1.0) {
            return Err(StreamError::InvalidConfig(format!(
                "min_fill {} not in (0, 1]",
                self.min_fill
            )));
        }
        Ok(())
    }

    fn required(&self, capacity: usize) -> usize {
        ((self.min_fill * capacity as f64 - 1e-9).ceil() as usize).max(1)
    }
}

/// Per feature, a two-sided z-test of the window mean against the baseline
/// mean with the baseline spread. Fires when any feature rejects at the
/// Bonferroni-corrected level `alpha / M`.
pub fn novelty_indicator(
    buf: &WindowBuffer,
    baseline: &[FeatureStats],
    cfg: &NoveltyConfig,
) -> Result<bool, StreamError> {
    cfg.validate()?;
    let need = cfg.required(buf.capacity());
    if buf.len() < need {
        return Err(StreamError::WindowTooEmpty {
            have: buf.len(),
            need,
        });
    }
    if baseline.len() != buf.dim() {
        return Err(StreamError::DimensionMismatch {
            expected: buf.dim(),
            found: baseline.len(),
        });
    }
    let m = baseline.len();
    if m == 0 {
        return Ok(false);
    }
    let critical = Normal::standard().inverse_cdf(1.0 - cfg.alpha / (2.0 * m as f64));
    let n = buf.len() as f64;
    let std_floor = VARIANCE_FLOOR.sqrt();
    for (j, stats) in baseline.iter().enumerate() {
        let mean = buf.iter().map(|v| v.values[j]).sum::<f64>() / n;
        let se = stats.std.max(std_floor) / n.sqrt();
        if ((mean - stats.mean) / se).abs() > critical {
            return Ok(true);
        }
    }
    Ok(false)
}

/// Knobs shared by every node refit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineParams {
    pub importance: ImportanceConfig,
    pub loss: LossKind,
    pub selection: SelectionMode,
    /// Used when a threshold selection keeps nothing.
    pub fallback_fraction: f64,
    pub seed: u64,
}

impl Default for PipelineParams {
    fn default() -> Self {
        Self {
            importance: ImportanceConfig::default(),
            loss: LossKind::LogLoss,
            selection: SelectionMode::TopFraction(0.2),
            fallback_fraction: 0.2,
            seed: 0,
        }
    }
}

/// Models a node derives from the corpus it knows.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeModels {
    pub full_model: NbcModel,
    pub scores: ImportanceScores,
    pub selected: SelectedFeatureSet,
    pub subset_model: NbcModel,
}

/// Union of the local dataset and the peers' datasets, every vector labeled
/// with the id of the node that holds it.
pub fn training_corpus(
    local_id: usize,
    local: &Dataset,
    peers: &[(usize, &Dataset)],
) -> Result<Dataset, StreamError> {
    let mut corpus = local.relabeled(local_id);
    for (id, d) in peers {
        corpus.extend(d.relabeled(*id).vectors().iter().cloned())?;
    }
    Ok(corpus)
}

/// Trains the all-features classifier, explains its local-class posterior,
/// selects features and trains the subset classifier.
pub fn fit_models(
    local_id: usize,
    corpus: &Dataset,
    ann: &AnnWeights,
    params: &PipelineParams,
    seed: u64,
) -> Result<NodeModels, StreamError> {
    let all: Vec<usize> = (0..corpus.dim()).collect();
    let full_model = nbc::train(corpus, &all)?;
    let black_box = LocalPosterior::new(&full_model, local_id, params.loss)
        .ok_or(NbcError::UnknownClass(local_id))?;
    let scores = importance::compute_all(&black_box, corpus, &params.importance, seed)?;
    let selected = match aggregator::select_features(&scores, ann, params.selection) {
        Err(AnnError::EmptySelection) => aggregator::select_features(
            &scores,
            ann,
            SelectionMode::TopFraction(params.fallback_fraction),
        )?,
        other => other?,
    };
    let subset_model = nbc::train(corpus, &selected.sorted_indices())?;
    Ok(NodeModels {
        full_model,
        scores,
        selected,
        subset_model,
    })
}

/// State owned by one edge node.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeState {
    pub id: usize,
    /// Local dataset D_l; vectors keep their ground-truth labels.
    pub dataset: Dataset,
    pub window: WindowBuffer,
    /// Statistics of the incoming data the window is compared against.
    pub baseline: Vec<FeatureStats>,
    pub models: NodeModels,
    /// Completed refits, mixed into the importance seed.
    pub refits: u64,
}

impl NodeState {
    pub fn build(
        id: usize,
        dataset: Dataset,
        peers: &[(usize, &Dataset)],
        window_capacity: usize,
        baseline: Vec<FeatureStats>,
        ann: &AnnWeights,
        params: &PipelineParams,
    ) -> Result<Self, StreamError> {
        let corpus = training_corpus(id, &dataset, peers)?;
        let models = fit_models(id, &corpus, ann, params, node_seed(params.seed, id, 0))?;
        let window = WindowBuffer::new(window_capacity, dataset.dim())?;
        Ok(Self {
            id,
            dataset,
            window,
            baseline,
            models,
            refits: 0,
        })
    }

    pub fn full_model(&self) -> &NbcModel {
        &self.models.full_model
    }

    pub fn subset_model(&self) -> &NbcModel {
        &self.models.subset_model
    }

    pub fn selected(&self) -> &SelectedFeatureSet {
        &self.models.selected
    }
}

fn node_seed(master: u64, id: usize, refit: u64) -> u64 {
    seed::derive_seed(master, stream_id::NODE, ((id as u64) << 32) | refit)
}

/// Absorbs the window into the local dataset, clears it, retrains the
/// classifiers and re-runs importance and selection. The new state is
/// committed only once every step has succeeded. Returns the number of
/// absorbed vectors.
pub fn on_novelty(
    node: &mut NodeState,
    peers: &[(usize, &Dataset)],
    ann: &AnnWeights,
    params: &PipelineParams,
) -> Result<usize, StreamError> {
    let absorbed: Vec<FeatureVector> = node.window.iter().cloned().collect();
    let mut dataset = node.dataset.clone();
    dataset.extend(absorbed.iter().cloned())?;
    let corpus = training_corpus(node.id, &dataset, peers)?;
    let refit = node.refits + 1;
    let models = fit_models(node.id, &corpus, ann, params, node_seed(params.seed, node.id, refit))?;
    let baseline = if absorbed.is_empty() {
        node.baseline.clone()
    } else {
        let mut window_data = Dataset::with_dim(dataset.dim());
        window_data.extend(absorbed.iter().cloned())?;
        dataset::summary_stats(&window_data)?
    };

    node.dataset = dataset;
    node.models = models;
    node.baseline = baseline;
    node.window.clear();
    node.refits = refit;
    Ok(absorbed.len())
}
