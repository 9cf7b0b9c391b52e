//! Multi-node edge simulation. Arrivals enter a node, pass through its
//! admission decision and are stored locally, at a peer or in the cloud.
//! Three variants run over identical copies of the bootstrap state:
//!
//! * OS: no filtering, every arrival stays at its entry node.
//! * BNS: admission by the all-features classifier.
//! * NNS: admission by the classifier over the selected features.
//!
//! Reported metrics are the percentage of correct placements (Δ) for the
//! all-features and the selected-features classifier, the mean per-node
//! solidity (σ) of each variant, and the mean decision latency (τ).

use std::collections::VecDeque;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::aggregator::{self, AnnError, AnnParams, AnnWeights, SelectionMode};
use crate::dataset::{self, Dataset, DatasetError, FeatureVector, NoiseShape, SynthParams, SyntheticSource};
use crate::nbc::{self, DecisionKind, NbcError};
use crate::seed::{self, stream_id};
use crate::stream::{self, NodeState, NoveltyConfig, PipelineParams, StreamError};

pub type EdgeNode = NodeState;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
    #[error("decision log is empty")]
    EmptyDecisionLog,
    #[error(transparent)]
    Stream(#[from] StreamError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Nbc(#[from] NbcError),
    #[error(transparent)]
    Ann(#[from] AnnError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

/// Synthetic stream settings; see [`SyntheticSource`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSettings {
    pub separation: f64,
    pub noise_std: f64,
    /// Share of the M features that carry no cluster information.
    pub irrelevant_fraction: f64,
    pub irrelevant_shape: NoiseShape,
    /// Multiplier on the irrelevant-feature noise.
    pub irrelevant_scale: f64,
    /// Center spread of relevant feature r is `separation · decay^r`.
    pub relevance_decay: f64,
}

impl Default for SynthSettings {
    fn default() -> Self {
        Self {
            separation: 2.5,
            noise_std: 1.0,
            irrelevant_fraction: 0.5,
            irrelevant_shape: NoiseShape::StudentT(3.0),
            irrelevant_scale: 0.1,
            relevance_decay: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum StreamSource {
    Synthetic(SynthSettings),
    /// Headered CSV; the first M columns are used and rows are labeled by
    /// k-means into one cluster per node.
    Csv(PathBuf),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EntryPolicy {
    RoundRobin,
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Variant {
    Os,
    Bns,
    Nns,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n_nodes: usize,
    pub m: usize,
    /// Fraction of features kept by the selected-features classifier.
    pub w: f64,
    /// Select by fused score above this threshold instead of by fraction;
    /// falls back to the fraction when nothing passes.
    pub threshold: Option<f64>,
    pub arrivals: usize,
    pub warmup: usize,
    pub source: StreamSource,
    pub seed: u64,
    pub p_min: f64,
    pub entry: EntryPolicy,
    pub window_w: usize,
    pub novelty: NoveltyConfig,
    /// A node tests for novelty only once it has seen this many vectors
    /// since its last alarm (the warm-up corpus counts at the start).
    pub min_history: usize,
    pub pipeline: PipelineParams,
    pub ann: AnnParams,
    /// Grid cells evaluated concurrently.
    pub parallel: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            n_nodes: 3,
            m: 10,
            w: 0.2,
            threshold: None,
            arrivals: 2000,
            warmup: 600,
            source: StreamSource::Synthetic(SynthSettings::default()),
            seed: 1,
            p_min: 0.0,
            entry: EntryPolicy::RoundRobin,
            window_w: 50,
            novelty: NoveltyConfig::default(),
            min_history: 500,
            pipeline: PipelineParams::default(),
            ann: AnnParams::default(),
            parallel: 1,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |s: String| Err(SimError::InvalidConfig(s));
        if self.n_nodes < 2 {
            return bad(format!("need at least 2 nodes, got {}", self.n_nodes));
        }
        if self.m < 2 {
            return bad(format!("need at least 2 features, got {}", self.m));
        }
        if !(self.w > 0.0 && self.w <= 1.0) {
            return bad(format!("w = {} not in (0, 1]", self.w));
        }
        if let Some(d) = self.threshold {
            if !(0.0..1.0).contains(&d) {
                return bad(format!("threshold {d} not in [0, 1)"));
            }
        }
        if !(0.0..=1.0).contains(&self.p_min) {
            return bad(format!("p_min {} not in [0, 1]", self.p_min));
        }
        if self.arrivals == 0 {
            return bad("arrivals must be positive".into());
        }
        if self.warmup < 2 * self.n_nodes {
            return bad("warm-up needs at least two vectors per node".into());
        }
        if self.window_w == 0 {
            return bad("window must hold at least one vector".into());
        }
        self.novelty.validate()?;
        self.pipeline
            .importance
            .validate()
            .map_err(|e| SimError::InvalidConfig(e.to_string()))?;
        if let StreamSource::Synthetic(s) = &self.source {
            if !(0.0..1.0).contains(&s.irrelevant_fraction) {
                return bad("irrelevant fraction must lie in [0, 1)".into());
            }
        }
        Ok(())
    }

    /// Pipeline parameters for this cell: selection mode from `w` and
    /// `threshold`, seed from `seed`.
    pub fn cell_pipeline(&self) -> PipelineParams {
        let mut p = self.pipeline.clone();
        p.selection = match self.threshold {
            Some(d) => SelectionMode::Threshold(d),
            None => SelectionMode::TopFraction(self.w),
        };
        p.fallback_fraction = self.w;
        p.seed = self.seed;
        p
    }
}

/// Warm-up shards (one per node, index = node id) and the arrival stream.
/// Every vector carries the id of the node that owns its cluster.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub shards: Vec<Dataset>,
    pub arrivals: Vec<FeatureVector>,
}

impl Scenario {
    pub fn warmup_corpus(&self) -> Result<Dataset, DatasetError> {
        let mut all = Dataset::new(self.shards[0].feature_names().to_vec())?;
        for s in &self.shards {
            all.extend(s.vectors().iter().cloned())?;
        }
        Ok(all)
    }
}

fn irrelevant_count(m: usize, fraction: f64) -> usize {
    ((fraction * m as f64).round() as usize).min(m - 1)
}

pub fn build_scenario(cfg: &SimConfig) -> Result<Scenario, SimError> {
    cfg.validate()?;
    let n = cfg.n_nodes;
    let (warm, arrivals) = match &cfg.source {
        StreamSource::Synthetic(s) => {
            let params = SynthParams {
                n_clusters: n,
                m: cfg.m,
                separation: s.separation,
                noise_std: s.noise_std,
                n_irrelevant: irrelevant_count(cfg.m, s.irrelevant_fraction),
                irrelevant_shape: s.irrelevant_shape,
                irrelevant_scale: s.irrelevant_scale,
                relevance_decay: s.relevance_decay,
            };
            let source = SyntheticSource::new(params, cfg.seed)?;
            let mut warm_rng = seed::derived_rng(cfg.seed, stream_id::WARMUP, 0);
            let warm = source.balanced(cfg.warmup / n, &mut warm_rng);
            let mut arr_rng = seed::derived_rng(cfg.seed, stream_id::ARRIVALS, 0);
            (warm, source.stream(cfg.arrivals, &mut arr_rng))
        }
        StreamSource::Csv(path) => {
            let raw = dataset::ingest_csv(path)?;
            if raw.dim() < cfg.m {
                return Err(SimError::InvalidConfig(format!(
                    "{} has {} columns, M = {}",
                    path.display(),
                    raw.dim(),
                    cfg.m
                )));
            }
            if raw.len() < cfg.warmup + cfg.arrivals {
                return Err(SimError::InvalidConfig(format!(
                    "{} has {} rows, need {}",
                    path.display(),
                    raw.len(),
                    cfg.warmup + cfg.arrivals
                )));
            }
            let labeled = dataset::assign_cluster_labels(&raw.truncated(cfg.m), n, cfg.seed)?;
            let mut order: Vec<usize> = (0..labeled.len()).collect();
            let mut rng = seed::derived_rng(cfg.seed, stream_id::ARRIVALS, 1);
            rand::seq::SliceRandom::shuffle(&mut order[..], &mut rng);
            let warm = labeled.subset_rows(&order[..cfg.warmup]);
            let arrivals = order[cfg.warmup..cfg.warmup + cfg.arrivals]
                .iter()
                .map(|&i| labeled.vectors()[i].clone())
                .collect();
            (warm, arrivals)
        }
    };
    let names = warm.feature_names().to_vec();
    let mut shards: Vec<Dataset> = (0..n)
        .map(|_| Dataset::new(names.clone()))
        .collect::<Result<_, _>>()?;
    for v in warm.vectors() {
        let owner = v.source_label.expect("scenario vectors are labeled");
        shards[owner].push(v.clone())?;
    }
    Ok(Scenario { shards, arrivals })
}

/// Bootstrap state before the feature subset is chosen. Importance scores do
/// not depend on `w`, so a grid shares one of these across the w values of a
/// given M.
#[derive(Debug, Clone)]
pub struct ScoredBootstrap {
    pub scenario: Scenario,
    pub nodes: Vec<EdgeNode>,
}

fn peers_of(shards: &[Dataset], id: usize) -> Vec<(usize, &Dataset)> {
    shards
        .iter()
        .enumerate()
        .filter(|(k, _)| *k != id)
        .collect()
}

pub fn bootstrap_scored(cfg: &SimConfig, ann: &AnnWeights) -> Result<ScoredBootstrap, SimError> {
    let scenario = build_scenario(cfg)?;
    let baseline = dataset::summary_stats(&scenario.warmup_corpus()?)?;
    let params = cfg.cell_pipeline();
    let nodes = (0..cfg.n_nodes)
        .map(|id| {
            NodeState::build(
                id,
                scenario.shards[id].clone(),
                &peers_of(&scenario.shards, id),
                cfg.window_w,
                baseline.clone(),
                ann,
                &params,
            )
            .map_err(SimError::from)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ScoredBootstrap { scenario, nodes })
}

impl ScoredBootstrap {
    /// Nodes with their feature subset re-selected under `params` and the
    /// subset classifier retrained.
    pub fn with_selection(&self, ann: &AnnWeights, params: &PipelineParams) -> Result<Vec<EdgeNode>, SimError> {
        let mut nodes = self.nodes.clone();
        for node in &mut nodes {
            let scores = &node.models.scores;
            let selected = match aggregator::select_features(scores, ann, params.selection) {
                Err(AnnError::EmptySelection) => aggregator::select_features(
                    scores,
                    ann,
                    SelectionMode::TopFraction(params.fallback_fraction),
                )?,
                other => other?,
            };
            let corpus = stream::training_corpus(
                node.id,
                &node.dataset,
                &peers_of(&self.scenario.shards, node.id),
            )?;
            node.models.subset_model = nbc::train(&corpus, &selected.sorted_indices())?;
            node.models.selected = selected;
        }
        Ok(nodes)
    }
}

/// Builds every node: shards the warm-up corpus by ground truth, trains the
/// all-features classifier over all node ids, scores and selects features,
/// and trains the subset classifier.
pub fn bootstrap(cfg: &SimConfig, ann: &AnnWeights) -> Result<Vec<EdgeNode>, SimError> {
    bootstrap_scored(cfg, ann)?.with_selection(ann, &cfg.cell_pipeline())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Destination {
    Node(usize),
    Cloud,
}

/// Admission of one arrival at `entry_node` under `variant`.
pub fn route(
    nodes: &[EdgeNode],
    arrival: &FeatureVector,
    entry_node: usize,
    variant: Variant,
    p_min: f64,
) -> Result<(nbc::Decision, Destination), SimError> {
    let node = nodes
        .get(entry_node)
        .ok_or_else(|| SimError::InvalidConfig(format!("no node {entry_node}")))?;
    let decision = match variant {
        Variant::Os => nbc::Decision {
            kind: DecisionKind::KeepLocal,
            posterior: Vec::new(),
            elapsed_us: 0.0,
        },
        Variant::Bns => nbc::decide(node.full_model(), &arrival.values, entry_node, p_min)?,
        Variant::Nns => nbc::decide(node.subset_model(), &arrival.values, entry_node, p_min)?,
    };
    let dest = match decision.kind {
        DecisionKind::KeepLocal => Destination::Node(entry_node),
        DecisionKind::OffloadPeer(k) => Destination::Node(k),
        DecisionKind::OffloadCloud => Destination::Cloud,
    };
    Ok((decision, dest))
}

/// Percentage of placements at the node owning the vector's cluster.
pub fn delta_metric(decisions: &[(Destination, usize)]) -> Result<f64, SimError> {
    if decisions.is_empty() {
        return Err(SimError::EmptyDecisionLog);
    }
    let correct = decisions
        .iter()
        .filter(|(d, truth)| *d == Destination::Node(*truth))
        .count();
    Ok(100.0 * correct as f64 / decisions.len() as f64)
}

/// Outcome of streaming the arrivals through one variant.
#[derive(Debug, Clone)]
pub struct VariantRun {
    pub nodes: Vec<EdgeNode>,
    /// Final placement and ground-truth owner of every arrival.
    pub placements: Vec<(Destination, usize)>,
    pub n_local: usize,
    pub n_peer: usize,
    pub n_cloud: usize,
    pub cloud_count: usize,
    pub novelty_events: usize,
    pub tau_mean_us: f64,
    /// Per-decision latencies; empty for the unfiltered variant.
    pub latencies_us: Vec<f64>,
}

impl VariantRun {
    pub fn delta(&self) -> Result<f64, SimError> {
        delta_metric(&self.placements)
    }

    /// Mean over nodes of the final dataset solidity.
    pub fn sigma(&self) -> Result<f64, SimError> {
        let total: f64 = self
            .nodes
            .iter()
            .map(|n| dataset::solidity(&n.dataset))
            .sum::<Result<f64, _>>()?;
        Ok(total / self.nodes.len() as f64)
    }
}

pub fn entry_sequence(cfg: &SimConfig) -> Vec<usize> {
    match cfg.entry {
        EntryPolicy::RoundRobin => (0..cfg.arrivals).map(|t| t % cfg.n_nodes).collect(),
        EntryPolicy::Random => {
            let mut rng = seed::derived_rng(cfg.seed, stream_id::ENTRY, 0);
            (0..cfg.arrivals).map(|_| rng.random_range(0..cfg.n_nodes)).collect()
        }
    }
}

/// One variant streaming the arrivals through its own copy of the nodes,
/// one arrival per [`step`](VariantSim::step).
///
/// Each entry node keeps a copy of every arrival in its window and tests it
/// once per `window_w` arrivals against the statistics of everything it has
/// seen since its last alarm (initially the warm-up corpus). When the test
/// fires, the window's vectors are moved to the entry node (earlier
/// placements are retracted, so every arrival stays stored exactly once),
/// the node is refit and its history restarts from the window.
pub struct VariantSim<'a> {
    variant: Variant,
    cfg: &'a SimConfig,
    ann: &'a AnnWeights,
    params: PipelineParams,
    arrivals: &'a [FeatureVector],
    entries: &'a [usize],
    nodes: Vec<EdgeNode>,
    // arrival id of each stored vector, None for warm-up data
    stored: Vec<Vec<Option<usize>>>,
    window_ids: Vec<VecDeque<usize>>,
    since_test: Vec<usize>,
    history: Vec<Dataset>,
    placements: Vec<(Destination, usize)>,
    counts: [usize; 3],
    cloud: Vec<usize>,
    novelty_events: usize,
    latencies_us: Vec<f64>,
}

impl<'a> VariantSim<'a> {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        nodes: Vec<EdgeNode>,
        regime: &Dataset,
        arrivals: &'a [FeatureVector],
        entries: &'a [usize],
        variant: Variant,
        cfg: &'a SimConfig,
        ann: &'a AnnWeights,
        params: &PipelineParams,
    ) -> Result<Self, SimError> {
        if entries.len() < arrivals.len() {
            return Err(SimError::InvalidConfig("fewer entry nodes than arrivals".into()));
        }
        if let Some(&bad) = entries.iter().find(|&&e| e >= nodes.len()) {
            return Err(SimError::InvalidConfig(format!("no node {bad}")));
        }
        let n = nodes.len();
        Ok(Self {
            variant,
            cfg,
            ann,
            params: params.clone(),
            arrivals,
            entries,
            stored: nodes.iter().map(|n| vec![None; n.dataset.len()]).collect(),
            nodes,
            window_ids: vec![VecDeque::new(); n],
            since_test: vec![0; n],
            history: vec![regime.clone(); n],
            placements: Vec::with_capacity(arrivals.len()),
            counts: [0; 3],
            cloud: Vec::new(),
            novelty_events: 0,
            latencies_us: Vec::with_capacity(arrivals.len()),
        })
    }

    pub fn is_done(&self) -> bool {
        self.placements.len() == self.arrivals.len()
    }

    /// Processes the next arrival; a no-op once every arrival is placed.
    pub fn step(&mut self) -> Result<(), SimError> {
        if self.is_done() {
            return Ok(());
        }
        let t = self.placements.len();
        let x = &self.arrivals[t];
        let e = self.entries[t];
        let truth = x
            .source_label
            .ok_or_else(|| SimError::InvalidConfig("unlabeled arrival".into()))?;

        if self.nodes[e].window.push(x.clone())?.is_some() {
            self.window_ids[e].pop_front();
        }
        self.window_ids[e].push_back(t);
        self.since_test[e] += 1;

        let (decision, dest) = route(&self.nodes, x, e, self.variant, self.cfg.p_min)?;
        if self.variant != Variant::Os {
            self.latencies_us.push(decision.elapsed_us);
        }
        self.counts[match decision.kind {
            DecisionKind::KeepLocal => 0,
            DecisionKind::OffloadPeer(_) => 1,
            DecisionKind::OffloadCloud => 2,
        }] += 1;
        match dest {
            Destination::Node(k) => {
                self.nodes[k].dataset.push(x.clone())?;
                self.stored[k].push(Some(t));
            }
            Destination::Cloud => self.cloud.push(t),
        }
        self.placements.push((dest, truth));

        let window = &self.nodes[e].window;
        if self.since_test[e] >= self.cfg.window_w && window.len() >= required_fill(self.cfg) {
            self.since_test[e] = 0;
            let seen: Vec<FeatureVector> = window.iter().cloned().collect();
            let ready = self.history[e].len() >= self.cfg.min_history;
            if ready && stream::novelty_indicator(window, &self.nodes[e].baseline, &self.cfg.novelty)? {
                self.absorb(e, seen)?;
            } else {
                self.history[e].extend(seen)?;
                self.nodes[e].baseline = dataset::summary_stats(&self.history[e])?;
            }
        }
        Ok(())
    }

    fn absorb(&mut self, e: usize, seen: Vec<FeatureVector>) -> Result<(), SimError> {
        self.novelty_events += 1;
        let mut fresh = Dataset::with_dim(seen.first().map_or(0, |v| v.dim()));
        fresh.extend(seen)?;
        self.history[e] = fresh;
        let ids: Vec<usize> = self.window_ids[e].drain(..).collect();
        retract(&mut self.nodes, &mut self.stored, &mut self.cloud, &ids);
        let (head, rest) = self.nodes.split_at_mut(e);
        let (node, tail) = rest.split_first_mut().expect("entry node exists");
        let peers: Vec<(usize, &Dataset)> = head
            .iter()
            .chain(tail.iter())
            .map(|n| (n.id, &n.dataset))
            .collect();
        stream::on_novelty(node, &peers, self.ann, &self.params)?;
        for &id in &ids {
            self.stored[e].push(Some(id));
            self.placements[id].0 = Destination::Node(e);
        }
        Ok(())
    }

    pub fn finish(mut self) -> Result<VariantRun, SimError> {
        while !self.is_done() {
            self.step()?;
        }
        let tau_mean_us = mean_latency(&self.latencies_us);
        Ok(VariantRun {
            nodes: self.nodes,
            placements: self.placements,
            n_local: self.counts[0],
            n_peer: self.counts[1],
            n_cloud: self.counts[2],
            cloud_count: self.cloud.len(),
            novelty_events: self.novelty_events,
            tau_mean_us,
            latencies_us: self.latencies_us,
        })
    }
}

/// Samples this many times above the median are treated as scheduler
/// preemptions rather than decision latencies.
pub const PREEMPTION_FACTOR: f64 = 50.0;

/// Mean latency with preempted samples excluded; 0 for an empty slice.
pub fn mean_latency(samples: &[f64]) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let cutoff = PREEMPTION_FACTOR * sorted[sorted.len() / 2];
    let kept: Vec<f64> = samples.iter().copied().filter(|&x| x <= cutoff).collect();
    kept.iter().sum::<f64>() / kept.len() as f64
}

/// Runs one variant to completion; see [`VariantSim`].
#[allow(clippy::too_many_arguments)]
pub fn run_variant(
    nodes: Vec<EdgeNode>,
    regime: &Dataset,
    arrivals: &[FeatureVector],
    entries: &[usize],
    variant: Variant,
    cfg: &SimConfig,
    ann: &AnnWeights,
    params: &PipelineParams,
) -> Result<VariantRun, SimError> {
    VariantSim::new(nodes, regime, arrivals, entries, variant, cfg, ann, params)?.finish()
}

fn required_fill(cfg: &SimConfig) -> usize {
    ((cfg.novelty.min_fill * cfg.window_w as f64 - 1e-9).ceil() as usize).max(1)
}

fn retract(nodes: &mut [EdgeNode], stored: &mut [Vec<Option<usize>>], cloud: &mut Vec<usize>, ids: &[usize]) {
    let gone: std::collections::HashSet<usize> = ids.iter().copied().collect();
    for (node, ids_here) in nodes.iter_mut().zip(stored.iter_mut()) {
        if !ids_here.iter().any(|i| i.is_some_and(|i| gone.contains(&i))) {
            continue;
        }
        let keep: Vec<bool> = ids_here
            .iter()
            .map(|i| !i.is_some_and(|i| gone.contains(&i)))
            .collect();
        let mut it = keep.iter();
        node.dataset.retain(|_| *it.next().unwrap());
        let mut it = keep.iter();
        ids_here.retain(|_| *it.next().unwrap());
    }
    cloud.retain(|i| !gone.contains(i));
}

/// One grid cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    #[serde(rename = "M")]
    pub m: usize,
    pub w: f64,
    pub seed: u64,
    /// Correct placements (%) with the all-features classifier.
    pub delta_cd: f64,
    /// Correct placements (%) with the selected-features classifier.
    pub delta_wcd: f64,
    pub sigma_os: f64,
    pub sigma_bns: f64,
    pub sigma_nns: f64,
    /// Mean decision latency over the full M-feature vector.
    pub tau_mean_us: f64,
    /// Mean decision latency of the selected-features classifier.
    pub tau_nns_us: f64,
    /// Decision counts of the selected-features variant.
    pub n_local: usize,
    pub n_peer: usize,
    pub n_cloud: usize,
    pub novelty_events: usize,
    /// Selected features per node, best first.
    pub selected: Vec<Vec<usize>>,
}

pub const CSV_HEADER: &str =
    "M,w,delta_cd,delta_wcd,sigma_os,sigma_bns,sigma_nns,tau_mean_us,n_local,n_peer,n_cloud";

impl MetricsReport {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.4},{},{},{}",
            self.m,
            self.w,
            self.delta_cd,
            self.delta_wcd,
            self.sigma_os,
            self.sigma_bns,
            self.sigma_nns,
            self.tau_mean_us,
            self.n_local,
            self.n_peer,
            self.n_cloud
        )
    }

    pub fn summary_line(&self) -> String {
        format!(
            "M={:<4} w={:<5} Δ_CD={:>7.3}% Δ_wCD={:>7.3}%  σ OS={:.4} BNS={:.4} NNS={:.4}  τ={:.3}µs  local/peer/cloud={}/{}/{}",
            self.m,
            self.w,
            self.delta_cd,
            self.delta_wcd,
            self.sigma_os,
            self.sigma_bns,
            self.sigma_nns,
            self.tau_mean_us,
            self.n_local,
            self.n_peer,
            self.n_cloud
        )
    }
}

/// Inputs of one grid cell.
struct Cell {
    cfg: SimConfig,
    params: PipelineParams,
    nodes: Vec<EdgeNode>,
    regime: Dataset,
    arrivals: Vec<FeatureVector>,
    entries: Vec<usize>,
}

impl Cell {
    fn new(cfg: SimConfig, scored: &ScoredBootstrap, ann: &AnnWeights) -> Result<Self, SimError> {
        cfg.validate()?;
        let params = cfg.cell_pipeline();
        Ok(Self {
            nodes: scored.with_selection(ann, &params)?,
            regime: scored.scenario.warmup_corpus()?,
            arrivals: scored.scenario.arrivals.clone(),
            entries: entry_sequence(&cfg),
            params,
            cfg,
        })
    }

    fn sims<'a>(&'a self, ann: &'a AnnWeights) -> Result<[VariantSim<'a>; 3], SimError> {
        let sim = |v| {
            VariantSim::new(
                self.nodes.clone(),
                &self.regime,
                &self.arrivals,
                &self.entries,
                v,
                &self.cfg,
                ann,
                &self.params,
            )
        };
        Ok([sim(Variant::Os)?, sim(Variant::Bns)?, sim(Variant::Nns)?])
    }

    fn report(&self, [os, bns, nns]: [VariantRun; 3]) -> Result<MetricsReport, SimError> {
        Ok(MetricsReport {
            m: self.cfg.m,
            w: self.cfg.w,
            seed: self.cfg.seed,
            delta_cd: bns.delta()?,
            delta_wcd: nns.delta()?,
            sigma_os: os.sigma()?,
            sigma_bns: bns.sigma()?,
            sigma_nns: nns.sigma()?,
            tau_mean_us: bns.tau_mean_us,
            tau_nns_us: nns.tau_mean_us,
            n_local: nns.n_local,
            n_peer: nns.n_peer,
            n_cloud: nns.n_cloud,
            novelty_events: nns.novelty_events,
            selected: self
                .nodes
                .iter()
                .map(|n| n.selected().indices.clone())
                .collect(),
        })
    }
}

/// Runs every variant of every cell in lockstep, one arrival at a time, so
/// that slow drifts in machine speed affect all latency measurements alike.
/// The order within a step is shuffled to spread cache effects evenly.
fn run_cells(cells: &[Cell], ann: &AnnWeights, pool: Option<&rayon::ThreadPool>) -> Result<Vec<MetricsReport>, SimError> {
    let mut sims: Vec<VariantSim> = Vec::with_capacity(3 * cells.len());
    for c in cells {
        sims.extend(c.sims(ann)?);
    }
    // the order only affects timing, never results
    let mut rng = seed::rng(cells.first().map_or(0, |c| c.cfg.seed));
    let mut order: Vec<usize> = (0..sims.len()).collect();
    while sims.iter().any(|s| !s.is_done()) {
        match pool {
            Some(p) => p.install(|| sims.par_iter_mut().try_for_each(|s| s.step()))?,
            None => {
                order.shuffle(&mut rng);
                for &i in &order {
                    sims[i].step()?;
                }
            }
        }
    }
    let mut runs = sims.into_iter().map(VariantSim::finish);
    cells
        .iter()
        .map(|c| {
            let triple = [
                runs.next().expect("three runs per cell")?,
                runs.next().expect("three runs per cell")?,
                runs.next().expect("three runs per cell")?,
            ];
            let report = c.report(triple)?;
            log::info!("{}", report.summary_line());
            Ok(report)
        })
        .collect()
}

/// Trains the fusion network described by `cfg.ann`.
pub fn train_fusion(cfg: &SimConfig) -> Result<AnnWeights, SimError> {
    Ok(aggregator::train_default(&cfg.ann)?.weights)
}

/// Paired comparison of the three variants for one (M, w) cell.
pub fn run_experiment(cfg: &SimConfig) -> Result<MetricsReport, SimError> {
    let ann = train_fusion(cfg)?;
    run_experiment_with(cfg, &ann)
}

pub fn run_experiment_with(cfg: &SimConfig, ann: &AnnWeights) -> Result<MetricsReport, SimError> {
    let scored = bootstrap_scored(cfg, ann)?;
    let cell = Cell::new(cfg.clone(), &scored, ann)?;
    Ok(run_cells(std::slice::from_ref(&cell), ann, None)?.remove(0))
}

/// One report per (M, w) cell, M-major. Cells sharing an M share their
/// bootstrap. With `cfg.parallel > 1`, bootstraps and the per-arrival steps
/// of different cells run on a pool of that many threads.
pub fn run_grid(cfg: &SimConfig, m_list: &[usize], w_list: &[f64]) -> Result<Vec<MetricsReport>, SimError> {
    let ann = train_fusion(cfg)?;
    run_grid_with(cfg, &ann, m_list, w_list)
}

pub fn run_grid_with(
    cfg: &SimConfig,
    ann: &AnnWeights,
    m_list: &[usize],
    w_list: &[f64],
) -> Result<Vec<MetricsReport>, SimError> {
    if m_list.is_empty() || w_list.is_empty() {
        return Err(SimError::InvalidConfig("grid lists must be non-empty".into()));
    }
    let group = |&m: &usize| -> Result<Vec<Cell>, SimError> {
        let base = SimConfig { m, ..cfg.clone() };
        let scored = bootstrap_scored(&SimConfig { w: w_list[0], ..base.clone() }, ann)?;
        w_list
            .iter()
            .map(|&w| Cell::new(SimConfig { w, ..base.clone() }, &scored, ann))
            .collect()
    };
    let pool = if cfg.parallel > 1 {
        Some(
            rayon::ThreadPoolBuilder::new()
                .num_threads(cfg.parallel)
                .build()
                .map_err(|e| SimError::InvalidConfig(e.to_string()))?,
        )
    } else {
        None
    };
    let groups: Vec<Vec<Cell>> = match &pool {
        Some(p) => p.install(|| m_list.par_iter().map(group).collect::<Result<_, _>>())?,
        None => m_list.iter().map(group).collect::<Result<_, _>>()?,
    };
    let cells: Vec<Cell> = groups.into_iter().flatten().collect();
    run_cells(&cells, ann, pool.as_ref())
}

pub fn write_csv(path: &Path, reports: &[MetricsReport]) -> Result<(), SimError> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "{CSV_HEADER}")?;
    for r in reports {
        writeln!(f, "{}", r.csv_row())?;
    }
    f.flush()?;
    Ok(())
}

pub fn write_json(path: &Path, reports: &[MetricsReport]) -> Result<(), SimError> {
    let f = std::io::BufWriter::new(std::fs::File::create(path)?);
    serde_json::to_writer_pretty(f, reports)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn delta_arithmetic() {
        let mut log: Vec<(Destination, usize)> = (0..80).map(|_| (Destination::Node(1), 1)).collect();
        log.extend((0..20).map(|_| (Destination::Node(0), 1)));
        assert_eq!(delta_metric(&log).unwrap(), 80.0);
        assert_eq!(delta_metric(&log[..80]).unwrap(), 100.0);
        assert_eq!(delta_metric(&log[80..]).unwrap(), 0.0);
        assert_eq!(delta_metric(&[(Destination::Cloud, 0)]).unwrap(), 0.0);
        assert!(matches!(delta_metric(&[]), Err(SimError::EmptyDecisionLog)));
    }

    #[test]
    fn config_validation() {
        let ok = SimConfig::default();
        assert!(ok.validate().is_ok());
        assert!(SimConfig { n_nodes: 1, ..ok.clone() }.validate().is_err());
        assert!(SimConfig { m: 1, ..ok.clone() }.validate().is_err());
        assert!(SimConfig { w: 0.0, ..ok.clone() }.validate().is_err());
        assert!(SimConfig { w: 1.5, ..ok.clone() }.validate().is_err());
        assert!(SimConfig { p_min: 2.0, ..ok.clone() }.validate().is_err());
    }

    #[test]
    fn round_robin_entries() {
        let cfg = SimConfig { arrivals: 7, ..SimConfig::default() };
        assert_eq!(entry_sequence(&cfg), vec![0, 1, 2, 0, 1, 2, 0]);
        let cfg = SimConfig { entry: EntryPolicy::Random, ..cfg };
        let e = entry_sequence(&cfg);
        assert_eq!(e, entry_sequence(&cfg));
        assert!(e.iter().all(|&k| k < 3));
    }

    #[test]
    fn csv_row_shape() {
        let r = MetricsReport {
            m: 10,
            w: 0.2,
            seed: 1,
            delta_cd: 90.0,
            delta_wcd: 95.5,
            sigma_os: 2.0,
            sigma_bns: 1.5,
            sigma_nns: 1.25,
            tau_mean_us: 0.5,
            tau_nns_us: 0.25,
            n_local: 10,
            n_peer: 5,
            n_cloud: 0,
            novelty_events: 0,
            selected: vec![],
        };
        assert_eq!(r.csv_row().split(',').count(), CSV_HEADER.split(',').count());
        assert!(r.csv_row().starts_with("10,0.2,90.000000,95.500000,"));
    }
}
