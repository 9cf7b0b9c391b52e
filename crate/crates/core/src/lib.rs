//! Interpretable feature selection and data admission for edge-node datasets.
//!
//! Every node scores its features with three model-agnostic estimators
//! (permutation importance, Monte-Carlo Shapley values and a partial-dependence
//! interaction statistic), fuses the three scores with a small feed-forward
//! network and keeps only the top-ranked features for a Gaussian naive Bayes
//! admission decision. Arrivals are kept locally, offloaded to the peer whose
//! dataset they resemble most, or sent to the cloud.
//!
//! The [`simnet`] module wires the pieces into a multi-node simulator that
//! reports decision accuracy, dataset solidity and decision latency.

pub mod aggregator;
pub mod cli;
pub mod dataset;
pub mod importance;
pub mod nbc;
pub mod oracle;
pub mod seed;
pub mod simnet;
pub mod stream;

pub use aggregator::{AnnWeights, SelectedFeatureSet, SelectionMode};
pub use dataset::{Dataset, FeatureStats, FeatureVector};
pub use importance::{ImportanceConfig, ImportanceScores, PredictiveModel};
pub use nbc::{Decision, DecisionKind, NbcModel};
pub use simnet::{MetricsReport, SimConfig};
