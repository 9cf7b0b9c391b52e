//! Fusion of the three importance scores into one significance value with a
//! three-layer sigmoid network, and feature-subset selection on top of it.

use std::fmt::Write as _;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::importance::ImportanceScores;
use crate::seed;

/// Number of network inputs: one per importance estimator.
pub const N_INPUTS: usize = 3;
const FORMAT_VERSION: &str = "edgesel-ann v1";

#[derive(Debug, Error, PartialEq)]
pub enum AnnError {
    #[error("training diverged at epoch {0}")]
    Diverged(usize),
    #[error("expert weights must be non-negative and sum to 1")]
    InvalidWeights,
    #[error("threshold selection kept no feature")]
    EmptySelection,
    #[error("need at least {need} training samples, got {have}")]
    TooFewSamples { have: usize, need: usize },
    #[error("invalid network or selection parameter: {0}")]
    InvalidParameter(String),
    #[error("score vectors have mismatched lengths")]
    ShapeMismatch,
    #[error("weights file: {0}")]
    Format(String),
}

pub fn sigmoid(a: f64) -> f64 {
    1.0 / (1.0 + (-a).exp())
}

/// `y(o) = s(Σ_j w_j g(Σ_k w_jk o_k + w_j0) + w_0)` with `g = s = sigmoid`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnWeights {
    /// `hidden[j][k]` is w_jk.
    pub hidden: Vec<[f64; N_INPUTS]>,
    /// w_j0.
    pub hidden_bias: Vec<f64>,
    /// w_j.
    pub output: Vec<f64>,
    /// w_0.
    pub output_bias: f64,
}

impl AnnWeights {
    pub fn zeros(c: usize) -> Self {
        Self {
            hidden: vec![[0.0; N_INPUTS]; c],
            hidden_bias: vec![0.0; c],
            output: vec![0.0; c],
            output_bias: 0.0,
        }
    }

    /// Uniform in [−0.5, 0.5].
    pub fn random<R: Rng + ?Sized>(c: usize, rng: &mut R) -> Self {
        let mut u = || rng.random_range(-0.5..=0.5);
        let mut w = Self::zeros(c);
        for row in &mut w.hidden {
            for x in row.iter_mut() {
                *x = u();
            }
        }
        for x in &mut w.hidden_bias {
            *x = u();
        }
        for x in &mut w.output {
            *x = u();
        }
        w.output_bias = u();
        w
    }

    /// Hidden-unit count C.
    pub fn hidden_units(&self) -> usize {
        self.hidden.len()
    }

    pub fn n_params(&self) -> usize {
        self.hidden_units() * (N_INPUTS + 2) + 1
    }

    pub fn is_finite(&self) -> bool {
        self.to_flat().iter().all(|x| x.is_finite())
    }

    /// Parameters in the order hidden (row-major), hidden biases, output
    /// weights, output bias.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_params());
        for row in &self.hidden {
            out.extend_from_slice(row);
        }
        out.extend_from_slice(&self.hidden_bias);
        out.extend_from_slice(&self.output);
        out.push(self.output_bias);
        out
    }

    pub fn from_flat(c: usize, flat: &[f64]) -> Result<Self, AnnError> {
        let mut w = Self::zeros(c);
        if flat.len() != w.n_params() {
            return Err(AnnError::ShapeMismatch);
        }
        let mut it = flat.iter().copied();
        for row in &mut w.hidden {
            for x in row.iter_mut() {
                *x = it.next().unwrap();
            }
        }
        for x in &mut w.hidden_bias {
            *x = it.next().unwrap();
        }
        for x in &mut w.output {
            *x = it.next().unwrap();
        }
        w.output_bias = it.next().unwrap();
        Ok(w)
    }

    pub fn forward(&self, o: &[f64; N_INPUTS]) -> f64 {
        let mut a = self.output_bias;
        for j in 0..self.hidden_units() {
            a += self.output[j] * sigmoid(self.pre_activation(j, o));
        }
        sigmoid(a)
    }

    fn pre_activation(&self, j: usize, o: &[f64; N_INPUTS]) -> f64 {
        let w = &self.hidden[j];
        self.hidden_bias[j] + w[0] * o[0] + w[1] * o[1] + w[2] * o[2]
    }

    /// Mean squared error over `samples`.
    pub fn mse(&self, samples: &[TrainingSample]) -> f64 {
        samples
            .iter()
            .map(|s| {
                let e = self.forward(&s.input) - s.target;
                e * e
            })
            .sum::<f64>()
            / samples.len() as f64
    }

    /// Mean squared error and its gradient by backpropagation.
    pub fn mse_and_gradient(&self, samples: &[TrainingSample]) -> (f64, AnnWeights) {
        let c = self.hidden_units();
        let mut grad = Self::zeros(c);
        let mut z = vec![0.0; c];
        let mut loss = 0.0;
        let scale = 2.0 / samples.len() as f64;
        for s in samples {
            let mut a = self.output_bias;
            for (j, zj) in z.iter_mut().enumerate() {
                *zj = sigmoid(self.pre_activation(j, &s.input));
                a += self.output[j] * *zj;
            }
            let y = sigmoid(a);
            let err = y - s.target;
            loss += err * err;
            // dL/da at the output unit
            let delta = scale * err * y * (1.0 - y);
            grad.output_bias += delta;
            for j in 0..c {
                grad.output[j] += delta * z[j];
                let dh = delta * self.output[j] * z[j] * (1.0 - z[j]);
                grad.hidden_bias[j] += dh;
                for k in 0..N_INPUTS {
                    grad.hidden[j][k] += dh * s.input[k];
                }
            }
        }
        (loss / samples.len() as f64, grad)
    }

    fn step(&mut self, grad: &AnnWeights, lr: f64) {
        for (row, g) in self.hidden.iter_mut().zip(&grad.hidden) {
            for k in 0..N_INPUTS {
                row[k] -= lr * g[k];
            }
        }
        for (w, g) in self.hidden_bias.iter_mut().zip(&grad.hidden_bias) {
            *w -= lr * g;
        }
        for (w, g) in self.output.iter_mut().zip(&grad.output) {
            *w -= lr * g;
        }
        self.output_bias -= lr * grad.output_bias;
    }

    /// Flat text form: a version line, `3 C`, then C rows of hidden weights,
    /// a row of hidden biases, a row of output weights and the output bias.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let row = |s: &mut String, xs: &[f64]| {
            let parts: Vec<String> = xs.iter().map(|x| format!("{x:?}")).collect();
            let _ = writeln!(s, "{}", parts.join(" "));
        };
        let _ = writeln!(s, "{FORMAT_VERSION}");
        let _ = writeln!(s, "{} {}", N_INPUTS, self.hidden_units());
        for r in &self.hidden {
            row(&mut s, r);
        }
        row(&mut s, &self.hidden_bias);
        row(&mut s, &self.output);
        row(&mut s, &[self.output_bias]);
        s
    }

    pub fn from_text(text: &str) -> Result<Self, AnnError> {
        let fmt = |m: &str| AnnError::Format(m.to_owned());
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
        if lines.next() != Some(FORMAT_VERSION) {
            return Err(fmt("missing or unknown version line"));
        }
        let dims: Vec<usize> = lines
            .next()
            .ok_or_else(|| fmt("missing dimension line"))?
            .split_whitespace()
            .map(|t| t.parse().map_err(|_| fmt("bad dimension")))
            .collect::<Result<_, _>>()?;
        let (inputs, c) = match dims[..] {
            [i, c] => (i, c),
            _ => return Err(fmt("dimension line must hold two integers")),
        };
        if inputs != N_INPUTS || c == 0 {
            return Err(fmt("unsupported dimensions"));
        }
        let values: Vec<f64> = lines
            .flat_map(str::split_whitespace)
            .map(|t| t.parse::<f64>().map_err(|_| fmt("bad number")))
            .collect::<Result<_, _>>()?;
        let w = Self::from_flat(c, &values).map_err(|_| fmt("wrong number of weights"))?;
        if !w.is_finite() {
            return Err(fmt("non-finite weight"));
        }
        Ok(w)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainingSample {
    pub input: [f64; N_INPUTS],
    pub target: f64,
}

/// Default trust placed in (PFI, Shapley, interaction).
pub const DEFAULT_TRUST: [f64; N_INPUTS] = [0.4, 0.4, 0.2];

/// Training set standing in for expert judgement: inputs uniform on the unit
/// cube, target the trust-weighted mean of the inputs.
pub fn expert_training_set(
    n: usize,
    trust: [f64; N_INPUTS],
    seed: u64,
) -> Result<Vec<TrainingSample>, AnnError> {
    if trust.iter().any(|w| !(*w >= 0.0)) || (trust.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(AnnError::InvalidWeights);
    }
    let mut rng = seed::rng(seed);
    Ok((0..n)
        .map(|_| {
            let input: [f64; N_INPUTS] = std::array::from_fn(|_| rng.random::<f64>());
            TrainingSample {
                input,
                target: expert_target(&input, &trust),
            }
        })
        .collect())
}

pub fn expert_target(input: &[f64; N_INPUTS], trust: &[f64; N_INPUTS]) -> f64 {
    let t: f64 = input.iter().zip(trust).map(|(x, w)| x * w).sum();
    t.clamp(0.0, 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnParams {
    pub hidden_units: usize,
    pub learning_rate: f64,
    pub max_epochs: usize,
    pub target_mse: f64,
    pub n_samples: usize,
    pub trust: [f64; N_INPUTS],
    pub seed: u64,
}

impl Default for AnnParams {
    fn default() -> Self {
        Self {
            hidden_units: 8,
            learning_rate: 0.5,
            max_epochs: 10_000,
            target_mse: 1e-3,
            n_samples: 2000,
            trust: DEFAULT_TRUST,
            seed: 7,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedAnn {
    pub weights: AnnWeights,
    /// Training MSE of the returned weights.
    pub mse: f64,
    pub epochs: usize,
}

/// Full-batch gradient descent on the mean squared error.
pub fn train_ann(
    samples: &[TrainingSample],
    hidden_units: usize,
    learning_rate: f64,
    max_epochs: usize,
    target_mse: f64,
    seed: u64,
) -> Result<TrainedAnn, AnnError> {
    if samples.len() < 10 {
        return Err(AnnError::TooFewSamples {
            have: samples.len(),
            need: 10,
        });
    }
    if hidden_units == 0 {
        return Err(AnnError::InvalidParameter("hidden units must be at least 1".into()));
    }
    if !(learning_rate >= 0.0) || !learning_rate.is_finite() {
        return Err(AnnError::InvalidParameter("learning rate must be non-negative".into()));
    }
    let mut rng = seed::rng(seed);
    let mut weights = AnnWeights::random(hidden_units, &mut rng);
    let mut epochs = 0;
    while epochs < max_epochs {
        let (mse, grad) = weights.mse_and_gradient(samples);
        if !mse.is_finite() {
            return Err(AnnError::Diverged(epochs));
        }
        if mse <= target_mse {
            break;
        }
        weights.step(&grad, learning_rate);
        epochs += 1;
    }
    let mse = weights.mse(samples);
    if !mse.is_finite() || !weights.is_finite() {
        return Err(AnnError::Diverged(epochs));
    }
    Ok(TrainedAnn {
        weights,
        mse,
        epochs,
    })
}

/// Trains the default network on the default expert set.
pub fn train_default(params: &AnnParams) -> Result<TrainedAnn, AnnError> {
    let samples = expert_training_set(params.n_samples, params.trust, params.seed)?;
    train_ann(
        &samples,
        params.hidden_units,
        params.learning_rate,
        params.max_epochs,
        params.target_mse,
        params.seed.wrapping_add(1),
    )
}

/// Per estimator, min-max normalization across features. Constant rows map
/// to 0.5. Returns rows in the order (PFI, Shapley, interaction).
pub fn normalize_scores(s: &ImportanceScores) -> Result<[Vec<f64>; N_INPUTS], AnnError> {
    let m = s.pfi.len();
    if s.shapley.len() != m || s.fit.len() != m {
        return Err(AnnError::ShapeMismatch);
    }
    Ok([
        min_max(&s.pfi),
        min_max(&s.shapley),
        min_max(&s.fit),
    ])
}

fn min_max(xs: &[f64]) -> Vec<f64> {
    let lo = xs.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    if !(span > 1e-12 * hi.abs().max(lo.abs()).max(1.0)) {
        return vec![0.5; xs.len()];
    }
    xs.iter().map(|x| ((x - lo) / span).clamp(0.0, 1.0)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum SelectionMode {
    /// Keep the `ceil(w·M)` best features.
    TopFraction(f64),
    /// Keep every feature whose fused score exceeds `d`.
    Threshold(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectedFeatureSet {
    /// Selected feature indices, best first.
    pub indices: Vec<usize>,
    /// Fused score of every feature, by feature index.
    pub scores: Vec<f64>,
    pub mode: SelectionMode,
}

impl SelectedFeatureSet {
    /// Selected indices in ascending order.
    pub fn sorted_indices(&self) -> Vec<usize> {
        let mut v = self.indices.clone();
        v.sort_unstable();
        v
    }

    pub fn contains(&self, j: usize) -> bool {
        self.indices.contains(&j)
    }
}

/// Number of features kept by `TopFraction(w)` out of `m`.
pub fn top_fraction_count(w: f64, m: usize) -> usize {
    // absorb representation error such as 0.07 * 100 = 7.000000000000001
    let k = (w * m as f64 - 1e-9).ceil();
    (k.max(1.0) as usize).min(m)
}

/// Fused significance of every feature, by index.
pub fn fused_scores(scores: &ImportanceScores, wts: &AnnWeights) -> Result<Vec<f64>, AnnError> {
    let [p, s, f] = normalize_scores(scores)?;
    Ok((0..p.len()).map(|j| wts.forward(&[p[j], s[j], f[j]])).collect())
}

/// Feature indices by fused score, best first; ties go to the lower index.
pub fn ranking(fused: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..fused.len()).collect();
    order.sort_by(|&a, &b| fused[b].total_cmp(&fused[a]).then(a.cmp(&b)));
    order
}

pub fn select_features(
    scores: &ImportanceScores,
    wts: &AnnWeights,
    mode: SelectionMode,
) -> Result<SelectedFeatureSet, AnnError> {
    let fused = fused_scores(scores, wts)?;
    let order = ranking(&fused);
    let indices = match mode {
        SelectionMode::TopFraction(w) => {
            if !(w > 0.0 && w <= 1.0) {
                return Err(AnnError::InvalidParameter(format!("fraction {w} not in (0, 1]")));
            }
            order[..top_fraction_count(w, fused.len())].to_vec()
        }
        SelectionMode::Threshold(d) => {
            if !(0.0..1.0).contains(&d) {
                return Err(AnnError::InvalidParameter(format!("threshold {d} not in [0, 1)")));
            }
            let kept: Vec<usize> = order.into_iter().filter(|&j| fused[j] > d).collect();
            if kept.is_empty() {
                return Err(AnnError::EmptySelection);
            }
            kept
        }
    };
    Ok(SelectedFeatureSet {
        indices,
        scores: fused,
        mode,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn scores(pfi: Vec<f64>, shapley: Vec<f64>, fit: Vec<f64>) -> ImportanceScores {
        ImportanceScores {
            pfi,
            shapley,
            fit,
            zero_baseline: false,
        }
    }

    #[test]
    fn normalize_affine_and_degenerate() {
        let s = scores(vec![1.0, 2.0, 3.0], vec![0.7, 0.7, 0.7], vec![0.0, 0.0, 1.0]);
        let [p, sv, f] = normalize_scores(&s).unwrap();
        assert_eq!(p, vec![0.0, 0.5, 1.0]);
        assert_eq!(sv, vec![0.5, 0.5, 0.5]);
        assert_eq!(f, vec![0.0, 0.0, 1.0]);
    }

    #[test]
    fn zero_weights_give_half() {
        let w = AnnWeights::zeros(4);
        assert_eq!(w.forward(&[0.3, 0.9, 0.1]), 0.5);
    }

    #[test]
    fn large_output_bias_saturates() {
        let mut w = AnnWeights::zeros(2);
        let mut last = 0.5;
        for b in [1.0, 5.0, 20.0, 40.0] {
            w.output_bias = b;
            let y = w.forward(&[0.5, 0.5, 0.5]);
            assert!(y > last);
            last = y;
        }
        assert!(1.0 - last < 1e-12);
    }

    #[test]
    fn two_unit_network_hand_expanded() {
        let w = AnnWeights {
            hidden: vec![[0.5, -1.0, 2.0], [-0.25, 0.75, 1.5]],
            hidden_bias: vec![0.1, -0.2],
            output: vec![1.2, -0.7],
            output_bias: 0.05,
        };
        let o = [0.2, 0.4, 0.9];
        let a1: f64 = 0.5 * 0.2 - 1.0 * 0.4 + 2.0 * 0.9 + 0.1; // 1.6
        let a2: f64 = -0.25 * 0.2 + 0.75 * 0.4 + 1.5 * 0.9 - 0.2; // 1.4
        let z1 = 1.0 / (1.0 + (-a1).exp());
        let z2 = 1.0 / (1.0 + (-a2).exp());
        let y = 1.0 / (1.0 + (-(1.2 * z1 - 0.7 * z2 + 0.05)).exp());
        assert!((w.forward(&o) - y).abs() < 1e-12);
    }

    #[test]
    fn expert_targets() {
        let t = DEFAULT_TRUST;
        assert!((expert_target(&[1.0, 1.0, 1.0], &t) - 1.0).abs() < 1e-15);
        assert_eq!(expert_target(&[0.0, 0.0, 0.0], &t), 0.0);
        assert!((expert_target(&[0.3, 0.9, 0.9], &[1.0, 0.0, 0.0]) - 0.3).abs() < 1e-15);
        assert_eq!(
            expert_training_set(10, [0.5, 0.5, 0.5], 0),
            Err(AnnError::InvalidWeights)
        );
        assert_eq!(
            expert_training_set(10, [1.5, -0.5, 0.0], 0),
            Err(AnnError::InvalidWeights)
        );
        let set = expert_training_set(100, t, 3).unwrap();
        assert!(set
            .iter()
            .all(|s| s.input.iter().all(|x| (0.0..=1.0).contains(x)) && (0.0..=1.0).contains(&s.target)));
    }

    #[test]
    fn zero_learning_rate_keeps_weights() {
        let samples = expert_training_set(50, DEFAULT_TRUST, 1).unwrap();
        let trained = train_ann(&samples, 3, 0.0, 25, 0.0, 9).unwrap();
        let mut rng = seed::rng(9);
        assert_eq!(trained.weights, AnnWeights::random(3, &mut rng));
        assert_eq!(trained.epochs, 25);
    }

    #[test]
    fn train_rejects_bad_input() {
        let samples = expert_training_set(5, DEFAULT_TRUST, 1).unwrap();
        assert!(matches!(
            train_ann(&samples, 3, 0.1, 10, 0.0, 0),
            Err(AnnError::TooFewSamples { .. })
        ));
        let samples = expert_training_set(20, DEFAULT_TRUST, 1).unwrap();
        assert!(matches!(
            train_ann(&samples, 0, 0.1, 10, 0.0, 0),
            Err(AnnError::InvalidParameter(_))
        ));
    }

    #[test]
    fn huge_learning_rate_diverges_or_stays_finite() {
        let samples = expert_training_set(20, DEFAULT_TRUST, 1).unwrap();
        match train_ann(&samples, 2, 1e300, 50, 0.0, 0) {
            Ok(t) => assert!(t.mse.is_finite()),
            Err(e) => assert!(matches!(e, AnnError::Diverged(_))),
        }
    }

    #[test]
    fn selection_cardinality_and_ties() {
        let w = AnnWeights::zeros(2);
        let s = scores(vec![1.0; 10], vec![0.0; 10], vec![0.0; 10]);
        let sel = select_features(&s, &w, SelectionMode::TopFraction(0.1)).unwrap();
        assert_eq!(sel.indices, vec![0]);
        let sel = select_features(&s, &w, SelectionMode::TopFraction(0.2)).unwrap();
        assert_eq!(sel.indices.len(), 2);
        assert!(matches!(
            select_features(&s, &w, SelectionMode::Threshold(0.6)),
            Err(AnnError::EmptySelection)
        ));
        assert!(matches!(
            select_features(&s, &w, SelectionMode::TopFraction(0.0)),
            Err(AnnError::InvalidParameter(_))
        ));
    }

    #[test]
    fn threshold_keeps_scores_above_d() {
        let mut w = AnnWeights::zeros(1);
        w.hidden[0] = [4.0, 0.0, 0.0];
        w.output[0] = 4.0;
        w.output_bias = -2.0;
        let s = scores(vec![0.0, 1.0, 2.0, 3.0], vec![0.0; 4], vec![0.0; 4]);
        let sel = select_features(&s, &w, SelectionMode::Threshold(0.5)).unwrap();
        assert!(sel.indices.iter().all(|&j| sel.scores[j] > 0.5));
        assert_eq!(sel.indices[0], 3);
    }

    #[test]
    fn top_fraction_counts() {
        assert_eq!(top_fraction_count(0.1, 10), 1);
        assert_eq!(top_fraction_count(0.2, 100), 20);
        assert_eq!(top_fraction_count(0.07, 100), 7);
        assert_eq!(top_fraction_count(0.5, 5), 3);
        assert_eq!(top_fraction_count(1.0, 7), 7);
        assert_eq!(top_fraction_count(0.01, 7), 1);
    }

    #[test]
    fn text_format_rejects_corruption() {
        let w = AnnWeights::random(3, &mut seed::rng(1));
        let text = w.to_text();
        assert!(AnnWeights::from_text(&text.replacen("edgesel-ann v1", "v0", 1)).is_err());
        let mut lines: Vec<&str> = text.lines().collect();
        lines.pop();
        assert!(AnnWeights::from_text(&lines.join("\n")).is_err());
        assert!(AnnWeights::from_text(&text.replacen("3 3", "3 x", 1)).is_err());
        let nan = format!("{}\nNaN\n", text.trim_end().rsplit_once('\n').unwrap().0);
        assert!(matches!(AnnWeights::from_text(&nan), Err(AnnError::Format(_))));
    }

    proptest! {
        #[test]
        fn text_roundtrip_is_exact(flat in prop::collection::vec(-1e6f64..1e6, 5 * 4 + 1)) {
            let w = AnnWeights::from_flat(4, &flat).unwrap();
            let back = AnnWeights::from_text(&w.to_text()).unwrap();
            prop_assert_eq!(w, back);
        }

        #[test]
        fn forward_in_open_unit_interval(
            flat in prop::collection::vec(-8f64..8.0, 5 * 3 + 1),
            o in prop::array::uniform3(-2f64..2.0),
        ) {
            let w = AnnWeights::from_flat(3, &flat).unwrap();
            let y = w.forward(&o);
            prop_assert!(y > 0.0 && y < 1.0);
        }

        #[test]
        fn normalized_rows_in_unit_interval(
            rows in prop::collection::vec(prop::array::uniform3(-1e3f64..1e3), 1..40),
        ) {
            let s = scores(
                rows.iter().map(|r| r[0]).collect(),
                rows.iter().map(|r| r[1]).collect(),
                rows.iter().map(|r| r[2]).collect(),
            );
            for row in normalize_scores(&s).unwrap() {
                prop_assert!(row.iter().all(|x| (0.0..=1.0).contains(x)));
            }
        }

        #[test]
        fn top_fraction_prefix_property(
            rows in prop::collection::vec(prop::array::uniform3(0f64..10.0), 1..30),
            a in 0.01f64..1.0,
            b in 0.01f64..1.0,
        ) {
            let (w1, w2) = if a <= b { (a, b) } else { (b, a) };
            let s = scores(
                rows.iter().map(|r| r[0]).collect(),
                rows.iter().map(|r| r[1]).collect(),
                rows.iter().map(|r| r[2]).collect(),
            );
            let wts = AnnWeights::random(3, &mut seed::rng(5));
            let small = select_features(&s, &wts, SelectionMode::TopFraction(w1)).unwrap();
            let large = select_features(&s, &wts, SelectionMode::TopFraction(w2)).unwrap();
            prop_assert_eq!(&large.indices[..small.indices.len()], &small.indices[..]);
        }
    }
}
