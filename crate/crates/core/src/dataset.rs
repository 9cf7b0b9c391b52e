//! Node-local datasets: data model, CSV ingestion, summary statistics,
//! solidity and a seeded synthetic corpus generator.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal, StudentT};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::seed::{self, stream_id};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("file not found: {0}")]
    FileNotFound(PathBuf),
    #[error("malformed data row {0}")]
    MalformedRow(usize),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("invalid generator config: {0}")]
    InvalidConfig(String),
    #[error("vector has {found} values, dataset expects {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("vector contains a non-finite value")]
    NonFinite,
    #[error("duplicate feature name {0:?}")]
    DuplicateName(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

/// One multivariate record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    /// Ground-truth provenance (cluster or owning node), when known.
    pub source_label: Option<usize>,
}

impl FeatureVector {
    pub fn new(values: Vec<f64>) -> Self {
        Self {
            values,
            source_label: None,
        }
    }

    pub fn labeled(values: Vec<f64>, label: usize) -> Self {
        Self {
            values,
            source_label: Some(label),
        }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

/// An ordered collection of equal-length vectors with named features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    vectors: Vec<FeatureVector>,
    feature_names: Vec<String>,
}

impl Dataset {
    pub fn new(feature_names: Vec<String>) -> Result<Self, DatasetError> {
        let mut seen = HashSet::new();
        for name in &feature_names {
            if !seen.insert(name.as_str()) {
                return Err(DatasetError::DuplicateName(name.clone()));
            }
        }
        Ok(Self {
            vectors: Vec::new(),
            feature_names,
        })
    }

    /// Dataset with generated names `f0..f{m-1}`.
    pub fn with_dim(m: usize) -> Self {
        Self {
            vectors: Vec::new(),
            feature_names: (0..m).map(|j| format!("f{j}")).collect(),
        }
    }

    pub fn from_vectors(
        feature_names: Vec<String>,
        vectors: Vec<FeatureVector>,
    ) -> Result<Self, DatasetError> {
        let mut d = Self::new(feature_names)?;
        d.vectors.reserve(vectors.len());
        for v in vectors {
            d.push(v)?;
        }
        Ok(d)
    }

    /// Rows without labels and with generated feature names.
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self, DatasetError> {
        let m = rows.first().map_or(0, Vec::len);
        let mut d = Self::with_dim(m);
        for r in rows {
            d.push(FeatureVector::new(r))?;
        }
        Ok(d)
    }

    pub fn push(&mut self, v: FeatureVector) -> Result<(), DatasetError> {
        if v.dim() != self.dim() {
            return Err(DatasetError::DimensionMismatch {
                expected: self.dim(),
                found: v.dim(),
            });
        }
        if v.values.iter().any(|x| !x.is_finite()) {
            return Err(DatasetError::NonFinite);
        }
        self.vectors.push(v);
        Ok(())
    }

    pub fn extend<I: IntoIterator<Item = FeatureVector>>(
        &mut self,
        it: I,
    ) -> Result<(), DatasetError> {
        for v in it {
            self.push(v)?;
        }
        Ok(())
    }

    /// Number of features, M.
    pub fn dim(&self) -> usize {
        self.feature_names.len()
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn vectors(&self) -> &[FeatureVector] {
        &self.vectors
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.vectors[i].values
    }

    pub fn column(&self, j: usize) -> impl Iterator<Item = f64> + '_ {
        self.vectors.iter().map(move |v| v.values[j])
    }

    pub fn labels(&self) -> impl Iterator<Item = Option<usize>> + '_ {
        self.vectors.iter().map(|v| v.source_label)
    }

    /// Mutable access to a single cell. Callers must keep the value finite.
    pub(crate) fn set(&mut self, i: usize, j: usize, value: f64) {
        debug_assert!(value.is_finite());
        self.vectors[i].values[j] = value;
    }

    pub(crate) fn retain<F: FnMut(&FeatureVector) -> bool>(&mut self, f: F) {
        self.vectors.retain(f);
    }

    /// Copy with every vector relabeled to `label`.
    pub fn relabeled(&self, label: usize) -> Self {
        let mut out = self.clone();
        for v in &mut out.vectors {
            v.source_label = Some(label);
        }
        out
    }

    /// Copy keeping only the first `m` features.
    pub fn truncated(&self, m: usize) -> Self {
        Self {
            feature_names: self.feature_names[..m].to_vec(),
            vectors: self
                .vectors
                .iter()
                .map(|v| FeatureVector {
                    values: v.values[..m].to_vec(),
                    source_label: v.source_label,
                })
                .collect(),
        }
    }

    /// Rows at the given positions, in the given order.
    pub fn subset_rows(&self, rows: &[usize]) -> Self {
        Self {
            feature_names: self.feature_names.clone(),
            vectors: rows.iter().map(|&i| self.vectors[i].clone()).collect(),
        }
    }
}

/// Per-feature location and spread.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureStats {
    pub mean: f64,
    /// Population standard deviation (divisor n).
    pub std: f64,
    pub min: f64,
    pub max: f64,
}

/// Reads a headered, comma-separated file of real numbers. Data rows are
/// numbered from 1 in [`DatasetError::MalformedRow`].
pub fn ingest_csv(path: impl AsRef<Path>) -> Result<Dataset, DatasetError> {
    let path = path.as_ref();
    if !path.is_file() {
        return Err(DatasetError::FileNotFound(path.to_path_buf()));
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let names: Vec<String> = reader.headers()?.iter().map(str::to_owned).collect();
    let mut d = Dataset::new(names)?;
    let m = d.dim();
    for (idx, record) in reader.records().enumerate() {
        let row = idx + 1;
        let record = record.map_err(|_| DatasetError::MalformedRow(row))?;
        if record.len() != m {
            return Err(DatasetError::MalformedRow(row));
        }
        let values = record
            .iter()
            .map(|cell| cell.parse::<f64>().ok().filter(|x| x.is_finite()))
            .collect::<Option<Vec<f64>>>()
            .ok_or(DatasetError::MalformedRow(row))?;
        d.push(FeatureVector::new(values))?;
    }
    Ok(d)
}

/// Two-pass per-feature statistics.
pub fn summary_stats(d: &Dataset) -> Result<Vec<FeatureStats>, DatasetError> {
    if d.is_empty() {
        return Err(DatasetError::EmptyDataset);
    }
    let n = d.len() as f64;
    Ok((0..d.dim())
        .map(|j| {
            let mean = d.column(j).sum::<f64>() / n;
            let var = d.column(j).map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
            let (min, max) = d
                .column(j)
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| {
                    (lo.min(x), hi.max(x))
                });
            // rounding can push the mean a hair outside [min, max]
            FeatureStats {
                mean: mean.clamp(min, max),
                std: var.sqrt(),
                min,
                max,
            }
        })
        .collect())
}

/// Dataset solidity σ: the mean, over all features, of the per-feature
/// population standard deviation. Lower is more solid.
pub fn solidity(d: &Dataset) -> Result<f64, DatasetError> {
    let stats = summary_stats(d)?;
    if stats.is_empty() {
        return Ok(0.0);
    }
    Ok(stats.iter().map(|s| s.std).sum::<f64>() / stats.len() as f64)
}

/// Distribution of the features that carry no cluster information.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum NoiseShape {
    Gaussian,
    /// Student-t with the given degrees of freedom, scaled by `noise_std`.
    StudentT(f64),
}

/// Parameters of the synthetic cluster corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthParams {
    pub n_clusters: usize,
    pub m: usize,
    /// Half-span of the cluster centers on the strongest informative feature.
    pub separation: f64,
    pub noise_std: f64,
    /// The last `n_irrelevant` features share one distribution across clusters.
    pub n_irrelevant: usize,
    pub irrelevant_shape: NoiseShape,
    /// Scale of the irrelevant features.
    pub irrelevant_scale: f64,
    /// Center scale of informative feature `r` is `separation * decay^r`;
    /// 1.0 makes every informative feature equally strong.
    pub relevance_decay: f64,
}

impl SynthParams {
    pub fn validate(&self) -> Result<(), DatasetError> {
        let bad = |s: &str| Err(DatasetError::InvalidConfig(s.to_owned()));
        if self.n_clusters == 0 {
            return bad("n_clusters must be at least 1");
        }
        if self.m == 0 {
            return bad("m must be at least 1");
        }
        if self.n_irrelevant >= self.m {
            return bad("n_irrelevant must be smaller than m");
        }
        if !(self.separation > 0.0) || !self.separation.is_finite() {
            return bad("separation must be positive");
        }
        if !(self.noise_std >= 0.0) || !self.noise_std.is_finite() {
            return bad("noise_std must be non-negative");
        }
        if !(self.irrelevant_scale > 0.0) || !self.irrelevant_scale.is_finite() {
            return bad("irrelevant_scale must be positive");
        }
        if !(self.relevance_decay > 0.0 && self.relevance_decay <= 1.0) {
            return bad("relevance_decay must lie in (0, 1]");
        }
        if let NoiseShape::StudentT(df) = self.irrelevant_shape {
            if !(df > 0.0) {
                return bad("student-t degrees of freedom must be positive");
            }
        }
        Ok(())
    }

    pub fn n_relevant(&self) -> usize {
        self.m - self.n_irrelevant
    }
}

/// Gaussian clusters with fixed centers. On informative feature `r` the
/// centers are evenly spaced over `[-s_r, s_r]`, `s_r = separation * decay^r`,
/// in a cluster order shuffled per feature. Centers depend only on the seed
/// passed to [`SyntheticSource::new`], so warm-up data and later arrivals can
/// be drawn from the same clusters with independent sampling streams.
#[derive(Debug, Clone)]
pub struct SyntheticSource {
    params: SynthParams,
    centers: Vec<Vec<f64>>,
    student: Option<StudentT<f64>>,
}

impl SyntheticSource {
    pub fn new(params: SynthParams, seed: u64) -> Result<Self, DatasetError> {
        params.validate()?;
        let mut rng = seed::derived_rng(seed, stream_id::CENTERS, 0);
        let k = params.n_clusters;
        let mut centers = vec![vec![0.0; params.n_relevant()]; k];
        let mut order: Vec<usize> = (0..k).collect();
        for r in 0..params.n_relevant() {
            let half_span = params.separation * params.relevance_decay.powi(r as i32);
            order.shuffle(&mut rng);
            for (c, &slot) in order.iter().enumerate() {
                let u = if k == 1 { 0.0 } else { 2.0 * slot as f64 / (k - 1) as f64 - 1.0 };
                centers[c][r] = half_span * u;
            }
        }
        let student = match params.irrelevant_shape {
            NoiseShape::Gaussian => None,
            NoiseShape::StudentT(df) => Some(
                StudentT::new(df).map_err(|e| DatasetError::InvalidConfig(e.to_string()))?,
            ),
        };
        Ok(Self {
            params,
            centers,
            student,
        })
    }

    pub fn params(&self) -> &SynthParams {
        &self.params
    }

    pub fn centers(&self) -> &[Vec<f64>] {
        &self.centers
    }

    pub fn feature_names(&self) -> Vec<String> {
        (0..self.params.m).map(|j| format!("f{j}")).collect()
    }

    pub fn draw<R: Rng + ?Sized>(&self, cluster: usize, rng: &mut R) -> FeatureVector {
        let p = &self.params;
        let mut values = Vec::with_capacity(p.m);
        for &c in &self.centers[cluster] {
            let z: f64 = StandardNormal.sample(rng);
            values.push(c + p.noise_std * z);
        }
        for _ in 0..p.n_irrelevant {
            let z: f64 = match &self.student {
                None => StandardNormal.sample(rng),
                Some(t) => t.sample(rng),
            };
            values.push(p.irrelevant_scale * z);
        }
        FeatureVector::labeled(values, cluster)
    }

    /// `n_per_cluster` vectors per cluster, clusters in order.
    pub fn balanced<R: Rng + ?Sized>(&self, n_per_cluster: usize, rng: &mut R) -> Dataset {
        let mut vectors = Vec::with_capacity(n_per_cluster * self.params.n_clusters);
        for k in 0..self.params.n_clusters {
            for _ in 0..n_per_cluster {
                vectors.push(self.draw(k, rng));
            }
        }
        Dataset {
            vectors,
            feature_names: self.feature_names(),
        }
    }

    /// `n` vectors with clusters drawn uniformly at random.
    pub fn stream<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<FeatureVector> {
        (0..n)
            .map(|_| {
                let k = rng.random_range(0..self.params.n_clusters);
                self.draw(k, rng)
            })
            .collect()
    }
}

/// Balanced labeled corpus from Gaussian clusters; see [`SyntheticSource`].
pub fn synth_generate(
    n_per_cluster: usize,
    n_clusters: usize,
    m: usize,
    separation: f64,
    noise_std: f64,
    n_irrelevant: usize,
    seed: u64,
) -> Result<Dataset, DatasetError> {
    let params = SynthParams {
        n_clusters,
        m,
        separation,
        noise_std,
        n_irrelevant,
        irrelevant_shape: NoiseShape::Gaussian,
        irrelevant_scale: noise_std.max(f64::MIN_POSITIVE),
        relevance_decay: 1.0,
    };
    let source = SyntheticSource::new(params, seed)?;
    let mut rng = seed::derived_rng(seed, stream_id::WARMUP, 0);
    Ok(source.balanced(n_per_cluster, &mut rng))
}

/// Assigns ground-truth labels to an unlabeled corpus with seeded k-means
/// (k-means++ seeding, Lloyd iterations). Returns the labeled copy.
pub fn assign_cluster_labels(d: &Dataset, k: usize, seed: u64) -> Result<Dataset, DatasetError> {
    if d.is_empty() {
        return Err(DatasetError::EmptyDataset);
    }
    if k == 0 || k > d.len() {
        return Err(DatasetError::InvalidConfig(format!(
            "cannot form {k} clusters from {} rows",
            d.len()
        )));
    }
    let mut rng = seed::derived_rng(seed, stream_id::LABELS, 0);
    let dist2 = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>();

    let mut centers: Vec<Vec<f64>> = vec![d.row(rng.random_range(0..d.len())).to_vec()];
    while centers.len() < k {
        let weights: Vec<f64> = (0..d.len())
            .map(|i| {
                centers
                    .iter()
                    .map(|c| dist2(d.row(i), c))
                    .fold(f64::INFINITY, f64::min)
            })
            .collect();
        let total: f64 = weights.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut pick = d.len() - 1;
            for (i, w) in weights.iter().enumerate() {
                if target < *w {
                    pick = i;
                    break;
                }
                target -= w;
            }
            pick
        } else {
            // every row coincides with a center already
            sample(&mut rng, d.len(), 1).index(0)
        };
        centers.push(d.row(next).to_vec());
    }

    let nearest = |x: &[f64], centers: &[Vec<f64>]| {
        let mut best = (0, f64::INFINITY);
        for (c, center) in centers.iter().enumerate() {
            let dd = dist2(x, center);
            if dd < best.1 {
                best = (c, dd);
            }
        }
        best.0
    };

    let mut assign = vec![usize::MAX; d.len()];
    for _ in 0..100 {
        let mut changed = false;
        for (i, a) in assign.iter_mut().enumerate() {
            let c = nearest(d.row(i), &centers);
            if *a != c {
                *a = c;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        for (c, center) in centers.iter_mut().enumerate() {
            let members: Vec<usize> = (0..d.len()).filter(|&i| assign[i] == c).collect();
            if members.is_empty() {
                continue;
            }
            for (j, slot) in center.iter_mut().enumerate() {
                *slot = members.iter().map(|&i| d.row(i)[j]).sum::<f64>() / members.len() as f64;
            }
        }
    }

    let mut out = d.clone();
    for (v, a) in out.vectors.iter_mut().zip(assign) {
        v.source_label = Some(a);
    }
    Ok(out)
}
