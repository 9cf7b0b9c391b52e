//! Command-line driver: `run`, `grid`, `importance` and `selftest`.
//!
//! Experiments are described by a flat `key = value` file; `#` starts a
//! comment. Every key is optional and falls back to the library default.
//! See the README for the full key list.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use rand::Rng;
use thiserror::Error;

use crate::aggregator::{self, AnnParams, AnnWeights, TrainingSample, N_INPUTS};
use crate::dataset::{Dataset, NoiseShape};
use crate::importance::{self, LossKind, PredictiveModel};
use crate::nbc;
use crate::oracle;
use crate::seed;
use crate::simnet::{self, EntryPolicy, SimConfig, SimError, StreamSource, SynthSettings};
use crate::stream;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("config line {line}: {msg}")]
    Config { line: usize, msg: String },
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("{0} check(s) failed")]
    ChecksFailed(usize),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            _ => EXIT_FAILURE,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "edgesel", version, about = "Feature selection and data admission for edge nodes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// One paired experiment at (sim.m, sim.w).
    Run(Common),
    /// Every (M, w) cell of grid.m_list × grid.w_list.
    Grid(Common),
    /// Sorted per-feature importance table for node 0.
    Importance(Common),
    /// Checks the estimators against brute-force references.
    Selftest(Common),
}

#[derive(Debug, Clone, Args)]
struct Common {
    /// Experiment config file.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, value_name = "DIR", default_value = "./out")]
    out: PathBuf,
    /// Overrides sim.seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Concurrent grid cells.
    #[arg(long)]
    parallel: Option<usize>,
    #[arg(long, short)]
    verbose: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Subcmd {
    Run,
    Grid,
    Importance,
    Selftest,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub subcommand: Subcmd,
    pub config: Option<PathBuf>,
    pub out: PathBuf,
    pub seed: Option<u64>,
    pub parallel: Option<usize>,
    pub verbose: bool,
}

/// Parses `argv` (program name first). Help and version requests come back
/// as an error carrying clap's rendered text with `is_help` set.
pub fn parse_args<I, T>(argv: I) -> Result<RunConfig, ParseOutcome>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = Cli::try_parse_from(argv).map_err(|e| {
        use clap::error::ErrorKind;
        let is_help = matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion);
        ParseOutcome {
            message: e.render().to_string(),
            is_help,
        }
    })?;
    let (subcommand, common) = match cli.command {
        Command::Run(c) => (Subcmd::Run, c),
        Command::Grid(c) => (Subcmd::Grid, c),
        Command::Importance(c) => (Subcmd::Importance, c),
        Command::Selftest(c) => (Subcmd::Selftest, c),
    };
    if subcommand != Subcmd::Selftest && common.config.is_none() {
        return Err(ParseOutcome {
            message: "error: --config <PATH> is required\n".into(),
            is_help: false,
        });
    }
    if common.parallel == Some(0) {
        return Err(ParseOutcome {
            message: "error: --parallel must be at least 1\n".into(),
            is_help: false,
        });
    }
    Ok(RunConfig {
        subcommand,
        config: common.config,
        out: common.out,
        seed: common.seed,
        parallel: common.parallel,
        verbose: common.verbose,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParseOutcome {
    pub message: String,
    pub is_help: bool,
}

/// Everything a config file can set.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub sim: SimConfig,
    pub m_list: Vec<usize>,
    pub w_list: Vec<f64>,
    /// Fusion weights to load instead of training.
    pub ann_weights: Option<PathBuf>,
    /// Weights checked by the selftest gradient check.
    pub selftest_weights: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            sim: SimConfig::default(),
            m_list: vec![10, 50, 100],
            w_list: vec![0.1, 0.2, 0.5],
            ann_weights: None,
            selftest_weights: None,
        }
    }
}

fn parse_list<T: std::str::FromStr>(v: &str) -> Result<Vec<T>, String> {
    v.split(',')
        .map(|s| s.trim().parse::<T>().map_err(|_| format!("bad list element {s:?}")))
        .collect()
}

fn parse_bool(v: &str) -> Result<bool, String> {
    match v {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(format!("expected a boolean, got {v:?}")),
    }
}

fn num<T: std::str::FromStr>(v: &str) -> Result<T, String> {
    v.parse::<T>().map_err(|_| format!("cannot parse {v:?}"))
}

/// Parses the key=value format. Relative paths are resolved against
/// `base_dir`.
pub fn parse_config(text: &str, base_dir: &Path) -> Result<ExperimentConfig, CliError> {
    let mut cfg = ExperimentConfig::default();
    let mut seen = BTreeMap::new();
    let mut shape: Option<String> = None;
    let mut df: f64 = 3.0;
    let mut select_mode: Option<String> = None;
    let mut select_d: Option<f64> = None;
    let mut csv_path: Option<PathBuf> = None;
    let mut source: Option<String> = None;
    let mut synth = SynthSettings::default();

    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |msg: String| CliError::Config { line: line_no, msg };
        let (key, value) = line
            .split_once('=')
            .map(|(k, v)| (k.trim(), v.trim()))
            .ok_or_else(|| err("expected key = value".into()))?;
        if seen.insert(key.to_string(), line_no).is_some() {
            return Err(err(format!("duplicate key {key}")));
        }
        let s = &mut cfg.sim;
        let path = || {
            let p = PathBuf::from(value);
            if p.is_relative() { base_dir.join(p) } else { p }
        };
        let r: Result<(), String> = (|| {
            match key {
                "sim.n_nodes" => s.n_nodes = num(value)?,
                "sim.m" => s.m = num(value)?,
                "sim.w" => s.w = num(value)?,
                "sim.arrivals" => s.arrivals = num(value)?,
                "sim.warmup" => s.warmup = num(value)?,
                "sim.seed" => s.seed = num(value)?,
                "sim.parallel" | "grid.parallel" => s.parallel = num(value)?,
                "sim.entry" => {
                    s.entry = match value {
                        "round_robin" => EntryPolicy::RoundRobin,
                        "random" => EntryPolicy::Random,
                        _ => return Err(format!("unknown entry policy {value:?}")),
                    }
                }
                "sim.source" => source = Some(value.to_string()),
                "sim.csv_path" => csv_path = Some(path()),
                "nbc.p_min" => s.p_min = num(value)?,
                "pfi.repetitions" => s.pipeline.importance.pfi_repetitions = num(value)?,
                "pfi.loss" => {
                    s.pipeline.loss = match value {
                        "log_loss" => LossKind::LogLoss,
                        "mse" => LossKind::Mse,
                        _ => return Err(format!("unknown loss {value:?}")),
                    }
                }
                "shapley.m_iters" => s.pipeline.importance.shapley_iters = num(value)?,
                "shapley.n_instances" => s.pipeline.importance.shapley_instances = num(value)?,
                "fit.max_rows" => {
                    s.pipeline.importance.fit_max_rows = if value == "all" { None } else { Some(num(value)?) }
                }
                "importance.parallel" => s.pipeline.importance.parallel = parse_bool(value)?,
                "ann.c_hidden" => s.ann.hidden_units = num(value)?,
                "ann.lr" => s.ann.learning_rate = num(value)?,
                "ann.max_epochs" => s.ann.max_epochs = num(value)?,
                "ann.target_mse" => s.ann.target_mse = num(value)?,
                "ann.n_samples" => s.ann.n_samples = num(value)?,
                "ann.seed" => s.ann.seed = num(value)?,
                "ann.trust" => {
                    let t: Vec<f64> = parse_list(value)?;
                    s.ann.trust = t
                        .try_into()
                        .map_err(|_| format!("ann.trust needs {N_INPUTS} values"))?;
                }
                "ann.weights_path" => cfg.ann_weights = Some(path()),
                "stream.window_w" => s.window_w = num(value)?,
                "stream.alpha" => s.novelty.alpha = num(value)?,
                "stream.min_fill" => s.novelty.min_fill = num(value)?,
                "stream.min_history" => s.min_history = num(value)?,
                "select.mode" => select_mode = Some(value.to_string()),
                "select.d" => select_d = Some(num(value)?),
                "synth.separation" => synth.separation = num(value)?,
                "synth.noise_std" => synth.noise_std = num(value)?,
                "synth.irrelevant_fraction" => synth.irrelevant_fraction = num(value)?,
                "synth.irrelevant_shape" => shape = Some(value.to_string()),
                "synth.df" => df = num(value)?,
                "synth.irrelevant_scale" => synth.irrelevant_scale = num(value)?,
                "synth.relevance_decay" => synth.relevance_decay = num(value)?,
                "grid.m_list" => cfg.m_list = parse_list(value)?,
                "grid.w_list" => cfg.w_list = parse_list(value)?,
                "selftest.weights_path" => cfg.selftest_weights = Some(path()),
                _ => return Err(format!("unknown key {key}")),
            }
            Ok(())
        })();
        r.map_err(err)?;
    }

    let at = |key: &str| seen.get(key).copied().unwrap_or(0);
    synth.irrelevant_shape = match shape.as_deref() {
        None => match synth.irrelevant_shape {
            NoiseShape::StudentT(_) => NoiseShape::StudentT(df),
            g => g,
        },
        Some("gaussian") => NoiseShape::Gaussian,
        Some("student_t") => NoiseShape::StudentT(df),
        Some(other) => {
            return Err(CliError::Config {
                line: at("synth.irrelevant_shape"),
                msg: format!("unknown shape {other:?}"),
            })
        }
    };
    cfg.sim.source = match source.as_deref() {
        None | Some("synthetic") => StreamSource::Synthetic(synth),
        Some("csv") => StreamSource::Csv(csv_path.ok_or(CliError::Config {
            line: at("sim.source"),
            msg: "sim.source = csv needs sim.csv_path".into(),
        })?),
        Some(other) => {
            return Err(CliError::Config {
                line: at("sim.source"),
                msg: format!("unknown source {other:?}"),
            })
        }
    };
    cfg.sim.threshold = match select_mode.as_deref() {
        None | Some("top_fraction") => None,
        Some("threshold") => Some(select_d.ok_or(CliError::Config {
            line: at("select.mode"),
            msg: "threshold selection needs select.d".into(),
        })?),
        Some(other) => {
            return Err(CliError::Config {
                line: at("select.mode"),
                msg: format!("unknown selection mode {other:?}"),
            })
        }
    };
    Ok(cfg)
}

pub fn load_config(rc: &RunConfig) -> Result<ExperimentConfig, CliError> {
    let mut cfg = match &rc.config {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", p.display())))?;
            parse_config(&text, p.parent().unwrap_or(Path::new(".")))?
        }
        None => ExperimentConfig::default(),
    };
    if let Some(s) = rc.seed {
        cfg.sim.seed = s;
    }
    if let Some(p) = rc.parallel {
        cfg.sim.parallel = p;
    }
    Ok(cfg)
}

fn fusion_weights(cfg: &ExperimentConfig) -> Result<AnnWeights, CliError> {
    match &cfg.ann_weights {
        Some(p) => {
            let text = std::fs::read_to_string(p)?;
            Ok(AnnWeights::from_text(&text).map_err(SimError::from)?)
        }
        None => Ok(simnet::train_fusion(&cfg.sim)?),
    }
}

/// Entry point used by the binary. Returns the process exit code.
pub fn main_with_args<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let rc = match parse_args(argv) {
        Ok(rc) => rc,
        Err(p) if p.is_help => {
            print!("{}", p.message);
            return EXIT_OK;
        }
        Err(p) => {
            eprint!("{}", p.message);
            return EXIT_USAGE;
        }
    };
    let level = if rc.verbose { "info" } else { "warn" };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();
    match execute(&rc) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(rc: &RunConfig) -> Result<(), CliError> {
    let cfg = load_config(rc)?;
    std::fs::create_dir_all(&rc.out)
        .map_err(|e| CliError::Usage(format!("cannot create {}: {e}", rc.out.display())))?;
    match rc.subcommand {
        Subcmd::Run => cmd_run(&cfg, &rc.out),
        Subcmd::Grid => cmd_grid(&cfg, &rc.out),
        Subcmd::Importance => cmd_importance(&cfg, &rc.out).map(|_| ()),
        Subcmd::Selftest => {
            let report = cmd_selftest(&cfg);
            print!("{}", report.render());
            std::fs::write(rc.out.join("selftest.txt"), report.render())?;
            match report.failures() {
                0 => Ok(()),
                n => Err(CliError::ChecksFailed(n)),
            }
        }
    }
}

fn write_reports(out: &Path, reports: &[simnet::MetricsReport]) -> Result<(), CliError> {
    simnet::write_csv(&out.join("grid.csv"), reports)?;
    simnet::write_json(&out.join("grid.json"), reports)?;
    let mut summary = String::new();
    for r in reports {
        summary.push_str(&r.summary_line());
        summary.push('\n');
    }
    print!("{summary}");
    std::fs::write(out.join("summary.txt"), summary)?;
    Ok(())
}

pub fn cmd_run(cfg: &ExperimentConfig, out: &Path) -> Result<(), CliError> {
    let ann = fusion_weights(cfg)?;
    let report = simnet::run_experiment_with(&cfg.sim, &ann)?;
    write_reports(out, &[report])
}

pub fn cmd_grid(cfg: &ExperimentConfig, out: &Path) -> Result<(), CliError> {
    let ann = fusion_weights(cfg)?;
    let reports = simnet::run_grid_with(&cfg.sim, &ann, &cfg.m_list, &cfg.w_list)?;
    write_reports(out, &reports)
}

/// One row of the importance table.
#[derive(Debug, Clone, PartialEq)]
pub struct ImportanceRow {
    pub index: usize,
    pub name: String,
    pub pfi: f64,
    pub shapley: f64,
    pub fit: f64,
    pub fused: f64,
    pub selected: bool,
}

/// Scores node 0's features on its warm-up corpus and writes
/// `importance.csv` sorted by fused score, best first.
pub fn cmd_importance(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<ImportanceRow>, CliError> {
    let ann = fusion_weights(cfg)?;
    let sim = &cfg.sim;
    let scenario = simnet::build_scenario(sim)?;
    let peers: Vec<(usize, &Dataset)> = scenario.shards.iter().enumerate().skip(1).collect();
    let corpus = stream::training_corpus(0, &scenario.shards[0], &peers).map_err(SimError::from)?;
    let models = stream::fit_models(0, &corpus, &ann, &sim.cell_pipeline(), sim.seed).map_err(SimError::from)?;
    let fused = aggregator::fused_scores(&models.scores, &ann).map_err(SimError::from)?;
    let names = corpus.feature_names();
    let rows: Vec<ImportanceRow> = aggregator::ranking(&fused)
        .into_iter()
        .map(|j| ImportanceRow {
            index: j,
            name: names[j].clone(),
            pfi: models.scores.pfi[j],
            shapley: models.scores.shapley[j],
            fit: models.scores.fit[j],
            fused: fused[j],
            selected: models.selected.contains(j),
        })
        .collect();
    let mut text = String::from("index,name,pfi,shapley,fit,fused,selected\n");
    for r in &rows {
        let _ = writeln!(
            text,
            "{},{},{:.9},{:.9},{:.9},{:.9},{}",
            r.index, r.name, r.pfi, r.shapley, r.fit, r.fused, r.selected
        );
    }
    std::fs::write(out.join("importance.csv"), &text)?;
    print!("{text}");
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SelftestReport {
    pub checks: Vec<CheckResult>,
    pub elapsed_s: f64,
}

impl SelftestReport {
    pub fn failures(&self) -> usize {
        self.checks.iter().filter(|c| !c.passed).count()
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        for c in &self.checks {
            let _ = writeln!(s, "[{}] {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
        }
        let _ = writeln!(
            s,
            "{} of {} checks passed in {:.2}s",
            self.checks.len() - self.failures(),
            self.checks.len(),
            self.elapsed_s
        );
        s
    }
}

struct Closure<F: Fn(&[f64]) -> f64 + Sync>(F);

impl<F: Fn(&[f64]) -> f64 + Sync> PredictiveModel for Closure<F> {
    fn predict(&self, x: &[f64]) -> f64 {
        (self.0)(x)
    }

    fn loss(&self, d: &Dataset) -> f64 {
        d.vectors().iter().map(|v| (self.0)(&v.values).powi(2)).sum::<f64>() / d.len() as f64
    }
}

fn check(name: &'static str, passed: bool, detail: String) -> CheckResult {
    CheckResult { name, passed, detail }
}

fn small_nbc(seed_value: u64, n: usize, m: usize) -> (Dataset, nbc::NbcModel) {
    let mut rng = seed::rng(seed_value);
    let rows: Vec<(Vec<f64>, usize)> = (0..n)
        .map(|i| {
            let c = i % 2;
            let x = (0..m)
                .map(|j| rng.random_range(-1.0..1.0) + if j < 2 && c == 1 { 1.5 } else { 0.0 })
                .collect();
            (x, c)
        })
        .collect();
    let mut d = Dataset::with_dim(m);
    for (x, c) in rows {
        d.push(crate::dataset::FeatureVector::labeled(x, c)).expect("finite rows");
    }
    let model = nbc::train(&d, &(0..m).collect::<Vec<_>>()).expect("two classes");
    (d, model)
}

fn check_shapley() -> CheckResult {
    let (d, model) = small_nbc(11, 32, 4);
    let bb = importance::LocalPosterior::new(&model, 0, LossKind::LogLoss).expect("class 0 exists");
    let f = |x: &[f64]| bb.predict(x);
    let background: Vec<Vec<f64>> = d.vectors().iter().map(|v| v.values.clone()).collect();
    let mut abs_err = 0.0;
    let mut exact_all = Vec::new();
    for i in 0..5 {
        for j in 0..4 {
            let exact = oracle::exact_shapley(&f, &background, &background[i], j);
            let mc = importance::shapley_instance(&bb, &d, i, j, 5000, seed::derive_seed(3, i as u64, j as u64))
                .expect("valid instance");
            abs_err += (exact - mc).abs();
            exact_all.push(exact);
        }
    }
    let mae = abs_err / exact_all.len() as f64;
    let range = exact_all.iter().cloned().fold(f64::MIN, f64::max) - exact_all.iter().cloned().fold(f64::MAX, f64::min);
    check(
        "shapley vs coalition enumeration",
        mae <= 0.02 * range,
        format!("mean abs error {mae:.3e}, bound {:.3e}", 0.02 * range),
    )
}

fn check_gradient(weights_path: Option<&Path>) -> CheckResult {
    let name = "backprop vs finite differences";
    let mut rng = seed::rng(5);
    let samples: Vec<TrainingSample> = (0..20)
        .map(|_| {
            let input = [rng.random(), rng.random(), rng.random()];
            TrainingSample { input, target: rng.random() }
        })
        .collect();
    let mut configs: Vec<AnnWeights> = Vec::new();
    if let Some(p) = weights_path {
        let loaded = std::fs::read_to_string(p)
            .map_err(|e| e.to_string())
            .and_then(|t| AnnWeights::from_text(&t).map_err(|e| e.to_string()));
        match loaded {
            Ok(w) => configs.push(w),
            Err(e) => return check(name, false, format!("weights {}: {e}", p.display())),
        }
    }
    while configs.len() < 20 {
        configs.push(AnnWeights::random(AnnParams::default().hidden_units, &mut rng));
    }
    let mut worst: f64 = 0.0;
    for w in &configs {
        let c = w.hidden_units();
        let (_, grad) = w.mse_and_gradient(&samples);
        let numeric = oracle::central_difference(
            &|p: &[f64]| AnnWeights::from_flat(c, p).map(|w| w.mse(&samples)).unwrap_or(f64::NAN),
            &w.to_flat(),
            1e-5,
        );
        let err = oracle::relative_error(&grad.to_flat(), &numeric);
        worst = if err.is_nan() { f64::INFINITY } else { worst.max(err) };
    }
    check(name, worst <= 1e-4, format!("worst relative error {worst:.3e} over {} configs", configs.len()))
}

fn check_nbc() -> CheckResult {
    let mut rng = seed::rng(9);
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let (mu0, mu1) = (rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0));
        let (v0, v1): (f64, f64) = (rng.random_range(0.2..3.0), rng.random_range(0.2..3.0));
        let p0 = rng.random_range(0.1..0.9);
        let model = nbc::NbcModel::from_parts(
            vec![0, 1],
            vec![p0, 1.0 - p0],
            vec![0],
            vec![vec![mu0], vec![mu1]],
            vec![vec![v0], vec![v1]],
        )
        .expect("valid parts");
        let x = rng.random_range(-4.0..4.0);
        let got = model.posterior(&[x]);
        let want = oracle::direct_posterior(&[p0, 1.0 - p0], &[vec![mu0], vec![mu1]], &[vec![v0], vec![v1]], &[x]);
        worst = worst.max((got[0] - want[0]).abs()).max((got[1] - want[1]).abs());
    }
    check("posterior vs density oracle", worst <= 1e-9, format!("worst deviation {worst:.3e}"))
}

fn check_fit() -> CheckResult {
    let mut rng = seed::rng(13);
    let rows: Vec<Vec<f64>> = (0..60).map(|_| (0..3).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    let d = Dataset::from_rows(rows).expect("finite rows");
    let model = Closure(|x: &[f64]| 2.0 * x[0] - x[1] + 0.5 * x[2] * x[2]);
    let worst = (0..3)
        .map(|j| importance::fit_interaction(&model, &d, j).expect("valid feature").value)
        .fold(0.0, f64::max);
    check("additive interaction is zero", worst <= 1e-9, format!("largest H² {worst:.3e}"))
}

fn check_pfi_null() -> CheckResult {
    let (d, _) = small_nbc(17, 40, 3);
    let model = nbc::train(&d, &[0, 1]).expect("two classes");
    let bb = importance::LocalPosterior::new(&model, 0, LossKind::LogLoss).expect("class 0 exists");
    let worst = (0..20)
        .map(|s| (importance::pfi(&bb, &d, 2, 1, s).expect("valid feature").ratio - 1.0).abs())
        .fold(0.0, f64::max);
    check("unused feature permutation ratio", worst <= 1e-9, format!("worst |ratio - 1| {worst:.3e}"))
}

/// Runs every reference check; failures are reported, never raised.
pub fn cmd_selftest(cfg: &ExperimentConfig) -> SelftestReport {
    let start = Instant::now();
    let checks = vec![
        check_shapley(),
        check_gradient(cfg.selftest_weights.as_deref()),
        check_nbc(),
        check_fit(),
        check_pfi_null(),
    ];
    SelftestReport {
        checks,
        elapsed_s: start.elapsed().as_secs_f64(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn argv(s: &str) -> Vec<String> {
        std::iter::once("edgesel".to_string())
            .chain(s.split_whitespace().map(String::from))
            .collect()
    }

    #[test]
    fn grid_invocation() {
        let rc = parse_args(argv("grid --config exp.cfg --out results/")).unwrap();
        assert_eq!(rc.subcommand, Subcmd::Grid);
        assert_eq!(rc.config, Some(PathBuf::from("exp.cfg")));
        assert_eq!(rc.out, PathBuf::from("results/"));
        assert_eq!(rc.seed, None);
    }

    #[test]
    fn seed_override() {
        let rc = parse_args(argv("run --config a.cfg --seed 42")).unwrap();
        assert_eq!(rc.seed, Some(42));
        assert_eq!(rc.out, PathBuf::from("./out"));
        let cfg = load_config(&RunConfig { config: None, ..rc }).unwrap();
        assert_eq!(cfg.sim.seed, 42);
    }

    #[test]
    fn usage_errors() {
        assert!(!parse_args(argv("grid --config a.cfg --bogus")).unwrap_err().is_help);
        assert!(parse_args(argv("grid")).is_err());
        assert!(parse_args(argv("frobnicate --config a.cfg")).is_err());
        assert!(parse_args(argv("")).is_err());
        assert!(parse_args(argv("selftest")).is_ok());
        assert!(parse_args(argv("--help")).unwrap_err().is_help);
    }

    #[test]
    fn config_keys() {
        let text = "
            # comment
            sim.n_nodes = 4
            sim.m = 20      # trailing
            nbc.p_min = 0.3
            pfi.repetitions = 2
            shapley.m_iters = 7
            fit.max_rows = all
            ann.c_hidden = 5
            ann.trust = 0.5, 0.3, 0.2
            stream.window_w = 25
            stream.alpha = 0.05
            grid.m_list = 10, 20
            grid.w_list = 0.5
            select.mode = threshold
            select.d = 0.6
            synth.irrelevant_shape = gaussian
            synth.relevance_decay = 0.8
            stream.min_history = 100
        ";
        let c = parse_config(text, Path::new("/tmp")).unwrap();
        assert_eq!(c.sim.n_nodes, 4);
        assert_eq!(c.sim.m, 20);
        assert_eq!(c.sim.p_min, 0.3);
        assert_eq!(c.sim.pipeline.importance.pfi_repetitions, 2);
        assert_eq!(c.sim.pipeline.importance.shapley_iters, 7);
        assert_eq!(c.sim.pipeline.importance.fit_max_rows, None);
        assert_eq!(c.sim.ann.hidden_units, 5);
        assert_eq!(c.sim.ann.trust, [0.5, 0.3, 0.2]);
        assert_eq!(c.sim.window_w, 25);
        assert_eq!(c.sim.novelty.alpha, 0.05);
        assert_eq!(c.sim.min_history, 100);
        assert_eq!(c.m_list, vec![10, 20]);
        assert_eq!(c.w_list, vec![0.5]);
        assert_eq!(c.sim.threshold, Some(0.6));
        match &c.sim.source {
            StreamSource::Synthetic(s) => {
                assert_eq!(s.irrelevant_shape, NoiseShape::Gaussian);
                assert_eq!(s.relevance_decay, 0.8);
            }
            other => panic!("unexpected source {other:?}"),
        }
    }

    #[test]
    fn config_errors_carry_line_numbers() {
        let e = parse_config("sim.m = 3\nnope = 1\n", Path::new(".")).unwrap_err();
        assert!(matches!(e, CliError::Config { line: 2, .. }), "{e}");
        assert!(parse_config("sim.m = x", Path::new(".")).is_err());
        assert!(parse_config("sim.m", Path::new(".")).is_err());
        assert!(parse_config("sim.m = 3\nsim.m = 4", Path::new(".")).is_err());
        assert!(parse_config("select.mode = threshold", Path::new(".")).is_err());
        assert!(parse_config("sim.source = csv", Path::new(".")).is_err());
    }

    #[test]
    fn relative_paths_resolve_against_config_dir() {
        let c = parse_config("sim.source = csv\nsim.csv_path = data.csv", Path::new("/x/y")).unwrap();
        assert_eq!(c.sim.source, StreamSource::Csv(PathBuf::from("/x/y/data.csv")));
    }

    #[test]
    fn exit_codes() {
        assert_eq!(CliError::Usage("x".into()).exit_code(), EXIT_USAGE);
        assert_eq!(CliError::ChecksFailed(1).exit_code(), EXIT_FAILURE);
        assert_eq!(main_with_args(argv("grid --nope")), EXIT_USAGE);
    }
}
