//! Multi-seed experiment runner and report formatting.
//!
//! Two pipelines: `hdc_base` builds a canonical HDC model (random bipolar
//! item memory, bipolarized record-based encoding, one-shot training,
//! retraining), `nn_derive` trains the dense network and evaluates the HDC
//! model derived from it.

use std::path::{Path, PathBuf};
use std::time::Instant;

use log::info;
use serde::{Deserialize, Serialize};

use crate::container::sha256_hex;
use crate::dataset::{self, Dataset, DatasetManifest, DatasetName, NUM_CLASSES};
use crate::encoder::{Activation, Scheme};
use crate::error::{Error, Result};
use crate::memory::ItemDistribution;
use crate::model::{HdcModel, RetrainConfig, RetrainHistory, RetrainMode, Similarity};
use crate::nn::{train_network, Batch, DenseNetwork, TrainConfig, TrainHistory};
use crate::transplant::{derive, derive_with, verify_equivalence, DeriveOptions, EquivalenceReport};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pipeline {
    HdcBase,
    NnDerive,
}

impl Pipeline {
    pub fn as_str(self) -> &'static str {
        match self {
            Pipeline::HdcBase => "hdc_base",
            Pipeline::NnDerive => "nn_derive",
        }
    }
}

impl std::fmt::Display for Pipeline {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Pipeline {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.replace('-', "_").as_str() {
            "hdc_base" => Ok(Pipeline::HdcBase),
            "nn_derive" => Ok(Pipeline::NnDerive),
            other => Err(Error::InvalidArgument(format!("unknown pipeline {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetName,
    pub pipeline: Pipeline,
    pub dims: usize,
    pub seeds: Vec<u64>,
    /// Either a dataset directory or a root holding `mnist/` and
    /// `cifar-10-batches-bin/`.
    pub data_dir: PathBuf,
    pub out_dir: Option<PathBuf>,
    /// Use only the first `n` training samples.
    pub train_limit: Option<usize>,
    pub test_limit: Option<usize>,
    /// Epoch cap for retraining (`hdc_base`) or network training (`nn_derive`).
    pub max_epochs: usize,
    pub patience: usize,
    /// Improvement threshold for early stopping, in percentage points.
    pub min_delta_points: f64,
    pub retrain_mode: RetrainMode,
    pub lr: f64,
    pub batch_size: usize,
    /// Training samples held out from the tail for network early stopping.
    pub validation_size: usize,
    /// Overrides the pipeline's similarity (cosine for `hdc_base`, dot for
    /// derived models).
    pub similarity: Option<Similarity>,
    /// Derived models encode with sign() instead of tanh.
    pub bipolarize: bool,
    /// Kernels are always deterministic; kept so configs state it.
    pub deterministic: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            dataset: DatasetName::Mnist,
            pipeline: Pipeline::HdcBase,
            dims: 10_000,
            seeds: vec![0, 1, 2],
            data_dir: PathBuf::from("data"),
            out_dir: None,
            train_limit: None,
            test_limit: None,
            max_epochs: 20,
            patience: 5,
            min_delta_points: 0.1,
            retrain_mode: RetrainMode::Online,
            lr: 1e-3,
            batch_size: 64,
            validation_size: 5_000,
            similarity: None,
            bipolarize: false,
            deterministic: true,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.into()));
        if self.dims == 0 {
            return bad("dims must be at least 1");
        }
        if self.seeds.is_empty() {
            return bad("at least one seed is required");
        }
        if self.max_epochs == 0 {
            return bad("max_epochs must be at least 1");
        }
        if self.batch_size == 0 || self.lr.is_nan() || self.lr <= 0.0 {
            return bad("batch_size must be at least 1 and lr positive");
        }
        if self.min_delta_points.is_nan() || self.min_delta_points < 0.0 {
            return bad("min_delta_points must be non-negative");
        }
        Ok(())
    }

    /// Directory holding this config's dataset files.
    pub fn dataset_dir(&self) -> PathBuf {
        let nested = self.data_dir.join(self.dataset.default_subdir());
        if nested.is_dir() {
            nested
        } else {
            self.data_dir.clone()
        }
    }

    pub fn retrain_config(&self, seed: u64) -> RetrainConfig {
        RetrainConfig {
            max_epochs: self.max_epochs,
            patience: self.patience,
            min_delta: self.min_delta_points / 100.0,
            mode: self.retrain_mode,
            shuffle_seed: Some(seed),
        }
    }

    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            lr: self.lr,
            batch_size: self.batch_size,
            max_epochs: self.max_epochs,
            patience: self.patience,
            min_delta: self.min_delta_points / 100.0,
            seed,
        }
    }

    fn scheme(&self) -> Scheme {
        match self.dataset {
            DatasetName::Mnist => Scheme::RecordBased,
            DatasetName::Cifar10 => Scheme::RecordBasedRgb,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseTiming {
    pub phase: String,
    pub seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Artifact {
    pub name: String,
    pub path: PathBuf,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedResult {
    pub seed: u64,
    /// Test accuracy in percent.
    pub accuracy: f64,
    /// hdc_base: test accuracy straight after one-shot training.
    pub one_shot_accuracy: Option<f64>,
    /// hdc_base: test accuracy after each retraining epoch. Never used for
    /// stopping or snapshot selection.
    pub epoch_test_accuracy: Option<Vec<f64>>,
    /// nn_derive: test accuracy of the source network.
    pub network_accuracy: Option<f64>,
    pub equivalence: Option<EquivalenceReport>,
    pub retrain: Option<RetrainHistory>,
    pub training: Option<TrainHistory>,
    pub timings: Vec<PhaseTiming>,
    pub artifacts: Vec<Artifact>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub data_files: Option<DatasetManifest>,
    pub train_samples: usize,
    pub test_samples: usize,
    pub seeds: Vec<SeedResult>,
    pub n: usize,
    /// Mean of the per-seed accuracies, percent.
    pub mean: f64,
    /// Sample standard deviation across seeds (0 when n = 1).
    pub std: f64,
}

impl ExperimentReport {
    pub fn accuracies(&self) -> Vec<f64> {
        self.seeds.iter().map(|s| s.accuracy).collect()
    }
}

/// Mean and sample standard deviation; the deviation is 0 for one value.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (0.0, 0.0);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
    (mean, (ss / (n - 1) as f64).sqrt())
}

struct Clock(Vec<PhaseTiming>);

impl Clock {
    fn time<R>(&mut self, phase: &str, f: impl FnOnce() -> R) -> R {
        let start = Instant::now();
        let r = f();
        self.0.push(PhaseTiming { phase: phase.into(), seconds: start.elapsed().as_secs_f64() });
        r
    }
}

/// Loads the configured dataset, applying the sample limits.
pub fn load_data(cfg: &ExperimentConfig) -> Result<(Dataset, Dataset)> {
    let (train, test) = dataset::load(cfg.dataset, &cfg.dataset_dir())?;
    let train = match cfg.train_limit {
        Some(n) => train.head(n),
        None => train,
    };
    let test = match cfg.test_limit {
        Some(n) => test.head(n),
        None => test,
    };
    Ok((train, test))
}

/// Loads the data and runs the configured pipeline.
pub fn run(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let (train, test) = load_data(cfg)?;
    let mut report = run_on(cfg, &train, &test)?;
    report.data_files = Some(DatasetManifest::scan(cfg.dataset, &cfg.dataset_dir())?);
    Ok(report)
}

pub fn run_hdc_base(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    run(&ExperimentConfig { pipeline: Pipeline::HdcBase, ..cfg.clone() })
}

pub fn run_nn_derive(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    run(&ExperimentConfig { pipeline: Pipeline::NnDerive, ..cfg.clone() })
}

/// Runs the configured pipeline on already loaded data.
pub fn run_on(cfg: &ExperimentConfig, train: &Dataset, test: &Dataset) -> Result<ExperimentReport> {
    cfg.validate()?;
    if let Some(dir) = &cfg.out_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut seeds = Vec::with_capacity(cfg.seeds.len());
    match cfg.pipeline {
        Pipeline::HdcBase => {
            for &seed in &cfg.seeds {
                let r = hdc_base_seed(cfg, seed, train, test)
                    .map_err(|e| Error::Seed { seed, source: Box::new(e) })?;
                info!("{} hdc_base seed {seed}: {:.2}%", cfg.dataset, r.accuracy);
                seeds.push(r);
            }
        }
        Pipeline::NnDerive => {
            let (fit, val) = train.clone().split_tail(cfg.validation_size.min(train.len() / 2))?;
            for &seed in &cfg.seeds {
                let r = nn_derive_seed(cfg, seed, &fit, &val, test)
                    .map_err(|e| Error::Seed { seed, source: Box::new(e) })?;
                info!("{} nn_derive seed {seed}: {:.2}%", cfg.dataset, r.accuracy);
                seeds.push(r);
            }
        }
    }
    let (mean, std) = mean_std(&seeds.iter().map(|s| s.accuracy).collect::<Vec<_>>());
    Ok(ExperimentReport {
        config: cfg.clone(),
        data_files: None,
        train_samples: train.len(),
        test_samples: test.len(),
        n: seeds.len(),
        seeds,
        mean,
        std,
    })
}

fn percent(correct: usize, total: usize) -> f64 {
    if total == 0 {
        0.0
    } else {
        100.0 * correct as f64 / total as f64
    }
}

fn artifact_path(cfg: &ExperimentConfig, seed: u64, what: &str) -> Option<PathBuf> {
    cfg.out_dir
        .as_ref()
        .map(|d| d.join(format!("{}-{}-seed{seed}-{what}.json", cfg.dataset, cfg.pipeline)))
}

fn artifact(name: &str, path: PathBuf) -> Result<Artifact> {
    let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
    Ok(Artifact { name: name.into(), sha256: sha256_hex(&bytes), path })
}

fn hdc_base_seed(cfg: &ExperimentConfig, seed: u64, train: &Dataset, test: &Dataset) -> Result<SeedResult> {
    let mut clock = Clock(Vec::new());
    let mut model = HdcModel::canonical(
        cfg.dataset.feature_len(),
        NUM_CLASSES,
        cfg.dims,
        cfg.scheme(),
        ItemDistribution::Bipolar,
        seed,
    )?;
    if let Some(sim) = cfg.similarity {
        model.similarity = sim;
    }
    let encoded = clock.time("encode", || model.encode_set(&train.features, &train.labels))?;
    let encoded_test = clock.time("encode_test", || model.encode_set(&test.features, &test.labels))?;
    clock.time("train", || model.train(&encoded))?;
    let one_shot = model.evaluate(&encoded_test);
    // test accuracy after each epoch, recorded for the report only
    let mut curve = Vec::new();
    let history = clock.time("retrain", || {
        model.retrain_observed(&encoded, &cfg.retrain_config(seed), |m, _| {
            let e = m.evaluate(&encoded_test);
            curve.push(percent(e.correct, e.total));
        })
    })?;
    let eval = clock.time("evaluate", || model.evaluate(&encoded_test));

    let mut artifacts = Vec::new();
    if let Some(path) = artifact_path(cfg, seed, "model") {
        model.save(&path)?;
        artifacts.push(artifact("model", path)?);
    }
    Ok(SeedResult {
        seed,
        accuracy: percent(eval.correct, eval.total),
        one_shot_accuracy: Some(percent(one_shot.correct, one_shot.total)),
        epoch_test_accuracy: Some(curve),
        network_accuracy: None,
        equivalence: None,
        retrain: Some(history),
        training: None,
        timings: clock.0,
        artifacts,
    })
}

fn nn_derive_seed(
    cfg: &ExperimentConfig,
    seed: u64,
    fit: &Dataset,
    val: &Dataset,
    test: &Dataset,
) -> Result<SeedResult> {
    let mut clock = Clock(Vec::new());
    let mut net = DenseNetwork::init(cfg.dataset.feature_len(), cfg.dims, NUM_CLASSES, seed)?;
    let tcfg = cfg.train_config(seed);
    let history = clock.time("nn_train", || {
        train_network(
            &mut net,
            Batch::new(&fit.features, &fit.labels),
            Batch::new(&val.features, &val.labels),
            &tcfg,
        )
    })?;
    let exact = clock.time("derive", || derive(&net))?;
    let equivalence = clock.time("verify", || verify_equivalence(&net, &exact, &test.features, test.len()))?;
    equivalence.require_exact()?;
    let network_accuracy = 100.0 * net.accuracy(Batch::new(&test.features, &test.labels))?;

    let ablated = cfg.bipolarize || cfg.similarity.is_some_and(|s| s != Similarity::Dot);
    let model = if ablated {
        derive_with(
            &net,
            DeriveOptions {
                activation: if cfg.bipolarize { Activation::Bipolarize } else { Activation::Tanh },
                similarity: cfg.similarity.unwrap_or(Similarity::Dot),
            },
        )?
    } else {
        exact
    };
    let eval = clock.time("evaluate", || model.evaluate_features(&test.features, &test.labels))?;

    let mut artifacts = Vec::new();
    if let Some(path) = artifact_path(cfg, seed, "network") {
        net.save(&path, Some(&tcfg))?;
        artifacts.push(artifact("network", path)?);
    }
    if let Some(path) = artifact_path(cfg, seed, "derived") {
        model.save(&path)?;
        artifacts.push(artifact("derived", path)?);
    }
    Ok(SeedResult {
        seed,
        accuracy: percent(eval.correct, eval.total),
        one_shot_accuracy: None,
        epoch_test_accuracy: None,
        network_accuracy: Some(network_accuracy),
        equivalence: Some(equivalence),
        retrain: None,
        training: Some(history),
        timings: clock.0,
        artifacts,
    })
}

/// Published LeHDC figures (mean, std in percent), quoted for comparison
/// only; that method is not run here.
pub fn lehdc_reference(dataset: DatasetName) -> (f64, f64) {
    match dataset {
        DatasetName::Mnist => (94.74, 0.18),
        DatasetName::Cifar10 => (46.10, 0.20),
    }
}

pub const REFERENCE_LABEL: &str = "reference (not reproduced)";

#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub text: String,
    pub csv: String,
}

fn pm(mean: f64, std: f64) -> String {
    format!("{mean:.2}^{{±{std:.2}}}")
}

/// One row per report: `mean^{±std}` with the seed count, plus the LeHDC
/// literature figure for the same dataset.
pub fn report_table(reports: &[ExperimentReport]) -> Result<Table> {
    if reports.is_empty() {
        return Err(Error::InvalidArgument("no reports to tabulate".into()));
    }
    let header = ["dataset", "pipeline", "accuracy (%)", "n", "LeHDC"];
    let rows: Vec<[String; 5]> = reports
        .iter()
        .map(|r| {
            let (lm, ls) = lehdc_reference(r.config.dataset);
            let n = if r.n == 1 { "1 (std undefined)".to_string() } else { r.n.to_string() };
            [
                r.config.dataset.to_string(),
                r.config.pipeline.to_string(),
                pm(r.mean, r.std),
                n,
                format!("{} {REFERENCE_LABEL}", pm(lm, ls)),
            ]
        })
        .collect();
    let mut widths = header.map(|h| h.chars().count());
    for row in &rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let line = |cells: Vec<&str>| {
        let padded: Vec<String> =
            cells.iter().zip(&widths).map(|(c, &w)| format!("{c:<w$}")).collect();
        padded.join("  ").trim_end().to_string() + "\n"
    };
    let mut text = line(header.to_vec());
    text += &line(widths.iter().map(|&w| "-".repeat(w)).collect::<Vec<_>>().iter().map(String::as_str).collect());
    for row in &rows {
        text += &line(row.iter().map(String::as_str).collect());
    }

    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| Error::InvalidArgument(format!("csv: {e}"));
    w.write_record(["dataset", "pipeline", "n", "mean", "std", "per_seed", "lehdc_mean", "lehdc_std", "lehdc_note"])
        .map_err(io)?;
    for r in reports {
        let (lm, ls) = lehdc_reference(r.config.dataset);
        let per_seed: Vec<String> = r.seeds.iter().map(|s| format!("{}:{}", s.seed, s.accuracy)).collect();
        w.write_record([
            r.config.dataset.to_string(),
            r.config.pipeline.to_string(),
            r.n.to_string(),
            r.mean.to_string(),
            r.std.to_string(),
            per_seed.join(";"),
            lm.to_string(),
            ls.to_string(),
            REFERENCE_LABEL.to_string(),
        ])
        .map_err(io)?;
    }
    let csv = String::from_utf8(w.into_inner().map_err(|e| Error::InvalidArgument(e.to_string()))?)
        .expect("csv output is utf-8");
    Ok(Table { text, csv })
}

/// Writes `report.json`, `table.txt` and `table.csv` into `dir`.
pub fn write_report(dir: &Path, reports: &[ExperimentReport]) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let table = report_table(reports)?;
    let json = serde_json::to_string_pretty(reports).expect("report serializes");
    let mut written = Vec::new();
    for (name, body) in [("report.json", json), ("table.txt", table.text), ("table.csv", table.csv)] {
        let path = dir.join(name);
        std::fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
        written.push(path);
    }
    Ok(written)
}
