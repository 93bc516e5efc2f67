//! `hdcnet`: encode, train, retrain, train networks, derive, evaluate and
//! benchmark HDC classifiers from the command line.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use log::{info, warn};
use serde::Serialize;

use hdcnet::bench::{self, ExperimentConfig, ExperimentReport, Pipeline};
use hdcnet::container;
use hdcnet::dataset::{Dataset, DatasetName, NUM_CLASSES};
use hdcnet::encoder::{Activation, Scheme};
use hdcnet::memory::ItemDistribution;
use hdcnet::model::{HdcModel, RetrainMode, Similarity};
use hdcnet::nn::{train_network, Batch, DenseNetwork};
use hdcnet::transplant::{derive, derive_with, verify_equivalence, DeriveOptions};

#[derive(Parser)]
#[command(name = "hdcnet", version, about = "HDC classifiers and their dense-network twins")]
struct Cli {
    /// Log more (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Encode samples with a seeded random item memory and store the result.
    Encode {
        #[command(flatten)]
        opts: Opts,
        /// Number of samples to encode.
        #[arg(long, default_value_t = 1000)]
        limit: usize,
        /// Encode from the test split instead of the training split.
        #[arg(long)]
        test_split: bool,
    },
    /// One-shot training of a canonical HDC model.
    Train {
        #[command(flatten)]
        opts: Opts,
    },
    /// Retrain a saved HDC model on the training split.
    Retrain {
        #[command(flatten)]
        opts: Opts,
        #[arg(long)]
        model: PathBuf,
    },
    /// Train the dense network.
    NnTrain {
        #[command(flatten)]
        opts: Opts,
    },
    /// Derive an HDC model from a network checkpoint.
    Derive {
        #[command(flatten)]
        opts: Opts,
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Test-split accuracy of a saved HDC model or network checkpoint.
    Eval {
        #[command(flatten)]
        opts: Opts,
        #[arg(long, conflicts_with = "checkpoint", required_unless_present = "checkpoint")]
        model: Option<PathBuf>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Multi-seed experiments with a summary table.
    Bench {
        #[command(flatten)]
        opts: Opts,
    },
}

#[derive(Args, Clone, Debug, Default)]
struct Opts {
    /// TOML file with experiment settings; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// mnist or cifar10; bench accepts a comma-separated list.
    #[arg(long)]
    dataset: Option<String>,
    /// hdc_base or nn_derive; bench accepts a comma-separated list.
    #[arg(long)]
    pipeline: Option<String>,
    #[arg(long)]
    dims: Option<usize>,
    /// Comma-separated seeds. Single-run commands use the first.
    #[arg(long)]
    seeds: Option<String>,
    #[arg(long)]
    data_dir: Option<PathBuf>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    max_epochs: Option<usize>,
    #[arg(long)]
    patience: Option<usize>,
    /// Early-stopping threshold in percentage points.
    #[arg(long)]
    min_delta: Option<f64>,
    /// cosine or dot.
    #[arg(long)]
    similarity: Option<String>,
    /// Encode derived models with sign() instead of tanh.
    #[arg(long)]
    bipolarize: bool,
    /// Accepted for completeness; every kernel is deterministic.
    #[arg(long)]
    deterministic: bool,
    /// online or batch.
    #[arg(long)]
    retrain_mode: Option<String>,
    #[arg(long)]
    train_limit: Option<usize>,
    #[arg(long)]
    test_limit: Option<usize>,
    #[arg(long)]
    validation_size: Option<usize>,
}

fn list<T: std::str::FromStr<Err = hdcnet::Error>>(s: &str) -> Result<Vec<T>> {
    s.split(',').map(|p| Ok(p.trim().parse::<T>()?)).collect()
}

/// Defaults, then the config file, then flags. Returns the datasets and
/// pipelines named on the command line alongside the resolved config.
fn resolve(opts: &Opts) -> Result<(ExperimentConfig, Vec<DatasetName>, Vec<Pipeline>)> {
    let mut cfg = match &opts.config {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
        }
        None => ExperimentConfig::default(),
    };
    let datasets = match &opts.dataset {
        Some(s) => list(s)?,
        None => vec![cfg.dataset],
    };
    let pipelines = match &opts.pipeline {
        Some(s) => list(s)?,
        None => vec![cfg.pipeline],
    };
    cfg.dataset = datasets[0];
    cfg.pipeline = pipelines[0];
    if let Some(v) = opts.dims {
        cfg.dims = v;
    }
    if let Some(s) = &opts.seeds {
        cfg.seeds = s
            .split(',')
            .map(|p| p.trim().parse::<u64>().with_context(|| format!("bad seed {p:?}")))
            .collect::<Result<_>>()?;
    }
    if let Some(v) = &opts.data_dir {
        cfg.data_dir = v.clone();
    }
    if let Some(v) = &opts.out_dir {
        cfg.out_dir = Some(v.clone());
    }
    if let Some(v) = opts.lr {
        cfg.lr = v;
    }
    if let Some(v) = opts.batch_size {
        cfg.batch_size = v;
    }
    if let Some(v) = opts.max_epochs {
        cfg.max_epochs = v;
    }
    if let Some(v) = opts.patience {
        cfg.patience = v;
    }
    if let Some(v) = opts.min_delta {
        cfg.min_delta_points = v;
    }
    if let Some(s) = &opts.similarity {
        cfg.similarity = Some(s.parse::<Similarity>()?);
    }
    if opts.bipolarize {
        cfg.bipolarize = true;
    }
    if opts.deterministic {
        cfg.deterministic = true;
    }
    if let Some(s) = &opts.retrain_mode {
        cfg.retrain_mode = match s.as_str() {
            "online" => RetrainMode::Online,
            "batch" => RetrainMode::Batch,
            other => bail!("unknown retrain mode {other:?}"),
        };
    }
    if let Some(v) = opts.train_limit {
        cfg.train_limit = Some(v);
    }
    if let Some(v) = opts.test_limit {
        cfg.test_limit = Some(v);
    }
    if let Some(v) = opts.validation_size {
        cfg.validation_size = v;
    }
    if !cfg.deterministic {
        warn!("deterministic = false has no effect: all kernels use a fixed reduction order");
    }
    cfg.validate()?;
    Ok((cfg, datasets, pipelines))
}

fn out_dir(cfg: &ExperimentConfig) -> Result<PathBuf> {
    let dir = cfg.out_dir.clone().unwrap_or_else(|| PathBuf::from("runs"));
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir)
}

/// Writes `<command>-config.toml` and `<command>-report.json`.
fn write_run(dir: &Path, command: &str, cfg: &ExperimentConfig, report: &impl Serialize) -> Result<()> {
    let config_path = dir.join(format!("{command}-config.toml"));
    fs::write(&config_path, toml::to_string(cfg)?).with_context(|| format!("writing {}", config_path.display()))?;
    let report_path = dir.join(format!("{command}-report.json"));
    fs::write(&report_path, serde_json::to_string_pretty(report)?)
        .with_context(|| format!("writing {}", report_path.display()))?;
    println!("wrote {} and {}", config_path.display(), report_path.display());
    Ok(())
}

fn scheme(dataset: DatasetName) -> Scheme {
    match dataset {
        DatasetName::Mnist => Scheme::RecordBased,
        DatasetName::Cifar10 => Scheme::RecordBasedRgb,
    }
}

fn first_seed(cfg: &ExperimentConfig) -> u64 {
    cfg.seeds[0]
}

fn stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "model".into())
}

fn load(cfg: &ExperimentConfig) -> Result<(Dataset, Dataset)> {
    bench::load_data(cfg).with_context(|| format!("loading {} from {}", cfg.dataset, cfg.dataset_dir().display()))
}

#[derive(Serialize)]
struct EncodeReport {
    samples: usize,
    dims: usize,
    seed: u64,
    memories: PathBuf,
    encoded: PathBuf,
}

fn cmd_encode(opts: &Opts, limit: usize, test_split: bool) -> Result<()> {
    let (cfg, ..) = resolve(opts)?;
    let (train, test) = load(&cfg)?;
    let data = if test_split { test } else { train }.head(limit);
    let seed = first_seed(&cfg);
    let model = HdcModel::canonical(
        cfg.dataset.feature_len(),
        NUM_CLASSES,
        cfg.dims,
        scheme(cfg.dataset),
        ItemDistribution::Bipolar,
        seed,
    )?;
    let encoded = hdcnet::encoder::encode_rows(&data.features, data.len(), &model.items, &model.encoder)?;
    let dir = out_dir(&cfg)?;
    let memories = dir.join(format!("{}-seed{seed}-memories.json", cfg.dataset));
    model.save(&memories)?;
    let target = dir.join(format!("{}-seed{seed}-encoded.json", cfg.dataset));
    let labels: Vec<f32> = data.labels.iter().map(|&l| f32::from(l)).collect();
    container::write(
        &target,
        "encoded",
        serde_json::json!({ "dataset": cfg.dataset, "seed": seed, "memories": memories.file_name().map(|f| f.to_string_lossy().into_owned()) }),
        &[("hv", &[data.len(), cfg.dims], &encoded), ("labels", &[data.len()], &labels)],
    )?;
    println!("encoded {} samples into {}", data.len(), target.display());
    write_run(&dir, "encode", &cfg, &EncodeReport { samples: data.len(), dims: cfg.dims, seed, memories, encoded: target })
}

#[derive(Serialize)]
struct ModelReport {
    model: PathBuf,
    test_accuracy: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    history: Option<serde_json::Value>,
}

fn cmd_train(opts: &Opts) -> Result<()> {
    let (cfg, ..) = resolve(opts)?;
    let (train, test) = load(&cfg)?;
    let seed = first_seed(&cfg);
    let mut model = HdcModel::canonical(
        cfg.dataset.feature_len(),
        NUM_CLASSES,
        cfg.dims,
        scheme(cfg.dataset),
        ItemDistribution::Bipolar,
        seed,
    )?;
    if let Some(sim) = cfg.similarity {
        model.similarity = sim;
    }
    let encoded = model.encode_set(&train.features, &train.labels)?;
    model.train(&encoded)?;
    drop(encoded);
    let eval = model.evaluate_features(&test.features, &test.labels)?;
    let dir = out_dir(&cfg)?;
    let path = dir.join(format!("{}-hdc-seed{seed}.json", cfg.dataset));
    model.save(&path)?;
    println!("test accuracy {:.2}% ({}/{}); model saved to {}", 100.0 * eval.accuracy, eval.correct, eval.total, path.display());
    write_run(&dir, "train", &cfg, &ModelReport { model: path, test_accuracy: eval.accuracy, history: None })
}

fn cmd_retrain(opts: &Opts, model_path: &Path) -> Result<()> {
    let (cfg, ..) = resolve(opts)?;
    let mut model = HdcModel::load(model_path)?;
    let (train, test) = load(&cfg)?;
    let encoded = model.encode_set(&train.features, &train.labels)?;
    let history = model.retrain(&encoded, &cfg.retrain_config(first_seed(&cfg)))?;
    drop(encoded);
    for e in &history.epochs {
        info!("epoch {}: train accuracy {:.4}, {} updates", e.epoch, e.train_accuracy, e.updates);
    }
    let eval = model.evaluate_features(&test.features, &test.labels)?;
    let dir = out_dir(&cfg)?;
    let path = dir.join(format!("{}-retrained.json", stem(model_path)));
    model.save(&path)?;
    println!(
        "{} epochs, best epoch {:?}; test accuracy {:.2}%; model saved to {}",
        history.epochs.len(),
        history.best_epoch,
        100.0 * eval.accuracy,
        path.display()
    );
    let history = Some(serde_json::to_value(&history)?);
    write_run(&dir, "retrain", &cfg, &ModelReport { model: path, test_accuracy: eval.accuracy, history })
}

fn cmd_nn_train(opts: &Opts) -> Result<()> {
    let (cfg, ..) = resolve(opts)?;
    let (train, test) = load(&cfg)?;
    let holdout = cfg.validation_size.min(train.len() / 2);
    let (fit, val) = train.split_tail(holdout)?;
    let seed = first_seed(&cfg);
    let mut net = DenseNetwork::init(cfg.dataset.feature_len(), cfg.dims, NUM_CLASSES, seed)?;
    let tcfg = cfg.train_config(seed);
    let history = train_network(
        &mut net,
        Batch::new(&fit.features, &fit.labels),
        Batch::new(&val.features, &val.labels),
        &tcfg,
    )?;
    for e in &history.epochs {
        info!("epoch {}: loss {:.4}, validation accuracy {:.4}", e.epoch, e.train_loss, e.val_accuracy);
    }
    let acc = net.accuracy(Batch::new(&test.features, &test.labels))?;
    let dir = out_dir(&cfg)?;
    let path = dir.join(format!("{}-network-seed{seed}.json", cfg.dataset));
    net.save(&path, Some(&tcfg))?;
    println!("test accuracy {:.2}%; checkpoint saved to {}", 100.0 * acc, path.display());
    let history = Some(serde_json::to_value(&history)?);
    write_run(&dir, "nn-train", &cfg, &ModelReport { model: path, test_accuracy: acc, history })
}

#[derive(Serialize)]
struct DeriveReport {
    model: PathBuf,
    source_sha256: String,
    checked_samples: usize,
    mismatches: usize,
    test_accuracy: f64,
}

fn cmd_derive(opts: &Opts, checkpoint: &Path) -> Result<()> {
    let (cfg, ..) = resolve(opts)?;
    let (net, _) = DenseNetwork::load(checkpoint)?;
    let exact = derive(&net)?;
    let model = derive_with(
        &net,
        DeriveOptions {
            activation: if cfg.bipolarize { Activation::Bipolarize } else { Activation::Tanh },
            similarity: cfg.similarity.unwrap_or(Similarity::Dot),
        },
    )?;
    let (_, test) = load(&cfg)?;
    let report = verify_equivalence(&net, &exact, &test.features, test.len())?;
    report.require_exact()?;
    let eval = model.evaluate_features(&test.features, &test.labels)?;
    let dir = out_dir(&cfg)?;
    let path = dir.join(format!("{}-derived.json", stem(checkpoint)));
    model.save(&path)?;
    println!(
        "derived model saved to {}; {} of {} test predictions match the network; test accuracy {:.2}%",
        path.display(),
        report.samples - report.mismatches,
        report.samples,
        100.0 * eval.accuracy
    );
    write_run(
        &dir,
        "derive",
        &cfg,
        &DeriveReport {
            model: path,
            source_sha256: net.fingerprint(),
            checked_samples: report.samples,
            mismatches: report.mismatches,
            test_accuracy: eval.accuracy,
        },
    )
}

fn cmd_eval(opts: &Opts, model: Option<&Path>, checkpoint: Option<&Path>) -> Result<()> {
    let (cfg, ..) = resolve(opts)?;
    let (_, test) = load(&cfg)?;
    let (path, acc) = match (model, checkpoint) {
        (Some(p), _) => {
            let m = HdcModel::load(p)?;
            let e = m.evaluate_features(&test.features, &test.labels)?;
            (p, e.accuracy)
        }
        (None, Some(p)) => {
            let (net, _) = DenseNetwork::load(p)?;
            (p, net.accuracy(Batch::new(&test.features, &test.labels))?)
        }
        (None, None) => bail!("pass --model or --checkpoint"),
    };
    println!("{}: test accuracy {:.2}% on {} samples", path.display(), 100.0 * acc, test.len());
    let dir = out_dir(&cfg)?;
    write_run(&dir, "eval", &cfg, &ModelReport { model: path.into(), test_accuracy: acc, history: None })
}

fn cmd_bench(opts: &Opts) -> Result<()> {
    let (cfg, datasets, pipelines) = resolve(opts)?;
    let dir = out_dir(&cfg)?;
    let mut reports: Vec<ExperimentReport> = Vec::new();
    for &dataset in &datasets {
        let base = ExperimentConfig { dataset, out_dir: Some(dir.clone()), ..cfg.clone() };
        let (train, test) = load(&base)?;
        let files = hdcnet::dataset::DatasetManifest::scan(dataset, &base.dataset_dir())?;
        for &pipeline in &pipelines {
            let run_cfg = ExperimentConfig { pipeline, ..base.clone() };
            let mut report = bench::run_on(&run_cfg, &train, &test)?;
            report.data_files = Some(files.clone());
            for s in &report.seeds {
                println!("{dataset} {pipeline} seed {}: {:.2}%", s.seed, s.accuracy);
            }
            reports.push(report);
        }
    }
    let table = bench::report_table(&reports)?;
    print!("{}", table.text);
    let config_path = dir.join("config.toml");
    fs::write(&config_path, toml::to_string(&cfg)?)?;
    for p in bench::write_report(&dir, &reports)? {
        println!("wrote {}", p.display());
    }
    println!("wrote {}", config_path.display());
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match &cli.command {
        Command::Encode { opts, limit, test_split } => cmd_encode(opts, *limit, *test_split),
        Command::Train { opts } => cmd_train(opts),
        Command::Retrain { opts, model } => cmd_retrain(opts, model),
        Command::NnTrain { opts } => cmd_nn_train(opts),
        Command::Derive { opts, checkpoint } => cmd_derive(opts, checkpoint),
        Command::Eval { opts, model, checkpoint } => cmd_eval(opts, model.as_deref(), checkpoint.as_deref()),
        Command::Bench { opts } => cmd_bench(opts),
    }
}
