//! The HDC classifier lifecycle: one-shot bundling, similarity inference and
//! error-driven retraining.
//!
//! Training only ever touches the associative memory. The item memories are
//! fixed once the model is built, and every associative-memory update adds or
//! subtracts a whole sample hypervector with unit weight.

use std::path::Path;

use log::debug;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::encoder::{encode, encode_rows, Activation, EncoderConfig, FeatureVector, ItemBank, Scheme};
use crate::error::{Error, Result};
use crate::hv::{cosine_from_parts, Hypervector};
use crate::kernels::{argmax, axpy, dot, norm};
use crate::memory::{
    init_associative_memory, init_item_memory, load_memories, save_memories, AssociativeMemory,
    ItemDistribution, Provenance, Source, StoredMemories,
};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Similarity {
    #[default]
    Cosine,
    Dot,
}

impl std::str::FromStr for Similarity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cosine" => Ok(Similarity::Cosine),
            "dot" => Ok(Similarity::Dot),
            other => Err(Error::InvalidArgument(format!("unknown similarity {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LabeledHv {
    pub hv: Hypervector,
    pub label: usize,
}

/// A labelled collection of sample hypervectors.
pub trait LabeledHvs {
    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn label(&self, i: usize) -> usize;

    /// Sample `i` as `f32` values, decoded into `scratch` when the storage
    /// is compact.
    fn hv<'a>(&'a self, i: usize, scratch: &'a mut Vec<f32>) -> &'a [f32];
}

impl LabeledHvs for [LabeledHv] {
    fn len(&self) -> usize {
        <[LabeledHv]>::len(self)
    }

    fn label(&self, i: usize) -> usize {
        self[i].label
    }

    fn hv<'a>(&'a self, i: usize, _scratch: &'a mut Vec<f32>) -> &'a [f32] {
        self[i].hv.as_slice()
    }
}

impl LabeledHvs for Vec<LabeledHv> {
    fn len(&self) -> usize {
        self.as_slice().len()
    }

    fn label(&self, i: usize) -> usize {
        self[i].label
    }

    fn hv<'a>(&'a self, i: usize, scratch: &'a mut Vec<f32>) -> &'a [f32] {
        self.as_slice().hv(i, scratch)
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Storage {
    Dense(Vec<f32>),
    /// Bipolar samples, one byte per entry.
    Bipolar(Vec<i8>),
}

/// Encoded dataset. Bipolarized encodings are kept one byte per entry, which
/// is what lets a full 60,000 x 10,000 training set fit in memory.
#[derive(Clone, Debug, PartialEq)]
pub struct EncodedSet {
    dims: usize,
    labels: Vec<u32>,
    storage: Storage,
}

/// Rows encoded per kernel call when building an [`EncodedSet`].
const ENCODE_CHUNK: usize = 1024;

impl EncodedSet {
    /// Encodes `labels.len()` row-major feature rows.
    pub fn encode(
        features: &[f32],
        labels: &[u8],
        bank: &ItemBank,
        cfg: &EncoderConfig,
    ) -> Result<Self> {
        let n = labels.len();
        let width = bank.num_features();
        Error::check_dims(n * width, features.len())?;
        let dims = cfg.dims;
        let compact = cfg.activation == Activation::Bipolarize;
        let mut storage = if compact {
            Storage::Bipolar(Vec::with_capacity(n * dims))
        } else {
            Storage::Dense(Vec::with_capacity(n * dims))
        };
        for start in (0..n).step_by(ENCODE_CHUNK) {
            let rows = ENCODE_CHUNK.min(n - start);
            let chunk = &features[start * width..(start + rows) * width];
            let encoded = encode_rows(chunk, rows, bank, cfg)?;
            match &mut storage {
                Storage::Dense(v) => v.extend_from_slice(&encoded),
                Storage::Bipolar(v) => v.extend(encoded.iter().map(|&x| x as i8)),
            }
        }
        Ok(Self { dims, labels: labels.iter().map(|&l| u32::from(l)).collect(), storage })
    }

    pub fn from_labeled(samples: &[LabeledHv]) -> Result<Self> {
        let dims = samples.first().map_or(0, |s| s.hv.dims());
        let mut data = Vec::with_capacity(samples.len() * dims);
        let mut labels = Vec::with_capacity(samples.len());
        for (index, s) in samples.iter().enumerate() {
            Error::check_dims(dims, s.hv.dims())
                .map_err(|e| Error::Sample { index, source: Box::new(e) })?;
            data.extend_from_slice(s.hv.as_slice());
            labels.push(s.label as u32);
        }
        Ok(Self { dims, labels, storage: Storage::Dense(data) })
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn labels(&self) -> impl Iterator<Item = usize> + '_ {
        self.labels.iter().map(|&l| l as usize)
    }

    pub fn is_compact(&self) -> bool {
        matches!(self.storage, Storage::Bipolar(_))
    }

    /// First `n` samples.
    pub fn truncated(&self, n: usize) -> Self {
        let n = n.min(self.labels.len());
        let storage = match &self.storage {
            Storage::Dense(v) => Storage::Dense(v[..n * self.dims].to_vec()),
            Storage::Bipolar(v) => Storage::Bipolar(v[..n * self.dims].to_vec()),
        };
        Self { dims: self.dims, labels: self.labels[..n].to_vec(), storage }
    }
}

impl LabeledHvs for EncodedSet {
    fn len(&self) -> usize {
        self.labels.len()
    }

    fn label(&self, i: usize) -> usize {
        self.labels[i] as usize
    }

    fn hv<'a>(&'a self, i: usize, scratch: &'a mut Vec<f32>) -> &'a [f32] {
        let range = i * self.dims..(i + 1) * self.dims;
        match &self.storage {
            Storage::Dense(v) => &v[range],
            Storage::Bipolar(v) => {
                scratch.clear();
                scratch.extend(v[range].iter().map(|&x| f32::from(x)));
                scratch
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub label: usize,
    pub scores: Vec<f32>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Evaluation {
    pub correct: usize,
    pub total: usize,
    /// Fraction correct; 0.0 for an empty set (see `empty`).
    pub accuracy: f64,
    /// Set when there was nothing to evaluate.
    pub empty: bool,
}

impl Evaluation {
    pub fn error_rate(&self) -> f64 {
        if self.empty {
            0.0
        } else {
            1.0 - self.accuracy
        }
    }
}

/// How retraining applies its updates within an epoch.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RetrainMode {
    /// Every misprediction updates the memory immediately.
    #[default]
    Online,
    /// Predictions use the memory as it stood at the start of the epoch;
    /// updates are applied together at its end.
    Batch,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RetrainConfig {
    pub max_epochs: usize,
    /// Consecutive non-improving epochs tolerated before stopping.
    pub patience: usize,
    /// Improvement (as a fraction, 0.001 = 0.1 percentage points) an epoch
    /// must exceed to count.
    pub min_delta: f64,
    pub mode: RetrainMode,
    /// Per-epoch shuffle stream; `None` visits samples in dataset order.
    pub shuffle_seed: Option<u64>,
}

impl Default for RetrainConfig {
    fn default() -> Self {
        Self { max_epochs: 20, patience: 5, min_delta: 0.001, mode: RetrainMode::Online, shuffle_seed: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RetrainEpoch {
    pub epoch: usize,
    pub train_accuracy: f64,
    pub updates: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RetrainHistory {
    pub epochs: Vec<RetrainEpoch>,
    /// Epoch whose memory snapshot the model holds after retraining.
    pub best_epoch: Option<usize>,
    pub best_accuracy: f64,
}

/// Item memories, associative memory and the settings that tie them into a
/// classifier.
#[derive(Clone, Debug, PartialEq)]
pub struct HdcModel {
    pub items: ItemBank,
    pub assoc: AssociativeMemory,
    pub encoder: EncoderConfig,
    pub similarity: Similarity,
    pub provenance: Provenance,
}

#[derive(Serialize, Deserialize)]
struct ModelMeta {
    encoder: EncoderConfig,
    similarity: Similarity,
}

impl HdcModel {
    pub fn new(
        items: ItemBank,
        assoc: AssociativeMemory,
        encoder: EncoderConfig,
        similarity: Similarity,
        provenance: Provenance,
    ) -> Result<Self> {
        Error::check_dims(items.dims(), assoc.dims())?;
        Error::check_dims(encoder.dims, assoc.dims())?;
        if encoder.scheme != items.scheme() {
            return Err(Error::InvalidArgument(
                "encoder scheme does not match the item memories".into(),
            ));
        }
        Ok(Self { items, assoc, encoder, similarity, provenance })
    }

    /// Canonical model: random item memory (three for the rgb scheme, seeded
    /// `seed`, `seed + 1`, `seed + 2`), zero associative memory, bipolarized
    /// encoding and cosine similarity.
    pub fn canonical(
        num_features: usize,
        num_classes: usize,
        dims: usize,
        scheme: Scheme,
        dist: ItemDistribution,
        seed: u64,
    ) -> Result<Self> {
        let items = match scheme {
            Scheme::RecordBased => ItemBank::Single(init_item_memory(num_features, dims, dist, seed)?),
            Scheme::RecordBasedRgb => {
                if num_features % 3 != 0 {
                    return Err(Error::Layout(format!(
                        "{num_features} features cannot be split into three planes"
                    )));
                }
                let plane = num_features / 3;
                let [r, g, b] = [0, 1, 2].map(|k| init_item_memory(plane, dims, dist, seed + k));
                ItemBank::Rgb(Box::new([r?, g?, b?]))
            }
        };
        Self::new(
            items,
            init_associative_memory(num_classes, dims)?,
            EncoderConfig::canonical(dims, scheme),
            Similarity::Cosine,
            Provenance { seed: Some(seed), source: Source::Canonical, source_hash: None },
        )
    }

    pub fn dims(&self) -> usize {
        self.assoc.dims()
    }

    pub fn num_classes(&self) -> usize {
        self.assoc.num_classes()
    }

    pub fn encode(&self, x: &FeatureVector) -> Result<Hypervector> {
        encode(x, &self.items, &self.encoder)
    }

    pub fn encode_set(&self, features: &[f32], labels: &[u8]) -> Result<EncodedSet> {
        EncodedSet::encode(features, labels, &self.items, &self.encoder)
    }

    fn check_samples<S: LabeledHvs + ?Sized>(&self, samples: &S) -> Result<()> {
        let classes = self.num_classes();
        let mut scratch = Vec::new();
        for i in 0..samples.len() {
            let label = samples.label(i);
            if label >= classes {
                return Err(Error::LabelOutOfRange { label, classes });
            }
            Error::check_dims(self.dims(), samples.hv(i, &mut scratch).len())
                .map_err(|e| Error::Sample { index: i, source: Box::new(e) })?;
        }
        Ok(())
    }

    /// Adds every sample hypervector to its class hypervector. Labels are
    /// validated before the memory is touched.
    pub fn train<S: LabeledHvs + ?Sized>(&mut self, samples: &S) -> Result<()> {
        self.check_samples(samples)?;
        let mut scratch = Vec::new();
        for i in 0..samples.len() {
            let label = samples.label(i);
            let v = samples.hv(i, &mut scratch);
            axpy(1.0, v, self.assoc.row_mut(label));
        }
        Ok(())
    }

    fn class_norms(&self) -> Vec<f32> {
        (0..self.num_classes()).map(|c| norm(self.assoc.row(c))).collect()
    }

    fn score_into(&self, query: &[f32], norms: &[f32], scores: &mut [f32]) {
        let query_norm = match self.similarity {
            Similarity::Cosine => norm(query),
            Similarity::Dot => 0.0,
        };
        for (c, s) in scores.iter_mut().enumerate() {
            let d = dot(query, self.assoc.row(c));
            *s = match self.similarity {
                Similarity::Cosine => cosine_from_parts(d, query_norm, norms[c]),
                Similarity::Dot => d,
            };
        }
    }

    /// Similarity against every class and the best-scoring class (lowest
    /// index on ties).
    pub fn infer(&self, query: &Hypervector) -> Result<Prediction> {
        Error::check_dims(self.dims(), query.dims())?;
        let mut scores = vec![0.0; self.num_classes()];
        self.score_into(query.as_slice(), &self.class_norms(), &mut scores);
        Ok(Prediction { label: argmax(&scores), scores })
    }

    pub fn predict_all<S: LabeledHvs + ?Sized>(&self, samples: &S) -> Vec<usize> {
        let norms = self.class_norms();
        let mut scores = vec![0.0; self.num_classes()];
        let mut scratch = Vec::new();
        (0..samples.len())
            .map(|i| {
                self.score_into(samples.hv(i, &mut scratch), &norms, &mut scores);
                argmax(&scores)
            })
            .collect()
    }

    pub fn evaluate<S: LabeledHvs + ?Sized>(&self, samples: &S) -> Evaluation {
        let total = samples.len();
        if total == 0 {
            return Evaluation { correct: 0, total: 0, accuracy: 0.0, empty: true };
        }
        let correct = self
            .predict_all(samples)
            .into_iter()
            .enumerate()
            .filter(|&(i, p)| p == samples.label(i))
            .count();
        Evaluation { correct, total, accuracy: correct as f64 / total as f64, empty: false }
    }

    /// Encodes and classifies `n` raw feature rows a chunk at a time, so the
    /// encoded set never has to be held in memory.
    pub fn predict_features(&self, features: &[f32], n: usize) -> Result<Vec<usize>> {
        let width = self.items.num_features();
        Error::check_dims(n * width, features.len())?;
        let norms = self.class_norms();
        let mut scores = vec![0.0; self.num_classes()];
        let mut out = Vec::with_capacity(n);
        for start in (0..n).step_by(ENCODE_CHUNK) {
            let rows = ENCODE_CHUNK.min(n - start);
            let chunk = &features[start * width..(start + rows) * width];
            let encoded = encode_rows(chunk, rows, &self.items, &self.encoder)?;
            for q in encoded.chunks_exact(self.dims()) {
                self.score_into(q, &norms, &mut scores);
                out.push(argmax(&scores));
            }
        }
        Ok(out)
    }

    pub fn evaluate_features(&self, features: &[f32], labels: &[u8]) -> Result<Evaluation> {
        let total = labels.len();
        if total == 0 {
            return Ok(Evaluation { correct: 0, total: 0, accuracy: 0.0, empty: true });
        }
        let correct = self
            .predict_features(features, total)?
            .into_iter()
            .zip(labels)
            .filter(|&(p, &y)| p == usize::from(y))
            .count();
        Ok(Evaluation { correct, total, accuracy: correct as f64 / total as f64, empty: false })
    }

    /// One pass over `samples` in the given visiting order. Each
    /// misprediction moves the sample hypervector out of the wrongly chosen
    /// class and into the correct one. Returns the fraction predicted
    /// correctly at visit time.
    pub fn retrain_epoch<S: LabeledHvs + ?Sized>(
        &mut self,
        samples: &S,
        order: &[usize],
        mode: RetrainMode,
    ) -> Result<(f64, usize)> {
        self.check_samples(samples)?;
        if let Some(&bad) = order.iter().find(|&&i| i >= samples.len()) {
            return Err(Error::InvalidArgument(format!("visit index {bad} out of range")));
        }
        let mut norms = self.class_norms();
        let mut scores = vec![0.0; self.num_classes()];
        let mut scratch = Vec::new();
        let mut pending = match mode {
            RetrainMode::Online => None,
            RetrainMode::Batch => Some(self.assoc.clone()),
        };
        let mut correct = 0;
        let mut updates = 0;
        for &i in order {
            let label = samples.label(i);
            let v = samples.hv(i, &mut scratch);
            self.score_into(v, &norms, &mut scores);
            let predicted = argmax(&scores);
            if predicted == label {
                correct += 1;
                continue;
            }
            updates += 1;
            match pending.as_mut() {
                None => {
                    axpy(-1.0, v, self.assoc.row_mut(predicted));
                    axpy(1.0, v, self.assoc.row_mut(label));
                    norms[predicted] = norm(self.assoc.row(predicted));
                    norms[label] = norm(self.assoc.row(label));
                }
                Some(next) => {
                    axpy(-1.0, v, next.row_mut(predicted));
                    axpy(1.0, v, next.row_mut(label));
                }
            }
        }
        if let Some(next) = pending {
            self.assoc = next;
        }
        let accuracy = if order.is_empty() { 0.0 } else { correct as f64 / order.len() as f64 };
        Ok((accuracy, updates))
    }

    /// Repeated retraining epochs with early stopping on training accuracy.
    /// The model ends holding the memory snapshot of its best epoch.
    pub fn retrain<S: LabeledHvs + ?Sized>(
        &mut self,
        samples: &S,
        cfg: &RetrainConfig,
    ) -> Result<RetrainHistory> {
        self.retrain_observed(samples, cfg, |_, _| {})
    }

    /// [`HdcModel::retrain`] that hands the model to `observe` after every
    /// epoch, before any snapshot is restored.
    pub fn retrain_observed<S: LabeledHvs + ?Sized>(
        &mut self,
        samples: &S,
        cfg: &RetrainConfig,
        mut observe: impl FnMut(&HdcModel, &RetrainEpoch),
    ) -> Result<RetrainHistory> {
        if cfg.max_epochs == 0 {
            return Err(Error::InvalidArgument("max_epochs must be at least 1".into()));
        }
        let mut rng = cfg.shuffle_seed.map(|s| {
            let mut rng = ChaCha8Rng::seed_from_u64(s);
            rng.set_stream(RETRAIN_STREAM);
            rng
        });
        let mut history = RetrainHistory { best_accuracy: f64::NEG_INFINITY, ..Default::default() };
        let mut best_memory = None;
        let mut stale = 0;
        for epoch in 0..cfg.max_epochs {
            let mut order: Vec<usize> = (0..samples.len()).collect();
            if let Some(rng) = rng.as_mut() {
                order.shuffle(rng);
            }
            let (acc, updates) = self.retrain_epoch(samples, &order, cfg.mode)?;
            debug!("retrain epoch {epoch}: train accuracy {acc:.5}, {updates} updates");
            let record = RetrainEpoch { epoch, train_accuracy: acc, updates };
            observe(self, &record);
            history.epochs.push(record);
            if acc > history.best_accuracy + cfg.min_delta || history.best_epoch.is_none() {
                history.best_accuracy = acc;
                history.best_epoch = Some(epoch);
                best_memory = Some(self.assoc.clone());
                stale = 0;
            } else {
                stale += 1;
            }
            if updates == 0 || stale >= cfg.patience {
                break;
            }
        }
        if let Some(best) = best_memory {
            self.assoc = best;
        }
        Ok(history)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let meta = ModelMeta { encoder: self.encoder, similarity: self.similarity };
        save_memories(
            path,
            &StoredMemories {
                items: self.items.memories().into_iter().cloned().collect(),
                assoc: self.assoc.clone(),
                provenance: self.provenance.clone(),
                extra: serde_json::to_value(meta).expect("model metadata serializes"),
            },
        )
    }

    pub fn load(path: &Path) -> Result<Self> {
        let stored = load_memories(path)?;
        let meta: ModelMeta = serde_json::from_value(stored.extra).map_err(|e| Error::Format {
            path: path.into(),
            reason: format!("model metadata: {e}"),
        })?;
        Self::new(
            ItemBank::from_memories(stored.items)?,
            stored.assoc,
            meta.encoder,
            meta.similarity,
            stored.provenance,
        )
    }
}

const RETRAIN_STREAM: u64 = 0x5245_5452;
