//! Two-layer dense network: bias-free linear, tanh, bias-free linear,
//! softmax. Trained with softmax cross-entropy and Adam.
//!
//! The input weights are stored as `W` in `y = W^T x`, one row per input
//! feature and one column per hidden unit. That is the layout an item memory
//! uses, so [`crate::transplant::derive`] is a straight copy and the hidden
//! layer is computed with exactly the kernel call the encoder makes.

use std::path::Path;

use log::debug;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use crate::container::{self, f32_bytes, sha256_hex, take_array};
use crate::error::{Error, Result};
use crate::kernels::{argmax, dot, gemm, MatRef, Real};

pub const NETWORK_KIND: &str = "network";

#[derive(Clone, Debug, PartialEq)]
pub struct DenseNetwork<T = f32> {
    inputs: usize,
    hidden: usize,
    classes: usize,
    /// `inputs x hidden`.
    w_in: Vec<T>,
    /// `classes x hidden`.
    w_out: Vec<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Forward<T> {
    pub hidden: Vec<T>,
    pub logits: Vec<T>,
    pub probs: Vec<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Gradients<T> {
    pub w_in: Vec<T>,
    pub w_out: Vec<T>,
}

/// Borrowed labelled rows: `labels.len()` feature rows laid end to end.
#[derive(Clone, Copy, Debug)]
pub struct Batch<'a, T> {
    pub features: &'a [T],
    pub labels: &'a [u8],
}

impl<'a, T> Batch<'a, T> {
    pub fn new(features: &'a [T], labels: &'a [u8]) -> Self {
        Self { features, labels }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

impl<T: Real> DenseNetwork<T> {
    pub fn from_weights(
        inputs: usize,
        hidden: usize,
        classes: usize,
        w_in: Vec<T>,
        w_out: Vec<T>,
    ) -> Result<Self> {
        if inputs == 0 || hidden == 0 || classes == 0 {
            return Err(Error::InvalidArgument("network layers must be nonempty".into()));
        }
        Error::check_dims(inputs * hidden, w_in.len())?;
        Error::check_dims(classes * hidden, w_out.len())?;
        if let Some(index) = w_in.iter().chain(&w_out).position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(Self { inputs, hidden, classes, w_in, w_out })
    }

    /// Uniform `±1/sqrt(fan_in)` initialisation for both layers.
    pub fn init(inputs: usize, hidden: usize, classes: usize, seed: u64) -> Result<Self> {
        if inputs == 0 || hidden == 0 || classes == 0 {
            return Err(Error::InvalidArgument("network layers must be nonempty".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut draw = |fan_in: usize, count: usize| -> Vec<T> {
            let bound = 1.0 / (fan_in as f64).sqrt();
            let dist = Uniform::new(-bound, bound).expect("finite bounds");
            (0..count).map(|_| T::from_f64(dist.sample(&mut rng))).collect()
        };
        let w_in = draw(inputs, inputs * hidden);
        let w_out = draw(hidden, classes * hidden);
        Ok(Self { inputs, hidden, classes, w_in, w_out })
    }

    pub fn inputs(&self) -> usize {
        self.inputs
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn w_in(&self) -> &[T] {
        &self.w_in
    }

    pub fn w_out(&self) -> &[T] {
        &self.w_out
    }

    pub fn w_in_mut(&mut self) -> &mut [T] {
        &mut self.w_in
    }

    pub fn w_out_mut(&mut self) -> &mut [T] {
        &mut self.w_out
    }

    pub fn num_parameters(&self) -> usize {
        self.w_in.len() + self.w_out.len()
    }

    fn check_rows(&self, features: &[T], n: usize) -> Result<()> {
        Error::check_dims(n * self.inputs, features.len())
    }

    /// `tanh(X W)` for `n` rows.
    pub fn hidden_batch(&self, features: &[T], n: usize) -> Result<Vec<T>> {
        self.check_rows(features, n)?;
        let mut h = vec![T::zero(); n * self.hidden];
        if n > 0 {
            gemm(
                T::one(),
                MatRef::row_major(features, n, self.inputs),
                MatRef::row_major(&self.w_in, self.inputs, self.hidden),
                T::zero(),
                &mut h,
            );
        }
        h.iter_mut().for_each(|v| *v = v.tanh());
        Ok(h)
    }

    /// Logit `c` of each row is `dot(hidden_row, w_out[c])`, the same
    /// reduction a dot-similarity query runs.
    pub fn logits_batch(&self, hidden: &[T], n: usize) -> Vec<T> {
        let mut out = Vec::with_capacity(n * self.classes);
        for row in hidden.chunks_exact(self.hidden).take(n) {
            out.extend(self.w_out.chunks_exact(self.hidden).map(|w| dot(row, w)));
        }
        out
    }

    pub fn forward(&self, x: &[T]) -> Result<Forward<T>> {
        let hidden = self.hidden_batch(x, 1)?;
        let logits = self.logits_batch(&hidden, 1);
        let probs = softmax(&logits);
        Ok(Forward { hidden, logits, probs })
    }

    /// Argmax of the logits for every row, lowest index on ties.
    pub fn predict(&self, features: &[T], n: usize) -> Result<Vec<usize>> {
        self.check_rows(features, n)?;
        let mut out = Vec::with_capacity(n);
        for start in (0..n).step_by(PREDICT_CHUNK) {
            let rows = PREDICT_CHUNK.min(n - start);
            let chunk = &features[start * self.inputs..(start + rows) * self.inputs];
            let h = self.hidden_batch(chunk, rows)?;
            let logits = self.logits_batch(&h, rows);
            out.extend(logits.chunks_exact(self.classes).map(argmax));
        }
        Ok(out)
    }

    pub fn accuracy(&self, data: Batch<'_, T>) -> Result<f64> {
        if data.is_empty() {
            return Ok(0.0);
        }
        let predicted = self.predict(data.features, data.len())?;
        let correct =
            predicted.iter().zip(data.labels).filter(|(&p, &y)| p == usize::from(y)).count();
        Ok(correct as f64 / data.len() as f64)
    }

    /// Mean cross-entropy over the batch and its exact gradients.
    pub fn loss_and_gradients(&self, batch: Batch<'_, T>) -> Result<(T, Gradients<T>)> {
        let n = batch.len();
        if n == 0 {
            return Err(Error::InvalidArgument("gradient of an empty batch".into()));
        }
        self.check_rows(batch.features, n)?;
        if let Some(&label) = batch.labels.iter().find(|&&l| usize::from(l) >= self.classes) {
            return Err(Error::LabelOutOfRange { label: label.into(), classes: self.classes });
        }
        let (h_dim, c_dim) = (self.hidden, self.classes);
        let h = self.hidden_batch(batch.features, n)?;
        let logits = self.logits_batch(&h, n);

        // dL/dlogits = (softmax - onehot) / n
        let inv_n = T::one() / T::from_f64(n as f64);
        let mut d_logits = vec![T::zero(); n * c_dim];
        let mut loss = T::zero();
        for (i, (row, d)) in logits.chunks_exact(c_dim).zip(d_logits.chunks_exact_mut(c_dim)).enumerate() {
            let y = usize::from(batch.labels[i]);
            let lse = log_sum_exp(row);
            loss = loss + (lse - row[y]);
            for (dv, &z) in d.iter_mut().zip(row) {
                *dv = (z - lse).exp() * inv_n;
            }
            d[y] = d[y] - inv_n;
        }
        loss = loss * inv_n;

        let mut g_out = vec![T::zero(); c_dim * h_dim];
        gemm(
            T::one(),
            MatRef::row_major(&d_logits, n, c_dim).t(),
            MatRef::row_major(&h, n, h_dim),
            T::zero(),
            &mut g_out,
        );
        let mut d_pre = vec![T::zero(); n * h_dim];
        gemm(
            T::one(),
            MatRef::row_major(&d_logits, n, c_dim),
            MatRef::row_major(&self.w_out, c_dim, h_dim),
            T::zero(),
            &mut d_pre,
        );
        for (d, &a) in d_pre.iter_mut().zip(&h) {
            *d = *d * (T::one() - a * a);
        }
        let mut g_in = vec![T::zero(); self.inputs * h_dim];
        gemm(
            T::one(),
            MatRef::row_major(batch.features, n, self.inputs).t(),
            MatRef::row_major(&d_pre, n, h_dim),
            T::zero(),
            &mut g_in,
        );
        Ok((loss, Gradients { w_in: g_in, w_out: g_out }))
    }

    /// Mean cross-entropy only.
    pub fn loss(&self, batch: Batch<'_, T>) -> Result<T> {
        let n = batch.len();
        let h = self.hidden_batch(batch.features, n)?;
        let logits = self.logits_batch(&h, n);
        let total = logits
            .chunks_exact(self.classes)
            .zip(batch.labels)
            .fold(T::zero(), |acc, (row, &y)| acc + log_sum_exp(row) - row[usize::from(y)]);
        Ok(total / T::from_f64(n.max(1) as f64))
    }
}

const PREDICT_CHUNK: usize = 256;

fn log_sum_exp<T: Real>(z: &[T]) -> T {
    let max = z.iter().copied().fold(T::neg_infinity(), T::max);
    let sum = z.iter().fold(T::zero(), |acc, &v| acc + (v - max).exp());
    max + sum.ln()
}

/// Max-subtracted softmax.
pub fn softmax<T: Real>(z: &[T]) -> Vec<T> {
    let max = z.iter().copied().fold(T::neg_infinity(), T::max);
    let exps: Vec<T> = z.iter().map(|&v| (v - max).exp()).collect();
    let sum = exps.iter().fold(T::zero(), |acc, &v| acc + v);
    exps.into_iter().map(|v| v / sum).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<T = f32> {
    pub config: AdamConfig,
    pub t: u64,
    m: Gradients<T>,
    v: Gradients<T>,
}

impl<T: Real> AdamState<T> {
    pub fn new(net: &DenseNetwork<T>, config: AdamConfig) -> Self {
        let zeros = || Gradients {
            w_in: vec![T::zero(); net.w_in.len()],
            w_out: vec![T::zero(); net.w_out.len()],
        };
        Self { config, t: 0, m: zeros(), v: zeros() }
    }
}

/// One bias-corrected Adam update, `eps` added after the square root.
pub fn adam_step<T: Real>(
    net: &mut DenseNetwork<T>,
    grads: &Gradients<T>,
    state: &mut AdamState<T>,
) -> Result<()> {
    Error::check_dims(net.w_in.len(), grads.w_in.len())?;
    Error::check_dims(net.w_out.len(), grads.w_out.len())?;
    Error::check_dims(net.w_in.len(), state.m.w_in.len())?;
    Error::check_dims(net.w_out.len(), state.m.w_out.len())?;
    state.t += 1;
    let c = state.config;
    let t = state.t as i32;
    let step = T::from_f64(c.lr / (1.0 - c.beta1.powi(t)));
    let bc2_sqrt = T::from_f64((1.0 - c.beta2.powi(t)).sqrt());
    let (b1, b2, eps) = (T::from_f64(c.beta1), T::from_f64(c.beta2), T::from_f64(c.eps));
    let update = |p: &mut [T], g: &[T], m: &mut [T], v: &mut [T]| {
        for (((p, &g), m), v) in p.iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
            *m = b1 * *m + (T::one() - b1) * g;
            *v = b2 * *v + (T::one() - b2) * g * g;
            *p = *p - step * *m / (v.sqrt() / bc2_sqrt + eps);
        }
    };
    update(&mut net.w_in, &grads.w_in, &mut state.m.w_in, &mut state.v.w_in);
    update(&mut net.w_out, &grads.w_out, &mut state.m.w_out, &mut state.v.w_out);
    if let Some(index) = net.w_in.iter().chain(&net.w_out).position(|v| !v.is_finite()) {
        return Err(Error::NonFinite { index });
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    /// Validation-accuracy gain (fraction, 0.001 = 0.1 points) an epoch must
    /// exceed to count as an improvement.
    pub min_delta: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { lr: 1e-3, batch_size: 64, max_epochs: 20, patience: 5, min_delta: 0.001, seed: 0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NnEpoch {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_accuracy: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<NnEpoch>,
    pub best_epoch: Option<usize>,
    pub best_val_accuracy: f64,
}

const SHUFFLE_STREAM: u64 = 0x5348_5546;

/// Mini-batch Adam with per-epoch seeded shuffling and early stopping on
/// validation accuracy. `net` ends holding its best-validation weights.
pub fn train_network<T: Real>(
    net: &mut DenseNetwork<T>,
    train: Batch<'_, T>,
    val: Batch<'_, T>,
    cfg: &TrainConfig,
) -> Result<TrainHistory> {
    if cfg.lr.is_nan() || cfg.lr <= 0.0 || cfg.batch_size == 0 || cfg.max_epochs == 0 {
        return Err(Error::InvalidArgument(
            "training needs lr > 0, batch_size >= 1 and max_epochs >= 1".into(),
        ));
    }
    if train.is_empty() {
        return Err(Error::InvalidArgument("empty training set".into()));
    }
    net.check_rows(train.features, train.len())?;
    net.check_rows(val.features, val.len())?;

    let width = net.inputs;
    let mut adam = AdamState::new(net, AdamConfig { lr: cfg.lr, ..AdamConfig::default() });
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(SHUFFLE_STREAM);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut xb = Vec::with_capacity(cfg.batch_size * width);
    let mut yb = Vec::with_capacity(cfg.batch_size);
    let mut history = TrainHistory { best_val_accuracy: f64::NEG_INFINITY, ..Default::default() };
    let mut best = None;
    let mut stale = 0;

    for epoch in 0..cfg.max_epochs {
        order.sort_unstable();
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut batches = 0usize;
        for idx in order.chunks(cfg.batch_size) {
            xb.clear();
            yb.clear();
            for &i in idx {
                xb.extend_from_slice(&train.features[i * width..(i + 1) * width]);
                yb.push(train.labels[i]);
            }
            let (loss, grads) = net.loss_and_gradients(Batch::new(&xb, &yb))?;
            adam_step(net, &grads, &mut adam)?;
            loss_sum += loss.to_f64().unwrap_or(f64::NAN);
            batches += 1;
        }
        let val_accuracy = net.accuracy(val)?;
        let train_loss = loss_sum / batches as f64;
        debug!("epoch {epoch}: loss {train_loss:.5}, validation accuracy {val_accuracy:.5}");
        history.epochs.push(NnEpoch { epoch, train_loss, val_accuracy });
        if history.best_epoch.is_none() || val_accuracy > history.best_val_accuracy + cfg.min_delta {
            history.best_epoch = Some(epoch);
            history.best_val_accuracy = val_accuracy;
            best = Some((net.w_in.clone(), net.w_out.clone()));
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                break;
            }
        }
    }
    if let Some((w_in, w_out)) = best {
        net.w_in = w_in;
        net.w_out = w_out;
    }
    Ok(history)
}

#[derive(Serialize, Deserialize)]
struct NetworkMeta {
    inputs: usize,
    hidden: usize,
    classes: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    train_config: Option<TrainConfig>,
}

impl DenseNetwork<f32> {
    /// SHA-256 over the raw little-endian weights, input layer first.
    pub fn fingerprint(&self) -> String {
        let mut bytes = f32_bytes(&self.w_in);
        bytes.extend(f32_bytes(&self.w_out));
        sha256_hex(&bytes)
    }

    pub fn save(&self, path: &Path, train_config: Option<&TrainConfig>) -> Result<()> {
        let meta = NetworkMeta {
            inputs: self.inputs,
            hidden: self.hidden,
            classes: self.classes,
            train_config: train_config.copied(),
        };
        container::write(
            path,
            NETWORK_KIND,
            serde_json::to_value(meta).expect("network metadata serializes"),
            &[
                ("w_in", &[self.inputs, self.hidden], &self.w_in),
                ("w_out", &[self.classes, self.hidden], &self.w_out),
            ],
        )?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<(Self, Option<TrainConfig>)> {
        let (manifest, mut arrays) = container::read(path, NETWORK_KIND)?;
        let meta: NetworkMeta = serde_json::from_value(manifest.metadata).map_err(|e| {
            Error::Format { path: path.into(), reason: format!("network metadata: {e}") }
        })?;
        let w_in = take_array(path, &mut arrays, "w_in")?;
        let w_out = take_array(path, &mut arrays, "w_out")?;
        if w_in.shape != [meta.inputs, meta.hidden] || w_out.shape != [meta.classes, meta.hidden] {
            return Err(Error::Format {
                path: path.into(),
                reason: "weight shapes disagree with the recorded layer sizes".into(),
            });
        }
        let net = Self::from_weights(meta.inputs, meta.hidden, meta.classes, w_in.data, w_out.data)?;
        Ok((net, meta.train_config))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_input_gives_uniform_probs() {
        let net = DenseNetwork::<f32>::init(5, 7, 4, 1).unwrap();
        let f = net.forward(&[0.0; 5]).unwrap();
        assert!(f.hidden.iter().all(|&h| h == 0.0));
        assert!(f.probs.iter().all(|&p| (p - 0.25).abs() < 1e-7));
        assert!(net.forward(&[0.0; 4]).is_err());
    }

    #[test]
    fn softmax_is_stable_and_normalised() {
        let p = softmax(&[1e4f32, -1e4, 0.0]);
        assert!(p.iter().all(|v| v.is_finite()));
        assert!((p.iter().sum::<f32>() - 1.0).abs() < 1e-6);
        assert_eq!(argmax(&p), 0);
    }

    #[test]
    fn uniform_logits_loss_is_ln_classes() {
        let net = DenseNetwork::<f64>::from_weights(2, 3, 10, vec![0.3; 6], vec![0.0; 30]).unwrap();
        let loss = net.loss(Batch::new(&[0.5, 0.1], &[4])).unwrap();
        assert!((loss - 10f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn confident_prediction_has_vanishing_loss() {
        let net =
            DenseNetwork::<f64>::from_weights(1, 1, 2, vec![10.0], vec![100.0, -100.0]).unwrap();
        let loss = net.loss(Batch::new(&[1.0], &[0])).unwrap();
        assert!(loss < 1e-60);
    }

    #[test]
    fn loss_and_gradients_rejects_bad_batches() {
        let net = DenseNetwork::<f32>::init(2, 3, 2, 0).unwrap();
        assert!(net.loss_and_gradients(Batch::new(&[], &[])).is_err());
        assert!(net.loss_and_gradients(Batch::new(&[0.1; 3], &[0])).is_err());
        assert!(net.loss_and_gradients(Batch::new(&[0.1; 2], &[2])).is_err());
    }

    #[test]
    fn zero_gradient_is_a_fixed_point() {
        let mut net = DenseNetwork::<f32>::init(3, 4, 2, 5).unwrap();
        let before = net.clone();
        let mut state = AdamState::new(&net, AdamConfig::default());
        let zero = Gradients { w_in: vec![0.0; 12], w_out: vec![0.0; 8] };
        for _ in 0..10 {
            adam_step(&mut net, &zero, &mut state).unwrap();
        }
        assert_eq!(net, before);
        assert_eq!(state.t, 10);
        let bad = Gradients { w_in: vec![0.0; 11], w_out: vec![0.0; 8] };
        assert!(adam_step(&mut net, &bad, &mut state).is_err());
    }

    #[test]
    fn train_config_is_validated() {
        let mut net = DenseNetwork::<f32>::init(1, 2, 2, 0).unwrap();
        let data = Batch::new(&[0.5f32], &[1]);
        for cfg in [
            TrainConfig { lr: 0.0, ..Default::default() },
            TrainConfig { batch_size: 0, ..Default::default() },
            TrainConfig { max_epochs: 0, ..Default::default() },
        ] {
            assert!(train_network(&mut net, data, data, &cfg).is_err());
        }
    }

    #[test]
    fn max_epochs_one_runs_one_epoch() {
        let mut net = DenseNetwork::<f32>::init(1, 2, 2, 0).unwrap();
        let data = Batch::new(&[0.1f32, 0.9], &[0, 1]);
        let cfg = TrainConfig { max_epochs: 1, ..Default::default() };
        assert_eq!(train_network(&mut net, data, data, &cfg).unwrap().epochs.len(), 1);
    }

    #[test]
    fn checkpoint_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.json");
        let net = DenseNetwork::<f32>::init(6, 5, 3, 2).unwrap();
        let cfg = TrainConfig { seed: 2, ..Default::default() };
        net.save(&path, Some(&cfg)).unwrap();
        let (back, stored) = DenseNetwork::load(&path).unwrap();
        assert_eq!(back, net);
        assert_eq!(stored, Some(cfg));
        assert_eq!(back.fingerprint(), net.fingerprint());
    }
}
