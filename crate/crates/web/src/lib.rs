//! WebAssembly bindings for the browser demo in `www/`.
//!
//! Two interactive pieces: a histogram of cosine similarities between random
//! bipolar hypervectors, and a 2-D playground where a canonical HDC model and
//! a network-derived HDC model are trained on the same points and their
//! decision regions drawn side by side.

use hdcnet::encoder::{EncoderConfig, ItemBank, Scheme};
use hdcnet::hv::cosine_similarity;
use hdcnet::memory::{init_associative_memory, init_item_memory, ItemDistribution, Provenance};
use hdcnet::model::{HdcModel, RetrainConfig, Similarity};
use hdcnet::nn::{train_network, Batch, DenseNetwork, TrainConfig};
use hdcnet::transplant::{derive, verify_equivalence};
use hdcnet::Hypervector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wasm_bindgen::prelude::*;

/// Cosine similarity of `pairs` independent pairs of random bipolar
/// hypervectors with `dims` entries.
#[wasm_bindgen]
pub fn cosine_samples(dims: usize, pairs: usize, seed: u32) -> Vec<f32> {
    let dims = dims.max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(u64::from(seed));
    (0..pairs)
        .map(|_| {
            let a = Hypervector::random_bipolar(dims, &mut rng);
            let b = Hypervector::random_bipolar(dims, &mut rng);
            cosine_similarity(&a, &b).expect("equal dims")
        })
        .collect()
}

/// Bumps per axis. Each point becomes `2 * BUMPS` features, one Gaussian bump
/// response per centre along x and along y.
const BUMPS: usize = 10;
const LIFTED: usize = 2 * BUMPS;

fn lift(x: f32, y: f32) -> [f32; LIFTED] {
    let width = 1.0 / BUMPS as f32;
    std::array::from_fn(|i| {
        let v = if i < BUMPS { x } else { y };
        let centre = (i % BUMPS) as f32 / (BUMPS - 1) as f32;
        (-((v - centre) / width).powi(2)).exp()
    })
}

fn make_points(shape: &str, classes: usize, n: usize, rng: &mut ChaCha8Rng) -> (Vec<f32>, Vec<u8>) {
    let mut xy = Vec::with_capacity(2 * n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let c = i % classes;
        let (x, y) = match shape {
            "rings" => {
                let r = 0.08 + 0.4 * (c as f32 + rng.random_range(0.15..0.85)) / classes as f32;
                let t = rng.random_range(0.0..std::f32::consts::TAU);
                (0.5 + r * t.cos(), 0.5 + r * t.sin())
            }
            "spiral" => {
                let s = rng.random_range(0.05f32..1.0);
                let t = s * 1.75 * std::f32::consts::TAU + c as f32 * std::f32::consts::TAU / classes as f32;
                let jitter = 0.02;
                (
                    0.5 + 0.45 * s * t.cos() + rng.random_range(-jitter..jitter),
                    0.5 + 0.45 * s * t.sin() + rng.random_range(-jitter..jitter),
                )
            }
            _ => {
                let t = c as f32 * std::f32::consts::TAU / classes as f32;
                let (r, a) = (rng.random_range(0.0f32..0.14), rng.random_range(0.0..std::f32::consts::TAU));
                (0.5 + 0.3 * t.cos() + r * a.cos(), 0.5 + 0.3 * t.sin() + r * a.sin())
            }
        };
        xy.push(x.clamp(0.0, 1.0));
        xy.push(y.clamp(0.0, 1.0));
        labels.push(c as u8);
    }
    (xy, labels)
}

#[wasm_bindgen]
pub struct Playground {
    xy: Vec<f32>,
    features: Vec<f32>,
    labels: Vec<u8>,
    classes: usize,
    hdc: Option<HdcModel>,
    net: Option<DenseNetwork>,
    derived: Option<HdcModel>,
}

#[wasm_bindgen]
impl Playground {
    /// `shape` is `blobs`, `rings` or `spiral`.
    #[wasm_bindgen(constructor)]
    pub fn new(shape: &str, classes: usize, points: usize, seed: u32) -> Playground {
        let classes = classes.clamp(2, 8);
        let mut rng = ChaCha8Rng::seed_from_u64(u64::from(seed));
        let (xy, labels) = make_points(shape, classes, points.max(classes), &mut rng);
        let features = xy.chunks(2).flat_map(|p| lift(p[0], p[1])).collect();
        Playground { xy, features, labels, classes, hdc: None, net: None, derived: None }
    }

    /// Interleaved x, y coordinates.
    pub fn points(&self) -> Vec<f32> {
        self.xy.clone()
    }

    pub fn labels(&self) -> Vec<u8> {
        self.labels.clone()
    }

    /// Trains a canonical HDC model and returns its training accuracy after
    /// one-shot training followed by one entry per retraining epoch.
    pub fn train_hdc(&mut self, dims: usize, epochs: usize, seed: u32) -> Vec<f64> {
        let dims = dims.max(1);
        let seed = u64::from(seed);
        let im = init_item_memory(LIFTED, dims, ItemDistribution::Bipolar, seed).expect("valid sizes");
        let mut model = HdcModel::new(
            ItemBank::Single(im),
            init_associative_memory(self.classes, dims).expect("valid sizes"),
            EncoderConfig::canonical(dims, Scheme::RecordBased),
            Similarity::Cosine,
            Provenance { seed: Some(seed), ..Provenance::default() },
        )
        .expect("consistent model");
        let encoded = model.encode_set(&self.features, &self.labels).expect("lifted features");
        model.train(&encoded).expect("labels in range");
        let mut curve = vec![model.evaluate(&encoded).accuracy];
        if epochs > 0 {
            let cfg = RetrainConfig { max_epochs: epochs, patience: epochs, shuffle_seed: Some(seed), ..Default::default() };
            model
                .retrain_observed(&encoded, &cfg, |m, _| curve.push(m.evaluate(&encoded).accuracy))
                .expect("labels in range");
        }
        self.hdc = Some(model);
        curve
    }

    /// Trains the network, derives its HDC model and returns the training
    /// accuracy after each epoch.
    pub fn train_network(&mut self, hidden: usize, epochs: usize, seed: u32) -> Vec<f64> {
        let mut net = DenseNetwork::init(LIFTED, hidden.max(1), self.classes, u64::from(seed)).expect("valid sizes");
        let data = Batch::new(&self.features, &self.labels);
        let cfg = TrainConfig {
            lr: 0.01,
            batch_size: 16,
            max_epochs: epochs.max(1),
            patience: epochs.max(1),
            min_delta: 0.0,
            seed: u64::from(seed),
        };
        let history = train_network(&mut net, data, data, &cfg).expect("valid training set");
        self.derived = Some(derive(&net).expect("consistent shapes"));
        self.net = Some(net);
        history.epochs.iter().map(|e| e.val_accuracy).collect()
    }

    /// Training accuracy of `which` (`hdc`, `network` or `derived`), or -1
    /// when that model has not been trained.
    pub fn accuracy(&self, which: &str) -> f64 {
        match self.predict(which, &self.features, self.labels.len()) {
            Some(p) => {
                let correct = p.iter().zip(&self.labels).filter(|(&a, &b)| a == usize::from(b)).count();
                correct as f64 / self.labels.len() as f64
            }
            None => -1.0,
        }
    }

    /// Labels over a `resolution x resolution` grid covering the unit square,
    /// row by row from the top. Empty when the model is missing.
    pub fn decision_map(&self, which: &str, resolution: usize) -> Vec<u8> {
        let grid = grid_features(resolution);
        let n = grid.len() / LIFTED;
        self.predict(which, &grid, n).map(|p| p.into_iter().map(|l| l as u8).collect()).unwrap_or_default()
    }

    /// Grid points plus training points on which the derived model and the
    /// network disagree; -1 before a network is trained.
    pub fn mismatches(&self, resolution: usize) -> i32 {
        let (Some(net), Some(derived)) = (&self.net, &self.derived) else {
            return -1;
        };
        let mut features = grid_features(resolution);
        features.extend_from_slice(&self.features);
        let n = features.len() / LIFTED;
        verify_equivalence(net, derived, &features, n).map(|r| r.mismatches as i32).unwrap_or(-1)
    }
}

impl Playground {
    fn predict(&self, which: &str, features: &[f32], n: usize) -> Option<Vec<usize>> {
        match which {
            "hdc" => self.hdc.as_ref()?.predict_features(features, n).ok(),
            "derived" => self.derived.as_ref()?.predict_features(features, n).ok(),
            "network" => self.net.as_ref()?.predict(features, n).ok(),
            _ => None,
        }
    }
}

fn grid_features(resolution: usize) -> Vec<f32> {
    let r = resolution.max(1);
    let mut out = Vec::with_capacity(r * r * LIFTED);
    for row in 0..r {
        for col in 0..r {
            let x = (col as f32 + 0.5) / r as f32;
            let y = 1.0 - (row as f32 + 0.5) / r as f32;
            out.extend_from_slice(&lift(x, y));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cosines_concentrate_with_dimension() {
        let spread = |d| cosine_samples(d, 200, 1).iter().fold(0f32, |m, c| m.max(c.abs()));
        assert!(spread(10_000) < 0.05);
        assert!(spread(16) > spread(10_000));
    }

    #[test]
    fn playground_models_learn_and_agree() {
        let mut p = Playground::new("blobs", 3, 90, 4);
        assert_eq!(p.accuracy("hdc"), -1.0);
        let curve = p.train_hdc(2_000, 5, 1);
        // one-shot entry plus at most five epochs; a clean epoch ends early
        assert!((2..=6).contains(&curve.len()));
        assert!(p.accuracy("hdc") > 0.9);
        p.train_network(64, 60, 1);
        assert!(p.accuracy("network") > 0.9);
        assert_eq!(p.accuracy("network"), p.accuracy("derived"));
        assert_eq!(p.mismatches(24), 0);
        assert_eq!(p.decision_map("derived", 24).len(), 24 * 24);
        assert!(p.decision_map("bogus", 8).is_empty());
    }

    #[test]
    fn shapes_generate_in_range() {
        for shape in ["blobs", "rings", "spiral"] {
            let p = Playground::new(shape, 4, 100, 2);
            assert!(p.points().iter().all(|v| (0.0..=1.0).contains(v)));
            assert_eq!(p.labels().len(), 100);
        }
    }
}
