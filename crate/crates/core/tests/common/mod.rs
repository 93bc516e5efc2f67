//! Reference computations shared by the oracle tests and the acceptance run.
#![allow(dead_code)]

use hdcnet::encoder::{encode_rgb, encode_rows, Activation, EncoderConfig, FeatureVector, ItemBank, Scheme};
use hdcnet::memory::ItemMemory;
use hdcnet::nn::{Batch, DenseNetwork, Gradients};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn bipolar_rows(rng: &mut ChaCha8Rng, m: usize, d: usize) -> Vec<Vec<f32>> {
    (0..m).map(|_| (0..d).map(|_| if rng.random() { 1.0 } else { -1.0 }).collect()).collect()
}

/// `sum_m f_m * I_m[d]`, accumulated in f64 one term at a time.
pub fn naive_encode(f: &[f32], rows: &[Vec<f32>]) -> Vec<f64> {
    let dims = rows[0].len();
    let mut out = vec![0.0f64; dims];
    for (m, row) in rows.iter().enumerate() {
        for d in 0..dims {
            out[d] += f64::from(f[m]) * f64::from(row[d]);
        }
    }
    out
}

pub fn raw_encode(f: &[f32], rows: &[Vec<f32>]) -> Vec<f32> {
    let im = ItemMemory::from_rows(rows.len(), rows[0].len(), rows.concat()).unwrap();
    let cfg = EncoderConfig { dims: rows[0].len(), scheme: Scheme::RecordBased, activation: Activation::Identity };
    encode_rows(f, 1, &ItemBank::Single(im), &cfg).unwrap()
}

/// Relative error, with sums near zero compared on the scale of a single term.
fn rel_err(got: f64, want: f64) -> f64 {
    (got - want).abs() / want.abs().max(1.0)
}

/// Worst error of the record-based encoder against the naive loop over
/// `cases` random instances with M <= 32, D <= 256.
pub fn encoding_error(cases: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..cases {
        let (m, d) = (rng.random_range(1..=32), rng.random_range(1..=256));
        let rows = bipolar_rows(&mut rng, m, d);
        let f: Vec<f32> = (0..m).map(|_| rng.random::<f32>()).collect();
        for (g, w) in raw_encode(&f, &rows).iter().zip(naive_encode(&f, &rows)) {
            worst = worst.max(rel_err(f64::from(*g), w));
        }
    }
    worst
}

/// Worst error of the pairwise channel mixing against 2(V_R + V_G + V_B).
pub fn mixing_error(cases: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..cases {
        let (plane, d) = (rng.random_range(1..=16), rng.random_range(1..=128));
        let rows: [Vec<Vec<f32>>; 3] = std::array::from_fn(|_| bipolar_rows(&mut rng, plane, d));
        let x: Vec<f32> = (0..3 * plane).map(|_| rng.random::<f32>()).collect();
        let ims: [ItemMemory; 3] = std::array::from_fn(|k| ItemMemory::from_rows(plane, d, rows[k].concat()).unwrap());
        let cfg = EncoderConfig { dims: d, scheme: Scheme::RecordBasedRgb, activation: Activation::Identity };
        let mixed = encode_rgb(&FeatureVector::rgb(x.clone()).unwrap(), [&ims[0], &ims[1], &ims[2]], &cfg).unwrap();
        let per: Vec<Vec<f64>> = (0..3).map(|k| naive_encode(&x[k * plane..(k + 1) * plane], &rows[k])).collect();
        for i in 0..d {
            worst = worst.max(rel_err(f64::from(mixed[i]), 2.0 * (per[0][i] + per[1][i] + per[2][i])));
        }
    }
    worst
}

fn param(net: &mut DenseNetwork<f64>, layer: usize, i: usize) -> &mut f64 {
    if layer == 0 {
        &mut net.w_in_mut()[i]
    } else {
        &mut net.w_out_mut()[i]
    }
}

/// Central-difference gradient of the mean cross-entropy, in f64.
pub fn numeric_gradients(net: &DenseNetwork<f64>, batch: Batch<'_, f64>, h: f64) -> Gradients<f64> {
    let mut probe = net.clone();
    let mut diff = |layer: usize, i: usize| {
        let orig = *param(&mut probe, layer, i);
        *param(&mut probe, layer, i) = orig + h;
        let plus = probe.loss(batch).unwrap();
        *param(&mut probe, layer, i) = orig - h;
        let minus = probe.loss(batch).unwrap();
        *param(&mut probe, layer, i) = orig;
        (plus - minus) / (2.0 * h)
    };
    let w_in = (0..net.w_in().len()).map(|i| diff(0, i)).collect();
    let w_out = (0..net.w_out().len()).map(|i| diff(1, i)).collect();
    Gradients { w_in, w_out }
}

/// Worst relative gap between analytic and numeric gradients of one random
/// network and batch.
pub fn gradient_error(inputs: usize, hidden: usize, classes: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut net = DenseNetwork::<f64>::init(inputs, hidden, classes, seed).unwrap();
    // spread the weights so tanh is exercised away from its linear part
    for w in net.w_in_mut() {
        *w *= 3.0;
    }
    let n = rng.random_range(1..=5);
    let x: Vec<f64> = (0..n * inputs).map(|_| rng.random_range(0.05..1.0)).collect();
    let y: Vec<u8> = (0..n).map(|_| rng.random_range(0..classes as u8)).collect();
    let batch = Batch::new(&x, &y);
    let (_, analytic) = net.loss_and_gradients(batch).unwrap();
    let numeric = numeric_gradients(&net, batch, 1e-6);
    analytic
        .w_in
        .iter()
        .chain(&analytic.w_out)
        .zip(numeric.w_in.iter().chain(&numeric.w_out))
        .map(|(a, b)| (a - b).abs() / a.abs().max(b.abs()).max(1e-9))
        .fold(0.0, f64::max)
}

/// Worst gradient error over 100 random networks up to 10x16x4.
pub fn random_gradient_error(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..100)
        .map(|s| {
            let (i, h, c) = (rng.random_range(1..=10), rng.random_range(1..=16), rng.random_range(2..=4));
            gradient_error(i, h, c, s)
        })
        .fold(0.0, f64::max)
}
