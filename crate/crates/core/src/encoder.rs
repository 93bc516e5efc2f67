//! Record-based encoding of feature vectors into sample hypervectors.
//!
//! A sample hypervector is `sum_m f_m * I_m`: every feature position owns an
//! item hypervector which is scaled by the feature value. Stacked over a
//! batch this is the matrix product `X * IM`, and that is how it is computed.
//! Three-channel images encode each colour plane against its own item memory
//! and mix the plane encodings pairwise.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hv::{bipolarize_in_place, Hypervector};
use crate::kernels::{gemm, MatRef};
use crate::memory::ItemMemory;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelLayout {
    #[default]
    Single,
    /// Three equally sized planes, R then G then B.
    RgbPlanes,
}

/// Features scaled to `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureVector {
    values: Vec<f32>,
    layout: ChannelLayout,
}

impl FeatureVector {
    pub fn new(values: Vec<f32>, layout: ChannelLayout) -> Result<Self> {
        if let Some(i) = values.iter().position(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::Domain(format!("feature {i} = {} lies outside [0, 1]", values[i])));
        }
        if layout == ChannelLayout::RgbPlanes && values.len() % 3 != 0 {
            return Err(Error::Layout(format!(
                "{} features cannot be split into three planes",
                values.len()
            )));
        }
        Ok(Self { values, layout })
    }

    pub fn single(values: Vec<f32>) -> Result<Self> {
        Self::new(values, ChannelLayout::Single)
    }

    pub fn rgb(values: Vec<f32>) -> Result<Self> {
        Self::new(values, ChannelLayout::RgbPlanes)
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn layout(&self) -> ChannelLayout {
        self.layout
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    #[default]
    RecordBased,
    /// Per-plane record-based encoding with pairwise channel mixing.
    RecordBasedRgb,
}

/// Nonlinearity applied to the encoded hypervector.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Identity,
    /// Sign thresholding, zero to +1.
    #[default]
    Bipolarize,
    Tanh,
}

impl Activation {
    pub(crate) fn apply(self, values: &mut [f32]) {
        match self {
            Activation::Identity => {}
            Activation::Bipolarize => bipolarize_in_place(values),
            Activation::Tanh => values.iter_mut().for_each(|v| *v = v.tanh()),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub dims: usize,
    pub scheme: Scheme,
    pub activation: Activation,
}

impl EncoderConfig {
    /// Canonical HDC encoding: bipolarized output.
    pub fn canonical(dims: usize, scheme: Scheme) -> Self {
        Self { dims, scheme, activation: Activation::Bipolarize }
    }

    pub fn bipolarize_output(&self) -> bool {
        self.activation == Activation::Bipolarize
    }
}

/// The item memories an encoder draws from: one for flat features, one per
/// colour plane for the mixing scheme.
#[derive(Clone, Debug, PartialEq)]
pub enum ItemBank {
    Single(ItemMemory),
    Rgb(Box<[ItemMemory; 3]>),
}

impl ItemBank {
    pub fn memories(&self) -> Vec<&ItemMemory> {
        match self {
            ItemBank::Single(im) => vec![im],
            ItemBank::Rgb(ims) => ims.iter().collect(),
        }
    }

    pub fn dims(&self) -> usize {
        self.memories()[0].dims()
    }

    /// Length of the feature vectors this bank encodes.
    pub fn num_features(&self) -> usize {
        self.memories().iter().map(|im| im.num_items()).sum()
    }

    pub fn scheme(&self) -> Scheme {
        match self {
            ItemBank::Single(_) => Scheme::RecordBased,
            ItemBank::Rgb(_) => Scheme::RecordBasedRgb,
        }
    }

    pub fn from_memories(mut items: Vec<ItemMemory>) -> Result<Self> {
        match items.len() {
            1 => Ok(ItemBank::Single(items.pop().expect("one memory"))),
            3 => {
                let b = items.pop().expect("three memories");
                let g = items.pop().expect("three memories");
                let r = items.pop().expect("three memories");
                Error::check_dims(r.num_items(), g.num_items())?;
                Error::check_dims(r.num_items(), b.num_items())?;
                Ok(ItemBank::Rgb(Box::new([r, g, b])))
            }
            n => Err(Error::InvalidArgument(format!("expected 1 or 3 item memories, got {n}"))),
        }
    }
}

/// `X * IM` for `n` rows of `features`, reading `im.num_items()` columns per
/// row starting at `offset`, rows `stride` apart.
fn project(features: &[f32], n: usize, stride: usize, offset: usize, im: &ItemMemory) -> Vec<f32> {
    let mut out = vec![0.0; n * im.dims()];
    if n == 0 {
        return out;
    }
    let x = MatRef::strided(&features[offset..], n, im.num_items(), stride, 1);
    gemm(1.0, x, MatRef::row_major(im.as_slice(), im.num_items(), im.dims()), 0.0, &mut out);
    out
}

/// Pairwise channel mixing, evaluated term by term:
/// `(R + G) + (R + B) + (G + B)`.
fn mix_channels(r: &[f32], g: &[f32], b: &[f32]) -> Vec<f32> {
    r.iter()
        .zip(g)
        .zip(b)
        .map(|((&r, &g), &b)| {
            let rg = r + g;
            let rb = r + b;
            let gb = g + b;
            rg + rb + gb
        })
        .collect()
}

fn check_cfg(cfg: &EncoderConfig, im_dims: usize) -> Result<()> {
    if cfg.dims == 0 {
        return Err(Error::InvalidArgument("encoder dims must be positive".into()));
    }
    Error::check_dims(cfg.dims, im_dims)
}

/// Encodes a flat feature vector as `sum_m f_m * I_m`, then applies the
/// configured activation.
pub fn encode_record_based(
    x: &FeatureVector,
    im: &ItemMemory,
    cfg: &EncoderConfig,
) -> Result<Hypervector> {
    if cfg.scheme != Scheme::RecordBased {
        return Err(Error::InvalidArgument("encoder is not configured for record-based".into()));
    }
    check_cfg(cfg, im.dims())?;
    Error::check_dims(im.num_items(), x.len())?;
    let mut v = project(x.values(), 1, x.len(), 0, im);
    cfg.activation.apply(&mut v);
    Ok(Hypervector::from_vec_unchecked(v))
}

/// Encodes each colour plane against its own item memory and mixes the
/// results pairwise before applying the activation.
pub fn encode_rgb(
    x: &FeatureVector,
    ims: [&ItemMemory; 3],
    cfg: &EncoderConfig,
) -> Result<Hypervector> {
    if x.layout() != ChannelLayout::RgbPlanes {
        return Err(Error::Layout("rgb encoding needs an rgb_planes feature vector".into()));
    }
    if cfg.scheme != Scheme::RecordBasedRgb {
        return Err(Error::InvalidArgument("encoder is not configured for rgb mixing".into()));
    }
    let plane = x.len() / 3;
    for im in ims {
        check_cfg(cfg, im.dims())?;
        Error::check_dims(plane, im.num_items())?;
    }
    let [r, g, b] = [0, 1, 2].map(|p| project(x.values(), 1, x.len(), p * plane, ims[p]));
    let mut v = mix_channels(&r, &g, &b);
    cfg.activation.apply(&mut v);
    Ok(Hypervector::from_vec_unchecked(v))
}

/// Encodes one sample with whichever scheme `bank` holds.
pub fn encode(x: &FeatureVector, bank: &ItemBank, cfg: &EncoderConfig) -> Result<Hypervector> {
    match bank {
        ItemBank::Single(im) => encode_record_based(x, im, cfg),
        ItemBank::Rgb(ims) => encode_rgb(x, [&ims[0], &ims[1], &ims[2]], cfg),
    }
}

/// Order-preserving batch encoding; errors carry the offending sample index.
pub fn encode_dataset(
    xs: &[FeatureVector],
    bank: &ItemBank,
    cfg: &EncoderConfig,
) -> Result<Vec<Hypervector>> {
    xs.iter()
        .enumerate()
        .map(|(index, x)| {
            encode(x, bank, cfg).map_err(|e| Error::Sample { index, source: Box::new(e) })
        })
        .collect()
}

/// Bulk encoding of `n` row-major feature rows into `n x dims` values.
/// Row `i` is bit-identical to encoding that row alone.
pub fn encode_rows(
    features: &[f32],
    n: usize,
    bank: &ItemBank,
    cfg: &EncoderConfig,
) -> Result<Vec<f32>> {
    check_cfg(cfg, bank.dims())?;
    if cfg.scheme != bank.scheme() {
        return Err(Error::InvalidArgument(format!(
            "encoder scheme {:?} does not match the item bank ({:?})",
            cfg.scheme,
            bank.scheme()
        )));
    }
    let width = bank.num_features();
    Error::check_dims(n * width, features.len())?;
    let mut out = match bank {
        ItemBank::Single(im) => project(features, n, width, 0, im),
        ItemBank::Rgb(ims) => {
            let plane = ims[0].num_items();
            let [r, g, b] = [0, 1, 2].map(|p| project(features, n, width, p * plane, &ims[p]));
            mix_channels(&r, &g, &b)
        }
    };
    cfg.activation.apply(&mut out);
    Ok(out)
}
