//! Building an HDC model out of a trained [`DenseNetwork`].
//!
//! The input-layer weights become the item memory (one item per input
//! feature) and the classifier weights become the associative memory (one
//! class hypervector per output). Encoding applies the network's tanh and
//! inference uses dot similarity, so the derived score vector is the
//! network's logit vector.

use serde::{Deserialize, Serialize};

use crate::encoder::{Activation, EncoderConfig, ItemBank, Scheme};
use crate::error::{Error, Result};
use crate::memory::{AssociativeMemory, ItemMemory, Provenance, Source};
use crate::model::{HdcModel, Similarity};
use crate::nn::DenseNetwork;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeriveOptions {
    pub activation: Activation,
    pub similarity: Similarity,
}

impl Default for DeriveOptions {
    fn default() -> Self {
        Self { activation: Activation::Tanh, similarity: Similarity::Dot }
    }
}

/// Derived model with tanh encoding and dot similarity.
pub fn derive(net: &DenseNetwork) -> Result<HdcModel> {
    derive_with(net, DeriveOptions::default())
}

/// Derived model with a different encoder activation or similarity. Only
/// the defaults keep predictions identical to the network.
pub fn derive_with(net: &DenseNetwork, opts: DeriveOptions) -> Result<HdcModel> {
    let im = ItemMemory::from_rows(net.inputs(), net.hidden(), net.w_in().to_vec())?;
    let am = AssociativeMemory::from_rows(net.classes(), net.hidden(), net.w_out().to_vec())?;
    HdcModel::new(
        ItemBank::Single(im),
        am,
        EncoderConfig { dims: net.hidden(), scheme: Scheme::RecordBased, activation: opts.activation },
        opts.similarity,
        Provenance { seed: None, source: Source::Derived, source_hash: Some(net.fingerprint()) },
    )
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EquivalenceReport {
    pub samples: usize,
    pub mismatches: usize,
    /// Indices of the first few disagreeing samples.
    pub examples: Vec<usize>,
}

impl EquivalenceReport {
    pub fn is_exact(&self) -> bool {
        self.mismatches == 0
    }

    /// Turns any disagreement into an error.
    pub fn require_exact(&self) -> Result<()> {
        if self.is_exact() {
            Ok(())
        } else {
            Err(Error::EquivalenceBreach { mismatches: self.mismatches, samples: self.samples })
        }
    }
}

const MAX_EXAMPLES: usize = 16;

/// Counts the feature rows on which the derived model and the network's
/// argmax disagree.
pub fn verify_equivalence(
    net: &DenseNetwork,
    model: &HdcModel,
    features: &[f32],
    n: usize,
) -> Result<EquivalenceReport> {
    Error::check_dims(net.inputs(), model.items.num_features())?;
    Error::check_dims(net.classes(), model.num_classes())?;
    let expected = net.predict(features, n)?;
    let derived = model.predict_features(features, n)?;
    let diffs: Vec<usize> =
        expected.iter().zip(&derived).enumerate().filter(|(_, (a, b))| a != b).map(|(i, _)| i).collect();
    Ok(EquivalenceReport {
        samples: n,
        mismatches: diffs.len(),
        examples: diffs.into_iter().take(MAX_EXAMPLES).collect(),
    })
}
