//! Item and associative memories, and their on-disk form.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::container;
use crate::error::{Error, Result};
use crate::hv::{bipolar_draw, Hypervector};

/// Distribution of freshly drawn item hypervector entries.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ItemDistribution {
    #[default]
    Bipolar,
    Gaussian,
}

/// One item hypervector per feature position, stored row-major
/// (`num_items x dims`). Read as a matrix this is the input-layer weight `W`
/// of `y = W^T x`.
#[derive(Clone, Debug, PartialEq)]
pub struct ItemMemory {
    num_items: usize,
    dims: usize,
    data: Vec<f32>,
    /// Value-level count of a level-quantized memory. Record-based encoding
    /// scales position vectors by the feature value instead, so this stays
    /// `None` for every memory this crate builds.
    pub quantization_levels: Option<u32>,
}

impl ItemMemory {
    pub fn from_rows(num_items: usize, dims: usize, data: Vec<f32>) -> Result<Self> {
        if num_items == 0 || dims == 0 {
            return Err(Error::InvalidArgument("item memory sizes must be positive".into()));
        }
        Error::check_dims(num_items * dims, data.len())?;
        Ok(Self { num_items, dims, data, quantization_levels: None })
    }

    pub fn num_items(&self) -> usize {
        self.num_items
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn row(&self, m: usize) -> &[f32] {
        &self.data[m * self.dims..(m + 1) * self.dims]
    }

    pub fn item(&self, m: usize) -> Hypervector {
        Hypervector::from_vec_unchecked(self.row(m).to_vec())
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }
}

/// One hypervector per class, stored row-major (`num_classes x dims`).
#[derive(Clone, Debug, PartialEq)]
pub struct AssociativeMemory {
    num_classes: usize,
    dims: usize,
    data: Vec<f32>,
}

impl AssociativeMemory {
    pub fn from_rows(num_classes: usize, dims: usize, data: Vec<f32>) -> Result<Self> {
        if num_classes == 0 || dims == 0 {
            return Err(Error::InvalidArgument("associative memory sizes must be positive".into()));
        }
        Error::check_dims(num_classes * dims, data.len())?;
        Ok(Self { num_classes, dims, data })
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn row(&self, c: usize) -> &[f32] {
        &self.data[c * self.dims..(c + 1) * self.dims]
    }

    pub fn row_mut(&mut self, c: usize) -> &mut [f32] {
        &mut self.data[c * self.dims..(c + 1) * self.dims]
    }

    pub fn class_hv(&self, c: usize) -> Hypervector {
        Hypervector::from_vec_unchecked(self.row(c).to_vec())
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    /// Element-wise sum over all class hypervectors.
    pub fn column_sums(&self) -> Vec<f32> {
        let mut sums = vec![0.0; self.dims];
        for c in 0..self.num_classes {
            for (s, v) in sums.iter_mut().zip(self.row(c)) {
                *s += v;
            }
        }
        sums
    }
}

/// Draws a `num_items x dims` item memory from a ChaCha8 stream seeded with
/// `seed`.
pub fn init_item_memory(
    num_items: usize,
    dims: usize,
    dist: ItemDistribution,
    seed: u64,
) -> Result<ItemMemory> {
    if num_items == 0 || dims == 0 {
        return Err(Error::InvalidArgument(format!(
            "item memory needs positive sizes, got {num_items}x{dims}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let len = num_items * dims;
    let data: Vec<f32> = match dist {
        ItemDistribution::Bipolar => (0..len).map(|_| bipolar_draw(&mut rng)).collect(),
        ItemDistribution::Gaussian => (0..len).map(|_| rng.sample(StandardNormal)).collect(),
    };
    ItemMemory::from_rows(num_items, dims, data)
}

/// All-zero associative memory.
pub fn init_associative_memory(num_classes: usize, dims: usize) -> Result<AssociativeMemory> {
    if num_classes == 0 || dims == 0 {
        return Err(Error::InvalidArgument(format!(
            "associative memory needs positive sizes, got {num_classes}x{dims}"
        )));
    }
    AssociativeMemory::from_rows(num_classes, dims, vec![0.0; num_classes * dims])
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    /// Randomly drawn item memory, trained by bundling and retraining.
    #[default]
    Canonical,
    /// Memories copied out of a trained network.
    Derived,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub seed: Option<u64>,
    pub source: Source,
    /// SHA-256 of the network checkpoint a derived model was copied from.
    pub source_hash: Option<String>,
}

/// Everything a memory file holds.
#[derive(Clone, Debug, PartialEq)]
pub struct StoredMemories {
    pub items: Vec<ItemMemory>,
    pub assoc: AssociativeMemory,
    pub provenance: Provenance,
    /// Free-form model metadata (encoder settings, similarity, ...).
    pub extra: serde_json::Value,
}

#[derive(Serialize, Deserialize)]
struct MemoryMeta {
    provenance: Provenance,
    item_memories: usize,
    num_items: usize,
    num_classes: usize,
    dims: usize,
    quantization_levels: Option<u32>,
    #[serde(default)]
    extra: serde_json::Value,
}

pub const MEMORY_KIND: &str = "memories";

/// Writes one or more item memories and an associative memory to `path`.
pub fn save_memories(path: &Path, stored: &StoredMemories) -> Result<()> {
    let first = stored.items.first().ok_or_else(|| {
        Error::InvalidArgument("at least one item memory is required".into())
    })?;
    for im in &stored.items {
        Error::check_dims(first.num_items, im.num_items)?;
        Error::check_dims(stored.assoc.dims, im.dims)?;
    }
    let meta = MemoryMeta {
        provenance: stored.provenance.clone(),
        item_memories: stored.items.len(),
        num_items: first.num_items,
        num_classes: stored.assoc.num_classes,
        dims: stored.assoc.dims,
        quantization_levels: first.quantization_levels,
        extra: stored.extra.clone(),
    };
    let names: Vec<String> = (0..stored.items.len()).map(|i| format!("im{i}")).collect();
    let im_shape = [first.num_items, first.dims];
    let am_shape = [stored.assoc.num_classes, stored.assoc.dims];
    let mut arrays: Vec<(&str, &[usize], &[f32])> = stored
        .items
        .iter()
        .zip(&names)
        .map(|(im, name)| (name.as_str(), &im_shape[..], im.as_slice()))
        .collect();
    arrays.push(("am", &am_shape[..], stored.assoc.as_slice()));
    let meta = serde_json::to_value(meta).expect("metadata serializes");
    container::write(path, MEMORY_KIND, meta, &arrays)?;
    Ok(())
}

pub fn load_memories(path: &Path) -> Result<StoredMemories> {
    let (manifest, mut arrays) = container::read(path, MEMORY_KIND)?;
    let meta: MemoryMeta = serde_json::from_value(manifest.metadata).map_err(|e| Error::Format {
        path: path.into(),
        reason: e.to_string(),
    })?;
    let mut items = Vec::with_capacity(meta.item_memories);
    for i in 0..meta.item_memories {
        let a = container::take_array(path, &mut arrays, &format!("im{i}"))?;
        let mut im = ItemMemory::from_rows(meta.num_items, meta.dims, a.data)?;
        im.quantization_levels = meta.quantization_levels;
        items.push(im);
    }
    let am = container::take_array(path, &mut arrays, "am")?;
    let assoc = AssociativeMemory::from_rows(meta.num_classes, meta.dims, am.data)?;
    Ok(StoredMemories { items, assoc, provenance: meta.provenance, extra: meta.extra })
}
