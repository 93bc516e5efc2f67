//! MNIST (IDX) and CIFAR-10 (binary batch) loaders.
//!
//! Pixels are scaled by 1/255 and nothing else. Both datasets keep the file
//! order. CIFAR-10 rows stay in their on-disk plane order: 1024 red, then
//! 1024 green, then 1024 blue values.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::container::sha256_hex;
use crate::encoder::{ChannelLayout, FeatureVector};
use crate::error::{Error, Result};

pub const NUM_CLASSES: usize = 10;

pub const MNIST_IMAGE_MAGIC: u32 = 0x0000_0803;
pub const MNIST_LABEL_MAGIC: u32 = 0x0000_0801;
pub const MNIST_SIDE: usize = 28;
pub const MNIST_FEATURES: usize = MNIST_SIDE * MNIST_SIDE;
pub const MNIST_TRAIN: usize = 60_000;
pub const MNIST_TEST: usize = 10_000;

pub const CIFAR_PLANE: usize = 1024;
pub const CIFAR_FEATURES: usize = 3 * CIFAR_PLANE;
pub const CIFAR_RECORD: usize = 1 + CIFAR_FEATURES;
pub const CIFAR_TRAIN: usize = 50_000;
pub const CIFAR_TEST: usize = 10_000;

const MNIST_FILES: [&str; 4] = [
    "train-images-idx3-ubyte",
    "train-labels-idx1-ubyte",
    "t10k-images-idx3-ubyte",
    "t10k-labels-idx1-ubyte",
];
const CIFAR_TRAIN_FILES: [&str; 5] =
    ["data_batch_1.bin", "data_batch_2.bin", "data_batch_3.bin", "data_batch_4.bin", "data_batch_5.bin"];
const CIFAR_TEST_FILE: &str = "test_batch.bin";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetName {
    Mnist,
    Cifar10,
}

impl DatasetName {
    pub fn as_str(self) -> &'static str {
        match self {
            DatasetName::Mnist => "mnist",
            DatasetName::Cifar10 => "cifar10",
        }
    }

    /// Subdirectory of a data root holding this dataset's files.
    pub fn default_subdir(self) -> &'static str {
        match self {
            DatasetName::Mnist => "mnist",
            DatasetName::Cifar10 => "cifar-10-batches-bin",
        }
    }

    pub fn feature_len(self) -> usize {
        match self {
            DatasetName::Mnist => MNIST_FEATURES,
            DatasetName::Cifar10 => CIFAR_FEATURES,
        }
    }

    pub fn layout(self) -> ChannelLayout {
        match self {
            DatasetName::Mnist => ChannelLayout::Single,
            DatasetName::Cifar10 => ChannelLayout::RgbPlanes,
        }
    }

    fn files(self) -> Vec<&'static str> {
        match self {
            DatasetName::Mnist => MNIST_FILES.to_vec(),
            DatasetName::Cifar10 => {
                let mut v = CIFAR_TRAIN_FILES.to_vec();
                v.push(CIFAR_TEST_FILE);
                v
            }
        }
    }

    fn counts(self) -> (usize, usize) {
        match self {
            DatasetName::Mnist => (MNIST_TRAIN, MNIST_TEST),
            DatasetName::Cifar10 => (CIFAR_TRAIN, CIFAR_TEST),
        }
    }
}

impl std::fmt::Display for DatasetName {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for DatasetName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mnist" => Ok(DatasetName::Mnist),
            "cifar10" | "cifar-10" => Ok(DatasetName::Cifar10),
            other => Err(Error::InvalidArgument(format!("unknown dataset {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
    Test,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LabeledSample {
    pub features: FeatureVector,
    pub label: usize,
    pub split: Split,
}

/// One split held as contiguous row-major features plus labels.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub name: DatasetName,
    pub split: Split,
    pub features: Vec<f32>,
    pub labels: Vec<u8>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn feature_len(&self) -> usize {
        self.name.feature_len()
    }

    pub fn row(&self, i: usize) -> &[f32] {
        let w = self.feature_len();
        &self.features[i * w..(i + 1) * w]
    }

    pub fn sample(&self, i: usize) -> LabeledSample {
        LabeledSample {
            features: FeatureVector::new(self.row(i).to_vec(), self.name.layout())
                .expect("loader output is in range"),
            label: usize::from(self.labels[i]),
            split: self.split,
        }
    }

    /// The first `n` samples (all of them when `n` exceeds the length).
    pub fn head(&self, n: usize) -> Dataset {
        let n = n.min(self.len());
        Dataset {
            name: self.name,
            split: self.split,
            features: self.features[..n * self.feature_len()].to_vec(),
            labels: self.labels[..n].to_vec(),
        }
    }

    /// Moves the last `n` samples into a validation split.
    pub fn split_tail(mut self, n: usize) -> Result<(Dataset, Dataset)> {
        if n > self.len() {
            return Err(Error::InvalidArgument(format!(
                "cannot hold out {n} of {} samples",
                self.len()
            )));
        }
        let keep = self.len() - n;
        let features = self.features.split_off(keep * self.feature_len());
        let labels = self.labels.split_off(keep);
        let val = Dataset { name: self.name, split: Split::Validation, features, labels };
        Ok((self, val))
    }
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn be_u32(bytes: &[u8], at: usize) -> u32 {
    u32::from_be_bytes([bytes[at], bytes[at + 1], bytes[at + 2], bytes[at + 3]])
}

fn scale(bytes: &[u8]) -> Vec<f32> {
    bytes.iter().map(|&b| f32::from(b) / 255.0).collect()
}

fn idx_header(path: &Path, bytes: &[u8], magic: u32, ndims: usize) -> Result<Vec<usize>> {
    let header = 4 * (1 + ndims);
    if bytes.len() < 4 {
        return Err(Error::Truncated { path: path.into(), expected: header as u64, found: bytes.len() as u64 });
    }
    let found = be_u32(bytes, 0);
    if found != magic {
        return Err(Error::BadMagic { path: path.into(), expected: magic, found });
    }
    if bytes.len() < header {
        return Err(Error::Truncated { path: path.into(), expected: header as u64, found: bytes.len() as u64 });
    }
    Ok((0..ndims).map(|d| be_u32(bytes, 4 + 4 * d) as usize).collect())
}

fn idx_payload<'a>(path: &Path, bytes: &'a [u8], header: usize, count: usize) -> Result<&'a [u8]> {
    let expected = header + count;
    if bytes.len() < expected {
        return Err(Error::Truncated { path: path.into(), expected: expected as u64, found: bytes.len() as u64 });
    }
    if bytes.len() > expected {
        return Err(Error::Format {
            path: path.into(),
            reason: format!("{} trailing bytes after the payload", bytes.len() - expected),
        });
    }
    Ok(&bytes[header..])
}

/// Parses an IDX image file into scaled pixels.
pub fn parse_idx_images(path: &Path, bytes: &[u8], expected: usize) -> Result<Vec<f32>> {
    let dims = idx_header(path, bytes, MNIST_IMAGE_MAGIC, 3)?;
    if dims[1] != MNIST_SIDE || dims[2] != MNIST_SIDE {
        return Err(Error::Format {
            path: path.into(),
            reason: format!("images are {}x{}, expected 28x28", dims[1], dims[2]),
        });
    }
    if dims[0] != expected {
        return Err(Error::CountMismatch { path: path.into(), expected, found: dims[0] });
    }
    Ok(scale(idx_payload(path, bytes, 16, expected * MNIST_FEATURES)?))
}

/// Parses an IDX label file.
pub fn parse_idx_labels(path: &Path, bytes: &[u8], expected: usize) -> Result<Vec<u8>> {
    let dims = idx_header(path, bytes, MNIST_LABEL_MAGIC, 1)?;
    if dims[0] != expected {
        return Err(Error::CountMismatch { path: path.into(), expected, found: dims[0] });
    }
    let labels = idx_payload(path, bytes, 8, expected)?;
    check_labels(path, labels)?;
    Ok(labels.to_vec())
}

fn check_labels(path: &Path, labels: &[u8]) -> Result<()> {
    match labels.iter().position(|&l| usize::from(l) >= NUM_CLASSES) {
        Some(index) => Err(Error::BadLabel { path: path.into(), index, value: labels[index] }),
        None => Ok(()),
    }
}

fn load_mnist_split(dir: &Path, images: &str, labels: &str, expected: usize, split: Split) -> Result<Dataset> {
    let ipath = dir.join(images);
    let lpath = dir.join(labels);
    let features = parse_idx_images(&ipath, &read_file(&ipath)?, expected)?;
    let labels = parse_idx_labels(&lpath, &read_file(&lpath)?, expected)?;
    Ok(Dataset { name: DatasetName::Mnist, split, features, labels })
}

/// Loads the standard MNIST IDX files from `dir` as (train, test).
pub fn load_mnist(dir: &Path) -> Result<(Dataset, Dataset)> {
    let train = load_mnist_split(dir, MNIST_FILES[0], MNIST_FILES[1], MNIST_TRAIN, Split::Train)?;
    let test = load_mnist_split(dir, MNIST_FILES[2], MNIST_FILES[3], MNIST_TEST, Split::Test)?;
    Ok((train, test))
}

/// Appends the records of one CIFAR-10 batch file.
pub fn parse_cifar_batch(path: &Path, bytes: &[u8], out: &mut Dataset) -> Result<()> {
    if bytes.len() % CIFAR_RECORD != 0 {
        return Err(Error::Misaligned { path: path.into(), len: bytes.len() as u64, record: CIFAR_RECORD });
    }
    let records = bytes.len() / CIFAR_RECORD;
    out.features.reserve(records * CIFAR_FEATURES);
    out.labels.reserve(records);
    for (index, rec) in bytes.chunks_exact(CIFAR_RECORD).enumerate() {
        if usize::from(rec[0]) >= NUM_CLASSES {
            return Err(Error::BadLabel { path: path.into(), index, value: rec[0] });
        }
        out.labels.push(rec[0]);
        out.features.extend(rec[1..].iter().map(|&b| f32::from(b) / 255.0));
    }
    Ok(())
}

fn load_cifar_split(dir: &Path, files: &[&str], expected: usize, split: Split) -> Result<Dataset> {
    let mut ds = Dataset { name: DatasetName::Cifar10, split, features: Vec::new(), labels: Vec::new() };
    for f in files {
        let path = dir.join(f);
        parse_cifar_batch(&path, &read_file(&path)?, &mut ds)?;
    }
    if ds.len() != expected {
        return Err(Error::CountMismatch { path: dir.join(files[0]), expected, found: ds.len() });
    }
    Ok(ds)
}

/// Loads the CIFAR-10 binary batches from `dir` as (train, test).
pub fn load_cifar10(dir: &Path) -> Result<(Dataset, Dataset)> {
    let train = load_cifar_split(dir, &CIFAR_TRAIN_FILES, CIFAR_TRAIN, Split::Train)?;
    let test = load_cifar_split(dir, &[CIFAR_TEST_FILE], CIFAR_TEST, Split::Test)?;
    Ok((train, test))
}

/// Loads either dataset from its own directory.
pub fn load(name: DatasetName, dir: &Path) -> Result<(Dataset, Dataset)> {
    match name {
        DatasetName::Mnist => load_mnist(dir),
        DatasetName::Cifar10 => load_cifar10(dir),
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: PathBuf,
    pub bytes: u64,
    pub sha256: String,
}

/// Files, expected sizes and content checksums of a dataset on disk.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub name: DatasetName,
    pub train_count: usize,
    pub test_count: usize,
    pub files: Vec<FileDigest>,
}

impl DatasetManifest {
    pub fn scan(name: DatasetName, dir: &Path) -> Result<Self> {
        let (train_count, test_count) = name.counts();
        let files = name
            .files()
            .into_iter()
            .map(|f| {
                let path = dir.join(f);
                let bytes = read_file(&path)?;
                Ok(FileDigest { bytes: bytes.len() as u64, sha256: sha256_hex(&bytes), path })
            })
            .collect::<Result<_>>()?;
        Ok(Self { name, train_count, test_count, files })
    }
}
