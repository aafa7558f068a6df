//! Binary dataset files.
//!
//! Layout (little-endian): magic `CSID`, `u16` version 1, `u32` n_t, n_c,
//! n_p, sample count, `f64` scale_min, scale_max, `u64` master seed, then
//! `count * 2 * n_p * n_t` `f32` values in (channel, row, column) order.

use std::fs;
use std::path::{Path, PathBuf};

use log::{info, warn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Scalar, Tensor};

use super::generator::{generate_channel, ChannelConfig};
use super::transform::{truncate, ScaleBounds, Transformer, TruncatedCsi};

pub const DATASET_MAGIC: &[u8; 4] = b"CSID";
pub const DATASET_VERSION: u16 = 1;
const HEADER_LEN: usize = 4 + 2 + 4 * 4 + 8 * 3;
pub const BOUNDS_MARGIN: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DatasetHeader {
    pub n_t: u32,
    pub n_c: u32,
    pub n_p: u32,
    pub count: u32,
    pub scale_min: f64,
    pub scale_max: f64,
    pub master_seed: u64,
}

impl DatasetHeader {
    pub fn sample_len(&self) -> usize {
        2 * self.n_p as usize * self.n_t as usize
    }

    pub fn bounds(&self) -> ScaleBounds {
        ScaleBounds {
            min: self.scale_min,
            max: self.scale_max,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub header: DatasetHeader,
    pub payload: Vec<f32>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.header.count as usize
    }

    pub fn is_empty(&self) -> bool {
        self.header.count == 0
    }

    pub fn sample(&self, i: usize) -> &[f32] {
        let n = self.header.sample_len();
        &self.payload[i * n..(i + 1) * n]
    }

    pub fn truncated(&self, i: usize) -> TruncatedCsi {
        let h = &self.header;
        TruncatedCsi {
            n_p: h.n_p as usize,
            n_t: h.n_t as usize,
            values: self.sample(i).iter().map(|&v| v as f64).collect(),
            bounds: h.bounds(),
        }
    }

    /// All samples as a `count x 2 x n_p x n_t` tensor.
    pub fn to_tensor<T: Scalar>(&self) -> Result<Tensor<T>> {
        let h = &self.header;
        Tensor::new(
            &[h.count as usize, 2, h.n_p as usize, h.n_t as usize],
            self.payload.iter().map(|&v| T::lit(v as f64)).collect(),
        )
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let h = &self.header;
        let mut out = Vec::with_capacity(HEADER_LEN + 4 * self.payload.len());
        out.extend_from_slice(DATASET_MAGIC);
        out.extend_from_slice(&DATASET_VERSION.to_le_bytes());
        for v in [h.n_t, h.n_c, h.n_p, h.count] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(&h.scale_min.to_le_bytes());
        out.extend_from_slice(&h.scale_max.to_le_bytes());
        out.extend_from_slice(&h.master_seed.to_le_bytes());
        for v in &self.payload {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let corrupt = |message: String| Error::Corruption {
            path: path.to_path_buf(),
            message,
        };
        if bytes.len() < 6 || &bytes[..4] != DATASET_MAGIC {
            return Err(Error::Format {
                path: path.to_path_buf(),
                message: "missing CSID magic".into(),
            });
        }
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        if version != DATASET_VERSION {
            return Err(Error::Format {
                path: path.to_path_buf(),
                message: format!("unsupported dataset version {version}"),
            });
        }
        if bytes.len() < HEADER_LEN {
            return Err(corrupt(format!("header truncated at {} bytes", bytes.len())));
        }
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
        let u64_at = |o: usize| u64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
        let header = DatasetHeader {
            n_t: u32_at(6),
            n_c: u32_at(10),
            n_p: u32_at(14),
            count: u32_at(18),
            scale_min: f64::from_bits(u64_at(22)),
            scale_max: f64::from_bits(u64_at(30)),
            master_seed: u64_at(38),
        };
        let expected = header.count as usize * header.sample_len() * 4;
        let body = &bytes[HEADER_LEN..];
        if body.len() != expected {
            return Err(corrupt(format!(
                "payload is {} bytes, header implies {expected}",
                body.len()
            )));
        }
        let payload = body
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(Self { header, payload })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes, path)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitCounts {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }

    pub fn file_name(self) -> String {
        format!("{}.csid", self.name())
    }
}

impl SplitCounts {
    pub fn count(&self, split: Split) -> usize {
        match split {
            Split::Train => self.train,
            Split::Val => self.val,
            Split::Test => self.test,
        }
    }

    /// First sample index of a split; splits occupy consecutive, disjoint ranges.
    pub fn start(&self, split: Split) -> u64 {
        match split {
            Split::Train => 0,
            Split::Val => self.train as u64,
            Split::Test => (self.train + self.val) as u64,
        }
    }
}

/// Unscaled truncated samples of `count` consecutive indices starting at `start`.
pub fn generate_raw(config: &ChannelConfig, start: u64, count: usize) -> Result<Vec<Vec<f64>>> {
    let tr = Transformer::new(config.n_c, config.n_t)?;
    (0..count as u64)
        .map(|i| {
            let ad = tr.to_angular_delay(&generate_channel(config, start + i))?;
            truncate(&ad, config.n_p)
        })
        .collect()
}

/// Min/max over raw samples, widened by [`BOUNDS_MARGIN`].
pub fn bounds_from_samples(raw: &[Vec<f64>]) -> Result<ScaleBounds> {
    let (lo, hi) = raw
        .iter()
        .flatten()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| {
            (lo.min(x), hi.max(x))
        });
    if !lo.is_finite() {
        return Err(Error::Config("cannot derive scale bounds from an empty split".into()));
    }
    ScaleBounds::with_margin(lo, hi, BOUNDS_MARGIN)
}

fn assemble(config: &ChannelConfig, raw: &[Vec<f64>], bounds: ScaleBounds, saturate: bool) -> Result<(Dataset, usize)> {
    let mut payload = Vec::with_capacity(raw.len() * 2 * config.n_p * config.n_t);
    let mut clipped = 0;
    for sample in raw {
        for &x in sample {
            let y = bounds.scale(x);
            if !(0.0..=1.0).contains(&y) {
                if !saturate {
                    return Err(Error::OutOfRange {
                        value: x,
                        min: bounds.min,
                        max: bounds.max,
                    });
                }
                clipped += 1;
            }
            payload.push(y.clamp(0.0, 1.0) as f32);
        }
    }
    let header = DatasetHeader {
        n_t: config.n_t as u32,
        n_c: config.n_c as u32,
        n_p: config.n_p as u32,
        count: raw.len() as u32,
        scale_min: bounds.min,
        scale_max: bounds.max,
        master_seed: config.master_seed,
    };
    Ok((Dataset { header, payload }, clipped))
}

/// Generates one split in memory. Values outside `bounds` are an error unless
/// `saturate` is set, in which case they are clipped.
pub fn generate_split(
    config: &ChannelConfig,
    counts: &SplitCounts,
    split: Split,
    bounds: ScaleBounds,
    saturate: bool,
) -> Result<(Dataset, usize)> {
    let raw = generate_raw(config, counts.start(split), counts.count(split))?;
    assemble(config, &raw, bounds, saturate)
}

/// The three splits of a dataset, in memory.
#[derive(Debug, Clone)]
pub struct DatasetSet {
    pub train: Dataset,
    pub val: Dataset,
    pub test: Dataset,
}

impl DatasetSet {
    pub fn get(&self, split: Split) -> &Dataset {
        match split {
            Split::Train => &self.train,
            Split::Val => &self.val,
            Split::Test => &self.test,
        }
    }

    pub fn paths(dir: &Path) -> [PathBuf; 3] {
        Split::ALL.map(|s| dir.join(s.file_name()))
    }

    pub fn write(&self, dir: &Path) -> Result<[PathBuf; 3]> {
        let paths = Self::paths(dir);
        for (split, path) in Split::ALL.iter().zip(&paths) {
            self.get(*split).write(path)?;
        }
        Ok(paths)
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let [train, val, test] = Self::paths(dir);
        Ok(Self {
            train: Dataset::read(&train)?,
            val: Dataset::read(&val)?,
            test: Dataset::read(&test)?,
        })
    }
}

/// Generates train/validation/test splits over disjoint index ranges.
///
/// With `bounds == None` the scaling is derived from the training split (with
/// a 5% margin); validation and test values beyond it are clipped and
/// reported. Explicit bounds are enforced strictly on every split.
pub fn generate_dataset(
    config: &ChannelConfig,
    counts: &SplitCounts,
    bounds: Option<ScaleBounds>,
) -> Result<DatasetSet> {
    config.validate()?;
    let train_raw = generate_raw(config, counts.start(Split::Train), counts.train)?;
    let (bounds, saturate) = match bounds {
        Some(b) => (b, false),
        None => (bounds_from_samples(&train_raw)?, true),
    };
    let (train, _) = assemble(config, &train_raw, bounds, false)?;
    let mut rest = Vec::new();
    for split in [Split::Val, Split::Test] {
        let (ds, clipped) = generate_split(config, counts, split, bounds, saturate)?;
        if clipped > 0 {
            warn!(
                "{} split: {clipped} values clipped to the training scale bounds",
                split.name()
            );
        }
        rest.push(ds);
    }
    let test = rest.pop().unwrap();
    let val = rest.pop().unwrap();
    Ok(DatasetSet { train, val, test })
}

/// Generates the splits and writes `train.csid`, `val.csid` and `test.csid` into `dir`.
pub fn build_dataset(
    config: &ChannelConfig,
    counts: &SplitCounts,
    bounds: Option<ScaleBounds>,
    dir: &Path,
) -> Result<DatasetSet> {
    let set = generate_dataset(config, counts, bounds)?;
    set.write(dir)?;
    info!(
        "wrote {}/{}/{} samples to {} (bounds [{:.4}, {:.4}])",
        counts.train,
        counts.val,
        counts.test,
        dir.display(),
        set.train.header.scale_min,
        set.train.header.scale_max
    );
    Ok(set)
}
