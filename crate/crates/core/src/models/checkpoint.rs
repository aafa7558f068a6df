//! Binary checkpoint format.
//!
//! Layout (little endian): magic `CSICKPT`, u16 version, u8 part mask (bit 0
//! encoder, bit 1 decoder, bit 2 DNNet). Each present part is a u32 layer
//! count followed by one record per layer: u8 kind, kind-specific u32
//! dimensions, then f32 parameter values. The file ends with the u64
//! optimizer step counter.
//!
//! Parameters are always stored in single precision; a double-precision
//! bundle is rounded on save. Sparsity settings of the DNNet are training
//! configuration and are not stored.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::nn::{ActivationKind, BatchNorm, Conv2d, Dense, Layer, Reshape, Scalar, Tensor};

use super::bundle::{ModelBundle, PartMask};
use super::decoder::Decoder;
use super::dnnet::Dnnet;
use super::encoder::Encoder;
use super::spec::{AutoencoderSpec, DnnetSpec};

pub const CHECKPOINT_MAGIC: &[u8; 7] = b"CSICKPT";
pub const CHECKPOINT_VERSION: u16 = 1;

struct Writer {
    out: Vec<u8>,
}

impl Writer {
    fn u8(&mut self, v: u8) {
        self.out.push(v);
    }

    fn u32(&mut self, v: usize) {
        self.out.extend_from_slice(&(v as u32).to_le_bytes());
    }

    fn dims(&mut self, dims: &[usize]) {
        self.u32(dims.len());
        dims.iter().for_each(|&d| self.u32(d));
    }

    fn tensor<T: Scalar>(&mut self, t: &Tensor<T>) {
        for v in t.data() {
            self.out.extend_from_slice(&(v.as_f64() as f32).to_le_bytes());
        }
    }

    fn layers<'a, T: Scalar + 'a>(&mut self, layers: impl ExactSizeIterator<Item = &'a Layer<T>>) {
        self.u32(layers.len());
        for layer in layers {
            self.u8(layer.kind().code());
            match layer {
                Layer::Dense(d) => {
                    self.u32(d.inputs());
                    self.u32(d.outputs());
                }
                Layer::Conv2d(c) => {
                    self.u32(c.in_channels());
                    self.u32(c.out_channels());
                    self.u32(c.size());
                }
                Layer::BatchNorm(bn) => self.u32(bn.features()),
                Layer::Activation(kind) => self.u32(kind.code() as usize),
                Layer::Reshape(r) => {
                    self.dims(&r.input_dims);
                    self.dims(&r.output_dims);
                }
            }
            for t in layer.state() {
                self.tensor(t);
            }
        }
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn corrupt(&self, message: impl Into<String>) -> Error {
        Error::Corruption {
            path: self.path.to_path_buf(),
            message: message.into(),
        }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(self.corrupt(format!("truncated at byte {}", self.bytes.len())));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn dims(&mut self) -> Result<Vec<usize>> {
        let n = self.u32()?;
        if n > 8 {
            return Err(self.corrupt(format!("implausible rank {n}")));
        }
        (0..n).map(|_| self.u32()).collect()
    }

    fn tensor<T: Scalar>(&mut self, shape: &[usize]) -> Result<Tensor<T>> {
        let len: usize = shape.iter().product();
        let raw = self.take(len.checked_mul(4).ok_or_else(|| self.corrupt("tensor size overflow"))?)?;
        let data = raw
            .chunks_exact(4)
            .map(|c| T::lit(f32::from_le_bytes(c.try_into().unwrap()) as f64))
            .collect();
        Tensor::new(shape, data)
    }

    fn layers<T: Scalar>(&mut self) -> Result<Vec<Layer<T>>> {
        let count = self.u32()?;
        let mut layers = Vec::with_capacity(count.min(1024));
        for _ in 0..count {
            let kind = self.u8()?;
            let layer = match kind {
                0 => {
                    let (i, o) = (self.u32()?, self.u32()?);
                    Layer::Dense(
                        Dense::from_parts(self.tensor(&[o, i])?, self.tensor(&[o])?)
                            .map_err(|e| self.corrupt(e.to_string()))?,
                    )
                }
                1 => {
                    let (i, o, k) = (self.u32()?, self.u32()?, self.u32()?);
                    Layer::Conv2d(
                        Conv2d::from_parts(self.tensor(&[o, i, k, k])?, self.tensor(&[o])?)
                            .map_err(|e| self.corrupt(e.to_string()))?,
                    )
                }
                2 => {
                    let f = self.u32()?;
                    Layer::BatchNorm(
                        BatchNorm::from_parts(
                            self.tensor(&[f])?,
                            self.tensor(&[f])?,
                            self.tensor(&[f])?,
                            self.tensor(&[f])?,
                        )
                        .map_err(|e| self.corrupt(e.to_string()))?,
                    )
                }
                3 => {
                    let code = self.u32()?;
                    let kind = ActivationKind::from_code(code as u32)
                        .ok_or_else(|| self.corrupt(format!("unknown activation code {code}")))?;
                    Layer::Activation(kind)
                }
                4 => {
                    let input = self.dims()?;
                    let output = self.dims()?;
                    Layer::Reshape(Reshape::new(&input, &output).map_err(|e| self.corrupt(e.to_string()))?)
                }
                other => return Err(self.corrupt(format!("unknown layer kind {other}"))),
            };
            layers.push(layer);
        }
        Ok(layers)
    }
}

/// Serializes the present parts of a bundle.
pub fn to_bytes<T: Scalar>(bundle: &ModelBundle<T>) -> Vec<u8> {
    let mut w = Writer { out: Vec::new() };
    w.out.extend_from_slice(CHECKPOINT_MAGIC);
    w.out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    w.u8(bundle.present().bits());
    if let Some(e) = &bundle.encoder {
        w.layers(e.net.layers.iter());
    }
    if let Some(d) = &bundle.decoder {
        let mut layers = d.layers();
        let sigmoid = Layer::Activation(ActivationKind::Sigmoid);
        layers.push(&sigmoid);
        w.layers(layers.into_iter());
    }
    if let Some(n) = &bundle.dnnet {
        w.layers(n.net.layers.iter());
    }
    w.out.extend_from_slice(&bundle.steps.to_le_bytes());
    w.out
}

pub fn from_bytes<T: Scalar>(bytes: &[u8], path: &Path) -> Result<ModelBundle<T>> {
    let format = |message: String| Error::Format {
        path: path.to_path_buf(),
        message,
    };
    if bytes.len() < 10 || &bytes[..7] != CHECKPOINT_MAGIC {
        return Err(format("missing CSICKPT magic".into()));
    }
    let version = u16::from_le_bytes([bytes[7], bytes[8]]);
    if version != CHECKPOINT_VERSION {
        return Err(format(format!("unsupported checkpoint version {version}")));
    }
    let mask = PartMask::from_bits(bytes[9]).ok_or_else(|| format(format!("bad part mask {:#x}", bytes[9])))?;
    let mut r = Reader { bytes, pos: 10, path };
    let malformed = |e: Error, r: &Reader| r.corrupt(e.to_string());
    let encoder = if mask.encoder {
        Some(Encoder::from_layers(r.layers()?).map_err(|e| malformed(e, &r))?)
    } else {
        None
    };
    let decoder = if mask.decoder {
        Some(Decoder::from_layers(r.layers()?).map_err(|e| malformed(e, &r))?)
    } else {
        None
    };
    let dnnet = if mask.dnnet {
        let layers = r.layers()?;
        Some(Dnnet::from_layers(layers, DnnetSpec::default()).map_err(|e| malformed(e, &r))?)
    } else {
        None
    };
    let steps = r.u64()?;
    if r.pos != bytes.len() {
        return Err(r.corrupt(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    let spec = match (&encoder, &decoder, &dnnet) {
        (Some(e), Some(d), _) => {
            let (a, b) = (e.spec(), d.spec());
            if (a.n_p, a.n_t, a.n_cw) != (b.n_p, b.n_t, b.n_cw) {
                return Err(r.corrupt("encoder and decoder shapes disagree"));
            }
            b
        }
        (_, Some(d), _) => d.spec(),
        (Some(e), None, _) => e.spec(),
        (None, None, Some(n)) => dnnet_only_spec(n.n_cw()),
        (None, None, None) => return Err(format("checkpoint holds no parts".into())),
    };
    if let Some(n) = &dnnet {
        if n.n_cw() != spec.n_cw {
            return Err(r.corrupt("DNNet width does not match the codeword length"));
        }
    }
    Ok(ModelBundle {
        spec,
        encoder,
        decoder,
        dnnet,
        steps,
    })
}

/// Shape placeholder for bundles that only carry a DNNet: the codeword length
/// is known, the image shape is not.
fn dnnet_only_spec(n_cw: usize) -> AutoencoderSpec {
    AutoencoderSpec {
        n_p: 1,
        n_t: n_cw.div_ceil(2),
        n_cw,
        refine_blocks: 0,
    }
}

pub fn save<T: Scalar>(bundle: &ModelBundle<T>, path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, to_bytes(bundle)).map_err(|e| Error::io(path, e))
}

pub fn load<T: Scalar>(path: &Path) -> Result<ModelBundle<T>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    from_bytes(&bytes, path)
}

/// Loads the parts selected by `mask` from `path` into `bundle`, leaving the
/// other parts untouched.
pub fn load_into<T: Scalar>(bundle: &mut ModelBundle<T>, path: &Path, mask: PartMask) -> Result<()> {
    let loaded = load(path)?;
    bundle.merge_from(loaded, mask)
}
