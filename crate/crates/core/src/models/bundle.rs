use rand::Rng;

use crate::error::{Error, Result};
use crate::nn::{ParameterGroup, Scalar, Tensor};
use crate::seed::{rng_for, stream};

use super::codeword::normalize_rows;
use super::decoder::Decoder;
use super::dnnet::Dnnet;
use super::encoder::Encoder;
use super::spec::{AutoencoderSpec, DnnetSpec};

/// Which parameter groups an operation touches.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PartMask {
    pub encoder: bool,
    pub decoder: bool,
    pub dnnet: bool,
}

impl PartMask {
    pub const ALL: PartMask = PartMask {
        encoder: true,
        decoder: true,
        dnnet: true,
    };
    pub const AUTOENCODER: PartMask = PartMask {
        encoder: true,
        decoder: true,
        dnnet: false,
    };
    pub const DNNET: PartMask = PartMask {
        encoder: false,
        decoder: false,
        dnnet: true,
    };

    pub fn bits(self) -> u8 {
        self.encoder as u8 | (self.decoder as u8) << 1 | (self.dnnet as u8) << 2
    }

    pub fn from_bits(bits: u8) -> Option<Self> {
        (bits & !0b111 == 0).then_some(Self {
            encoder: bits & 1 != 0,
            decoder: bits & 2 != 0,
            dnnet: bits & 4 != 0,
        })
    }
}

/// Encoder, decoder and DNNet sharing one autoencoder shape, plus the number
/// of optimizer steps taken so far.
#[derive(Debug, Clone)]
pub struct ModelBundle<T> {
    pub spec: AutoencoderSpec,
    pub encoder: Option<Encoder<T>>,
    pub decoder: Option<Decoder<T>>,
    pub dnnet: Option<Dnnet<T>>,
    pub steps: u64,
}

impl<T: Scalar> ModelBundle<T> {
    pub fn empty(spec: AutoencoderSpec) -> Self {
        Self {
            spec,
            encoder: None,
            decoder: None,
            dnnet: None,
            steps: 0,
        }
    }

    /// Freshly initialized autoencoder, seeded from `master_seed`.
    pub fn init_autoencoder(spec: AutoencoderSpec, master_seed: u64) -> Result<Self> {
        let mut bundle = Self::empty(spec);
        bundle.encoder = Some(Encoder::new(spec, &mut rng_for(&[master_seed, stream::INIT_ENCODER]))?);
        bundle.decoder = Some(Decoder::new(spec, &mut rng_for(&[master_seed, stream::INIT_DECODER]))?);
        Ok(bundle)
    }

    pub fn init_dnnet(&mut self, spec: DnnetSpec, master_seed: u64) -> Result<()> {
        let mut rng = rng_for(&[master_seed, stream::INIT_DNNET]);
        self.dnnet = Some(Dnnet::new(self.spec.n_cw, spec, &mut rng)?);
        Ok(())
    }

    pub fn init_dnnet_with<R: Rng + ?Sized>(&mut self, spec: DnnetSpec, rng: &mut R) -> Result<()> {
        self.dnnet = Some(Dnnet::new(self.spec.n_cw, spec, rng)?);
        Ok(())
    }

    pub fn present(&self) -> PartMask {
        PartMask {
            encoder: self.encoder.is_some(),
            decoder: self.decoder.is_some(),
            dnnet: self.dnnet.is_some(),
        }
    }

    pub fn encoder(&self) -> Result<&Encoder<T>> {
        self.encoder
            .as_ref()
            .ok_or_else(|| Error::Usage("bundle has no encoder".into()))
    }

    pub fn decoder(&self) -> Result<&Decoder<T>> {
        self.decoder
            .as_ref()
            .ok_or_else(|| Error::Usage("bundle has no decoder".into()))
    }

    pub fn dnnet(&self) -> Result<&Dnnet<T>> {
        self.dnnet
            .as_ref()
            .ok_or_else(|| Error::Usage("bundle has no DNNet".into()))
    }

    /// Freezes exactly the groups selected by `mask` and unfreezes the rest.
    pub fn freeze(&mut self, mask: PartMask) {
        if let Some(e) = &mut self.encoder {
            e.set_frozen(mask.encoder);
        }
        if let Some(d) = &mut self.decoder {
            d.set_frozen(mask.decoder);
        }
        if let Some(n) = &mut self.dnnet {
            n.set_frozen(mask.dnnet);
        }
    }

    /// Copies the groups selected by `mask` from `other`.
    pub fn merge_from(&mut self, other: ModelBundle<T>, mask: PartMask) -> Result<()> {
        let shape = |s: &AutoencoderSpec| [s.n_p, s.n_t, s.n_cw];
        if (mask.encoder || mask.decoder) && shape(&other.spec) != shape(&self.spec) {
            return Err(Error::dims(
                "merged checkpoint",
                &shape(&self.spec),
                &shape(&other.spec),
            ));
        }
        if mask.dnnet && other.spec.n_cw != self.spec.n_cw {
            return Err(Error::dims("merged DNNet", &[self.spec.n_cw], &[other.spec.n_cw]));
        }
        let missing = |part: &str| Error::Usage(format!("checkpoint has no {part}"));
        if mask.encoder {
            self.encoder = Some(other.encoder.ok_or_else(|| missing("encoder"))?);
        }
        if mask.decoder {
            let decoder = other.decoder.ok_or_else(|| missing("decoder"))?;
            self.spec.refine_blocks = decoder.spec().refine_blocks;
            self.decoder = Some(decoder);
        }
        if mask.dnnet {
            self.dnnet = Some(other.dnnet.ok_or_else(|| missing("DNNet"))?);
        }
        self.steps = self.steps.max(other.steps);
        Ok(())
    }
}

/// Rows processed per inference call in [`reconstruct`].
pub const INFER_CHUNK: usize = 250;

/// Inference through the feedback chain: encode, normalize, optionally add
/// `noise` (one row per sample), optionally denoise, decode. Returns the
/// reconstructions in the scaled truncated domain.
pub fn reconstruct<T: Scalar>(
    encoder: &Encoder<T>,
    decoder: &Decoder<T>,
    dnnet: Option<&Dnnet<T>>,
    x: &Tensor<T>,
    noise: Option<&Tensor<T>>,
) -> Result<Tensor<T>> {
    let n = x.batch();
    if let Some(noise) = noise {
        if noise.batch() != n {
            return Err(Error::dims("noise rows", &[noise.batch()], &[n]));
        }
    }
    let mut out = Vec::with_capacity(x.len());
    for start in (0..n).step_by(INFER_CHUNK) {
        let rows: Vec<usize> = (start..(start + INFER_CHUNK).min(n)).collect();
        let (mut s, _) = normalize_rows(&encoder.infer(&x.gather(&rows))?)?;
        if let Some(noise) = noise {
            s = s.add(&noise.gather(&rows))?;
        }
        if let Some(dn) = dnnet {
            s = dn.infer(&s)?.0;
        }
        out.extend_from_slice(decoder.infer(&s)?.data());
    }
    Tensor::new(x.shape(), out)
}

impl<T: Scalar> ModelBundle<T> {
    /// [`reconstruct`] with this bundle's parts; `use_dnnet` requires a DNNet.
    pub fn reconstruct(&self, x: &Tensor<T>, noise: Option<&Tensor<T>>, use_dnnet: bool) -> Result<Tensor<T>> {
        let dnnet = if use_dnnet { Some(self.dnnet()?) } else { None };
        reconstruct(self.encoder()?, self.decoder()?, dnnet, x, noise)
    }
}
