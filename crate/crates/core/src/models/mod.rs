//! Encoder, decoder and DNNet denoiser, their shared bundle and checkpoints.

pub mod bundle;
pub mod checkpoint;
pub mod codeword;
pub mod decoder;
pub mod dnnet;
pub mod encoder;
pub mod spec;

pub use bundle::{reconstruct, ModelBundle, PartMask, INFER_CHUNK};
pub use codeword::{
    add_noise, normalize_codeword, normalize_rows, normalize_rows_backward, snr_to_sigma_sq, Codeword, NoiseModel,
};
pub use decoder::{Decoder, DecoderTape};
pub use dnnet::{Dnnet, DnnetOutput, DnnetTape};
pub use encoder::Encoder;
pub use spec::{AutoencoderSpec, DnnetSpec};
