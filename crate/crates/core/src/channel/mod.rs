//! Synthetic sparse channels and the spatial-frequency / angular-delay
//! transforms.

pub mod dataset;
pub mod dft;
pub mod generator;
mod matrix;
pub mod transform;

pub use dataset::{build_dataset, generate_dataset, Dataset, DatasetHeader, DatasetSet, Split, SplitCounts};
pub use dft::dft_matrix;
pub use generator::{
    channel_from_paths, draw_paths, generate_channel, steering_vector, ChannelConfig, DelayGrid, Path,
};
pub use matrix::CMatrix;
pub use transform::{truncate_and_scale, truncate_and_scale_saturating, ScaleBounds, Transformer, TruncatedCsi};

/// Channel in the spatial-frequency domain, `n_c x n_t`; row `k` is the
/// conjugated response of subcarrier `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialFrequencyCsi(pub CMatrix);

/// Channel in the angular-delay domain, `n_c x n_t`.
#[derive(Debug, Clone, PartialEq)]
pub struct AngularDelayCsi(pub CMatrix);

/// One-shot helpers that build a [`Transformer`] per call.
pub fn to_angular_delay(h: &SpatialFrequencyCsi) -> crate::Result<AngularDelayCsi> {
    Transformer::new(h.0.rows(), h.0.cols())?.to_angular_delay(h)
}

pub fn inverse_pipeline(t: &TruncatedCsi, n_c: usize) -> crate::Result<SpatialFrequencyCsi> {
    Transformer::new(n_c, t.n_t)?.inverse_pipeline(t)
}
