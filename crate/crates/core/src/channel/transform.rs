use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::dft::DftPair;
use super::matrix::CMatrix;
use super::{AngularDelayCsi, SpatialFrequencyCsi};

/// Affine map between raw real/imaginary values and the [0, 1] network range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaleBounds {
    pub min: f64,
    pub max: f64,
}

impl ScaleBounds {
    pub fn new(min: f64, max: f64) -> Result<Self> {
        if !(max > min) || !min.is_finite() || !max.is_finite() {
            return Err(Error::Config(format!(
                "scale bounds need min < max, got [{min}, {max}]"
            )));
        }
        Ok(Self { min, max })
    }

    /// Bounds covering `[lo, hi]` widened on both sides by `margin` times the range.
    pub fn with_margin(lo: f64, hi: f64, margin: f64) -> Result<Self> {
        let range = hi - lo;
        Self::new(lo - margin * range, hi + margin * range)
    }

    pub fn scale(&self, x: f64) -> f64 {
        (x - self.min) / (self.max - self.min)
    }

    pub fn unscale(&self, y: f64) -> f64 {
        y * (self.max - self.min) + self.min
    }

    pub fn span(&self) -> f64 {
        self.max - self.min
    }
}

/// First `n_p` delay rows of an angular-delay matrix, split into real and
/// imaginary planes (`2 x n_p x n_t`, row-major) and mapped to [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct TruncatedCsi {
    pub n_p: usize,
    pub n_t: usize,
    pub values: Vec<f64>,
    pub bounds: ScaleBounds,
}

impl TruncatedCsi {
    pub fn new(n_p: usize, n_t: usize, values: Vec<f64>, bounds: ScaleBounds) -> Result<Self> {
        if values.len() != 2 * n_p * n_t {
            return Err(Error::dims("truncated CSI", &[2, n_p, n_t], &[values.len()]));
        }
        Ok(Self {
            n_p,
            n_t,
            values,
            bounds,
        })
    }

    pub fn zeros(n_p: usize, n_t: usize, bounds: ScaleBounds) -> Self {
        Self {
            n_p,
            n_t,
            values: vec![0.0; 2 * n_p * n_t],
            bounds,
        }
    }

    /// Unscaled complex `n_p x n_t` matrix.
    pub fn to_complex(&self) -> CMatrix {
        unscale_planes(&self.values, self.n_p, self.n_t, &self.bounds)
    }
}

pub(crate) fn unscale_planes(values: &[f64], n_p: usize, n_t: usize, bounds: &ScaleBounds) -> CMatrix {
    let plane = n_p * n_t;
    let data = (0..plane)
        .map(|i| Complex64::new(bounds.unscale(values[i]), bounds.unscale(values[plane + i])))
        .collect();
    CMatrix::from_vec(n_p, n_t, data).expect("plane size")
}

/// Shared transform context for one channel geometry.
#[derive(Debug)]
pub struct Transformer {
    n_c: usize,
    n_t: usize,
    dft: DftPair,
}

impl Transformer {
    pub fn new(n_c: usize, n_t: usize) -> Result<Self> {
        Ok(Self {
            n_c,
            n_t,
            dft: DftPair::new(n_c, n_t)?,
        })
    }

    pub fn n_c(&self) -> usize {
        self.n_c
    }

    pub fn n_t(&self) -> usize {
        self.n_t
    }

    pub fn to_angular_delay(&self, h: &SpatialFrequencyCsi) -> Result<AngularDelayCsi> {
        Ok(AngularDelayCsi(self.dft.forward(&h.0)?))
    }

    pub fn to_spatial_frequency(&self, h: &AngularDelayCsi) -> Result<SpatialFrequencyCsi> {
        Ok(SpatialFrequencyCsi(self.dft.inverse(&h.0)?))
    }

    /// Zero-pads a truncated channel back to `n_c` rows and returns it to the
    /// spatial-frequency domain.
    pub fn inverse_pipeline(&self, t: &TruncatedCsi) -> Result<SpatialFrequencyCsi> {
        self.pad_and_invert(&t.to_complex())
    }

    pub(crate) fn pad_and_invert(&self, truncated: &CMatrix) -> Result<SpatialFrequencyCsi> {
        if truncated.cols() != self.n_t || truncated.rows() > self.n_c {
            return Err(Error::dims(
                "inverse pipeline",
                &truncated.dims(),
                &[self.n_c, self.n_t],
            ));
        }
        let mut full = CMatrix::zeros(self.n_c, self.n_t);
        full.data_mut()[..truncated.data().len()].copy_from_slice(truncated.data());
        self.to_spatial_frequency(&AngularDelayCsi(full))
    }
}

/// Keeps the first `n_p` rows and returns them as raw (unscaled) real and
/// imaginary planes.
pub fn truncate(h: &AngularDelayCsi, n_p: usize) -> Result<Vec<f64>> {
    let (rows, n_t) = (h.0.rows(), h.0.cols());
    if n_p == 0 || n_p > rows {
        return Err(Error::Config(format!("cannot keep {n_p} of {rows} delay rows")));
    }
    let kept = &h.0.data()[..n_p * n_t];
    let mut out: Vec<f64> = kept.iter().map(|z| z.re).collect();
    out.extend(kept.iter().map(|z| z.im));
    Ok(out)
}

pub fn truncate_and_scale(h: &AngularDelayCsi, n_p: usize, bounds: ScaleBounds) -> Result<TruncatedCsi> {
    let raw = truncate(h, n_p)?;
    let values = raw
        .iter()
        .map(|&x| {
            if x < bounds.min || x > bounds.max {
                Err(Error::OutOfRange {
                    value: x,
                    min: bounds.min,
                    max: bounds.max,
                })
            } else {
                Ok(bounds.scale(x))
            }
        })
        .collect::<Result<Vec<_>>>()?;
    TruncatedCsi::new(n_p, h.0.cols(), values, bounds)
}

/// Like [`truncate_and_scale`] but clips out-of-range values to the bounds.
/// Returns the number of clipped entries alongside the result.
pub fn truncate_and_scale_saturating(
    h: &AngularDelayCsi,
    n_p: usize,
    bounds: ScaleBounds,
) -> Result<(TruncatedCsi, usize)> {
    let raw = truncate(h, n_p)?;
    let mut clipped = 0;
    let values = raw
        .iter()
        .map(|&x| {
            let y = bounds.scale(x);
            if !(0.0..=1.0).contains(&y) {
                clipped += 1;
            }
            y.clamp(0.0, 1.0)
        })
        .collect();
    Ok((TruncatedCsi::new(n_p, h.0.cols(), values, bounds)?, clipped))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::dft::dft_matrix;
    use crate::channel::generator::{generate_channel, ChannelConfig, DelayGrid};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rows: usize, cols: usize, seed: u64) -> CMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        CMatrix::from_fn(rows, cols, |_, _| {
            Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        })
    }

    #[test]
    fn constant_input_collapses_to_origin() {
        let (n_c, n_t) = (16, 8);
        let tr = Transformer::new(n_c, n_t).unwrap();
        let ones = SpatialFrequencyCsi(CMatrix::from_fn(n_c, n_t, |_, _| Complex64::new(1.0, 0.0)));
        let ad = tr.to_angular_delay(&ones).unwrap();
        let peak = ((n_c * n_t) as f64).sqrt();
        for (i, z) in ad.0.data().iter().enumerate() {
            let want = if i == 0 { peak } else { 0.0 };
            assert!((z - Complex64::new(want, 0.0)).norm() < 1e-10);
        }
    }

    #[test]
    fn matches_dft_matrix_product() {
        let (n_c, n_t) = (12, 6);
        let h = random_matrix(n_c, n_t, 21);
        let fd = dft_matrix(n_c).unwrap();
        let fa = dft_matrix(n_t).unwrap();
        let oracle = fd.matmul(&h).unwrap().matmul(&fa.conj_transpose()).unwrap();
        let tr = Transformer::new(n_c, n_t).unwrap();
        let got = tr.to_angular_delay(&SpatialFrequencyCsi(h.clone())).unwrap();
        assert!(got.0.max_abs_diff(&oracle) < 1e-8);
        let back = tr.to_spatial_frequency(&got).unwrap();
        assert!(back.0.max_abs_diff(&h) < 1e-10);
        let rel = (got.0.frobenius_sq() - h.frobenius_sq()).abs() / h.frobenius_sq();
        assert!(rel < 1e-10);
    }

    #[test]
    fn scaling_endpoints_and_midpoint() {
        let b = ScaleBounds::new(-2.0, 2.0).unwrap();
        assert_eq!(b.scale(-2.0), 0.0);
        assert_eq!(b.scale(2.0), 1.0);
        assert_eq!(b.scale(0.0), 0.5);
        assert!(ScaleBounds::new(1.0, 1.0).is_err());
    }

    #[test]
    fn out_of_range_names_value() {
        let ad = AngularDelayCsi(CMatrix::from_fn(2, 2, |_, _| Complex64::new(5.0, 0.0)));
        let err = truncate_and_scale(&ad, 1, ScaleBounds::new(-1.0, 1.0).unwrap()).unwrap_err();
        assert!(matches!(err, Error::OutOfRange { value, .. } if value == 5.0));
        let (t, clipped) = truncate_and_scale_saturating(&ad, 1, ScaleBounds::new(-1.0, 1.0).unwrap()).unwrap();
        assert_eq!(clipped, 2);
        assert!(t.values.iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn zero_tensor_inverts_to_zero() {
        let tr = Transformer::new(16, 4).unwrap();
        let b = ScaleBounds::new(-1.0, 1.0).unwrap();
        let mut t = TruncatedCsi::zeros(4, 4, b);
        t.values.fill(0.5);
        let h = tr.inverse_pipeline(&t).unwrap();
        assert!(h.0.data().iter().all(|z| z.norm() < 1e-15));
    }

    #[test]
    fn lossless_round_trip_for_in_band_channel() {
        let cfg = ChannelConfig {
            delay_spread: 0.5,
            delay_grid: DelayGrid::Integer,
            ..ChannelConfig::desk_scale(4)
        };
        let tr = Transformer::new(cfg.n_c, cfg.n_t).unwrap();
        let h = generate_channel(&cfg, 0);
        let ad = tr.to_angular_delay(&h).unwrap();
        let peak =
            ad.0.data()
                .iter()
                .map(|z| z.re.abs().max(z.im.abs()))
                .fold(0.0, f64::max);
        let t = truncate_and_scale(&ad, cfg.n_p, ScaleBounds::new(-peak, peak).unwrap()).unwrap();
        let back = tr.inverse_pipeline(&t).unwrap();
        let rel = back.0.distance_sq(&h.0).unwrap().sqrt() / h.0.frobenius_sq().sqrt();
        assert!(rel < 1e-6, "relative error {rel}");
    }
}
