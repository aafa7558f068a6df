use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::{rng_for, stream};

use super::matrix::CMatrix;
use super::SpatialFrequencyCsi;

/// How path delays are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum DelayGrid {
    /// Continuous delays; the angular-delay image leaks slightly across rows.
    #[default]
    Fractional,
    /// Delays on the integer sample grid; the angular-delay energy stays
    /// exactly inside the retained rows.
    Integer,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelConfig {
    pub n_t: usize,
    pub n_c: usize,
    pub n_p: usize,
    pub num_paths: usize,
    /// Largest path delay as a fraction of `n_p` delay rows.
    pub delay_spread: f64,
    /// RMS width of the exponential power-delay profile as a fraction of the
    /// largest delay.
    #[serde(default = "default_pdp_decay")]
    pub pdp_decay: f64,
    #[serde(default)]
    pub delay_grid: DelayGrid,
    #[serde(default)]
    pub master_seed: u64,
}

fn default_pdp_decay() -> f64 {
    0.25
}

impl ChannelConfig {
    /// Desk-scale geometry: 32 antennas, 256 subcarriers, 32 retained rows.
    pub fn desk_scale(master_seed: u64) -> Self {
        Self {
            n_t: 32,
            n_c: 256,
            n_p: 32,
            num_paths: 6,
            delay_spread: 1.0,
            pdp_decay: default_pdp_decay(),
            delay_grid: DelayGrid::Fractional,
            master_seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.n_t == 0 || self.n_c == 0 {
            return fail(format!(
                "channel dims must be positive (n_t={}, n_c={})",
                self.n_t, self.n_c
            ));
        }
        if self.n_p == 0 || self.n_p > self.n_c {
            return fail(format!(
                "n_p must satisfy 1 <= n_p <= n_c, got n_p={} n_c={}",
                self.n_p, self.n_c
            ));
        }
        if self.num_paths == 0 {
            return fail("num_paths must be at least 1".into());
        }
        if !(self.delay_spread > 0.0 && self.delay_spread <= 1.0) {
            return fail(format!("delay_spread must lie in (0, 1], got {}", self.delay_spread));
        }
        if !(self.pdp_decay > 0.0 && self.pdp_decay.is_finite()) {
            return fail(format!("pdp_decay must be positive, got {}", self.pdp_decay));
        }
        Ok(())
    }

    pub fn max_delay(&self) -> f64 {
        self.delay_spread * self.n_p as f64
    }
}

/// One propagation path: complex gain, departure angle (radians) and delay
/// in sample units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Path {
    pub gain: Complex64,
    pub angle: f64,
    pub delay: f64,
}

/// ULA steering vector with half-wavelength spacing: `exp(-i*pi*m*sin(theta))`.
pub fn steering_vector(n_t: usize, angle: f64) -> Vec<Complex64> {
    let s = angle.sin();
    (0..n_t)
        .map(|m| Complex64::from_polar(1.0, -PI * m as f64 * s))
        .collect()
}

/// Builds `H_sf` whose row `k` is `h_k^H`, with
/// `h_k = sum_p gain_p * a(angle_p) * exp(-2*pi*i*k*delay_p/n_c)`.
pub fn channel_from_paths(n_c: usize, n_t: usize, paths: &[Path]) -> SpatialFrequencyCsi {
    let mut h = CMatrix::zeros(n_c, n_t);
    for p in paths {
        let steer = steering_vector(n_t, p.angle);
        for k in 0..n_c {
            let phase = -2.0 * PI * ((k as f64 * p.delay) % n_c as f64) / n_c as f64;
            let hk = p.gain * Complex64::from_polar(1.0, phase);
            let row = &mut h.data_mut()[k * n_t..(k + 1) * n_t];
            for (dst, a) in row.iter_mut().zip(&steer) {
                *dst += (hk * a).conj();
            }
        }
    }
    SpatialFrequencyCsi(h)
}

/// Draws the multipath parameters of sample `index`.
///
/// The random stream is a pure function of `(master_seed, index)`, so samples
/// can be produced in any order.
pub fn draw_paths(config: &ChannelConfig, index: u64) -> Vec<Path> {
    let mut rng = rng_for(&[config.master_seed, stream::CHANNEL, index]);
    let max_delay = config.max_delay();
    let rms = config.pdp_decay * max_delay;
    let mut paths: Vec<Path> = (0..config.num_paths)
        .map(|_| {
            let angle = rng.random_range(-PI / 2.0..PI / 2.0);
            let mut delay = rng.random_range(0.0..max_delay);
            if config.delay_grid == DelayGrid::Integer {
                delay = delay.floor();
            }
            let re: f64 = StandardNormal.sample(&mut rng);
            let im: f64 = StandardNormal.sample(&mut rng);
            Path {
                gain: Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2,
                angle,
                delay,
            }
        })
        .collect();
    let weights: Vec<f64> = paths.iter().map(|p| (-p.delay / rms).exp()).collect();
    let total: f64 = weights.iter().sum();
    for (p, w) in paths.iter_mut().zip(&weights) {
        p.gain *= (w / total).sqrt();
    }
    paths
}

pub fn generate_channel(config: &ChannelConfig, index: u64) -> SpatialFrequencyCsi {
    channel_from_paths(config.n_c, config.n_t, &draw_paths(config, index))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn broadside_zero_delay_is_all_ones() {
        let h = channel_from_paths(
            8,
            4,
            &[Path {
                gain: Complex64::new(1.0, 0.0),
                angle: 0.0,
                delay: 0.0,
            }],
        );
        assert!(h.0.data().iter().all(|z| (z - Complex64::new(1.0, 0.0)).norm() < 1e-15));
    }

    #[test]
    fn deterministic_and_order_independent() {
        let cfg = ChannelConfig::desk_scale(9);
        let a = generate_channel(&cfg, 5);
        let _ = generate_channel(&cfg, 4);
        let b = generate_channel(&cfg, 5);
        assert_eq!(a, b);
        assert_ne!(a, generate_channel(&cfg, 6));
    }

    #[test]
    fn integer_grid_delays_are_whole() {
        let cfg = ChannelConfig {
            delay_grid: DelayGrid::Integer,
            ..ChannelConfig::desk_scale(1)
        };
        assert!(draw_paths(&cfg, 0)
            .iter()
            .all(|p| p.delay.fract() == 0.0 && p.delay < 32.0));
    }

    #[test]
    fn validation() {
        let ok = ChannelConfig::desk_scale(0);
        assert!(ok.validate().is_ok());
        for bad in [
            ChannelConfig { n_p: 0, ..ok.clone() },
            ChannelConfig { n_p: 300, ..ok.clone() },
            ChannelConfig {
                num_paths: 0,
                ..ok.clone()
            },
            ChannelConfig {
                delay_spread: 0.0,
                ..ok.clone()
            },
            ChannelConfig {
                delay_spread: 1.5,
                ..ok.clone()
            },
        ] {
            assert!(matches!(bad.validate(), Err(Error::Config(_))));
        }
    }
}
