use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::NoiseModel;
use crate::nn::{AdamConfig, Scalar, Tensor};

/// Floating-point width used for training.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    #[default]
    F32,
    F64,
}

/// Training SNR: one value, or a list sampled uniformly per codeword.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SnrSpec {
    Single(f64),
    Mixed(Vec<f64>),
}

impl Default for SnrSpec {
    fn default() -> Self {
        SnrSpec::Single(10.0)
    }
}

impl SnrSpec {
    pub fn validate(&self) -> Result<()> {
        let values = match self {
            SnrSpec::Single(v) => std::slice::from_ref(v),
            SnrSpec::Mixed(v) => v.as_slice(),
        };
        if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config(format!(
                "training SNR must be finite and non-empty, got {values:?}"
            )));
        }
        Ok(())
    }

    /// `rows x n_cw` noise for unit-norm codewords.
    pub fn sample<T: Scalar, R: Rng + ?Sized>(&self, rows: usize, n_cw: usize, rng: &mut R) -> Tensor<T> {
        match self {
            SnrSpec::Single(snr) => NoiseModel::new(*snr, n_cw).sample(&[rows, n_cw], rng),
            SnrSpec::Mixed(list) => {
                let mut data = Vec::with_capacity(rows * n_cw);
                for _ in 0..rows {
                    let snr = list[rng.random_range(0..list.len())];
                    let row: Tensor<T> = NoiseModel::new(snr, n_cw).sample(&[n_cw], rng);
                    data.extend_from_slice(row.data());
                }
                Tensor::new(&[rows, n_cw], data).expect("rows * n_cw values")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub pretrain_epochs_ae: usize,
    pub pretrain_epochs_dn: usize,
    pub joint_epochs: usize,
    /// Epochs spent on one active group before switching in joint training.
    pub alternation_period_epochs: usize,
    pub snr_db: SnrSpec,
    pub sparsity_target: f64,
    pub kl_weight: f64,
    pub master_seed: u64,
    pub precision: Precision,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            batch_size: 200,
            pretrain_epochs_ae: 100,
            pretrain_epochs_dn: 100,
            joint_epochs: 50,
            alternation_period_epochs: 1,
            snr_db: SnrSpec::default(),
            sparsity_target: 0.05,
            kl_weight: 1e-3,
            master_seed: 1,
            precision: Precision::F32,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 2 {
            return Err(Error::Config(format!(
                "batch_size must be at least 2 for batch normalization, got {}",
                self.batch_size
            )));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.alternation_period_epochs == 0 {
            return Err(Error::Config("alternation_period_epochs must be at least 1".into()));
        }
        if !(self.sparsity_target > 0.0 && self.sparsity_target < 1.0) {
            return Err(Error::Config(format!(
                "sparsity_target must lie in (0, 1), got {}",
                self.sparsity_target
            )));
        }
        if !(self.kl_weight >= 0.0 && self.kl_weight.is_finite()) {
            return Err(Error::Config(format!(
                "kl_weight must be non-negative, got {}",
                self.kl_weight
            )));
        }
        self.snr_db.validate()
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig::with_learning_rate(self.learning_rate)
    }
}
