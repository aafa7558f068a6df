//! Two-stage training: separate pre-training of the autoencoder and the
//! DNNet, then joint training with an in-line noise layer and alternating
//! freezing.

mod autoencoder;
mod config;
mod denoiser;
mod joint;

use std::path::PathBuf;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::channel::Dataset;
use crate::error::{Error, Result};
use crate::models::AutoencoderSpec;
use crate::seed::{rng_for, stream};

pub use autoencoder::pretrain_autoencoder;
pub use config::{Precision, SnrSpec, TrainConfig};
pub use denoiser::{generate_dnnet_dataset, pretrain_dnnet, validation_noise, DnnetPairs};
pub use joint::joint_train;

/// Training stages, in pipeline order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    PretrainAe,
    PretrainDn,
    Joint,
}

impl Stage {
    pub const ALL: [Stage; 3] = [Stage::PretrainAe, Stage::PretrainDn, Stage::Joint];

    pub fn name(self) -> &'static str {
        match self {
            Stage::PretrainAe => "pretrain-ae",
            Stage::PretrainDn => "pretrain-dn",
            Stage::Joint => "joint",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|s| s.name() == name)
            .ok_or_else(|| Error::Usage(format!("unknown stage `{name}`")))
    }

    fn tag(self) -> u64 {
        self as u64 + 1
    }
}

/// Outcome of one training stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageResult {
    pub stage: Stage,
    /// Mean training loss of the last epoch (NaN when no epoch ran).
    pub final_loss: f64,
    /// Validation NMSE of the retained parameters.
    pub val_nmse_db: f64,
    /// Validation NMSE before the first epoch.
    pub initial_val_nmse_db: f64,
    /// Epoch whose parameters were retained; 0 means the initial ones.
    pub best_epoch: usize,
    pub epochs: usize,
    pub steps: u64,
    pub wall_time_s: f64,
    pub checkpoint: Option<PathBuf>,
    pub loss_trace: Vec<f64>,
    pub val_trace: Vec<f64>,
}

/// Shuffled mini-batches for one epoch. A trailing batch of a single sample
/// is dropped because batch normalization needs two.
fn epoch_batches(n: usize, batch_size: usize, seed: u64, stage: Stage, epoch: usize) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng_for(&[seed, stream::SHUFFLE, stage.tag(), epoch as u64]));
    order
        .chunks(batch_size)
        .filter(|c| c.len() >= 2)
        .map(|c| c.to_vec())
        .collect()
}

fn check_dataset(spec: &AutoencoderSpec, data: &Dataset, what: &str) -> Result<()> {
    let h = &data.header;
    if (h.n_p as usize, h.n_t as usize) != (spec.n_p, spec.n_t) {
        return Err(Error::dims(
            "dataset/model geometry",
            &[h.n_p as usize, h.n_t as usize],
            &[spec.n_p, spec.n_t],
        ));
    }
    if data.is_empty() {
        return Err(Error::Config(format!("{what} split is empty")));
    }
    Ok(())
}

/// Tracks the best validation score and the parameters that achieved it.
struct Best<S> {
    nmse_db: f64,
    epoch: usize,
    snapshot: S,
}

impl<S> Best<S> {
    fn new(initial: f64, snapshot: S) -> Self {
        Self {
            nmse_db: initial,
            epoch: 0,
            snapshot,
        }
    }

    fn offer(&mut self, nmse_db: f64, epoch: usize, snapshot: impl FnOnce() -> S) {
        if nmse_db < self.nmse_db {
            self.nmse_db = nmse_db;
            self.epoch = epoch;
            self.snapshot = snapshot();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn batches_cover_all_samples_once() {
        let b = epoch_batches(450, 200, 3, Stage::PretrainAe, 0);
        assert_eq!(b.iter().map(|c| c.len()).collect::<Vec<_>>(), vec![200, 200, 50]);
        let mut all: Vec<usize> = b.concat();
        all.sort();
        assert_eq!(all, (0..450).collect::<Vec<_>>());
        assert_ne!(b, epoch_batches(450, 200, 3, Stage::PretrainAe, 1));
        assert_eq!(b, epoch_batches(450, 200, 3, Stage::PretrainAe, 0));
    }

    #[test]
    fn singleton_tail_is_dropped() {
        let b = epoch_batches(5, 2, 1, Stage::Joint, 0);
        assert_eq!(b.len(), 2);
    }

    #[test]
    fn stage_names_round_trip() {
        for s in Stage::ALL {
            assert_eq!(Stage::parse(s.name()).unwrap(), s);
        }
    }
}
