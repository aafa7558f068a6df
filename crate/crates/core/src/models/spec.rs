use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Shapes of the autoencoder: input `2 x n_p x n_t`, codeword of `n_cw` reals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AutoencoderSpec {
    pub n_p: usize,
    pub n_t: usize,
    pub n_cw: usize,
    /// Number of residual refinement blocks in the decoder.
    #[serde(default = "default_refine_blocks")]
    pub refine_blocks: usize,
}

fn default_refine_blocks() -> usize {
    2
}

impl AutoencoderSpec {
    pub fn new(n_p: usize, n_t: usize, n_cw: usize) -> Result<Self> {
        let spec = Self {
            n_p,
            n_t,
            n_cw,
            refine_blocks: default_refine_blocks(),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn input_len(&self) -> usize {
        2 * self.n_p * self.n_t
    }

    pub fn input_dims(&self) -> [usize; 3] {
        [2, self.n_p, self.n_t]
    }

    /// Compression ratio `n_cw / (2 * n_p * n_t)`.
    pub fn gamma(&self) -> f64 {
        self.n_cw as f64 / self.input_len() as f64
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_p == 0 || self.n_t == 0 {
            return Err(Error::Config("autoencoder needs n_p, n_t >= 1".into()));
        }
        if self.n_cw == 0 || self.n_cw > self.input_len() {
            return Err(Error::Config(format!(
                "codeword length must satisfy 1 <= n_cw <= 2*n_p*n_t = {} (compression ratio gamma = n_cw/(2*n_p*n_t) <= 1), got n_cw = {}",
                self.input_len(),
                self.n_cw
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DnnetSpec {
    /// Total layer count including the input and output layers.
    pub layers: usize,
    pub hidden_width: usize,
    /// Target mean activation of each hidden neuron.
    pub sparsity_target: f64,
    /// Weight of the KL sparsity penalty in the training loss.
    pub kl_weight: f64,
}

impl Default for DnnetSpec {
    fn default() -> Self {
        Self {
            layers: 4,
            hidden_width: 1024,
            sparsity_target: 0.05,
            kl_weight: 1e-3,
        }
    }
}

impl DnnetSpec {
    pub fn hidden_layers(&self) -> usize {
        self.layers - 2
    }

    pub fn validate(&self, n_cw: usize) -> Result<()> {
        if self.layers < 3 {
            return Err(Error::Config(format!(
                "DNNet needs at least 3 layers, got {}",
                self.layers
            )));
        }
        if self.hidden_width < n_cw {
            return Err(Error::Config(format!(
                "DNNet hidden width {} is below the codeword length {n_cw}",
                self.hidden_width
            )));
        }
        if !(self.sparsity_target > 0.0 && self.sparsity_target < 1.0) {
            return Err(Error::Config(format!(
                "sparsity target must lie in (0, 1), got {}",
                self.sparsity_target
            )));
        }
        if !(self.kl_weight >= 0.0 && self.kl_weight.is_finite()) {
            return Err(Error::Config(format!(
                "kl_weight must be non-negative, got {}",
                self.kl_weight
            )));
        }
        Ok(())
    }
}
