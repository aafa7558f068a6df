use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::channel::{ChannelConfig, SplitCounts};
use crate::error::{Error, Result};
use crate::evaluation::{Aggregation, ReferenceMode};
use crate::models::{AutoencoderSpec, DnnetSpec};
use crate::training::TrainConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AutoencoderSection {
    #[serde(default = "default_refine_blocks")]
    pub refine_blocks: usize,
}

fn default_refine_blocks() -> usize {
    2
}

impl Default for AutoencoderSection {
    fn default() -> Self {
        Self {
            refine_blocks: default_refine_blocks(),
        }
    }
}

/// DNNet shape. The sparsity target and KL weight live in `[train]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DnnetSection {
    pub layers: usize,
    pub hidden_width: usize,
}

impl Default for DnnetSection {
    fn default() -> Self {
        let d = DnnetSpec::default();
        Self {
            layers: d.layers,
            hidden_width: d.hidden_width,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvaluationSection {
    /// Compression ratios; one bundle is trained and evaluated per entry.
    pub gammas: Vec<f64>,
    pub snr_db: Vec<f64>,
    pub reference_mode: ReferenceMode,
    pub aggregation: Aggregation,
    /// Engage the DNNet on the noise-free pass as well.
    pub noise_free_dnnet: bool,
}

impl Default for EvaluationSection {
    fn default() -> Self {
        Self {
            gammas: vec![0.125],
            snr_db: vec![0.0, 10.0, 20.0, 30.0],
            reference_mode: ReferenceMode::Truncated,
            aggregation: Aggregation::RatioThenMean,
            noise_free_dnnet: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathsSection {
    pub data_dir: PathBuf,
    pub run_dir: PathBuf,
}

impl Default for PathsSection {
    fn default() -> Self {
        Self {
            data_dir: "data".into(),
            run_dir: "run".into(),
        }
    }
}

/// Everything one run needs, read from a single TOML file. Relative paths are
/// resolved against the file's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub master_seed: u64,
    pub channel: ChannelConfig,
    pub dataset: SplitCounts,
    #[serde(default)]
    pub autoencoder: AutoencoderSection,
    #[serde(default)]
    pub dnnet: DnnetSection,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub evaluation: EvaluationSection,
    #[serde(default)]
    pub paths: PathsSection,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut config = Self::parse(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        for dir in [&mut config.paths.data_dir, &mut config.paths.run_dir] {
            if dir.is_relative() {
                *dir = base.join(&*dir);
            }
        }
        Ok(config)
    }

    /// Parses and validates. `master_seed` may only be set at the top level.
    pub fn parse(text: &str) -> Result<Self> {
        let raw: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::Config(e.message().to_string()))?;
        for section in ["channel", "train"] {
            if raw
                .get(section)
                .and_then(|v| v.as_table())
                .is_some_and(|t| t.contains_key("master_seed"))
            {
                return Err(Error::Config(format!(
                    "{section}.master_seed: set master_seed once at the top level"
                )));
            }
        }
        let mut config: RunConfig = toml::from_str(text).map_err(|e| Error::Config(describe(&e)))?;
        config.channel.master_seed = config.master_seed;
        config.train.master_seed = config.master_seed;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        let ctx = |section: &str, e: Error| match e {
            Error::Config(m) => Error::Config(format!("[{section}] {m}")),
            other => other,
        };
        self.channel.validate().map_err(|e| ctx("channel", e))?;
        self.train.validate().map_err(|e| ctx("train", e))?;
        let d = &self.dataset;
        if d.train < 2 || d.val == 0 || d.test == 0 {
            return Err(Error::Config(format!(
                "[dataset] need train >= 2 and nonempty val/test splits, got {}/{}/{}",
                d.train, d.val, d.test
            )));
        }
        let ev = &self.evaluation;
        if ev.gammas.is_empty() {
            return Err(Error::Config(
                "[evaluation] gammas must list at least one compression ratio".into(),
            ));
        }
        if ev.snr_db.iter().any(|s| !s.is_finite()) {
            return Err(Error::Config(format!(
                "[evaluation] snr_db values must be finite, got {:?}",
                ev.snr_db
            )));
        }
        for &gamma in &ev.gammas {
            let spec = self.autoencoder_spec(gamma).map_err(|e| ctx("evaluation", e))?;
            self.dnnet_spec().validate(spec.n_cw).map_err(|e| ctx("dnnet", e))?;
        }
        Ok(())
    }

    /// Autoencoder shape for one compression ratio.
    pub fn autoencoder_spec(&self, gamma: f64) -> Result<AutoencoderSpec> {
        let input = 2 * self.channel.n_p * self.channel.n_t;
        let exact = gamma * input as f64;
        let n_cw = exact.round();
        if !(gamma > 0.0) || (exact - n_cw).abs() > 1e-9 * input as f64 {
            return Err(Error::Config(format!(
                "gamma {gamma} does not give a whole codeword length for 2*n_p*n_t = {input}"
            )));
        }
        let spec = AutoencoderSpec {
            n_p: self.channel.n_p,
            n_t: self.channel.n_t,
            n_cw: n_cw as usize,
            refine_blocks: self.autoencoder.refine_blocks,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn dnnet_spec(&self) -> DnnetSpec {
        DnnetSpec {
            layers: self.dnnet.layers,
            hidden_width: self.dnnet.hidden_width,
            sparsity_target: self.train.sparsity_target,
            kl_weight: self.train.kl_weight,
        }
    }

    /// Directory holding the stage outputs of one compression ratio.
    pub fn bundle_dir(&self, gamma: f64) -> Result<PathBuf> {
        Ok(self.paths.run_dir.join(bundle_label(&self.autoencoder_spec(gamma)?)))
    }
}

/// Run-relative name of a bundle directory, e.g. `ncw-256`.
pub fn bundle_label(spec: &AutoencoderSpec) -> String {
    format!("ncw-{}", spec.n_cw)
}

fn describe(e: &toml::de::Error) -> String {
    let message = e.message().trim_end();
    match e.span() {
        Some(span) => format!("{message} (at byte {})", span.start),
        None => message.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
master_seed = 7

[channel]
n_t = 8
n_c = 32
n_p = 8
num_paths = 3
delay_spread = 1.0

[dataset]
train = 20
val = 5
test = 5
"#;

    #[test]
    fn minimal_config_fills_defaults() {
        let c = RunConfig::parse(MINIMAL).unwrap();
        assert_eq!(c.channel.master_seed, 7);
        assert_eq!(c.train.master_seed, 7);
        assert_eq!(c.autoencoder_spec(0.125).unwrap().n_cw, 16);
        assert_eq!(c.dnnet_spec().sparsity_target, c.train.sparsity_target);
    }

    #[test]
    fn rejects_unknown_keys_and_nested_seeds() {
        assert!(RunConfig::parse(&format!("{MINIMAL}\n[extra]\nx = 1\n")).is_err());
        let bad = MINIMAL.replace("num_paths = 3", "num_paths = 3\ncolour = 1");
        assert!(RunConfig::parse(&bad).is_err());
        let seeded = MINIMAL.replace("num_paths = 3", "num_paths = 3\nmaster_seed = 2");
        let err = RunConfig::parse(&seeded).unwrap_err().to_string();
        assert!(err.contains("channel.master_seed"), "{err}");
    }

    #[test]
    fn rejects_oversized_codeword() {
        let text = format!("{MINIMAL}\n[evaluation]\ngammas = [2.0]\n");
        let err = RunConfig::parse(&text).unwrap_err().to_string();
        assert!(err.contains("n_cw <= 2*n_p*n_t"), "{err}");
    }

    #[test]
    fn rejects_fractional_codeword() {
        let text = format!("{MINIMAL}\n[evaluation]\ngammas = [0.3]\n");
        assert!(RunConfig::parse(&text).is_err());
    }

    #[test]
    fn rejects_tiny_batch() {
        let text = format!("{MINIMAL}\n[train]\nbatch_size = 1\n");
        let err = RunConfig::parse(&text).unwrap_err().to_string();
        assert!(err.contains("batch_size"), "{err}");
    }
}
