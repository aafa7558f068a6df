//! End-to-end orchestration driven by one [`RunConfig`]: dataset
//! generation, the training stages and evaluation sweeps.
//!
//! Run directory layout, one subdirectory per compression ratio:
//!
//! ```text
//! <run_dir>/ncw-256/pretrain-ae.ckpt   encoder + decoder
//! <run_dir>/ncw-256/pretrain-dn.ckpt   encoder + decoder + DNNet
//! <run_dir>/ncw-256/joint.ckpt         all three after joint training
//! <run_dir>/ncw-256/<stage>.manifest.toml
//! <run_dir>/reports/<name>.csv, <name>.curve.txt
//! ```

mod config;

use std::fs;
use std::path::{Path, PathBuf};

use log::info;
use serde::{Deserialize, Serialize};

use crate::channel::{build_dataset, DatasetSet, Split};
use crate::error::{Error, Result};
use crate::evaluation::{
    emit_report, evaluate_bundle, EvalSettings, FullReference, MetricsReport, ReferenceMode, ReportFormat,
};
use crate::models::{checkpoint, AutoencoderSpec, ModelBundle};
use crate::nn::Scalar;
use crate::seed::{rng_for, stream};
use crate::training::{
    generate_dnnet_dataset, joint_train, pretrain_autoencoder, pretrain_dnnet, Precision, Stage, StageResult,
};

pub use config::{bundle_label, AutoencoderSection, DnnetSection, EvaluationSection, PathsSection, RunConfig};

/// Generates the three dataset splits into `paths.data_dir` and returns them
/// with a printable summary.
pub fn cmd_generate(config: &RunConfig) -> Result<(DatasetSet, String)> {
    let set = build_dataset(&config.channel, &config.dataset, None, &config.paths.data_dir)?;
    let mut summary = String::new();
    for (split, path) in Split::ALL.iter().zip(DatasetSet::paths(&config.paths.data_dir)) {
        let h = set.get(*split).header;
        summary.push_str(&format!(
            "{}: {} samples, n_t={} n_c={} n_p={}, bounds [{}, {}], seed {} -> {}\n",
            split.name(),
            h.count,
            h.n_t,
            h.n_c,
            h.n_p,
            h.scale_min,
            h.scale_max,
            h.master_seed,
            path.display()
        ));
    }
    Ok((set, summary))
}

/// Which stages `cmd_train` runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StageSelection {
    One(Stage),
    All,
}

impl StageSelection {
    pub fn parse(name: &str) -> Result<Self> {
        if name == "all" {
            return Ok(Self::All);
        }
        Stage::parse(name).map(Self::One)
    }

    fn stages(self) -> Vec<Stage> {
        match self {
            Self::One(stage) => vec![stage],
            Self::All => Stage::ALL.to_vec(),
        }
    }
}

/// Written next to every stage checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageManifest {
    pub stage: Stage,
    pub gamma: f64,
    pub n_cw: usize,
    pub master_seed: u64,
    /// Checkpoint path relative to the run directory.
    pub checkpoint: String,
    pub result: StageResult,
}

impl StageManifest {
    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::Format {
            path: path.to_path_buf(),
            message: e.message().to_string(),
        })
    }
}

pub fn checkpoint_path(bundle_dir: &Path, stage: Stage) -> PathBuf {
    bundle_dir.join(format!("{}.ckpt", stage.name()))
}

pub fn manifest_path(bundle_dir: &Path, stage: Stage) -> PathBuf {
    bundle_dir.join(format!("{}.manifest.toml", stage.name()))
}

/// Runs the selected stages for every configured compression ratio.
///
/// Stage outputs are never overwritten. Rerunning a finished stage trains it
/// again and checks the result is byte-identical to the stored checkpoint.
pub fn cmd_train(config: &RunConfig, selection: StageSelection) -> Result<Vec<StageManifest>> {
    let stages = selection.stages();
    let first = stages[0];
    for &gamma in &config.evaluation.gammas {
        check_prerequisites(config, gamma, first)?;
    }
    let data = read_datasets(config)?;
    let mut manifests = Vec::new();
    for &gamma in &config.evaluation.gammas {
        for &stage in &stages {
            let manifest = match config.train.precision {
                Precision::F32 => run_stage::<f32>(config, &data, gamma, stage)?,
                Precision::F64 => run_stage::<f64>(config, &data, gamma, stage)?,
            };
            manifests.push(manifest);
        }
    }
    Ok(manifests)
}

fn read_datasets(config: &RunConfig) -> Result<DatasetSet> {
    let dir = &config.paths.data_dir;
    for path in DatasetSet::paths(dir) {
        if !path.exists() {
            return Err(Error::MissingStage {
                stage: "generate",
                path,
            });
        }
    }
    DatasetSet::read(dir)
}

fn check_prerequisites(config: &RunConfig, gamma: f64, stage: Stage) -> Result<()> {
    let dir = config.bundle_dir(gamma)?;
    let needed: &[Stage] = match stage {
        Stage::PretrainAe => &[],
        Stage::PretrainDn => &[Stage::PretrainAe],
        Stage::Joint => &[Stage::PretrainAe, Stage::PretrainDn],
    };
    for &prior in needed {
        let path = checkpoint_path(&dir, prior);
        if !path.exists() {
            return Err(Error::MissingStage {
                stage: prior.name(),
                path,
            });
        }
    }
    Ok(())
}

fn run_stage<T: Scalar>(config: &RunConfig, data: &DatasetSet, gamma: f64, stage: Stage) -> Result<StageManifest> {
    let spec = config.autoencoder_spec(gamma)?;
    let dir = config.bundle_dir(gamma)?;
    check_prerequisites(config, gamma, stage)?;
    let tc = &config.train;
    info!("stage {} for gamma {gamma} (n_cw {})", stage.name(), spec.n_cw);
    let (bundle, mut result) = match stage {
        Stage::PretrainAe => {
            let mut bundle = ModelBundle::<T>::init_autoencoder(spec, config.master_seed)?;
            let result = pretrain_autoencoder(&mut bundle, &data.train, &data.val, tc)?;
            (bundle, result)
        }
        Stage::PretrainDn => {
            let mut bundle = load_stage::<T>(&dir, Stage::PretrainAe, &spec)?;
            bundle.init_dnnet(config.dnnet_spec(), config.master_seed)?;
            let mut rng = rng_for(&[config.master_seed, stream::NOISE_PAIRS]);
            let pairs = generate_dnnet_dataset(bundle.encoder()?, &data.train, &tc.snr_db, &mut rng)?;
            let result = pretrain_dnnet(&mut bundle, &pairs, &data.val, tc)?;
            (bundle, result)
        }
        Stage::Joint => {
            let mut bundle = load_stage::<T>(&dir, Stage::PretrainDn, &spec)?;
            let result = joint_train(&mut bundle, &data.train, &data.val, tc)?;
            (bundle, result)
        }
    };
    let ckpt = checkpoint_path(&dir, stage);
    let relative = format!(
        "{}/{}",
        bundle_label(&spec),
        ckpt.file_name().unwrap().to_string_lossy()
    );
    result.checkpoint = Some(ckpt.clone());
    let manifest = StageManifest {
        stage,
        gamma,
        n_cw: spec.n_cw,
        master_seed: config.master_seed,
        checkpoint: relative,
        result,
    };
    let bytes = checkpoint::to_bytes(&bundle);
    let manifest_file = manifest_path(&dir, stage);
    if ckpt.exists() {
        let existing = fs::read(&ckpt).map_err(|e| Error::io(&ckpt, e))?;
        if existing != bytes {
            return Err(Error::Usage(format!(
                "{} exists and differs from the retrained stage; stage outputs are not overwritten",
                ckpt.display()
            )));
        }
        info!("{} reproduced; keeping the stored outputs", ckpt.display());
        if manifest_file.exists() {
            let stored = StageManifest::read(&manifest_file)?;
            if stored.result.final_loss.to_bits() != manifest.result.final_loss.to_bits() {
                log::warn!(
                    "final loss {} differs from the stored manifest ({})",
                    manifest.result.final_loss,
                    stored.result.final_loss
                );
            }
            return Ok(stored);
        }
    } else {
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        fs::write(&ckpt, &bytes).map_err(|e| Error::io(&ckpt, e))?;
    }
    let text = toml::to_string(&manifest).map_err(|e| Error::Format {
        path: manifest_file.clone(),
        message: e.to_string(),
    })?;
    fs::write(&manifest_file, text).map_err(|e| Error::io(&manifest_file, e))?;
    Ok(manifest)
}

fn load_stage<T: Scalar>(dir: &Path, stage: Stage, spec: &AutoencoderSpec) -> Result<ModelBundle<T>> {
    let bundle = checkpoint::load::<T>(&checkpoint_path(dir, stage))?;
    if bundle.spec != *spec {
        return Err(Error::Config(format!(
            "{} holds a {:?} autoencoder but the configuration asks for {:?}",
            checkpoint_path(dir, stage).display(),
            bundle.spec,
            spec
        )));
    }
    Ok(bundle)
}

/// Options of the `evaluate` subcommand.
#[derive(Debug, Clone, Default)]
pub struct EvaluateOptions {
    /// A stage name (resolved per compression ratio) or a checkpoint path.
    /// Defaults to the joint stage.
    pub checkpoint: Option<String>,
    pub no_dnnet: bool,
    pub reference_mode: Option<ReferenceMode>,
    /// Report file stem, `report` by default.
    pub name: Option<String>,
}

/// Evaluates the selected bundles over the configured SNR sweep and writes
/// `<name>.csv` (rows) and `<name>.curve.txt` (curve data) under
/// `<run_dir>/reports`.
pub fn cmd_evaluate(config: &RunConfig, options: &EvaluateOptions) -> Result<(MetricsReport, [PathBuf; 2])> {
    let targets = resolve_checkpoints(config, options.checkpoint.as_deref())?;
    let test_path = config.paths.data_dir.join(Split::Test.file_name());
    if !test_path.exists() {
        return Err(Error::MissingStage {
            stage: "generate",
            path: test_path,
        });
    }
    let test = crate::channel::Dataset::read(&test_path)?;
    let ev = &config.evaluation;
    let full = FullReference {
        channel: &config.channel,
        first_index: config.dataset.start(Split::Test),
    };
    let mut report = MetricsReport::default();
    for (path, id) in targets {
        let settings = EvalSettings {
            snr_db: ev.snr_db.clone(),
            reference_mode: options.reference_mode.unwrap_or(ev.reference_mode),
            aggregation: ev.aggregation,
            use_dnnet: !options.no_dnnet,
            noise_free_dnnet: ev.noise_free_dnnet && !options.no_dnnet,
            seed: config.master_seed,
            checkpoint: id,
        };
        let part = match config.train.precision {
            Precision::F32 => evaluate_checkpoint::<f32>(&path, &test, &settings, full)?,
            Precision::F64 => evaluate_checkpoint::<f64>(&path, &test, &settings, full)?,
        };
        report.extend(part);
    }
    let name = options.name.as_deref().unwrap_or("report");
    let dir = config.paths.run_dir.join("reports");
    let rows = dir.join(format!("{name}.csv"));
    let curves = dir.join(format!("{name}.curve.txt"));
    emit_report(&report, &rows, ReportFormat::Rows)?;
    emit_report(&report, &curves, ReportFormat::CurveData)?;
    Ok((report, [rows, curves]))
}

fn evaluate_checkpoint<T: Scalar>(
    path: &Path,
    test: &crate::channel::Dataset,
    settings: &EvalSettings,
    full: FullReference<'_>,
) -> Result<MetricsReport> {
    let bundle = checkpoint::load::<T>(path)?;
    let needs_dnnet = settings.use_dnnet || settings.noise_free_dnnet;
    if needs_dnnet && bundle.dnnet.is_none() {
        return Err(Error::Config(format!(
            "{} has no DNNet; evaluate with --no-dnnet",
            path.display()
        )));
    }
    evaluate_bundle(&bundle, test, settings, Some(full))
}

/// `(path, report id)` for every checkpoint to evaluate.
fn resolve_checkpoints(config: &RunConfig, selector: Option<&str>) -> Result<Vec<(PathBuf, String)>> {
    let selector = selector.unwrap_or(Stage::Joint.name());
    if let Ok(stage) = Stage::parse(selector) {
        return config
            .evaluation
            .gammas
            .iter()
            .map(|&gamma| {
                let spec = config.autoencoder_spec(gamma)?;
                let path = checkpoint_path(&config.bundle_dir(gamma)?, stage);
                if !path.exists() {
                    return Err(Error::MissingStage {
                        stage: stage.name(),
                        path,
                    });
                }
                Ok((path, format!("{}/{}.ckpt", bundle_label(&spec), stage.name())))
            })
            .collect();
    }
    let path = PathBuf::from(selector);
    let id = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| selector.to_string());
    Ok(vec![(path, id)])
}
