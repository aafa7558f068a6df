use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::channel::{generate_channel, ChannelConfig, Dataset, SpatialFrequencyCsi, Transformer, TruncatedCsi};
use crate::error::{Error, Result};
use crate::models::{AutoencoderSpec, ModelBundle, NoiseModel};
use crate::nn::{Scalar, Tensor};
use crate::seed::{rng_for, stream};

use super::metrics::{cosine_correlation, Aggregation, NmseAccumulator};

/// Which channel the reconstruction is compared against.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum ReferenceMode {
    /// The zero-padded truncated channel, so only feedback error is measured.
    #[default]
    #[serde(rename = "truncated-reference")]
    Truncated,
    /// The full generated channel, truncation loss included.
    #[serde(rename = "full-reference")]
    Full,
}

impl ReferenceMode {
    pub fn name(self) -> &'static str {
        match self {
            ReferenceMode::Truncated => "truncated-reference",
            ReferenceMode::Full => "full-reference",
        }
    }

    /// Accepts `truncated`/`full` with or without the `-reference` suffix.
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "truncated" | "truncated-reference" => Ok(Self::Truncated),
            "full" | "full-reference" => Ok(Self::Full),
            other => Err(Error::Config(format!("unknown reference mode `{other}`"))),
        }
    }
}

/// Where the full-reference channels come from: the generator settings and
/// the index of the first test sample.
#[derive(Debug, Clone, Copy)]
pub struct FullReference<'a> {
    pub channel: &'a ChannelConfig,
    pub first_index: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSettings {
    pub snr_db: Vec<f64>,
    pub reference_mode: ReferenceMode,
    pub aggregation: Aggregation,
    /// Run the DNNet on noisy codewords.
    pub use_dnnet: bool,
    /// Run the DNNet on the noise-free pass too.
    pub noise_free_dnnet: bool,
    pub seed: u64,
    /// Identifier recorded with every row, usually the checkpoint file name.
    pub checkpoint: String,
}

impl Default for EvalSettings {
    fn default() -> Self {
        Self {
            snr_db: vec![0.0, 10.0, 20.0, 30.0],
            reference_mode: ReferenceMode::Truncated,
            aggregation: Aggregation::RatioThenMean,
            use_dnnet: true,
            noise_free_dnnet: false,
            seed: 1,
            checkpoint: String::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub gamma: f64,
    /// `None` for the noise-free pass.
    pub snr_db: Option<f64>,
    pub nmse_db: f64,
    pub rho: f64,
    pub samples: usize,
    /// Samples left out because the reference had zero norm.
    pub skipped: usize,
    pub reference_mode: ReferenceMode,
    pub checkpoint: String,
    pub seed: u64,
}

impl MetricsRecord {
    fn sort_key(&self) -> (f64, f64) {
        (self.gamma, self.snr_db.unwrap_or(f64::INFINITY))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub records: Vec<MetricsRecord>,
}

impl MetricsReport {
    pub fn extend(&mut self, other: MetricsReport) {
        self.records.extend(other.records);
    }

    /// Records ordered by `(gamma, snr_db)`, the noise-free pass last.
    pub fn sorted(&self) -> Vec<&MetricsRecord> {
        let mut rows: Vec<_> = self.records.iter().collect();
        rows.sort_by(|a, b| {
            let (ka, kb) = (a.sort_key(), b.sort_key());
            ka.0.total_cmp(&kb.0).then(ka.1.total_cmp(&kb.1))
        });
        rows
    }

    pub fn find(&self, gamma: f64, snr_db: Option<f64>) -> Option<&MetricsRecord> {
        self.records.iter().find(|r| r.gamma == gamma && r.snr_db == snr_db)
    }
}

/// Anything that maps scaled truncated channels to reconstructions through
/// a codeword of `n_cw` reals.
pub trait FeedbackChain<T: Scalar> {
    fn autoencoder_spec(&self) -> AutoencoderSpec;

    fn has_dnnet(&self) -> bool;

    /// `noise` holds one row per sample and is added to the normalized codewords.
    fn reconstruct(&self, x: &Tensor<T>, noise: Option<&Tensor<T>>, use_dnnet: bool) -> Result<Tensor<T>>;
}

impl<T: Scalar> FeedbackChain<T> for ModelBundle<T> {
    fn autoencoder_spec(&self) -> AutoencoderSpec {
        self.spec
    }

    fn has_dnnet(&self) -> bool {
        self.dnnet.is_some()
    }

    fn reconstruct(&self, x: &Tensor<T>, noise: Option<&Tensor<T>>, use_dnnet: bool) -> Result<Tensor<T>> {
        ModelBundle::reconstruct(self, x, noise, use_dnnet).map_err(|e| match e {
            Error::Usage(m) => Error::Config(m),
            other => other,
        })
    }
}

/// Runs the feedback chain over `test` once per requested SNR and once
/// without noise, and aggregates NMSE and ρ against the chosen reference.
pub fn evaluate_bundle<T: Scalar, C: FeedbackChain<T>>(
    bundle: &C,
    test: &Dataset,
    settings: &EvalSettings,
    full: Option<FullReference<'_>>,
) -> Result<MetricsReport> {
    let spec = bundle.autoencoder_spec();
    let h = &test.header;
    if [h.n_p as usize, h.n_t as usize] != [spec.n_p, spec.n_t] {
        return Err(Error::dims(
            "evaluation dataset",
            &[h.n_p as usize, h.n_t as usize],
            &[spec.n_p, spec.n_t],
        ));
    }
    if (settings.use_dnnet || settings.noise_free_dnnet) && !bundle.has_dnnet() {
        return Err(Error::Config(
            "evaluation with the DNNet engaged needs a bundle with a DNNet".into(),
        ));
    }
    if settings.snr_db.iter().any(|s| !s.is_finite()) {
        return Err(Error::Config(format!(
            "evaluation SNRs must be finite, got {:?}",
            settings.snr_db
        )));
    }
    let tr = Transformer::new(h.n_c as usize, spec.n_t)?;
    let references = reference_channels(test, &tr, settings.reference_mode, full)?;
    let x = test.to_tensor::<T>()?;

    let mut passes: Vec<(Option<f64>, Option<Tensor<T>>, bool)> = settings
        .snr_db
        .iter()
        .map(|&snr| {
            let mut rng = rng_for(&[settings.seed, stream::NOISE_EVAL, snr.to_bits()]);
            let noise = NoiseModel::new(snr, spec.n_cw).sample(&[test.len(), spec.n_cw], &mut rng);
            (Some(snr), Some(noise), settings.use_dnnet)
        })
        .collect();
    passes.push((None, None, settings.noise_free_dnnet));

    let mut report = MetricsReport::default();
    for (snr, noise, use_dnnet) in passes {
        let pred = bundle.reconstruct(&x, noise.as_ref(), use_dnnet)?;
        let (acc, rho) = score(&pred, test, &references, &tr, settings.aggregation)?;
        if acc.skipped() > 0 {
            log::warn!("{} test samples skipped for zero-norm reference", acc.skipped());
        }
        report.records.push(MetricsRecord {
            gamma: spec.gamma(),
            snr_db: snr,
            nmse_db: acc.db()?,
            rho,
            samples: acc.count(),
            skipped: acc.skipped(),
            reference_mode: settings.reference_mode,
            checkpoint: settings.checkpoint.clone(),
            seed: settings.seed,
        });
    }
    Ok(report)
}

fn reference_channels(
    test: &Dataset,
    tr: &Transformer,
    mode: ReferenceMode,
    full: Option<FullReference<'_>>,
) -> Result<Vec<SpatialFrequencyCsi>> {
    match mode {
        ReferenceMode::Truncated => (0..test.len())
            .map(|i| tr.inverse_pipeline(&test.truncated(i)))
            .collect(),
        ReferenceMode::Full => {
            let full =
                full.ok_or_else(|| Error::Config("full-reference evaluation needs the channel configuration".into()))?;
            let h = &test.header;
            let c = full.channel;
            if [c.n_c, c.n_t, c.n_p] != [h.n_c as usize, h.n_t as usize, h.n_p as usize]
                || c.master_seed != h.master_seed
            {
                return Err(Error::Config(
                    "channel configuration does not match the test dataset".into(),
                ));
            }
            Ok((0..test.len() as u64)
                .map(|i| generate_channel(c, full.first_index + i))
                .collect())
        }
    }
}

fn score<T: Scalar>(
    pred: &Tensor<T>,
    test: &Dataset,
    references: &[SpatialFrequencyCsi],
    tr: &Transformer,
    aggregation: Aggregation,
) -> Result<(NmseAccumulator, f64)> {
    let h = &test.header;
    let bounds = h.bounds();
    let mut acc = NmseAccumulator::new(aggregation);
    let mut rho_sum = 0.0;
    for (i, truth) in references.iter().enumerate() {
        let values = pred.item(i).iter().map(|v| v.as_f64()).collect();
        let estimate = tr.inverse_pipeline(&TruncatedCsi::new(h.n_p as usize, h.n_t as usize, values, bounds)?)?;
        let reference = truth.0.frobenius_sq();
        if reference == 0.0 {
            acc.push(0.0, 0.0);
            continue;
        }
        match cosine_correlation(truth, &estimate) {
            Ok(rho) => rho_sum += rho,
            Err(Error::DegenerateSample(_)) => {
                acc.push(0.0, 0.0);
                continue;
            }
            Err(e) => return Err(e),
        }
        acc.push(truth.0.distance_sq(&estimate.0)?, reference);
    }
    let rho = if acc.count() == 0 {
        0.0
    } else {
        rho_sum / acc.count() as f64
    };
    Ok((acc, rho))
}

/// Output layout for [`emit_report`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReportFormat {
    Rows,
    CurveData,
}

pub const ROWS_HEADER: &str = "gamma,snr_db,nmse_db,rho,samples,reference_mode,checkpoint,seed";

fn snr_label(snr: Option<f64>) -> String {
    snr.map_or_else(|| "inf".to_string(), |s| s.to_string())
}

pub fn render_rows(report: &MetricsReport) -> String {
    let mut out = String::from(ROWS_HEADER);
    out.push('\n');
    for r in report.sorted() {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.gamma,
            snr_label(r.snr_db),
            r.nmse_db,
            r.rho,
            r.samples,
            r.reference_mode.name(),
            r.checkpoint,
            r.seed
        );
    }
    out
}

/// One block per (metric, gamma, checkpoint, reference): a comment line
/// naming it, then `snr_db value` pairs in ascending SNR with the noise-free
/// pass last as `inf`. Blocks are separated by a blank line.
pub fn render_curve_data(report: &MetricsReport) -> String {
    let rows = report.sorted();
    let mut groups: Vec<Vec<&MetricsRecord>> = Vec::new();
    for r in rows {
        match groups.iter_mut().find(|g| {
            let f = g[0];
            f.gamma == r.gamma && f.checkpoint == r.checkpoint && f.reference_mode == r.reference_mode
        }) {
            Some(g) => g.push(r),
            None => groups.push(vec![r]),
        }
    }
    let mut out = String::new();
    for metric in ["nmse_db", "rho"] {
        for g in &groups {
            let f = g[0];
            if !out.is_empty() {
                out.push('\n');
            }
            let _ = writeln!(
                out,
                "# metric={metric} gamma={} reference={} checkpoint={}",
                f.gamma,
                f.reference_mode.name(),
                f.checkpoint
            );
            for r in g {
                let value = if metric == "rho" { r.rho } else { r.nmse_db };
                let _ = writeln!(out, "{} {}", snr_label(r.snr_db), value);
            }
        }
    }
    out
}

pub fn emit_report(report: &MetricsReport, path: &Path, format: ReportFormat) -> Result<()> {
    let text = match format {
        ReportFormat::Rows => render_rows(report),
        ReportFormat::CurveData => render_curve_data(report),
    };
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}
