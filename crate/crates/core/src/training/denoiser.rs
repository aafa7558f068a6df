use std::time::Instant;

use rand::Rng;

use crate::channel::Dataset;
use crate::error::{Error, Result};
use crate::evaluation::{truncated_nmse_db, Aggregation};
use crate::models::{normalize_rows, reconstruct, Encoder, ModelBundle, INFER_CHUNK};
use crate::nn::{mse_loss, AdamState, Gradients, Mode, Scalar, Tensor};
use crate::seed::{rng_for, stream};

use super::{check_dataset, epoch_batches, Best, SnrSpec, Stage, StageResult, TrainConfig};

/// Received/clean codeword pairs for DNNet training, `count x n_cw` each.
#[derive(Debug, Clone)]
pub struct DnnetPairs<T> {
    pub received: Tensor<T>,
    pub clean: Tensor<T>,
}

impl<T: Scalar> DnnetPairs<T> {
    pub fn len(&self) -> usize {
        self.clean.batch()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Normalized codewords of every sample in `data`, `count x n_cw`.
fn clean_codewords<T: Scalar>(encoder: &Encoder<T>, x: &Tensor<T>) -> Result<Tensor<T>> {
    let n = x.batch();
    let mut out = Vec::with_capacity(n * encoder.spec().n_cw);
    for start in (0..n).step_by(INFER_CHUNK) {
        let rows: Vec<usize> = (start..(start + INFER_CHUNK).min(n)).collect();
        let (s, _) = normalize_rows(&encoder.infer(&x.gather(&rows))?)?;
        out.extend_from_slice(s.data());
    }
    Tensor::new(&[n, encoder.spec().n_cw], out)
}

/// Encodes and normalizes every sample and superimposes noise drawn at
/// `snr`, giving one `(received, clean)` pair per sample.
pub fn generate_dnnet_dataset<T: Scalar, R: Rng + ?Sized>(
    encoder: &Encoder<T>,
    data: &Dataset,
    snr: &SnrSpec,
    rng: &mut R,
) -> Result<DnnetPairs<T>> {
    snr.validate()?;
    check_dataset(&encoder.spec(), data, "pair source")?;
    let clean = clean_codewords(encoder, &data.to_tensor()?)?;
    let noise = snr.sample(clean.batch(), encoder.spec().n_cw, rng);
    Ok(DnnetPairs {
        received: clean.add(&noise)?,
        clean,
    })
}

/// Fixed noise used for validation of the DNNet and joint stages, one row per
/// validation sample.
pub fn validation_noise<T: Scalar>(config: &TrainConfig, rows: usize, n_cw: usize) -> Tensor<T> {
    config.snr_db.sample(
        rows,
        n_cw,
        &mut rng_for(&[config.master_seed, stream::NOISE_VALIDATION]),
    )
}

/// Trains the DNNet on `mse(s_hat, s) + kl_weight * sum of hidden-layer KL
/// penalties`. Model selection uses the reconstruction NMSE of the full chain
/// (encoder, normalization, validation noise, DNNet, decoder) on `val`.
pub fn pretrain_dnnet<T: Scalar>(
    bundle: &mut ModelBundle<T>,
    pairs: &DnnetPairs<T>,
    val: &Dataset,
    config: &TrainConfig,
) -> Result<StageResult> {
    config.validate()?;
    check_dataset(&bundle.spec, val, "validation")?;
    let n_cw = bundle.spec.n_cw;
    if pairs.clean.shape() != [pairs.len(), n_cw] || pairs.received.shape() != pairs.clean.shape() {
        return Err(Error::dims("DNNet pairs", pairs.clean.shape(), &[pairs.len(), n_cw]));
    }
    if pairs.len() < 2 {
        return Err(Error::InvalidBatch(pairs.len()));
    }
    let started = Instant::now();
    let steps_before = bundle.steps;
    let xv = val.to_tensor::<T>()?;
    let bounds = val.header.bounds();
    let noise_v = validation_noise::<T>(config, xv.batch(), n_cw);
    let (Some(encoder), Some(decoder), Some(dnnet)) =
        (bundle.encoder.as_ref(), bundle.decoder.as_ref(), bundle.dnnet.as_mut())
    else {
        return Err(Error::Usage(
            "DNNet pre-training needs an encoder, a decoder and a DNNet".into(),
        ));
    };
    dnnet.set_sparsity(config.sparsity_target, config.kl_weight)?;
    let validate = |dn: &_| -> Result<f64> {
        let y = reconstruct(encoder, decoder, Some(dn), &xv, Some(&noise_v))?;
        truncated_nmse_db(&y, &xv, bounds, Aggregation::RatioThenMean)
    };
    let mut opt = AdamState::new(&*dnnet, config.adam());
    let lambda = T::lit(config.kl_weight);
    let initial = validate(dnnet)?;
    let mut best = Best::new(initial, dnnet.clone());
    let mut loss_trace = Vec::new();
    let mut val_trace = Vec::new();
    let mut steps = 0;
    for epoch in 0..config.pretrain_epochs_dn {
        let (mut total, mut seen) = (0.0, 0usize);
        for rows in epoch_batches(
            pairs.len(),
            config.batch_size,
            config.master_seed,
            Stage::PretrainDn,
            epoch,
        ) {
            let received = pairs.received.gather(&rows);
            let clean = pairs.clean.gather(&rows);
            let (out, tape) = dnnet.forward(&received, Mode::Train)?;
            let mse = mse_loss(&out.denoised, &clean)?;
            let (kl, taps) = dnnet.sparsity_penalty(&out, &tape)?;
            let taps: Vec<_> = taps.into_iter().map(|(i, g)| (i, g.map(|v| v * lambda))).collect();
            let mut grads = Gradients::zeros_like(&*dnnet);
            dnnet.backward(&tape, &mse.grad, Some(&mut grads), &taps)?;
            opt.step(dnnet, &grads)?;
            dnnet.commit_stats(&tape);
            steps += 1;
            total += (mse.value.as_f64() + config.kl_weight * kl) * rows.len() as f64;
            seen += rows.len();
        }
        let epoch_loss = total / seen as f64;
        let nmse = validate(dnnet)?;
        log::info!(
            "pretrain-dn epoch {}: loss {epoch_loss:.6e}, val NMSE {nmse:.3} dB",
            epoch + 1
        );
        loss_trace.push(epoch_loss);
        val_trace.push(nmse);
        best.offer(nmse, epoch + 1, || dnnet.clone());
    }
    *dnnet = best.snapshot;
    bundle.steps = steps_before + steps;
    Ok(StageResult {
        stage: Stage::PretrainDn,
        final_loss: loss_trace.last().copied().unwrap_or(f64::NAN),
        val_nmse_db: best.nmse_db,
        initial_val_nmse_db: initial,
        best_epoch: best.epoch,
        epochs: loss_trace.len(),
        steps,
        wall_time_s: started.elapsed().as_secs_f64(),
        checkpoint: None,
        loss_trace,
        val_trace,
    })
}
