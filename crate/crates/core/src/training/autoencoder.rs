use std::time::Instant;

use crate::channel::Dataset;
use crate::error::{Error, Result};
use crate::evaluation::{truncated_nmse_db, Aggregation};
use crate::models::{normalize_rows, normalize_rows_backward, reconstruct, ModelBundle};
use crate::nn::{mse_loss, AdamState, Gradients, Mode, Scalar};

use super::{check_dataset, epoch_batches, Best, Stage, StageResult, TrainConfig};

/// Trains encoder and decoder on the noise-free reconstruction MSE through
/// the normalization layer. The parameters with the best validation NMSE
/// (including the initial ones) are kept.
pub fn pretrain_autoencoder<T: Scalar>(
    bundle: &mut ModelBundle<T>,
    train: &Dataset,
    val: &Dataset,
    config: &TrainConfig,
) -> Result<StageResult> {
    config.validate()?;
    check_dataset(&bundle.spec, train, "training")?;
    check_dataset(&bundle.spec, val, "validation")?;
    let started = Instant::now();
    let steps_before = bundle.steps;
    let x = train.to_tensor::<T>()?;
    let xv = val.to_tensor::<T>()?;
    let bounds = val.header.bounds();
    let (Some(encoder), Some(decoder)) = (bundle.encoder.as_mut(), bundle.decoder.as_mut()) else {
        return Err(Error::Usage(
            "autoencoder pre-training needs an encoder and a decoder".into(),
        ));
    };
    let mut enc_opt = AdamState::new(&*encoder, config.adam());
    let mut dec_opt = AdamState::new(&*decoder, config.adam());
    let validate = |enc: &_, dec: &_| -> Result<f64> {
        let y = reconstruct(enc, dec, None, &xv, None)?;
        truncated_nmse_db(&y, &xv, bounds, Aggregation::RatioThenMean)
    };
    let initial = validate(encoder, decoder)?;
    let mut best = Best::new(initial, (encoder.clone(), decoder.clone()));
    let mut loss_trace = Vec::new();
    let mut val_trace = Vec::new();
    let mut steps = 0;
    for epoch in 0..config.pretrain_epochs_ae {
        let (mut total, mut seen) = (0.0, 0usize);
        for rows in epoch_batches(
            x.batch(),
            config.batch_size,
            config.master_seed,
            Stage::PretrainAe,
            epoch,
        ) {
            let xb = x.gather(&rows);
            let (s, enc_tape) = encoder.forward(&xb, Mode::Train)?;
            let (sn, norms) = normalize_rows(&s)?;
            let (y, dec_tape) = decoder.forward(&sn, Mode::Train)?;
            let loss = mse_loss(&y, &xb)?;
            let mut dec_grads = Gradients::zeros_like(&*decoder);
            let mut enc_grads = Gradients::zeros_like(&*encoder);
            let g = decoder.backward(&dec_tape, &loss.grad, Some(&mut dec_grads))?;
            let g = normalize_rows_backward(&sn, &norms, &g);
            encoder.backward(&enc_tape, &g, Some(&mut enc_grads))?;
            dec_opt.step(decoder, &dec_grads)?;
            enc_opt.step(encoder, &enc_grads)?;
            encoder.commit_stats(&enc_tape);
            steps += 1;
            total += loss.value.as_f64() * rows.len() as f64;
            seen += rows.len();
        }
        let epoch_loss = total / seen as f64;
        let nmse = validate(encoder, decoder)?;
        log::info!(
            "pretrain-ae epoch {}: loss {epoch_loss:.6e}, val NMSE {nmse:.3} dB",
            epoch + 1
        );
        loss_trace.push(epoch_loss);
        val_trace.push(nmse);
        best.offer(nmse, epoch + 1, || (encoder.clone(), decoder.clone()));
    }
    (*encoder, *decoder) = best.snapshot;
    bundle.steps = steps_before + steps;
    Ok(StageResult {
        stage: Stage::PretrainAe,
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
