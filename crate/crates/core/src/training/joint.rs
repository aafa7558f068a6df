use std::time::Instant;

use crate::channel::Dataset;
use crate::error::{Error, Result};
use crate::evaluation::{truncated_nmse_db, Aggregation};
use crate::models::{normalize_rows, normalize_rows_backward, reconstruct, ModelBundle, PartMask};
use crate::nn::{mse_loss, AdamState, Gradients, Mode, ParameterGroup, Scalar};
use crate::seed::{rng_for, stream};

use super::{check_dataset, epoch_batches, validation_noise, Best, Stage, StageResult, TrainConfig};

/// Trains the connected chain encoder -> normalization -> noise -> DNNet ->
/// decoder. Epochs alternate between a DNNet-active phase (autoencoder
/// frozen, KL penalty on) and an autoencoder-active phase (DNNet frozen and
/// run with its running statistics), switching every
/// `alternation_period_epochs`, starting with the DNNet. Noise is drawn fresh
/// for every batch.
pub fn joint_train<T: Scalar>(
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
    let n_cw = bundle.spec.n_cw;
    let x = train.to_tensor::<T>()?;
    let xv = val.to_tensor::<T>()?;
    let bounds = val.header.bounds();
    let noise_v = validation_noise::<T>(config, xv.batch(), n_cw);
    let (Some(encoder), Some(decoder), Some(dnnet)) =
        (bundle.encoder.as_mut(), bundle.decoder.as_mut(), bundle.dnnet.as_mut())
    else {
        return Err(Error::Usage(
            "joint training needs pre-trained encoder, decoder and DNNet".into(),
        ));
    };
    dnnet.set_sparsity(config.sparsity_target, config.kl_weight)?;
    let validate = |enc: &_, dec: &_, dn: &_| -> Result<f64> {
        let y = reconstruct(enc, dec, Some(dn), &xv, Some(&noise_v))?;
        truncated_nmse_db(&y, &xv, bounds, Aggregation::RatioThenMean)
    };
    let mut enc_opt = AdamState::new(&*encoder, config.adam());
    let mut dec_opt = AdamState::new(&*decoder, config.adam());
    let mut dn_opt = AdamState::new(&*dnnet, config.adam());
    let lambda = T::lit(config.kl_weight);
    let initial = validate(encoder, decoder, dnnet)?;
    let mut best = Best::new(initial, (encoder.clone(), decoder.clone(), dnnet.clone()));
    let mut loss_trace = Vec::new();
    let mut val_trace = Vec::new();
    let mut steps = 0;
    for epoch in 0..config.joint_epochs {
        let dnnet_active = (epoch / config.alternation_period_epochs) % 2 == 0;
        encoder.set_frozen(dnnet_active);
        decoder.set_frozen(dnnet_active);
        dnnet.set_frozen(!dnnet_active);
        let (mut total, mut seen) = (0.0, 0usize);
        let batches = epoch_batches(x.batch(), config.batch_size, config.master_seed, Stage::Joint, epoch);
        for (b, rows) in batches.into_iter().enumerate() {
            let xb = x.gather(&rows);
            let mut rng = rng_for(&[config.master_seed, stream::NOISE_JOINT, epoch as u64, b as u64]);
            let noise = config.snr_db.sample::<T, _>(rows.len(), n_cw, &mut rng);
            let loss = if dnnet_active {
                let (sn, _) = normalize_rows(&encoder.infer(&xb)?)?;
                let (out, dn_tape) = dnnet.forward(&sn.add(&noise)?, Mode::Train)?;
                let (y, dec_tape) = decoder.forward(&out.denoised, Mode::Train)?;
                let mse = mse_loss(&y, &xb)?;
                let (kl, taps) = dnnet.sparsity_penalty(&out, &dn_tape)?;
                let taps: Vec<_> = taps.into_iter().map(|(i, g)| (i, g.map(|v| v * lambda))).collect();
                let g = decoder.backward(&dec_tape, &mse.grad, None)?;
                let mut grads = Gradients::zeros_like(&*dnnet);
                dnnet.backward(&dn_tape, &g, Some(&mut grads), &taps)?;
                dn_opt.step(dnnet, &grads)?;
                dnnet.commit_stats(&dn_tape);
                mse.value.as_f64() + config.kl_weight * kl
            } else {
                let (s, enc_tape) = encoder.forward(&xb, Mode::Train)?;
                let (sn, norms) = normalize_rows(&s)?;
                let (out, dn_tape) = dnnet.forward(&sn.add(&noise)?, Mode::Infer)?;
                let (y, dec_tape) = decoder.forward(&out.denoised, Mode::Train)?;
                let mse = mse_loss(&y, &xb)?;
                let mut dec_grads = Gradients::zeros_like(&*decoder);
                let mut enc_grads = Gradients::zeros_like(&*encoder);
                let g = decoder.backward(&dec_tape, &mse.grad, Some(&mut dec_grads))?;
                let g = dnnet.backward(&dn_tape, &g, None, &[])?;
                let g = normalize_rows_backward(&sn, &norms, &g);
                encoder.backward(&enc_tape, &g, Some(&mut enc_grads))?;
                dec_opt.step(decoder, &dec_grads)?;
                enc_opt.step(encoder, &enc_grads)?;
                encoder.commit_stats(&enc_tape);
                mse.value.as_f64()
            };
            steps += 1;
            total += loss * rows.len() as f64;
            seen += rows.len();
        }
        let epoch_loss = total / seen as f64;
        let nmse = validate(encoder, decoder, dnnet)?;
        let active = if dnnet_active { "dnnet" } else { "autoencoder" };
        log::info!(
            "joint epoch {} ({active} active): loss {epoch_loss:.6e}, val NMSE {nmse:.3} dB",
            epoch + 1
        );
        loss_trace.push(epoch_loss);
        val_trace.push(nmse);
        best.offer(nmse, epoch + 1, || (encoder.clone(), decoder.clone(), dnnet.clone()));
    }
    (*encoder, *decoder, *dnnet) = best.snapshot;
    bundle.freeze(PartMask {
        encoder: false,
        decoder: false,
        dnnet: false,
    });
    bundle.steps = steps_before + steps;
    Ok(StageResult {
        stage: Stage::Joint,
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
