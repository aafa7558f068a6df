use std::path::Path;

use csi_denoise::channel::{ScaleBounds, TruncatedCsi};
use csi_denoise::models::checkpoint;
use csi_denoise::models::{
    normalize_rows, normalize_rows_backward, AutoencoderSpec, Codeword, DnnetSpec, ModelBundle, PartMask,
};
use csi_denoise::nn::{mse_loss, Gradients, Layer, Mode, ParameterGroup, Tensor};
use csi_denoise::seed::rng_for;
use csi_denoise::Error;
use rand::Rng;

fn small_bundle(seed: u64) -> ModelBundle<f64> {
    let spec = AutoencoderSpec::new(4, 4, 8).unwrap();
    let mut b = ModelBundle::init_autoencoder(spec, seed).unwrap();
    b.init_dnnet(
        DnnetSpec {
            hidden_width: 16,
            ..Default::default()
        },
        seed,
    )
    .unwrap();
    b
}

fn small_f32(seed: u64) -> ModelBundle<f32> {
    checkpoint::from_bytes(&checkpoint::to_bytes(&small_bundle(seed)), Path::new("mem")).unwrap()
}

fn random_input(shape: &[usize], seed: u64) -> Tensor<f64> {
    let mut rng = rng_for(&[seed]);
    let n: usize = shape.iter().product();
    let data: Vec<f64> = (0..n).map(|_| rng.random_range(0.2..0.8)).collect();
    Tensor::new(shape, data).unwrap()
}

/// Full feedback chain loss: reconstruction MSE plus weighted KL sparsity.
/// Returns the loss and per-group gradients when requested.
fn chain_loss(
    b: &ModelBundle<f64>,
    x: &Tensor<f64>,
    noise: &Tensor<f64>,
    with_grads: bool,
) -> (f64, Vec<Gradients<f64>>) {
    let enc = b.encoder.as_ref().unwrap();
    let dec = b.decoder.as_ref().unwrap();
    let dn = b.dnnet.as_ref().unwrap();
    let (s, etape) = enc.forward(x, Mode::Train).unwrap();
    let (sn, norms) = normalize_rows(&s).unwrap();
    let received = sn.add(noise).unwrap();
    let (out, dtape) = dn.forward(&received, Mode::Train).unwrap();
    let (h, rtape) = dec.forward(&out.denoised, Mode::Train).unwrap();
    let mse = mse_loss(&h, x).unwrap();
    let (kl, taps) = dn.sparsity_penalty(&out, &dtape).unwrap();
    let lambda = dn.spec().kl_weight;
    let loss = mse.value + lambda * kl;
    if !with_grads {
        return (loss, vec![]);
    }
    let mut ge = Gradients::zeros_like(enc);
    let mut gd = Gradients::zeros_like(dec);
    let mut gn = Gradients::zeros_like(dn);
    let taps: Vec<_> = taps.into_iter().map(|(i, t)| (i, t.map(|v| v * lambda))).collect();
    let g = dec.backward(&rtape, &mse.grad, Some(&mut gd)).unwrap();
    let g = dn.backward(&dtape, &g, Some(&mut gn), &taps).unwrap();
    let g = normalize_rows_backward(&sn, &norms, &g);
    enc.backward(&etape, &g, Some(&mut ge)).unwrap();
    (loss, vec![ge, gd, gn])
}

fn group_params(b: &mut ModelBundle<f64>, group: usize) -> Vec<&mut Tensor<f64>> {
    match group {
        0 => b.encoder.as_mut().unwrap().params_mut(),
        1 => b.decoder.as_mut().unwrap().params_mut(),
        _ => b.dnnet.as_mut().unwrap().params_mut(),
    }
}

#[test]
fn chain_gradients_match_finite_differences() {
    let mut b = small_bundle(5);
    // Spread the parameters so pre-activations sit well away from the leaky
    // ReLU kink relative to the finite-difference step.
    let mut init = rng_for(&[9]);
    for group in 0..3 {
        for p in group_params(&mut b, group) {
            p.data_mut().iter_mut().for_each(|v| *v = init.random_range(-0.4..0.4));
        }
    }
    let x = random_input(&[3, 2, 4, 4], 6);
    let noise = random_input(&[3, 8], 7).map(|v| 0.05 * (v - 0.5));
    let (_, grads) = chain_loss(&b, &x, &noise, true);
    let h = 1e-5;
    let mut rng = rng_for(&[8]);
    for group in 0..3 {
        let n_tensors = grads[group].tensors.len();
        let mut analytic = Vec::new();
        let mut numeric = Vec::new();
        for _ in 0..40 {
            let ti = rng.random_range(0..n_tensors);
            let ei = rng.random_range(0..grads[group].tensors[ti].len());
            let orig = group_params(&mut b, group)[ti].data()[ei];
            group_params(&mut b, group)[ti].data_mut()[ei] = orig + h;
            let (lp, _) = chain_loss(&b, &x, &noise, false);
            group_params(&mut b, group)[ti].data_mut()[ei] = orig - h;
            let (lm, _) = chain_loss(&b, &x, &noise, false);
            group_params(&mut b, group)[ti].data_mut()[ei] = orig;
            analytic.push(grads[group].tensors[ti].data()[ei]);
            numeric.push((lp - lm) / (2.0 * h));
        }
        let diff: f64 = analytic
            .iter()
            .zip(&numeric)
            .map(|(a, n)| (a - n).powi(2))
            .sum::<f64>()
            .sqrt();
        let scale: f64 = numeric.iter().map(|n| n * n).sum::<f64>().sqrt().max(1e-12);
        assert!(diff / scale < 1e-6, "group {group}: relative error {}", diff / scale);
    }
}

#[test]
fn codeword_shapes_for_several_lengths() {
    for n_cw in [32, 256, 512] {
        let spec = AutoencoderSpec::new(32, 32, n_cw).unwrap();
        let b = ModelBundle::<f32>::init_autoencoder(spec, 1).unwrap();
        let x = Tensor::<f32>::full(&[2, 2, 32, 32], 0.5);
        let s = b.encoder().unwrap().infer(&x).unwrap();
        assert_eq!(s.shape(), &[2, n_cw]);
        let y = b.decoder().unwrap().infer(&s).unwrap();
        assert_eq!(y.shape(), &[2, 2, 32, 32]);
        assert!(y.data().iter().all(|&v| v > 0.0 && v < 1.0));
    }
}

#[test]
fn encoding_is_deterministic() {
    let spec = AutoencoderSpec::new(4, 8, 16).unwrap();
    let a = ModelBundle::<f64>::init_autoencoder(spec, 3).unwrap();
    let b = ModelBundle::<f64>::init_autoencoder(spec, 3).unwrap();
    let values: Vec<f64> = random_input(&[64], 2).into_data();
    let h = TruncatedCsi::new(4, 8, values, ScaleBounds::new(-1.0, 1.0).unwrap()).unwrap();
    let s1 = a.encoder().unwrap().encode(&h).unwrap();
    let s2 = a.encoder().unwrap().encode(&h).unwrap();
    let s3 = b.encoder().unwrap().encode(&h).unwrap();
    assert_eq!(s1, s2);
    assert_eq!(s1, s3);
    assert!(!s1.normalized);
    assert_eq!(s1.len(), 16);
}

#[test]
fn wrong_input_shape_is_rejected() {
    let b = small_bundle(1);
    let err = b.encoder().unwrap().infer(&Tensor::zeros(&[1, 2, 4, 5])).unwrap_err();
    assert!(matches!(err, Error::Dimension { .. }));
    let err = b.decoder().unwrap().infer(&Tensor::zeros(&[1, 9])).unwrap_err();
    assert!(matches!(err, Error::Dimension { .. }));
}

#[test]
fn zero_output_layer_passes_codeword_through() {
    let mut b = small_bundle(2);
    let dn = b.dnnet.as_mut().unwrap();
    if let Some(Layer::Dense(d)) = dn.net.layers.last_mut() {
        d.weight = Tensor::zeros(d.weight.shape());
        d.bias = Tensor::zeros(d.bias.shape());
    }
    let s = Codeword::new((0..8).map(|i| i as f64 * 0.1 - 0.3).collect());
    let (denoised, noise) = dn.denoise(&s).unwrap();
    assert_eq!(denoised.values, s.values);
    assert!(noise.values.iter().all(|&v| v == 0.0));
}

#[test]
fn skip_connection_identity() {
    let b = small_bundle(4);
    let dn = b.dnnet().unwrap();
    let s = Codeword::new(random_input(&[8], 9).into_data());
    let (denoised, noise) = dn.denoise(&s).unwrap();
    assert_eq!(dn.neu_forward(&s).unwrap(), noise);
    for ((d, n), r) in denoised.values.iter().zip(&noise.values).zip(&s.values) {
        assert!((d + n - r).abs() < 1e-12);
    }
}

#[test]
fn zero_refinement_blocks_are_identity() {
    let mut b = small_bundle(3);
    let s = random_input(&[2, 8], 4);
    let dec = b.decoder.as_mut().unwrap();
    let (head, _) = dec.head.forward(&s, Mode::Infer).unwrap();
    for block in &mut dec.blocks {
        for p in block.params_mut() {
            *p = Tensor::zeros(p.shape());
        }
    }
    let y = dec.infer(&s).unwrap();
    let expected = head.map(csi_denoise::nn::layers::sigmoid);
    assert_eq!(y.data(), expected.data());
}

#[test]
fn checkpoint_round_trip_restores_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.ckpt");
    let mut b = small_f32(11);
    b.steps = 42;
    checkpoint::save(&b, &path).unwrap();
    let loaded: ModelBundle<f32> = checkpoint::load(&path).unwrap();
    assert_eq!(loaded.steps, 42);
    assert_eq!(loaded.present(), PartMask::ALL);
    let x = random_input(&[2, 2, 4, 4], 1).cast::<f32>();
    let enc = |m: &ModelBundle<f32>| m.encoder().unwrap().infer(&x).unwrap();
    assert_eq!(enc(&b).data(), enc(&loaded).data());
    let s = enc(&b);
    assert_eq!(
        b.decoder().unwrap().infer(&s).unwrap().data(),
        loaded.decoder().unwrap().infer(&s).unwrap().data()
    );
    assert_eq!(
        b.dnnet().unwrap().infer(&s).unwrap().0.data(),
        loaded.dnnet().unwrap().infer(&s).unwrap().0.data()
    );
    assert_eq!(checkpoint::to_bytes(&loaded), std::fs::read(&path).unwrap());
}

#[test]
fn single_precision_checkpoint_round_trip() {
    let spec = AutoencoderSpec::new(4, 4, 8).unwrap();
    let b = ModelBundle::<f32>::init_autoencoder(spec, 2).unwrap();
    let bytes = checkpoint::to_bytes(&b);
    let loaded: ModelBundle<f32> = checkpoint::from_bytes(&bytes, Path::new("mem")).unwrap();
    assert_eq!(checkpoint::to_bytes(&loaded), bytes);
    assert!(loaded.dnnet.is_none());
}

#[test]
fn partial_load_touches_only_selected_parts() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("donor.ckpt");
    let donor = small_f32(21);
    checkpoint::save(&donor, &path).unwrap();
    let mut target = small_f32(22);
    let original = target.clone();
    checkpoint::load_into(&mut target, &path, PartMask::DNNET).unwrap();
    let s = random_input(&[2, 8], 3).cast::<f32>();
    assert_eq!(
        target.dnnet().unwrap().infer(&s).unwrap().0.data(),
        donor.dnnet().unwrap().infer(&s).unwrap().0.data()
    );
    assert_eq!(
        target.decoder().unwrap().infer(&s).unwrap().data(),
        original.decoder().unwrap().infer(&s).unwrap().data()
    );
}

#[test]
fn dnnet_only_checkpoint_merges() {
    let donor = small_bundle(31);
    let mut only = ModelBundle::empty(donor.spec);
    only.dnnet = donor.dnnet.clone();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("dn.ckpt");
    checkpoint::save(&only, &path).unwrap();
    let mut target = small_bundle(32);
    target.dnnet = None;
    checkpoint::load_into(&mut target, &path, PartMask::DNNET).unwrap();
    assert_eq!(target.present(), PartMask::ALL);
    assert!(checkpoint::load_into(&mut target, &path, PartMask::AUTOENCODER).is_err());
}

#[test]
fn damaged_checkpoints_are_reported() {
    let b = small_bundle(1);
    let bytes = checkpoint::to_bytes(&b);
    let mut bad = bytes.clone();
    bad[0] = b'X';
    let err = checkpoint::from_bytes::<f64>(&bad, Path::new("x")).unwrap_err();
    assert_eq!(err.category(), "format");
    for cut in [12, bytes.len() / 2, bytes.len() - 1] {
        let err = checkpoint::from_bytes::<f64>(&bytes[..cut], Path::new("x")).unwrap_err();
        assert_eq!(err.category(), "corruption", "cut at {cut}");
    }
    let mut long = bytes.clone();
    long.push(0);
    assert_eq!(
        checkpoint::from_bytes::<f64>(&long, Path::new("x"))
            .unwrap_err()
            .category(),
        "corruption"
    );
}
