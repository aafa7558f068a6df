use csi_denoise::channel::{
    dft_matrix, generate_channel, generate_dataset, inverse_pipeline, to_angular_delay, truncate_and_scale,
    ChannelConfig, DelayGrid, ScaleBounds, SplitCounts, Transformer,
};

fn energy_fraction_in_band(cfg: &ChannelConfig, samples: u64) -> f64 {
    let tr = Transformer::new(cfg.n_c, cfg.n_t).unwrap();
    let mut acc = 0.0;
    for i in 0..samples {
        let ad = tr.to_angular_delay(&generate_channel(cfg, i)).unwrap();
        let kept: f64 = ad.0.data()[..cfg.n_p * cfg.n_t].iter().map(|z| z.norm_sqr()).sum();
        acc += kept / ad.0.frobenius_sq();
    }
    acc / samples as f64
}

#[test]
fn angular_delay_energy_concentrates_in_first_rows() {
    let cfg = ChannelConfig::desk_scale(1);
    let frac = energy_fraction_in_band(&cfg, 200);
    println!("in-band energy fraction: {frac:.4}");
    assert!(frac > 0.95, "in-band energy fraction {frac}");
}

#[test]
fn generated_channels_survive_the_transform_round_trip() {
    let cfg = ChannelConfig::desk_scale(2);
    let tr = Transformer::new(cfg.n_c, cfg.n_t).unwrap();
    for i in 0..10 {
        let h = generate_channel(&cfg, i);
        let ad = tr.to_angular_delay(&h).unwrap();
        let rel = (ad.0.frobenius_sq() - h.0.frobenius_sq()).abs() / h.0.frobenius_sq();
        assert!(rel < 1e-10);
        let back = tr.to_spatial_frequency(&ad).unwrap();
        assert!(back.0.distance_sq(&h.0).unwrap().sqrt() / h.0.frobenius_sq().sqrt() < 1e-10);
    }
}

#[test]
fn fft_transform_agrees_with_dft_matrices_at_desk_scale() {
    let cfg = ChannelConfig::desk_scale(8);
    let h = generate_channel(&cfg, 3);
    let oracle = dft_matrix(cfg.n_c)
        .unwrap()
        .matmul(&h.0)
        .unwrap()
        .matmul(&dft_matrix(cfg.n_t).unwrap().conj_transpose())
        .unwrap();
    let got = to_angular_delay(&h).unwrap();
    assert!(got.0.max_abs_diff(&oracle) < 1e-8);
}

#[test]
fn half_spread_integer_channels_invert_exactly() {
    let cfg = ChannelConfig {
        delay_spread: 0.5,
        delay_grid: DelayGrid::Integer,
        ..ChannelConfig::desk_scale(5)
    };
    for i in 0..5 {
        let h = generate_channel(&cfg, i);
        let ad = to_angular_delay(&h).unwrap();
        let t = truncate_and_scale(&ad, cfg.n_p, ScaleBounds::new(-100.0, 100.0).unwrap()).unwrap();
        let back = inverse_pipeline(&t, cfg.n_c).unwrap();
        let rel = back.0.distance_sq(&h.0).unwrap().sqrt() / h.0.frobenius_sq().sqrt();
        assert!(rel < 1e-6, "sample {i}: {rel}");
    }
}

#[test]
fn scaled_payload_statistics() {
    let cfg = ChannelConfig::desk_scale(1);
    let counts = SplitCounts {
        train: 200,
        val: 50,
        test: 50,
    };
    let set = generate_dataset(&cfg, &counts, None).unwrap();
    let p = &set.train.payload;
    let mean = p.iter().map(|&v| v as f64).sum::<f64>() / p.len() as f64;
    let var = p.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / p.len() as f64;
    println!(
        "bounds [{:.3}, {:.3}] mean {mean:.4} std {:.4}",
        set.train.header.scale_min,
        set.train.header.scale_max,
        var.sqrt()
    );
    assert!(p.iter().all(|v| (0.0..=1.0).contains(v)));
}
