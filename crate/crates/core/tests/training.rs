use csi_denoise::channel::{generate_dataset, ChannelConfig, DatasetSet, DelayGrid, SplitCounts};
use csi_denoise::models::checkpoint;
use csi_denoise::models::{AutoencoderSpec, DnnetSpec, ModelBundle};
use csi_denoise::nn::Layer;
use csi_denoise::seed::rng_for;
use csi_denoise::training::{generate_dnnet_dataset, joint_train, pretrain_autoencoder, pretrain_dnnet, TrainConfig};

fn small_data(seed: u64) -> DatasetSet {
    let cfg = ChannelConfig {
        n_t: 8,
        n_c: 32,
        n_p: 8,
        num_paths: 3,
        delay_spread: 0.25,
        delay_grid: DelayGrid::Integer,
        master_seed: seed,
        ..ChannelConfig::desk_scale(seed)
    };
    let counts = SplitCounts {
        train: 120,
        val: 40,
        test: 10,
    };
    generate_dataset(&cfg, &counts, None).unwrap()
}

fn small_config(seed: u64) -> TrainConfig {
    TrainConfig {
        batch_size: 20,
        pretrain_epochs_ae: 6,
        pretrain_epochs_dn: 4,
        joint_epochs: 4,
        master_seed: seed,
        ..TrainConfig::default()
    }
}

fn spec() -> AutoencoderSpec {
    AutoencoderSpec::new(8, 8, 16).unwrap()
}

fn dnnet_spec() -> DnnetSpec {
    DnnetSpec {
        hidden_width: 32,
        ..DnnetSpec::default()
    }
}

fn pretrained(seed: u64) -> (ModelBundle<f64>, DatasetSet, TrainConfig) {
    let data = small_data(seed);
    let config = small_config(seed);
    let mut bundle = ModelBundle::init_autoencoder(spec(), seed).unwrap();
    pretrain_autoencoder(&mut bundle, &data.train, &data.val, &config).unwrap();
    (bundle, data, config)
}

#[test]
fn autoencoder_pretraining_tracks_input_statistics() {
    let data = small_data(1);
    let config = small_config(1);
    let mut bundle = ModelBundle::<f64>::init_autoencoder(spec(), 1).unwrap();
    let r = pretrain_autoencoder(&mut bundle, &data.train, &data.val, &config).unwrap();
    assert!(r.best_epoch > 0);
    let Some(Layer::BatchNorm(bn)) = bundle.encoder().unwrap().net.layers.first() else {
        panic!("encoder starts with input normalization");
    };
    let plane = 8 * 8;
    for (c, &m) in bn.running_mean.data().iter().enumerate() {
        let values: Vec<f64> = data
            .train
            .payload
            .chunks_exact(plane)
            .skip(c)
            .step_by(2)
            .flatten()
            .map(|&v| v as f64)
            .collect();
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        assert!(
            (m - mean).abs() < 0.02,
            "channel {c}: running mean {m}, data mean {mean}"
        );
    }
}

#[test]
fn retained_parameters_are_the_best_validated() {
    let data = small_data(2);
    let config = small_config(2);
    let mut bundle = ModelBundle::<f64>::init_autoencoder(spec(), 2).unwrap();
    let r = pretrain_autoencoder(&mut bundle, &data.train, &data.val, &config).unwrap();
    assert_eq!(r.val_trace.len(), config.pretrain_epochs_ae);
    let best = r.val_trace.iter().copied().fold(r.initial_val_nmse_db, f64::min);
    assert_eq!(r.val_nmse_db, best);
    assert!(r.val_nmse_db < r.initial_val_nmse_db);
    if r.best_epoch > 0 {
        assert_eq!(r.val_trace[r.best_epoch - 1], best);
    }
}

#[test]
fn dnnet_pretraining_leaves_the_autoencoder_untouched() {
    let (mut bundle, data, config) = pretrained(3);
    let ae_before = checkpoint::to_bytes(&bundle);
    bundle.init_dnnet(dnnet_spec(), 3).unwrap();
    let pairs = generate_dnnet_dataset(
        bundle.encoder().unwrap(),
        &data.train,
        &config.snr_db,
        &mut rng_for(&[3]),
    )
    .unwrap();
    pretrain_dnnet(&mut bundle, &pairs, &data.val, &config).unwrap();
    let mut ae_only = bundle.clone();
    ae_only.dnnet = None;
    ae_only.steps = 0;
    let mut reference: ModelBundle<f64> = checkpoint::from_bytes(&ae_before, std::path::Path::new("mem")).unwrap();
    reference.steps = 0;
    assert_eq!(checkpoint::to_bytes(&ae_only), checkpoint::to_bytes(&reference));
}

#[test]
fn joint_training_is_deterministic_and_keeps_its_best() {
    let run = || {
        let (mut bundle, data, config) = pretrained(4);
        bundle.init_dnnet(dnnet_spec(), 4).unwrap();
        let pairs = generate_dnnet_dataset(
            bundle.encoder().unwrap(),
            &data.train,
            &config.snr_db,
            &mut rng_for(&[4]),
        )
        .unwrap();
        pretrain_dnnet(&mut bundle, &pairs, &data.val, &config).unwrap();
        let r = joint_train(&mut bundle, &data.train, &data.val, &config).unwrap();
        (checkpoint::to_bytes(&bundle), r)
    };
    let (a, ra) = run();
    let (b, rb) = run();
    assert_eq!(a, b);
    assert_eq!(ra.val_trace, rb.val_trace);
    assert!(ra.val_nmse_db <= ra.initial_val_nmse_db);
}

#[test]
fn joint_training_without_improvement_returns_the_inherited_bundle() {
    let (mut bundle, data, config) = pretrained(5);
    bundle.init_dnnet(dnnet_spec(), 5).unwrap();
    let pairs = generate_dnnet_dataset(
        bundle.encoder().unwrap(),
        &data.train,
        &config.snr_db,
        &mut rng_for(&[5]),
    )
    .unwrap();
    pretrain_dnnet(&mut bundle, &pairs, &data.val, &config).unwrap();
    let mut before = bundle.clone();
    let wild = TrainConfig {
        learning_rate: 10.0,
        ..config
    };
    let r = joint_train(&mut bundle, &data.train, &data.val, &wild).unwrap();
    assert_eq!(
        r.best_epoch, 0,
        "val trace {:?} from {}",
        r.val_trace, r.initial_val_nmse_db
    );
    bundle.steps = 0;
    before.steps = 0;
    assert_eq!(checkpoint::to_bytes(&bundle), checkpoint::to_bytes(&before));
}
