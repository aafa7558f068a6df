use std::fs;
use std::path::Path;

use csi_denoise::channel::DatasetSet;
use csi_denoise::pipeline::{
    checkpoint_path, cmd_evaluate, cmd_generate, cmd_train, manifest_path, EvaluateOptions, RunConfig, StageManifest,
    StageSelection,
};
use csi_denoise::training::Stage;
use csi_denoise::Error;

fn tiny_config(dir: &Path, seed: u64, gammas: &str) -> RunConfig {
    let text = format!(
        r#"
master_seed = {seed}

[channel]
n_t = 8
n_c = 32
n_p = 8
num_paths = 3
delay_spread = 1.0

[dataset]
train = 40
val = 10
test = 10

[dnnet]
layers = 4
hidden_width = 32

[train]
batch_size = 10
pretrain_epochs_ae = 2
pretrain_epochs_dn = 2
joint_epochs = 2

[evaluation]
gammas = {gammas}
snr_db = [0.0, 10.0]
"#
    );
    let path = dir.join("run.toml");
    fs::write(&path, text).unwrap();
    RunConfig::load(&path).unwrap()
}

#[test]
fn generate_is_repeatable() {
    let dir = tempfile::tempdir().unwrap();
    let config = tiny_config(dir.path(), 3, "[0.125]");
    let (_, summary) = cmd_generate(&config).unwrap();
    assert_eq!(summary.lines().count(), 3);
    let paths = DatasetSet::paths(&config.paths.data_dir);
    let first: Vec<Vec<u8>> = paths.iter().map(|p| fs::read(p).unwrap()).collect();
    cmd_generate(&config).unwrap();
    let second: Vec<Vec<u8>> = paths.iter().map(|p| fs::read(p).unwrap()).collect();
    assert_eq!(first, second);
}

#[test]
fn later_stages_name_their_missing_prerequisite() {
    let dir = tempfile::tempdir().unwrap();
    let config = tiny_config(dir.path(), 4, "[0.125]");
    cmd_generate(&config).unwrap();
    match cmd_train(&config, StageSelection::One(Stage::Joint)).unwrap_err() {
        Error::MissingStage { stage, .. } => assert_eq!(stage, "pretrain-ae"),
        other => panic!("unexpected {other}"),
    }
    cmd_train(&config, StageSelection::One(Stage::PretrainAe)).unwrap();
    match cmd_train(&config, StageSelection::One(Stage::Joint)).unwrap_err() {
        Error::MissingStage { stage, .. } => assert_eq!(stage, "pretrain-dn"),
        other => panic!("unexpected {other}"),
    }
}

#[test]
fn training_without_data_names_generate() {
    let dir = tempfile::tempdir().unwrap();
    let config = tiny_config(dir.path(), 4, "[0.125]");
    match cmd_train(&config, StageSelection::All).unwrap_err() {
        Error::MissingStage { stage, .. } => assert_eq!(stage, "generate"),
        other => panic!("unexpected {other}"),
    }
}

#[test]
fn full_run_writes_stage_outputs_and_reports() {
    let dir = tempfile::tempdir().unwrap();
    let config = tiny_config(dir.path(), 5, "[0.125, 0.25]");
    cmd_generate(&config).unwrap();
    let manifests = cmd_train(&config, StageSelection::All).unwrap();
    assert_eq!(manifests.len(), 6);
    for gamma in [0.125, 0.25] {
        let bundle_dir = config.bundle_dir(gamma).unwrap();
        for stage in Stage::ALL {
            assert!(checkpoint_path(&bundle_dir, stage).exists());
            let m = StageManifest::read(&manifest_path(&bundle_dir, stage)).unwrap();
            assert_eq!(m.stage, stage);
            assert_eq!(m.gamma, gamma);
        }
    }

    // Rerunning a finished stage reproduces it without touching the outputs.
    let ae = checkpoint_path(&config.bundle_dir(0.125).unwrap(), Stage::PretrainAe);
    let before = fs::read(&ae).unwrap();
    let again = cmd_train(&config, StageSelection::One(Stage::PretrainAe)).unwrap();
    assert_eq!(
        again[0].result.final_loss.to_bits(),
        manifests[0].result.final_loss.to_bits()
    );
    assert_eq!(fs::read(&ae).unwrap(), before);

    let (report, [rows, curves]) = cmd_evaluate(&config, &EvaluateOptions::default()).unwrap();
    assert_eq!(report.records.len(), 2 * 3);
    let text = fs::read_to_string(&rows).unwrap();
    assert_eq!(text.lines().count(), 1 + 6);
    assert!(text.contains("ncw-16/joint.ckpt"));
    let first = (fs::read(&rows).unwrap(), fs::read(&curves).unwrap());
    cmd_evaluate(&config, &EvaluateOptions::default()).unwrap();
    assert_eq!(first, (fs::read(&rows).unwrap(), fs::read(&curves).unwrap()));

    let bare = EvaluateOptions {
        no_dnnet: true,
        name: Some("bare".into()),
        ..EvaluateOptions::default()
    };
    let (bare_report, _) = cmd_evaluate(&config, &bare).unwrap();
    let noisy = |r: &csi_denoise::evaluation::MetricsReport| r.find(0.125, Some(0.0)).unwrap().nmse_db;
    assert_ne!(noisy(&report), noisy(&bare_report));
    let clean = |r: &csi_denoise::evaluation::MetricsReport| r.find(0.125, None).unwrap().nmse_db;
    assert_eq!(clean(&report), clean(&bare_report));

    let ae_only = EvaluateOptions {
        checkpoint: Some("pretrain-ae".into()),
        ..EvaluateOptions::default()
    };
    assert!(matches!(cmd_evaluate(&config, &ae_only).unwrap_err(), Error::Config(_)));
}

#[test]
fn foreign_checkpoint_dimensions_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let config = tiny_config(dir.path(), 6, "[0.125]");
    cmd_generate(&config).unwrap();
    cmd_train(&config, StageSelection::One(Stage::PretrainAe)).unwrap();
    let other_dir = dir.path().join("other");
    fs::create_dir_all(&other_dir).unwrap();
    let text = fs::read_to_string(dir.path().join("run.toml"))
        .unwrap()
        .replace("n_p = 8", "n_p = 4");
    fs::write(other_dir.join("run.toml"), text).unwrap();
    let other = RunConfig::load(&other_dir.join("run.toml")).unwrap();
    cmd_generate(&other).unwrap();
    let foreign = checkpoint_path(&config.bundle_dir(0.125).unwrap(), Stage::PretrainAe);
    let options = EvaluateOptions {
        checkpoint: Some(foreign.to_string_lossy().into_owned()),
        no_dnnet: true,
        ..EvaluateOptions::default()
    };
    assert!(matches!(
        cmd_evaluate(&other, &options).unwrap_err(),
        Error::Dimension { .. }
    ));
}

#[test]
fn invalid_config_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    fs::write(
        &path,
        "master_seed = 1\n[channel]\nn_t = 8\nn_c = 32\nn_p = 8\nnum_paths = 3\ndelay_spread = 1.0\n\
         [dataset]\ntrain = 10\nval = 2\ntest = 2\n[evaluation]\ngammas = [2.0]\n",
    )
    .unwrap();
    let err = RunConfig::load(&path).unwrap_err();
    assert!(matches!(err, Error::Config(_)));
    assert!(err.to_string().contains("n_cw"), "{err}");
    assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
}
