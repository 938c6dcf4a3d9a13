mod common;

use common::ScalarAdam;
use msdnet::config::RunConfig;
use msdnet::hsi::{extract_patches, synth_cube, HsiCube};
use msdnet::nn::ParamStore;
use msdnet::tensor::Tensor;
use msdnet::train::{
    adam_step, load_checkpoint, read_checkpoint, save_checkpoint, train, train_with, write_checkpoint, AdamConfig,
    AdamState, Checkpoint, CheckpointError, Progress, TrainError, WeightDecayMode,
};

const TINY: &str = "
base_channels = 4
block_growth = 1
unet_widths = 4,8,16
epochs = 3
batch_size = 2
patch_size = 16
learning_rate = 0.001
seed = 9
";

fn tiny(epochs: usize) -> RunConfig {
    let mut cfg = RunConfig::parse(TINY).unwrap();
    cfg.train.epochs = epochs;
    cfg
}

fn patches() -> Vec<HsiCube> {
    let cube = synth_cube(0, 1, 32, 32).unwrap();
    extract_patches(&cube, 16, 16).unwrap()
}

fn scalar_store(w: f64) -> ParamStore {
    let mut p = ParamStore::new();
    p.add("w.weight", Tensor::scalar(w));
    p
}

fn value(p: &ParamStore) -> f64 {
    p.get(p.find("w.weight").unwrap()).data()[0]
}

#[test]
fn adam_trace_on_a_quadratic_matches_hand_rolled_adam() {
    for wd in [0.0, 5e-4, 0.1] {
        let cfg = AdamConfig {
            learning_rate: 0.1,
            weight_decay: wd,
            ..AdamConfig::default()
        };
        let mut p = scalar_store(1.0);
        let mut s = AdamState::new(&p);
        let mut oracle = ScalarAdam::new(0.1, wd);
        let mut w = 1.0;
        for _ in 0..3 {
            let g = 2.0 * value(&p);
            adam_step(&mut p, &[vec![g]], &mut s, &cfg).unwrap();
            w = oracle.step(w, 2.0 * w);
            assert!((value(&p) - w).abs() < 1e-10);
        }
        assert_eq!(s.t, 3);
        assert!(s.v[0][0] >= 0.0);
    }
}

#[test]
fn first_step_is_learning_rate_sized() {
    let cfg = AdamConfig {
        weight_decay: 0.0,
        ..AdamConfig::default()
    };
    for g in [1e-2, 0.5, -7.0] {
        let mut p = scalar_store(0.0);
        let mut s = AdamState::new(&p);
        adam_step(&mut p, &[vec![g]], &mut s, &cfg).unwrap();
        // bias-corrected moments are exactly g and g^2 after one step
        let expect = cfg.learning_rate * g.abs() / (g.abs() + cfg.eps);
        assert!((value(&p).abs() - expect).abs() < 1e-12 * cfg.learning_rate);
        assert_eq!(value(&p).signum(), -g.signum());
        assert!((value(&p).abs() - cfg.learning_rate).abs() < 1e-6);
    }
}

#[test]
fn scaling_the_loss_leaves_the_first_step_unchanged() {
    let cfg = AdamConfig {
        weight_decay: 0.0,
        ..AdamConfig::default()
    };
    let grads = [0.3, -1.2, 4e-3, 0.07];
    let step = |c: f64| {
        let mut p = ParamStore::new();
        p.add("w.weight", Tensor::zeros(&[4]));
        let mut s = AdamState::new(&p);
        adam_step(&mut p, &[grads.iter().map(|g| g * c).collect()], &mut s, &cfg).unwrap();
        p.get(p.find("w.weight").unwrap()).data().to_vec()
    };
    let base = step(1.0);
    for c in [1e-2, 3.0, 1e3] {
        let scaled = step(c);
        for (a, b) in base.iter().zip(&scaled) {
            assert_eq!(a.signum(), b.signum());
            assert!((a - b).abs() < 0.01 * a.abs(), "c={c}: {a} vs {b}");
        }
    }
}

#[test]
fn l2_decay_alone_shrinks_toward_zero() {
    let cfg = AdamConfig {
        learning_rate: 1e-3,
        weight_decay: 0.5,
        decay_mode: WeightDecayMode::L2,
        ..AdamConfig::default()
    };
    let mut p = scalar_store(-2.0);
    let mut s = AdamState::new(&p);
    let mut prev = value(&p).abs();
    for _ in 0..100 {
        adam_step(&mut p, &[vec![0.0]], &mut s, &cfg).unwrap();
        let now = value(&p).abs();
        assert!(now < prev);
        prev = now;
    }
    assert!(value(&p) < 0.0);
}

#[test]
fn zero_epochs_returns_the_initialisation() {
    let cfg = tiny(0);
    let ckpt = train(&patches(), &cfg).unwrap();
    assert_eq!(ckpt, Checkpoint::initial(&cfg));
    assert_eq!(ckpt.epoch, 0);
    assert!(ckpt.history.is_empty());
}

#[test]
fn fixed_seed_gives_identical_runs() {
    let cfg = tiny(2);
    let a = train(&patches(), &cfg).unwrap();
    let b = train(&patches(), &cfg).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.history.len(), 2);
    assert!(a.history.iter().all(|l| l.is_finite()));
    let mut other = cfg.clone();
    other.train.seed = 10;
    assert_ne!(train(&patches(), &other).unwrap().history, a.history);
}

#[test]
fn resumed_run_matches_uninterrupted_run() {
    let dir = tempfile::tempdir().unwrap();
    let full = train(&patches(), &tiny(5)).unwrap();
    let first = train(&patches(), &tiny(2)).unwrap();
    let path = dir.path().join("half.msdc");
    save_checkpoint(&first, &path).unwrap();
    let reloaded = load_checkpoint(&path).unwrap();
    let resumed = train_with(&patches(), &tiny(5), Some(reloaded), &mut |_| {}).unwrap();
    assert_eq!(resumed.history, full.history);
    assert_eq!(resumed, full);
}

#[test]
fn observer_sees_every_step_and_epoch() {
    let cfg = tiny(2);
    let mut steps = 0;
    let mut epochs = Vec::new();
    train_with(&patches(), &cfg, None, &mut |p| match p {
        Progress::Step { loss, .. } => {
            assert!(loss.is_finite());
            steps += 1;
        }
        Progress::Epoch { epoch, mean_loss } => epochs.push((epoch, mean_loss)),
    })
    .unwrap();
    // 4 patches, batch 2
    assert_eq!(steps, 4);
    assert_eq!(epochs.iter().map(|e| e.0).collect::<Vec<_>>(), vec![0, 1]);
}

#[test]
fn training_input_errors() {
    let cfg = tiny(1);
    assert!(matches!(train(&[], &cfg), Err(TrainError::NoPatches)));
    let mut mixed = patches();
    mixed.push(synth_cube(1, 2, 16, 16).unwrap());
    assert!(matches!(train(&mixed, &cfg), Err(TrainError::PatchMismatch { index: 4, .. })));
    let odd = vec![synth_cube(1, 1, 18, 18).unwrap()];
    assert!(matches!(train(&odd, &cfg), Err(TrainError::PatchMismatch { index: 0, .. })));
}

#[test]
fn resume_with_a_different_architecture_is_rejected() {
    let ckpt = Checkpoint::initial(&tiny(1));
    let mut other = tiny(2);
    other.model.unet_widths = [4, 8, 8];
    assert!(matches!(
        train_with(&patches(), &other, Some(ckpt), &mut |_| {}),
        Err(TrainError::ResumeMismatch(_))
    ));
}

#[test]
fn non_finite_loss_keeps_the_last_good_state() {
    let cfg = tiny(3);
    let good = train(&patches(), &tiny(1)).unwrap();
    let mut bad = patches();
    bad[0].data_mut()[5] = f32::NAN;
    let err = train_with(&bad, &cfg, Some(good.clone()), &mut |_| {}).unwrap_err();
    match err {
        TrainError::NonFiniteLoss { epoch, last_good, .. } => {
            assert_eq!(epoch, 1);
            assert_eq!(last_good.epoch, 1);
            assert_eq!(last_good.model, good.model);
        }
        e => panic!("unexpected {e}"),
    }
}

fn checkpoint_bytes(c: &Checkpoint) -> Vec<u8> {
    let mut out = Vec::new();
    write_checkpoint(c, &mut out).unwrap();
    out
}

#[test]
fn checkpoint_round_trip_is_bit_exact() {
    let ckpt = train(&patches(), &tiny(1)).unwrap();
    let bytes = checkpoint_bytes(&ckpt);
    assert_eq!(&bytes[..4], b"MSDC");
    let back = read_checkpoint(&bytes).unwrap();
    assert_eq!(back, ckpt);
    assert_eq!(checkpoint_bytes(&back), bytes);
    let y = patches()[1].to_tensor();
    assert_eq!(back.model.run(&y).unwrap(), ckpt.model.run(&y).unwrap());
}

#[test]
fn corrupt_checkpoints_are_rejected_with_distinct_errors() {
    let bytes = checkpoint_bytes(&Checkpoint::initial(&tiny(1)));

    let mut magic = bytes.clone();
    magic[0] = b'X';
    assert!(matches!(read_checkpoint(&magic), Err(CheckpointError::BadMagic(_))));

    let mut version = bytes.clone();
    version[4..8].copy_from_slice(&2u32.to_le_bytes());
    assert!(matches!(
        read_checkpoint(&version),
        Err(CheckpointError::VersionMismatch { expected: 1, found: 2 })
    ));

    for cut in [2, 10, bytes.len() / 2, bytes.len() - 1] {
        assert!(
            matches!(read_checkpoint(&bytes[..cut]), Err(CheckpointError::Truncated(_))),
            "cut at {cut}"
        );
    }

    let name = b"unet.out.bias";
    let at = bytes.windows(name.len()).position(|w| w == name).unwrap();
    let mut renamed = bytes.clone();
    renamed[at + 9] = b'X';
    match read_checkpoint(&renamed) {
        Err(CheckpointError::UnknownParameter(n)) => assert_eq!(n, "unet.out.Xias"),
        other => panic!("unexpected {other:?}"),
    }

    let mut trailing = bytes.clone();
    trailing.push(0);
    assert!(read_checkpoint(&trailing).is_err());
}

#[test]
fn load_reports_missing_files() {
    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(
        load_checkpoint(dir.path().join("absent.msdc")),
        Err(CheckpointError::Io(_))
    ));
}
