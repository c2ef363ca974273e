use super::*;
use crate::model::{Checkpoint, ModelConfig};
use crate::scanio::{Channel, ScanField, ScanPair, SparsityFactor};
use crate::synthgen::{generate_sample, SampleSpec};
use crate::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn samples(n: usize, grid: usize) -> Vec<ScanPair> {
    (0..n)
        .map(|i| {
            let spec = SampleSpec { grid_size: grid, rng_seed: 100 + i as u64, ..SampleSpec::default() };
            generate_sample(&spec).unwrap().0
        })
        .collect()
}

fn quick(sigma: SparsityFactor) -> TrainConfig {
    TrainConfig {
        epochs: 2,
        steps_per_epoch: 3,
        batch_size: 2,
        crop_high: 8 * sigma.get(),
        model: Some(ModelConfig::tiny(sigma)),
        ..TrainConfig::small(sigma)
    }
}

#[test]
fn l1_anchors_and_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let a = ScanField::from_fn(Channel::Current, 8, 8, |_, _| rng.random()).unwrap();
    assert_eq!(l1_loss(&a, &a).unwrap(), 0.0);
    let shifted = ScanField::from_fn(Channel::Current, 8, 8, |y, x| a.get(y, x) + 0.5).unwrap();
    assert!((l1_loss(&shifted, &a).unwrap() - 0.5).abs() < 1e-6);
    let b = ScanField::from_fn(Channel::Current, 8, 8, |_, _| rng.random()).unwrap();
    let mut s = 0.0f64;
    for y in 0..8 {
        for x in 0..8 {
            s += (a.get(y, x) as f64 - b.get(y, x) as f64).abs();
        }
    }
    assert!((l1_loss(&a, &b).unwrap() - s / 64.0).abs() < 1e-12);
    let c = ScanField::zeros(Channel::Current, 8, 9).unwrap();
    assert!(matches!(l1_loss(&a, &c), Err(Error::Dimension(_))));
}

#[test]
fn full_schedule_per_sigma() {
    let x8 = TrainConfig::full(SparsityFactor::X8);
    assert_eq!((x8.batch_size, x8.crop_high, x8.crop_high / 8), (4, 384, 48));
    for s in [SparsityFactor::X2, SparsityFactor::X4] {
        let c = TrainConfig::full(s);
        assert_eq!((c.batch_size, c.crop_high), (16, 256));
        assert_eq!((c.epochs, c.steps_per_epoch, c.learning_rate), (200, 1024, 1e-5));
        assert_eq!((c.beta1, c.beta2), (0.9, 0.99));
        c.validate().unwrap();
    }
}

#[test]
fn config_validation_and_json() {
    let c = TrainConfig::small(SparsityFactor::X4);
    let text = serde_json::to_string(&c).unwrap();
    assert_eq!(serde_json::from_str::<TrainConfig>(&text).unwrap(), c);
    for bad in [
        TrainConfig { batch_size: 0, ..c.clone() },
        TrainConfig { crop_high: 30, ..c.clone() },
        TrainConfig { beta1: 1.0, ..c.clone() },
        TrainConfig { learning_rate: -1.0, ..c.clone() },
        TrainConfig { model: Some(ModelConfig::tiny(SparsityFactor::X2)), ..c.clone() },
    ] {
        assert!(matches!(bad.validate(), Err(Error::Config(_))), "{bad:?}");
    }
}

#[test]
fn zero_learning_rate_keeps_parameters() {
    let data = samples(2, 64);
    let cfg = TrainConfig { learning_rate: 0.0, ..quick(SparsityFactor::X2) };
    let start = Trainer::new(&data, &cfg).unwrap().checkpoint();
    let end = train(&data, &cfg).unwrap();
    assert_eq!(start.model.params(), end.model.params());
    assert_eq!(end.meta.step, 6);
}

#[test]
fn finetune_zero_steps_and_provenance() {
    let data = samples(2, 64);
    let cfg = quick(SparsityFactor::X2);
    let base = train(&data, &cfg).unwrap();
    let none = TrainConfig { epochs: 0, ..cfg.clone() };
    let tuned = finetune(&base, &data, &none).unwrap();
    assert_eq!(tuned.model.params(), base.model.params());
    assert_eq!(tuned.meta.provenance, vec![base.id()]);
    let again = finetune(&tuned, &data, &none).unwrap();
    assert_eq!(again.meta.provenance, vec![base.id(), tuned.id()]);
    let wrong = quick(SparsityFactor::X4);
    assert!(matches!(finetune(&base, &data, &wrong), Err(Error::Config(_))));
}

#[test]
fn deterministic_and_resumable() {
    let data = samples(3, 64);
    let cfg = quick(SparsityFactor::X2);
    let a = train(&data, &cfg).unwrap();
    let b = train(&data, &cfg).unwrap();
    assert_eq!(a.to_bytes().unwrap(), b.to_bytes().unwrap());

    let mut t = Trainer::new(&data, &cfg).unwrap();
    t.step().unwrap();
    t.step().unwrap();
    let saved = Checkpoint::from_bytes(&t.checkpoint().to_bytes().unwrap()).unwrap();
    let next = t.step().unwrap();
    let mut resumed = Trainer::resume(&saved, &data, &cfg).unwrap();
    assert_eq!(resumed.global_step(), 2);
    assert_eq!(resumed.step().unwrap(), next);
    assert_eq!(resumed.model().params(), t.model().params());
}

#[test]
fn writes_log_and_checkpoints() {
    let dir = tempfile::tempdir().unwrap();
    let data = samples(4, 64);
    let cfg = TrainConfig { checkpoint_every: 1, val_fraction: 0.25, ..quick(SparsityFactor::X2) };
    let trainer = Trainer::new(&data, &cfg).unwrap().with_output(dir.path()).unwrap();
    assert_eq!((trainer.train_len(), trainer.val_len()), (3, 1));
    let ckpt = trainer.run().unwrap();
    let log = std::fs::read_to_string(dir.path().join(LOG_FILE)).unwrap();
    let mut lines = log.lines();
    assert_eq!(lines.next().unwrap(), "epoch,step,train_loss,val_loss,val_psnr");
    assert_eq!(lines.count(), 2);
    for name in [epoch_checkpoint_name(1), epoch_checkpoint_name(2), BEST_CHECKPOINT.into(), FINAL_CHECKPOINT.into()] {
        assert!(dir.path().join(&name).exists(), "{name}");
    }
    assert_eq!(Checkpoint::load(dir.path().join(FINAL_CHECKPOINT)).unwrap(), ckpt);
    assert_eq!(ckpt.meta.loss_history.len(), 2);
    assert!(ckpt.meta.loss_history.iter().all(|r| r.val_psnr.is_some()));
}

#[test]
fn rejects_small_fields_and_empty_data() {
    let data = samples(1, 64);
    let cfg = TrainConfig { crop_high: 128, ..quick(SparsityFactor::X2) };
    assert!(matches!(Trainer::new(&data, &cfg), Err(Error::Dimension(_))));
    assert!(matches!(Trainer::new(&[], &quick(SparsityFactor::X2)), Err(Error::Validation(_))));
}

#[test]
fn divergence_keeps_last_good_parameters() {
    let data = samples(1, 64);
    let cfg = TrainConfig { learning_rate: 1e30, ..quick(SparsityFactor::X2) };
    let mut t = Trainer::new(&data, &cfg).unwrap();
    let mut outcome = Ok(0.0);
    let mut before = t.model().params().clone();
    for _ in 0..20 {
        before = t.model().params().clone();
        outcome = t.step();
        if outcome.is_err() {
            break;
        }
    }
    assert!(matches!(outcome, Err(Error::Diverged { .. })), "{outcome:?}");
    assert_eq!(t.model().params(), &before);
}
