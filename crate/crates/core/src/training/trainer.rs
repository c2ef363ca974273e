use std::fs::OpenOptions;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::adam::Adam;
use super::config::TrainConfig;
use crate::metrics::psnr;
use crate::model::{Checkpoint, EpochRecord, Feat, ParamSet, TrainingMeta, Upsampler};
use crate::scanio::{crop, denormalize, dihedral, downsample, normalize, Dihedral, ScanField, ScanPair, SparsityFactor};
use crate::{Error, Result};

/// Columns of the per-epoch CSV log.
pub const LOG_COLUMNS: [&str; 5] = ["epoch", "step", "train_loss", "val_loss", "val_psnr"];
pub const LOG_FILE: &str = "train_log.csv";
pub const BEST_CHECKPOINT: &str = "best.scck";
pub const FINAL_CHECKPOINT: &str = "final.scck";

/// Salt separating the train/val shuffle from the per-step streams.
const SPLIT_SALT: u64 = 0x5157_A11D_0000_0001;

pub fn epoch_checkpoint_name(epoch: u64) -> String {
    format!("epoch_{epoch:04}.scck")
}

/// One sparse/full training example as network tensors.
struct Example {
    input: Feat<f32>,
    target: Vec<f32>,
}

fn to_example(high: &ScanField, sigma: SparsityFactor) -> Result<Example> {
    let low = downsample(high, sigma)?;
    Ok(Example {
        input: Feat { h: low.height(), w: low.width(), c: 1, data: low.into_data() },
        target: high.data().to_vec(),
    })
}

/// Maps a field affinely so that its σ-subsampled pixels span `[0, 1]`,
/// the normalisation a sparse scan receives at inference. Unobserved pixels
/// may fall slightly outside that interval.
fn sparse_scaled(field: &ScanField, sigma: SparsityFactor) -> Result<ScanField> {
    let raw = if field.is_normalized() { denormalize(field)? } else { field.clone() };
    let s = sigma.get();
    let (h, w) = raw.dims();
    let (lo, hi) = downsample(&crop(&raw, 0, 0, h - h % s, w - w % s), sigma)?.min_max();
    let (offset, span) = (lo as f64, hi as f64 - lo as f64);
    let data = raw
        .data()
        .iter()
        .map(|&v| if span > 0.0 { ((v as f64 - offset) / span) as f32 } else { 0.0 })
        .collect();
    raw.with_data(h, w, data)
}

/// Stateful optimisation loop. Every step draws its batch from a random
/// stream keyed by `(seed, global step)`, so a run resumed from a
/// checkpoint continues exactly as the uninterrupted run would.
pub struct Trainer {
    config: TrainConfig,
    model: Upsampler<f32>,
    adam: Adam,
    meta: TrainingMeta,
    train_set: Vec<ScanField>,
    val_set: Vec<ScanField>,
    /// Highest validation PSNR seen so far.
    best_val: Option<f64>,
    best: Option<Checkpoint>,
    out_dir: Option<PathBuf>,
    last_saved: Option<PathBuf>,
    epoch_loss: (f64, u64),
}

impl Trainer {
    /// Fresh model initialised from `config.seed`.
    pub fn new(data: &[ScanPair], config: &TrainConfig) -> Result<Self> {
        config.validate()?;
        let model = Upsampler::new(&config.model_config(), config.seed)?;
        Self::assemble(data, config, model, None, TrainingMeta::default())
    }

    /// Starts from `base`'s parameters with a fresh optimiser and appends
    /// `base` to the provenance chain.
    pub fn finetune(base: &Checkpoint, data: &[ScanPair], config: &TrainConfig) -> Result<Self> {
        if base.config().sigma != config.sigma {
            return Err(Error::Config(format!(
                "base checkpoint is x{} but fine-tuning requests x{}",
                base.config().sigma.get(),
                config.sigma.get()
            )));
        }
        let config = TrainConfig { model: Some(base.config().clone()), ..config.clone() };
        config.validate()?;
        let mut provenance = base.meta.provenance.clone();
        provenance.push(base.id());
        let meta = TrainingMeta { provenance, ..TrainingMeta::default() };
        Self::assemble(data, &config, base.model.clone(), None, meta)
    }

    /// Continues the run recorded in `checkpoint`, including its optimiser
    /// moments and step counter.
    pub fn resume(checkpoint: &Checkpoint, data: &[ScanPair], config: &TrainConfig) -> Result<Self> {
        config.validate()?;
        if checkpoint.config() != &config.model_config() {
            return Err(Error::Config("checkpoint architecture differs from the training configuration".into()));
        }
        if checkpoint.meta.seed != config.seed {
            return Err(Error::Config(format!(
                "checkpoint was trained with seed {} but the configuration has seed {}",
                checkpoint.meta.seed, config.seed
            )));
        }
        let state = checkpoint
            .optimizer
            .clone()
            .ok_or_else(|| Error::State("checkpoint carries no optimiser state to resume from".into()))?;
        Self::assemble(data, config, checkpoint.model.clone(), Some(state), checkpoint.meta.clone())
    }

    fn assemble(
        data: &[ScanPair],
        config: &TrainConfig,
        model: Upsampler<f32>,
        state: Option<crate::model::OptimizerState>,
        mut meta: TrainingMeta,
    ) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::Validation("training data is empty".into()));
        }
        let mut fields = Vec::with_capacity(data.len());
        for pair in data {
            let f = pair.channel(config.channel);
            let (h, w) = f.dims();
            if h < config.crop_high || w < config.crop_high {
                return Err(Error::Dimension(format!(
                    "sample {} is {h}x{w}, smaller than crop {}",
                    pair.sample_id,
                    config.crop_high
                )));
            }
            fields.push(sparse_scaled(f, config.sigma)?);
        }
        let mut order: Vec<usize> = (0..fields.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(config.seed ^ SPLIT_SALT));
        let n_val = ((fields.len() as f64 * config.val_fraction).round() as usize).min(fields.len() - 1);
        let val_set = order[..n_val].iter().map(|&i| fields[i].clone()).collect();
        let train_set = order[n_val..].iter().map(|&i| fields[i].clone()).collect();

        let mut adam = Adam::new(model.params(), config.learning_rate, config.beta1, config.beta2);
        if let Some(state) = state {
            adam.state = state;
        }
        meta.seed = config.seed;
        meta.channel = Some(config.channel);
        let best_val = meta.loss_history.iter().filter_map(|r| r.val_psnr).max_by(f64::total_cmp);
        Ok(Trainer {
            config: config.clone(),
            model,
            adam,
            meta,
            train_set,
            val_set,
            best_val,
            best: None,
            out_dir: None,
            last_saved: None,
            epoch_loss: (0.0, 0),
        })
    }

    /// Writes the CSV log and periodic, best and final checkpoints into
    /// `dir`.
    pub fn with_output(mut self, dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        self.out_dir = Some(dir);
        Ok(self)
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn model(&self) -> &Upsampler<f32> {
        &self.model
    }

    pub fn global_step(&self) -> u64 {
        self.meta.step
    }

    pub fn epoch(&self) -> u64 {
        self.meta.epoch
    }

    pub fn history(&self) -> &[EpochRecord] {
        &self.meta.loss_history
    }

    pub fn train_len(&self) -> usize {
        self.train_set.len()
    }

    pub fn val_len(&self) -> usize {
        self.val_set.len()
    }

    /// Checkpoint with the highest validation PSNR reached in this session.
    pub fn best(&self) -> Option<&Checkpoint> {
        self.best.as_ref()
    }

    /// Snapshot of model, metadata and optimiser state.
    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint { model: self.model.clone(), meta: self.meta.clone(), optimizer: Some(self.adam.state.clone()) }
    }

    fn batch(&self, step: u64) -> Result<Vec<Example>> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed);
        rng.set_stream(step);
        let c = self.config.crop_high;
        (0..self.config.batch_size)
            .map(|_| {
                let f = &self.train_set[rng.random_range(0..self.train_set.len())];
                let oy = rng.random_range(0..=f.height() - c);
                let ox = rng.random_range(0..=f.width() - c);
                let t = Dihedral::ALL[rng.random_range(0..8)];
                to_example(&dihedral(&crop(f, oy, ox, c, c), t), self.config.sigma)
            })
            .collect()
    }

    fn diverged(&self) -> Error {
        Error::Diverged { step: self.meta.step, last_good: self.last_saved.clone() }
    }

    /// Mean L1 loss of the batch for the next step, without updating.
    pub fn peek_loss(&self) -> Result<f64> {
        let batch = self.batch(self.meta.step)?;
        let mut total = 0.0;
        for ex in &batch {
            let out = self.model.predict(&ex.input)?;
            total += out.data.iter().zip(&ex.target).map(|(&o, &t)| (o as f64 - t as f64).abs()).sum::<f64>()
                / ex.target.len() as f64;
        }
        Ok(total / batch.len() as f64)
    }

    /// One optimiser step; returns the batch loss before the update.
    ///
    /// Parameters are left untouched when the loss or any gradient is not
    /// finite.
    pub fn step(&mut self) -> Result<f64> {
        let batch = self.batch(self.meta.step)?;
        let chunk = rayon::current_num_threads().max(1);
        let mut grads: ParamSet<f32> = self.model.params().zeros_like();
        let mut loss = 0.0f64;
        for group in batch.chunks(chunk) {
            let results: Vec<Result<(f32, ParamSet<f32>)>> =
                group.par_iter().map(|ex| self.model.l1_loss_and_grad(&ex.input, &ex.target)).collect();
            for r in results {
                let (l, g) = r.map_err(|e| match e {
                    Error::Numeric { .. } => self.diverged(),
                    other => other,
                })?;
                loss += l as f64;
                grads.add_assign(&g);
            }
        }
        let n = batch.len() as f64;
        loss /= n;
        grads.scale((1.0 / n) as f32);
        if !loss.is_finite() || !grads.all_finite() {
            return Err(self.diverged());
        }
        self.adam.update(self.model.params_mut(), &grads);
        self.meta.step += 1;
        self.epoch_loss.0 += loss;
        self.epoch_loss.1 += 1;
        Ok(loss)
    }

    /// Mean L1 loss and PSNR of clamped predictions on the held-out fields,
    /// trimmed to a multiple of σ.
    pub fn validate(&self) -> Result<Option<(f64, f64)>> {
        if self.val_set.is_empty() {
            return Ok(None);
        }
        let s = self.config.sigma.get();
        let (mut loss, mut db) = (0.0, 0.0);
        for f in &self.val_set {
            let (h, w) = f.dims();
            let high = crop(f, 0, 0, h - h % s, w - w % s);
            let low = normalize(&downsample(&high, self.config.sigma)?)?;
            let pred = crate::model::predict_field(&low, &self.model)?;
            loss += l1_loss(&pred, &high)?;
            db += psnr(&pred, &high, 1.0)?;
        }
        let n = self.val_set.len() as f64;
        Ok(Some((loss / n, db / n)))
    }

    /// Runs the remaining steps of the current epoch and records it.
    pub fn run_epoch(&mut self) -> Result<EpochRecord> {
        let end = (self.meta.epoch + 1) * self.config.steps_per_epoch;
        while self.meta.step < end {
            self.step()?;
        }
        let (sum, count) = std::mem::take(&mut self.epoch_loss);
        self.meta.epoch += 1;
        let val = self.validate()?;
        let record = EpochRecord {
            epoch: self.meta.epoch,
            step: self.meta.step,
            train_loss: if count > 0 { sum / count as f64 } else { f64::NAN },
            val_loss: val.map(|v| v.0),
            val_psnr: val.map(|v| v.1),
        };
        log::debug!(
            "epoch {} step {} train_loss {:.6} val_loss {:?} val_psnr {:?}",
            record.epoch,
            record.step,
            record.train_loss,
            record.val_loss,
            record.val_psnr
        );
        self.meta.loss_history.push(record.clone());
        self.persist(&record)?;
        Ok(record)
    }

    fn persist(&mut self, record: &EpochRecord) -> Result<()> {
        let improved = match record.val_psnr {
            Some(v) if self.best_val.is_none_or(|b| v > b) => {
                self.best_val = Some(v);
                true
            }
            _ => false,
        };
        if improved {
            self.best = Some(self.checkpoint());
        }
        let Some(dir) = self.out_dir.clone() else {
            return Ok(());
        };
        append_log(&dir.join(LOG_FILE), record)?;
        let ckpt = self.checkpoint();
        if record.epoch.is_multiple_of(self.config.checkpoint_every) {
            let path = dir.join(epoch_checkpoint_name(record.epoch));
            ckpt.save(&path)?;
            self.last_saved = Some(path);
        }
        if improved {
            let path = dir.join(BEST_CHECKPOINT);
            ckpt.save(&path)?;
            self.last_saved = Some(path);
        }
        Ok(())
    }

    /// Trains until `config.epochs` epochs are complete.
    pub fn run(mut self) -> Result<Checkpoint> {
        while self.meta.epoch < self.config.epochs {
            self.run_epoch()?;
        }
        let ckpt = self.checkpoint();
        if let Some(dir) = &self.out_dir {
            ckpt.save(dir.join(FINAL_CHECKPOINT))?;
        }
        Ok(ckpt)
    }
}

fn append_log(path: &Path, record: &EpochRecord) -> Result<()> {
    let fresh = !path.exists();
    let file = OpenOptions::new().create(true).append(true).open(path).map_err(|e| Error::io(path, e))?;
    let mut wtr = csv::Writer::from_writer(file);
    if fresh {
        wtr.write_record(LOG_COLUMNS)?;
    }
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    wtr.write_record([
        record.epoch.to_string(),
        record.step.to_string(),
        record.train_loss.to_string(),
        opt(record.val_loss),
        opt(record.val_psnr),
    ])?;
    wtr.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Mean absolute difference over all pixels.
pub fn l1_loss(pred: &ScanField, target: &ScanField) -> Result<f64> {
    if pred.dims() != target.dims() {
        return Err(Error::Dimension(format!("shape mismatch {:?} vs {:?}", pred.dims(), target.dims())));
    }
    let sum: f64 = pred.data().iter().zip(target.data()).map(|(&a, &b)| (a as f64 - b as f64).abs()).sum();
    Ok(sum / pred.data().len() as f64)
}

/// Trains a fresh model for the full schedule.
pub fn train(data: &[ScanPair], config: &TrainConfig) -> Result<Checkpoint> {
    Trainer::new(data, config)?.run()
}

/// Fine-tunes `base` on `data` for the full schedule of `config`.
pub fn finetune(base: &Checkpoint, data: &[ScanPair], config: &TrainConfig) -> Result<Checkpoint> {
    Trainer::finetune(base, data, config)?.run()
}
