use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::ValueEnum;
use serde_json::Value;
use sparsecafm::model::Checkpoint;
use sparsecafm::training::{TrainConfig, Trainer, FINAL_CHECKPOINT};
use sparsecafm::SparsityFactor;

use crate::{dataset, ChannelArg};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Profile {
    /// Full-scale schedule and network.
    Full,
    /// Desk-scale schedule and network for a single CPU core.
    Small,
}

#[derive(clap::Args)]
pub struct CommonArgs {
    /// Dataset directory (manifest or paired SCAF files).
    #[arg(long, required_unless_present = "dry_run")]
    data: Option<PathBuf>,
    /// Training config JSON; keys override the profile defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output checkpoint: the best validated model, or the final one without a validation split.
    #[arg(long, required_unless_present = "dry_run")]
    out: Option<PathBuf>,
    /// Directory for the training log and periodic checkpoints; defaults to the output's directory.
    #[arg(long)]
    run_dir: Option<PathBuf>,
    /// Continue an interrupted run from one of its checkpoints.
    #[arg(long)]
    resume: Option<PathBuf>,
    /// Validate the configuration and exit.
    #[arg(long)]
    dry_run: bool,
    #[arg(long, value_enum, default_value = "full")]
    profile: Profile,
    #[arg(long, value_parser = crate::parse_sigma)]
    sigma: Option<SparsityFactor>,
    #[arg(long)]
    epochs: Option<u64>,
    #[arg(long)]
    steps_per_epoch: Option<u64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    crop_high: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    val_fraction: Option<f64>,
    #[arg(long, value_enum)]
    channel: Option<ChannelArg>,
    #[arg(long)]
    checkpoint_every: Option<u64>,
}

#[derive(clap::Args)]
pub struct TrainArgs {
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(clap::Args)]
pub struct FinetuneArgs {
    /// Checkpoint to start from; the config's finetune_from when omitted.
    #[arg(long)]
    base: Option<PathBuf>,
    #[command(flatten)]
    common: CommonArgs,
}

pub fn run_train(args: TrainArgs) -> Result<()> {
    let config = resolve_config(&args.common, None)?;
    if config.finetune_from.is_some() {
        log::warn!("finetune_from is ignored by `train`; use `finetune`");
    }
    execute(&args.common, config, None)
}

pub fn run_finetune(args: FinetuneArgs) -> Result<()> {
    let probe = resolve_config(&args.common, None).ok();
    let base_path = args
        .base
        .clone()
        .or_else(|| probe.and_then(|c| c.finetune_from))
        .context("finetune needs --base or finetune_from in the config")?;
    let base = Checkpoint::load(&base_path).with_context(|| format!("loading {}", base_path.display()))?;
    let mut config = resolve_config(&args.common, Some(base.config().sigma))?;
    config.finetune_from = Some(base_path);
    config.model = Some(base.config().clone());
    config.validate()?;
    execute(&args.common, config, Some(base))
}

/// Profile defaults, then JSON keys, then flags.
fn resolve_config(args: &CommonArgs, base_sigma: Option<SparsityFactor>) -> Result<TrainConfig> {
    let json = match &args.config {
        Some(path) => match crate::read_json_value(path)? {
            Value::Object(map) => map,
            _ => bail!("{} must hold a JSON object", path.display()),
        },
        None => Default::default(),
    };
    let sigma = match (args.sigma, json.get("sigma"), base_sigma) {
        (Some(s), _, _) => s,
        (None, Some(v), _) => serde_json::from_value(v.clone()).context("invalid sigma in config")?,
        (None, None, Some(s)) => s,
        (None, None, None) => SparsityFactor::X2,
    };
    let defaults = match args.profile {
        Profile::Full => TrainConfig::full(sigma),
        Profile::Small => TrainConfig::small(sigma),
    };
    let Value::Object(mut merged) = serde_json::to_value(&defaults)? else {
        unreachable!("TrainConfig serialises to an object");
    };
    merged.extend(json);
    let mut config: TrainConfig = serde_json::from_value(Value::Object(merged)).context("invalid training config")?;

    config.sigma = sigma;
    set(&mut config.epochs, args.epochs);
    set(&mut config.steps_per_epoch, args.steps_per_epoch);
    set(&mut config.batch_size, args.batch_size);
    set(&mut config.crop_high, args.crop_high);
    set(&mut config.learning_rate, args.learning_rate);
    set(&mut config.seed, args.seed);
    set(&mut config.val_fraction, args.val_fraction);
    set(&mut config.checkpoint_every, args.checkpoint_every);
    if let Some(c) = args.channel {
        config.channel = c.into();
    }
    config.validate()?;
    Ok(config)
}

fn execute(args: &CommonArgs, config: TrainConfig, base: Option<Checkpoint>) -> Result<()> {
    log::info!("training config: {}", serde_json::to_string(&config)?);
    if args.dry_run {
        if let Some(dir) = &args.data {
            let n = dataset::load_pairs(dir)?.len();
            log::info!("dry run: {n} samples in {}", dir.display());
        }
        log::info!("dry run: configuration is valid");
        return Ok(());
    }
    let (Some(data_dir), Some(out)) = (&args.data, &args.out) else {
        bail!("--data and --out are required");
    };
    let data = dataset::load_pairs(data_dir)?;
    if data.is_empty() {
        bail!("no samples in {}", data_dir.display());
    }
    let run_dir = args.run_dir.clone().unwrap_or_else(|| parent_dir(out));

    let trainer = match (&args.resume, base) {
        (Some(path), _) => {
            let ckpt = Checkpoint::load(path).with_context(|| format!("loading {}", path.display()))?;
            Trainer::resume(&ckpt, &data, &config)?
        }
        (None, Some(base)) => Trainer::finetune(&base, &data, &config)?,
        (None, None) => Trainer::new(&data, &config)?,
    };
    let mut trainer = trainer.with_output(&run_dir)?;
    log::info!(
        "{} training / {} validation samples; starting at epoch {}, step {}",
        trainer.train_len(),
        trainer.val_len(),
        trainer.epoch(),
        trainer.global_step()
    );
    let started = std::time::Instant::now();
    while trainer.epoch() < config.epochs {
        let r = trainer.run_epoch()?;
        match (r.val_loss, r.val_psnr) {
            (Some(l), Some(p)) => log::info!(
                "epoch {} step {} train_loss {:.5} val_loss {:.5} val_psnr {:.3} dB",
                r.epoch,
                r.step,
                r.train_loss,
                l,
                p
            ),
            _ => log::info!("epoch {} step {} train_loss {:.5}", r.epoch, r.step, r.train_loss),
        }
    }
    let last = trainer.checkpoint();
    last.save(run_dir.join(FINAL_CHECKPOINT))?;
    let chosen = trainer.best().unwrap_or(&last);
    crate::ensure_parent(out)?;
    chosen.save(out)?;
    log::info!(
        "wrote {} (checkpoint {}, epoch {}) after {:.1}s",
        out.display(),
        chosen.id(),
        chosen.meta.epoch,
        started.elapsed().as_secs_f64()
    );
    Ok(())
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn parent_dir(path: &Path) -> PathBuf {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    }
}
