use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::ValueEnum;
use sparsecafm::baselines::{bicubic_upsample, gpr_upsample, GprConfig};
use sparsecafm::model::{forward, Checkpoint};
use sparsecafm::scanio::{denormalize, normalize, read_scan, write_scan};
use sparsecafm::{ScanField, SparsityFactor};

use crate::dataset;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Method {
    Model,
    Bicubic,
    Gpr,
}

#[derive(clap::Args)]
pub struct Args {
    /// Sparse SCAF scan, or a directory of them.
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, value_enum)]
    method: Method,
    /// Checkpoint for `--method model`.
    #[arg(long, required_if_eq("method", "model"))]
    ckpt: Option<PathBuf>,
    /// Upsampling factor; taken from the checkpoint for `--method model`.
    #[arg(long, value_parser = crate::parse_sigma)]
    sigma: Option<SparsityFactor>,
    /// GPR hyperparameter JSON; data-driven defaults per scan when omitted.
    #[arg(long)]
    gpr_config: Option<PathBuf>,
    /// Output SCAF file, or a directory when `--in` is one.
    #[arg(long)]
    out: PathBuf,
}

enum Reconstructor {
    Model(Box<Checkpoint>),
    Bicubic(SparsityFactor),
    Gpr(SparsityFactor, Option<GprConfig>),
}

impl Reconstructor {
    fn from_args(args: &Args) -> Result<Self> {
        match args.method {
            Method::Model => {
                let path = args.ckpt.as_ref().context("--ckpt is required for the model method")?;
                let ckpt = Checkpoint::load(path).with_context(|| format!("loading {}", path.display()))?;
                let own = ckpt.config().sigma;
                if let Some(s) = args.sigma.filter(|&s| s != own) {
                    bail!("checkpoint {} upsamples by {own}, not {s}", path.display());
                }
                Ok(Reconstructor::Model(Box::new(ckpt)))
            }
            Method::Bicubic => Ok(Reconstructor::Bicubic(sigma_required(args)?)),
            Method::Gpr => {
                let config = match &args.gpr_config {
                    Some(path) => {
                        let cfg: GprConfig = serde_json::from_value(crate::read_json_value(path)?)
                            .with_context(|| format!("invalid GPR config in {}", path.display()))?;
                        cfg.validate()?;
                        Some(cfg)
                    }
                    None => None,
                };
                Ok(Reconstructor::Gpr(sigma_required(args)?, config))
            }
        }
    }

    fn apply(&self, x: &ScanField) -> Result<ScanField> {
        Ok(match self {
            Reconstructor::Model(ckpt) => {
                if let Some(c) = ckpt.meta.channel.filter(|&c| c != x.channel()) {
                    log::warn!("checkpoint was trained on {} maps, input is {}", c.name(), x.channel().name());
                }
                if x.is_normalized() {
                    forward(x, ckpt)?
                } else {
                    denormalize(&forward(&normalize(x)?, ckpt)?)?
                }
            }
            Reconstructor::Bicubic(s) => bicubic_upsample(x, *s),
            Reconstructor::Gpr(s, config) => {
                let cfg = config.clone().unwrap_or_else(|| GprConfig::for_field(x, *s));
                gpr_upsample(x, *s, &cfg)?
            }
        })
    }
}

fn sigma_required(args: &Args) -> Result<SparsityFactor> {
    args.sigma.context("--sigma is required for the bicubic and gpr methods")
}

pub fn run(args: Args) -> Result<()> {
    if !args.input.exists() {
        bail!("input {} does not exist", args.input.display());
    }
    let method = Reconstructor::from_args(&args)?;
    let started = Instant::now();
    if args.input.is_dir() {
        std::fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
        let scans = dataset::scan_dir(&args.input)?;
        for (path, field) in &scans {
            let name = path.file_name().expect("listed files have names");
            reconstruct_file(&method, path, field, &args.out.join(name))?;
        }
        log::info!("reconstructed {} scans in {:.3}s", scans.len(), started.elapsed().as_secs_f64());
    } else {
        let field = read_scan(&args.input).with_context(|| format!("reading {}", args.input.display()))?;
        crate::ensure_parent(&args.out)?;
        reconstruct_file(&method, &args.input, &field, &args.out)?;
    }
    Ok(())
}

fn reconstruct_file(method: &Reconstructor, input: &Path, field: &ScanField, out: &Path) -> Result<()> {
    let started = Instant::now();
    let result = method.apply(field).with_context(|| format!("reconstructing {}", input.display()))?;
    write_scan(&result, out).with_context(|| format!("writing {}", out.display()))?;
    let (h, w) = field.dims();
    let (oh, ow) = result.dims();
    log::info!(
        "{} ({h}x{w}) -> {} ({oh}x{ow}) in {:.3}s",
        input.display(),
        out.display(),
        started.elapsed().as_secs_f64()
    );
    Ok(())
}
