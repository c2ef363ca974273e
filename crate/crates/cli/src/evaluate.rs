use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use sparsecafm::characterize::{build_scorecard, write_scorecard_csv};
use sparsecafm::metrics::{psnr, ssim};
use sparsecafm::scanio::denormalize;
use sparsecafm::{Channel, ScanField, SparsityFactor};

use crate::dataset::index_scans;
use crate::{BaselineArg, ChannelArg};

pub const METRIC_COLUMNS: [&str; 6] = ["sample_id", "method", "sigma", "channel", "psnr_db", "ssim"];

#[derive(clap::Args)]
pub struct EvalArgs {
    /// Directory of reconstructed SCAF scans.
    #[arg(long)]
    pred: PathBuf,
    /// Directory of full-resolution ground-truth scans.
    #[arg(long)]
    truth: PathBuf,
    /// Metrics CSV to write.
    #[arg(long)]
    out: PathBuf,
    /// Method label for the CSV; the prediction directory's name when omitted.
    #[arg(long)]
    method: Option<String>,
    /// Sparsity factor label for the CSV.
    #[arg(long, value_parser = crate::parse_sigma)]
    sigma: Option<SparsityFactor>,
    /// Restrict scoring to one channel.
    #[arg(long, value_enum)]
    channel: Option<ChannelArg>,
}

#[derive(clap::Args)]
pub struct ScorecardArgs {
    /// Directory of reconstructed current maps.
    #[arg(long)]
    pred: PathBuf,
    /// Directory of the sparse scans the reconstructions came from.
    #[arg(long)]
    sparse: PathBuf,
    /// Directory of full-resolution ground-truth scans.
    #[arg(long)]
    truth: PathBuf,
    /// Scorecard file; CSV when the extension is `.csv`, JSON otherwise.
    #[arg(long)]
    out: PathBuf,
    /// Naive upsampling applied to the sparse arm before extraction.
    #[arg(long, value_enum, default_value = "nearest")]
    baseline: BaselineArg,
}

type Index = BTreeMap<(String, Channel), (PathBuf, ScanField)>;

/// Matches every key of `left` with `right`, failing with a report of the
/// unmatched files on either side.
fn pair_up(left_name: &str, left: Index, right_name: &str, mut right: Index) -> Result<Vec<(String, Channel, ScanField, ScanField)>> {
    let (nl, nr) = (left.len(), right.len());
    let mut pairs = Vec::new();
    let mut orphans = Vec::new();
    for (key, (path, l)) in left {
        match right.remove(&key) {
            Some((_, r)) => pairs.push((key.0, key.1, l, r)),
            None => orphans.push(format!("  {left_name} only: {} ({} `{}`)", path.display(), key.1.name(), key.0)),
        }
    }
    for (key, (path, _)) in right {
        orphans.push(format!("  {right_name} only: {} ({} `{}`)", path.display(), key.1.name(), key.0));
    }
    if !orphans.is_empty() {
        bail!("{nl} {left_name} and {nr} {right_name} scans do not pair up:\n{}", orphans.join("\n"));
    }
    Ok(pairs)
}

fn raw(field: ScanField) -> Result<ScanField> {
    Ok(if field.is_normalized() { denormalize(&field)? } else { field })
}

pub fn run_evaluate(args: EvalArgs) -> Result<()> {
    let mut pred = index_scans(&args.pred)?;
    let mut truth = index_scans(&args.truth)?;
    let channels: BTreeSet<Channel> = match args.channel {
        Some(c) => BTreeSet::from([c.into()]),
        None => pred.keys().map(|k| k.1).collect(),
    };
    pred.retain(|k, _| channels.contains(&k.1));
    truth.retain(|k, _| channels.contains(&k.1));
    if pred.is_empty() {
        bail!("no predictions to evaluate in {}", args.pred.display());
    }
    let method = args.method.clone().unwrap_or_else(|| {
        args.pred
            .canonicalize()
            .ok()
            .and_then(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()))
            .unwrap_or_else(|| "prediction".into())
    });
    let sigma = args.sigma.map(|s| s.get().to_string()).unwrap_or_default();

    let mut rows = Vec::new();
    for (id, channel, p, t) in pair_up("prediction", pred, "truth", truth)? {
        let (p, t) = (raw(p)?, raw(t)?);
        let (lo, hi) = t.min_max();
        let range = if hi > lo { hi as f64 - lo as f64 } else { 1.0 };
        let db = psnr(&p, &t, range).with_context(|| format!("sample `{id}`"))?;
        let s = ssim(&p, &t, range).with_context(|| format!("sample `{id}`"))?;
        let db = if db.is_infinite() { "inf".to_string() } else { db.to_string() };
        rows.push([id, method.clone(), sigma.clone(), channel.name().to_string(), db, s.to_string()]);
    }

    crate::ensure_parent(&args.out)?;
    let mut wtr = csv::Writer::from_path(&args.out).with_context(|| format!("writing {}", args.out.display()))?;
    wtr.write_record(METRIC_COLUMNS)?;
    for row in &rows {
        wtr.write_record(row)?;
    }
    wtr.flush().with_context(|| format!("writing {}", args.out.display()))?;
    log::info!("wrote {}", args.out.display());
    Ok(())
}

pub fn run_scorecard(args: ScorecardArgs) -> Result<()> {
    let only_current = |mut idx: Index| {
        idx.retain(|k, _| k.1 == Channel::Current);
        idx
    };
    let pred = only_current(index_scans(&args.pred)?);
    let sparse = only_current(index_scans(&args.sparse)?);
    let truth = only_current(index_scans(&args.truth)?);
    let with_truth = pair_up("prediction", pred, "truth", truth)?;
    let truth_ids: Index = with_truth
        .iter()
        .map(|(id, c, _, t)| ((id.clone(), *c), (PathBuf::new(), t.clone())))
        .collect();
    let with_sparse = pair_up("sparse", sparse, "truth", truth_ids)?;
    if with_truth.is_empty() {
        bail!("no current maps to score in {}", args.pred.display());
    }

    let (th, _) = with_truth[0].3.dims();
    let (sh, _) = with_sparse[0].2.dims();
    if sh == 0 || th % sh != 0 {
        bail!("truth height {th} is not a multiple of sparse height {sh}");
    }
    let sigma = SparsityFactor::new((th / sh) as u32).context("sparse and truth scans imply an unsupported factor")?;
    let extent = with_truth[0].3.extent();
    if let Some((id, ..)) = with_truth.iter().find(|(_, _, _, t)| t.extent() != extent) {
        bail!("sample `{id}` has a different physical extent from the rest");
    }

    let mut truths = Vec::new();
    let mut preds = Vec::new();
    for (_, _, p, t) in with_truth {
        preds.push(p);
        truths.push(t);
    }
    let sparse: Vec<ScanField> = with_sparse.into_iter().map(|(_, _, s, _)| s).collect();
    let card = build_scorecard(&truths, &preds, &sparse, extent, sigma, args.baseline.into())?;

    crate::ensure_parent(&args.out)?;
    if args.out.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
        let file = std::fs::File::create(&args.out).with_context(|| format!("writing {}", args.out.display()))?;
        write_scorecard_csv(file, std::slice::from_ref(&card))?;
    } else {
        crate::write_json(&args.out, &card)?;
    }
    for p in &card.properties {
        log::info!("{:<22} prediction {:.4}  baseline {:.4}", p.property, p.prediction_rmae, p.baseline_rmae);
    }
    log::info!("wrote {}", args.out.display());
    Ok(())
}
