use std::collections::{BTreeMap, HashSet};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use sha2::{Digest, Sha256};
use sparsecafm::scanio::{downsample, write_scan};
use sparsecafm::synthgen::{generate_sample, write_mask, SampleSpec};
use sparsecafm::{Channel, SparsityFactor};

use crate::dataset::{scan_file_name, Manifest, ManifestEntry, SparseFiles, MANIFEST_FILE, MASK_EXTENSION};

#[derive(clap::Args)]
pub struct Args {
    /// Sample spec JSON; generator defaults when omitted.
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Number of samples.
    #[arg(long)]
    count: usize,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Master seed for per-sample seeds; the spec's rng_seed when omitted.
    #[arg(long)]
    seed: Option<u64>,
    /// Also write copies downsampled by this factor into `x<k>/` (repeatable).
    #[arg(long = "sparse", value_parser = crate::parse_sigma)]
    sparse: Vec<SparsityFactor>,
}

pub fn spec_digest(spec: &SampleSpec) -> Result<String> {
    let bytes = serde_json::to_vec(spec)?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

pub fn run(args: Args) -> Result<()> {
    let spec: SampleSpec = match &args.spec {
        Some(path) => serde_json::from_value(crate::read_json_value(path)?)
            .with_context(|| format!("invalid sample spec in {}", path.display()))?,
        None => SampleSpec::default(),
    };
    spec.validate()?;
    let mut sparsity = args.sparse.clone();
    sparsity.sort();
    sparsity.dedup();
    for s in &sparsity {
        if !spec.grid_size.is_multiple_of(s.get()) {
            bail!("{s} does not divide grid size {}", spec.grid_size);
        }
    }
    let seed = args.seed.unwrap_or(spec.rng_seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen = HashSet::new();
    let seeds: Vec<u64> = std::iter::from_fn(|| Some(rng.random::<u64>()))
        .filter(|s| seen.insert(*s))
        .take(args.count)
        .collect();

    std::fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    for s in &sparsity {
        let dir = args.out.join(sparse_dir(*s));
        std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let started = std::time::Instant::now();
    let samples = seeds
        .par_iter()
        .map(|&rng_seed| write_sample(&args.out, &SampleSpec { rng_seed, ..spec.clone() }, &sparsity))
        .collect::<Result<Vec<_>>>()?;

    let manifest = Manifest {
        spec_sha256: spec_digest(&spec)?,
        spec,
        seed,
        count: samples.len(),
        sparsity: sparsity.iter().map(|s| s.get() as u32).collect(),
        samples,
    };
    crate::write_json(&args.out.join(MANIFEST_FILE), &manifest)?;
    log::info!(
        "generated {} samples in {} ({:.2}s)",
        manifest.count,
        args.out.display(),
        started.elapsed().as_secs_f64()
    );
    Ok(())
}

fn sparse_dir(sigma: SparsityFactor) -> String {
    format!("x{}", sigma.get())
}

fn write_sample(root: &Path, spec: &SampleSpec, sparsity: &[SparsityFactor]) -> Result<ManifestEntry> {
    let (pair, mask) = generate_sample(spec)?;
    let id = pair.sample_id.clone();
    let morphology = PathBuf::from(scan_file_name(&id, Channel::Morphology));
    let current = PathBuf::from(scan_file_name(&id, Channel::Current));
    let mask_file = PathBuf::from(format!("{id}.{MASK_EXTENSION}"));
    write_scan(pair.channel(Channel::Morphology), root.join(&morphology))?;
    write_scan(pair.channel(Channel::Current), root.join(&current))?;
    write_mask(&mask, root.join(&mask_file))?;

    let mut sparse = BTreeMap::new();
    for &s in sparsity {
        let dir = PathBuf::from(sparse_dir(s));
        let files = SparseFiles {
            morphology: dir.join(&morphology),
            current: dir.join(&current),
        };
        write_scan(&downsample(pair.channel(Channel::Morphology), s)?, root.join(&files.morphology))?;
        write_scan(&downsample(pair.channel(Channel::Current), s)?, root.join(&files.current))?;
        sparse.insert(s.get().to_string(), files);
    }
    Ok(ManifestEntry {
        sample_id: id,
        rng_seed: spec.rng_seed,
        morphology,
        current,
        mask: mask_file,
        sparse,
    })
}
