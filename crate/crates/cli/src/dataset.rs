use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use sparsecafm::scanio::read_scan;
use sparsecafm::synthgen::SampleSpec;
use sparsecafm::{Channel, ScanField, ScanPair};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const SCAN_EXTENSION: &str = "scaf";
pub const MASK_EXTENSION: &str = "scmk";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub spec: SampleSpec,
    pub spec_sha256: String,
    pub seed: u64,
    pub count: usize,
    /// Sparsity factors for which downsampled copies were written.
    pub sparsity: Vec<u32>,
    pub samples: Vec<ManifestEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub sample_id: String,
    pub rng_seed: u64,
    pub morphology: PathBuf,
    pub current: PathBuf,
    pub mask: PathBuf,
    /// Downsampled copies keyed by σ, paths relative to the dataset root.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub sparse: BTreeMap<String, SparseFiles>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseFiles {
    pub morphology: PathBuf,
    pub current: PathBuf,
}

pub fn scan_file_name(sample_id: &str, channel: Channel) -> String {
    format!("{sample_id}_{}.{SCAN_EXTENSION}", channel.name())
}

pub fn read_manifest(dir: &Path) -> Result<Option<Manifest>> {
    let path = dir.join(MANIFEST_FILE);
    if !path.exists() {
        return Ok(None);
    }
    let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    let manifest = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    Ok(Some(manifest))
}

/// All SCAF files directly inside `dir`, sorted by path.
pub fn scan_dir(dir: &Path) -> Result<Vec<(PathBuf, ScanField)>> {
    let entries = std::fs::read_dir(dir).with_context(|| format!("listing {}", dir.display()))?;
    let mut paths = Vec::new();
    for entry in entries {
        let path = entry.with_context(|| format!("listing {}", dir.display()))?.path();
        if path.is_file() && path.extension().is_some_and(|e| e == SCAN_EXTENSION) {
            paths.push(path);
        }
    }
    paths.sort();
    paths
        .into_iter()
        .map(|p| {
            let field = read_scan(&p).with_context(|| format!("reading {}", p.display()))?;
            Ok((p, field))
        })
        .collect()
}

/// Sample id of a scan, falling back to the file stem when the trailer has none.
pub fn sample_key(path: &Path, field: &ScanField) -> String {
    if !field.sample_id().is_empty() {
        return field.sample_id().to_string();
    }
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let suffix = format!("_{}", field.channel().name());
    stem.strip_suffix(&suffix).map(str::to_string).unwrap_or(stem)
}

/// Indexes scans by `(sample id, channel)`, rejecting duplicates.
pub fn index_scans(dir: &Path) -> Result<BTreeMap<(String, Channel), (PathBuf, ScanField)>> {
    let mut index = BTreeMap::new();
    for (path, field) in scan_dir(dir)? {
        let key = (sample_key(&path, &field), field.channel());
        if let Some((first, _)) = index.get(&key) {
            let first: &PathBuf = first;
            bail!(
                "{} and {} both hold the {} channel of sample `{}`",
                first.display(),
                path.display(),
                key.1.name(),
                key.0
            );
        }
        index.insert(key, (path, field));
    }
    Ok(index)
}

/// Loads the full-resolution pairs of a dataset directory.
///
/// Uses the manifest when present and otherwise pairs the morphology and
/// current scans found in the directory by sample id.
pub fn load_pairs(dir: &Path) -> Result<Vec<ScanPair>> {
    if let Some(manifest) = read_manifest(dir)? {
        return manifest
            .samples
            .iter()
            .map(|s| {
                let morph = read_scan(dir.join(&s.morphology)).with_context(|| format!("sample `{}`", s.sample_id))?;
                let current = read_scan(dir.join(&s.current)).with_context(|| format!("sample `{}`", s.sample_id))?;
                Ok(ScanPair::new(morph, current, s.sample_id.clone())?)
            })
            .collect();
    }
    let mut index = index_scans(dir)?;
    let ids: Vec<String> = index.keys().map(|(id, _)| id.clone()).collect();
    let mut pairs = Vec::new();
    let mut unpaired = Vec::new();
    for id in ids {
        let morph = index.remove(&(id.clone(), Channel::Morphology));
        let current = index.remove(&(id.clone(), Channel::Current));
        match (morph, current) {
            (Some((_, m)), Some((_, c))) => pairs.push(ScanPair::new(m, c, id)?),
            (Some((p, _)), None) | (None, Some((p, _))) => unpaired.push(p.display().to_string()),
            (None, None) => {}
        }
    }
    if !unpaired.is_empty() {
        bail!("scans without a partner channel: {}", unpaired.join(", "));
    }
    Ok(pairs)
}
