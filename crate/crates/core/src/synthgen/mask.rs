use std::path::Path;

use crate::grid::BoolGrid;
use crate::{Error, Result};

/// Ground-truth segmentation behind a synthetic sample.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroundTruthMask {
    pub film: BoolGrid,
    pub boundaries: BoolGrid,
    pub defects: BoolGrid,
    pub cracks: BoolGrid,
}

const MASK_MAGIC: &[u8; 4] = b"SCMK";
const FILM: u8 = 1;
const BOUNDARY: u8 = 2;
const DEFECT: u8 = 4;
const CRACK: u8 = 8;

impl GroundTruthMask {
    pub fn dims(&self) -> (usize, usize) {
        (self.film.height(), self.film.width())
    }

    /// Checks shared dimensions, `boundaries ⊆ dilate(film)` and
    /// `defects ⊆ film`.
    pub fn check(&self) -> Result<()> {
        let d = self.dims();
        for g in [&self.boundaries, &self.defects, &self.cracks] {
            if (g.height(), g.width()) != d {
                return Err(Error::Dimension("mask layers differ in size".into()));
            }
        }
        if !self.boundaries.is_subset_of(&self.film.dilate(1)) {
            return Err(Error::Validation("boundary pixels outside the film".into()));
        }
        if !self.defects.is_subset_of(&self.film) {
            return Err(Error::Validation("defect pixels outside the film".into()));
        }
        Ok(())
    }

    /// Number of planted defects (8-connected defect blobs).
    pub fn defect_sites(&self) -> usize {
        crate::characterize::label_components(&self.defects, crate::characterize::Connectivity::Eight).count
    }
}

/// `SCMK` layout: magic, version `u32`, height `u32`, width `u32`, then one
/// flag byte per pixel (bit 0 film, 1 boundary, 2 defect, 3 crack).
pub fn mask_to_bytes(mask: &GroundTruthMask) -> Vec<u8> {
    let (h, w) = mask.dims();
    let mut out = Vec::with_capacity(16 + h * w);
    out.extend_from_slice(MASK_MAGIC);
    out.extend_from_slice(&1u32.to_le_bytes());
    out.extend_from_slice(&(h as u32).to_le_bytes());
    out.extend_from_slice(&(w as u32).to_le_bytes());
    for i in 0..h * w {
        let mut b = 0;
        if mask.film.data()[i] {
            b |= FILM;
        }
        if mask.boundaries.data()[i] {
            b |= BOUNDARY;
        }
        if mask.defects.data()[i] {
            b |= DEFECT;
        }
        if mask.cracks.data()[i] {
            b |= CRACK;
        }
        out.push(b);
    }
    out
}

pub fn mask_from_bytes(bytes: &[u8]) -> Result<GroundTruthMask> {
    if bytes.len() < 4 || &bytes[..4] != MASK_MAGIC {
        return Err(Error::Format("missing SCMK magic".into()));
    }
    if bytes.len() < 16 {
        return Err(Error::Corruption("mask header truncated".into()));
    }
    let u32_at = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap()) as usize;
    let (h, w) = (u32_at(8), u32_at(12));
    let body = &bytes[16..];
    if body.len() != h * w {
        return Err(Error::Corruption(format!("mask body has {} bytes, expected {}", body.len(), h * w)));
    }
    let layer = |bit: u8| BoolGrid::from_vec(h, w, body.iter().map(|b| b & bit != 0).collect());
    Ok(GroundTruthMask {
        film: layer(FILM),
        boundaries: layer(BOUNDARY),
        defects: layer(DEFECT),
        cracks: layer(CRACK),
    })
}

pub fn write_mask(mask: &GroundTruthMask, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, mask_to_bytes(mask)).map_err(|e| Error::io(path, e))
}

pub fn read_mask(path: impl AsRef<Path>) -> Result<GroundTruthMask> {
    let path = path.as_ref();
    mask_from_bytes(&std::fs::read(path).map_err(|e| Error::io(path, e))?)
}
