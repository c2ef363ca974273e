//! The `SCAF` container.
//!
//! Little-endian layout:
//!
//! | bytes     | content                                   |
//! |-----------|-------------------------------------------|
//! | 4         | magic `SCAF`                              |
//! | 4         | format version (`u32`)                    |
//! | 4 + 4     | height, width (`u32`)                     |
//! | 1         | channel code (`0` morphology, `1` current)|
//! | 4·H·W     | `f32` samples, row-major                  |
//! | rest      | UTF-8 JSON trailer with the metadata      |

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Channel, NormState, PhysicalExtent, ScanField};
use crate::{Error, Result};

pub const MAGIC: &[u8; 4] = b"SCAF";
pub const FORMAT_VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 8 + 1;

#[derive(Serialize, Deserialize)]
struct Trailer {
    physical_extent_um: [f64; 2],
    units: String,
    norm_state: String,
    norm_min: Option<f32>,
    norm_max: Option<f32>,
    sample_id: String,
}

pub fn scan_to_bytes(field: &ScanField) -> Result<Vec<u8>> {
    if let Some(v) = field.data().iter().find(|v| !v.is_finite()) {
        return Err(Error::Validation(format!("refusing to write non-finite value {v}")));
    }
    let extent = field.extent();
    let (norm_state, norm_min, norm_max) = match field.norm_state() {
        NormState::Raw => ("raw", None, None),
        NormState::Normalized { min, max } => ("normalized", Some(min), Some(max)),
    };
    let trailer = serde_json::to_vec(&Trailer {
        physical_extent_um: [extent.width_um, extent.height_um],
        units: field.units().to_string(),
        norm_state: norm_state.to_string(),
        norm_min,
        norm_max,
        sample_id: field.sample_id().to_string(),
    })?;
    let mut out = Vec::with_capacity(HEADER_LEN + field.data().len() * 4 + trailer.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(field.height() as u32).to_le_bytes());
    out.extend_from_slice(&(field.width() as u32).to_le_bytes());
    out.push(field.channel().code());
    for v in field.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend_from_slice(&trailer);
    Ok(out)
}

pub fn scan_from_bytes(bytes: &[u8]) -> Result<ScanField> {
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(Error::Format("missing SCAF magic".into()));
    }
    if bytes.len() < HEADER_LEN {
        return Err(Error::Corruption(format!("header truncated at {} bytes", bytes.len())));
    }
    let u32_at = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap());
    let version = u32_at(4);
    if version != FORMAT_VERSION {
        return Err(Error::Format(format!("unsupported SCAF version {version}")));
    }
    let height = u32_at(8) as usize;
    let width = u32_at(12) as usize;
    let channel = Channel::from_code(bytes[16])
        .ok_or_else(|| Error::Format(format!("unknown channel code {}", bytes[16])))?;
    let payload = height
        .checked_mul(width)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| Error::Corruption("dimensions overflow".into()))?;
    let body = &bytes[HEADER_LEN..];
    if body.len() < payload {
        return Err(Error::Corruption(format!(
            "payload truncated: expected {payload} bytes of samples, found {}",
            body.len()
        )));
    }
    let data: Vec<f32> = body[..payload]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let trailer: Trailer = serde_json::from_slice(&body[payload..])
        .map_err(|e| Error::Corruption(format!("metadata trailer: {e}")))?;
    let norm = match (trailer.norm_state.as_str(), trailer.norm_min, trailer.norm_max) {
        ("raw", _, _) => NormState::Raw,
        ("normalized", Some(min), Some(max)) => NormState::Normalized { min, max },
        (state, _, _) => {
            return Err(Error::Corruption(format!("bad norm_state {state:?} in trailer")));
        }
    };
    let [w_um, h_um] = trailer.physical_extent_um;
    ScanField::new(channel, height, width, data)
        .map_err(|e| Error::Corruption(e.to_string()))?
        .with_extent(PhysicalExtent::new(w_um, h_um)?)
        .with_units(trailer.units)
        .with_sample_id(trailer.sample_id)
        .with_norm_state(norm)
}

pub fn write_scan(field: &ScanField, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = scan_to_bytes(field)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_scan(path: impl AsRef<Path>) -> Result<ScanField> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    scan_from_bytes(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ScanField {
        ScanField::new(Channel::Current, 2, 2, vec![0.0, 1.0, 2.0, 3.0])
            .unwrap()
            .with_sample_id("s0")
    }

    #[test]
    fn two_by_two_round_trip() {
        let f = small();
        let back = scan_from_bytes(&scan_to_bytes(&f).unwrap()).unwrap();
        assert_eq!(back, f);
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.scaf");
        let f = small().with_norm_state(NormState::Normalized { min: 0.0, max: 0.0 });
        assert!(f.is_err(), "degenerate range with non-zero data must be rejected");
        let f = ScanField::new(Channel::Morphology, 1, 2, vec![0.0, 1.0])
            .unwrap()
            .with_norm_state(NormState::Normalized { min: -3.25, max: 7.5 })
            .unwrap();
        write_scan(&f, &path).unwrap();
        assert_eq!(read_scan(&path).unwrap(), f);
    }

    #[test]
    fn bad_magic_is_format_error() {
        let mut bytes = scan_to_bytes(&small()).unwrap();
        bytes[..4].copy_from_slice(b"XXXX");
        assert!(matches!(scan_from_bytes(&bytes), Err(Error::Format(_))));
    }

    #[test]
    fn truncated_payload_is_corruption() {
        let bytes = scan_to_bytes(&small()).unwrap();
        assert!(matches!(scan_from_bytes(&bytes[..HEADER_LEN + 6]), Err(Error::Corruption(_))));
        assert!(matches!(scan_from_bytes(&bytes[..10]), Err(Error::Corruption(_))));
    }

    #[test]
    fn missing_trailer_is_corruption() {
        let bytes = scan_to_bytes(&small()).unwrap();
        assert!(matches!(scan_from_bytes(&bytes[..HEADER_LEN + 16]), Err(Error::Corruption(_))));
    }

    #[test]
    fn full_frame_size_matches_layout() {
        let f = ScanField::zeros(Channel::Current, 512, 512).unwrap();
        let bytes = scan_to_bytes(&f).unwrap();
        let trailer = bytes.len() - (4 + 4 + 8 + 1 + 512 * 512 * 4);
        assert_eq!(&bytes[4 + 4 + 8 + 1 + 512 * 512 * 4..][..1], b"{");
        assert!(serde_json::from_slice::<serde_json::Value>(&bytes[bytes.len() - trailer..]).is_ok());
    }

    #[test]
    fn trailer_keys() {
        let bytes = scan_to_bytes(&small()).unwrap();
        let v: serde_json::Value = serde_json::from_slice(&bytes[HEADER_LEN + 16..]).unwrap();
        let keys: Vec<_> = v.as_object().unwrap().keys().cloned().collect();
        for k in ["physical_extent_um", "units", "norm_state", "norm_min", "norm_max", "sample_id"] {
            assert!(keys.iter().any(|x| x == k), "missing {k}");
        }
        assert_eq!(keys.len(), 6);
    }
}
