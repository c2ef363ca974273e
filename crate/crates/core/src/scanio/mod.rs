//! Scan data model, the `SCAF` container, and the sparse-acquisition
//! transforms applied to it.

mod field;
mod format;
mod ops;

pub use field::{Channel, NormState, PhysicalExtent, ScanField, ScanPair, SparsityFactor};
pub use format::{read_scan, scan_from_bytes, scan_to_bytes, write_scan, FORMAT_VERSION, MAGIC};
pub use ops::{
    augment_pair, denormalize, dihedral, downsample, nearest_upsample, normalize, random_crop_pair,
    Dihedral,
};
pub(crate) use ops::crop;
