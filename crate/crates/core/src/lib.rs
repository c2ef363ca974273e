//! Reconstruction of full-resolution conductive-AFM maps from sparse scans.
//!
//! The crate is organised along the data flow of a sparse-scan workflow:
//!
//! - [`scanio`]: the [`ScanField`] raster model, the `SCAF` container format,
//!   sparse downsampling, normalisation, crops and dihedral augmentation.
//! - [`synthgen`]: seedable synthetic MoS₂-like samples (islands, grain
//!   boundaries, point defects, cracks) with a tip-broadening imaging model.
//! - [`model`]: the shifted-window attention upsampler with hand-written
//!   backpropagation.
//! - [`training`]: L1 loss, Adam, the crop/augment/downsample training loop and
//!   fine-tuning.
//! - [`baselines`]: bicubic and Gaussian-process reconstructions.
//! - [`metrics`]: PSNR and SSIM.
//! - [`characterize`]: current-map property extraction and the relative-error
//!   scorecard.
//!
//! ```
//! use sparsecafm::scanio::{downsample, Channel, ScanField, SparsityFactor};
//!
//! let data: Vec<f32> = (0..16).map(|v| v as f32).collect();
//! let field = ScanField::new(Channel::Current, 4, 4, data).unwrap();
//! let sparse = downsample(&field, SparsityFactor::X2).unwrap();
//! assert_eq!(sparse.data(), &[0.0, 2.0, 8.0, 10.0]);
//! ```

pub mod baselines;
pub mod characterize;
mod error;
pub mod grid;
pub mod metrics;
pub mod model;
pub mod scanio;
pub mod synthgen;
pub mod training;

pub use error::{Error, Result};
pub use grid::BoolGrid;
pub use scanio::{Channel, NormState, ScanField, ScanPair, SparsityFactor};
