//! Property extraction from full-resolution current maps and the
//! relative-error scorecard built on top of it.

mod label;
mod otsu;
mod properties;
mod scorecard;
mod skeleton;

pub use label::{label_components, Components, Connectivity};
pub use otsu::{binarize_current, Binarization, HISTOGRAM_BINS};
pub use properties::{extract_properties, Cutoffs, PropertyReport, CRACK_ELONGATION};
pub use scorecard::{
    build_scorecard, write_scorecard_csv, BaselineUpsampling, PropertyError, Scorecard, PROPERTY_NAMES, RMAE_EPSILON,
};
pub use skeleton::{skeleton_length, thin};
