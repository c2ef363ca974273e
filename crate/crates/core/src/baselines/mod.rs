//! Classical reconstructions used as reference points for the model.

mod bicubic;
mod gpr;

pub use bicubic::bicubic_upsample;
pub use gpr::{gpr_upsample, GprConfig, Kernel, TILE_OBSERVATIONS, TILE_OVERLAP};

use crate::scanio::ScanField;

/// Wraps reconstructed values, clamping to `[0, 1]` when the input was
/// normalised.
fn finish(x: &ScanField, h: usize, w: usize, mut data: Vec<f32>) -> ScanField {
    if x.is_normalized() {
        data.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
    }
    x.replace_data_unchecked(h, w, data)
}
