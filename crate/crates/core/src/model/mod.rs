//! Shifted-window attention upsampler.
//!
//! For a sparse input `x` of size `h × w` and sparsity factor σ the network
//! computes
//!
//! ```text
//! F₀   = conv3×3(x)                      shallow features, C channels
//! F_DF = conv3×3(RSTB_n(… RSTB_1(F₀)))   deep features
//! ŷ    = conv3×3(shuffle(conv(… (F₀ + F_DF))))
//! ```
//!
//! where each residual Swin block (RSTB) stacks transformer layers that
//! alternate between regular and cyclically shifted windows, followed by a
//! 3×3 convolution and a skip from the block input. The head repeats
//! `conv → depth-to-space(2)` log₂σ times and ends in a 1-channel conv.
//!
//! Forward and backward passes are written by hand and run in `f32` or
//! `f64`; the `f64` path exists for finite-difference gradient checks.

mod attention;
mod checkpoint;
mod config;
mod layers;
mod network;
mod params;
mod real;

pub use attention::WindowPlan;
pub use checkpoint::{Checkpoint, EpochRecord, OptimizerState, TrainingMeta};
pub use config::ModelConfig;
pub use layers::{depth_to_space, space_to_depth, Feat};
pub use network::{Architecture, Upsampler};
pub use params::{ParamSet, Tensor};
pub use real::Real;

pub(crate) use network::{crop_top_left, reflect_pad};

use crate::scanio::{NormState, ScanField};
use crate::{Error, Result};

/// Channel-last feature map used throughout the network.
pub type FeatureMap = Feat<f32>;

/// Attention statistics of one transformer layer evaluation.
pub struct AttentionTrace {
    pub plan: WindowPlan,
    pub heads: usize,
    /// Softmax weights laid out `[window][head][query][key]`.
    pub weights: Vec<f32>,
}

fn field_to_feat(x: &ScanField) -> Result<FeatureMap> {
    if !x.is_normalized() {
        return Err(Error::State("model input must be normalised".into()));
    }
    Ok(Feat { h: x.height(), w: x.width(), c: 1, data: x.data().to_vec() })
}

/// Shallow feature extraction: one 3×3 convolution from 1 to C channels.
pub fn shallow_extract(x: &ScanField, model: &Upsampler<f32>) -> Result<FeatureMap> {
    Ok(model.shallow(&field_to_feat(x)?))
}

/// Windows of a feature map, zero-padded to window multiples.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowBatch<T> {
    pub window: usize,
    pub h: usize,
    pub w: usize,
    pub padded_h: usize,
    pub padded_w: usize,
    pub c: usize,
    /// `[window][token][channel]`.
    pub data: Vec<T>,
}

impl<T: Real> WindowBatch<T> {
    pub fn len(&self) -> usize {
        (self.padded_h / self.window) * (self.padded_w / self.window)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn tokens_per_window(&self) -> usize {
        self.window * self.window
    }

    pub fn window_tokens(&self, i: usize) -> &[T] {
        let n = self.tokens_per_window() * self.c;
        &self.data[i * n..(i + 1) * n]
    }
}

pub fn window_partition<T: Real>(f: &Feat<T>, window: usize) -> WindowBatch<T> {
    assert!(window > 0);
    let hp = f.h.div_ceil(window) * window;
    let wp = f.w.div_ceil(window) * window;
    let mut padded = Feat::zeros(hp, wp, f.c);
    for y in 0..f.h {
        padded.data[y * wp * f.c..(y * wp + f.w) * f.c].copy_from_slice(&f.data[y * f.w * f.c..(y + 1) * f.w * f.c]);
    }
    let plan = WindowPlan::new(hp, wp, window, 0);
    WindowBatch {
        window,
        h: f.h,
        w: f.w,
        padded_h: hp,
        padded_w: wp,
        c: f.c,
        data: plan.gather(&padded.data, f.c),
    }
}

pub fn window_reverse<T: Real>(b: &WindowBatch<T>) -> Feat<T> {
    let plan = WindowPlan::new(b.padded_h, b.padded_w, b.window, 0);
    let padded = Feat { h: b.padded_h, w: b.padded_w, c: b.c, data: plan.scatter(&b.data, b.c) };
    crop_top_left(&padded, b.h, b.w)
}

/// One transformer layer of residual block `block`, with the given shift.
/// Sides that are not window multiples are reflect-padded and cropped back.
pub fn stl_forward(
    f: &FeatureMap,
    model: &Upsampler<f32>,
    block: usize,
    layer: usize,
    shifted: bool,
) -> Result<(FeatureMap, AttentionTrace)> {
    let ws = model.config().window_size;
    let padded = reflect_pad(f, ws);
    let (out, cache) = model.swin_layer(block, layer, &padded, shifted)?;
    let trace = AttentionTrace {
        plan: cache.plan().clone(),
        heads: model.config().num_heads,
        weights: cache.attention().to_vec(),
    };
    Ok((crop_top_left(&out, f.h, f.w), trace))
}

/// Residual Swin blocks followed by the body convolution.
pub fn deep_extract(f0: &FeatureMap, model: &Upsampler<f32>) -> Result<FeatureMap> {
    let ws = model.config().window_size;
    let out = model.deep_features(&reflect_pad(f0, ws))?;
    Ok(crop_top_left(&out, f0.h, f0.w))
}

/// Sub-pixel reconstruction head applied to `F₀ + F_DF`.
pub fn reconstruct(f_sum: &FeatureMap, model: &Upsampler<f32>) -> Result<FeatureMap> {
    if f_sum.c != model.config().embed_dim {
        return Err(Error::Dimension(format!(
            "expected {} channels, got {}",
            model.config().embed_dim,
            f_sum.c
        )));
    }
    model.reconstruct_features(f_sum)
}

/// Upsamples a normalised sparse field by the checkpoint's σ. Output values
/// are clamped to `[0, 1]` and keep the input's normalisation range.
pub fn forward(x: &ScanField, checkpoint: &Checkpoint) -> Result<ScanField> {
    predict_field(x, &checkpoint.model)
}

pub fn predict_field(x: &ScanField, model: &Upsampler<f32>) -> Result<ScanField> {
    let feat = field_to_feat(x)?;
    let out = model.predict(&feat)?;
    let s = model.config().sigma.get();
    let (h, w) = (x.height() * s, x.width() * s);
    if (out.h, out.w) != (h, w) {
        return Err(Error::Dimension(format!("expected {h}x{w} output, got {}x{}", out.h, out.w)));
    }
    let degenerate = matches!(x.norm_state(), NormState::Normalized { min, max } if min == max);
    let data = if degenerate {
        vec![0.0; h * w]
    } else {
        out.data.iter().map(|v| v.clamp(0.0, 1.0)).collect()
    };
    x.with_data(h, w, data)
}
