//! Composition of the upsampler:
//! shallow conv → residual Swin blocks → body conv → sum with the shallow
//! features → sub-pixel reconstruction head.

use std::sync::Arc;

use super::attention::{SwinCache, SwinLayer};
use super::layers::{depth_to_space, space_to_depth, Conv3x3, Feat, LayerNorm, Linear};
use super::params::{Init, ParamSpec};
use super::{ModelConfig, ParamSet, Real};
use crate::{Error, Result};

#[derive(Debug, Clone)]
pub(crate) struct ResidualBlock {
    pub layers: Vec<SwinLayer>,
    pub conv: Conv3x3,
}

/// Parameter layout and layer wiring implied by a [`ModelConfig`].
#[derive(Debug, Clone)]
pub struct Architecture {
    config: ModelConfig,
    specs: Vec<ParamSpec>,
    pub(crate) conv_first: Conv3x3,
    pub(crate) blocks: Vec<ResidualBlock>,
    pub(crate) conv_after_body: Conv3x3,
    pub(crate) upsample: Vec<Conv3x3>,
    pub(crate) conv_last: Conv3x3,
}

struct Builder {
    specs: Vec<ParamSpec>,
}

impl Builder {
    fn add(&mut self, name: String, shape: Vec<usize>, init: Init) -> usize {
        self.specs.push(ParamSpec { name, shape, init });
        self.specs.len() - 1
    }

    fn conv(&mut self, prefix: &str, cin: usize, cout: usize) -> Conv3x3 {
        let fan_in = 9 * cin;
        Conv3x3 {
            weight: self.add(format!("{prefix}.weight"), vec![3, 3, cin, cout], Init::FanIn(fan_in)),
            bias: self.add(format!("{prefix}.bias"), vec![cout], Init::FanIn(fan_in)),
            cin,
            cout,
        }
    }

    fn linear(&mut self, prefix: &str, cin: usize, cout: usize) -> Linear {
        Linear {
            weight: self.add(format!("{prefix}.weight"), vec![cin, cout], Init::TruncNormal(0.02)),
            bias: self.add(format!("{prefix}.bias"), vec![cout], Init::Zeros),
            cin,
            cout,
        }
    }

    fn norm(&mut self, prefix: &str, dim: usize) -> LayerNorm {
        LayerNorm {
            gamma: self.add(format!("{prefix}.weight"), vec![dim], Init::Ones),
            beta: self.add(format!("{prefix}.bias"), vec![dim], Init::Zeros),
            dim,
        }
    }
}

impl Architecture {
    pub fn new(config: &ModelConfig) -> Result<Self> {
        config.validate()?;
        let c = config.embed_dim;
        let ws = config.window_size;
        let mut b = Builder { specs: Vec::new() };
        let conv_first = b.conv("conv_first", config.in_channels, c);
        let mut blocks = Vec::with_capacity(config.rstb_count);
        for i in 0..config.rstb_count {
            let mut layers = Vec::with_capacity(config.stl_per_rstb);
            for j in 0..config.stl_per_rstb {
                let p = format!("layers.{i}.blocks.{j}");
                let norm1 = b.norm(&format!("{p}.norm1"), c);
                let qkv = b.linear(&format!("{p}.attn.qkv"), c, 3 * c);
                let bias_table = b.add(
                    format!("{p}.attn.relative_position_bias_table"),
                    vec![(2 * ws - 1) * (2 * ws - 1), config.num_heads],
                    Init::TruncNormal(0.02),
                );
                let proj = b.linear(&format!("{p}.attn.proj"), c, c);
                let norm2 = b.norm(&format!("{p}.norm2"), c);
                let fc1 = b.linear(&format!("{p}.mlp.fc1"), c, config.hidden_dim());
                let fc2 = b.linear(&format!("{p}.mlp.fc2"), config.hidden_dim(), c);
                layers.push(SwinLayer {
                    dim: c,
                    heads: config.num_heads,
                    ws,
                    shifted: j % 2 == 1,
                    norm1,
                    qkv,
                    bias_table,
                    proj,
                    norm2,
                    fc1,
                    fc2,
                });
            }
            let conv = b.conv(&format!("layers.{i}.conv"), c, c);
            blocks.push(ResidualBlock { layers, conv });
        }
        let conv_after_body = b.conv("conv_after_body", c, c);
        let upsample = (0..config.sigma.doublings())
            .map(|i| b.conv(&format!("upsample.{i}"), c, 4 * c))
            .collect();
        let conv_last = b.conv("conv_last", c, 1);
        Ok(Architecture {
            config: config.clone(),
            specs: b.specs,
            conv_first,
            blocks,
            conv_after_body,
            upsample,
            conv_last,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    /// `(name, shape)` of every parameter tensor, in storage order.
    pub fn parameter_shapes(&self) -> Vec<(String, Vec<usize>)> {
        self.specs.iter().map(|s| (s.name.clone(), s.shape.clone())).collect()
    }

    pub fn parameter_count(&self) -> usize {
        self.specs.iter().map(|s| s.shape.iter().product::<usize>()).sum()
    }

    pub(crate) fn specs(&self) -> &[ParamSpec] {
        &self.specs
    }
}

/// Intermediate state kept for the backward pass.
pub(crate) struct Trace<T> {
    h: usize,
    w: usize,
    first_cols: Vec<T>,
    blocks: Vec<(Vec<SwinCache<T>>, Vec<T>)>,
    body_cols: Vec<T>,
    up_cols: Vec<Vec<T>>,
    last_cols: Vec<T>,
    out_h: usize,
    out_w: usize,
}

impl<T> Trace<T> {
    #[cfg(test)]
    pub fn stl_caches(&self) -> impl Iterator<Item = &SwinCache<T>> {
        self.blocks.iter().flat_map(|(c, _)| c.iter())
    }
}

/// The upsampler: an architecture plus one set of parameters.
#[derive(Debug, Clone)]
pub struct Upsampler<T> {
    arch: Arc<Architecture>,
    params: ParamSet<T>,
}

fn reflect(i: usize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * n - 2;
    let m = i % period;
    if m < n {
        m
    } else {
        period - m
    }
}

/// Reflect-pads bottom and right edges up to multiples of `multiple`.
pub(crate) fn reflect_pad<T: Real>(x: &Feat<T>, multiple: usize) -> Feat<T> {
    let hp = x.h.div_ceil(multiple) * multiple;
    let wp = x.w.div_ceil(multiple) * multiple;
    if (hp, wp) == (x.h, x.w) {
        return x.clone();
    }
    let mut out = Feat::zeros(hp, wp, x.c);
    for y in 0..hp {
        for xx in 0..wp {
            let src = (reflect(y, x.h) * x.w + reflect(xx, x.w)) * x.c;
            out.data[(y * wp + xx) * x.c..(y * wp + xx + 1) * x.c].copy_from_slice(&x.data[src..src + x.c]);
        }
    }
    out
}

pub(crate) fn crop_top_left<T: Real>(x: &Feat<T>, h: usize, w: usize) -> Feat<T> {
    if (h, w) == (x.h, x.w) {
        return x.clone();
    }
    let mut out = Feat::zeros(h, w, x.c);
    for y in 0..h {
        out.data[y * w * x.c..(y + 1) * w * x.c].copy_from_slice(&x.data[y * x.w * x.c..(y * x.w + w) * x.c]);
    }
    out
}

fn check_finite<T: Real>(f: &Feat<T>, layer: impl FnOnce() -> String) -> Result<()> {
    if f.is_finite() {
        Ok(())
    } else {
        Err(Error::Numeric { layer: layer() })
    }
}

impl<T: Real> Upsampler<T> {
    /// Freshly initialised network, deterministic in `seed`.
    pub fn new(config: &ModelConfig, seed: u64) -> Result<Self> {
        let arch = Architecture::new(config)?;
        let params = ParamSet::init(arch.specs(), seed);
        Ok(Upsampler { arch: Arc::new(arch), params })
    }

    /// Wraps existing parameters, checking names and shapes against `config`.
    pub fn from_params(config: &ModelConfig, params: ParamSet<T>) -> Result<Self> {
        let arch = Architecture::new(config)?;
        let expected = arch.specs();
        if expected.len() != params.tensors().len() {
            return Err(Error::Config(format!(
                "expected {} parameter tensors, found {}",
                expected.len(),
                params.tensors().len()
            )));
        }
        for (spec, t) in expected.iter().zip(params.tensors()) {
            if spec.name != t.name || spec.shape != t.shape || t.data.len() != spec.shape.iter().product::<usize>() {
                return Err(Error::Config(format!(
                    "parameter {} {:?} does not match expected {} {:?}",
                    t.name, t.shape, spec.name, spec.shape
                )));
            }
        }
        if !params.all_finite() {
            return Err(Error::Validation("non-finite parameter values".into()));
        }
        Ok(Upsampler { arch: Arc::new(arch), params })
    }

    pub fn config(&self) -> &ModelConfig {
        self.arch.config()
    }

    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    pub fn params(&self) -> &ParamSet<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet<T> {
        &mut self.params
    }

    pub fn into_params(self) -> ParamSet<T> {
        self.params
    }

    pub fn cast<U: Real>(&self) -> Upsampler<U> {
        Upsampler { arch: self.arch.clone(), params: self.params.cast() }
    }

    pub fn shallow(&self, x: &Feat<T>) -> Feat<T> {
        self.arch.conv_first.forward(&self.params, x, false).0
    }

    /// Runs one transformer layer with its shift flag overridden.
    pub(crate) fn swin_layer(&self, block: usize, layer: usize, x: &Feat<T>, shifted: bool) -> Result<(Feat<T>, SwinCache<T>)> {
        let mut l = self
            .arch
            .blocks
            .get(block)
            .and_then(|b| b.layers.get(layer))
            .ok_or_else(|| Error::Config(format!("no layer {layer} in block {block}")))?
            .clone();
        l.shifted = shifted;
        let (out, cache) = l.forward(&self.params, x, true);
        check_finite(&out, || format!("rstb{block}.stl{layer}"))?;
        Ok((out, cache.unwrap()))
    }

    fn deep(&self, f0: &Feat<T>, keep: bool) -> Result<(Feat<T>, Vec<(Vec<SwinCache<T>>, Vec<T>)>, Vec<T>)> {
        let p = &self.params;
        let mut x = f0.clone();
        let mut caches = Vec::with_capacity(if keep { self.arch.blocks.len() } else { 0 });
        for (bi, block) in self.arch.blocks.iter().enumerate() {
            let input = x.clone();
            let mut layer_caches = Vec::with_capacity(block.layers.len());
            for (li, layer) in block.layers.iter().enumerate() {
                let (out, cache) = layer.forward(p, &x, keep);
                check_finite(&out, || format!("rstb{bi}.stl{li}"))?;
                x = out;
                if let Some(c) = cache {
                    layer_caches.push(c);
                }
            }
            let (mut out, cols) = block.conv.forward(p, &x, keep);
            out.add_assign(&input);
            check_finite(&out, || format!("rstb{bi}.conv"))?;
            x = out;
            if keep {
                caches.push((layer_caches, cols.unwrap()));
            }
        }
        let (out, cols) = self.arch.conv_after_body.forward(p, &x, keep);
        check_finite(&out, || "conv_after_body".into())?;
        Ok((out, caches, cols.unwrap_or_default()))
    }

    /// Deep feature extraction on a map whose sides are window multiples.
    pub fn deep_features(&self, f0: &Feat<T>) -> Result<Feat<T>> {
        Ok(self.deep(f0, false)?.0)
    }

    fn head(&self, f_sum: &Feat<T>, keep: bool) -> Result<(Feat<T>, Vec<Vec<T>>, Vec<T>)> {
        let p = &self.params;
        let mut s = f_sum.clone();
        let mut up_cols = Vec::new();
        for (i, conv) in self.arch.upsample.iter().enumerate() {
            let (out, cols) = conv.forward(p, &s, keep);
            check_finite(&out, || format!("upsample.{i}"))?;
            s = depth_to_space(&out, 2);
            if let Some(c) = cols {
                up_cols.push(c);
            }
        }
        let (out, cols) = self.arch.conv_last.forward(p, &s, keep);
        check_finite(&out, || "conv_last".into())?;
        Ok((out, up_cols, cols.unwrap_or_default()))
    }

    /// Sub-pixel reconstruction head: `σ·h × σ·w × 1` from `h × w × C`.
    pub fn reconstruct_features(&self, f_sum: &Feat<T>) -> Result<Feat<T>> {
        Ok(self.head(f_sum, false)?.0)
    }

    /// Full network on a single-channel `h × w` input; output is
    /// `σ·h × σ·w`, unclamped.
    pub(crate) fn run(&self, x: &Feat<T>, keep: bool) -> Result<(Feat<T>, Option<Trace<T>>)> {
        let cfg = self.arch.config();
        if x.c != cfg.in_channels {
            return Err(Error::Dimension(format!("expected {} input channel(s), got {}", cfg.in_channels, x.c)));
        }
        let s = cfg.sigma.get();
        let xp = reflect_pad(x, cfg.window_size);
        let (f0, first_cols) = self.arch.conv_first.forward(&self.params, &xp, keep);
        check_finite(&f0, || "conv_first".into())?;
        let (fdf, blocks, body_cols) = self.deep(&f0, keep)?;
        let (out, up_cols, last_cols) = self.head(&f0.add(&fdf), keep)?;
        let (out_h, out_w) = (out.h, out.w);
        let out = crop_top_left(&out, s * x.h, s * x.w);
        let trace = keep.then(|| Trace {
            h: x.h,
            w: x.w,
            first_cols: first_cols.unwrap(),
            blocks,
            body_cols,
            up_cols,
            last_cols,
            out_h,
            out_w,
        });
        Ok((out, trace))
    }

    /// Inference on a single-channel map.
    pub fn predict(&self, x: &Feat<T>) -> Result<Feat<T>> {
        Ok(self.run(x, false)?.0)
    }

    /// Accumulates parameter gradients for `d_out` (gradient w.r.t. the
    /// cropped output) into `grads`.
    pub(crate) fn backward(&self, trace: &Trace<T>, d_out: &Feat<T>, grads: &mut ParamSet<T>) {
        let p = &self.params;
        let arch = &*self.arch;
        let s = arch.config().sigma.get();
        debug_assert_eq!((d_out.h, d_out.w), (s * trace.h, s * trace.w));
        let mut d = Feat::zeros(trace.out_h, trace.out_w, 1);
        for y in 0..d_out.h {
            d.data[y * trace.out_w..y * trace.out_w + d_out.w]
                .copy_from_slice(&d_out.data[y * d_out.w..(y + 1) * d_out.w]);
        }
        let mut ds = arch.conv_last.backward(p, &trace.last_cols, &d, grads, true).unwrap();
        for (conv, cols) in arch.upsample.iter().zip(&trace.up_cols).rev() {
            let dconv = space_to_depth(&ds, 2);
            ds = conv.backward(p, cols, &dconv, grads, true).unwrap();
        }
        // f_sum = f0 + conv_after_body(deep(f0))
        let mut df0 = ds.clone();
        let mut dx = arch.conv_after_body.backward(p, &trace.body_cols, &ds, grads, true).unwrap();
        for (block, (caches, cols)) in arch.blocks.iter().zip(&trace.blocks).rev() {
            let mut dl = block.conv.backward(p, cols, &dx, grads, true).unwrap();
            for (layer, cache) in block.layers.iter().zip(caches).rev() {
                dl = layer.backward(p, cache, &dl, grads);
            }
            dx.add_assign(&dl);
        }
        df0.add_assign(&dx);
        arch.conv_first.backward(p, &trace.first_cols, &df0, grads, false);
    }

    /// Mean absolute error of the raw output against `target` and its
    /// gradient with respect to every parameter.
    pub fn l1_loss_and_grad(&self, x: &Feat<T>, target: &[T]) -> Result<(T, ParamSet<T>)> {
        let mut grads = self.params.zeros_like();
        let loss = self.accumulate_l1_grad(x, target, T::one(), &mut grads)?;
        Ok((loss, grads))
    }

    /// Adds `weight · ∂L1/∂θ` into `grads`; returns the unweighted loss.
    pub(crate) fn accumulate_l1_grad(&self, x: &Feat<T>, target: &[T], weight: T, grads: &mut ParamSet<T>) -> Result<T> {
        let (out, trace) = self.run(x, true)?;
        if out.data.len() != target.len() {
            return Err(Error::Dimension(format!(
                "target has {} pixels, output has {}",
                target.len(),
                out.data.len()
            )));
        }
        let n = T::lit(target.len() as f64);
        let mut loss = T::zero();
        let mut d = Feat::zeros(out.h, out.w, 1);
        for ((g, &o), &t) in d.data.iter_mut().zip(&out.data).zip(target) {
            let diff = o - t;
            loss += diff.abs();
            *g = weight * diff.signum() / n;
            if diff == T::zero() {
                *g = T::zero();
            }
        }
        loss /= n;
        if !loss.is_finite() {
            return Err(Error::Numeric { layer: "loss".into() });
        }
        self.backward(trace.as_ref().unwrap(), &d, grads);
        Ok(loss)
    }

    #[cfg(test)]
    pub(crate) fn trace_forward(&self, x: &Feat<T>) -> Result<(Feat<T>, Trace<T>)> {
        let (out, trace) = self.run(x, true)?;
        Ok((out, trace.unwrap()))
    }
}
