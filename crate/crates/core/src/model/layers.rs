//! Token-wise and convolutional building blocks with their backward passes.
//!
//! Feature maps are stored channel-last: element `(y, x, c)` lives at
//! `(y·w + x)·C + c`, so every per-token linear map is one matrix product.

use super::real::{gemm, View, ViewMut};
use super::{ParamSet, Real};

/// A `C × h × w` feature map stored channel-last.
#[derive(Debug, Clone, PartialEq)]
pub struct Feat<T> {
    pub h: usize,
    pub w: usize,
    pub c: usize,
    pub data: Vec<T>,
}

impl<T: Real> Feat<T> {
    pub fn zeros(h: usize, w: usize, c: usize) -> Self {
        Feat { h, w, c, data: vec![T::zero(); h * w * c] }
    }

    pub fn tokens(&self) -> usize {
        self.h * self.w
    }

    #[inline]
    pub fn at(&self, y: usize, x: usize, ch: usize) -> T {
        self.data[(y * self.w + x) * self.c + ch]
    }

    pub fn add(&self, other: &Feat<T>) -> Feat<T> {
        debug_assert_eq!((self.h, self.w, self.c), (other.h, other.w, other.c));
        Feat {
            h: self.h,
            w: self.w,
            c: self.c,
            data: self.data.iter().zip(&other.data).map(|(a, b)| *a + *b).collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Feat<T>) {
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += *b;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// 3×3 convolution, stride 1, zero padding 1.
/// Weight layout `[3, 3, cin, cout]`, bias `[cout]`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Conv3x3 {
    pub weight: usize,
    pub bias: usize,
    pub cin: usize,
    pub cout: usize,
}

fn im2col<T: Real>(x: &Feat<T>) -> Vec<T> {
    let (h, w, c) = (x.h, x.w, x.c);
    let k = 9 * c;
    let mut cols = vec![T::zero(); h * w * k];
    for y in 0..h {
        for xx in 0..w {
            let row = &mut cols[(y * w + xx) * k..(y * w + xx + 1) * k];
            for ky in 0..3 {
                let sy = y as isize + ky as isize - 1;
                if sy < 0 || sy >= h as isize {
                    continue;
                }
                for kx in 0..3 {
                    let sx = xx as isize + kx as isize - 1;
                    if sx < 0 || sx >= w as isize {
                        continue;
                    }
                    let src = (sy as usize * w + sx as usize) * c;
                    let dst = (ky * 3 + kx) * c;
                    row[dst..dst + c].copy_from_slice(&x.data[src..src + c]);
                }
            }
        }
    }
    cols
}

fn col2im<T: Real>(cols: &[T], h: usize, w: usize, c: usize) -> Feat<T> {
    let k = 9 * c;
    let mut out = Feat::zeros(h, w, c);
    for y in 0..h {
        for xx in 0..w {
            let row = &cols[(y * w + xx) * k..(y * w + xx + 1) * k];
            for ky in 0..3 {
                let sy = y as isize + ky as isize - 1;
                if sy < 0 || sy >= h as isize {
                    continue;
                }
                for kx in 0..3 {
                    let sx = xx as isize + kx as isize - 1;
                    if sx < 0 || sx >= w as isize {
                        continue;
                    }
                    let dst = (sy as usize * w + sx as usize) * c;
                    let src = (ky * 3 + kx) * c;
                    for ch in 0..c {
                        out.data[dst + ch] += row[src + ch];
                    }
                }
            }
        }
    }
    out
}

fn add_bias<T: Real>(out: &mut [T], bias: &[T]) {
    for row in out.chunks_exact_mut(bias.len()) {
        for (v, b) in row.iter_mut().zip(bias) {
            *v += *b;
        }
    }
}

fn accumulate_bias_grad<T: Real>(dy: &[T], dbias: &mut [T]) {
    for row in dy.chunks_exact(dbias.len()) {
        for (g, v) in dbias.iter_mut().zip(row) {
            *g += *v;
        }
    }
}

impl Conv3x3 {
    /// Returns the output and, when `keep` is set, the im2col buffer needed
    /// for the backward pass.
    pub fn forward<T: Real>(&self, p: &ParamSet<T>, x: &Feat<T>, keep: bool) -> (Feat<T>, Option<Vec<T>>) {
        debug_assert_eq!(x.c, self.cin);
        let n = x.tokens();
        let cols = im2col(x);
        let mut out = vec![T::zero(); n * self.cout];
        gemm(
            n,
            9 * self.cin,
            self.cout,
            T::one(),
            View::rm(&cols, 9 * self.cin),
            View::rm(p.data(self.weight), self.cout),
            T::zero(),
            ViewMut::rm(&mut out, self.cout),
        );
        add_bias(&mut out, p.data(self.bias));
        (Feat { h: x.h, w: x.w, c: self.cout, data: out }, keep.then_some(cols))
    }

    pub fn backward<T: Real>(
        &self,
        p: &ParamSet<T>,
        cols: &[T],
        dy: &Feat<T>,
        grads: &mut ParamSet<T>,
        need_dx: bool,
    ) -> Option<Feat<T>> {
        let n = dy.tokens();
        let k = 9 * self.cin;
        gemm(
            k,
            n,
            self.cout,
            T::one(),
            View::rm(cols, k).t(),
            View::rm(&dy.data, self.cout),
            T::one(),
            ViewMut::rm(grads.data_mut(self.weight), self.cout),
        );
        accumulate_bias_grad(&dy.data, grads.data_mut(self.bias));
        if !need_dx {
            return None;
        }
        let mut dcols = vec![T::zero(); n * k];
        gemm(
            n,
            self.cout,
            k,
            T::one(),
            View::rm(&dy.data, self.cout),
            View::rm(p.data(self.weight), self.cout).t(),
            T::zero(),
            ViewMut::rm(&mut dcols, k),
        );
        Some(col2im(&dcols, dy.h, dy.w, self.cin))
    }
}

/// Per-token affine map `y = x·W + b`, weight `[cin, cout]`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Linear {
    pub weight: usize,
    pub bias: usize,
    pub cin: usize,
    pub cout: usize,
}

impl Linear {
    pub fn forward<T: Real>(&self, p: &ParamSet<T>, x: &[T]) -> Vec<T> {
        let n = x.len() / self.cin;
        let mut out = vec![T::zero(); n * self.cout];
        gemm(
            n,
            self.cin,
            self.cout,
            T::one(),
            View::rm(x, self.cin),
            View::rm(p.data(self.weight), self.cout),
            T::zero(),
            ViewMut::rm(&mut out, self.cout),
        );
        add_bias(&mut out, p.data(self.bias));
        out
    }

    pub fn backward<T: Real>(&self, p: &ParamSet<T>, x: &[T], dy: &[T], grads: &mut ParamSet<T>) -> Vec<T> {
        let n = x.len() / self.cin;
        gemm(
            self.cin,
            n,
            self.cout,
            T::one(),
            View::rm(x, self.cin).t(),
            View::rm(dy, self.cout),
            T::one(),
            ViewMut::rm(grads.data_mut(self.weight), self.cout),
        );
        accumulate_bias_grad(dy, grads.data_mut(self.bias));
        let mut dx = vec![T::zero(); n * self.cin];
        gemm(
            n,
            self.cout,
            self.cin,
            T::one(),
            View::rm(dy, self.cout),
            View::rm(p.data(self.weight), self.cout).t(),
            T::zero(),
            ViewMut::rm(&mut dx, self.cin),
        );
        dx
    }
}

pub(crate) const LN_EPS: f64 = 1e-5;

/// Layer norm over the channel axis of every token.
#[derive(Debug, Clone, Copy)]
pub(crate) struct LayerNorm {
    pub gamma: usize,
    pub beta: usize,
    pub dim: usize,
}

pub(crate) struct LnCache<T> {
    xhat: Vec<T>,
    rstd: Vec<T>,
}

impl LayerNorm {
    pub fn forward<T: Real>(&self, p: &ParamSet<T>, x: &[T], keep: bool) -> (Vec<T>, Option<LnCache<T>>) {
        let c = self.dim;
        let n = x.len() / c;
        let (gamma, beta) = (p.data(self.gamma), p.data(self.beta));
        let inv_c = T::one() / T::lit(c as f64);
        let eps = T::lit(LN_EPS);
        let mut out = vec![T::zero(); x.len()];
        let mut xhat = if keep { vec![T::zero(); x.len()] } else { Vec::new() };
        let mut rstds = Vec::with_capacity(if keep { n } else { 0 });
        for t in 0..n {
            let row = &x[t * c..(t + 1) * c];
            let mean = row.iter().copied().sum::<T>() * inv_c;
            let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() * inv_c;
            let rstd = T::one() / (var + eps).sqrt();
            for ch in 0..c {
                let xh = (row[ch] - mean) * rstd;
                out[t * c + ch] = xh * gamma[ch] + beta[ch];
                if keep {
                    xhat[t * c + ch] = xh;
                }
            }
            if keep {
                rstds.push(rstd);
            }
        }
        (out, keep.then_some(LnCache { xhat, rstd: rstds }))
    }

    pub fn backward<T: Real>(&self, p: &ParamSet<T>, cache: &LnCache<T>, dy: &[T], grads: &mut ParamSet<T>) -> Vec<T> {
        let c = self.dim;
        let n = dy.len() / c;
        let gamma = p.data(self.gamma);
        {
            let dg = grads.data_mut(self.gamma);
            for t in 0..n {
                for ch in 0..c {
                    dg[ch] += dy[t * c + ch] * cache.xhat[t * c + ch];
                }
            }
        }
        accumulate_bias_grad(dy, grads.data_mut(self.beta));
        let inv_c = T::one() / T::lit(c as f64);
        let mut dx = vec![T::zero(); dy.len()];
        for t in 0..n {
            let xh = &cache.xhat[t * c..(t + 1) * c];
            let g = &dy[t * c..(t + 1) * c];
            let mut mean_d = T::zero();
            let mut mean_dx = T::zero();
            for ch in 0..c {
                let d = g[ch] * gamma[ch];
                mean_d += d;
                mean_dx += d * xh[ch];
            }
            mean_d *= inv_c;
            mean_dx *= inv_c;
            for ch in 0..c {
                let d = g[ch] * gamma[ch];
                dx[t * c + ch] = cache.rstd[t] * (d - mean_d - xh[ch] * mean_dx);
            }
        }
        dx
    }
}

const GELU_K: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;

/// Tanh-approximated GELU.
pub(crate) fn gelu<T: Real>(x: &[T]) -> Vec<T> {
    let (k, a, half) = (T::lit(GELU_K), T::lit(GELU_A), T::lit(0.5));
    x.iter()
        .map(|&v| half * v * (T::one() + (k * (v + a * v * v * v)).tanh()))
        .collect()
}

pub(crate) fn gelu_backward<T: Real>(x: &[T], dy: &[T]) -> Vec<T> {
    let (k, a, half, three) = (T::lit(GELU_K), T::lit(GELU_A), T::lit(0.5), T::lit(3.0));
    x.iter()
        .zip(dy)
        .map(|(&v, &g)| {
            let t = (k * (v + a * v * v * v)).tanh();
            let d = half * (T::one() + t) + half * v * (T::one() - t * t) * k * (T::one() + three * a * v * v);
            g * d
        })
        .collect()
}

/// Depth-to-space by `r`: `(h, w, c·r²) → (r·h, r·w, c)`.
/// Input channel `ch·r² + dy·r + dx` lands at `(r·y + dy, r·x + dx, ch)`.
pub fn depth_to_space<T: Real>(x: &Feat<T>, r: usize) -> Feat<T> {
    assert_eq!(x.c % (r * r), 0, "channels not divisible by r²");
    let c = x.c / (r * r);
    let (oh, ow) = (x.h * r, x.w * r);
    let mut out = Feat::zeros(oh, ow, c);
    for y in 0..x.h {
        for xx in 0..x.w {
            let src = &x.data[(y * x.w + xx) * x.c..(y * x.w + xx + 1) * x.c];
            for ch in 0..c {
                for dy in 0..r {
                    for dx in 0..r {
                        let o = ((r * y + dy) * ow + r * xx + dx) * c + ch;
                        out.data[o] = src[ch * r * r + dy * r + dx];
                    }
                }
            }
        }
    }
    out
}

/// Inverse of [`depth_to_space`].
pub fn space_to_depth<T: Real>(x: &Feat<T>, r: usize) -> Feat<T> {
    assert!(x.h.is_multiple_of(r) && x.w.is_multiple_of(r), "spatial dims not divisible by r");
    let (h, w) = (x.h / r, x.w / r);
    let oc = x.c * r * r;
    let mut out = Feat::zeros(h, w, oc);
    for y in 0..h {
        for xx in 0..w {
            for ch in 0..x.c {
                for dy in 0..r {
                    for dx in 0..r {
                        out.data[(y * w + xx) * oc + ch * r * r + dy * r + dx] =
                            x.data[((r * y + dy) * x.w + r * xx + dx) * x.c + ch];
                    }
                }
            }
        }
    }
    out
}
