//! Shifted-window multi-head self-attention and the transformer layer built
//! around it.

use super::layers::{gelu, gelu_backward, LayerNorm, Linear, LnCache};
use super::real::{gemm, View, ViewMut};
use super::{Feat, ParamSet, Real};

/// Token order of a (possibly cyclically shifted) window partition.
///
/// Windowed position `k = win·L + iy·ws + ix` (with `L = ws²`) reads the
/// spatial token `order[k]`. Shifting rolls the map by `-shift` on both axes
/// before partitioning, so windows straddle the original window borders.
#[derive(Debug, Clone)]
pub struct WindowPlan {
    pub h: usize,
    pub w: usize,
    pub ws: usize,
    pub shift: usize,
    pub order: Vec<usize>,
    /// Region label of each windowed position in the rolled frame; tokens in
    /// one window may attend to each other only with equal labels. Empty when
    /// unshifted.
    pub regions: Vec<u8>,
}

impl WindowPlan {
    pub fn new(h: usize, w: usize, ws: usize, shift: usize) -> Self {
        assert!(h.is_multiple_of(ws) && w.is_multiple_of(ws), "map {h}x{w} not divisible by window {ws}");
        let (nwy, nwx) = (h / ws, w / ws);
        let l = ws * ws;
        let mut order = vec![0; h * w];
        let mut regions = if shift > 0 { vec![0u8; h * w] } else { Vec::new() };
        let region = |r: usize, n: usize| -> u8 {
            if r < n - ws {
                0
            } else if r < n - shift {
                1
            } else {
                2
            }
        };
        for wy in 0..nwy {
            for wx in 0..nwx {
                let win = wy * nwx + wx;
                for iy in 0..ws {
                    for ix in 0..ws {
                        let (ry, rx) = (wy * ws + iy, wx * ws + ix);
                        let k = win * l + iy * ws + ix;
                        order[k] = ((ry + shift) % h) * w + (rx + shift) % w;
                        if shift > 0 {
                            regions[k] = 3 * region(ry, h) + region(rx, w);
                        }
                    }
                }
            }
        }
        WindowPlan { h, w, ws, shift, order, regions }
    }

    pub fn windows(&self) -> usize {
        (self.h / self.ws) * (self.w / self.ws)
    }

    pub fn window_len(&self) -> usize {
        self.ws * self.ws
    }

    /// Whether windowed positions `a` and `b` (same window) are kept apart.
    #[inline]
    pub fn blocked(&self, a: usize, b: usize) -> bool {
        !self.regions.is_empty() && self.regions[a] != self.regions[b]
    }

    pub(crate) fn gather<T: Real>(&self, x: &[T], c: usize) -> Vec<T> {
        let mut out = vec![T::zero(); x.len()];
        for (k, &src) in self.order.iter().enumerate() {
            out[k * c..(k + 1) * c].copy_from_slice(&x[src * c..(src + 1) * c]);
        }
        out
    }

    pub(crate) fn scatter<T: Real>(&self, xw: &[T], c: usize) -> Vec<T> {
        let mut out = vec![T::zero(); xw.len()];
        for (k, &dst) in self.order.iter().enumerate() {
            out[dst * c..(dst + 1) * c].copy_from_slice(&xw[k * c..(k + 1) * c]);
        }
        out
    }
}

/// Index into the relative position bias table for two in-window positions.
#[inline]
pub(crate) fn relative_index(i: usize, j: usize, ws: usize) -> usize {
    let (yi, xi) = (i / ws, i % ws);
    let (yj, xj) = (j / ws, j % ws);
    (yi + ws - 1 - yj) * (2 * ws - 1) + (xi + ws - 1 - xj)
}

/// One transformer layer: LN → (shifted) window attention → residual →
/// LN → MLP → residual.
#[derive(Debug, Clone)]
pub(crate) struct SwinLayer {
    pub dim: usize,
    pub heads: usize,
    pub ws: usize,
    pub shifted: bool,
    pub norm1: LayerNorm,
    pub qkv: Linear,
    pub bias_table: usize,
    pub proj: Linear,
    pub norm2: LayerNorm,
    pub fc1: Linear,
    pub fc2: Linear,
}

pub(crate) struct SwinCache<T> {
    plan: WindowPlan,
    ln1: LnCache<T>,
    xw: Vec<T>,
    qkv: Vec<T>,
    probs: Vec<T>,
    attn: Vec<T>,
    ln2: LnCache<T>,
    y2: Vec<T>,
    h1: Vec<T>,
    g1: Vec<T>,
}

impl<T> SwinCache<T> {
    /// Softmax weights laid out `[window][head][query][key]`.
    pub fn attention(&self) -> &[T] {
        &self.probs
    }

    pub fn plan(&self) -> &WindowPlan {
        &self.plan
    }
}

impl SwinLayer {
    pub fn plan(&self, h: usize, w: usize) -> WindowPlan {
        WindowPlan::new(h, w, self.ws, if self.shifted { self.ws / 2 } else { 0 })
    }

    pub fn forward<T: Real>(&self, p: &ParamSet<T>, x: &Feat<T>, keep: bool) -> (Feat<T>, Option<SwinCache<T>>) {
        let c = self.dim;
        let plan = self.plan(x.h, x.w);
        let (y1, ln1) = self.norm1.forward(p, &x.data, keep);
        let xw = plan.gather(&y1, c);
        let qkv = self.qkv.forward(p, &xw);
        let (attn, probs) = self.attend(p, &plan, &qkv, keep);
        let proj = self.proj.forward(p, &attn);
        let mut x1 = plan.scatter(&proj, c);
        for (a, b) in x1.iter_mut().zip(&x.data) {
            *a += *b;
        }
        let (y2, ln2) = self.norm2.forward(p, &x1, keep);
        let h1 = self.fc1.forward(p, &y2);
        let g1 = gelu(&h1);
        let m = self.fc2.forward(p, &g1);
        let mut out = x1;
        for (a, b) in out.iter_mut().zip(&m) {
            *a += *b;
        }
        let out = Feat { h: x.h, w: x.w, c, data: out };
        let cache = keep.then(|| SwinCache {
            plan,
            ln1: ln1.unwrap(),
            xw,
            qkv,
            probs,
            attn,
            ln2: ln2.unwrap(),
            y2,
            h1,
            g1,
        });
        (out, cache)
    }

    /// Windowed multi-head attention on the gathered `qkv` projections.
    fn attend<T: Real>(&self, p: &ParamSet<T>, plan: &WindowPlan, qkv: &[T], keep: bool) -> (Vec<T>, Vec<T>) {
        let c = self.dim;
        let hd = c / self.heads;
        let l = plan.window_len();
        let nw = plan.windows();
        let scale = T::lit((hd as f64).powf(-0.5));
        let table = p.data(self.bias_table);
        let mut out = vec![T::zero(); nw * l * c];
        let mut probs = if keep { vec![T::zero(); nw * self.heads * l * l] } else { Vec::new() };
        let mut scores = vec![T::zero(); l * l];
        for win in 0..nw {
            let base = win * l;
            for head in 0..self.heads {
                let q = View::strided(qkv, base * 3 * c + head * hd, 3 * c, 1);
                let k = View::strided(qkv, base * 3 * c + c + head * hd, 3 * c, 1);
                let v = View::strided(qkv, base * 3 * c + 2 * c + head * hd, 3 * c, 1);
                gemm(l, hd, l, scale, q, k.t(), T::zero(), ViewMut::rm(&mut scores, l));
                for i in 0..l {
                    let row = &mut scores[i * l..(i + 1) * l];
                    let mut max = T::neg_infinity();
                    for (j, s) in row.iter_mut().enumerate() {
                        if plan.blocked(base + i, base + j) {
                            *s = T::neg_infinity();
                        } else {
                            *s += table[relative_index(i, j, self.ws) * self.heads + head];
                            max = max.max(*s);
                        }
                    }
                    let mut sum = T::zero();
                    for s in row.iter_mut() {
                        *s = if *s == T::neg_infinity() { T::zero() } else { (*s - max).exp() };
                        sum += *s;
                    }
                    let inv = T::one() / sum;
                    for s in row.iter_mut() {
                        *s *= inv;
                    }
                }
                gemm(
                    l,
                    l,
                    hd,
                    T::one(),
                    View::rm(&scores, l),
                    v,
                    T::zero(),
                    ViewMut::strided(&mut out, base * c + head * hd, c, 1),
                );
                if keep {
                    let at = (win * self.heads + head) * l * l;
                    probs[at..at + l * l].copy_from_slice(&scores);
                }
            }
        }
        (out, probs)
    }

    pub fn backward<T: Real>(
        &self,
        p: &ParamSet<T>,
        cache: &SwinCache<T>,
        dout: &Feat<T>,
        grads: &mut ParamSet<T>,
    ) -> Feat<T> {
        let c = self.dim;
        // MLP branch
        let dg1 = self.fc2.backward(p, &cache.g1, &dout.data, grads);
        let dh1 = gelu_backward(&cache.h1, &dg1);
        let dy2 = self.fc1.backward(p, &cache.y2, &dh1, grads);
        let mut dx1 = self.norm2.backward(p, &cache.ln2, &dy2, grads);
        for (a, b) in dx1.iter_mut().zip(&dout.data) {
            *a += *b;
        }
        // attention branch
        let dproj = cache.plan.gather(&dx1, c);
        let dattn = self.proj.backward(p, &cache.attn, &dproj, grads);
        let dqkv = self.attend_backward(cache, &dattn, grads);
        let dxw = self.qkv.backward(p, &cache.xw, &dqkv, grads);
        let dy1 = cache.plan.scatter(&dxw, c);
        let mut dx = self.norm1.backward(p, &cache.ln1, &dy1, grads);
        for (a, b) in dx.iter_mut().zip(&dx1) {
            *a += *b;
        }
        Feat { h: dout.h, w: dout.w, c, data: dx }
    }

    fn attend_backward<T: Real>(&self, cache: &SwinCache<T>, dattn: &[T], grads: &mut ParamSet<T>) -> Vec<T> {
        let c = self.dim;
        let hd = c / self.heads;
        let plan = &cache.plan;
        let l = plan.window_len();
        let nw = plan.windows();
        let scale = T::lit((hd as f64).powf(-0.5));
        let qkv = &cache.qkv;
        let mut dqkv = vec![T::zero(); qkv.len()];
        let mut dp = vec![T::zero(); l * l];
        let mut dtable = vec![T::zero(); grads.data(self.bias_table).len()];
        for win in 0..nw {
            let base = win * l;
            for head in 0..self.heads {
                let probs = &cache.probs[(win * self.heads + head) * l * l..][..l * l];
                let d_o = View::strided(dattn, base * c + head * hd, c, 1);
                let q_off = base * 3 * c + head * hd;
                let k_off = q_off + c;
                let v_off = q_off + 2 * c;
                // dP = dO·Vᵀ
                gemm(
                    l,
                    hd,
                    l,
                    T::one(),
                    d_o,
                    View::strided(qkv, v_off, 3 * c, 1).t(),
                    T::zero(),
                    ViewMut::rm(&mut dp, l),
                );
                // dV = Pᵀ·dO
                gemm(
                    l,
                    l,
                    hd,
                    T::one(),
                    View::rm(probs, l).t(),
                    d_o,
                    T::zero(),
                    ViewMut::strided(&mut dqkv, v_off, 3 * c, 1),
                );
                // softmax backward, in place: dS = P ⊙ (dP − Σ dP⊙P)
                for i in 0..l {
                    let pr = &probs[i * l..(i + 1) * l];
                    let row = &mut dp[i * l..(i + 1) * l];
                    let dot: T = pr.iter().zip(row.iter()).map(|(a, b)| *a * *b).sum();
                    for j in 0..l {
                        row[j] = pr[j] * (row[j] - dot);
                        dtable[relative_index(i, j, self.ws) * self.heads + head] += row[j];
                    }
                }
                // dQ = scale·dS·K, dK = scale·dSᵀ·Q
                gemm(
                    l,
                    l,
                    hd,
                    scale,
                    View::rm(&dp, l),
                    View::strided(qkv, k_off, 3 * c, 1),
                    T::zero(),
                    ViewMut::strided(&mut dqkv, q_off, 3 * c, 1),
                );
                gemm(
                    l,
                    l,
                    hd,
                    scale,
                    View::rm(&dp, l).t(),
                    View::strided(qkv, q_off, 3 * c, 1),
                    T::zero(),
                    ViewMut::strided(&mut dqkv, k_off, 3 * c, 1),
                );
            }
        }
        for (g, d) in grads.data_mut(self.bias_table).iter_mut().zip(&dtable) {
            *g += *d;
        }
        dqkv
    }
}
