use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::scanio::{ScanField, SparsityFactor};
use crate::{Error, Result};

/// Observation tile side used when a full-frame solve exceeds the budget.
pub const TILE_OBSERVATIONS: usize = 64;
/// Observation rows/columns shared by neighbouring tiles.
pub const TILE_OVERLAP: usize = 16;

const JITTER_LADDER: [f64; 5] = [1e-12, 1e-11, 1e-10, 1e-9, 1e-8];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kernel {
    Rbf,
}

/// Gaussian-process hyperparameters and the solve budget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GprConfig {
    pub kernel: Kernel,
    /// In high-resolution pixels.
    pub length_scale: f64,
    pub signal_variance: f64,
    pub noise_variance: f64,
    /// A solve over `N` observations predicting `M` pixels is admitted when
    /// `N <= max_points` and `N * M <= max_points²`.
    pub max_points: usize,
    /// Fall back to overlapping tiles when the full frame is over budget.
    #[serde(default = "default_tiling")]
    pub tiling: bool,
}

fn default_tiling() -> bool {
    true
}

impl Default for GprConfig {
    fn default() -> Self {
        GprConfig {
            kernel: Kernel::Rbf,
            length_scale: 4.0,
            signal_variance: 1.0,
            noise_variance: 1e-6,
            max_points: 16384,
            tiling: true,
        }
    }
}

impl GprConfig {
    /// Defaults tied to the data: length scale `2σ`, signal variance equal
    /// to the field's variance (1 for constant fields).
    pub fn for_field(x: &ScanField, sigma: SparsityFactor) -> Self {
        let n = x.data().len() as f64;
        let mean = x.data().iter().map(|&v| v as f64).sum::<f64>() / n;
        let var = x.data().iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / n;
        GprConfig {
            length_scale: 2.0 * sigma.get() as f64,
            signal_variance: if var > 0.0 { var } else { 1.0 },
            ..GprConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.length_scale > 0.0
            && self.length_scale.is_finite()
            && self.signal_variance > 0.0
            && self.signal_variance.is_finite()
            && self.noise_variance >= 0.0
            && self.noise_variance.is_finite()
            && self.max_points > 0;
        if ok {
            Ok(())
        } else {
            Err(Error::Validation(format!("invalid GPR configuration {self:?}")))
        }
    }

    fn admits(&self, n_obs: usize, n_pred: usize) -> bool {
        let m = self.max_points as u128;
        n_obs <= self.max_points && (n_obs as u128) * (n_pred as u128) <= m * m
    }

    fn k1(&self, d: f64) -> f64 {
        match self.kernel {
            Kernel::Rbf => (-d * d / (2.0 * self.length_scale * self.length_scale)).exp(),
        }
    }
}

/// One axis of the tiling: observation span and blend weights over the
/// predicted span.
struct Span {
    obs: std::ops::Range<usize>,
    weights: Vec<f64>,
}

fn raised_cosine(k: usize, len: usize) -> f64 {
    let t = (k as f64 + 0.5) / len as f64;
    0.5 - 0.5 * (std::f64::consts::PI * t).cos()
}

#[derive(Debug, Clone, Copy)]
struct Tiling {
    side: usize,
    overlap: usize,
}

const TILING: Tiling = Tiling { side: TILE_OBSERVATIONS, overlap: TILE_OVERLAP };

fn spans(n: usize, s: usize, tiling: Option<Tiling>) -> Vec<Span> {
    let Some(Tiling { side, overlap }) = tiling.filter(|t| n > t.side) else {
        return vec![Span { obs: 0..n, weights: vec![1.0; n * s] }];
    };
    let stride = side - overlap;
    let mut starts: Vec<usize> = (0..).map(|i| i * stride).take_while(|&a| a + side < n).collect();
    starts.push(n - side);
    starts
        .iter()
        .enumerate()
        .map(|(t, &a)| {
            let b = a + side;
            let mut weights = vec![1.0; side * s];
            if t > 0 {
                let ramp = (starts[t - 1] + side - a) * s;
                for (k, w) in weights.iter_mut().take(ramp).enumerate() {
                    *w *= raised_cosine(k, ramp);
                }
            }
            if t + 1 < starts.len() {
                let ramp = (b - starts[t + 1]) * s;
                let len = weights.len();
                for k in 0..ramp {
                    weights[len - ramp + k] *= 1.0 - raised_cosine(k, ramp);
                }
            }
            Span { obs: a..b, weights }
        })
        .collect()
}

/// Cross-covariance factor between predicted coordinates `o` and the
/// observations of one axis, which sit at multiples of `s`.
fn cross(cfg: &GprConfig, obs: &std::ops::Range<usize>, s: usize) -> DMatrix<f64> {
    let (lo, n) = (obs.start * s, obs.len());
    DMatrix::from_fn(n * s, n, |o, i| cfg.k1((lo + o) as f64 - ((obs.start + i) * s) as f64))
}

/// Posterior mean over one tile of observations, returned as an
/// `(rows·s) × (cols·s)` block.
fn solve_tile(x: &ScanField, rows: &Span, cols: &Span, s: usize, cfg: &GprConfig) -> Result<DMatrix<f64>> {
    let (ny, nx) = (rows.obs.len(), cols.obs.len());
    let n = ny * nx;
    let w = x.width();
    let mut y = Vec::with_capacity(n);
    for r in rows.obs.clone() {
        y.extend(x.data()[r * w + cols.obs.start..r * w + cols.obs.end].iter().map(|&v| v as f64));
    }
    let mean = y.iter().sum::<f64>() / n as f64;
    let resid = nalgebra::DVector::from_iterator(n, y.iter().map(|v| v - mean));

    let ky = DMatrix::from_fn(ny, ny, |i, j| cfg.k1(s as f64 * (i as f64 - j as f64)));
    let kx = DMatrix::from_fn(nx, nx, |i, j| cfg.k1(s as f64 * (i as f64 - j as f64)));
    let sv = cfg.signal_variance;
    let gram = DMatrix::from_fn(n, n, |p, q| sv * ky[(p / nx, q / nx)] * kx[(p % nx, q % nx)]);

    let mut chol = None;
    let mut used = 0.0;
    for extra in std::iter::once(0.0).chain(JITTER_LADDER.iter().map(|j| j * sv)) {
        let mut k = gram.clone();
        for d in 0..n {
            k[(d, d)] += cfg.noise_variance + extra;
        }
        if let Some(c) = k.cholesky() {
            chol = Some(c);
            used = extra;
            break;
        }
    }
    let chol = chol.ok_or_else(|| Error::Numeric {
        layer: format!("gpr kernel matrix ({n} points) not positive definite after jitter"),
    })?;
    if used > 0.0 {
        log::warn!("GPR kernel matrix ill-conditioned; added jitter {used:e}");
    }
    let alpha = chol.solve(&resid);
    let alpha = DMatrix::from_row_slice(ny, nx, alpha.as_slice());
    let cy = cross(cfg, &rows.obs, s);
    let cx = cross(cfg, &cols.obs, s);
    let mut pred = (&cy * alpha * cx.transpose()) * sv;
    pred.add_scalar_mut(mean);
    Ok(pred)
}

/// Gaussian-process posterior mean on the `σ×` grid.
///
/// Observation `(i, j)` sits at high-resolution pixel `(σi, σj)`. Over-budget
/// frames are split into overlapping tiles of [`TILE_OBSERVATIONS`]
/// observations blended with raised-cosine seams; a tile that is still over
/// budget is a [`Error::Resource`].
pub fn gpr_upsample(x: &ScanField, sigma: SparsityFactor, config: &GprConfig) -> Result<ScanField> {
    upsample_with(x, sigma, config, TILING)
}

fn upsample_with(x: &ScanField, sigma: SparsityFactor, config: &GprConfig, tiling: Tiling) -> Result<ScanField> {
    config.validate()?;
    let s = sigma.get();
    let (h, w) = x.dims();
    let (oh, ow) = (h * s, w * s);
    let tiled = !config.admits(h * w, oh * ow);
    if tiled {
        let (th, tw) = (h.min(tiling.side), w.min(tiling.side));
        if !config.tiling || !config.admits(th * tw, th * tw * s * s) {
            return Err(Error::Resource(format!(
                "GPR on {h}x{w} observations at x{s} exceeds max_points {}{}",
                config.max_points,
                if config.tiling { " even per tile" } else { " and tiling is disabled" }
            )));
        }
    }
    let tiling = tiled.then_some(tiling);
    let row_spans = spans(h, s, tiling);
    let col_spans = spans(w, s, tiling);
    let mut acc = vec![0.0f64; oh * ow];
    let mut norm = vec![0.0f64; oh * ow];
    for rows in &row_spans {
        for cols in &col_spans {
            let block = solve_tile(x, rows, cols, s, config)?;
            let (y0, x0) = (rows.obs.start * s, cols.obs.start * s);
            for (by, &wy) in rows.weights.iter().enumerate() {
                for (bx, &wx) in cols.weights.iter().enumerate() {
                    let idx = (y0 + by) * ow + x0 + bx;
                    acc[idx] += wy * wx * block[(by, bx)];
                    norm[idx] += wy * wx;
                }
            }
        }
    }
    let data = acc.iter().zip(&norm).map(|(a, n)| (a / n) as f32).collect();
    Ok(super::finish(x, oh, ow, data))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scanio::Channel;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn exact(noise: f64) -> GprConfig {
        GprConfig { noise_variance: noise, ..GprConfig::default() }
    }

    #[test]
    fn single_observation_interpolated() {
        let x = ScanField::from_fn(Channel::Current, 1, 1, |_, _| 0.8).unwrap();
        let up = gpr_upsample(&x, SparsityFactor::X2, &exact(0.0)).unwrap();
        assert_eq!(up.dims(), (2, 2));
        assert!((up.get(0, 0) - 0.8).abs() < 1e-6);
    }

    #[test]
    fn quadratic_observations_reproduced() {
        let x = ScanField::from_fn(Channel::Current, 4, 4, |y, x| {
            let (u, v) = (y as f32 * 2.0, x as f32 * 2.0);
            0.1 + 0.02 * u * u - 0.01 * u * v + 0.03 * v
        })
        .unwrap();
        let up = gpr_upsample(&x, SparsityFactor::X2, &exact(0.0)).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                assert!((up.get(2 * i, 2 * j) - x.get(i, j)).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn constant_preserved_through_tiles() {
        let x = ScanField::from_fn(Channel::Morphology, 30, 21, |_, _| 0.42).unwrap();
        let cfg = GprConfig { max_points: 256, ..GprConfig::default() };
        let tiling = Tiling { side: 8, overlap: 3 };
        let up = upsample_with(&x, SparsityFactor::X2, &cfg, tiling).unwrap();
        assert_eq!(up.dims(), (60, 42));
        assert!(up.data().iter().all(|&v| (v - 0.42).abs() < 1e-6));
    }

    #[test]
    fn linear_in_observations() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let a: Vec<f32> = (0..36).map(|_| rng.random()).collect();
        let b: Vec<f32> = (0..36).map(|_| rng.random()).collect();
        let fa = ScanField::new(Channel::Current, 6, 6, a.clone()).unwrap();
        let fb = ScanField::new(Channel::Current, 6, 6, b.clone()).unwrap();
        let fab = ScanField::new(Channel::Current, 6, 6, a.iter().zip(&b).map(|(p, q)| p + q).collect()).unwrap();
        let cfg = GprConfig { noise_variance: 1e-4, ..GprConfig::default() };
        let pa = gpr_upsample(&fa, SparsityFactor::X4, &cfg).unwrap();
        let pb = gpr_upsample(&fb, SparsityFactor::X4, &cfg).unwrap();
        let pab = gpr_upsample(&fab, SparsityFactor::X4, &cfg).unwrap();
        for i in 0..pab.data().len() {
            assert!((pa.data()[i] + pb.data()[i] - pab.data()[i]).abs() < 1e-5);
        }
    }

    #[test]
    fn tiles_blend_to_partition_of_unity() {
        for n in [65, 100, 128, 200] {
            let sp = spans(n, 2, Some(TILING));
            for o in 0..n * 2 {
                let total: f64 = sp
                    .iter()
                    .filter(|t| (t.obs.start * 2..t.obs.end * 2).contains(&o))
                    .map(|t| t.weights[o - t.obs.start * 2])
                    .sum();
                assert!((total - 1.0).abs() < 1e-12, "n={n} o={o} total={total}");
            }
        }
    }

    #[test]
    fn tiled_matches_full_frame_away_from_seams() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = ScanField::from_fn(Channel::Current, 24, 24, |y, x| {
            (0.5 + 0.3 * ((y as f32) * 0.4).sin() * ((x as f32) * 0.3).cos()) + 0.01 * rng.random::<f32>()
        })
        .unwrap();
        let cfg = GprConfig { length_scale: 3.0, noise_variance: 1e-4, ..GprConfig::default() };
        let full = gpr_upsample(&x, SparsityFactor::X2, &cfg).unwrap();
        let small = GprConfig { max_points: 300, ..cfg };
        let tiled = upsample_with(&x, SparsityFactor::X2, &small, Tiling { side: 12, overlap: 4 }).unwrap();
        let worst = full.data().iter().zip(tiled.data()).map(|(a, b)| (a - b).abs()).fold(0.0, f32::max);
        assert!(worst < 0.02, "worst deviation {worst}");
    }

    #[test]
    fn x8_full_frame_is_over_budget() {
        let x = ScanField::zeros(Channel::Current, 64, 64).unwrap();
        let err = gpr_upsample(&x, SparsityFactor::X8, &GprConfig::default()).unwrap_err();
        assert!(matches!(err, Error::Resource(_)));
        let no_tiles = GprConfig { tiling: false, ..GprConfig::default() };
        let small = ScanField::zeros(Channel::Current, 128, 128).unwrap();
        assert!(matches!(gpr_upsample(&small, SparsityFactor::X2, &no_tiles), Err(Error::Resource(_))));
    }

    #[test]
    fn config_json_round_trip() {
        let cfg = GprConfig::default();
        let text = serde_json::to_string(&cfg).unwrap();
        assert!(text.contains("\"kernel\":\"rbf\""));
        assert_eq!(serde_json::from_str::<GprConfig>(&text).unwrap(), cfg);
        assert!(GprConfig { length_scale: 0.0, ..cfg }.validate().is_err());
    }
}
