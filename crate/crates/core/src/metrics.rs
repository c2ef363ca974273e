//! Reconstruction fidelity: PSNR and SSIM.
//!
//! Both take a `data_range`; on normalised fields it is 1.

use crate::scanio::ScanField;
use crate::{Error, Result};

/// Side of the SSIM Gaussian window.
pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

fn same_shape(a: &ScanField, b: &ScanField) -> Result<()> {
    if a.dims() != b.dims() {
        return Err(Error::Dimension(format!("shape mismatch {:?} vs {:?}", a.dims(), b.dims())));
    }
    Ok(())
}

pub fn mse(pred: &ScanField, target: &ScanField) -> Result<f64> {
    same_shape(pred, target)?;
    let sum: f64 = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(&a, &b)| (a as f64 - b as f64).powi(2))
        .sum();
    Ok(sum / pred.data().len() as f64)
}

/// Peak signal-to-noise ratio in dB; identical inputs give `+∞`.
pub fn psnr(pred: &ScanField, target: &ScanField, data_range: f64) -> Result<f64> {
    if !(data_range > 0.0) {
        return Err(Error::Validation(format!("data range {data_range} must be positive")));
    }
    let m = mse(pred, target)?;
    if m == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (data_range * data_range / m).log10())
}

/// Normalised 1-D Gaussian taps of the SSIM window.
fn gaussian_taps() -> [f64; SSIM_WINDOW] {
    let mut taps = [0.0; SSIM_WINDOW];
    let half = (SSIM_WINDOW / 2) as f64;
    for (i, t) in taps.iter_mut().enumerate() {
        let d = i as f64 - half;
        *t = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let sum: f64 = taps.iter().sum();
    taps.iter_mut().for_each(|t| *t /= sum);
    taps
}

/// Separable "valid" Gaussian filtering of an `h × w` buffer.
fn filter_valid(data: &[f64], h: usize, w: usize, taps: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let k = SSIM_WINDOW;
    let (oh, ow) = (h - k + 1, w - k + 1);
    let mut rows = vec![0.0; h * ow];
    for y in 0..h {
        for x in 0..ow {
            rows[y * ow + x] = (0..k).map(|i| taps[i] * data[y * w + x + i]).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = (0..k).map(|i| taps[i] * rows[(y + i) * ow + x]).sum();
        }
    }
    out
}

/// Mean structural similarity over all fully-contained 11×11 Gaussian
/// windows (σ = 1.5, K₁ = 0.01, K₂ = 0.03).
pub fn ssim(pred: &ScanField, target: &ScanField, data_range: f64) -> Result<f64> {
    same_shape(pred, target)?;
    if !(data_range > 0.0) {
        return Err(Error::Validation(format!("data range {data_range} must be positive")));
    }
    let (h, w) = pred.dims();
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(Error::Dimension(format!("{h}x{w} field is smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} window")));
    }
    let a: Vec<f64> = pred.data().iter().map(|&v| v as f64).collect();
    let b: Vec<f64> = target.data().iter().map(|&v| v as f64).collect();
    let taps = gaussian_taps();
    let filt = |v: &[f64]| filter_valid(v, h, w, &taps);
    let mu_a = filt(&a);
    let mu_b = filt(&b);
    let aa = filt(&a.iter().map(|v| v * v).collect::<Vec<_>>());
    let bb = filt(&b.iter().map(|v| v * v).collect::<Vec<_>>());
    let ab = filt(&a.iter().zip(&b).map(|(x, y)| x * y).collect::<Vec<_>>());
    let c1 = (SSIM_K1 * data_range).powi(2);
    let c2 = (SSIM_K2 * data_range).powi(2);
    let n = mu_a.len();
    let total: f64 = (0..n)
        .map(|i| {
            let (ma, mb) = (mu_a[i], mu_b[i]);
            let va = aa[i] - ma * ma;
            let vb = bb[i] - mb * mb;
            let cov = ab[i] - ma * mb;
            ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2))
        })
        .sum();
    Ok(total / n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scanio::Channel;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn field(h: usize, w: usize, f: impl FnMut(usize, usize) -> f32) -> ScanField {
        ScanField::from_fn(Channel::Current, h, w, f).unwrap()
    }

    fn random(h: usize, w: usize, seed: u64) -> ScanField {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        field(h, w, |_, _| rng.random())
    }

    #[test]
    fn psnr_anchors() {
        let a = random(8, 8, 1);
        assert_eq!(psnr(&a, &a, 1.0).unwrap(), f64::INFINITY);
        let zeros = field(4, 4, |_, _| 0.0);
        let ones = field(4, 4, |_, _| 1.0);
        assert_eq!(psnr(&zeros, &ones, 1.0).unwrap(), 0.0);
        assert!(psnr(&zeros, &field(4, 5, |_, _| 0.0), 1.0).is_err());
    }

    #[test]
    fn psnr_matches_formula() {
        let (a, b) = (random(8, 8, 2), random(8, 8, 3));
        let mut s = 0.0;
        for i in 0..64 {
            s += (a.data()[i] as f64 - b.data()[i] as f64).powi(2);
        }
        let want = 10.0 * (1.0 / (s / 64.0)).log10();
        assert!((psnr(&a, &b, 1.0).unwrap() - want).abs() < 1e-9);
    }

    #[test]
    fn ssim_self_and_anticorrelated() {
        let a = random(16, 16, 4);
        assert_eq!(ssim(&a, &a, 1.0).unwrap(), 1.0);
        let checker = field(24, 24, |y, x| if (y / 2 + x / 2) % 2 == 0 { 0.9 } else { 0.1 });
        let inv = field(24, 24, |y, x| 1.0 - checker.get(y, x));
        assert!(ssim(&checker, &inv, 1.0).unwrap() < -0.5);
        assert!(matches!(ssim(&random(10, 16, 0), &random(10, 16, 1), 1.0), Err(Error::Dimension(_))));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn ssim_symmetric(s1 in any::<u64>(), s2 in any::<u64>()) {
            let (a, b) = (random(16, 16, s1), random(16, 16, s2));
            prop_assert!((ssim(&a, &b, 1.0).unwrap() - ssim(&b, &a, 1.0).unwrap()).abs() <= 1e-12);
        }

        #[test]
        fn ssim_scale_invariant(s1 in any::<u64>(), s2 in any::<u64>(), scale in 0.05f32..50.0) {
            let (a, b) = (random(16, 16, s1), random(16, 16, s2));
            let ta = field(16, 16, |y, x| a.get(y, x) * scale);
            let tb = field(16, 16, |y, x| b.get(y, x) * scale);
            let base = ssim(&a, &b, 1.0).unwrap();
            let moved = ssim(&ta, &tb, scale as f64).unwrap();
            prop_assert!((base - moved).abs() < 1e-6);
        }

        #[test]
        fn psnr_decreases_with_mse(seed in any::<u64>(), e1 in 0.01f32..0.2, e2 in 0.01f32..0.2) {
            prop_assume!((e1 - e2).abs() > 1e-4);
            let a = random(8, 8, seed);
            let b1 = field(8, 8, |y, x| a.get(y, x) + e1);
            let b2 = field(8, 8, |y, x| a.get(y, x) + e2);
            let (p1, p2) = (psnr(&b1, &a, 1.0).unwrap(), psnr(&b2, &a, 1.0).unwrap());
            let (m1, m2) = (mse(&b1, &a).unwrap(), mse(&b2, &a).unwrap());
            prop_assert_eq!(m1 < m2, p1 > p2);
        }
    }
}
