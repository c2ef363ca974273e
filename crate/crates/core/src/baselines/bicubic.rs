use crate::scanio::{ScanField, SparsityFactor};

/// Keys cubic convolution kernel with `a = -0.5`.
fn keys(t: f64) -> f64 {
    const A: f64 = -0.5;
    let t = t.abs();
    if t <= 1.0 {
        ((A + 2.0) * t - (A + 3.0)) * t * t + 1.0
    } else if t < 2.0 {
        (((t - 5.0) * t + 8.0) * t - 4.0) * A
    } else {
        0.0
    }
}

/// Four source indices and weights for each of the `n * s` output positions.
fn taps(n: usize, s: usize) -> Vec<([usize; 4], [f64; 4])> {
    (0..n * s)
        .map(|o| {
            let base = o / s;
            let t = (o % s) as f64 / s as f64;
            let mut idx = [0; 4];
            let mut wts = [0.0; 4];
            for k in 0..4 {
                let i = base as i64 + k as i64 - 1;
                idx[k] = i.clamp(0, n as i64 - 1) as usize;
                wts[k] = keys(t - (k as f64 - 1.0));
            }
            (idx, wts)
        })
        .collect()
}

/// Cubic-convolution upsampling by `sigma`.
///
/// Low-resolution sample `(i, j)` lands on high-resolution pixel
/// `(σi, σj)`, matching [`downsample`](crate::scanio::downsample); those
/// pixels reproduce the input exactly. Edges are clamped.
///
/// ```
/// use sparsecafm::{baselines::bicubic_upsample, Channel, ScanField, SparsityFactor};
/// let x = ScanField::from_fn(Channel::Current, 4, 4, |y, x| (y + x) as f32).unwrap();
/// let up = bicubic_upsample(&x, SparsityFactor::X2);
/// assert_eq!(up.dims(), (8, 8));
/// assert_eq!(up.get(2, 4), x.get(1, 2));
/// ```
pub fn bicubic_upsample(x: &ScanField, sigma: SparsityFactor) -> ScanField {
    let s = sigma.get();
    let (h, w) = x.dims();
    let (oh, ow) = (h * s, w * s);
    let tx = taps(w, s);
    let ty = taps(h, s);
    let src = x.data();
    let mut rows = vec![0.0f64; h * ow];
    for y in 0..h {
        for (ox, (idx, wts)) in tx.iter().enumerate() {
            rows[y * ow + ox] = (0..4).map(|k| wts[k] * src[y * w + idx[k]] as f64).sum();
        }
    }
    let mut out = Vec::with_capacity(oh * ow);
    for (idx, wts) in &ty {
        for ox in 0..ow {
            let v: f64 = (0..4).map(|k| wts[k] * rows[idx[k] * ow + ox]).sum();
            out.push(v as f32);
        }
    }
    super::finish(x, oh, ow, out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scanio::{downsample, Channel};
    use proptest::prelude::*;

    #[test]
    fn kernel_partition_of_unity() {
        for step in 0..=20 {
            let t = step as f64 / 20.0;
            let sum: f64 = (-1..=2).map(|k| keys(t - k as f64)).sum();
            assert!((sum - 1.0).abs() < 1e-12);
        }
        assert_eq!(keys(0.0), 1.0);
        assert_eq!(keys(1.0), 0.0);
        assert_eq!(keys(2.0), 0.0);
    }

    #[test]
    fn constant_stays_constant() {
        let x = ScanField::from_fn(Channel::Current, 5, 7, |_, _| 0.37).unwrap();
        for s in SparsityFactor::ALL {
            let up = bicubic_upsample(&x, s);
            assert_eq!(up.dims(), (5 * s.get(), 7 * s.get()));
            assert!(up.data().iter().all(|&v| (v - 0.37).abs() < 1e-6));
        }
    }

    #[test]
    fn linear_ramp_reproduced_in_interior() {
        let hi = ScanField::from_fn(Channel::Current, 32, 32, |y, x| 0.01 * y as f32 + 0.02 * x as f32).unwrap();
        let lo = downsample(&hi, SparsityFactor::X4).unwrap();
        let up = bicubic_upsample(&lo, SparsityFactor::X4);
        for y in 4..24 {
            for x in 4..24 {
                assert!((up.get(y, x) - hi.get(y, x)).abs() < 1e-5);
            }
        }
    }

    proptest! {
        #[test]
        fn lattice_points_exact(a in -1.0f64..1.0, b in -1.0f64..1.0, c in -1.0f64..1.0, d in -1.0f64..1.0, code in 0usize..3) {
            let s = SparsityFactor::ALL[code];
            let f = |y: usize, x: usize| (a + b * y as f64 + c * x as f64 + d * (x * y) as f64 / 16.0) as f32;
            let lo = ScanField::from_fn(Channel::Morphology, 6, 5, f).unwrap();
            let up = bicubic_upsample(&lo, s);
            for i in 0..6 {
                for j in 0..5 {
                    prop_assert!((up.get(i * s.get(), j * s.get()) - lo.get(i, j)).abs() < 1e-6);
                }
            }
        }
    }
}
