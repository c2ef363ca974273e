use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{NormState, ScanField, SparsityFactor};
use crate::{Error, Result};

/// Strided subsampling: keeps every σ-th row and column starting at index 0.
///
/// The result covers the same physical area with σ² fewer samples.
pub fn downsample(field: &ScanField, sigma: SparsityFactor) -> Result<ScanField> {
    let s = sigma.get();
    let (h, w) = field.dims();
    if h % s != 0 || w % s != 0 {
        return Err(Error::Dimension(format!("{sigma} does not divide {h}x{w}")));
    }
    let (lh, lw) = (h / s, w / s);
    let mut data = Vec::with_capacity(lh * lw);
    for y in 0..lh {
        let row = &field.data()[y * s * w..];
        data.extend((0..lw).map(|x| row[x * s]));
    }
    Ok(field.replace_data_unchecked(lh, lw, data))
}

/// Replicates every sample into a σ×σ block.
pub fn nearest_upsample(field: &ScanField, sigma: SparsityFactor) -> ScanField {
    let s = sigma.get();
    let (h, w) = field.dims();
    let mut data = Vec::with_capacity(h * w * s * s);
    for y in 0..h * s {
        let row = &field.data()[(y / s) * w..(y / s + 1) * w];
        data.extend((0..w * s).map(|x| row[x / s]));
    }
    field.replace_data_unchecked(h * s, w * s, data)
}

/// Min-max maps a raw field onto `[0, 1]`.
///
/// Constant fields become all-zero with `min == max` recorded.
pub fn normalize(field: &ScanField) -> Result<ScanField> {
    if field.is_normalized() {
        return Err(Error::State("field is already normalised".into()));
    }
    let (min, max) = field.min_max();
    let range = max as f64 - min as f64;
    let data = if range > 0.0 {
        field
            .data()
            .iter()
            .map(|&v| (((v as f64 - min as f64) / range) as f32).clamp(0.0, 1.0))
            .collect()
    } else {
        vec![0.0; field.data().len()]
    };
    field
        .replace_data_unchecked(field.height(), field.width(), data)
        .with_norm_state(NormState::Normalized { min, max })
}

pub fn denormalize(field: &ScanField) -> Result<ScanField> {
    let NormState::Normalized { min, max } = field.norm_state() else {
        return Err(Error::State("field is not normalised".into()));
    };
    let range = max as f64 - min as f64;
    let data = field
        .data()
        .iter()
        .map(|&v| (min as f64 + v as f64 * range) as f32)
        .collect();
    let mut out = field.replace_data_unchecked(field.height(), field.width(), data);
    out = out.with_norm_state(NormState::Raw)?;
    Ok(out)
}

/// Co-registered random crops of a sparse/full pair.
///
/// `low` must be the strided subsample of `high`; the returned low crop is
/// exactly the subsample of the returned high crop.
pub fn random_crop_pair(
    low: &ScanField,
    high: &ScanField,
    crop_high: usize,
    rng_seed: u64,
) -> Result<(ScanField, ScanField)> {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    crop_pair_with(low, high, crop_high, &mut rng)
}

pub(crate) fn crop_pair_with(
    low: &ScanField,
    high: &ScanField,
    crop_high: usize,
    rng: &mut impl Rng,
) -> Result<(ScanField, ScanField)> {
    let (hh, hw) = high.dims();
    let (lh, lw) = low.dims();
    if hh % lh != 0 || hw % lw != 0 || hh / lh != hw / lw {
        return Err(Error::Dimension(format!(
            "high {hh}x{hw} is not an isotropic multiple of low {lh}x{lw}"
        )));
    }
    let s = hh / lh;
    if crop_high == 0 || !crop_high.is_multiple_of(s) {
        return Err(Error::Dimension(format!("crop {crop_high} not divisible by sigma {s}")));
    }
    if crop_high > hh.min(hw) {
        return Err(Error::Dimension(format!("crop {crop_high} larger than field {hh}x{hw}")));
    }
    let cl = crop_high / s;
    let oy = rng.random_range(0..=lh - cl);
    let ox = rng.random_range(0..=lw - cl);
    Ok((crop(low, oy, ox, cl, cl), crop(high, oy * s, ox * s, crop_high, crop_high)))
}

pub(crate) fn crop(field: &ScanField, oy: usize, ox: usize, ch: usize, cw: usize) -> ScanField {
    let w = field.width();
    let mut data = Vec::with_capacity(ch * cw);
    for y in oy..oy + ch {
        data.extend_from_slice(&field.data()[y * w + ox..y * w + ox + cw]);
    }
    field.replace_data_unchecked(ch, cw, data)
}

/// The eight symmetries of the square.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Dihedral {
    Identity,
    Rot90,
    Rot180,
    Rot270,
    FlipHorizontal,
    FlipVertical,
    Transpose,
    AntiTranspose,
}

impl Dihedral {
    pub const ALL: [Dihedral; 8] = [
        Dihedral::Identity,
        Dihedral::Rot90,
        Dihedral::Rot180,
        Dihedral::Rot270,
        Dihedral::FlipHorizontal,
        Dihedral::FlipVertical,
        Dihedral::Transpose,
        Dihedral::AntiTranspose,
    ];

    pub fn from_code(code: u8) -> Result<Self> {
        Dihedral::ALL
            .get(code as usize)
            .copied()
            .ok_or_else(|| Error::Validation(format!("augmentation code {code} not in 0..8")))
    }

    pub fn code(self) -> u8 {
        Dihedral::ALL.iter().position(|&d| d == self).unwrap() as u8
    }

    pub fn swaps_axes(self) -> bool {
        matches!(
            self,
            Dihedral::Rot90 | Dihedral::Rot270 | Dihedral::Transpose | Dihedral::AntiTranspose
        )
    }

    /// Source coordinate in an `h × w` input for output coordinate `(y, x)`.
    #[inline]
    pub fn source(self, y: usize, x: usize, h: usize, w: usize) -> (usize, usize) {
        // Rot90 is counter-clockwise.
        match self {
            Dihedral::Identity => (y, x),
            Dihedral::Rot90 => (x, w - 1 - y),
            Dihedral::Rot180 => (h - 1 - y, w - 1 - x),
            Dihedral::Rot270 => (h - 1 - x, y),
            Dihedral::FlipHorizontal => (y, w - 1 - x),
            Dihedral::FlipVertical => (h - 1 - y, x),
            Dihedral::Transpose => (x, y),
            Dihedral::AntiTranspose => (h - 1 - x, w - 1 - y),
        }
    }

    /// Applies the transform to a row-major `h × w` buffer.
    pub fn apply<T: Copy>(self, data: &[T], h: usize, w: usize) -> (usize, usize, Vec<T>) {
        let (oh, ow) = if self.swaps_axes() { (w, h) } else { (h, w) };
        let mut out = Vec::with_capacity(data.len());
        for y in 0..oh {
            for x in 0..ow {
                let (sy, sx) = self.source(y, x, h, w);
                out.push(data[sy * w + sx]);
            }
        }
        (oh, ow, out)
    }
}

pub fn dihedral(field: &ScanField, t: Dihedral) -> ScanField {
    let (h, w, data) = t.apply(field.data(), field.height(), field.width());
    let mut out = field.replace_data_unchecked(h, w, data);
    if t.swaps_axes() {
        let e = field.extent();
        out = out.with_extent(super::PhysicalExtent {
            width_um: e.height_um,
            height_um: e.width_um,
        });
    }
    out
}

/// Applies dihedral transform `code` (0..8) to both fields.
pub fn augment_pair(low: &ScanField, high: &ScanField, code: u8) -> Result<(ScanField, ScanField)> {
    let t = Dihedral::from_code(code)?;
    Ok((dihedral(low, t), dihedral(high, t)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scanio::Channel;
    use proptest::prelude::*;
    use rand::Rng;

    fn ramp(h: usize, w: usize) -> ScanField {
        ScanField::from_fn(Channel::Current, h, w, |y, x| (y * w + x) as f32).unwrap()
    }

    #[test]
    fn stride_two_keeps_even_indices() {
        let d = downsample(&ramp(4, 4), SparsityFactor::X2).unwrap();
        assert_eq!(d.dims(), (2, 2));
        assert_eq!(d.data(), &[0.0, 2.0, 8.0, 10.0]);
    }

    #[test]
    fn full_frame_sparse_resolutions() {
        let f = ScanField::zeros(Channel::Morphology, 512, 512).unwrap();
        for (s, side) in [(SparsityFactor::X2, 256), (SparsityFactor::X4, 128), (SparsityFactor::X8, 64)] {
            let d = downsample(&f, s).unwrap();
            assert_eq!(d.dims(), (side, side));
            assert_eq!(d.extent(), f.extent());
        }
    }

    #[test]
    fn non_dividing_sigma_rejected() {
        assert!(matches!(downsample(&ramp(6, 6), SparsityFactor::X4), Err(Error::Dimension(_))));
        assert!(SparsityFactor::new(1).is_err());
        assert!(SparsityFactor::new(3).is_err());
    }

    #[test]
    fn normalize_affine_and_degenerate() {
        let f = ScanField::new(Channel::Current, 1, 2, vec![0.0, 10.0]).unwrap();
        let n = normalize(&f).unwrap();
        assert_eq!(n.data(), &[0.0, 1.0]);
        assert_eq!(n.norm_state(), NormState::Normalized { min: 0.0, max: 10.0 });
        assert!(matches!(normalize(&n), Err(Error::State(_))));
        assert!(matches!(denormalize(&f), Err(Error::State(_))));

        let c = ScanField::new(Channel::Current, 2, 2, vec![5.0; 4]).unwrap();
        let n = normalize(&c).unwrap();
        assert_eq!(n.data(), &[0.0; 4]);
        assert_eq!(n.norm_state(), NormState::Normalized { min: 5.0, max: 5.0 });
        assert_eq!(denormalize(&n).unwrap().data(), c.data());
    }

    #[test]
    fn normalize_round_trip_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let f = ScanField::from_fn(Channel::Morphology, 64, 64, |_, _| rng.random_range(-40.0..90.0)).unwrap();
        let (lo, hi) = f.min_max();
        let back = denormalize(&normalize(&f).unwrap()).unwrap();
        let err = f.data().iter().zip(back.data()).map(|(a, b)| (a - b).abs()).fold(0.0f32, f32::max);
        assert!(err < 1e-5 * (hi - lo), "round-trip error {err}");
    }

    #[test]
    fn crop_sizes_and_determinism() {
        let high = ramp(512, 512);
        let low = downsample(&high, SparsityFactor::X2).unwrap();
        let (l, h) = random_crop_pair(&low, &high, 256, 3).unwrap();
        assert_eq!(l.dims(), (128, 128));
        assert_eq!(h.dims(), (256, 256));
        let (l2, h2) = random_crop_pair(&low, &high, 256, 3).unwrap();
        assert_eq!((l, h), (l2, h2));

        let (l, h) = random_crop_pair(&low, &high, 512, 99).unwrap();
        assert_eq!(h, high);
        assert_eq!(l, low);
        assert!(matches!(random_crop_pair(&low, &high, 520, 1), Err(Error::Dimension(_))));
        assert!(matches!(random_crop_pair(&low, &high, 255, 1), Err(Error::Dimension(_))));
    }

    #[test]
    fn eight_distinct_transforms() {
        let f = ScanField::new(Channel::Current, 2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let mut outs: Vec<Vec<f32>> = Dihedral::ALL.iter().map(|&t| dihedral(&f, t).into_data()).collect();
        assert_eq!(outs[0], vec![1.0, 2.0, 3.0, 4.0]);
        outs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        outs.dedup();
        assert_eq!(outs.len(), 8);
        assert!(augment_pair(&f, &f, 8).is_err());
    }

    #[test]
    fn rot90_has_order_four() {
        let f = ramp(3, 5);
        let mut g = f.clone();
        for _ in 0..4 {
            g = dihedral(&g, Dihedral::Rot90);
        }
        assert_eq!(g, f);
        // counter-clockwise: top-right corner moves to top-left
        assert_eq!(dihedral(&f, Dihedral::Rot90).get(0, 0), f.get(0, 4));
    }

    proptest! {
        #[test]
        fn downsample_commutes_with_dihedral(k in 1usize..5, m in 1usize..5, code in 0u8..8, seed in any::<u64>()) {
            let s = SparsityFactor::X2;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let f = ScanField::from_fn(Channel::Current, 2 * k, 2 * m, |_, _| rng.random()).unwrap();
            let t = Dihedral::from_code(code).unwrap();
            let a = downsample(&dihedral(&f, t), s).unwrap();
            // Reflections map the phase-0 lattice of an even-sized grid onto
            // phase σ-1, so the commuting subsample is taken at the reflected
            // phase.
            let (py, px) = t.source(0, 0, f.height(), f.width());
            let (py, px) = (py % 2, px % 2);
            let sub = ScanField::from_fn(Channel::Current, k, m, |y, x| f.get(2 * y + py, 2 * x + px)).unwrap();
            let b = dihedral(&sub, t);
            prop_assert_eq!(a.data(), b.data());
            if matches!(t, Dihedral::Identity | Dihedral::Transpose) {
                prop_assert_eq!(a, dihedral(&downsample(&f, s).unwrap(), t));
            }
        }

        #[test]
        fn crop_alignment(seed in any::<u64>(), crop_half in 1usize..9) {
            let high = ramp(32, 48);
            let low = downsample(&high, SparsityFactor::X2).unwrap();
            let (l, h) = random_crop_pair(&low, &high, crop_half * 2, seed).unwrap();
            for i in 0..l.height() {
                for j in 0..l.width() {
                    prop_assert_eq!(l.get(i, j), h.get(2 * i, 2 * j));
                }
            }
        }
    }
}
