use crate::grid::disk_offsets;
use crate::scanio::ScanField;
use crate::{Error, Result};

/// Geometric tip broadening: grey-scale dilation of the height map by a disk
/// of `tip_radius_px`. Radius 0 is the identity.
pub fn tip_convolve(field: &ScanField, tip_radius_px: i64) -> Result<ScanField> {
    if tip_radius_px < 0 {
        return Err(Error::Validation(format!("tip radius {tip_radius_px} is negative")));
    }
    if tip_radius_px == 0 {
        return Ok(field.clone());
    }
    let offsets = disk_offsets(tip_radius_px as usize);
    let (h, w) = field.dims();
    let src = field.data();
    let mut out = Vec::with_capacity(h * w);
    for y in 0..h {
        for x in 0..w {
            let mut best = f32::NEG_INFINITY;
            for &(dy, dx) in &offsets {
                let (sy, sx) = (y as isize + dy, x as isize + dx);
                if sy >= 0 && sx >= 0 && (sy as usize) < h && (sx as usize) < w {
                    best = best.max(src[sy as usize * w + sx as usize]);
                }
            }
            out.push(best);
        }
    }
    field.with_data(h, w, out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::BoolGrid;
    use crate::scanio::Channel;
    use proptest::prelude::*;

    fn field(h: usize, w: usize, data: Vec<f32>) -> ScanField {
        ScanField::new(Channel::Morphology, h, w, data).unwrap()
    }

    #[test]
    fn radius_zero_is_identity() {
        let f = field(2, 3, vec![1.0, -2.0, 3.0, 0.5, 0.0, 9.0]);
        assert_eq!(tip_convolve(&f, 0).unwrap(), f);
        assert!(tip_convolve(&f, -1).is_err());
    }

    #[test]
    fn spike_becomes_disk_plateau() {
        let mut data = vec![0.0; 11 * 11];
        data[5 * 11 + 5] = 2.5;
        let out = tip_convolve(&field(11, 11, data), 2).unwrap();
        // brute force: a pixel sees the spike iff it lies within distance 2
        for y in 0..11i32 {
            for x in 0..11i32 {
                let inside = (y - 5).pow(2) + (x - 5).pow(2) <= 4;
                assert_eq!(out.get(y as usize, x as usize), if inside { 2.5 } else { 0.0 });
            }
        }
        assert_eq!(out.data().iter().filter(|&&v| v == 2.5).count(), 13);
    }

    fn support(f: &ScanField) -> BoolGrid {
        BoolGrid::from_vec(f.height(), f.width(), f.data().iter().map(|&v| v > 0.0).collect())
    }

    proptest! {
        #[test]
        fn extensive_and_monotone(
            base in prop::collection::vec(-5.0f32..5.0, 64),
            bump in prop::collection::vec(0.0f32..2.0, 64),
            r in 0i64..4,
        ) {
            let f = field(8, 8, base.clone());
            let g = field(8, 8, base.iter().zip(&bump).map(|(a, b)| a + b).collect());
            let df = tip_convolve(&f, r).unwrap();
            let dg = tip_convolve(&g, r).unwrap();
            for i in 0..64 {
                prop_assert!(df.data()[i] >= f.data()[i]);
                prop_assert!(dg.data()[i] >= df.data()[i]);
            }
        }

        #[test]
        fn twice_r_within_once_2r(bits in prop::collection::vec(prop::bool::weighted(0.05), 256), r in 1i64..4) {
            let f = field(16, 16, bits.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect());
            let twice = tip_convolve(&tip_convolve(&f, r).unwrap(), r).unwrap();
            let once = tip_convolve(&f, 2 * r).unwrap();
            prop_assert!(support(&twice).is_subset_of(&support(&once)));
        }
    }
}
