use crate::grid::BoolGrid;
use crate::scanio::ScanField;

/// Histogram resolution of the Otsu threshold.
pub const HISTOGRAM_BINS: usize = 256;

/// Film/substrate split of a current map.
#[derive(Debug, Clone, PartialEq)]
pub struct Binarization {
    pub film: BoolGrid,
    /// In the field's own units; pixels `>= threshold` are film.
    pub threshold: f64,
    /// The field was constant, so no threshold separates anything.
    pub degenerate: bool,
}

/// Otsu threshold over a 256-bin histogram spanning the field's range.
///
/// Ties between equally good splits resolve to the middle of the tied
/// range, which makes the result symmetric under inverting the field.
///
/// ```
/// use sparsecafm::{characterize::binarize_current, Channel, ScanField};
/// let f = ScanField::from_fn(Channel::Current, 4, 4, |_, x| if x < 2 { 0.1 } else { 0.9 }).unwrap();
/// let b = binarize_current(&f);
/// assert!(b.threshold > 0.1 && b.threshold < 0.9);
/// assert_eq!(b.film.fraction(), 0.5);
/// ```
pub fn binarize_current(field: &ScanField) -> Binarization {
    let (h, w) = field.dims();
    let (lo, hi) = field.min_max();
    let (lo, hi) = (lo as f64, hi as f64);
    if hi <= lo {
        log::warn!("constant current map ({lo}); binarisation is degenerate");
        return Binarization { film: BoolGrid::new(h, w), threshold: lo, degenerate: true };
    }
    let width = (hi - lo) / HISTOGRAM_BINS as f64;
    let mut hist = [0u64; HISTOGRAM_BINS];
    for &v in field.data() {
        let bin = (((v as f64 - lo) / width) as usize).min(HISTOGRAM_BINS - 1);
        hist[bin] += 1;
    }
    let split = otsu_split(&hist);
    let threshold = lo + (split + 1.0) * width;
    let film = BoolGrid::from_vec(h, w, field.data().iter().map(|&v| v as f64 >= threshold).collect());
    Binarization { film, threshold, degenerate: false }
}

/// Index `k` (possibly half-integral) such that bins `0..=k` form the low
/// class. Between-class variance is compared exactly in integer arithmetic.
fn otsu_split(hist: &[u64; HISTOGRAM_BINS]) -> f64 {
    let n: u128 = hist.iter().map(|&c| c as u128).sum();
    let s: u128 = hist.iter().enumerate().map(|(i, &c)| i as u128 * c as u128).sum();
    let (mut n0, mut s0) = (0u128, 0u128);
    let mut best: Option<(u128, u128)> = None;
    let (mut first, mut last) = (0usize, 0usize);
    for (k, &c) in hist.iter().enumerate().take(HISTOGRAM_BINS - 1) {
        n0 += c as u128;
        s0 += k as u128 * c as u128;
        let n1 = n - n0;
        if n0 == 0 || n1 == 0 {
            continue;
        }
        // (S·n0 − N·s0)² / (n0·n1), proportional to the between-class variance.
        let diff = (s * n0).abs_diff(n * s0);
        let num = diff * diff;
        let den = n0 * n1;
        match best {
            Some((bn, bd)) if num * bd < bn * den => {}
            Some((bn, bd)) if num * bd == bn * den => last = k,
            _ => {
                best = Some((num, den));
                first = k;
                last = k;
            }
        }
    }
    (first + last) as f64 / 2.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scanio::Channel;
    use proptest::prelude::*;

    #[test]
    fn constant_field_is_degenerate() {
        let f = ScanField::from_fn(Channel::Current, 5, 5, |_, _| 3.0).unwrap();
        let b = binarize_current(&f);
        assert!(b.degenerate);
        assert_eq!(b.film.count(), 0);
        assert_eq!(b.threshold, 3.0);
    }

    #[test]
    fn tied_split_is_centred() {
        let f = ScanField::from_fn(Channel::Current, 2, 2, |y, _| if y == 0 { 0.0 } else { 1.0 }).unwrap();
        let b = binarize_current(&f);
        assert!((b.threshold - 0.5).abs() < 1e-12);
    }

    #[test]
    fn separates_unequal_modes() {
        let f = ScanField::from_fn(Channel::Current, 10, 10, |y, x| {
            let bump = ((y * 10 + x) % 7) as f32 * 0.01;
            if y < 3 { 0.2 + bump } else { 5.0 - bump }
        })
        .unwrap();
        let b = binarize_current(&f);
        assert_eq!(b.film.count(), 70);
    }

    proptest! {
        #[test]
        fn inversion_complements_coverage(values in proptest::collection::vec(0.0f32..10.0, 64)) {
            let f = ScanField::new(Channel::Current, 8, 8, values.clone()).unwrap();
            let (lo, hi) = f.min_max();
            let inv = ScanField::new(Channel::Current, 8, 8, values.iter().map(|v| hi + lo - v).collect()).unwrap();
            let a = binarize_current(&f);
            let b = binarize_current(&inv);
            prop_assume!(!a.degenerate);
            prop_assume!(values.iter().all(|&v| v as f64 != a.threshold && (hi + lo - v) as f64 != b.threshold));
            prop_assert_eq!(a.film.count() + b.film.count(), 64);
        }
    }
}
