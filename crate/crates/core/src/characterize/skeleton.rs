use crate::grid::BoolGrid;
use crate::scanio::Dihedral;

/// Zhang–Suen thinning to an 8-connected one-pixel-wide skeleton.
pub fn thin(grid: &BoolGrid) -> BoolGrid {
    let (h, w) = (grid.height(), grid.width());
    let mut cur = grid.clone();
    let at = |g: &BoolGrid, y: isize, x: isize| -> u8 {
        (y >= 0 && x >= 0 && (y as usize) < h && (x as usize) < w && g.get(y as usize, x as usize)) as u8
    };
    loop {
        let mut changed = false;
        for pass in 0..2 {
            let mut remove = Vec::new();
            for y in 0..h {
                for x in 0..w {
                    if !cur.get(y, x) {
                        continue;
                    }
                    let (yi, xi) = (y as isize, x as isize);
                    // P2..P9, clockwise from north.
                    let p = [
                        at(&cur, yi - 1, xi),
                        at(&cur, yi - 1, xi + 1),
                        at(&cur, yi, xi + 1),
                        at(&cur, yi + 1, xi + 1),
                        at(&cur, yi + 1, xi),
                        at(&cur, yi + 1, xi - 1),
                        at(&cur, yi, xi - 1),
                        at(&cur, yi - 1, xi - 1),
                    ];
                    let b: u8 = p.iter().sum();
                    let a = (0..8).filter(|&i| p[i] == 0 && p[(i + 1) % 8] == 1).count();
                    let (n, e, s, wv) = (p[0], p[2], p[4], p[6]);
                    let cond = if pass == 0 {
                        n * e * s == 0 && e * s * wv == 0
                    } else {
                        n * e * wv == 0 && n * s * wv == 0
                    };
                    if (2..=6).contains(&b) && a == 1 && cond {
                        remove.push((y, x));
                    }
                }
            }
            changed |= !remove.is_empty();
            for (y, x) in remove {
                cur.set(y, x, false);
            }
        }
        if !changed {
            return cur;
        }
    }
}

/// Length of an 8-connected skeleton: orthogonal links count one pitch,
/// diagonal links count the pixel diagonal unless an orthogonal path
/// already joins the pair.
pub fn link_length(skel: &BoolGrid, pitch_x: f64, pitch_y: f64) -> f64 {
    let (h, w) = (skel.height(), skel.width());
    let diag = pitch_x.hypot(pitch_y);
    let mut total = 0.0;
    for y in 0..h {
        for x in 0..w {
            if !skel.get(y, x) {
                continue;
            }
            let right = x + 1 < w && skel.get(y, x + 1);
            let down = y + 1 < h && skel.get(y + 1, x);
            if right {
                total += pitch_x;
            }
            if down {
                total += pitch_y;
            }
            if y + 1 < h && x + 1 < w && skel.get(y + 1, x + 1) && !right && !skel.get(y + 1, x) {
                total += diag;
            }
            if y + 1 < h && x >= 1 && skel.get(y + 1, x - 1) && !skel.get(y, x - 1) && !down {
                total += diag;
            }
        }
    }
    total
}

/// Skeleton length averaged over the eight dihedral orientations of the
/// shape, so the result does not depend on how the grid is oriented.
pub fn skeleton_length(grid: &BoolGrid, pitch_x: f64, pitch_y: f64) -> f64 {
    let (h, w) = (grid.height(), grid.width());
    let mut lengths: Vec<f64> = Dihedral::ALL
        .iter()
        .map(|t| {
            let (th, tw, data) = t.apply(grid.data(), h, w);
            let (px, py) = if t.swaps_axes() { (pitch_y, pitch_x) } else { (pitch_x, pitch_y) };
            link_length(&thin(&BoolGrid::from_vec(th, tw, data)), px, py)
        })
        .collect();
    lengths.sort_by(f64::total_cmp);
    lengths.iter().sum::<f64>() / lengths.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn bar_thins_to_its_centre_line() {
        let bar = BoolGrid::from_fn(7, 20, |y, x| (2..5).contains(&y) && (2..18).contains(&x));
        let skel = thin(&bar);
        assert!(skel.count() >= 10 && skel.count() <= 16);
        assert!(skel.is_subset_of(&bar));
        let len = skeleton_length(&bar, 1.0, 1.0);
        assert!((10.0..=16.0).contains(&len), "length {len}");
    }

    #[test]
    fn link_lengths() {
        let line = BoolGrid::from_fn(1, 5, |_, _| true);
        assert_eq!(link_length(&line, 2.0, 1.0), 8.0);
        let diag = BoolGrid::from_fn(4, 4, |y, x| y == x);
        assert!((link_length(&diag, 1.0, 1.0) - 3.0 * 2f64.sqrt()).abs() < 1e-12);
        let corner = BoolGrid::from_fn(2, 2, |y, x| !(y == 1 && x == 0));
        assert_eq!(link_length(&corner, 1.0, 1.0), 2.0);
    }

    proptest! {
        #[test]
        fn length_is_dihedral_invariant(cells in proptest::collection::vec(any::<bool>(), 12 * 10), code in 0u8..8) {
            let g = BoolGrid::from_vec(12, 10, cells);
            let t = Dihedral::from_code(code).unwrap();
            let (th, tw, data) = t.apply(g.data(), 12, 10);
            let moved = BoolGrid::from_vec(th, tw, data);
            prop_assert_eq!(skeleton_length(&g, 0.5, 0.5), skeleton_length(&moved, 0.5, 0.5));
        }

        #[test]
        fn skeleton_stays_inside(cells in proptest::collection::vec(any::<bool>(), 16 * 16)) {
            let g = BoolGrid::from_vec(16, 16, cells);
            prop_assert!(thin(&g).is_subset_of(&g));
        }
    }
}
