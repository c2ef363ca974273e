//! Boolean rasters used for masks and segmentations.

use serde::{Deserialize, Serialize};

/// Row-major boolean raster.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoolGrid {
    height: usize,
    width: usize,
    data: Vec<bool>,
}

impl BoolGrid {
    pub fn new(height: usize, width: usize) -> Self {
        BoolGrid {
            height,
            width,
            data: vec![false; height * width],
        }
    }

    pub fn filled(height: usize, width: usize, value: bool) -> Self {
        BoolGrid {
            height,
            width,
            data: vec![value; height * width],
        }
    }

    pub fn from_vec(height: usize, width: usize, data: Vec<bool>) -> Self {
        assert_eq!(data.len(), height * width, "grid data length");
        BoolGrid {
            height,
            width,
            data,
        }
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut data = Vec::with_capacity(height * width);
        for y in 0..height {
            for x in 0..width {
                data.push(f(y, x));
            }
        }
        BoolGrid {
            height,
            width,
            data,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize) -> bool {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, value: bool) {
        self.data[y * self.width + x] = value;
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&v| v).count()
    }

    pub fn fraction(&self) -> f64 {
        if self.data.is_empty() {
            return 0.0;
        }
        self.count() as f64 / self.data.len() as f64
    }

    /// `true` where either grid is set.
    pub fn or(&self, other: &BoolGrid) -> BoolGrid {
        assert_eq!((self.height, self.width), (other.height, other.width));
        let data = self.data.iter().zip(&other.data).map(|(a, b)| *a || *b).collect();
        BoolGrid::from_vec(self.height, self.width, data)
    }

    pub fn not(&self) -> BoolGrid {
        BoolGrid::from_vec(self.height, self.width, self.data.iter().map(|v| !v).collect())
    }

    /// Every set pixel of `self` is also set in `other`.
    pub fn is_subset_of(&self, other: &BoolGrid) -> bool {
        self.data.iter().zip(&other.data).all(|(a, b)| !a || *b)
    }

    /// Binary dilation by the closed disk of the given radius.
    pub fn dilate(&self, radius: usize) -> BoolGrid {
        let offsets = disk_offsets(radius);
        let mut out = BoolGrid::new(self.height, self.width);
        for y in 0..self.height {
            for x in 0..self.width {
                if !self.get(y, x) {
                    continue;
                }
                for &(dy, dx) in &offsets {
                    let (ny, nx) = (y as isize + dy, x as isize + dx);
                    if ny >= 0 && nx >= 0 && (ny as usize) < self.height && (nx as usize) < self.width {
                        out.set(ny as usize, nx as usize, true);
                    }
                }
            }
        }
        out
    }
}

/// Integer offsets `(dy, dx)` with `dy² + dx² ≤ radius²`.
pub(crate) fn disk_offsets(radius: usize) -> Vec<(isize, isize)> {
    let r = radius as isize;
    let mut out = Vec::new();
    for dy in -r..=r {
        for dx in -r..=r {
            if dy * dy + dx * dx <= r * r {
                out.push((dy, dx));
            }
        }
    }
    out
}
