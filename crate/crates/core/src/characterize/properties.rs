use serde::{Deserialize, Serialize};

use super::label::{label_components, Components, Connectivity};
use super::otsu::binarize_current;
use super::skeleton::skeleton_length;
use crate::grid::BoolGrid;
use crate::scanio::{NormState, PhysicalExtent, ScanField};
use crate::Result;

/// Minimum elongation (major/minor axis ratio) of a crack component.
pub const CRACK_ELONGATION: f64 = 3.0;

/// Scalar material properties of one current map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropertyReport {
    pub coverage_fraction: f64,
    /// Mean over film pixels, in the field's physical units.
    pub mean_current: f64,
    pub defect_count: usize,
    /// Defects per µm² of scanned area.
    pub defect_density: f64,
    /// µm² of film in islands of at least `min_island_px` pixels.
    pub extended_shape_area: f64,
    /// µm of film/non-film interface.
    pub boundary_length: f64,
    /// µm of skeleton over elongated low-current intrusions.
    pub crack_length: f64,
    pub island_count: usize,
    pub threshold_used: f64,
}

/// Resolution-dependent size cutoffs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cutoffs {
    pub min_island_px: usize,
    pub defect_max_px: usize,
    /// Disk radius of the opening that separates thin intrusions from bulk
    /// substrate.
    pub thin_radius: usize,
}

impl Cutoffs {
    /// 16 px islands and 64 px defects at 512², scaled by pixel count.
    /// Defects never drop below 16 px so that small grids still resolve them.
    pub fn for_grid(height: usize, width: usize) -> Self {
        let scale = (height * width) as f64 / (512.0 * 512.0);
        let side = height.max(width) as f64;
        Cutoffs {
            min_island_px: ((16.0 * scale).round() as usize).max(1),
            defect_max_px: ((64.0 * scale).round() as usize).max(16),
            thin_radius: ((3.0 * side / 512.0).round() as usize).max(3),
        }
    }
}

pub(crate) fn check_extent(extent: &PhysicalExtent) -> Result<()> {
    PhysicalExtent::new(extent.width_um, extent.height_um).map(|_| ())
}

/// Counts film pixel edges that face non-film pixels inside the frame.
/// Returns `(horizontal_neighbour_edges, vertical_neighbour_edges)`.
fn interface_edges(film: &BoolGrid) -> (usize, usize) {
    let (h, w) = (film.height(), film.width());
    let (mut across_x, mut across_y) = (0, 0);
    for y in 0..h {
        for x in 0..w {
            if x + 1 < w && film.get(y, x) != film.get(y, x + 1) {
                across_x += 1;
            }
            if y + 1 < h && film.get(y, x) != film.get(y + 1, x) {
                across_y += 1;
            }
        }
    }
    (across_x, across_y)
}

fn component_sizes(c: &Components) -> Vec<usize> {
    let mut sizes = vec![0; c.count + 1];
    for &l in &c.labels {
        sizes[l as usize] += 1;
    }
    sizes
}

/// Pixel coordinates of each component, indexed by label.
fn members(c: &Components) -> Vec<Vec<(usize, usize)>> {
    let mut out: Vec<Vec<(usize, usize)>> = vec![Vec::new(); c.count + 1];
    for (i, &l) in c.labels.iter().enumerate() {
        if l > 0 {
            out[l as usize].push((i / c.width, i % c.width));
        }
    }
    out
}

fn touches_border(c: &Components) -> Vec<bool> {
    let mut out = vec![false; c.count + 1];
    let (h, w) = (c.height, c.width);
    for y in 0..h {
        for x in 0..w {
            if y == 0 || x == 0 || y + 1 == h || x + 1 == w {
                out[c.labels[y * w + x] as usize] = true;
            }
        }
    }
    out
}

/// `sqrt(λ_max / λ_min)` of the pixel-coordinate covariance, with each pixel
/// treated as a unit square.
fn elongation(pixels: &[(usize, usize)]) -> f64 {
    let n = pixels.len() as f64;
    let my = pixels.iter().map(|p| p.0 as f64).sum::<f64>() / n;
    let mx = pixels.iter().map(|p| p.1 as f64).sum::<f64>() / n;
    let (mut syy, mut sxx, mut sxy) = (1.0 / 12.0, 1.0 / 12.0, 0.0);
    for &(y, x) in pixels {
        let (dy, dx) = (y as f64 - my, x as f64 - mx);
        syy += dy * dy / n;
        sxx += dx * dx / n;
        sxy += dy * dx / n;
    }
    let mean = 0.5 * (syy + sxx);
    let spread = (0.25 * (syy - sxx).powi(2) + sxy * sxy).sqrt();
    ((mean + spread) / (mean - spread)).sqrt()
}

fn physical(field: &ScanField, v: f64) -> f64 {
    match field.norm_state() {
        NormState::Raw => v,
        NormState::Normalized { min, max } => min as f64 + v * (max as f64 - min as f64),
    }
}

fn eroded(grid: &BoolGrid, radius: usize) -> BoolGrid {
    grid.not().dilate(radius).not()
}

/// Applies the fixed extraction pipeline to a full-resolution current map.
///
/// The pixel pitch is derived from `extent`, which overrides the field's own
/// metadata.
pub fn extract_properties(field: &ScanField, extent: PhysicalExtent) -> Result<PropertyReport> {
    check_extent(&extent)?;
    let (h, w) = field.dims();
    let cut = Cutoffs::for_grid(h, w);
    let (px, py) = (extent.width_um / w as f64, extent.height_um / h as f64);
    let mut bin = binarize_current(field);
    if bin.degenerate && physical(field, bin.threshold) > 0.0 {
        // A uniform conducting map is one saturated film.
        bin.film = BoolGrid::filled(h, w, true);
    }
    let film = &bin.film;

    let islands = label_components(film, Connectivity::Eight);
    let island_sizes = component_sizes(&islands);
    let big_px: usize = island_sizes.iter().skip(1).filter(|&&s| s >= cut.min_island_px).sum();

    let film_px = film.count();
    let mean_norm = if film_px == 0 {
        0.0
    } else {
        field.data().iter().zip(film.data()).filter(|(_, &f)| f).map(|(&v, _)| v as f64).sum::<f64>()
            / film_px as f64
    };
    let mean_current = physical(field, mean_norm);

    let substrate = film.not();
    let holes = label_components(&substrate, Connectivity::Four);
    let hole_sizes = component_sizes(&holes);
    let on_border = touches_border(&holes);
    let hole_pixels = members(&holes);
    let is_defect: Vec<bool> = (0..=holes.count)
        .map(|l| {
            l > 0
                && !on_border[l]
                && hole_sizes[l] < cut.defect_max_px
                && elongation(&hole_pixels[l]) < CRACK_ELONGATION
        })
        .collect();
    let defect_count = is_defect.iter().filter(|&&d| d).count();

    let (edges_x, edges_y) = interface_edges(film);
    let boundary_length = edges_x as f64 * py + edges_y as f64 * px;

    let defects = BoolGrid::from_fn(h, w, |y, x| is_defect[holes.labels[y * w + x] as usize]);
    let bulk = eroded(&substrate, cut.thin_radius).dilate(cut.thin_radius);
    let thin = BoolGrid::from_fn(h, w, |y, x| substrate.get(y, x) && !bulk.get(y, x) && !defects.get(y, x));
    let near_film = film.dilate(1);
    let crack_length = crack_skeletons(&thin, &near_film, px, py);

    let total_area = extent.area_um2();
    Ok(PropertyReport {
        coverage_fraction: film_px as f64 / (h * w) as f64,
        mean_current,
        defect_count,
        defect_density: defect_count as f64 / total_area,
        extended_shape_area: big_px as f64 * px * py,
        boundary_length,
        crack_length,
        island_count: islands.count,
        threshold_used: bin.threshold,
    })
}

fn crack_skeletons(thin: &BoolGrid, near_film: &BoolGrid, px: f64, py: f64) -> f64 {
    let comps = label_components(thin, Connectivity::Eight);
    let mut total = 0.0;
    for pixels in members(&comps).iter().skip(1) {
        if pixels.len() < 2
            || !pixels.iter().any(|&(y, x)| near_film.get(y, x))
            || elongation(pixels) < CRACK_ELONGATION
        {
            continue;
        }
        let y0 = pixels.iter().map(|p| p.0).min().unwrap();
        let x0 = pixels.iter().map(|p| p.1).min().unwrap();
        let y1 = pixels.iter().map(|p| p.0).max().unwrap();
        let x1 = pixels.iter().map(|p| p.1).max().unwrap();
        let mut local = BoolGrid::new(y1 - y0 + 3, x1 - x0 + 3);
        for &(y, x) in pixels {
            local.set(y - y0 + 1, x - x0 + 1, true);
        }
        total += skeleton_length(&local, px, py);
    }
    total
}
