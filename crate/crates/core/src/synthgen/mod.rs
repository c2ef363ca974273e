//! Synthetic MoS₂-like dual-channel scans.
//!
//! Islands nucleate at Poisson-disk sites and grow radially at a common rate
//! until the target coverage is reached. Where two growth fronts meet a grain
//! boundary forms along the Voronoi ridge. Cracks are carved as random
//! polylines and point defects are sprinkled inside the film. Boundaries,
//! defects and cracks conduct at the off level.

mod mask;
mod tip;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

pub use mask::{mask_from_bytes, mask_to_bytes, read_mask, write_mask, GroundTruthMask};
pub use tip::tip_convolve;

use crate::grid::BoolGrid;
use crate::scanio::{Channel, PhysicalExtent, ScanField, ScanPair};
use crate::{Error, Result};

/// Generator knobs. Serialised with exactly these field names.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
#[allow(non_snake_case)]
pub struct SampleSpec {
    pub grid_size: usize,
    pub extent_um: f64,
    /// Islands per µm².
    pub nucleation_density: f64,
    pub coverage_target: f64,
    /// Point defects per µm² of film.
    pub defect_density: f64,
    pub crack_count: usize,
    pub monolayer_height_nm: f64,
    pub on_current_nA: f64,
    pub off_current_nA: f64,
    /// Noise standard deviation relative to each channel's range.
    pub noise_sigma: f64,
    pub tip_radius_px: usize,
    pub rng_seed: u64,
}

impl Default for SampleSpec {
    fn default() -> Self {
        SampleSpec {
            grid_size: 128,
            extent_um: 2.0,
            nucleation_density: 5.0,
            coverage_target: 0.7,
            defect_density: 3.0,
            crack_count: 1,
            monolayer_height_nm: 0.7,
            on_current_nA: 5.0,
            off_current_nA: 0.2,
            noise_sigma: 0.02,
            tip_radius_px: 1,
            rng_seed: 0,
        }
    }
}

impl SampleSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Validation(format!("sample spec: {msg}")));
        if self.grid_size < 64 {
            return bad("grid_size must be at least 64");
        }
        if !(self.extent_um > 0.0 && self.extent_um.is_finite()) {
            return bad("extent_um must be positive");
        }
        if !(self.coverage_target > 0.0 && self.coverage_target <= 1.0) {
            return bad("coverage_target must lie in (0, 1]");
        }
        if !(self.nucleation_density >= 0.0 && self.defect_density >= 0.0) {
            return bad("densities must be non-negative");
        }
        if !(self.off_current_nA >= 0.0 && self.on_current_nA > self.off_current_nA) {
            return bad("need on_current_nA > off_current_nA >= 0");
        }
        if !(self.noise_sigma >= 0.0 && self.monolayer_height_nm > 0.0) {
            return bad("noise_sigma must be >= 0 and monolayer_height_nm > 0");
        }
        Ok(())
    }

    fn pitch_um(&self) -> f64 {
        self.extent_um / self.grid_size as f64
    }

    /// Feature widths scale with resolution so that boundaries and cracks keep
    /// a roughly constant physical width above 256 px.
    fn feature_scale(&self) -> f64 {
        (self.grid_size as f64 / 256.0).max(1.0)
    }
}

/// Geometry shared by both channels before imaging effects.
struct Layout {
    film: BoolGrid,
    boundaries: BoolGrid,
    defects: BoolGrid,
    cracks: BoolGrid,
}

/// Generates a co-registered morphology/current pair and the masks it was
/// drawn from. Deterministic in `spec.rng_seed`.
pub fn generate_sample(spec: &SampleSpec) -> Result<(ScanPair, GroundTruthMask)> {
    spec.validate()?;
    if spec.nucleation_density == 0.0 {
        return Err(Error::Generation(format!(
            "coverage {} unreachable without nucleation sites",
            spec.coverage_target
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.rng_seed);
    let layout = layout(spec, &mut rng)?;
    let n = spec.grid_size;

    let current_clean: Vec<f32> = (0..n * n)
        .map(|i| {
            let conducting = layout.film.data()[i] && !layout.boundaries.data()[i] && !layout.defects.data()[i];
            if conducting {
                spec.on_current_nA as f32
            } else {
                spec.off_current_nA as f32
            }
        })
        .collect();
    let height: Vec<f32> = layout
        .film
        .data()
        .iter()
        .map(|&f| if f { spec.monolayer_height_nm as f32 } else { 0.0 })
        .collect();

    let extent = PhysicalExtent::square(spec.extent_um)?;
    let id = format!("synth-{}", spec.rng_seed);
    let morphology = ScanField::new(Channel::Morphology, n, n, height)?
        .with_extent(extent)
        .with_sample_id(id.clone());
    let morphology = tip_convolve(&morphology, spec.tip_radius_px as i64)?;
    let current = ScanField::new(Channel::Current, n, n, current_clean)?
        .with_extent(extent)
        .with_sample_id(id.clone());

    let noise_seed = rng.random::<u64>();
    let morphology = add_noise(&morphology, spec.noise_sigma, noise_seed)?;
    let current = add_noise(&current, spec.noise_sigma, noise_seed.wrapping_add(1))?;

    let mask = GroundTruthMask {
        film: layout.film,
        boundaries: layout.boundaries,
        defects: layout.defects,
        cracks: layout.cracks,
    };
    Ok((ScanPair::new(morphology, current, id)?, mask))
}

fn layout(spec: &SampleSpec, rng: &mut ChaCha8Rng) -> Result<Layout> {
    let n = spec.grid_size;
    let scale = spec.feature_scale();
    let seeds = nucleation_sites(spec, rng);
    let cracks = carve_cracks(spec, rng, 0.75 * scale);

    // Nearest and second-nearest site distance per pixel centre.
    let mut d1 = vec![f64::INFINITY; n * n];
    let mut d2 = vec![f64::INFINITY; n * n];
    for y in 0..n {
        for x in 0..n {
            let (py, px) = (y as f64 + 0.5, x as f64 + 0.5);
            let (mut a, mut b) = (f64::INFINITY, f64::INFINITY);
            for &(sy, sx) in &seeds {
                let d = ((py - sy).powi(2) + (px - sx).powi(2)).sqrt();
                if d < a {
                    b = a;
                    a = d;
                } else if d < b {
                    b = d;
                }
            }
            d1[y * n + x] = a;
            d2[y * n + x] = b;
        }
    }

    // Growth radius: smallest radius reaching the target film pixel count.
    let mut reachable: Vec<f64> = (0..n * n).filter(|&i| !cracks.data()[i]).map(|i| d1[i]).collect();
    if reachable.is_empty() {
        return Err(Error::Generation("cracks cover the whole frame".into()));
    }
    reachable.sort_by(f64::total_cmp);
    let wanted = ((spec.coverage_target * (n * n) as f64).round() as usize).clamp(1, reachable.len());
    let radius = reachable[wanted - 1];

    let film = BoolGrid::from_fn(n, n, |y, x| d1[y * n + x] <= radius && !cracks.get(y, x));
    let band = 1.5 * scale;
    let boundaries = BoolGrid::from_fn(n, n, |y, x| {
        let i = y * n + x;
        film.get(y, x) && d2[i] <= radius + 0.5 && d2[i] - d1[i] < band
    });
    let defects = place_defects(spec, rng, &film, &boundaries);
    Ok(Layout {
        film,
        boundaries,
        defects,
        cracks,
    })
}

/// Dart-throwing Poisson-disk sampling in pixel coordinates.
fn nucleation_sites(spec: &SampleSpec, rng: &mut impl Rng) -> Vec<(f64, f64)> {
    let n = spec.grid_size as f64;
    let expected = spec.nucleation_density * spec.extent_um * spec.extent_um;
    let count = (expected.round() as usize).max(1);
    let min_dist = 0.5 * n / (count as f64).sqrt();
    let mut sites: Vec<(f64, f64)> = Vec::with_capacity(count);
    for _ in 0..30 * count {
        if sites.len() == count {
            break;
        }
        let c = (rng.random_range(0.0..n), rng.random_range(0.0..n));
        if sites
            .iter()
            .all(|s| (s.0 - c.0).powi(2) + (s.1 - c.1).powi(2) >= min_dist * min_dist)
        {
            sites.push(c);
        }
    }
    sites
}

fn carve_cracks(spec: &SampleSpec, rng: &mut impl Rng, half_width: f64) -> BoolGrid {
    let n = spec.grid_size;
    let nf = n as f64;
    let mut cracks = BoolGrid::new(n, n);
    for _ in 0..spec.crack_count {
        let mut p = (rng.random_range(0.0..nf), rng.random_range(0.0..nf));
        let mut heading = rng.random_range(0.0..std::f64::consts::TAU);
        for _ in 0..4 {
            let len = rng.random_range(nf / 8.0..nf / 4.0);
            let q = (p.0 + len * heading.sin(), p.1 + len * heading.cos());
            stroke_segment(&mut cracks, p, q, half_width);
            p = q;
            heading += rng.random_range(-0.5..0.5);
        }
    }
    cracks
}

/// Marks pixels whose centre lies within `half_width` of segment `a`–`b`.
fn stroke_segment(grid: &mut BoolGrid, a: (f64, f64), b: (f64, f64), half_width: f64) {
    let (h, w) = (grid.height() as f64, grid.width() as f64);
    let pad = half_width + 1.0;
    let y0 = (a.0.min(b.0) - pad).floor().max(0.0) as usize;
    let y1 = (a.0.max(b.0) + pad).ceil().min(h) as usize;
    let x0 = (a.1.min(b.1) - pad).floor().max(0.0) as usize;
    let x1 = (a.1.max(b.1) + pad).ceil().min(w) as usize;
    let (dy, dx) = (b.0 - a.0, b.1 - a.1);
    let len2 = dy * dy + dx * dx;
    for y in y0..y1 {
        for x in x0..x1 {
            let (py, px) = (y as f64 + 0.5, x as f64 + 0.5);
            let t = if len2 > 0.0 {
                (((py - a.0) * dy + (px - a.1) * dx) / len2).clamp(0.0, 1.0)
            } else {
                0.0
            };
            let (cy, cx) = (a.0 + t * dy, a.1 + t * dx);
            if (py - cy).powi(2) + (px - cx).powi(2) <= half_width * half_width {
                grid.set(y, x, true);
            }
        }
    }
}

/// Places 3×3 low-conductance defects whose 5×5 surroundings are clean film,
/// at least 5 px apart so each forms its own enclosed hole.
fn place_defects(spec: &SampleSpec, rng: &mut impl Rng, film: &BoolGrid, boundaries: &BoolGrid) -> BoolGrid {
    let n = spec.grid_size;
    let mut defects = BoolGrid::new(n, n);
    let film_area = film.count() as f64 * spec.pitch_um().powi(2);
    let count = (spec.defect_density * film_area).round() as usize;
    if count == 0 {
        return defects;
    }
    let clean = |y: usize, x: usize| film.get(y, x) && !boundaries.get(y, x);
    let mut centres: Vec<(usize, usize)> = Vec::with_capacity(count);
    for _ in 0..200 * count {
        if centres.len() == count {
            break;
        }
        let (cy, cx) = (rng.random_range(2..n - 2), rng.random_range(2..n - 2));
        let surrounded = (cy - 2..=cy + 2).all(|y| (cx - 2..=cx + 2).all(|x| clean(y, x)));
        let spaced = centres
            .iter()
            .all(|&(y, x)| y.abs_diff(cy).max(x.abs_diff(cx)) >= 5);
        if surrounded && spaced {
            centres.push((cy, cx));
        }
    }
    for (cy, cx) in centres {
        for y in cy - 1..=cy + 1 {
            for x in cx - 1..=cx + 1 {
                defects.set(y, x, true);
            }
        }
    }
    defects
}

/// Adds zero-mean Gaussian noise with standard deviation
/// `sigma_rel · (max − min)` of the field.
pub fn add_noise(field: &ScanField, sigma_rel: f64, rng_seed: u64) -> Result<ScanField> {
    if !(sigma_rel >= 0.0 && sigma_rel.is_finite()) {
        return Err(Error::Validation(format!("noise level {sigma_rel} must be >= 0")));
    }
    let (lo, hi) = field.min_max();
    let std = sigma_rel * (hi as f64 - lo as f64);
    if std == 0.0 {
        return Ok(field.clone());
    }
    let normal = Normal::new(0.0, std).map_err(|e| Error::Validation(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let data = field
        .data()
        .iter()
        .map(|&v| (v as f64 + normal.sample(&mut rng)) as f32)
        .collect();
    field.with_data(field.height(), field.width(), data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn saturated_single_island_is_uniform() {
        let spec = SampleSpec {
            nucleation_density: 0.25,
            coverage_target: 1.0,
            crack_count: 0,
            defect_density: 0.0,
            noise_sigma: 0.0,
            ..SampleSpec::default()
        };
        let (pair, mask) = generate_sample(&spec).unwrap();
        assert_eq!(mask.film.count(), 128 * 128);
        assert!(pair.current.data().iter().all(|&v| v == 5.0));
    }

    #[test]
    fn deterministic_under_seed() {
        let spec = SampleSpec::default();
        let a = generate_sample(&spec).unwrap();
        let b = generate_sample(&spec).unwrap();
        assert_eq!(a, b);
        let c = generate_sample(&SampleSpec { rng_seed: 1, ..spec }).unwrap();
        assert_ne!(a.0.current, c.0.current);
    }

    #[test]
    fn half_coverage_at_full_resolution() {
        let spec = SampleSpec {
            grid_size: 512,
            extent_um: 4.0,
            coverage_target: 0.5,
            crack_count: 2,
            ..SampleSpec::default()
        };
        let (_, mask) = generate_sample(&spec).unwrap();
        let f = mask.film.fraction();
        assert!((0.48..=0.52).contains(&f), "coverage {f}");
    }

    #[test]
    fn zero_nucleation_is_unsatisfiable() {
        let spec = SampleSpec {
            nucleation_density: 0.0,
            ..SampleSpec::default()
        };
        assert!(matches!(generate_sample(&spec), Err(Error::Generation(_))));
    }

    #[test]
    fn invalid_specs_rejected() {
        for spec in [
            SampleSpec { grid_size: 32, ..SampleSpec::default() },
            SampleSpec { coverage_target: 0.0, ..SampleSpec::default() },
            SampleSpec { on_current_nA: 0.1, off_current_nA: 0.2, ..SampleSpec::default() },
            SampleSpec { defect_density: -1.0, ..SampleSpec::default() },
        ] {
            assert!(matches!(generate_sample(&spec), Err(Error::Validation(_))));
        }
    }

    #[test]
    fn json_keys_are_field_names() {
        let v = serde_json::to_value(SampleSpec::default()).unwrap();
        let mut keys: Vec<_> = v.as_object().unwrap().keys().cloned().collect();
        keys.sort();
        assert_eq!(
            keys,
            [
                "coverage_target", "crack_count", "defect_density", "extent_um", "grid_size",
                "monolayer_height_nm", "noise_sigma", "nucleation_density", "off_current_nA",
                "on_current_nA", "rng_seed", "tip_radius_px"
            ]
        );
        assert!(serde_json::from_str::<SampleSpec>(r#"{"grid_size": 64}"#).is_err());
    }

    #[test]
    fn noise_identity_and_statistics() {
        let (pair, _) = generate_sample(&SampleSpec {
            grid_size: 512,
            noise_sigma: 0.0,
            ..SampleSpec::default()
        })
        .unwrap();
        let f = pair.current;
        assert_eq!(add_noise(&f, 0.0, 3).unwrap(), f);
        let noisy = add_noise(&f, 0.05, 3).unwrap();
        assert_eq!(noisy, add_noise(&f, 0.05, 3).unwrap());
        let diffs: Vec<f64> = noisy.data().iter().zip(f.data()).map(|(a, b)| (*a - *b) as f64).collect();
        let mean = diffs.iter().sum::<f64>() / diffs.len() as f64;
        let std = (diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / diffs.len() as f64).sqrt();
        let target = 0.05 * (5.0 - 0.2);
        assert!((std - target).abs() < 0.05 * target, "std {std} vs {target}");
        assert!(add_noise(&f, -0.1, 0).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn masks_and_levels_hold(
            seed in any::<u64>(),
            coverage in 0.2f64..1.0,
            nucleation in 1.0f64..12.0,
            defects in 0.0f64..6.0,
            cracks in 0usize..4,
        ) {
            let spec = SampleSpec {
                grid_size: 64,
                extent_um: 1.5,
                nucleation_density: nucleation,
                coverage_target: coverage,
                defect_density: defects,
                crack_count: cracks,
                noise_sigma: 0.0,
                rng_seed: seed,
                ..SampleSpec::default()
            };
            let (pair, mask) = generate_sample(&spec).unwrap();
            prop_assert!(mask.check().is_ok());
            prop_assert!(pair.current.data().iter().all(|&v| v == 5.0 || v == 0.2));
            prop_assert!((mask.film.fraction() - coverage).abs() <= 0.02 + mask.cracks.fraction());
        }
    }
}
