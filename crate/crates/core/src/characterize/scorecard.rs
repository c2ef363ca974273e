use std::io::Write;

use serde::{Deserialize, Serialize};

use super::properties::{check_extent, extract_properties, PropertyReport};
use crate::baselines::bicubic_upsample;
use crate::scanio::{nearest_upsample, PhysicalExtent, ScanField, SparsityFactor};
use crate::{Error, Result};

/// Guard on the relative-error denominator.
pub const RMAE_EPSILON: f64 = 1e-12;

/// Properties scored, in report order.
pub const PROPERTY_NAMES: [&str; 8] = [
    "coverage_fraction",
    "mean_current",
    "defect_count",
    "defect_density",
    "extended_shape_area",
    "boundary_length",
    "crack_length",
    "island_count",
];

fn property_values(r: &PropertyReport) -> [f64; 8] {
    [
        r.coverage_fraction,
        r.mean_current,
        r.defect_count as f64,
        r.defect_density,
        r.extended_shape_area,
        r.boundary_length,
        r.crack_length,
        r.island_count as f64,
    ]
}

/// How sparse scans are brought to full resolution before extraction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BaselineUpsampling {
    #[default]
    Nearest,
    Bicubic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropertyError {
    pub property: String,
    pub prediction_rmae: f64,
    pub baseline_rmae: f64,
}

/// Relative mean absolute error of each property for the model arm and the
/// sparse-baseline arm at one sparsity factor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scorecard {
    pub sigma: SparsityFactor,
    pub sample_count: usize,
    pub baseline_upsampling: BaselineUpsampling,
    pub properties: Vec<PropertyError>,
}

impl Scorecard {
    pub fn get(&self, property: &str) -> Option<&PropertyError> {
        self.properties.iter().find(|p| p.property == property)
    }
}

/// Scores predictions and sparse scans against full-resolution truths.
///
/// `sparse` holds the low-resolution scans; they are upsampled by `sigma`
/// with `upsampling` before extraction.
pub fn build_scorecard(
    truths: &[ScanField],
    predictions: &[ScanField],
    sparse: &[ScanField],
    extent: PhysicalExtent,
    sigma: SparsityFactor,
    upsampling: BaselineUpsampling,
) -> Result<Scorecard> {
    check_extent(&extent)?;
    if truths.len() != predictions.len() || truths.len() != sparse.len() {
        return Err(Error::Validation(format!(
            "collection lengths differ: {} truths, {} predictions, {} sparse scans",
            truths.len(),
            predictions.len(),
            sparse.len()
        )));
    }
    if truths.is_empty() {
        return Err(Error::Validation("no samples to score".into()));
    }
    let s = sigma.get();
    let mut pred_sum = [0.0f64; 8];
    let mut base_sum = [0.0f64; 8];
    for (i, ((t, p), lo)) in truths.iter().zip(predictions).zip(sparse).enumerate() {
        let (h, w) = t.dims();
        if p.dims() != (h, w) || lo.dims() != (h / s, w / s) || h % s != 0 || w % s != 0 {
            return Err(Error::Dimension(format!(
                "sample {i}: truth {:?}, prediction {:?}, sparse {:?} at x{s}",
                t.dims(),
                p.dims(),
                lo.dims()
            )));
        }
        let up = match upsampling {
            BaselineUpsampling::Nearest => nearest_upsample(lo, sigma),
            BaselineUpsampling::Bicubic => bicubic_upsample(lo, sigma),
        };
        let truth = property_values(&extract_properties(t, extent)?);
        let pred = property_values(&extract_properties(p, extent)?);
        let base = property_values(&extract_properties(&up, extent)?);
        for k in 0..8 {
            let denom = truth[k].abs().max(RMAE_EPSILON);
            pred_sum[k] += (pred[k] - truth[k]).abs() / denom;
            base_sum[k] += (base[k] - truth[k]).abs() / denom;
        }
    }
    let n = truths.len() as f64;
    Ok(Scorecard {
        sigma,
        sample_count: truths.len(),
        baseline_upsampling: upsampling,
        properties: PROPERTY_NAMES
            .iter()
            .enumerate()
            .map(|(k, name)| PropertyError {
                property: name.to_string(),
                prediction_rmae: pred_sum[k] / n,
                baseline_rmae: base_sum[k] / n,
            })
            .collect(),
    })
}

/// Writes scorecards as a property × (arm, σ) matrix with columns
/// `prediction_x{σ}` and `baseline_x{σ}`.
pub fn write_scorecard_csv<W: Write>(out: W, cards: &[Scorecard]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    let mut header = vec!["property".to_string()];
    for c in cards {
        header.push(format!("prediction_{}", c.sigma));
        header.push(format!("baseline_{}", c.sigma));
    }
    wtr.write_record(&header)?;
    for name in PROPERTY_NAMES {
        let mut row = vec![name.to_string()];
        for c in cards {
            let e = c.get(name).ok_or_else(|| Error::Validation(format!("scorecard lacks {name}")))?;
            row.push(e.prediction_rmae.to_string());
            row.push(e.baseline_rmae.to_string());
        }
        wtr.write_record(&row)?;
    }
    wtr.flush().map_err(|e| Error::io("<scorecard csv>", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scanio::{downsample, Channel};

    fn blob(n: usize, r: f64) -> ScanField {
        let c = n as f64 / 2.0;
        ScanField::from_fn(Channel::Current, n, n, |y, x| {
            if ((y as f64 - c).powi(2) + (x as f64 - c).powi(2)).sqrt() < r { 5.0 } else { 0.2 }
        })
        .unwrap()
    }

    #[test]
    fn perfect_predictions_score_zero() {
        let t = vec![blob(32, 9.0), blob(32, 12.0)];
        let lo: Vec<_> = t.iter().map(|f| downsample(f, SparsityFactor::X2).unwrap()).collect();
        let card = build_scorecard(&t, &t, &lo, PhysicalExtent::square(1.0).unwrap(), SparsityFactor::X2, BaselineUpsampling::Nearest)
            .unwrap();
        assert_eq!(card.sample_count, 2);
        assert!(card.properties.iter().all(|p| p.prediction_rmae == 0.0 && p.baseline_rmae >= 0.0));
    }

    #[test]
    fn coverage_anchor() {
        let truth = ScanField::from_fn(Channel::Current, 20, 20, |y, _| if y < 10 { 5.0 } else { 0.2 }).unwrap();
        let pred = ScanField::from_fn(Channel::Current, 20, 20, |y, _| if y < 9 { 5.0 } else { 0.2 }).unwrap();
        let lo = downsample(&truth, SparsityFactor::X2).unwrap();
        let card = build_scorecard(&[truth], &[pred], &[lo], PhysicalExtent::square(1.0).unwrap(), SparsityFactor::X2, BaselineUpsampling::Nearest)
            .unwrap();
        assert!((card.get("coverage_fraction").unwrap().prediction_rmae - 0.1).abs() < 1e-12);
    }

    #[test]
    fn length_mismatch_rejected() {
        let t = vec![blob(16, 4.0)];
        let err = build_scorecard(&t, &[], &[], PhysicalExtent::square(1.0).unwrap(), SparsityFactor::X2, BaselineUpsampling::Nearest);
        assert!(matches!(err, Err(Error::Validation(_))));
    }

    #[test]
    fn csv_matrix_layout() {
        let t = vec![blob(16, 5.0)];
        let lo = vec![downsample(&t[0], SparsityFactor::X4).unwrap()];
        let card = build_scorecard(&t, &t, &lo, PhysicalExtent::square(1.0).unwrap(), SparsityFactor::X4, BaselineUpsampling::Bicubic)
            .unwrap();
        let mut buf = Vec::new();
        write_scorecard_csv(&mut buf, std::slice::from_ref(&card)).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "property,prediction_x4,baseline_x4");
        assert_eq!(lines.count(), PROPERTY_NAMES.len());
        let json = serde_json::to_string(&card).unwrap();
        assert_eq!(serde_json::from_str::<Scorecard>(&json).unwrap(), card);
    }
}
