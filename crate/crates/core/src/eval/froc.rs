use serde::Serialize;

use super::metrics::{is_false_positive, MIN_COVERAGE};
use super::report::ImageResult;
use super::{GroundTruthRegion, LesionType};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FrocPoint {
    /// Proposals with score >= threshold are active. `+inf` = none.
    pub threshold: f64,
    pub fps_per_image: f64,
    pub sensitivity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FrocCurve {
    pub lesion_type: LesionType,
    pub total_ground_truth: usize,
    pub images: usize,
    /// Ascending threshold.
    pub points: Vec<FrocPoint>,
}

impl FrocCurve {
    /// Best sensitivity reachable with at most `max_fps` false positives per image.
    pub fn sensitivity_at(&self, max_fps: f64) -> f64 {
        self.points
            .iter()
            .filter(|p| p.fps_per_image <= max_fps)
            .map(|p| p.sensitivity)
            .fold(0.0, f64::max)
    }

    /// The point for the lowest threshold not below `t`.
    pub fn at_threshold(&self, t: f64) -> &FrocPoint {
        self.points
            .iter()
            .find(|p| p.threshold >= t)
            .unwrap_or_else(|| self.points.last().expect("curve has the +inf point"))
    }
}

/// Sweeps the detection threshold over every distinct proposal score. All
/// images count toward the false-positive denominator.
pub fn froc(images: &[ImageResult], lesion_type: LesionType) -> Result<FrocCurve> {
    if images.is_empty() {
        return Err(Error::InvalidArgument("FROC over zero images".into()));
    }
    let mut fp_scores = Vec::new();
    let mut all_scores = Vec::new();
    // best score among proposals covering each ground-truth region
    let mut gt_best = Vec::new();
    for img in images {
        let gts: Vec<&GroundTruthRegion> = img
            .ground_truth
            .iter()
            .filter(|g| g.lesion_type == lesion_type)
            .collect();
        for p in &img.proposals {
            all_scores.push(p.score);
            if is_false_positive(p, &gts) {
                fp_scores.push(p.score);
            }
        }
        for g in &gts {
            let best = img
                .proposals
                .iter()
                .filter(|p| {
                    g.pixels.intersection_count(&p.pixels) as f64
                        >= MIN_COVERAGE * g.pixels.len() as f64
                })
                .map(|p| p.score)
                .fold(f64::NEG_INFINITY, f64::max);
            gt_best.push(best);
        }
    }
    if gt_best.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "no {lesion_type} ground truth in the dataset"
        )));
    }
    all_scores.sort_by(f64::total_cmp);
    all_scores.dedup();
    all_scores.push(f64::INFINITY);
    let n_img = images.len() as f64;
    let total = gt_best.len();
    let points = all_scores
        .into_iter()
        .map(|t| FrocPoint {
            threshold: t,
            fps_per_image: fp_scores.iter().filter(|&&s| s >= t).count() as f64 / n_img,
            sensitivity: gt_best.iter().filter(|&&s| s >= t).count() as f64 / total as f64,
        })
        .collect();
    Ok(FrocCurve {
        lesion_type,
        total_ground_truth: total,
        images: images.len(),
        points,
    })
}
