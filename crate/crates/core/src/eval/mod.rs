//! Two-level evaluation: image-level lesion sensitivity under two overlap
//! criteria, classification ROC, and lesion-level FROC with IoU-based
//! false-positive penalization.

mod froc;
mod metrics;
pub mod reference;
mod report;
mod roc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pixel::PixelSet;

pub use froc::{froc, FrocCurve, FrocPoint};
pub use metrics::{
    image_tp_50, image_tp_onepixel, iou, lesion_level_label, overlap_fraction, LesionCounts,
    MIN_COVERAGE, MIN_MEAN_IOU, ONE_PIXEL_CONFIDENCE,
};
pub use report::{
    froc_csv, report, ClassificationSummary, Criterion, EvalReport, ImageLevelRow, ImageResult,
    LesionLevelRow, ReportConfig,
};
pub use roc::{roc_auc, roc_curve, RocPoint};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LesionType {
    Hemorrhage,
    HardExudate,
    SoftExudate,
    RedSmallDot,
}

impl LesionType {
    pub const ALL: [LesionType; 4] = [
        LesionType::Hemorrhage,
        LesionType::HardExudate,
        LesionType::SoftExudate,
        LesionType::RedSmallDot,
    ];

    pub fn code(self) -> &'static str {
        match self {
            LesionType::Hemorrhage => "H",
            LesionType::HardExudate => "HE",
            LesionType::SoftExudate => "SE",
            LesionType::RedSmallDot => "RSD",
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            LesionType::Hemorrhage => "hemorrhage",
            LesionType::HardExudate => "hard_exudate",
            LesionType::SoftExudate => "soft_exudate",
            LesionType::RedSmallDot => "red_small_dot",
        }
    }

    /// Everything except red small dots.
    pub fn is_blob(self) -> bool {
        self != LesionType::RedSmallDot
    }
}

impl std::fmt::Display for LesionType {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for LesionType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        LesionType::ALL
            .into_iter()
            .find(|t| t.name() == s || t.code().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidArgument(format!("unknown lesion type {s:?}")))
    }
}

/// Annotated lesion with per-pixel fused expert confidence.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthRegion {
    pub pixels: PixelSet,
    pub lesion_type: LesionType,
    /// Aligned with `pixels` (raster order).
    pub confidence: Vec<f32>,
}

impl GroundTruthRegion {
    pub fn new(pixels: PixelSet, lesion_type: LesionType, confidence: Vec<f32>) -> Result<Self> {
        if pixels.is_empty() {
            return Err(Error::InvalidArgument(
                "ground-truth region has no pixels".into(),
            ));
        }
        if confidence.len() != pixels.len() {
            return Err(Error::Shape(format!(
                "{} pixels but {} confidences",
                pixels.len(),
                confidence.len()
            )));
        }
        if let Some(c) = confidence.iter().find(|c| !(0.0..=1.0).contains(*c)) {
            return Err(Error::InvalidArgument(format!(
                "confidence {c} outside [0, 1]"
            )));
        }
        Ok(GroundTruthRegion {
            pixels,
            lesion_type,
            confidence,
        })
    }

    /// Region whose pixels all carry full confidence.
    pub fn certain(pixels: PixelSet, lesion_type: LesionType) -> Result<Self> {
        let n = pixels.len();
        GroundTruthRegion::new(pixels, lesion_type, vec![1.0; n])
    }
}
