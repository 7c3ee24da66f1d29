//! Published figures shown next to measured results for context. They come
//! from full-scale training on real fundus data and are not expected to be
//! reproduced by anything in this crate.

use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ImageLevelReference {
    pub label: &'static str,
    /// Percent, in the order H, HE, SE, RSD.
    pub sensitivity_percent: [f64; 4],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LesionLevelReference {
    pub label: &'static str,
    /// (sensitivity percent, FPs per image), in the order H, HE, SE, RSD.
    pub operating_points: [(f64, f64); 4],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClassificationReference {
    pub sensitivity: f64,
    pub specificity: f64,
    pub auc: f64,
}

pub const IMAGE_LEVEL: [ImageLevelReference; 2] = [
    ImageLevelReference {
        label: "reference (50% overlap)",
        sensitivity_percent: [97.2, 93.3, 81.8, 50.0],
    },
    ImageLevelReference {
        label: "reference (one-pixel overlap)",
        sensitivity_percent: [97.2, 100.0, 90.9, 50.0],
    },
];

pub const LESION_LEVEL: [LesionLevelReference; 2] = [
    LesionLevelReference {
        label: "reference (50% overlap)",
        operating_points: [(72.0, 2.25), (47.0, 1.9), (71.0, 1.45), (21.0, 2.0)],
    },
    LesionLevelReference {
        label: "reference (one-pixel overlap)",
        operating_points: [(91.0, 1.5), (87.0, 1.5), (89.0, 1.5), (52.0, 1.5)],
    },
];

pub const CLASSIFICATION: ClassificationReference = ClassificationReference {
    sensitivity: 0.936,
    specificity: 0.976,
    auc: 0.954,
};
