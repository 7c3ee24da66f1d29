//! Aggregation of per-image results into an [`EvalReport`] and its text
//! renderings.
//!
//! The JSON report keeps the struct field order: `images`, `classification`,
//! `image_level`, `lesion_level`, `froc`, then the reference rows.

use std::fmt::Write as _;

use serde::Serialize;

use super::froc::{froc, FrocCurve};
use super::metrics::{image_tp_50, image_tp_onepixel, lesion_level_label};
use super::reference::{self, ClassificationReference, ImageLevelReference, LesionLevelReference};
use super::roc::{roc_auc, roc_curve, RocPoint};
use super::{GroundTruthRegion, LesionType};
use crate::error::Result;
use crate::proposal::{RegionProposal, DEFAULT_THRESHOLD};

/// Everything evaluation needs about one image.
#[derive(Debug, Clone)]
pub struct ImageResult {
    pub id: String,
    /// Ground-truth referable-disease label.
    pub diseased: bool,
    /// Classifier probability of referable disease.
    pub score: f64,
    pub proposals: Vec<RegionProposal>,
    pub ground_truth: Vec<GroundTruthRegion>,
}

impl ImageResult {
    pub fn regions_of(&self, t: LesionType) -> Vec<&GroundTruthRegion> {
        self.ground_truth
            .iter()
            .filter(|g| g.lesion_type == t)
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Criterion {
    Overlap50,
    OnePixel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportConfig {
    /// Images with `score >= classification_threshold` are called diseased.
    pub classification_threshold: f64,
    /// Proposals with score below this are ignored at the lesion-level
    /// operating point.
    pub lesion_threshold: f64,
    pub criteria: Vec<Criterion>,
}

impl Default for ReportConfig {
    fn default() -> Self {
        ReportConfig {
            classification_threshold: 0.5,
            lesion_threshold: DEFAULT_THRESHOLD,
            criteria: vec![Criterion::Overlap50, Criterion::OnePixel],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassificationSummary {
    pub threshold: f64,
    pub diseased: usize,
    pub healthy: usize,
    /// `None` when the denominator is empty.
    pub sensitivity: Option<f64>,
    pub specificity: Option<f64>,
    pub auc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ImageLevelRow {
    pub lesion_type: LesionType,
    /// Images with at least one region of this type.
    pub images: usize,
    pub overlap50: Option<f64>,
    pub one_pixel: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LesionLevelRow {
    pub lesion_type: LesionType,
    pub threshold: f64,
    pub ground_truth: usize,
    pub detected: usize,
    pub true_positives: usize,
    pub false_positives: usize,
    pub sensitivity: Option<f64>,
    pub fps_per_image: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub images: usize,
    pub classification: ClassificationSummary,
    pub image_level: Vec<ImageLevelRow>,
    pub lesion_level: Vec<LesionLevelRow>,
    pub froc: Vec<FrocCurve>,
    #[serde(skip)]
    pub roc: Option<Vec<RocPoint>>,
    pub reference_classification: ClassificationReference,
    pub reference_image_level: [ImageLevelReference; 2],
    pub reference_lesion_level: [LesionLevelReference; 2],
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

pub fn report(results: &[ImageResult], config: &ReportConfig) -> Result<EvalReport> {
    let diseased = results.iter().filter(|r| r.diseased).count();
    let healthy = results.len() - diseased;
    let called = |r: &&ImageResult| r.score >= config.classification_threshold;
    let tp = results.iter().filter(|r| r.diseased).filter(called).count();
    let tn = results
        .iter()
        .filter(|r| !r.diseased)
        .filter(|r| !called(r))
        .count();
    let scores: Vec<f64> = results.iter().map(|r| r.score).collect();
    let labels: Vec<bool> = results.iter().map(|r| r.diseased).collect();
    let both = diseased > 0 && healthy > 0;
    let classification = ClassificationSummary {
        threshold: config.classification_threshold,
        diseased,
        healthy,
        sensitivity: ratio(tp, diseased),
        specificity: ratio(tn, healthy),
        auc: if both {
            Some(roc_auc(&scores, &labels)?)
        } else {
            None
        },
    };

    let mut image_level = Vec::new();
    let mut lesion_level = Vec::new();
    let mut curves = Vec::new();
    for t in LesionType::ALL {
        let with_type: Vec<(&ImageResult, Vec<&GroundTruthRegion>)> = results
            .iter()
            .map(|r| (r, r.regions_of(t)))
            .filter(|(_, g)| !g.is_empty())
            .collect();
        let count = |f: fn(&[RegionProposal], &[&GroundTruthRegion]) -> bool| {
            with_type.iter().filter(|(r, g)| f(&r.proposals, g)).count()
        };
        image_level.push(ImageLevelRow {
            lesion_type: t,
            images: with_type.len(),
            overlap50: config
                .criteria
                .contains(&Criterion::Overlap50)
                .then(|| ratio(count(image_tp_50), with_type.len()))
                .flatten(),
            one_pixel: config
                .criteria
                .contains(&Criterion::OnePixel)
                .then(|| ratio(count(image_tp_onepixel), with_type.len()))
                .flatten(),
        });

        let (mut gt_total, mut det, mut tps, mut fps) = (0, 0, 0, 0);
        for r in results {
            let gts = r.regions_of(t);
            let c = lesion_level_label(&r.proposals, &gts, config.lesion_threshold);
            gt_total += gts.len();
            det += c.detected;
            tps += c.tp;
            fps += c.fp;
        }
        lesion_level.push(LesionLevelRow {
            lesion_type: t,
            threshold: config.lesion_threshold,
            ground_truth: gt_total,
            detected: det,
            true_positives: tps,
            false_positives: fps,
            sensitivity: ratio(det, gt_total),
            fps_per_image: if results.is_empty() {
                0.0
            } else {
                fps as f64 / results.len() as f64
            },
        });
        if gt_total > 0 {
            curves.push(froc(results, t)?);
        }
    }

    Ok(EvalReport {
        images: results.len(),
        classification,
        image_level,
        lesion_level,
        froc: curves,
        roc: if both {
            Some(roc_curve(&scores, &labels)?)
        } else {
            None
        },
        reference_classification: reference::CLASSIFICATION,
        reference_image_level: reference::IMAGE_LEVEL,
        reference_lesion_level: reference::LESION_LEVEL,
    })
}

fn pct(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |v| format!("{:.1}", 100.0 * v))
}

fn num(v: f64) -> String {
    if v.is_infinite() {
        "inf".into()
    } else {
        format!("{v}")
    }
}

impl EvalReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Image-level sensitivity (%) per lesion type, measured rows first.
    pub fn image_level_csv(&self) -> String {
        let mut s = String::from("method,H,HE,SE,RSD\n");
        let mut row = |label: &str, f: &dyn Fn(&ImageLevelRow) -> Option<f64>| {
            let cells: Vec<String> = self.image_level.iter().map(|r| pct(f(r))).collect();
            let _ = writeln!(s, "{label},{}", cells.join(","));
        };
        if self.image_level.iter().any(|r| r.overlap50.is_some()) {
            row("measured (50% overlap)", &|r| r.overlap50);
        }
        if self.image_level.iter().any(|r| r.one_pixel.is_some()) {
            row("measured (one-pixel overlap)", &|r| r.one_pixel);
        }
        for r in &self.reference_image_level {
            let cells: Vec<String> = r
                .sensitivity_percent
                .iter()
                .map(|v| format!("{v:.1}"))
                .collect();
            let _ = writeln!(s, "{},{}", r.label, cells.join(","));
        }
        s
    }

    /// Lesion-level sensitivity (%) and FPs/image per lesion type.
    pub fn lesion_level_csv(&self) -> String {
        let mut s = String::from("method,H_SE,H_FPI,HE_SE,HE_FPI,SE_SE,SE_FPI,RSD_SE,RSD_FPI\n");
        let cells: Vec<String> = self
            .lesion_level
            .iter()
            .map(|r| format!("{},{:.3}", pct(r.sensitivity), r.fps_per_image))
            .collect();
        let _ = writeln!(
            s,
            "measured (threshold {}),{}",
            num(self.lesion_level[0].threshold),
            cells.join(",")
        );
        for r in &self.reference_lesion_level {
            let cells: Vec<String> = r
                .operating_points
                .iter()
                .map(|(se, fp)| format!("{se:.1},{fp:.3}"))
                .collect();
            let _ = writeln!(s, "{},{}", r.label, cells.join(","));
        }
        s
    }

    pub fn roc_csv(&self) -> Option<String> {
        let pts = self.roc.as_ref()?;
        let mut s = String::from("threshold,fpr,tpr\n");
        for p in pts {
            let _ = writeln!(s, "{},{},{}", num(p.threshold), p.fpr, p.tpr);
        }
        Some(s)
    }

    /// Human-readable one-screen summary.
    pub fn summary(&self) -> String {
        let c = &self.classification;
        let mut s = format!(
            "images {} (diseased {}, healthy {})\nclassification: sensitivity {} specificity {} auc {}\n",
            self.images,
            c.diseased,
            c.healthy,
            pct(c.sensitivity),
            pct(c.specificity),
            c.auc.map_or("NA".into(), |a| format!("{a:.4}")),
        );
        for (il, ll) in self.image_level.iter().zip(&self.lesion_level) {
            let _ = writeln!(
                s,
                "{:>4}: image-level 50% {} one-pixel {} | lesion-level SE {} FPs/image {:.2}",
                il.lesion_type.code(),
                pct(il.overlap50),
                pct(il.one_pixel),
                pct(ll.sensitivity),
                ll.fps_per_image
            );
        }
        s
    }
}

pub fn froc_csv(curve: &FrocCurve) -> String {
    let mut s = String::from("threshold,fps_per_image,sensitivity\n");
    for p in &curve.points {
        let _ = writeln!(
            s,
            "{},{},{}",
            num(p.threshold),
            p.fps_per_image,
            p.sensitivity
        );
    }
    s
}
