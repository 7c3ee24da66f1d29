use super::GroundTruthRegion;
use crate::error::{Error, Result};
use crate::pixel::PixelSet;
use crate::proposal::RegionProposal;

/// Fraction of a ground-truth region a proposal must cover.
pub const MIN_COVERAGE: f64 = 0.5;
/// Below this mean IoU a proposal is a false positive.
pub const MIN_MEAN_IOU: f64 = 0.5;
/// Expert confidence a pixel needs for the one-pixel criterion.
pub const ONE_PIXEL_CONFIDENCE: f32 = 0.75;

pub fn iou(a: &PixelSet, b: &PixelSet) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::InvalidArgument("iou of an empty pixel set".into()));
    }
    Ok(a.intersection_count(b) as f64 / a.union_count(b) as f64)
}

/// `|G ∩ P| / |G|`.
pub fn overlap_fraction(gt: &PixelSet, proposal: &PixelSet) -> Result<f64> {
    if gt.is_empty() {
        return Err(Error::InvalidArgument(
            "overlap with an empty ground-truth region".into(),
        ));
    }
    Ok(gt.intersection_count(proposal) as f64 / gt.len() as f64)
}

fn covers(gt: &GroundTruthRegion, p: &RegionProposal) -> bool {
    gt.pixels.intersection_count(&p.pixels) as f64 >= MIN_COVERAGE * gt.pixels.len() as f64
}

/// Some proposal covers at least half of some ground-truth region.
pub fn image_tp_50(proposals: &[RegionProposal], gts: &[&GroundTruthRegion]) -> bool {
    gts.iter().any(|g| proposals.iter().any(|p| covers(g, p)))
}

/// Some proposal contains a ground-truth pixel of confidence >= 0.75.
pub fn image_tp_onepixel(proposals: &[RegionProposal], gts: &[&GroundTruthRegion]) -> bool {
    gts.iter().any(|g| {
        g.pixels.iter().zip(&g.confidence).any(|(&px, &c)| {
            c >= ONE_PIXEL_CONFIDENCE && proposals.iter().any(|p| p.pixels.contains(px))
        })
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LesionCounts {
    /// Active proposals that touch ground truth with mean IoU >= 0.5.
    pub tp: usize,
    pub fp: usize,
    /// Ground-truth regions covered at least 50% by an active proposal.
    pub detected: usize,
}

/// A proposal is a false positive when it touches no ground truth or the
/// mean IoU over the regions it touches is below 0.5.
pub(crate) fn is_false_positive(p: &RegionProposal, gts: &[&GroundTruthRegion]) -> bool {
    let (mut sum, mut n) = (0.0, 0usize);
    for g in gts {
        let inter = p.pixels.intersection_count(&g.pixels);
        if inter > 0 {
            sum += inter as f64 / (p.pixels.len() + g.pixels.len() - inter) as f64;
            n += 1;
        }
    }
    n == 0 || sum / (n as f64) < MIN_MEAN_IOU
}

/// Lesion-level labelling of proposals with score >= `t` against the
/// ground truth of one lesion type in one image.
pub fn lesion_level_label(
    proposals: &[RegionProposal],
    gts: &[&GroundTruthRegion],
    t: f64,
) -> LesionCounts {
    let active: Vec<&RegionProposal> = proposals.iter().filter(|p| p.score >= t).collect();
    let fp = active.iter().filter(|p| is_false_positive(p, gts)).count();
    let detected = gts
        .iter()
        .filter(|g| active.iter().any(|p| covers(g, p)))
        .count();
    LesionCounts {
        tp: active.len() - fp,
        fp,
        detected,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::LesionType;
    use crate::pixel::Pixel;

    fn rect(x0: u32, y0: u32, w: u32, h: u32) -> PixelSet {
        (y0..y0 + h)
            .flat_map(|y| (x0..x0 + w).map(move |x| Pixel::new(x, y)))
            .collect()
    }

    fn gt(p: PixelSet) -> GroundTruthRegion {
        GroundTruthRegion::certain(p, LesionType::Hemorrhage).unwrap()
    }

    fn prop(p: PixelSet, score: f64) -> RegionProposal {
        RegionProposal { pixels: p, score }
    }

    #[test]
    fn iou_cases() {
        let a = rect(0, 0, 2, 2);
        assert_eq!(iou(&a, &a).unwrap(), 1.0);
        assert_eq!(iou(&a, &rect(5, 5, 2, 2)).unwrap(), 0.0);
        // 2x2 squares sharing a 1x2 strip: 2 / 6
        assert_eq!(iou(&a, &rect(1, 0, 2, 2)).unwrap(), 1.0 / 3.0);
        assert!(iou(&a, &PixelSet::default()).is_err());
    }

    #[test]
    fn overlap_cases() {
        let g = rect(0, 0, 5, 2);
        assert_eq!(overlap_fraction(&g, &rect(0, 0, 10, 10)).unwrap(), 1.0);
        assert_eq!(overlap_fraction(&g, &rect(20, 20, 2, 2)).unwrap(), 0.0);
        assert_eq!(overlap_fraction(&g, &rect(0, 0, 5, 1)).unwrap(), 0.5);
        assert!(overlap_fraction(&PixelSet::default(), &g).is_err());
    }

    #[test]
    fn image_level_fifty_percent() {
        let g = gt(rect(0, 0, 10, 1));
        assert!(!image_tp_50(&[], &[&g]));
        assert!(image_tp_50(&[prop(rect(0, 0, 10, 1), 1.0)], &[&g]));
        // exactly half is inclusive
        assert!(image_tp_50(&[prop(rect(0, 0, 5, 1), 1.0)], &[&g]));
        // 40% of every region
        let g2 = gt(rect(0, 5, 10, 1));
        let ps = [prop(rect(0, 0, 4, 1), 1.0), prop(rect(0, 5, 4, 1), 1.0)];
        assert!(!image_tp_50(&ps, &[&g, &g2]));
    }

    #[test]
    fn image_level_one_pixel() {
        let pixels = rect(0, 0, 2, 1);
        let low = GroundTruthRegion::new(pixels.clone(), LesionType::HardExudate, vec![0.5, 0.5])
            .unwrap();
        let p = prop(rect(0, 0, 1, 1), 1.0);
        assert!(!image_tp_onepixel(std::slice::from_ref(&p), &[&low]));
        let edge =
            GroundTruthRegion::new(pixels, LesionType::HardExudate, vec![0.75, 0.5]).unwrap();
        assert!(image_tp_onepixel(std::slice::from_ref(&p), &[&edge]));
        assert!(!image_tp_onepixel(&[prop(rect(9, 9, 1, 1), 1.0)], &[&edge]));
    }

    #[test]
    fn perfect_proposals_no_false_positives() {
        let gs = [gt(rect(0, 0, 3, 3)), gt(rect(10, 10, 2, 4))];
        let refs: Vec<&GroundTruthRegion> = gs.iter().collect();
        let ps: Vec<RegionProposal> = gs.iter().map(|g| prop(g.pixels.clone(), 0.8)).collect();
        let c = lesion_level_label(&ps, &refs, 0.0);
        assert_eq!(
            c,
            LesionCounts {
                tp: 2,
                fp: 0,
                detected: 2
            }
        );
        assert_eq!(lesion_level_label(&ps, &refs, 0.9), LesionCounts::default());
    }

    #[test]
    fn oversized_proposal_detects_but_is_penalized() {
        // 100-pixel proposal over two 10-pixel lesions: each IoU = 0.1
        let gs = [gt(rect(0, 0, 10, 1)), gt(rect(0, 5, 10, 1))];
        let refs: Vec<&GroundTruthRegion> = gs.iter().collect();
        let big = prop(rect(0, 0, 10, 10), 1.0);
        let c = lesion_level_label(&[big], &refs, 0.0);
        assert_eq!(
            c,
            LesionCounts {
                tp: 0,
                fp: 1,
                detected: 2
            }
        );
    }

    #[test]
    fn mean_iou_boundary_is_inclusive() {
        // IoU exactly 0.5: proposal of 2 pixels, lesion of 1 inside it
        let g = gt(rect(0, 0, 1, 1));
        let c = lesion_level_label(&[prop(rect(0, 0, 2, 1), 1.0)], &[&g], 0.0);
        assert_eq!(
            c,
            LesionCounts {
                tp: 1,
                fp: 0,
                detected: 1
            }
        );
        // just below: 3 pixels around 1 -> 1/3
        let c = lesion_level_label(&[prop(rect(0, 0, 3, 1), 1.0)], &[&g], 0.0);
        assert_eq!(c.fp, 1);
    }

    #[test]
    fn untouched_proposal_is_false_positive() {
        let g = gt(rect(0, 0, 2, 2));
        let c = lesion_level_label(&[prop(rect(8, 8, 2, 2), 0.7)], &[&g], 0.5);
        assert_eq!(
            c,
            LesionCounts {
                tp: 0,
                fp: 1,
                detected: 0
            }
        );
    }
}
