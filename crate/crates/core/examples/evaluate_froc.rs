//! Image-level and lesion-level evaluation of a few hand-built results,
//! including a proposal too large to count as a true positive.
//!
//! cargo run --example evaluate_froc

use lesioncam::eval::{froc_csv, report, GroundTruthRegion, ImageResult, LesionType, ReportConfig};
use lesioncam::pixel::{Pixel, PixelSet};
use lesioncam::proposal::RegionProposal;

fn rect(x0: u32, y0: u32, w: u32, h: u32) -> PixelSet {
    (y0..y0 + h)
        .flat_map(|y| (x0..x0 + w).map(move |x| Pixel::new(x, y)))
        .collect()
}

fn result(
    id: &str,
    score: f64,
    gts: &[(PixelSet, LesionType)],
    props: &[(PixelSet, f64)],
) -> ImageResult {
    ImageResult {
        id: id.into(),
        diseased: !gts.is_empty(),
        score,
        ground_truth: gts
            .iter()
            .map(|(p, t)| GroundTruthRegion::certain(p.clone(), *t).unwrap())
            .collect(),
        proposals: props
            .iter()
            .map(|(p, s)| RegionProposal {
                pixels: p.clone(),
                score: *s,
            })
            .collect(),
    }
}

fn main() -> lesioncam::Result<()> {
    use LesionType::*;
    let results = vec![
        result(
            "exact",
            0.97,
            &[(rect(4, 4, 5, 5), Hemorrhage)],
            &[(rect(4, 4, 5, 5), 1.0)],
        ),
        result(
            "oversized",
            0.91,
            &[
                (rect(0, 0, 3, 3), Hemorrhage),
                (rect(6, 0, 3, 3), Hemorrhage),
            ],
            &[(rect(0, 0, 12, 12), 1.0)],
        ),
        result(
            "exudates",
            0.82,
            &[
                (rect(10, 10, 2, 2), HardExudate),
                (rect(20, 4, 6, 6), SoftExudate),
            ],
            &[
                (rect(10, 10, 2, 1), 1.0),
                (rect(20, 4, 6, 4), 0.7),
                (rect(30, 30, 3, 3), 0.66),
            ],
        ),
        result(
            "dot",
            0.40,
            &[(rect(15, 15, 1, 1), RedSmallDot)],
            &[(rect(2, 2, 3, 3), 1.0)],
        ),
        result("healthy", 0.12, &[], &[(rect(8, 8, 4, 4), 1.0)]),
        result(
            "healthy2",
            0.55,
            &[],
            &[(rect(1, 1, 2, 2), 1.0), (rect(9, 9, 2, 2), 0.8)],
        ),
    ];
    let rep = report(&results, &ReportConfig::default())?;
    print!("{}", rep.summary());
    println!("\nlesion-level table\n{}", rep.lesion_level_csv());
    for curve in rep.froc.iter().filter(|c| c.lesion_type == Hemorrhage) {
        println!("FROC for {}\n{}", curve.lesion_type, froc_csv(curve));
    }
    Ok(())
}
