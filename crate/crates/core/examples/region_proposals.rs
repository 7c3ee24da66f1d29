//! Heatmap to scored region proposals on a hand-made map with three bumps.
//!
//! cargo run --example region_proposals

use lesioncam::cam::Heatmap;
use lesioncam::proposal::{propose, ProposalConfig};

fn main() -> lesioncam::Result<()> {
    let (w, h) = (32usize, 24usize);
    let bumps = [
        (8.0, 6.0, 2.5, 1.0),
        (22.0, 16.0, 3.0, 0.8),
        (26.0, 4.0, 1.5, 0.5),
    ];
    let values = (0..h)
        .flat_map(|y| (0..w).map(move |x| (x as f64, y as f64)))
        .map(|(x, y)| {
            bumps
                .iter()
                .map(|&(cx, cy, s, a)| {
                    a * (-((x - cx).powi(2) + (y - cy).powi(2)) / (2.0 * s * s)).exp()
                })
                .sum::<f64>() as f32
        })
        .collect();
    let heat = Heatmap::new(w, h, values, 1)?;

    for tau in [0.3, 0.65, 0.9] {
        let proposals = propose(
            &heat,
            ProposalConfig {
                threshold: tau,
                min_area: 4,
            },
        )?;
        println!("threshold {tau}: {} proposals", proposals.len());
        for p in &proposals {
            let b = p.bounding_box();
            println!(
                "  score {:.3}  area {:>3}  box x {}..={} y {}..={}",
                p.score,
                p.area(),
                b.x0,
                b.x1,
                b.y0,
                b.y1
            );
        }
    }
    Ok(())
}
