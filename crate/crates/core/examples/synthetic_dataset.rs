//! Generates a small synthetic fundus dataset with four noisy annotators per
//! lesion, writes it to disk and reloads it through the manifest.
//!
//! cargo run --example synthetic_dataset -- [out_dir]

use lesioncam::eval::LesionType;
use lesioncam::imaging::{
    generate_synthetic, write_synthetic, LabeledDataset, PreprocessConfig, SynthConfig,
};

fn main() -> lesioncam::Result<()> {
    let dir = std::env::args()
        .nth(1)
        .unwrap_or_else(|| "synthetic_example".into());
    let images = generate_synthetic(&SynthConfig {
        images: 12,
        expert_noise: true,
        seed: 9,
        ..SynthConfig::default()
    })?;
    for img in &images {
        let types: Vec<&str> = img.lesions.iter().map(|l| l.lesion_type.code()).collect();
        let areas: Vec<usize> = img.lesions.iter().map(|l| l.pixels.len()).collect();
        println!(
            "{}  diseased {:<5}  lesions {:?} areas {:?}",
            img.image.id, img.diseased, types, areas
        );
    }

    let manifest = write_synthetic(&dir, &images)?;
    println!("manifest at {}", manifest.display());
    let data = LabeledDataset::load(&manifest, PreprocessConfig::with_size(64))?;
    for t in LesionType::ALL {
        let regions: Vec<_> = data
            .items
            .iter()
            .flat_map(|i| &i.ground_truth)
            .filter(|g| g.lesion_type == t)
            .collect();
        let unanimous = regions
            .iter()
            .flat_map(|g| &g.confidence)
            .filter(|&&c| c == 1.0)
            .count();
        let pixels: usize = regions.iter().map(|g| g.pixels.len()).sum();
        println!(
            "{:>3}: {} fused regions, {unanimous}/{pixels} pixels marked by every annotator",
            t.code(),
            regions.len()
        );
    }
    Ok(())
}
