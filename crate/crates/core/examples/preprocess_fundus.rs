//! Crop black margins, resize and standardize a fundus-like image.
//!
//! cargo run --example preprocess_fundus -- [image.png]

use lesioncam::imaging::{crop_and_resize, preprocess, PreprocessConfig, RawImage};

fn main() -> lesioncam::Result<()> {
    let img = match std::env::args().nth(1) {
        Some(path) => RawImage::load(path)?,
        None => synthetic_photo(),
    };
    println!(
        "input {}x{} with {} channels",
        img.width, img.height, img.channels
    );

    let config = PreprocessConfig::with_size(128);
    let (resized, crop) = crop_and_resize(&img, config)?;
    println!(
        "retina found at x {} y {} size {}x{}, resized to {}x{}",
        crop.x, crop.y, crop.width, crop.height, resized.width, resized.height
    );

    let pre = preprocess(&img, config)?;
    let data = pre.tensor.data();
    let mean = data.iter().map(|&v| f64::from(v)).sum::<f64>() / data.len() as f64;
    let var = data
        .iter()
        .map(|&v| (f64::from(v) - mean).powi(2))
        .sum::<f64>()
        / data.len() as f64;
    println!("source mean {:.2}, std {:.2}", pre.mean, pre.std);
    println!(
        "tensor {:?}: mean {mean:.2e}, std {:.6}",
        pre.tensor.shape(),
        var.sqrt()
    );
    Ok(())
}

/// A 300x220 RGB image: an orange disc on black with wide side margins.
fn synthetic_photo() -> RawImage {
    let (w, h) = (300usize, 220usize);
    let (cx, cy, r) = (150.0, 110.0, 100.0);
    let mut data = Vec::with_capacity(w * h * 3);
    for y in 0..h {
        for x in 0..w {
            let d = ((x as f64 - cx).powi(2) + (y as f64 - cy).powi(2)).sqrt();
            if d <= r {
                let shade = 1.0 - 0.4 * d / r;
                data.extend([
                    (200.0 * shade) as u8,
                    (90.0 * shade) as u8,
                    (40.0 * shade) as u8,
                ]);
            } else {
                data.extend([2, 2, 2]);
            }
        }
    }
    RawImage::new(w, h, 3, data, "synthetic").expect("sizes match")
}
