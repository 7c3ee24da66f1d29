use super::raw::{crop_black_margins, resize, CropBox, RawImage, DEFAULT_CROP_THRESHOLD};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const DEFAULT_SIZE: usize = 512;
pub const MIN_SIZE: usize = 8;

/// Network-ready image: a `[channels, S, S]` tensor with zero mean and
/// unit standard deviation.
#[derive(Debug, Clone, PartialEq)]
pub struct PreprocessedImage {
    pub id: String,
    pub tensor: Tensor<f32>,
    pub crop_box: CropBox,
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PreprocessConfig {
    pub size: usize,
    pub crop_threshold: u8,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig {
            size: DEFAULT_SIZE,
            crop_threshold: DEFAULT_CROP_THRESHOLD,
        }
    }
}

impl PreprocessConfig {
    pub fn with_size(size: usize) -> Self {
        PreprocessConfig {
            size,
            ..Default::default()
        }
    }
}

/// Planar float copy of an interleaved image, values in `[0, 255]`.
pub fn to_tensor(img: &RawImage) -> Tensor<f32> {
    let (w, h, c) = (img.width, img.height, img.channels);
    let mut data = vec![0.0f32; c * h * w];
    for (i, px) in img.data.chunks_exact(c).enumerate() {
        for (ch, &v) in px.iter().enumerate() {
            data[ch * h * w + i] = f32::from(v);
        }
    }
    Tensor::from_vec(&[c, h, w], data).expect("length follows from the image")
}

/// Subtracts the mean and divides by the population standard deviation,
/// both taken jointly over every pixel and channel. Returns the tensor and
/// the constants used.
pub fn standardize(t: &Tensor<f32>) -> Result<(Tensor<f32>, f64, f64)> {
    let n = t.len();
    if n == 0 {
        return Err(Error::DegenerateImage("empty image".into()));
    }
    let mean = t.data().iter().map(|&v| f64::from(v)).sum::<f64>() / n as f64;
    let var = t
        .data()
        .iter()
        .map(|&v| (f64::from(v) - mean).powi(2))
        .sum::<f64>()
        / n as f64;
    let std = var.sqrt();
    if !(std > 0.0) || !std.is_finite() {
        return Err(Error::DegenerateImage(format!(
            "standard deviation is {std}"
        )));
    }
    let out = t.map(|v| ((f64::from(v) - mean) / std) as f32);
    Ok((out, mean, std))
}

/// The geometric half of [`preprocess`]: the 8-bit image the network sees
/// before standardization.
pub fn crop_and_resize(img: &RawImage, config: PreprocessConfig) -> Result<(RawImage, CropBox)> {
    if config.size < MIN_SIZE {
        return Err(Error::InvalidArgument(format!(
            "target size must be at least {MIN_SIZE}, got {}",
            config.size
        )));
    }
    let (cropped, crop_box) = crop_black_margins(img, config.crop_threshold);
    Ok((resize(&cropped, config.size, config.size)?, crop_box))
}

/// Crop, resize to `size` x `size`, and standardize.
pub fn preprocess(img: &RawImage, config: PreprocessConfig) -> Result<PreprocessedImage> {
    let (resized, crop_box) = crop_and_resize(img, config)?;
    let (tensor, mean, std) = standardize(&to_tensor(&resized))
        .map_err(|e| Error::DegenerateImage(format!("{}: {e}", img.id)))?;
    Ok(PreprocessedImage {
        id: img.id.clone(),
        tensor,
        crop_box,
        mean,
        std,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn stats(t: &Tensor<f32>) -> (f64, f64) {
        let n = t.len() as f64;
        let m = t.data().iter().map(|&v| f64::from(v)).sum::<f64>() / n;
        let v = t
            .data()
            .iter()
            .map(|&v| (f64::from(v) - m).powi(2))
            .sum::<f64>()
            / n;
        (m, v.sqrt())
    }

    #[test]
    fn two_values_map_to_plus_minus_one() {
        let t = Tensor::from_vec(&[1, 2, 2], vec![0.0, 2.0, 2.0, 0.0]).unwrap();
        let (s, mean, std) = standardize(&t).unwrap();
        assert_eq!(s.data(), &[-1.0, 1.0, 1.0, -1.0]);
        assert_eq!((mean, std), (1.0, 1.0));
    }

    #[test]
    fn constant_image_is_degenerate() {
        let t = Tensor::full(&[3, 4, 4], 9.0f32);
        assert!(matches!(standardize(&t), Err(Error::DegenerateImage(_))));
        let img = RawImage::filled(16, 16, 1, 100, "flat").unwrap();
        assert!(matches!(
            preprocess(&img, PreprocessConfig::with_size(8)),
            Err(Error::DegenerateImage(_))
        ));
    }

    #[test]
    fn random_image_statistics_and_idempotence() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let data = (0..3 * 20 * 30).map(|_| rng.random::<u8>()).collect();
        let img = RawImage::new(30, 20, 3, data, "r").unwrap();
        let p = preprocess(&img, PreprocessConfig::with_size(16)).unwrap();
        assert_eq!(p.tensor.shape(), &[3, 16, 16]);
        let (m, s) = stats(&p.tensor);
        assert!(m.abs() < 1e-4 && (s - 1.0).abs() < 1e-3, "{m} {s}");
        let (again, _, _) = standardize(&p.tensor).unwrap();
        for (a, b) in again.data().iter().zip(p.tensor.data()) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn planar_layout() {
        let img = RawImage::new(2, 1, 3, vec![1, 2, 3, 4, 5, 6], "p").unwrap();
        assert_eq!(to_tensor(&img).data(), &[1.0, 4.0, 2.0, 5.0, 3.0, 6.0]);
    }

    #[test]
    fn additive_shift_does_not_change_output() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let base: Vec<u8> = (0..24 * 24).map(|_| rng.random_range(20..200)).collect();
        let shifted: Vec<u8> = base.iter().map(|v| v + 30).collect();
        let cfg = PreprocessConfig::with_size(24);
        let a = preprocess(&RawImage::new(24, 24, 1, base, "a").unwrap(), cfg).unwrap();
        let b = preprocess(&RawImage::new(24, 24, 1, shifted, "b").unwrap(), cfg).unwrap();
        for (x, y) in a.tensor.data().iter().zip(b.tensor.data()) {
            assert!((x - y).abs() < 1e-5);
        }
    }

    #[test]
    fn rejects_tiny_target() {
        let img = RawImage::new(2, 1, 1, vec![0, 255], "x").unwrap();
        assert!(preprocess(&img, PreprocessConfig::with_size(4)).is_err());
    }
}
