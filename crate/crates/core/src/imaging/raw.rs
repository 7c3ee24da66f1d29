use std::path::Path;

use image::{ColorType, DynamicImage, ImageFormat};

use crate::error::{Error, Result};
use crate::pixel::Mask;

/// Interleaved 8-bit image, row-major, `channels` samples per pixel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawImage {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: Vec<u8>,
    pub id: String,
}

impl RawImage {
    pub fn new(
        width: usize,
        height: usize,
        channels: usize,
        data: Vec<u8>,
        id: impl Into<String>,
    ) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Shape(format!(
                "image must be non-empty, got {width}x{height}"
            )));
        }
        if channels != 1 && channels != 3 {
            return Err(Error::Shape(format!(
                "images have 1 or 3 channels, got {channels}"
            )));
        }
        if data.len() != width * height * channels {
            return Err(Error::Shape(format!(
                "{width}x{height}x{channels} image needs {} samples, got {}",
                width * height * channels,
                data.len()
            )));
        }
        Ok(RawImage {
            width,
            height,
            channels,
            data,
            id: id.into(),
        })
    }

    pub fn filled(
        width: usize,
        height: usize,
        channels: usize,
        value: u8,
        id: impl Into<String>,
    ) -> Result<Self> {
        RawImage::new(
            width,
            height,
            channels,
            vec![value; width * height * channels],
            id,
        )
    }

    pub fn sample(&self, x: usize, y: usize, channel: usize) -> u8 {
        self.data[(y * self.width + x) * self.channels + channel]
    }

    /// Converts between gray and RGB. Gray uses ITU-R BT.601 luma weights,
    /// rounded half up; RGB replicates the gray sample.
    pub fn to_channels(&self, channels: usize) -> Result<RawImage> {
        if channels == self.channels {
            return Ok(self.clone());
        }
        let data = match channels {
            1 => self
                .data
                .chunks_exact(3)
                .map(|p| {
                    let y =
                        0.299 * f64::from(p[0]) + 0.587 * f64::from(p[1]) + 0.114 * f64::from(p[2]);
                    (y + 0.5).floor().min(255.0) as u8
                })
                .collect(),
            3 => self.data.iter().flat_map(|&v| [v, v, v]).collect(),
            c => {
                return Err(Error::Shape(format!(
                    "images have 1 or 3 channels, got {c}"
                )))
            }
        };
        RawImage::new(self.width, self.height, channels, data, self.id.clone())
    }

    fn max_channel(&self, x: usize, y: usize) -> u8 {
        let i = (y * self.width + x) * self.channels;
        self.data[i..i + self.channels]
            .iter()
            .copied()
            .max()
            .unwrap_or(0)
    }

    /// Decodes PNG or PPM/PGM. Grayscale stays single-channel, everything
    /// else becomes RGB. The id is the file stem.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let img = image::open(path).map_err(|e| Error::image(path, e))?;
        let id = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        let (w, h) = (img.width() as usize, img.height() as usize);
        let gray = matches!(
            img.color(),
            ColorType::L8 | ColorType::La8 | ColorType::L16 | ColorType::La16
        );
        if gray {
            RawImage::new(w, h, 1, img.into_luma8().into_raw(), id)
        } else {
            RawImage::new(w, h, 3, img.into_rgb8().into_raw(), id)
        }
    }

    /// Encodes as PNG, or as binary PPM/PGM for `.ppm`/`.pgm`/`.pnm`.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .unwrap_or("")
            .to_ascii_lowercase();
        let format = match ext.as_str() {
            "ppm" | "pgm" | "pnm" => ImageFormat::Pnm,
            _ => ImageFormat::Png,
        };
        let color = if self.channels == 1 {
            ColorType::L8
        } else {
            ColorType::Rgb8
        };
        image::save_buffer_with_format(
            path,
            &self.data,
            self.width as u32,
            self.height as u32,
            color,
            format,
        )
        .map_err(|e| Error::image(path, e))
    }

    pub fn to_dynamic(&self) -> DynamicImage {
        if self.channels == 1 {
            DynamicImage::ImageLuma8(
                image::GrayImage::from_raw(
                    self.width as u32,
                    self.height as u32,
                    self.data.clone(),
                )
                .expect("length checked at construction"),
            )
        } else {
            DynamicImage::ImageRgb8(
                image::RgbImage::from_raw(self.width as u32, self.height as u32, self.data.clone())
                    .expect("length checked at construction"),
            )
        }
    }
}

/// Retained region of a source image, in source pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CropBox {
    pub x: usize,
    pub y: usize,
    pub width: usize,
    pub height: usize,
}

impl CropBox {
    pub fn full(width: usize, height: usize) -> Self {
        CropBox {
            x: 0,
            y: 0,
            width,
            height,
        }
    }
}

pub const DEFAULT_CROP_THRESHOLD: u8 = 10;

/// Crops to the bounding box of pixels whose brightest channel exceeds
/// `threshold`. An image with no such pixel is returned whole.
pub fn crop_black_margins(img: &RawImage, threshold: u8) -> (RawImage, CropBox) {
    let (mut x0, mut y0, mut x1, mut y1) = (usize::MAX, usize::MAX, 0, 0);
    for y in 0..img.height {
        for x in 0..img.width {
            if img.max_channel(x, y) > threshold {
                x0 = x0.min(x);
                y0 = y0.min(y);
                x1 = x1.max(x);
                y1 = y1.max(y);
            }
        }
    }
    if x0 == usize::MAX {
        return (img.clone(), CropBox::full(img.width, img.height));
    }
    let b = CropBox {
        x: x0,
        y: y0,
        width: x1 - x0 + 1,
        height: y1 - y0 + 1,
    };
    (crop(img, b), b)
}

fn crop(img: &RawImage, b: CropBox) -> RawImage {
    let c = img.channels;
    let mut data = Vec::with_capacity(b.width * b.height * c);
    for y in b.y..b.y + b.height {
        let start = (y * img.width + b.x) * c;
        data.extend_from_slice(&img.data[start..start + b.width * c]);
    }
    RawImage {
        width: b.width,
        height: b.height,
        channels: c,
        data,
        id: img.id.clone(),
    }
}

/// Source coordinate and weight of the upper neighbour for output index
/// `i`, with pixel centers aligned between grids.
fn source_coord(i: usize, out: usize, inp: usize) -> (usize, usize, f64) {
    let s = ((i as f64 + 0.5) * inp as f64 / out as f64 - 0.5).clamp(0.0, (inp - 1) as f64);
    let lo = s.floor() as usize;
    let hi = (lo + 1).min(inp - 1);
    (lo, hi, s - lo as f64)
}

/// Bilinear resampling to `width` x `height`. Pixel centers are aligned,
/// so an exact 2:1 reduction averages each 2x2 block. Results are rounded
/// half up.
pub fn resize(img: &RawImage, width: usize, height: usize) -> Result<RawImage> {
    if width == 0 || height == 0 {
        return Err(Error::InvalidArgument(format!(
            "cannot resize to {width}x{height}"
        )));
    }
    if (width, height) == (img.width, img.height) {
        return Ok(img.clone());
    }
    let c = img.channels;
    let xs: Vec<_> = (0..width)
        .map(|x| source_coord(x, width, img.width))
        .collect();
    let mut data = Vec::with_capacity(width * height * c);
    for y in 0..height {
        let (y0, y1, fy) = source_coord(y, height, img.height);
        for &(x0, x1, fx) in &xs {
            for ch in 0..c {
                let v = |x, y| f64::from(img.sample(x, y, ch));
                let top = v(x0, y0) * (1.0 - fx) + v(x1, y0) * fx;
                let bottom = v(x0, y1) * (1.0 - fx) + v(x1, y1) * fx;
                let val = top * (1.0 - fy) + bottom * fy;
                data.push((val + 0.5).floor().clamp(0.0, 255.0) as u8);
            }
        }
    }
    Ok(RawImage {
        width,
        height,
        channels: c,
        data,
        id: img.id.clone(),
    })
}

/// Applies the same crop and a nearest-neighbour resize to an annotation
/// mask so it stays registered with the preprocessed image.
pub fn transform_mask(mask: &Mask, crop_box: CropBox, width: usize, height: usize) -> Result<Mask> {
    if crop_box.x + crop_box.width > mask.width() || crop_box.y + crop_box.height > mask.height() {
        return Err(Error::Shape(format!(
            "crop box {crop_box:?} exceeds {}x{} mask",
            mask.width(),
            mask.height()
        )));
    }
    let near = |i: usize, out: usize, inp: usize| ((i * 2 + 1) * inp / (2 * out)).min(inp - 1);
    let mut out = Mask::new(width, height);
    for y in 0..height {
        let sy = crop_box.y + near(y, height, crop_box.height);
        for x in 0..width {
            let sx = crop_box.x + near(x, width, crop_box.width);
            out.set(x, y, mask.get(sx, sy));
        }
    }
    Ok(out)
}

pub fn load_mask(path: impl AsRef<Path>) -> Result<Mask> {
    let path = path.as_ref();
    let img = image::open(path)
        .map_err(|e| Error::image(path, e))?
        .into_luma8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    Mask::from_vec(w, h, img.into_raw().into_iter().map(|v| v > 0).collect())
}

pub fn save_mask(mask: &Mask, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let data: Vec<u8> = mask
        .data()
        .iter()
        .map(|&b| if b { 255 } else { 0 })
        .collect();
    image::save_buffer_with_format(
        path,
        &data,
        mask.width() as u32,
        mask.height() as u32,
        ColorType::L8,
        ImageFormat::Png,
    )
    .map_err(|e| Error::image(path, e))
}
