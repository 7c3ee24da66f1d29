//! Class activation maps: the classifier-weighted sum of the final feature
//! maps, upsampled to input resolution.

use std::path::Path;

use image::{GrayImage, Luma, Rgb, RgbImage};

use crate::error::{Error, Result};
use crate::imaging::RawImage;
use crate::net::Network;
use crate::nn::Mode;
use crate::proposal::normalize;
use crate::tensor::{Scalar, Tensor};

/// Class index explained by default (referable disease).
pub const DEFAULT_CAM_CLASS: usize = 1;

/// Localization map at input resolution.
#[derive(Debug, Clone, PartialEq)]
pub struct Heatmap {
    pub width: usize,
    pub height: usize,
    /// Row-major.
    pub values: Vec<f32>,
    pub class_index: usize,
    pub normalized: bool,
}

impl Heatmap {
    pub fn new(width: usize, height: usize, values: Vec<f32>, class_index: usize) -> Result<Self> {
        if values.len() != width * height {
            return Err(Error::Shape(format!(
                "{width}x{height} heatmap needs {} values, got {}",
                width * height,
                values.len()
            )));
        }
        Ok(Heatmap {
            width,
            height,
            values,
            class_index,
            normalized: false,
        })
    }

    pub fn from_tensor<T: Scalar>(map: &Tensor<T>, class_index: usize) -> Result<Self> {
        let (h, w) = map.dims2()?;
        Heatmap::new(
            w,
            h,
            map.data().iter().map(|v| v.as_f64() as f32).collect(),
            class_index,
        )
    }

    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.values[y * self.width + x]
    }
}

/// `sum_k weights[class, k] * feature_maps[k]`. Accepts `[K, u, v]` or a
/// single-sample `[1, K, u, v]`.
pub fn compute_cam<T: Scalar>(
    feature_maps: &Tensor<T>,
    weights: &Tensor<T>,
    class: usize,
) -> Result<Tensor<T>> {
    let (k, u, v) = match *feature_maps.shape() {
        [k, u, v] | [1, k, u, v] => (k, u, v),
        _ => {
            return Err(Error::Shape(format!(
                "feature maps must be [K,u,v], got {:?}",
                feature_maps.shape()
            )))
        }
    };
    let (c, wk) = weights.dims2()?;
    if wk != k {
        return Err(Error::Shape(format!(
            "{k} feature maps but weights have {wk} columns"
        )));
    }
    if class >= c {
        return Err(Error::InvalidArgument(format!(
            "class {class} outside [0, {c})"
        )));
    }
    let plane = u * v;
    let mut out = Tensor::zeros(&[u, v]);
    let w = &weights.data()[class * k..(class + 1) * k];
    for (ki, map) in feature_maps.data().chunks(plane).enumerate() {
        let wk = w[ki];
        for (o, &a) in out.data_mut().iter_mut().zip(map) {
            *o = *o + wk * a;
        }
    }
    Ok(out)
}

/// Corner-aligned bilinear upsampling of a `[u, v]` map to `(height, width)`.
pub fn upsample_bilinear<T: Scalar>(
    map: &Tensor<T>,
    height: usize,
    width: usize,
) -> Result<Tensor<T>> {
    let (u, v) = map.dims2()?;
    if u == 0 || v == 0 {
        return Err(Error::Shape("cannot upsample an empty map".into()));
    }
    if height < u || width < v {
        return Err(Error::InvalidArgument(format!(
            "target {height}x{width} is smaller than source {u}x{v}"
        )));
    }
    let axis = |out: usize, src: usize| -> Vec<(usize, usize, f64)> {
        (0..out)
            .map(|i| {
                if src == 1 || out == 1 {
                    return (0, 0, 0.0);
                }
                let pos = i as f64 * (src - 1) as f64 / (out - 1) as f64;
                let i0 = (pos.floor() as usize).min(src - 2);
                (i0, i0 + 1, pos - i0 as f64)
            })
            .collect()
    };
    let rows = axis(height, u);
    let cols = axis(width, v);
    let m = map.data();
    let mut out = Tensor::zeros(&[height, width]);
    for (y, &(y0, y1, ty)) in rows.iter().enumerate() {
        for (x, &(x0, x1, tx)) in cols.iter().enumerate() {
            let corners = [
                m[y0 * v + x0],
                m[y0 * v + x1],
                m[y1 * v + x0],
                m[y1 * v + x1],
            ];
            let [a, b, c, d] = corners.map(|s| s.as_f64());
            let top = a * (1.0 - tx) + b * tx;
            let bottom = c * (1.0 - tx) + d * tx;
            let val = top * (1.0 - ty) + bottom * ty;
            let lo = a.min(b).min(c).min(d);
            let hi = a.max(b).max(c).max(d);
            out[y * width + x] = T::from_f64_lossy(val.clamp(lo, hi));
        }
    }
    Ok(out)
}

/// Mean of a raw (pre-upsampling) CAM plus the class bias; equals the
/// network's logit for that class.
pub fn class_score_from_cam<T: Scalar>(raw: &Tensor<T>, bias: f64) -> f64 {
    let sum: f64 = raw.data().iter().map(|v| v.as_f64()).sum();
    sum / raw.len() as f64 + bias
}

/// Raw CAM for one image plus the network's logits for it.
#[derive(Debug, Clone)]
pub struct CamOutput {
    /// Feature-map resolution, before upsampling.
    pub raw: Tensor<f32>,
    /// Upsampled to the network input size; not normalized.
    pub heatmap: Heatmap,
    pub logits: Vec<f32>,
}

/// Runs an inference pass on one `[C, H, W]` image and builds its CAM.
pub fn class_activation_map(
    net: &Network<f32>,
    image: &Tensor<f32>,
    class: usize,
) -> Result<CamOutput> {
    if class >= net.classes() {
        return Err(Error::InvalidArgument(format!(
            "class {class} outside [0, {})",
            net.classes()
        )));
    }
    let mut shape = vec![1];
    shape.extend_from_slice(image.shape());
    let batch = image.clone().reshape(&shape)?;
    let out = net.forward(&batch, Mode::Infer)?;
    let raw = compute_cam(&out.feature_maps, &net.classifier_weights, class)?;
    let up = upsample_bilinear(&raw, net.spec.input_height, net.spec.input_width)?;
    Ok(CamOutput {
        heatmap: Heatmap::from_tensor(&up, class)?,
        raw,
        logits: out.logits.into_data(),
    })
}

pub const SIDECAR_MAGIC: [u8; 4] = *b"LCHM";
pub const SIDECAR_VERSION: u32 = 1;

/// Little-endian sidecar: magic, version u32, width u32, height u32,
/// class u32, normalized u8, then `width * height` f32 values.
pub fn heatmap_to_bytes(h: &Heatmap) -> Vec<u8> {
    let mut buf = Vec::with_capacity(21 + 4 * h.values.len());
    buf.extend_from_slice(&SIDECAR_MAGIC);
    buf.extend_from_slice(&SIDECAR_VERSION.to_le_bytes());
    buf.extend_from_slice(&(h.width as u32).to_le_bytes());
    buf.extend_from_slice(&(h.height as u32).to_le_bytes());
    buf.extend_from_slice(&(h.class_index as u32).to_le_bytes());
    buf.push(u8::from(h.normalized));
    for v in &h.values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    buf
}

pub fn heatmap_from_bytes(bytes: &[u8]) -> Result<Heatmap> {
    let bad = |m: &str| Error::InvalidArgument(format!("heatmap sidecar: {m}"));
    if bytes.len() < 21 {
        return Err(bad("truncated header"));
    }
    if bytes[..4] != SIDECAR_MAGIC {
        return Err(bad("bad magic"));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().expect("4 bytes")) as usize;
    if word(4) != SIDECAR_VERSION as usize {
        return Err(bad("unsupported version"));
    }
    let (width, height, class_index) = (word(8), word(12), word(16));
    let payload = &bytes[21..];
    if payload.len() != width * height * 4 {
        return Err(bad("payload length does not match dimensions"));
    }
    let values = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect();
    Ok(Heatmap {
        width,
        height,
        values,
        class_index,
        normalized: bytes[20] != 0,
    })
}

pub fn write_sidecar(h: &Heatmap, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, heatmap_to_bytes(h)).map_err(|e| Error::io(path, e))
}

pub fn read_sidecar(path: impl AsRef<Path>) -> Result<Heatmap> {
    let path = path.as_ref();
    heatmap_from_bytes(&std::fs::read(path).map_err(|e| Error::io(path, e))?)
}

/// 8-bit value of a normalized heat value, rounded half up.
pub fn to_u8(v: f32) -> u8 {
    (f64::from(v).clamp(0.0, 1.0) * 255.0 + 0.5).floor() as u8
}

/// Grayscale PNG of the normalized heatmap.
pub fn heatmap_image(h: &Heatmap) -> GrayImage {
    let n = if h.normalized {
        h.clone()
    } else {
        normalize(h)
    };
    GrayImage::from_fn(n.width as u32, n.height as u32, |x, y| {
        Luma([to_u8(n.get(x as usize, y as usize))])
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Colormap {
    #[default]
    Jet,
    Hot,
    Gray,
}

impl Colormap {
    pub fn color(self, v: f32) -> [u8; 3] {
        let v = f64::from(v).clamp(0.0, 1.0);
        let c = |x: f64| (x.clamp(0.0, 1.0) * 255.0 + 0.5).floor() as u8;
        match self {
            Colormap::Jet => [
                c(1.5 - (4.0 * v - 3.0).abs()),
                c(1.5 - (4.0 * v - 2.0).abs()),
                c(1.5 - (4.0 * v - 1.0).abs()),
            ],
            Colormap::Hot => [c(3.0 * v), c(3.0 * v - 1.0), c(3.0 * v - 2.0)],
            Colormap::Gray => [c(v); 3],
        }
    }
}

impl std::str::FromStr for Colormap {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "jet" => Ok(Colormap::Jet),
            "hot" => Ok(Colormap::Hot),
            "gray" => Ok(Colormap::Gray),
            _ => Err(format!("unknown colormap {s:?} (jet, hot, gray)")),
        }
    }
}

/// Alpha-blends the colorized normalized heatmap over `source`.
pub fn overlay(source: &RawImage, h: &Heatmap, colormap: Colormap, alpha: f32) -> Result<RgbImage> {
    if (source.width, source.height) != (h.width, h.height) {
        return Err(Error::Shape(format!(
            "overlay source is {}x{}, heatmap {}x{}",
            source.width, source.height, h.width, h.height
        )));
    }
    let n = if h.normalized {
        h.clone()
    } else {
        normalize(h)
    };
    let a = f64::from(alpha.clamp(0.0, 1.0));
    Ok(RgbImage::from_fn(
        h.width as u32,
        h.height as u32,
        |x, y| {
            let (xu, yu) = (x as usize, y as usize);
            let heat = colormap.color(n.get(xu, yu));
            let px = std::array::from_fn(|ch| {
                let src = f64::from(source.sample(xu, yu, ch.min(source.channels - 1)));
                ((1.0 - a) * src + a * f64::from(heat[ch]) + 0.5)
                    .floor()
                    .min(255.0) as u8
            });
            Rgb(px)
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], v: Vec<f64>) -> Tensor<f64> {
        Tensor::from_vec(shape, v).unwrap()
    }

    #[test]
    fn single_map_unit_weight_is_identity() {
        let a = t(&[1, 2, 2], vec![1.0, -2.0, 3.0, 4.0]);
        let w = t(&[1, 1], vec![1.0]);
        assert_eq!(compute_cam(&a, &w, 0).unwrap().data(), a.data());
    }

    #[test]
    fn opposite_weights_cancel() {
        let a = t(&[2, 2, 2], vec![1.0, 2.0, 3.0, 4.0, 1.0, 2.0, 3.0, 4.0]);
        let w = t(&[1, 2], vec![1.0, -1.0]);
        assert!(compute_cam(&a, &w, 0)
            .unwrap()
            .data()
            .iter()
            .all(|&v| v == 0.0));
    }

    #[test]
    fn class_out_of_range() {
        let a = t(&[1, 2, 2], vec![0.0; 4]);
        let w = t(&[2, 1], vec![1.0, 1.0]);
        assert!(matches!(
            compute_cam(&a, &w, 2),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn constant_upsamples_to_constant() {
        let m = t(&[3, 2], vec![0.7; 6]);
        let up = upsample_bilinear(&m, 7, 5).unwrap();
        assert!(up.data().iter().all(|&v| v == 0.7));
    }

    #[test]
    fn midpoint_is_mean_of_corners() {
        let m = t(&[2, 2], vec![0.0, 1.0, 1.0, 2.0]);
        let up = upsample_bilinear(&m, 3, 3).unwrap();
        assert_eq!(up[4], 1.0);
        assert_eq!(up.data(), &[0.0, 0.5, 1.0, 0.5, 1.0, 1.5, 1.0, 1.5, 2.0]);
    }

    #[test]
    fn two_to_four_grid() {
        // positions 0, 1/3, 2/3, 1 along each axis of [[0, 3], [6, 9]]
        let m = t(&[2, 2], vec![0.0, 3.0, 6.0, 9.0]);
        let up = upsample_bilinear(&m, 4, 4).unwrap();
        let expect = [
            0.0, 1.0, 2.0, 3.0, //
            2.0, 3.0, 4.0, 5.0, //
            4.0, 5.0, 6.0, 7.0, //
            6.0, 7.0, 8.0, 9.0,
        ];
        for (a, b) in up.data().iter().zip(expect) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn downsampling_rejected() {
        let m = t(&[4, 4], vec![0.0; 16]);
        assert!(upsample_bilinear(&m, 2, 8).is_err());
    }

    #[test]
    fn score_from_cam() {
        assert_eq!(class_score_from_cam(&t(&[2, 2], vec![0.0; 4]), 0.0), 0.0);
        let m = t(&[2, 2], vec![1.0, 2.0, 3.0, 6.0]);
        assert_eq!(class_score_from_cam(&m, 0.5), 3.5);
    }

    #[test]
    fn sidecar_round_trip() {
        let h = Heatmap::new(3, 2, vec![0.0, -1.5, 2.25, f32::MIN_POSITIVE, 7.0, 1e-7], 1).unwrap();
        let back = heatmap_from_bytes(&heatmap_to_bytes(&h)).unwrap();
        assert_eq!(back, h);
        let mut bytes = heatmap_to_bytes(&h);
        bytes.pop();
        assert!(heatmap_from_bytes(&bytes).is_err());
    }

    #[test]
    fn rounding_half_up() {
        assert_eq!(to_u8(0.0), 0);
        assert_eq!(to_u8(1.0), 255);
        assert_eq!(to_u8(0.5), 128); // 127.5 rounds up
    }

    #[test]
    fn colormap_endpoints() {
        assert_eq!(Colormap::Gray.color(1.0), [255, 255, 255]);
        assert_eq!(Colormap::Jet.color(0.0), [0, 0, 128]);
        assert_eq!(Colormap::Jet.color(1.0), [128, 0, 0]);
        assert_eq!(Colormap::Hot.color(0.0), [0, 0, 0]);
    }
}
