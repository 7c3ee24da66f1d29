//! Procedural fundus-like images with known lesion pixels.
//!
//! Each image is a bright disc touching all four borders (so margin
//! cropping keeps the full frame) with a reddish vignetted background,
//! low-frequency texture, pixel noise and an optic disc. A diseased image
//! carries 1 to `max_lesions` non-overlapping elliptical lesions, all of
//! one type:
//!
//! | type | appearance | semi-axes at 64 px |
//! |------|------------|--------------------|
//! | hemorrhage | dark red | 2.5 to 4 |
//! | hard exudate | bright yellow | 1.5 to 2.5 |
//! | soft exudate | pale white | 2.5 to 3.5 |
//! | red small dot | dark red | 1 to 3 (absolute) |
//!
//! Every image draws from its own stream of a ChaCha generator keyed by the
//! seed, so generation order and thread count do not matter.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use super::raw::RawImage;
use crate::error::{Error, Result};
use crate::eval::{GroundTruthRegion, LesionType};
use crate::imaging::fuse_expert_masks;
use crate::pixel::{Mask, Pixel, PixelSet};

pub const EXPERTS_WITH_NOISE: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub images: usize,
    pub diseased_fraction: f64,
    pub size: usize,
    pub channels: usize,
    /// Types lesions are drawn from. Empty means every image is healthy.
    pub lesion_types: Vec<LesionType>,
    pub max_lesions: usize,
    /// Simulate four annotators who each erode the lesion boundary at random.
    pub expert_noise: bool,
    pub seed: u64,
    pub id_prefix: String,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            images: 200,
            diseased_fraction: 0.5,
            size: 64,
            channels: 3,
            lesion_types: LesionType::ALL.to_vec(),
            max_lesions: 3,
            expert_noise: false,
            seed: 0,
            id_prefix: "img".into(),
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.images == 0 {
            return bad("need at least one image".into());
        }
        if self.size < 32 {
            return bad(format!(
                "synthetic images need size >= 32, got {}",
                self.size
            ));
        }
        if self.channels != 1 && self.channels != 3 {
            return bad(format!("channels must be 1 or 3, got {}", self.channels));
        }
        if !(0.0..=1.0).contains(&self.diseased_fraction) {
            return bad(format!(
                "diseased fraction {} outside [0, 1]",
                self.diseased_fraction
            ));
        }
        if self.max_lesions == 0 {
            return bad("max_lesions must be at least 1".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticLesion {
    pub lesion_type: LesionType,
    pub pixels: PixelSet,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticImage {
    pub image: RawImage,
    /// The same render without lesions.
    pub background: RawImage,
    pub diseased: bool,
    pub lesions: Vec<SyntheticLesion>,
    /// Per lesion type present: one mask per simulated annotator.
    pub expert_masks: Vec<(LesionType, Vec<Mask>)>,
}

impl SyntheticImage {
    pub fn ground_truth(&self) -> Result<Vec<GroundTruthRegion>> {
        let mut out = Vec::new();
        for (t, masks) in &self.expert_masks {
            out.extend(fuse_expert_masks(masks, *t)?);
        }
        Ok(out)
    }
}

/// Center and radius of the retina disc for a square image of side `size`.
pub fn retina_disc(size: usize) -> (f64, f64, f64) {
    let c = (size as f64 - 1.0) / 2.0;
    (c, c, size as f64 / 2.0)
}

pub fn generate_synthetic(config: &SynthConfig) -> Result<Vec<SyntheticImage>> {
    config.validate()?;
    (0..config.images)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(i as u64);
            render_one(config, i, &mut rng)
        })
        .collect()
}

struct Canvas {
    size: usize,
    /// RGB, each plane row-major in [0, 1].
    planes: [Vec<f64>; 3],
}

impl Canvas {
    fn to_raw(&self, channels: usize, id: &str) -> Result<RawImage> {
        let q = |v: f64| (v * 255.0 + 0.5).floor().clamp(0.0, 255.0) as u8;
        let n = self.size * self.size;
        let mut data = Vec::with_capacity(n * channels);
        for i in 0..n {
            let [r, g, b] = [self.planes[0][i], self.planes[1][i], self.planes[2][i]];
            if channels == 1 {
                data.push(q(0.299 * r + 0.587 * g + 0.114 * b));
            } else {
                data.extend([q(r), q(g), q(b)]);
            }
        }
        RawImage::new(self.size, self.size, channels, data, id)
    }
}

struct OpticDisc {
    x: f64,
    y: f64,
    r: f64,
}

fn render_background(size: usize, rng: &mut ChaCha8Rng) -> (Canvas, OpticDisc) {
    let (cx, cy, radius) = retina_disc(size);
    let gain = rng.random_range(0.85..1.1);
    let tint = [
        0.78 + rng.random_range(-0.04..0.04),
        0.42 + rng.random_range(-0.04..0.04),
        0.22 + rng.random_range(-0.03..0.03),
    ];
    let side = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
    let od = OpticDisc {
        x: cx + side * radius * rng.random_range(0.25..0.4),
        y: cy + radius * rng.random_range(-0.1..0.1),
        r: radius * 0.14,
    };
    let grid = 5;
    let normal = Normal::new(0.0, 0.06).expect("valid sigma");
    let coarse: Vec<f64> = (0..grid * grid).map(|_| normal.sample(rng)).collect();
    let pixel_noise = Normal::new(0.0, 0.012).expect("valid sigma");

    let mut planes = [
        vec![0.0; size * size],
        vec![0.0; size * size],
        vec![0.0; size * size],
    ];
    for y in 0..size {
        for x in 0..size {
            let (dx, dy) = (x as f64 - cx, y as f64 - cy);
            let r2 = (dx * dx + dy * dy) / (radius * radius);
            if r2 > 1.0 {
                continue;
            }
            let gx = x as f64 / (size - 1) as f64 * (grid - 1) as f64;
            let gy = y as f64 / (size - 1) as f64 * (grid - 1) as f64;
            let (x0, y0) = (
                (gx.floor() as usize).min(grid - 2),
                (gy.floor() as usize).min(grid - 2),
            );
            let (fx, fy) = (gx - x0 as f64, gy - y0 as f64);
            let at = |i: usize, j: usize| coarse[j * grid + i];
            let texture = (at(x0, y0) * (1.0 - fx) + at(x0 + 1, y0) * fx) * (1.0 - fy)
                + (at(x0, y0 + 1) * (1.0 - fx) + at(x0 + 1, y0 + 1) * fx) * fy;
            let vignette = 1.0 - 0.4 * r2;
            let d_od = ((x as f64 - od.x).powi(2) + (y as f64 - od.y).powi(2)).sqrt() / od.r;
            let glow = if d_od < 1.0 {
                0.3 * (1.0 - d_od * d_od)
            } else {
                0.0
            };
            let i = y * size + x;
            for (c, plane) in planes.iter_mut().enumerate() {
                let v =
                    tint[c] * gain * vignette * (1.0 + texture) + glow + pixel_noise.sample(rng);
                plane[i] = v.clamp(0.05, 1.0);
            }
        }
    }
    (Canvas { size, planes }, od)
}

fn semi_axes(t: LesionType, scale: f64, rng: &mut ChaCha8Rng) -> (f64, f64) {
    let (lo, hi, s) = match t {
        LesionType::Hemorrhage => (2.5, 4.0, scale),
        LesionType::HardExudate => (1.5, 2.5, scale),
        LesionType::SoftExudate => (2.5, 3.5, scale),
        LesionType::RedSmallDot => (1.0, 3.0, 1.0),
    };
    (rng.random_range(lo..=hi) * s, rng.random_range(lo..=hi) * s)
}

fn paint(t: LesionType, rgb: [f64; 3]) -> [f64; 3] {
    match t {
        LesionType::Hemorrhage | LesionType::RedSmallDot => {
            [rgb[0] * 0.55, rgb[1] * 0.35, rgb[2] * 0.4]
        }
        LesionType::HardExudate => [rgb[0] + 0.2, rgb[1] + 0.3, rgb[2] + 0.05],
        LesionType::SoftExudate => {
            let target = [0.95, 0.9, 0.8];
            std::array::from_fn(|c| rgb[c] + 0.7 * (target[c] - rgb[c]))
        }
    }
}

fn place_lesion(
    t: LesionType,
    size: usize,
    od: &OpticDisc,
    occupied: &Mask,
    rng: &mut ChaCha8Rng,
) -> Option<Vec<(usize, usize)>> {
    let (cx, cy, radius) = retina_disc(size);
    let scale = size as f64 / 64.0;
    for _ in 0..100 {
        let (a, b) = semi_axes(t, scale, rng);
        let theta: f64 = rng.random_range(0.0..std::f64::consts::PI);
        let reach = a.max(b);
        let px = rng.random_range(0..size) as f64;
        let py = rng.random_range(0..size) as f64;
        let from_center = ((px - cx).powi(2) + (py - cy).powi(2)).sqrt();
        let from_od = ((px - od.x).powi(2) + (py - od.y).powi(2)).sqrt();
        if from_center > radius - reach - 2.0 || from_od < od.r + reach + 2.0 {
            continue;
        }
        let (s, c) = theta.sin_cos();
        let r = reach.ceil() as i64;
        let mut pts = Vec::new();
        for y in (py as i64 - r)..=(py as i64 + r) {
            for x in (px as i64 - r)..=(px as i64 + r) {
                let (dx, dy) = (x as f64 - px, y as f64 - py);
                let u = (dx * c + dy * s) / a;
                let v = (-dx * s + dy * c) / b;
                if u * u + v * v <= 1.0 {
                    pts.push((x as usize, y as usize));
                }
            }
        }
        let clear = pts.iter().all(|&(x, y)| {
            let (x0, y0) = (x.saturating_sub(2), y.saturating_sub(2));
            (y0..=(y + 2).min(size - 1))
                .all(|yy| (x0..=(x + 2).min(size - 1)).all(|xx| !occupied.get(xx, yy)))
        });
        if clear {
            return Some(pts);
        }
    }
    None
}

/// Drops each boundary pixel (4-neighbour outside the set) with probability 1/4.
fn erode_randomly(pixels: &PixelSet, rng: &mut ChaCha8Rng) -> Vec<Pixel> {
    pixels
        .iter()
        .copied()
        .filter(|p| {
            let neighbours = [
                (p.x.wrapping_sub(1), p.y),
                (p.x + 1, p.y),
                (p.x, p.y.wrapping_sub(1)),
                (p.x, p.y + 1),
            ];
            let boundary = neighbours
                .iter()
                .any(|&(x, y)| !pixels.contains(Pixel::new(x, y)));
            let drop = rng.random_bool(0.25);
            !(boundary && drop)
        })
        .collect()
}

fn render_one(config: &SynthConfig, index: usize, rng: &mut ChaCha8Rng) -> Result<SyntheticImage> {
    let size = config.size;
    let id = format!("{}{index:05}", config.id_prefix);
    let (mut canvas, od) = render_background(size, rng);
    let background = canvas.to_raw(config.channels, &id)?;

    let diseased = !config.lesion_types.is_empty() && rng.random_bool(config.diseased_fraction);
    let mut placed: Vec<(LesionType, Vec<(usize, usize)>)> = Vec::new();
    if diseased {
        let t = config.lesion_types[rng.random_range(0..config.lesion_types.len())];
        let count = rng.random_range(1..=config.max_lesions);
        let mut occupied = Mask::new(size, size);
        for _ in 0..count {
            if let Some(pts) = place_lesion(t, size, &od, &occupied, rng) {
                for &(x, y) in &pts {
                    occupied.set(x, y, true);
                    let i = y * size + x;
                    let rgb = [
                        canvas.planes[0][i],
                        canvas.planes[1][i],
                        canvas.planes[2][i],
                    ];
                    let new = paint(t, rgb);
                    for c in 0..3 {
                        canvas.planes[c][i] = new[c].clamp(0.0, 1.0);
                    }
                }
                placed.push((t, pts));
            }
        }
    }
    let image = canvas.to_raw(config.channels, &id)?;

    // Ground truth is the set of pixels the lesion actually changed.
    let differs = |x: usize, y: usize| {
        (0..config.channels).any(|c| image.sample(x, y, c) != background.sample(x, y, c))
    };
    let lesions: Vec<SyntheticLesion> = placed
        .into_iter()
        .map(|(t, pts)| SyntheticLesion {
            lesion_type: t,
            pixels: pts
                .into_iter()
                .filter(|&(x, y)| differs(x, y))
                .map(|(x, y)| Pixel::new(x as u32, y as u32))
                .collect(),
        })
        .filter(|l| !l.pixels.is_empty())
        .collect();

    let experts = if config.expert_noise {
        EXPERTS_WITH_NOISE
    } else {
        1
    };
    let mut expert_masks = Vec::new();
    for t in LesionType::ALL {
        let of_type: Vec<&SyntheticLesion> =
            lesions.iter().filter(|l| l.lesion_type == t).collect();
        if of_type.is_empty() {
            continue;
        }
        let masks = (0..experts)
            .map(|_| {
                let mut m = Mask::new(size, size);
                for l in &of_type {
                    let kept = if config.expert_noise {
                        erode_randomly(&l.pixels, rng)
                    } else {
                        l.pixels.iter().copied().collect()
                    };
                    for p in kept {
                        m.set(p.x as usize, p.y as usize, true);
                    }
                }
                m
            })
            .collect();
        expert_masks.push((t, masks));
    }

    Ok(SyntheticImage {
        image,
        background,
        diseased: !lesions.is_empty(),
        lesions,
        expert_masks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(seed: u64) -> SynthConfig {
        SynthConfig {
            images: 24,
            seed,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let a = generate_synthetic(&small(5)).unwrap();
        let b = generate_synthetic(&small(5)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, generate_synthetic(&small(6)).unwrap());
    }

    #[test]
    fn no_lesion_types_means_all_healthy() {
        let cfg = SynthConfig {
            lesion_types: vec![],
            ..small(1)
        };
        let imgs = generate_synthetic(&cfg).unwrap();
        assert!(imgs
            .iter()
            .all(|i| !i.diseased && i.lesions.is_empty() && i.image == i.background));
    }

    #[test]
    fn lesions_inside_disc_and_visible() {
        for channels in [1, 3] {
            let cfg = SynthConfig {
                images: 40,
                channels,
                diseased_fraction: 1.0,
                ..small(9)
            };
            let (cx, cy, r) = retina_disc(cfg.size);
            for img in generate_synthetic(&cfg).unwrap() {
                assert!(img.diseased);
                assert!(!img.lesions.is_empty() && img.lesions.len() <= cfg.max_lesions);
                for region in img.ground_truth().unwrap() {
                    for p in &region.pixels {
                        let d = ((p.x as f64 - cx).powi(2) + (p.y as f64 - cy).powi(2)).sqrt();
                        assert!(d <= r);
                        let (x, y) = (p.x as usize, p.y as usize);
                        assert!((0..channels)
                            .any(|c| img.image.sample(x, y, c) != img.background.sample(x, y, c)));
                    }
                }
            }
        }
    }

    #[test]
    fn lesions_are_separate_regions() {
        let cfg = SynthConfig {
            images: 30,
            diseased_fraction: 1.0,
            ..small(2)
        };
        for img in generate_synthetic(&cfg).unwrap() {
            let per_type = |t| img.lesions.iter().filter(|l| l.lesion_type == t).count();
            for t in LesionType::ALL {
                let regions = img
                    .ground_truth()
                    .unwrap()
                    .into_iter()
                    .filter(|g| g.lesion_type == t)
                    .count();
                assert!(
                    regions >= per_type(t),
                    "{t}: {regions} regions for {} lesions",
                    per_type(t)
                );
            }
        }
    }

    #[test]
    fn expert_noise_gives_quarter_step_confidences() {
        let cfg = SynthConfig {
            expert_noise: true,
            diseased_fraction: 1.0,
            ..small(4)
        };
        let mut saw_partial = false;
        for img in generate_synthetic(&cfg).unwrap() {
            for (_, masks) in &img.expert_masks {
                assert_eq!(masks.len(), EXPERTS_WITH_NOISE);
            }
            for g in img.ground_truth().unwrap() {
                for &c in &g.confidence {
                    assert!(c == 0.75 || c == 1.0);
                    saw_partial |= c == 0.75;
                }
            }
        }
        assert!(saw_partial);
    }

    #[test]
    fn every_type_appears() {
        let cfg = SynthConfig {
            images: 60,
            diseased_fraction: 1.0,
            ..small(3)
        };
        let imgs = generate_synthetic(&cfg).unwrap();
        for t in LesionType::ALL {
            assert!(imgs
                .iter()
                .any(|i| i.lesions.iter().any(|l| l.lesion_type == t)));
        }
    }

    #[test]
    fn rejects_zero_images() {
        assert!(generate_synthetic(&SynthConfig {
            images: 0,
            ..small(0)
        })
        .is_err());
    }
}
