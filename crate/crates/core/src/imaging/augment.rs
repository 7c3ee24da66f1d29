//! Random photometric and geometric perturbations of a `[C, H, W]` tensor.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentParams {
    /// Additive shift drawn from `±brightness * (max - min)`.
    pub brightness: f32,
    /// Multiplicative factor about the image mean, drawn uniformly.
    pub contrast: (f32, f32),
    /// Rotation angle in degrees (counter-clockwise), drawn uniformly.
    pub rotation: (f32, f32),
    pub flip_horizontal: f64,
    pub flip_vertical: f64,
}

impl Default for AugmentParams {
    fn default() -> Self {
        AugmentParams {
            brightness: 0.2,
            contrast: (0.8, 1.25),
            rotation: (0.0, 360.0),
            flip_horizontal: 0.5,
            flip_vertical: 0.5,
        }
    }
}

impl AugmentParams {
    pub fn identity() -> Self {
        AugmentParams {
            brightness: 0.0,
            contrast: (1.0, 1.0),
            rotation: (0.0, 0.0),
            flip_horizontal: 0.0,
            flip_vertical: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.brightness >= 0.0
            && self.brightness.is_finite()
            && self.contrast.0 > 0.0
            && self.contrast.0 <= self.contrast.1
            && self.contrast.1.is_finite()
            && self.rotation.0 <= self.rotation.1
            && self.rotation.0.is_finite()
            && self.rotation.1.is_finite()
            && (0.0..=1.0).contains(&self.flip_horizontal)
            && (0.0..=1.0).contains(&self.flip_vertical);
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!(
                "bad augmentation parameters {self:?}"
            )))
        }
    }
}

fn uniform(rng: &mut ChaCha8Rng, lo: f32, hi: f32) -> f32 {
    let u: f32 = rng.random();
    lo + (hi - lo) * u
}

/// Brightness, contrast, rotation, then flips, all drawn from a generator
/// seeded with `seed`. The same draws happen whatever the parameters, so a
/// seed always maps to the same sequence.
pub fn augment(img: &Tensor<f32>, seed: u64, params: &AugmentParams) -> Result<Tensor<f32>> {
    params.validate()?;
    let (_, h, w) = dims3(img)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let b = uniform(&mut rng, -params.brightness, params.brightness);
    let c = uniform(&mut rng, params.contrast.0, params.contrast.1);
    let angle = uniform(&mut rng, params.rotation.0, params.rotation.1);
    let fh = rng.random_bool(params.flip_horizontal);
    let fv = rng.random_bool(params.flip_vertical);

    let mut out = img.clone();
    if b != 0.0 {
        let (lo, hi) = out
            .data()
            .iter()
            .fold((f32::INFINITY, f32::NEG_INFINITY), |(l, u), &v| {
                (l.min(v), u.max(v))
            });
        let delta = b * (hi - lo);
        out = out.map(|v| v + delta);
    }
    if c != 1.0 {
        let mean =
            (out.data().iter().map(|&v| f64::from(v)).sum::<f64>() / out.len() as f64) as f32;
        out = out.map(|v| mean + c * (v - mean));
    }
    if angle != 0.0 {
        out = rotate(&out, f64::from(angle))?;
    }
    if fh {
        out = flip_horizontal(&out)?;
    }
    if fv {
        out = flip_vertical(&out)?;
    }
    debug_assert_eq!(out.shape(), &[out.shape()[0], h, w]);
    Ok(out)
}

fn dims3(t: &Tensor<f32>) -> Result<(usize, usize, usize)> {
    match *t.shape() {
        [c, h, w] => Ok((c, h, w)),
        _ => Err(Error::Shape(format!(
            "expected [C, H, W], got {:?}",
            t.shape()
        ))),
    }
}

fn remap(t: &Tensor<f32>, f: impl Fn(usize, usize) -> (usize, usize)) -> Result<Tensor<f32>> {
    let (c, h, w) = dims3(t)?;
    let src = t.data();
    let mut out = vec![0.0; c * h * w];
    for ch in 0..c {
        for y in 0..h {
            for x in 0..w {
                let (sx, sy) = f(x, y);
                out[(ch * h + y) * w + x] = src[(ch * h + sy) * w + sx];
            }
        }
    }
    Tensor::from_vec(&[c, h, w], out)
}

pub fn flip_horizontal(t: &Tensor<f32>) -> Result<Tensor<f32>> {
    let (_, _, w) = dims3(t)?;
    remap(t, |x, y| (w - 1 - x, y))
}

pub fn flip_vertical(t: &Tensor<f32>) -> Result<Tensor<f32>> {
    let (_, h, _) = dims3(t)?;
    remap(t, |x, y| (x, h - 1 - y))
}

/// Counter-clockwise rotation about the image center. Output pixels whose
/// source falls outside the image read the channel minimum, which for a
/// fundus photograph is the dark surround. Multiples of 90 degrees on a
/// square image (or 180 on any image) are exact index permutations.
pub fn rotate(t: &Tensor<f32>, degrees: f64) -> Result<Tensor<f32>> {
    let (c, h, w) = dims3(t)?;
    let turns = degrees.rem_euclid(360.0) / 90.0;
    let quarter = turns.round();
    if (turns - quarter).abs() < 1e-9 {
        match (quarter as u32 % 4, w == h) {
            (0, _) => return Ok(t.clone()),
            (2, _) => return remap(t, |x, y| (w - 1 - x, h - 1 - y)),
            (1, true) => return remap(t, |x, y| (w - 1 - y, x)),
            (3, true) => return remap(t, |x, y| (y, h - 1 - x)),
            _ => {}
        }
    }
    let (s, co) = degrees.to_radians().sin_cos();
    let (cx, cy) = ((w as f64 - 1.0) / 2.0, (h as f64 - 1.0) / 2.0);
    let src = t.data();
    let fill: Vec<f64> = src
        .chunks(h * w)
        .map(|ch| f64::from(ch.iter().copied().fold(f32::INFINITY, f32::min)))
        .collect();
    let mut out = vec![0.0f32; c * h * w];
    for y in 0..h {
        for x in 0..w {
            let (dx, dy) = (x as f64 - cx, y as f64 - cy);
            let sx = cx + co * dx - s * dy;
            let sy = cy + s * dx + co * dy;
            let (x0, y0) = (sx.floor(), sy.floor());
            let (fx, fy) = (sx - x0, sy - y0);
            let taps = [
                (x0, y0, (1.0 - fx) * (1.0 - fy)),
                (x0 + 1.0, y0, fx * (1.0 - fy)),
                (x0, y0 + 1.0, (1.0 - fx) * fy),
                (x0 + 1.0, y0 + 1.0, fx * fy),
            ];
            for ch in 0..c {
                let mut acc = 0.0f64;
                for &(tx, ty, wt) in &taps {
                    if wt == 0.0 {
                        continue;
                    }
                    acc += if tx >= 0.0 && ty >= 0.0 && tx < w as f64 && ty < h as f64 {
                        wt * f64::from(src[(ch * h + ty as usize) * w + tx as usize])
                    } else {
                        wt * fill[ch]
                    };
                }
                out[(ch * h + y) * w + x] = acc as f32;
            }
        }
    }
    Tensor::from_vec(&[c, h, w], out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pattern() -> Tensor<f32> {
        Tensor::from_vec(&[1, 3, 3], (1..=9).map(|v| v as f32).collect()).unwrap()
    }

    #[test]
    fn identity_params_leave_image_unchanged() {
        let t = pattern();
        for seed in 0..20 {
            assert_eq!(augment(&t, seed, &AugmentParams::identity()).unwrap(), t);
        }
    }

    #[test]
    fn same_seed_same_output() {
        let t = Tensor::from_vec(&[2, 5, 4], (0..40).map(|v| (v as f32).sin()).collect()).unwrap();
        let p = AugmentParams::default();
        assert_eq!(augment(&t, 42, &p).unwrap(), augment(&t, 42, &p).unwrap());
        assert_ne!(augment(&t, 42, &p).unwrap(), augment(&t, 43, &p).unwrap());
    }

    #[test]
    fn flips_are_involutions() {
        let t = Tensor::from_vec(&[2, 3, 4], (0..24).map(|v| v as f32).collect()).unwrap();
        assert_eq!(flip_horizontal(&flip_horizontal(&t).unwrap()).unwrap(), t);
        assert_eq!(flip_vertical(&flip_vertical(&t).unwrap()).unwrap(), t);
        assert_eq!(
            flip_horizontal(&t).unwrap().data()[..4],
            [3.0, 2.0, 1.0, 0.0]
        );
        let forced = AugmentParams {
            flip_horizontal: 1.0,
            ..AugmentParams::identity()
        };
        assert_eq!(
            augment(&augment(&t, 1, &forced).unwrap(), 2, &forced).unwrap(),
            t
        );
    }

    #[test]
    fn quarter_turn_by_hand() {
        // 1 2 3        3 6 9
        // 4 5 6   ->   2 5 8
        // 7 8 9        1 4 7
        let r = rotate(&pattern(), 90.0).unwrap();
        assert_eq!(r.data(), &[3.0, 6.0, 9.0, 2.0, 5.0, 8.0, 1.0, 4.0, 7.0]);
        let r = rotate(&pattern(), -90.0).unwrap();
        assert_eq!(r.data(), &[7.0, 4.0, 1.0, 8.0, 5.0, 2.0, 9.0, 6.0, 3.0]);
        let r = rotate(&pattern(), 180.0).unwrap();
        assert_eq!(r.data(), &[9.0, 8.0, 7.0, 6.0, 5.0, 4.0, 3.0, 2.0, 1.0]);
        assert_eq!(rotate(&pattern(), 360.0).unwrap(), pattern());
    }

    #[test]
    fn general_angle_agrees_with_exact_path_near_quarter_turn() {
        let t = pattern();
        let exact = rotate(&t, 90.0).unwrap();
        let near = rotate(&t, 90.0 + 1e-6).unwrap();
        for (a, b) in exact.data().iter().zip(near.data()) {
            assert!((a - b).abs() < 1e-3, "{a} {b}");
        }
    }

    #[test]
    fn rotation_fills_corners_with_channel_minimum() {
        let mut data: Vec<f32> = (1..=81).map(|v| v as f32).collect();
        data.extend((1..=81).map(|v| -(v as f32)));
        let t = Tensor::from_vec(&[2, 9, 9], data).unwrap();
        let r = rotate(&t, 45.0).unwrap();
        assert_eq!(r.data()[0], 1.0);
        assert_eq!(r.data()[81], -81.0);
        assert!((r.data()[40] - 41.0).abs() < 1e-4);
        assert!((r.data()[81 + 40] + 41.0).abs() < 1e-4);
    }

    #[test]
    fn contrast_keeps_mean() {
        let t = pattern();
        let p = AugmentParams {
            contrast: (1.2, 1.2),
            ..AugmentParams::identity()
        };
        let a = augment(&t, 0, &p).unwrap();
        let mean: f32 = a.data().iter().sum::<f32>() / 9.0;
        assert!((mean - 5.0).abs() < 1e-5);
        assert!((a.data()[0] - (5.0 - 1.2 * 4.0)).abs() < 1e-5);
    }

    #[test]
    fn invalid_params() {
        let p = AugmentParams {
            flip_vertical: 1.5,
            ..AugmentParams::default()
        };
        assert!(augment(&pattern(), 0, &p).is_err());
    }
}
