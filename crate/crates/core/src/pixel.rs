//! Pixel coordinates, sorted pixel sets and binary masks.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `x` is the column, `y` the row. Ordered in raster order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Pixel {
    pub x: u32,
    pub y: u32,
}

impl Pixel {
    pub fn new(x: u32, y: u32) -> Self {
        Pixel { x, y }
    }
}

impl Ord for Pixel {
    fn cmp(&self, other: &Self) -> Ordering {
        (self.y, self.x).cmp(&(other.y, other.x))
    }
}

impl PartialOrd for Pixel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Inclusive bounding box.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub x0: u32,
    pub y0: u32,
    pub x1: u32,
    pub y1: u32,
}

/// Horizontal run of `len` pixels starting at `(x, y)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Run {
    pub y: u32,
    pub x: u32,
    pub len: u32,
}

/// Set of pixels kept sorted in raster order without duplicates.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct PixelSet(Vec<Pixel>);

impl PixelSet {
    pub fn new(mut pixels: Vec<Pixel>) -> Self {
        pixels.sort_unstable();
        pixels.dedup();
        PixelSet(pixels)
    }

    /// Wraps pixels that are already sorted and unique.
    pub(crate) fn from_sorted(pixels: Vec<Pixel>) -> Self {
        debug_assert!(pixels.windows(2).all(|w| w[0] < w[1]));
        PixelSet(pixels)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Pixel> {
        self.0.iter()
    }

    pub fn as_slice(&self) -> &[Pixel] {
        &self.0
    }

    pub fn first(&self) -> Option<Pixel> {
        self.0.first().copied()
    }

    pub fn contains(&self, p: Pixel) -> bool {
        self.0.binary_search(&p).is_ok()
    }

    pub fn index_of(&self, p: Pixel) -> Option<usize> {
        self.0.binary_search(&p).ok()
    }

    pub fn intersection_count(&self, other: &PixelSet) -> usize {
        let (a, b) = (&self.0, &other.0);
        let (mut i, mut j, mut n) = (0, 0, 0);
        while i < a.len() && j < b.len() {
            match a[i].cmp(&b[j]) {
                Ordering::Less => i += 1,
                Ordering::Greater => j += 1,
                Ordering::Equal => {
                    n += 1;
                    i += 1;
                    j += 1;
                }
            }
        }
        n
    }

    pub fn intersects(&self, other: &PixelSet) -> bool {
        self.intersection_count(other) > 0
    }

    pub fn union_count(&self, other: &PixelSet) -> usize {
        self.len() + other.len() - self.intersection_count(other)
    }

    pub fn bounding_box(&self) -> Option<BoundingBox> {
        let first = self.0.first()?;
        let mut b = BoundingBox {
            x0: first.x,
            y0: first.y,
            x1: first.x,
            y1: first.y,
        };
        for p in &self.0 {
            b.x0 = b.x0.min(p.x);
            b.x1 = b.x1.max(p.x);
            b.y1 = b.y1.max(p.y);
        }
        Some(b)
    }

    pub fn to_runs(&self) -> Vec<Run> {
        let mut runs: Vec<Run> = Vec::new();
        for p in &self.0 {
            match runs.last_mut() {
                Some(r) if r.y == p.y && r.x + r.len == p.x => r.len += 1,
                _ => runs.push(Run {
                    y: p.y,
                    x: p.x,
                    len: 1,
                }),
            }
        }
        runs
    }

    pub fn from_runs(runs: &[Run]) -> Self {
        PixelSet::new(
            runs.iter()
                .flat_map(|r| (r.x..r.x + r.len).map(move |x| Pixel::new(x, r.y)))
                .collect(),
        )
    }
}

impl FromIterator<Pixel> for PixelSet {
    fn from_iter<I: IntoIterator<Item = Pixel>>(iter: I) -> Self {
        PixelSet::new(iter.into_iter().collect())
    }
}

impl<'a> IntoIterator for &'a PixelSet {
    type Item = &'a Pixel;
    type IntoIter = std::slice::Iter<'a, Pixel>;

    fn into_iter(self) -> Self::IntoIter {
        self.0.iter()
    }
}

/// Row-major binary mask.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    width: usize,
    height: usize,
    data: Vec<bool>,
}

impl Mask {
    pub fn new(width: usize, height: usize) -> Self {
        Mask {
            width,
            height,
            data: vec![false; width * height],
        }
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<bool>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::Shape(format!(
                "{width}x{height} mask needs {} values, got {}",
                width * height,
                data.len()
            )));
        }
        Ok(Mask {
            width,
            height,
            data,
        })
    }

    pub fn from_pixels(width: usize, height: usize, pixels: &PixelSet) -> Result<Self> {
        let mut m = Mask::new(width, height);
        for p in pixels {
            if p.x as usize >= width || p.y as usize >= height {
                return Err(Error::Shape(format!(
                    "pixel ({}, {}) outside {width}x{height}",
                    p.x, p.y
                )));
            }
            m.set(p.x as usize, p.y as usize, true);
        }
        Ok(m)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        self.data[y * self.width + x] = v;
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn pixels(&self) -> PixelSet {
        PixelSet::from_sorted(
            self.data
                .iter()
                .enumerate()
                .filter(|(_, &b)| b)
                .map(|(i, _)| Pixel::new((i % self.width) as u32, (i / self.width) as u32))
                .collect(),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(pts: &[(u32, u32)]) -> PixelSet {
        pts.iter().map(|&(x, y)| Pixel::new(x, y)).collect()
    }

    #[test]
    fn raster_order_and_dedup() {
        let s = set(&[(3, 1), (0, 2), (5, 0), (3, 1)]);
        assert_eq!(
            s.as_slice(),
            &[Pixel::new(5, 0), Pixel::new(3, 1), Pixel::new(0, 2)]
        );
    }

    #[test]
    fn counts() {
        let a = set(&[(0, 0), (1, 0), (0, 1), (1, 1)]);
        let b = set(&[(1, 0), (2, 0), (1, 1), (2, 1)]);
        assert_eq!(a.intersection_count(&b), 2);
        assert_eq!(a.union_count(&b), 6);
    }

    #[test]
    fn runs_round_trip() {
        let s = set(&[(1, 0), (2, 0), (3, 0), (7, 0), (0, 4)]);
        let runs = s.to_runs();
        assert_eq!(runs.len(), 3);
        assert_eq!(runs[0], Run { y: 0, x: 1, len: 3 });
        assert_eq!(PixelSet::from_runs(&runs), s);
    }

    #[test]
    fn bounding_box() {
        let s = set(&[(4, 2), (1, 3), (6, 5)]);
        assert_eq!(
            s.bounding_box(),
            Some(BoundingBox {
                x0: 1,
                y0: 2,
                x1: 6,
                y1: 5
            })
        );
        assert_eq!(PixelSet::default().bounding_box(), None);
    }
}
