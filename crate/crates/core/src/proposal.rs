//! Heatmap -> scored region proposals: normalize, threshold, split into
//! 8-connected components, score each by its peak.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cam::Heatmap;
use crate::error::{Error, Result};
use crate::pixel::{BoundingBox, Mask, Pixel, PixelSet, Run};

pub const DEFAULT_THRESHOLD: f64 = 0.65;
pub const DEFAULT_MIN_AREA: usize = 4;

/// Min-max maps the heatmap onto `[0, 1]`. A constant map becomes all zeros.
pub fn normalize(h: &Heatmap) -> Heatmap {
    let (lo, hi) = h
        .values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(f64::from(v)), hi.max(f64::from(v)))
        });
    let span = hi - lo;
    let values = if h.values.is_empty() || !(span > 0.0) {
        vec![0.0; h.values.len()]
    } else {
        h.values
            .iter()
            .map(|&v| ((f64::from(v) - lo) / span) as f32)
            .collect()
    };
    Heatmap {
        values,
        normalized: true,
        ..h.clone()
    }
}

/// `value >= tau`, compared at the heatmap's `f32` precision.
pub fn threshold(h: &Heatmap, tau: f64) -> Result<Mask> {
    if !(0.0..=1.0).contains(&tau) {
        return Err(Error::InvalidArgument(format!(
            "threshold {tau} outside [0, 1]"
        )));
    }
    let t = tau as f32;
    Mask::from_vec(
        h.width,
        h.height,
        h.values.iter().map(|&v| v >= t).collect(),
    )
}

/// Maximal 8-connected components of the mask, ordered by the raster
/// position of each component's first pixel.
pub fn connected_components(mask: &Mask) -> Vec<PixelSet> {
    let (w, h) = (mask.width(), mask.height());
    let mut labels = vec![0u32; w * h];
    // union-find over provisional labels, label 0 = background
    let mut parent: Vec<u32> = vec![0];
    fn find(parent: &mut [u32], mut x: u32) -> u32 {
        while parent[x as usize] != x {
            parent[x as usize] = parent[parent[x as usize] as usize];
            x = parent[x as usize];
        }
        x
    }
    for y in 0..h {
        for x in 0..w {
            if !mask.get(x, y) {
                continue;
            }
            let mut neighbours = [0u32; 4];
            let mut n = 0;
            let mut push = |nx: isize, ny: isize| {
                if nx >= 0 && ny >= 0 && (nx as usize) < w {
                    let l = labels[ny as usize * w + nx as usize];
                    if l != 0 {
                        neighbours[n] = l;
                        n += 1;
                    }
                }
            };
            let (xi, yi) = (x as isize, y as isize);
            push(xi - 1, yi);
            push(xi - 1, yi - 1);
            push(xi, yi - 1);
            push(xi + 1, yi - 1);
            let label = if n == 0 {
                let l = parent.len() as u32;
                parent.push(l);
                l
            } else {
                let root = neighbours[..n]
                    .iter()
                    .map(|&l| find(&mut parent, l))
                    .min()
                    .expect("n > 0");
                for &l in &neighbours[..n] {
                    let r = find(&mut parent, l);
                    parent[r as usize] = root;
                }
                root
            };
            labels[y * w + x] = label;
        }
    }
    // Components are numbered in order of first appearance in raster scan.
    let mut slot = vec![usize::MAX; parent.len()];
    let mut components: Vec<Vec<Pixel>> = Vec::new();
    for y in 0..h {
        for x in 0..w {
            let l = labels[y * w + x];
            if l == 0 {
                continue;
            }
            let root = find(&mut parent, l) as usize;
            if slot[root] == usize::MAX {
                slot[root] = components.len();
                components.push(Vec::new());
            }
            components[slot[root]].push(Pixel::new(x as u32, y as u32));
        }
    }
    components.into_iter().map(PixelSet::from_sorted).collect()
}

/// Predicted region with its confidence (peak normalized heat).
#[derive(Debug, Clone, PartialEq)]
pub struct RegionProposal {
    pub pixels: PixelSet,
    pub score: f64,
}

impl RegionProposal {
    pub fn area(&self) -> usize {
        self.pixels.len()
    }

    pub fn bounding_box(&self) -> BoundingBox {
        self.pixels.bounding_box().expect("proposals are non-empty")
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProposalConfig {
    pub threshold: f64,
    pub min_area: usize,
}

impl Default for ProposalConfig {
    fn default() -> Self {
        ProposalConfig {
            threshold: DEFAULT_THRESHOLD,
            min_area: DEFAULT_MIN_AREA,
        }
    }
}

/// Proposals sorted by score (descending), ties kept in raster order.
pub fn propose(h: &Heatmap, config: ProposalConfig) -> Result<Vec<RegionProposal>> {
    let norm = if h.normalized {
        h.clone()
    } else {
        normalize(h)
    };
    let mask = threshold(&norm, config.threshold)?;
    let mut out: Vec<RegionProposal> = connected_components(&mask)
        .into_iter()
        .filter(|c| c.len() >= config.min_area.max(1))
        .map(|pixels| {
            let score = pixels
                .iter()
                .map(|p| f64::from(norm.get(p.x as usize, p.y as usize)))
                .fold(f64::NEG_INFINITY, f64::max);
            RegionProposal { pixels, score }
        })
        .collect();
    // stable sort keeps raster order among equal scores
    out.sort_by(|a, b| b.score.total_cmp(&a.score));
    Ok(out)
}

/// One line of the proposal export. Field order is fixed:
/// `image_id, rank, score, bbox [x0, y0, x1, y1], area, runs [[y, x, len], ...]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProposalRecord {
    pub image_id: String,
    pub rank: usize,
    pub score: f64,
    pub bbox: [u32; 4],
    pub area: usize,
    pub runs: Vec<[u32; 3]>,
}

impl ProposalRecord {
    pub fn from_proposal(image_id: &str, rank: usize, p: &RegionProposal) -> Self {
        let b = p.bounding_box();
        ProposalRecord {
            image_id: image_id.to_string(),
            rank,
            score: p.score,
            bbox: [b.x0, b.y0, b.x1, b.y1],
            area: p.area(),
            runs: p
                .pixels
                .to_runs()
                .iter()
                .map(|r| [r.y, r.x, r.len])
                .collect(),
        }
    }

    pub fn to_proposal(&self) -> Result<RegionProposal> {
        let runs: Vec<Run> = self
            .runs
            .iter()
            .map(|&[y, x, len]| Run { y, x, len })
            .collect();
        let pixels = PixelSet::from_runs(&runs);
        if pixels.len() != self.area || pixels.is_empty() {
            return Err(Error::Manifest(format!(
                "proposal {} of {}: area {} but runs cover {} pixels",
                self.rank,
                self.image_id,
                self.area,
                pixels.len()
            )));
        }
        Ok(RegionProposal {
            pixels,
            score: self.score,
        })
    }
}

pub fn write_proposals<W: Write>(
    mut out: W,
    image_id: &str,
    proposals: &[RegionProposal],
) -> Result<()> {
    for (rank, p) in proposals.iter().enumerate() {
        let line = serde_json::to_string(&ProposalRecord::from_proposal(image_id, rank, p))?;
        writeln!(out, "{line}").map_err(|e| Error::io("<proposals>", e))?;
    }
    Ok(())
}

/// Reads a proposal file, grouped by image id in first-seen order.
pub fn read_proposals(path: impl AsRef<Path>) -> Result<Vec<(String, Vec<RegionProposal>)>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut groups: Vec<(String, Vec<RegionProposal>)> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: ProposalRecord = serde_json::from_str(line)
            .map_err(|e| Error::Manifest(format!("{}:{}: {e}", path.display(), i + 1)))?;
        let p = rec.to_proposal()?;
        match groups.last_mut() {
            Some((id, v)) if *id == rec.image_id => v.push(p),
            _ => {
                if groups.iter().any(|(id, _)| *id == rec.image_id) {
                    return Err(Error::Manifest(format!(
                        "{}:{}: records for {} are not contiguous",
                        path.display(),
                        i + 1,
                        rec.image_id
                    )));
                }
                groups.push((rec.image_id, vec![p]));
            }
        }
    }
    Ok(groups)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hm(w: usize, h: usize, v: Vec<f32>) -> Heatmap {
        Heatmap::new(w, h, v, 1).unwrap()
    }

    #[test]
    fn normalize_affine() {
        assert_eq!(
            normalize(&hm(3, 1, vec![2.0, 4.0, 6.0])).values,
            vec![0.0, 0.5, 1.0]
        );
    }

    #[test]
    fn normalize_constant_is_zero() {
        let n = normalize(&hm(2, 2, vec![5.0; 4]));
        assert_eq!(n.values, vec![0.0; 4]);
        assert!(n.normalized);
    }

    #[test]
    fn normalize_idempotent_on_unit_range() {
        let v = vec![0.0, 0.3, 1.0, 0.65];
        assert_eq!(normalize(&hm(4, 1, v.clone())).values, v);
    }

    #[test]
    fn threshold_boundaries() {
        let h = hm(4, 1, vec![0.6, 0.64, 0.65, 0.9]);
        assert_eq!(
            threshold(&h, 0.65).unwrap().data(),
            &[false, false, true, true]
        );
        assert!(threshold(&h, 0.0).unwrap().data().iter().all(|&b| b));
        assert_eq!(threshold(&h, 1.0).unwrap().count(), 0);
        let peaked = hm(3, 1, vec![0.2, 1.0, 1.0]);
        assert_eq!(
            threshold(&peaked, 1.0).unwrap().data(),
            &[false, true, true]
        );
        assert!(threshold(&h, 1.0 + 1e-9).is_err());
        assert!(threshold(&h, -0.1).is_err());
    }

    #[test]
    fn diagonal_pixels_connect() {
        let m = Mask::from_vec(2, 2, vec![true, false, false, true]).unwrap();
        assert_eq!(connected_components(&m).len(), 1);
    }

    #[test]
    fn gap_separates() {
        let m = Mask::from_vec(3, 1, vec![true, false, true]).unwrap();
        let cc = connected_components(&m);
        assert_eq!(cc.len(), 2);
        assert_eq!(cc[0].first(), Some(Pixel::new(0, 0)));
    }

    #[test]
    fn u_shape_merges_late() {
        // the two arms only meet on the bottom row
        let m = Mask::from_vec(
            3,
            3,
            vec![true, false, true, true, false, true, true, true, true],
        )
        .unwrap();
        let cc = connected_components(&m);
        assert_eq!(cc.len(), 1);
        assert_eq!(cc[0].len(), 7);
    }

    #[test]
    fn empty_mask() {
        assert!(connected_components(&Mask::new(4, 4)).is_empty());
    }

    fn bump(w: usize, h: usize, centres: &[(f32, f32)]) -> Heatmap {
        let v = (0..w * h)
            .map(|i| {
                let (x, y) = ((i % w) as f32, (i / w) as f32);
                centres
                    .iter()
                    .map(|&(cx, cy)| (-((x - cx).powi(2) + (y - cy).powi(2)) / 4.0).exp())
                    .fold(0.0, f32::max)
            })
            .collect();
        hm(w, h, v)
    }

    #[test]
    fn single_bump_single_proposal() {
        let h = bump(16, 16, &[(7.0, 8.0)]);
        let p = propose(&h, ProposalConfig::default()).unwrap();
        assert_eq!(p.len(), 1);
        assert_eq!(p[0].score, 1.0);
        assert!(p[0].pixels.contains(Pixel::new(7, 8)));
    }

    #[test]
    fn twin_bumps_equal_scores() {
        let h = bump(24, 12, &[(5.0, 6.0), (18.0, 6.0)]);
        let p = propose(&h, ProposalConfig::default()).unwrap();
        assert_eq!(p.len(), 2);
        assert_eq!(p[0].score, p[1].score);
        assert_eq!(p[0].area(), p[1].area());
        // raster tie-break: left bump first
        assert!(p[0].pixels.contains(Pixel::new(5, 6)));
    }

    #[test]
    fn hand_enumerated_eight_by_eight() {
        // raw values in [0, 20]; normalized = v / 20, so tau = 0.65 keeps v >= 13
        #[rustfmt::skip]
        let raw: [f32; 64] = [
             0,  0,  0,  0,  0,  0,  0,  0,
             0, 20, 14,  0,  0,  0,  0,  0,
             0, 13,  1,  0,  0, 16,  0,  0,
             0,  0, 15,  0,  0,  0, 12,  0,
             0,  0,  0,  0,  0,  0,  0,  0,
             0,  0,  0,  0, 14, 14,  0,  0,
             0,  0,  0,  0, 14,  0,  0, 18,
             0,  0,  0,  0,  0,  0,  0,  0,
        ].map(|v: i32| v as f32);
        let h = hm(8, 8, raw.to_vec());
        let p = propose(
            &h,
            ProposalConfig {
                threshold: 0.65,
                min_area: 1,
            },
        )
        .unwrap();
        let px = |pts: &[(u32, u32)]| {
            pts.iter()
                .map(|&(x, y)| Pixel::new(x, y))
                .collect::<PixelSet>()
        };
        let expect = [
            (px(&[(1, 1), (2, 1), (1, 2), (2, 3)]), 1.0),
            (px(&[(7, 6)]), 0.9),
            (px(&[(5, 2)]), 0.8),
            (px(&[(4, 5), (5, 5), (4, 6)]), 0.7),
        ];
        assert_eq!(p.len(), expect.len());
        for (got, (pixels, score)) in p.iter().zip(expect) {
            assert_eq!(got.pixels, pixels);
            assert!((got.score - score).abs() < 1e-6, "{} vs {score}", got.score);
        }
        // min_area drops the singletons
        let p = propose(
            &h,
            ProposalConfig {
                threshold: 0.65,
                min_area: 2,
            },
        )
        .unwrap();
        assert_eq!(p.len(), 2);
    }

    #[test]
    fn records_round_trip() {
        let h = bump(16, 16, &[(3.0, 4.0), (12.0, 11.0)]);
        let p = propose(&h, ProposalConfig::default()).unwrap();
        let mut buf = Vec::new();
        write_proposals(&mut buf, "img-1", &p).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.jsonl");
        std::fs::write(&path, &buf).unwrap();
        let back = read_proposals(&path).unwrap();
        assert_eq!(back.len(), 1);
        assert_eq!(back[0].0, "img-1");
        assert_eq!(back[0].1, p);
        let first = String::from_utf8(buf).unwrap();
        assert!(first.starts_with("{\"image_id\":\"img-1\",\"rank\":0,\"score\":"));
    }
}
