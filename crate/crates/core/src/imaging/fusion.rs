use crate::error::{Error, Result};
use crate::eval::{GroundTruthRegion, LesionType};
use crate::pixel::{Mask, PixelSet};
use crate::proposal::connected_components;

/// Fraction of experts marking each pixel, row-major.
pub fn confidence_map(masks: &[Mask]) -> Result<Vec<f32>> {
    let first = masks
        .first()
        .ok_or_else(|| Error::InvalidArgument("no expert masks to fuse".into()))?;
    let (w, h) = (first.width(), first.height());
    if let Some(m) = masks.iter().find(|m| (m.width(), m.height()) != (w, h)) {
        return Err(Error::Shape(format!(
            "expert masks disagree in size: {w}x{h} vs {}x{}",
            m.width(),
            m.height()
        )));
    }
    let n = masks.len() as f32;
    Ok((0..w * h)
        .map(|i| masks.iter().filter(|m| m.data()[i]).count() as f32 / n)
        .collect())
}

/// Keeps pixels marked by at least three quarters of the experts and
/// splits them into 8-connected regions. Each region carries the fused
/// confidence of its pixels.
pub fn fuse_expert_masks(
    masks: &[Mask],
    lesion_type: LesionType,
) -> Result<Vec<GroundTruthRegion>> {
    let conf = confidence_map(masks)?;
    let n = masks.len();
    let (w, h) = (masks[0].width(), masks[0].height());
    let keep: Vec<bool> = (0..w * h)
        .map(|i| 4 * masks.iter().filter(|m| m.data()[i]).count() >= 3 * n)
        .collect();
    let fused = Mask::from_vec(w, h, keep)?;
    connected_components(&fused)
        .into_iter()
        .map(|pixels: PixelSet| {
            let c = pixels
                .iter()
                .map(|p| conf[p.y as usize * w + p.x as usize])
                .collect();
            GroundTruthRegion::new(pixels, lesion_type, c)
        })
        .collect()
}
