//! Inference glue: one preprocessed image in, classifier score, heatmap and
//! region proposals out.

use rayon::prelude::*;

use crate::cam::{class_activation_map, Heatmap, DEFAULT_CAM_CLASS};
use crate::error::Result;
use crate::eval::ImageResult;
use crate::imaging::LabeledItem;
use crate::net::Network;
use crate::nn::softmax;
use crate::proposal::{propose, ProposalConfig, RegionProposal};
use crate::tensor::Tensor;

#[derive(Debug, Clone)]
pub struct Analysis {
    /// Softmax probability of the disease class.
    pub score: f64,
    pub heatmap: Heatmap,
    pub proposals: Vec<RegionProposal>,
}

pub fn analyze(
    net: &Network<f32>,
    image: &Tensor<f32>,
    config: ProposalConfig,
) -> Result<Analysis> {
    let cam = class_activation_map(net, image, DEFAULT_CAM_CLASS)?;
    let logits: Vec<f64> = cam.logits.iter().map(|&v| f64::from(v)).collect();
    let probs = softmax(&Tensor::from_vec(&[1, logits.len()], logits)?)?;
    let proposals = propose(&cam.heatmap, config)?;
    Ok(Analysis {
        score: probs[0][DEFAULT_CAM_CLASS],
        heatmap: cam.heatmap,
        proposals,
    })
}

/// Runs [`analyze`] over labelled items, ready for [`crate::eval::report`].
pub fn image_results(
    net: &Network<f32>,
    items: &[LabeledItem],
    config: ProposalConfig,
) -> Result<Vec<ImageResult>> {
    items
        .par_iter()
        .map(|item| {
            let a = analyze(net, &item.image.tensor, config)?;
            Ok(ImageResult {
                id: item.id().to_string(),
                diseased: item.label.is_diseased(),
                score: a.score,
                proposals: a.proposals,
                ground_truth: item.ground_truth.clone(),
            })
        })
        .collect()
}
