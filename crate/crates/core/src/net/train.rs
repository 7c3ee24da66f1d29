//! Mini-batch training loop.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::network::Network;
use crate::error::{Error, Result};
use crate::imaging::augment::{augment, AugmentParams};
use crate::nn::{lr_at_epoch, sgd_momentum_step, softmax_cross_entropy, OptimizerState, SgdConfig};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: SgdConfig,
    pub seed: u64,
    /// `None` disables augmentation.
    pub augmentation: Option<AugmentParams>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 10,
            batch_size: 16,
            optimizer: SgdConfig::default(),
            seed: 0,
            augmentation: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::InvalidArgument("epochs must be at least 1".into()));
        }
        if self.batch_size < 2 {
            return Err(Error::InvalidArgument(format!(
                "batch size must be at least 2 for batch norm, got {}",
                self.batch_size
            )));
        }
        self.optimizer.validate()
    }
}

/// One preprocessed `[C, H, W]` image with its class index.
#[derive(Debug, Clone)]
pub struct TrainSample {
    pub image: Tensor<f32>,
    pub label: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub lr: f64,
    /// Mean training loss over the samples seen this epoch.
    pub loss: f64,
    /// Training accuracy in train mode, before each step.
    pub accuracy: f64,
}

/// Trains `net` in place. Fully deterministic for a fixed seed.
pub fn train(
    net: &mut Network<f32>,
    samples: &[TrainSample],
    config: &TrainConfig,
) -> Result<Vec<EpochLog>> {
    config.validate()?;
    if samples.is_empty() {
        return Err(Error::InvalidArgument("training set is empty".into()));
    }
    let classes = net.classes();
    if let Some(bad) = samples.iter().find(|s| s.label >= classes) {
        return Err(Error::InvalidArgument(format!(
            "label {} outside [0, {classes})",
            bad.label
        )));
    }
    let shapes = net.param_shapes();
    let mut state = OptimizerState::<f32>::new(config.optimizer, shapes.iter().map(Vec::as_slice))?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut log = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        let lr = lr_at_epoch(&config.optimizer, epoch);
        order.shuffle(&mut rng);
        let (mut loss_sum, mut correct, mut seen) = (0.0, 0usize, 0usize);
        for batch_idx in order.chunks(config.batch_size) {
            if batch_idx.len() < 2 {
                continue;
            }
            let images: Vec<Tensor<f32>> = batch_idx
                .iter()
                .map(|&i| match &config.augmentation {
                    Some(p) => augment(&samples[i].image, rng.random(), p),
                    None => Ok(samples[i].image.clone()),
                })
                .collect::<Result<_>>()?;
            let labels: Vec<usize> = batch_idx.iter().map(|&i| samples[i].label).collect();
            let batch = Tensor::stack(&images.iter().collect::<Vec<_>>())?;

            let (out, trace) = net.forward_train(&batch)?;
            let (loss, grad_logits) = softmax_cross_entropy(&out.logits, &labels)?;
            for (row, &label) in out.logits.data().chunks(classes).zip(&labels) {
                let pred = argmax(row);
                correct += usize::from(pred == label);
            }
            loss_sum += loss * labels.len() as f64;
            seen += labels.len();

            let grads = net.backward(&trace, &grad_logits)?;
            let grad_refs = grads.tensors();
            sgd_momentum_step(&mut net.params_mut(), &grad_refs, &mut state, lr)?;
        }
        let entry = EpochLog {
            epoch,
            lr,
            loss: loss_sum / seen.max(1) as f64,
            accuracy: correct as f64 / seen.max(1) as f64,
        };
        log::info!(
            "epoch {} lr {:.6} loss {:.4} acc {:.3}",
            entry.epoch,
            entry.lr,
            entry.loss,
            entry.accuracy
        );
        log.push(entry);
    }
    Ok(log)
}

pub(crate) fn argmax(row: &[f32]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::spec::{ConvSpec, LayerSpec, NetworkSpec};

    fn blob_spec() -> NetworkSpec {
        NetworkSpec {
            input_height: 16,
            input_width: 16,
            input_channels: 1,
            layers: vec![
                LayerSpec::Conv(ConvSpec::new(4, 3, 1)),
                LayerSpec::Conv(ConvSpec::new(8, 3, 2)),
            ],
            classes: 2,
            min_resolution: 8,
        }
    }

    /// Bright blob vs. plain noise.
    fn blobs(n: usize, seed: u64) -> Vec<TrainSample> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|i| {
                let label = i % 2;
                let (cx, cy) = (rng.random_range(4.0..12.0), rng.random_range(4.0..12.0));
                let data = (0..256)
                    .map(|p| {
                        let (x, y) = ((p % 16) as f32, (p / 16) as f32);
                        let noise = rng.random_range(-0.3f32..0.3);
                        let blob = if label == 1 && (x - cx).powi(2) + (y - cy).powi(2) < 5.0 {
                            2.0
                        } else {
                            0.0
                        };
                        noise + blob
                    })
                    .collect();
                TrainSample {
                    image: Tensor::from_vec(&[1, 16, 16], data).unwrap(),
                    label,
                }
            })
            .collect()
    }

    #[test]
    fn loss_decreases_on_separable_blobs() {
        let data = blobs(200, 1);
        let mut net = Network::build(blob_spec(), 5).unwrap();
        let cfg = TrainConfig {
            epochs: 10,
            batch_size: 10,
            seed: 3,
            ..TrainConfig::default()
        };
        let log = train(&mut net, &data, &cfg).unwrap();
        assert_eq!(log.len(), 10);
        assert!(log.last().unwrap().loss < log[0].loss, "{log:?}");
        for e in &log {
            assert_eq!(e.lr, lr_at_epoch(&cfg.optimizer, e.epoch));
        }
    }

    #[test]
    fn training_is_deterministic() {
        let data = blobs(40, 2);
        let cfg = TrainConfig {
            epochs: 2,
            batch_size: 8,
            seed: 11,
            augmentation: Some(AugmentParams::default()),
            ..TrainConfig::default()
        };
        let mut a = Network::build(blob_spec(), 5).unwrap();
        let mut b = Network::build(blob_spec(), 5).unwrap();
        let la = train(&mut a, &data, &cfg).unwrap();
        let lb = train(&mut b, &data, &cfg).unwrap();
        assert_eq!(la, lb);
        assert_eq!(a.checksum(), b.checksum());
    }

    #[test]
    fn rejects_bad_configs() {
        let data = blobs(4, 0);
        let mut net = Network::build(blob_spec(), 5).unwrap();
        let zero_epochs = TrainConfig {
            epochs: 0,
            ..TrainConfig::default()
        };
        assert!(train(&mut net, &data, &zero_epochs).is_err());
        let tiny_batch = TrainConfig {
            batch_size: 1,
            ..TrainConfig::default()
        };
        assert!(train(&mut net, &data, &tiny_batch).is_err());
        assert!(train(&mut net, &[], &TrainConfig::default()).is_err());
    }
}
