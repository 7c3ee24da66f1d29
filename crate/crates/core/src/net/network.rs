//! Instantiated network: parameters, forward passes, and hand-derived
//! backward pass.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::spec::{Activation, ConvSpec, NetworkSpec};
use crate::error::{Error, Result};
use crate::nn::{
    batchnorm_backward, batchnorm_forward, batchnorm_infer, batchnorm_train, conv2d_backward,
    conv2d_forward, dense_backward, dense_forward, gap_backward, gap_forward, maxpool_backward,
    maxpool_forward, relu_backward, relu_forward, softmax, BatchNormParams, BnCache, ConvCache,
    MaxPoolCache, Mode, Param, RunningStats,
};
use crate::tensor::{Scalar, Tensor};

#[derive(Debug, Clone, PartialEq)]
pub struct BatchNormLayer<T: Scalar> {
    pub gamma: Tensor<T>,
    pub beta: Tensor<T>,
    pub running: RunningStats<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer<T: Scalar> {
    pub spec: ConvSpec,
    pub kernels: Tensor<T>,
    /// Present only when the layer has no batch norm.
    pub bias: Option<Tensor<T>>,
    pub batch_norm: Option<BatchNormLayer<T>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network<T: Scalar = f32> {
    pub spec: NetworkSpec,
    pub layers: Vec<ConvLayer<T>>,
    /// `[C, K]` classifier weights on the pooled feature maps.
    pub classifier_weights: Tensor<T>,
    pub classifier_bias: Tensor<T>,
    pub bn_params: BatchNormParams,
}

#[derive(Debug, Clone)]
pub struct ForwardOutput<T: Scalar> {
    /// `[N, C]`
    pub logits: Tensor<T>,
    /// `[N, K, u, v]`, post-activation output of the last conv block.
    pub feature_maps: Tensor<T>,
}

#[derive(Debug, Clone)]
struct LayerTrace<T: Scalar> {
    conv: ConvCache<T>,
    bn: Option<BnCache<T>>,
    pre_activation: Option<Tensor<T>>,
    pool: Option<MaxPoolCache>,
}

/// Activations cached by [`Network::forward_train`] for backward.
#[derive(Debug, Clone)]
pub struct Trace<T: Scalar> {
    layers: Vec<LayerTrace<T>>,
    feature_shape: Vec<usize>,
    pooled: Tensor<T>,
}

#[derive(Debug, Clone)]
pub struct LayerGrads<T: Scalar> {
    pub kernels: Tensor<T>,
    pub bias: Option<Tensor<T>>,
    pub gamma: Option<Tensor<T>>,
    pub beta: Option<Tensor<T>>,
}

#[derive(Debug, Clone)]
pub struct Gradients<T: Scalar> {
    pub layers: Vec<LayerGrads<T>>,
    pub classifier_weights: Tensor<T>,
    pub classifier_bias: Tensor<T>,
    pub input: Tensor<T>,
}

impl<T: Scalar> Gradients<T> {
    /// Same order as [`Network::params_mut`].
    pub fn tensors(&self) -> Vec<&Tensor<T>> {
        let mut out = Vec::new();
        for l in &self.layers {
            out.push(&l.kernels);
            out.extend(l.bias.iter());
            out.extend(l.gamma.iter());
            out.extend(l.beta.iter());
        }
        out.push(&self.classifier_weights);
        out.push(&self.classifier_bias);
        out
    }
}

fn he_normal<T: Scalar>(rng: &mut ChaCha8Rng, shape: &[usize], fan_in: usize) -> Tensor<T> {
    let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("positive std");
    let len = shape.iter().product();
    Tensor::from_vec(
        shape,
        (0..len)
            .map(|_| T::from_f64_lossy(normal.sample(rng)))
            .collect(),
    )
    .expect("length matches shape")
}

impl<T: Scalar> Network<T> {
    /// Validates `spec` and draws parameters deterministically from `seed`.
    pub fn build(spec: NetworkSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut channels = spec.input_channels;
        let mut layers = Vec::new();
        for conv in spec.conv_layers() {
            let fan_in = channels * conv.kernel * conv.kernel;
            let kernels = he_normal(
                &mut rng,
                &[conv.filters, channels, conv.kernel, conv.kernel],
                fan_in,
            );
            let (bias, batch_norm) = if conv.batch_norm {
                (
                    None,
                    Some(BatchNormLayer {
                        gamma: Tensor::full(&[conv.filters], T::one()),
                        beta: Tensor::zeros(&[conv.filters]),
                        running: RunningStats::new(conv.filters),
                    }),
                )
            } else {
                (Some(Tensor::zeros(&[conv.filters])), None)
            };
            layers.push(ConvLayer {
                spec: *conv,
                kernels,
                bias,
                batch_norm,
            });
            channels = conv.filters;
        }
        let classifier_weights = he_normal(&mut rng, &[spec.classes, channels], channels);
        let classifier_bias = Tensor::zeros(&[spec.classes]);
        Ok(Network {
            spec,
            layers,
            classifier_weights,
            classifier_bias,
            bn_params: BatchNormParams::default(),
        })
    }

    pub fn feature_count(&self) -> usize {
        self.classifier_weights.shape()[1]
    }

    pub fn classes(&self) -> usize {
        self.spec.classes
    }

    fn check_input(&self, batch: &Tensor<T>) -> Result<()> {
        let (_, c, h, w) = batch.dims4()?;
        let s = &self.spec;
        if (c, h, w) != (s.input_channels, s.input_height, s.input_width) {
            return Err(Error::Shape(format!(
                "network expects [N, {}, {}, {}] input, got {:?}",
                s.input_channels,
                s.input_height,
                s.input_width,
                batch.shape()
            )));
        }
        Ok(())
    }

    /// Forward pass that never mutates the network. In `Train` mode batch
    /// statistics are used but running statistics are left untouched.
    pub fn forward(&self, batch: &Tensor<T>, mode: Mode) -> Result<ForwardOutput<T>> {
        self.check_input(batch)?;
        let mut x = batch.clone();
        for layer in &self.layers {
            let c = &layer.spec;
            x = conv2d_forward(
                &x,
                &layer.kernels,
                layer.bias.as_ref(),
                c.stride,
                c.padding(),
            )?;
            if let Some(bn) = &layer.batch_norm {
                x = match mode {
                    Mode::Infer => batchnorm_infer(
                        &x,
                        &bn.gamma,
                        &bn.beta,
                        &bn.running,
                        self.bn_params.epsilon,
                    )?,
                    Mode::Train => {
                        batchnorm_train(&x, &bn.gamma, &bn.beta, self.bn_params.epsilon)?.0
                    }
                };
            }
            if c.activation == Activation::Relu {
                x = relu_forward(&x);
            }
            if let Some(size) = c.pool {
                x = maxpool_forward(&x, size)?.0;
            }
        }
        let pooled = gap_forward(&x)?;
        let logits = dense_forward(&pooled, &self.classifier_weights, &self.classifier_bias)?;
        Ok(ForwardOutput {
            logits,
            feature_maps: x,
        })
    }

    /// Train-mode forward that updates running statistics and keeps the
    /// activations needed by [`Network::backward`].
    pub fn forward_train(&mut self, batch: &Tensor<T>) -> Result<(ForwardOutput<T>, Trace<T>)> {
        self.check_input(batch)?;
        let bn_params = self.bn_params;
        let mut x = batch.clone();
        let mut traces = Vec::with_capacity(self.layers.len());
        for layer in &mut self.layers {
            let c = layer.spec;
            let out = conv2d_forward(
                &x,
                &layer.kernels,
                layer.bias.as_ref(),
                c.stride,
                c.padding(),
            )?;
            let conv = ConvCache {
                input: std::mem::replace(&mut x, out),
                kernels: layer.kernels.clone(),
            };
            let mut bn_cache = None;
            if let Some(bn) = &mut layer.batch_norm {
                let (out, cache) = batchnorm_forward(
                    &x,
                    &bn.gamma,
                    &bn.beta,
                    &mut bn.running,
                    Mode::Train,
                    bn_params,
                )?;
                x = out;
                bn_cache = cache;
            }
            let mut pre_activation = None;
            if c.activation == Activation::Relu {
                let out = relu_forward(&x);
                pre_activation = Some(std::mem::replace(&mut x, out));
            }
            let mut pool = None;
            if let Some(size) = c.pool {
                let (out, cache) = maxpool_forward(&x, size)?;
                x = out;
                pool = Some(cache);
            }
            traces.push(LayerTrace {
                conv,
                bn: bn_cache,
                pre_activation,
                pool,
            });
        }
        let pooled = gap_forward(&x)?;
        let logits = dense_forward(&pooled, &self.classifier_weights, &self.classifier_bias)?;
        let trace = Trace {
            layers: traces,
            feature_shape: x.shape().to_vec(),
            pooled,
        };
        Ok((
            ForwardOutput {
                logits,
                feature_maps: x,
            },
            trace,
        ))
    }

    pub fn backward(&self, trace: &Trace<T>, grad_logits: &Tensor<T>) -> Result<Gradients<T>> {
        if trace.layers.len() != self.layers.len() {
            return Err(Error::Shape("trace does not belong to this network".into()));
        }
        let head = dense_backward(grad_logits, &trace.pooled, &self.classifier_weights)?;
        let mut grad = gap_backward(&head.input, &trace.feature_shape)?;
        let mut layer_grads = Vec::with_capacity(self.layers.len());
        for (layer, t) in self.layers.iter().zip(&trace.layers).rev() {
            let c = &layer.spec;
            if c.pool.is_some() {
                grad = maxpool_backward(&grad, t.pool.as_ref())?;
            }
            if c.activation == Activation::Relu {
                let pre = t
                    .pre_activation
                    .as_ref()
                    .ok_or(Error::MissingCache("relu"))?;
                grad = relu_backward(&grad, pre)?;
            }
            let (mut gamma, mut beta) = (None, None);
            if layer.batch_norm.is_some() {
                let g = batchnorm_backward(&grad, t.bn.as_ref())?;
                grad = g.input;
                gamma = Some(g.gamma);
                beta = Some(g.beta);
            }
            let g = conv2d_backward(&grad, Some(&t.conv), c.stride, c.padding())?;
            grad = g.input;
            layer_grads.push(LayerGrads {
                kernels: g.kernels,
                bias: layer.bias.as_ref().map(|_| g.bias),
                gamma,
                beta,
            });
        }
        layer_grads.reverse();
        Ok(Gradients {
            layers: layer_grads,
            classifier_weights: head.weights,
            classifier_bias: head.bias,
            input: grad,
        })
    }

    /// Trainable tensors; kernels and classifier weights are decayed,
    /// biases and batch-norm affine parameters are not.
    pub fn params_mut(&mut self) -> Vec<Param<'_, T>> {
        let mut out = Vec::new();
        for l in &mut self.layers {
            out.push(Param {
                value: &mut l.kernels,
                decay: true,
            });
            if let Some(b) = &mut l.bias {
                out.push(Param {
                    value: b,
                    decay: false,
                });
            }
            if let Some(bn) = &mut l.batch_norm {
                out.push(Param {
                    value: &mut bn.gamma,
                    decay: false,
                });
                out.push(Param {
                    value: &mut bn.beta,
                    decay: false,
                });
            }
        }
        out.push(Param {
            value: &mut self.classifier_weights,
            decay: true,
        });
        out.push(Param {
            value: &mut self.classifier_bias,
            decay: false,
        });
        out
    }

    pub fn param_shapes(&self) -> Vec<Vec<usize>> {
        let mut out = Vec::new();
        for l in &self.layers {
            out.push(l.kernels.shape().to_vec());
            if let Some(b) = &l.bias {
                out.push(b.shape().to_vec());
            }
            if let Some(bn) = &l.batch_norm {
                out.push(bn.gamma.shape().to_vec());
                out.push(bn.beta.shape().to_vec());
            }
        }
        out.push(self.classifier_weights.shape().to_vec());
        out.push(self.classifier_bias.shape().to_vec());
        out
    }

    /// Softmax class probabilities from an inference pass.
    pub fn predict_proba(&self, batch: &Tensor<T>) -> Result<Vec<Vec<f64>>> {
        softmax(&self.forward(batch, Mode::Infer)?.logits)
    }

    pub fn cast<U: Scalar>(&self) -> Network<U> {
        Network {
            spec: self.spec.clone(),
            layers: self
                .layers
                .iter()
                .map(|l| ConvLayer {
                    spec: l.spec,
                    kernels: l.kernels.cast(),
                    bias: l.bias.as_ref().map(Tensor::cast),
                    batch_norm: l.batch_norm.as_ref().map(|bn| BatchNormLayer {
                        gamma: bn.gamma.cast(),
                        beta: bn.beta.cast(),
                        running: RunningStats {
                            mean: bn.running.mean.cast(),
                            var: bn.running.var.cast(),
                        },
                    }),
                })
                .collect(),
            classifier_weights: self.classifier_weights.cast(),
            classifier_bias: self.classifier_bias.cast(),
            bn_params: self.bn_params,
        }
    }

    /// FNV-1a over the bit patterns of every parameter and running statistic.
    pub fn checksum(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut eat = |t: &Tensor<T>| {
            for v in t.data() {
                for b in v.as_f64().to_bits().to_le_bytes() {
                    h ^= u64::from(b);
                    h = h.wrapping_mul(0x0000_0100_0000_01b3);
                }
            }
        };
        for l in &self.layers {
            eat(&l.kernels);
            if let Some(b) = &l.bias {
                eat(b);
            }
            if let Some(bn) = &l.batch_norm {
                eat(&bn.gamma);
                eat(&bn.beta);
                eat(&bn.running.mean);
                eat(&bn.running.var);
            }
        }
        eat(&self.classifier_weights);
        eat(&self.classifier_bias);
        h
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::spec::LayerSpec;

    fn small_spec() -> NetworkSpec {
        NetworkSpec {
            input_height: 8,
            input_width: 8,
            input_channels: 2,
            layers: vec![
                LayerSpec::Conv(ConvSpec::new(3, 3, 1)),
                LayerSpec::Conv(ConvSpec {
                    batch_norm: false,
                    ..ConvSpec::new(4, 3, 1)
                }),
            ],
            classes: 2,
            min_resolution: 4,
        }
    }

    #[test]
    fn toy_forward_on_zeros_is_finite() {
        let net = Network::<f32>::build(NetworkSpec::toy(), 1).unwrap();
        assert_eq!(net.feature_count(), 32);
        let out = net
            .forward(&Tensor::zeros(&[2, 1, 64, 64]), Mode::Infer)
            .unwrap();
        assert_eq!(out.logits.shape(), &[2, 2]);
        assert_eq!(out.feature_maps.shape(), &[2, 32, 16, 16]);
        assert!(out.logits.all_finite());
        // zero input, zero biases and betas: everything collapses to zero
        assert!(out.logits.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn paper_shaped_build() {
        let net = Network::<f32>::build(NetworkSpec::paper_shaped(), 0).unwrap();
        assert_eq!(net.feature_count(), 1024);
        assert_eq!(net.spec.feature_shape().unwrap(), (1024, 32, 32));
    }

    #[test]
    fn build_is_deterministic() {
        let a = Network::<f32>::build(NetworkSpec::toy(), 42).unwrap();
        let b = Network::<f32>::build(NetworkSpec::toy(), 42).unwrap();
        let c = Network::<f32>::build(NetworkSpec::toy(), 43).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.checksum(), c.checksum());
    }

    #[test]
    fn wrong_input_size_rejected() {
        let net = Network::<f32>::build(NetworkSpec::toy(), 1).unwrap();
        assert!(matches!(
            net.forward(&Tensor::zeros(&[1, 1, 32, 32]), Mode::Infer),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn logits_are_gap_then_dense() {
        let mut net = Network::<f64>::build(small_spec(), 3).unwrap();
        net.classifier_bias = Tensor::from_vec(&[2], vec![0.3, -0.2]).unwrap();
        let x = Tensor::from_vec(
            &[1, 2, 8, 8],
            (0..128)
                .map(|i| ((i * 37) % 11) as f64 / 5.0 - 1.0)
                .collect(),
        )
        .unwrap();
        let out = net.forward(&x, Mode::Infer).unwrap();
        let (k, u, v) = (4, 8, 8);
        for c in 0..2 {
            let mut acc = 0.0;
            for ki in 0..k {
                let s: f64 = out.feature_maps.data()[ki * u * v..(ki + 1) * u * v]
                    .iter()
                    .sum();
                acc += net.classifier_weights[c * k + ki] * s;
            }
            let expect = acc / (u * v) as f64 + net.classifier_bias[c];
            assert!((out.logits[c] - expect).abs() < 1e-10);
        }
    }

    #[test]
    fn network_gradient_matches_finite_differences() {
        let net = Network::<f64>::build(small_spec(), 9).unwrap();
        let x = Tensor::from_vec(
            &[3, 2, 8, 8],
            (0..384)
                .map(|i| ((i * 7919) % 97) as f64 / 48.0 - 1.0)
                .collect(),
        )
        .unwrap();
        let labels = [0usize, 1, 1];
        let loss_of = |n: &Network<f64>| {
            let out = n.forward(&x, Mode::Train).unwrap();
            crate::nn::softmax_cross_entropy(&out.logits, &labels)
                .unwrap()
                .0
        };
        let (out, trace) = net.clone().forward_train(&x).unwrap();
        let (_, gl) = crate::nn::softmax_cross_entropy(&out.logits, &labels).unwrap();
        let grads = net.backward(&trace, &gl).unwrap();
        let analytic: Vec<Vec<f64>> = grads.tensors().iter().map(|t| t.data().to_vec()).collect();
        let h = 1e-5;
        for (pi, a) in analytic.iter().enumerate() {
            for i in (0..a.len()).step_by(5) {
                let mut plus = net.clone();
                plus.params_mut()[pi].value[i] += h;
                let mut minus = net.clone();
                minus.params_mut()[pi].value[i] -= h;
                let numeric = (loss_of(&plus) - loss_of(&minus)) / (2.0 * h);
                let denom = a[i].abs().max(numeric.abs()).max(1e-6);
                assert!(
                    (a[i] - numeric).abs() / denom < 1e-4,
                    "param {pi}[{i}]: {} vs {numeric}",
                    a[i]
                );
            }
        }
    }
}
