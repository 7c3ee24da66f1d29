//! Per-channel batch normalization over `[N, C, H, W]`.

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

pub const DEFAULT_EPSILON: f64 = 1e-5;
pub const DEFAULT_RUNNING_MOMENTUM: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

/// Exponential moving averages used in inference mode.
#[derive(Debug, Clone, PartialEq)]
pub struct RunningStats<T: Scalar> {
    pub mean: Tensor<T>,
    pub var: Tensor<T>,
}

impl<T: Scalar> RunningStats<T> {
    pub fn new(channels: usize) -> Self {
        RunningStats {
            mean: Tensor::zeros(&[channels]),
            var: Tensor::full(&[channels], T::one()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatchNormParams {
    pub epsilon: f64,
    /// Weight on the previous running value.
    pub momentum: f64,
}

impl Default for BatchNormParams {
    fn default() -> Self {
        BatchNormParams {
            epsilon: DEFAULT_EPSILON,
            momentum: DEFAULT_RUNNING_MOMENTUM,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BnCache<T: Scalar> {
    xhat: Tensor<T>,
    inv_std: Vec<f64>,
    gamma: Tensor<T>,
}

#[derive(Debug, Clone)]
pub struct BnGrads<T: Scalar> {
    pub input: Tensor<T>,
    pub gamma: Tensor<T>,
    pub beta: Tensor<T>,
}

fn check_affine<T: Scalar>(c: usize, gamma: &Tensor<T>, beta: &Tensor<T>) -> Result<()> {
    if gamma.shape() != [c] || beta.shape() != [c] {
        return Err(Error::Shape(format!(
            "batch norm over {c} channels got gamma {:?} beta {:?}",
            gamma.shape(),
            beta.shape()
        )));
    }
    Ok(())
}

/// Normalizes with batch statistics (train) or running statistics (infer).
/// Train mode updates `running` and returns the cache for backward.
pub fn batchnorm_forward<T: Scalar>(
    input: &Tensor<T>,
    gamma: &Tensor<T>,
    beta: &Tensor<T>,
    running: &mut RunningStats<T>,
    mode: Mode,
    params: BatchNormParams,
) -> Result<(Tensor<T>, Option<BnCache<T>>)> {
    match mode {
        Mode::Infer => Ok((
            batchnorm_infer(input, gamma, beta, running, params.epsilon)?,
            None,
        )),
        Mode::Train => {
            let (out, cache, mean, var) = batchnorm_train(input, gamma, beta, params.epsilon)?;
            let m = params.momentum;
            let count = (input.len() / gamma.len()) as f64;
            for (c, (&mu, &v)) in mean.iter().zip(&var).enumerate() {
                let unbiased = v * count / (count - 1.0);
                running.mean[c] = T::from_f64_lossy(m * running.mean[c].as_f64() + (1.0 - m) * mu);
                running.var[c] =
                    T::from_f64_lossy(m * running.var[c].as_f64() + (1.0 - m) * unbiased);
            }
            Ok((out, Some(cache)))
        }
    }
}

/// Inference-mode normalization; never mutates, safe to share.
pub fn batchnorm_infer<T: Scalar>(
    input: &Tensor<T>,
    gamma: &Tensor<T>,
    beta: &Tensor<T>,
    running: &RunningStats<T>,
    epsilon: f64,
) -> Result<Tensor<T>> {
    let (_, c, h, w) = input.dims4()?;
    check_affine(c, gamma, beta)?;
    let plane = h * w;
    let scale: Vec<T> = (0..c)
        .map(|ci| {
            T::from_f64_lossy(gamma[ci].as_f64() / (running.var[ci].as_f64() + epsilon).sqrt())
        })
        .collect();
    let shift: Vec<T> = (0..c)
        .map(|ci| {
            T::from_f64_lossy(beta[ci].as_f64() - running.mean[ci].as_f64() * scale[ci].as_f64())
        })
        .collect();
    let mut out = input.clone();
    for (i, chunk) in out.data_mut().chunks_mut(plane.max(1)).enumerate() {
        let ci = i % c;
        chunk
            .iter_mut()
            .for_each(|v| *v = *v * scale[ci] + shift[ci]);
    }
    Ok(out)
}

/// Returns (output, cache, per-channel batch mean, per-channel biased variance).
#[allow(clippy::type_complexity)]
pub fn batchnorm_train<T: Scalar>(
    input: &Tensor<T>,
    gamma: &Tensor<T>,
    beta: &Tensor<T>,
    epsilon: f64,
) -> Result<(Tensor<T>, BnCache<T>, Vec<f64>, Vec<f64>)> {
    let (n, c, h, w) = input.dims4()?;
    check_affine(c, gamma, beta)?;
    let plane = h * w;
    let count = n * plane;
    if count < 2 {
        return Err(Error::InvalidArgument(format!(
            "batch norm in train mode needs N*H*W >= 2, got {count}"
        )));
    }
    let x = input.data();
    let mut mean = vec![0.0f64; c];
    let mut var = vec![0.0f64; c];
    for ni in 0..n {
        for ci in 0..c {
            let base = (ni * c + ci) * plane;
            mean[ci] += x[base..base + plane]
                .iter()
                .map(|v| v.as_f64())
                .sum::<f64>();
        }
    }
    mean.iter_mut().for_each(|m| *m /= count as f64);
    for ni in 0..n {
        for ci in 0..c {
            let base = (ni * c + ci) * plane;
            var[ci] += x[base..base + plane]
                .iter()
                .map(|v| (v.as_f64() - mean[ci]).powi(2))
                .sum::<f64>();
        }
    }
    var.iter_mut().for_each(|v| *v /= count as f64);
    let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + epsilon).sqrt()).collect();

    let mut xhat = Tensor::zeros(input.shape());
    let mut out = Tensor::zeros(input.shape());
    for ni in 0..n {
        for ci in 0..c {
            let base = (ni * c + ci) * plane;
            let (g, b) = (gamma[ci].as_f64(), beta[ci].as_f64());
            for i in base..base + plane {
                let xh = (x[i].as_f64() - mean[ci]) * inv_std[ci];
                xhat[i] = T::from_f64_lossy(xh);
                out[i] = T::from_f64_lossy(g * xh + b);
            }
        }
    }
    let cache = BnCache {
        xhat,
        inv_std,
        gamma: gamma.clone(),
    };
    Ok((out, cache, mean, var))
}

pub fn batchnorm_backward<T: Scalar>(
    grad_out: &Tensor<T>,
    cache: Option<&BnCache<T>>,
) -> Result<BnGrads<T>> {
    let cache = cache.ok_or(Error::MissingCache("batchnorm"))?;
    if grad_out.shape() != cache.xhat.shape() {
        return Err(Error::Shape(format!(
            "batch norm grad_out {:?} != forward output {:?}",
            grad_out.shape(),
            cache.xhat.shape()
        )));
    }
    let (n, c, h, w) = grad_out.dims4()?;
    let plane = h * w;
    let count = (n * plane) as f64;
    let dy = grad_out.data();
    let xhat = cache.xhat.data();

    let mut sum_dy = vec![0.0f64; c];
    let mut sum_dy_xhat = vec![0.0f64; c];
    for ni in 0..n {
        for ci in 0..c {
            let base = (ni * c + ci) * plane;
            for i in base..base + plane {
                sum_dy[ci] += dy[i].as_f64();
                sum_dy_xhat[ci] += dy[i].as_f64() * xhat[i].as_f64();
            }
        }
    }
    let mut grad_input = Tensor::zeros(grad_out.shape());
    for ni in 0..n {
        for ci in 0..c {
            let base = (ni * c + ci) * plane;
            let k = cache.gamma[ci].as_f64() * cache.inv_std[ci] / count;
            for i in base..base + plane {
                let v = count * dy[i].as_f64() - sum_dy[ci] - xhat[i].as_f64() * sum_dy_xhat[ci];
                grad_input[i] = T::from_f64_lossy(k * v);
            }
        }
    }
    let to_tensor = |v: Vec<f64>| {
        Tensor::from_vec(&[c], v.into_iter().map(T::from_f64_lossy).collect()).expect("length c")
    };
    Ok(BnGrads {
        input: grad_input,
        gamma: to_tensor(sum_dy_xhat),
        beta: to_tensor(sum_dy),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(shape: &[usize], seed: u64) -> Tensor<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let len = shape.iter().product();
        Tensor::from_vec(
            shape,
            (0..len).map(|_| rng.random_range(-3.0..5.0)).collect(),
        )
        .unwrap()
    }

    fn channel_moments(t: &Tensor<f64>, ci: usize) -> (f64, f64) {
        let (n, c, h, w) = t.dims4().unwrap();
        let vals: Vec<f64> = (0..n)
            .flat_map(|ni| {
                let base = (ni * c + ci) * h * w;
                t.data()[base..base + h * w].to_vec()
            })
            .collect();
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / vals.len() as f64;
        (mean, var)
    }

    #[test]
    fn unit_affine_standardizes_each_channel() {
        let x = random(&[4, 3, 5, 5], 1);
        let g = Tensor::full(&[3], 1.0);
        let b = Tensor::zeros(&[3]);
        let (y, _, _, _) = batchnorm_train(&x, &g, &b, 0.0).unwrap();
        for ci in 0..3 {
            let (m, v) = channel_moments(&y, ci);
            assert!(m.abs() < 1e-6, "mean {m}");
            assert!((v - 1.0).abs() < 1e-6, "var {v}");
        }
    }

    #[test]
    fn affine_shift_and_scale() {
        let (x, _, _, _) = batchnorm_train(
            &random(&[3, 2, 4, 4], 2),
            &Tensor::full(&[2], 1.0),
            &Tensor::zeros(&[2]),
            0.0,
        )
        .unwrap();
        let (y, _, _, _) =
            batchnorm_train(&x, &Tensor::full(&[2], 2.0), &Tensor::full(&[2], 3.0), 0.0).unwrap();
        for ci in 0..2 {
            let (m, v) = channel_moments(&y, ci);
            assert!((m - 3.0).abs() < 1e-9);
            assert!((v.sqrt() - 2.0).abs() < 1e-9);
        }
    }

    #[test]
    fn train_mode_needs_two_values_per_channel() {
        let x = Tensor::<f64>::zeros(&[1, 2, 1, 1]);
        let mut rs = RunningStats::new(2);
        let err = batchnorm_forward(
            &x,
            &Tensor::full(&[2], 1.0),
            &Tensor::zeros(&[2]),
            &mut rs,
            Mode::Train,
            BatchNormParams::default(),
        );
        assert!(matches!(err, Err(Error::InvalidArgument(_))));
        // inference is fine on a single value
        assert!(batchnorm_forward(
            &x,
            &Tensor::full(&[2], 1.0),
            &Tensor::zeros(&[2]),
            &mut rs,
            Mode::Infer,
            BatchNormParams::default()
        )
        .is_ok());
    }

    #[test]
    fn running_stats_follow_ema() {
        let x = Tensor::<f64>::from_vec(&[2, 1, 1, 1], vec![1.0, 3.0]).unwrap();
        let mut rs = RunningStats::new(1);
        batchnorm_forward(
            &x,
            &Tensor::full(&[1], 1.0),
            &Tensor::zeros(&[1]),
            &mut rs,
            Mode::Train,
            BatchNormParams::default(),
        )
        .unwrap();
        // batch mean 2, unbiased var 2
        assert!((rs.mean[0] - 0.1 * 2.0).abs() < 1e-12);
        assert!((rs.var[0] - (0.9 + 0.1 * 2.0)).abs() < 1e-12);
    }

    #[test]
    fn infer_uses_running_stats() {
        let x = Tensor::<f64>::from_vec(&[1, 1, 1, 2], vec![4.0, 6.0]).unwrap();
        let rs = RunningStats {
            mean: Tensor::full(&[1], 5.0),
            var: Tensor::full(&[1], 4.0),
        };
        let y = batchnorm_infer(
            &x,
            &Tensor::full(&[1], 2.0),
            &Tensor::full(&[1], 1.0),
            &rs,
            0.0,
        )
        .unwrap();
        assert_eq!(y.data(), &[0.0, 2.0]);
    }

    #[test]
    fn backward_needs_cache() {
        let g = Tensor::<f64>::zeros(&[2, 1, 1, 1]);
        assert!(matches!(
            batchnorm_backward(&g, None),
            Err(Error::MissingCache(_))
        ));
    }
}
