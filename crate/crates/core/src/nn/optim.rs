//! SGD with momentum, L2 weight decay and exponential learning-rate decay.

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

pub const DEFAULT_MOMENTUM: f64 = 0.8;
pub const DEFAULT_WEIGHT_DECAY: f64 = 0.0005;
pub const DEFAULT_BASE_LR: f64 = 0.01;
pub const DEFAULT_LR_DECAY: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SgdConfig {
    pub momentum: f64,
    pub weight_decay: f64,
    pub base_lr: f64,
    /// Fractional learning-rate reduction applied after every epoch.
    pub decay_per_epoch: f64,
}

impl Default for SgdConfig {
    fn default() -> Self {
        SgdConfig {
            momentum: DEFAULT_MOMENTUM,
            weight_decay: DEFAULT_WEIGHT_DECAY,
            base_lr: DEFAULT_BASE_LR,
            decay_per_epoch: DEFAULT_LR_DECAY,
        }
    }
}

impl SgdConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::InvalidArgument(format!(
                "momentum {} not in [0, 1)",
                self.momentum
            )));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "weight decay {} < 0",
                self.weight_decay
            )));
        }
        if !(self.base_lr > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "learning rate {} <= 0",
                self.base_lr
            )));
        }
        if !(0.0..1.0).contains(&self.decay_per_epoch) {
            return Err(Error::InvalidArgument(format!(
                "lr decay {} not in [0, 1)",
                self.decay_per_epoch
            )));
        }
        Ok(())
    }
}

/// `base_lr * (1 - decay_per_epoch)^epoch`.
pub fn lr_at_epoch(config: &SgdConfig, epoch: usize) -> f64 {
    config.base_lr * (1.0 - config.decay_per_epoch).powi(epoch as i32)
}

/// Momentum buffers, one per parameter tensor.
#[derive(Debug, Clone)]
pub struct OptimizerState<T: Scalar> {
    pub config: SgdConfig,
    velocity: Vec<Tensor<T>>,
}

impl<T: Scalar> OptimizerState<T> {
    pub fn new<'a>(
        config: SgdConfig,
        shapes: impl IntoIterator<Item = &'a [usize]>,
    ) -> Result<Self> {
        config.validate()?;
        Ok(OptimizerState {
            config,
            velocity: shapes.into_iter().map(Tensor::zeros).collect(),
        })
    }

    pub fn velocity(&self) -> &[Tensor<T>] {
        &self.velocity
    }
}

/// A parameter tensor and whether L2 decay applies to it.
pub struct Param<'a, T: Scalar> {
    pub value: &'a mut Tensor<T>,
    pub decay: bool,
}

/// `v <- momentum*v - lr*(g + wd*p); p <- p + v`, with `wd = 0` for
/// parameters that are exempt from decay.
pub fn sgd_momentum_step<T: Scalar>(
    params: &mut [Param<'_, T>],
    grads: &[&Tensor<T>],
    state: &mut OptimizerState<T>,
    lr: f64,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.velocity.len() {
        return Err(Error::Shape(format!(
            "{} params, {} grads, {} velocity buffers",
            params.len(),
            grads.len(),
            state.velocity.len()
        )));
    }
    for ((p, g), v) in params.iter().zip(grads).zip(&state.velocity) {
        if p.value.shape() != g.shape() || p.value.shape() != v.shape() {
            return Err(Error::Shape(format!(
                "param {:?}, grad {:?}, velocity {:?}",
                p.value.shape(),
                g.shape(),
                v.shape()
            )));
        }
    }
    let m = T::from_f64_lossy(state.config.momentum);
    let lr = T::from_f64_lossy(lr);
    for ((p, g), v) in params.iter_mut().zip(grads).zip(state.velocity.iter_mut()) {
        let wd = T::from_f64_lossy(if p.decay {
            state.config.weight_decay
        } else {
            0.0
        });
        for ((pv, &gv), vv) in p
            .value
            .data_mut()
            .iter_mut()
            .zip(g.data())
            .zip(v.data_mut())
        {
            *vv = m * *vv - lr * (gv + wd * *pv);
            *pv = *pv + *vv;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(momentum: f64, weight_decay: f64) -> SgdConfig {
        SgdConfig {
            momentum,
            weight_decay,
            ..SgdConfig::default()
        }
    }

    #[test]
    fn lr_schedule() {
        let c = SgdConfig::default();
        assert_eq!(lr_at_epoch(&c, 0), 0.01);
        assert!((lr_at_epoch(&c, 1) - 0.0099).abs() < 1e-15);
        // closed form 0.01 * 0.99^150
        assert!((lr_at_epoch(&c, 150) - 2.214_517_872_388_6e-3).abs() < 1e-12);
    }

    #[test]
    fn zero_grad_zero_decay_is_noop() {
        let mut p = Tensor::<f64>::from_vec(&[3], vec![1.0, -2.0, 0.5]).unwrap();
        let before = p.clone();
        let g = Tensor::zeros(&[3]);
        let mut st = OptimizerState::new(cfg(0.8, 0.0), [p.shape()]).unwrap();
        sgd_momentum_step(
            &mut [Param {
                value: &mut p,
                decay: true,
            }],
            &[&g],
            &mut st,
            0.1,
        )
        .unwrap();
        assert_eq!(p, before);
    }

    #[test]
    fn plain_step() {
        let mut p = Tensor::<f64>::full(&[2], 1.0);
        let g = Tensor::full(&[2], 1.0);
        let mut st = OptimizerState::new(cfg(0.0, 0.0), [p.shape()]).unwrap();
        sgd_momentum_step(
            &mut [Param {
                value: &mut p,
                decay: true,
            }],
            &[&g],
            &mut st,
            0.1,
        )
        .unwrap();
        assert_eq!(p.data(), &[0.9, 0.9]);
    }

    #[test]
    fn two_momentum_steps_unrolled() {
        let (m, wd, lr) = (0.8, 0.0005, 0.01);
        let (p0, g1, g2) = (0.7f64, 0.3f64, -1.1f64);
        let v1 = m * 0.0 - lr * (g1 + wd * p0);
        let p1 = p0 + v1;
        let v2 = m * v1 - lr * (g2 + wd * p1);
        let p2 = p1 + v2;

        let mut p = Tensor::<f64>::full(&[1], p0);
        let mut st = OptimizerState::new(cfg(m, wd), [p.shape()]).unwrap();
        for g in [g1, g2] {
            let gt = Tensor::full(&[1], g);
            sgd_momentum_step(
                &mut [Param {
                    value: &mut p,
                    decay: true,
                }],
                &[&gt],
                &mut st,
                lr,
            )
            .unwrap();
        }
        assert_eq!(p.data(), &[p2]);
        assert_eq!(st.velocity()[0].data(), &[v2]);
    }

    #[test]
    fn decay_exempt_params() {
        let mut w = Tensor::<f64>::full(&[1], 2.0);
        let mut b = Tensor::<f64>::full(&[1], 2.0);
        let g = Tensor::zeros(&[1]);
        let mut st = OptimizerState::new(cfg(0.0, 0.5), [w.shape(), b.shape()]).unwrap();
        sgd_momentum_step(
            &mut [
                Param {
                    value: &mut w,
                    decay: true,
                },
                Param {
                    value: &mut b,
                    decay: false,
                },
            ],
            &[&g, &g],
            &mut st,
            0.1,
        )
        .unwrap();
        assert_eq!(w.data(), &[2.0 - 0.1 * 0.5 * 2.0]);
        assert_eq!(b.data(), &[2.0]);
    }

    #[test]
    fn config_validation() {
        assert!(cfg(1.0, 0.0).validate().is_err());
        assert!(cfg(0.5, -1.0).validate().is_err());
        assert!(SgdConfig {
            base_lr: 0.0,
            ..SgdConfig::default()
        }
        .validate()
        .is_err());
    }
}
