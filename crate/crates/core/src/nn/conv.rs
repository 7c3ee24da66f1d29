//! 2-D cross-correlation via im2col + GEMM.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

/// Output extent of a convolution along one axis, or `None` when the
/// kernel does not fit in the padded input.
pub fn conv_output_size(
    input: usize,
    kernel: usize,
    stride: usize,
    padding: usize,
) -> Option<usize> {
    if stride == 0 || kernel == 0 || kernel > input + 2 * padding {
        return None;
    }
    Some((input + 2 * padding - kernel) / stride + 1)
}

/// Everything conv backward needs from the forward pass.
#[derive(Debug, Clone)]
pub struct ConvCache<T: Scalar> {
    pub input: Tensor<T>,
    pub kernels: Tensor<T>,
}

#[derive(Debug, Clone)]
pub struct ConvGrads<T: Scalar> {
    pub input: Tensor<T>,
    pub kernels: Tensor<T>,
    pub bias: Tensor<T>,
}

#[derive(Clone, Copy)]
struct Geometry {
    c: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    oh: usize,
    ow: usize,
    stride: usize,
    padding: usize,
}

impl Geometry {
    fn new(
        input: &[usize],
        kernels: &[usize],
        stride: usize,
        padding: usize,
    ) -> Result<(usize, usize, Self)> {
        let (n, c, h, w) = match *input {
            [n, c, h, w] => (n, c, h, w),
            _ => {
                return Err(Error::Shape(format!(
                    "conv input must be [N,C,H,W], got {input:?}"
                )))
            }
        };
        let (f, kc, kh, kw) = match *kernels {
            [f, kc, kh, kw] => (f, kc, kh, kw),
            _ => {
                return Err(Error::Shape(format!(
                    "conv kernels must be [F,C,kh,kw], got {kernels:?}"
                )))
            }
        };
        if kc != c {
            return Err(Error::Shape(format!(
                "input has {c} channels but kernels expect {kc}"
            )));
        }
        if stride == 0 {
            return Err(Error::InvalidArgument(
                "conv stride must be positive".into(),
            ));
        }
        let oh = conv_output_size(h, kh, stride, padding).ok_or_else(|| {
            Error::Shape(format!(
                "kernel height {kh} exceeds padded input height {}",
                h + 2 * padding
            ))
        })?;
        let ow = conv_output_size(w, kw, stride, padding).ok_or_else(|| {
            Error::Shape(format!(
                "kernel width {kw} exceeds padded input width {}",
                w + 2 * padding
            ))
        })?;
        Ok((
            n,
            f,
            Geometry {
                c,
                h,
                w,
                kh,
                kw,
                oh,
                ow,
                stride,
                padding,
            },
        ))
    }

    fn patch(&self) -> usize {
        self.c * self.kh * self.kw
    }

    fn out_pixels(&self) -> usize {
        self.oh * self.ow
    }

    /// Visits every (column offset, input offset) pair that lands inside the
    /// unpadded input.
    fn for_each_tap(&self, mut f: impl FnMut(usize, usize)) {
        let pad = self.padding as isize;
        for ci in 0..self.c {
            for ki in 0..self.kh {
                for kj in 0..self.kw {
                    let row = (ci * self.kh + ki) * self.kw + kj;
                    for oy in 0..self.oh {
                        let iy = (oy * self.stride + ki) as isize - pad;
                        if iy < 0 || iy >= self.h as isize {
                            continue;
                        }
                        for ox in 0..self.ow {
                            let ix = (ox * self.stride + kj) as isize - pad;
                            if ix < 0 || ix >= self.w as isize {
                                continue;
                            }
                            f(
                                row * self.out_pixels() + oy * self.ow + ox,
                                (ci * self.h + iy as usize) * self.w + ix as usize,
                            );
                        }
                    }
                }
            }
        }
    }

    fn im2col<T: Scalar>(&self, image: &[T], col: &mut [T]) {
        col.fill(T::zero());
        self.for_each_tap(|ci, ii| col[ci] = image[ii]);
    }

    fn col2im<T: Scalar>(&self, col: &[T], image: &mut [T]) {
        self.for_each_tap(|ci, ii| image[ii] = image[ii] + col[ci]);
    }
}

/// Forward convolution. `bias` may be omitted for layers followed by batch
/// normalization.
pub fn conv2d_forward<T: Scalar>(
    input: &Tensor<T>,
    kernels: &Tensor<T>,
    bias: Option<&Tensor<T>>,
    stride: usize,
    padding: usize,
) -> Result<Tensor<T>> {
    let (n, f, g) = Geometry::new(input.shape(), kernels.shape(), stride, padding)?;
    if let Some(b) = bias {
        if b.shape() != [f] {
            return Err(Error::Shape(format!("bias shape {:?} != [{f}]", b.shape())));
        }
    }
    let in_stride = g.c * g.h * g.w;
    let out_stride = f * g.out_pixels();
    let mut out = Tensor::zeros(&[n, f, g.oh, g.ow]);
    out.data_mut()
        .par_chunks_mut(out_stride.max(1))
        .zip(input.data().par_chunks(in_stride.max(1)))
        .for_each_init(
            || vec![T::zero(); g.patch() * g.out_pixels()],
            |col, (out_n, in_n)| {
                g.im2col(in_n, col);
                T::gemm(
                    f,
                    g.patch(),
                    g.out_pixels(),
                    kernels.data(),
                    false,
                    col,
                    false,
                    out_n,
                    false,
                );
                if let Some(b) = bias {
                    for (fi, row) in out_n.chunks_mut(g.out_pixels()).enumerate() {
                        let bv = b[fi];
                        row.iter_mut().for_each(|v| *v = *v + bv);
                    }
                }
            },
        );
    Ok(out)
}

/// Backward convolution. Kernel and bias gradients are summed over the
/// batch in sample order, so results do not depend on the thread count.
pub fn conv2d_backward<T: Scalar>(
    grad_out: &Tensor<T>,
    cache: Option<&ConvCache<T>>,
    stride: usize,
    padding: usize,
) -> Result<ConvGrads<T>> {
    let cache = cache.ok_or(Error::MissingCache("conv2d"))?;
    let (n, f, g) = Geometry::new(cache.input.shape(), cache.kernels.shape(), stride, padding)?;
    let expected = [n, f, g.oh, g.ow];
    if grad_out.shape() != expected {
        return Err(Error::Shape(format!(
            "conv grad_out shape {:?} != forward output {expected:?}",
            grad_out.shape()
        )));
    }
    let in_stride = g.c * g.h * g.w;
    let out_stride = f * g.out_pixels();
    let patch = g.patch();
    let mut grad_input = Tensor::zeros(cache.input.shape());

    let per_sample: Vec<Vec<T>> = grad_input
        .data_mut()
        .par_chunks_mut(in_stride.max(1))
        .zip(cache.input.data().par_chunks(in_stride.max(1)))
        .zip(grad_out.data().par_chunks(out_stride.max(1)))
        .map(|((gin_n, in_n), gout_n)| {
            let mut col = vec![T::zero(); patch * g.out_pixels()];
            g.im2col(in_n, &mut col);
            let mut gk = vec![T::zero(); f * patch];
            // dK = dOut . col^T
            T::gemm(
                f,
                g.out_pixels(),
                patch,
                gout_n,
                false,
                &col,
                true,
                &mut gk,
                false,
            );
            // dcol = K^T . dOut
            T::gemm(
                patch,
                f,
                g.out_pixels(),
                cache.kernels.data(),
                true,
                gout_n,
                false,
                &mut col,
                false,
            );
            g.col2im(&col, gin_n);
            gk
        })
        .collect();

    let mut grad_kernels = Tensor::zeros(cache.kernels.shape());
    for gk in &per_sample {
        for (acc, v) in grad_kernels.data_mut().iter_mut().zip(gk) {
            *acc = *acc + *v;
        }
    }
    let mut grad_bias = Tensor::zeros(&[f]);
    for gout_n in grad_out.data().chunks(out_stride.max(1)) {
        for (fi, row) in gout_n.chunks(g.out_pixels().max(1)).enumerate() {
            grad_bias[fi] = grad_bias[fi] + row.iter().copied().sum::<T>();
        }
    }
    Ok(ConvGrads {
        input: grad_input,
        kernels: grad_kernels,
        bias: grad_bias,
    })
}
