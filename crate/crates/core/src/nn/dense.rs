use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

#[derive(Debug, Clone)]
pub struct DenseGrads<T: Scalar> {
    pub input: Tensor<T>,
    pub weights: Tensor<T>,
    pub bias: Tensor<T>,
}

fn check<T: Scalar>(
    input: &Tensor<T>,
    weights: &Tensor<T>,
    bias: &Tensor<T>,
) -> Result<(usize, usize, usize)> {
    let (n, k) = input.dims2()?;
    let (c, wk) = weights.dims2()?;
    if wk != k {
        return Err(Error::Shape(format!(
            "dense input has {k} features but weights expect {wk}"
        )));
    }
    if bias.shape() != [c] {
        return Err(Error::Shape(format!(
            "dense bias {:?} != [{c}]",
            bias.shape()
        )));
    }
    Ok((n, k, c))
}

/// `input [N, K] . weights[C, K]^T + bias[C]`.
pub fn dense_forward<T: Scalar>(
    input: &Tensor<T>,
    weights: &Tensor<T>,
    bias: &Tensor<T>,
) -> Result<Tensor<T>> {
    let (n, k, c) = check(input, weights, bias)?;
    let (x, w) = (input.data(), weights.data());
    let mut out = Tensor::zeros(&[n, c]);
    for ni in 0..n {
        for ci in 0..c {
            let acc: f64 = (0..k)
                .map(|ki| x[ni * k + ki].as_f64() * w[ci * k + ki].as_f64())
                .sum();
            out[ni * c + ci] = T::from_f64_lossy(acc + bias[ci].as_f64());
        }
    }
    Ok(out)
}

pub fn dense_backward<T: Scalar>(
    grad_out: &Tensor<T>,
    input: &Tensor<T>,
    weights: &Tensor<T>,
) -> Result<DenseGrads<T>> {
    let (n, k) = input.dims2()?;
    let (c, wk) = weights.dims2()?;
    if wk != k || grad_out.shape() != [n, c] {
        return Err(Error::Shape(format!(
            "dense backward: grad {:?}, input {:?}, weights {:?}",
            grad_out.shape(),
            input.shape(),
            weights.shape()
        )));
    }
    let (x, w, dy) = (input.data(), weights.data(), grad_out.data());
    let mut gi = Tensor::zeros(&[n, k]);
    let mut gw = Tensor::zeros(&[c, k]);
    let mut gb = Tensor::zeros(&[c]);
    for ni in 0..n {
        for ci in 0..c {
            let g = dy[ni * c + ci];
            gb[ci] = gb[ci] + g;
            for ki in 0..k {
                gi[ni * k + ki] = gi[ni * k + ki] + g * w[ci * k + ki];
                gw[ci * k + ki] = gw[ci * k + ki] + g * x[ni * k + ki];
            }
        }
    }
    Ok(DenseGrads {
        input: gi,
        weights: gw,
        bias: gb,
    })
}
