//! Global average pooling and non-overlapping max pooling.

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

/// `[N, K, u, v] -> [N, K]`, the spatial mean of each map.
pub fn gap_forward<T: Scalar>(input: &Tensor<T>) -> Result<Tensor<T>> {
    let (n, k, u, v) = input.dims4()?;
    if u == 0 || v == 0 {
        return Err(Error::Shape(
            "global average pooling over an empty map".into(),
        ));
    }
    let plane = u * v;
    let data = input
        .data()
        .chunks(plane)
        .map(|map| T::from_f64_lossy(map.iter().map(|x| x.as_f64()).sum::<f64>() / plane as f64))
        .collect();
    Tensor::from_vec(&[n, k], data)
}

pub fn gap_backward<T: Scalar>(grad_out: &Tensor<T>, input_shape: &[usize]) -> Result<Tensor<T>> {
    let (n, k, u, v) = match *input_shape {
        [n, k, u, v] => (n, k, u, v),
        _ => return Err(Error::Shape(format!("gap input shape {input_shape:?}"))),
    };
    if grad_out.shape() != [n, k] {
        return Err(Error::Shape(format!(
            "gap grad {:?} != [{n}, {k}]",
            grad_out.shape()
        )));
    }
    let scale = T::from_f64_lossy(1.0 / (u * v) as f64);
    let mut out = Tensor::zeros(input_shape);
    for (map, &g) in out.data_mut().chunks_mut(u * v).zip(grad_out.data()) {
        map.fill(g * scale);
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct MaxPoolCache {
    input_shape: Vec<usize>,
    /// Flat input index of the winner for every output element.
    argmax: Vec<usize>,
}

/// Max pooling with window = stride = `size`; trailing rows/columns that do
/// not fill a window are dropped. Ties go to the first element in raster order.
pub fn maxpool_forward<T: Scalar>(
    input: &Tensor<T>,
    size: usize,
) -> Result<(Tensor<T>, MaxPoolCache)> {
    let (n, c, h, w) = input.dims4()?;
    if size == 0 || size > h || size > w {
        return Err(Error::Shape(format!(
            "pool size {size} does not fit {h}x{w}"
        )));
    }
    let (oh, ow) = (h / size, w / size);
    let mut out = Tensor::zeros(&[n, c, oh, ow]);
    let mut argmax = Vec::with_capacity(n * c * oh * ow);
    let x = input.data();
    let mut o = 0;
    for plane in 0..n * c {
        let base = plane * h * w;
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best = base + oy * size * w + ox * size;
                for dy in 0..size {
                    for dx in 0..size {
                        let i = base + (oy * size + dy) * w + ox * size + dx;
                        if x[i] > x[best] {
                            best = i;
                        }
                    }
                }
                out[o] = x[best];
                argmax.push(best);
                o += 1;
            }
        }
    }
    Ok((
        out,
        MaxPoolCache {
            input_shape: input.shape().to_vec(),
            argmax,
        },
    ))
}

pub fn maxpool_backward<T: Scalar>(
    grad_out: &Tensor<T>,
    cache: Option<&MaxPoolCache>,
) -> Result<Tensor<T>> {
    let cache = cache.ok_or(Error::MissingCache("maxpool"))?;
    if grad_out.len() != cache.argmax.len() {
        return Err(Error::Shape(format!(
            "maxpool grad has {} elements, forward produced {}",
            grad_out.len(),
            cache.argmax.len()
        )));
    }
    let mut out = Tensor::zeros(&cache.input_shape);
    for (&i, &g) in cache.argmax.iter().zip(grad_out.data()) {
        out[i] = out[i] + g;
    }
    Ok(out)
}
