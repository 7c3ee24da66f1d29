use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

/// Numerically stable softmax over each row of `[N, C]` logits.
pub fn softmax<T: Scalar>(logits: &Tensor<T>) -> Result<Vec<Vec<f64>>> {
    let (_, c) = logits.dims2()?;
    Ok(logits
        .data()
        .chunks(c.max(1))
        .map(|row| {
            let max = row
                .iter()
                .map(|v| v.as_f64())
                .fold(f64::NEG_INFINITY, f64::max);
            let exp: Vec<f64> = row.iter().map(|v| (v.as_f64() - max).exp()).collect();
            let z: f64 = exp.iter().sum();
            exp.into_iter().map(|e| e / z).collect()
        })
        .collect())
}

/// Mean cross-entropy of `softmax(logits)` against class indices, with the
/// gradient with respect to the logits.
pub fn softmax_cross_entropy<T: Scalar>(
    logits: &Tensor<T>,
    labels: &[usize],
) -> Result<(f64, Tensor<T>)> {
    let (n, c) = logits.dims2()?;
    if labels.len() != n {
        return Err(Error::Shape(format!(
            "{} labels for {n} logit rows",
            labels.len()
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= c) {
        return Err(Error::InvalidArgument(format!(
            "label {bad} outside [0, {c})"
        )));
    }
    let mut loss = 0.0;
    let mut grad = Tensor::zeros(&[n, c]);
    for (ni, row) in logits.data().chunks(c).enumerate() {
        let max = row
            .iter()
            .map(|v| v.as_f64())
            .fold(f64::NEG_INFINITY, f64::max);
        let shifted: Vec<f64> = row.iter().map(|v| v.as_f64() - max).collect();
        let log_z = shifted.iter().map(|s| s.exp()).sum::<f64>().ln();
        loss += log_z - shifted[labels[ni]];
        for ci in 0..c {
            let p = (shifted[ci] - log_z).exp();
            let target = if ci == labels[ni] { 1.0 } else { 0.0 };
            grad[ni * c + ci] = T::from_f64_lossy((p - target) / n as f64);
        }
    }
    Ok((loss / n as f64, grad))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_logits_give_ln2() {
        let l = Tensor::<f64>::zeros(&[1, 2]);
        let (loss, _) = softmax_cross_entropy(&l, &[0]).unwrap();
        assert!((loss - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn huge_logits_do_not_overflow() {
        let l = Tensor::<f64>::from_vec(&[1, 2], vec![1000.0, 0.0]).unwrap();
        let (loss, grad) = softmax_cross_entropy(&l, &[0]).unwrap();
        assert!(loss.is_finite() && loss.abs() < 1e-12);
        assert!(grad.all_finite());
    }

    #[test]
    fn shift_invariance() {
        let a = Tensor::<f64>::from_vec(&[2, 3], vec![0.3, -1.2, 2.0, 5.0, 4.0, -3.0]).unwrap();
        let b =
            Tensor::<f64>::from_vec(&[2, 3], vec![100.3, 98.8, 102.0, -5.0, -6.0, -13.0]).unwrap();
        let (la, _) = softmax_cross_entropy(&a, &[2, 1]).unwrap();
        let (lb, _) = softmax_cross_entropy(&b, &[2, 1]).unwrap();
        assert!((la - lb).abs() < 1e-9);
    }

    #[test]
    fn label_out_of_range() {
        let l = Tensor::<f64>::zeros(&[1, 2]);
        assert!(softmax_cross_entropy(&l, &[2]).is_err());
    }
}
