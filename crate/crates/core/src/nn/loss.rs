use super::{Conv2d, Tensor};
use crate::error::{Error, Result};

/// Row-wise softmax with the row maximum subtracted first.
pub fn softmax(logits: &Tensor) -> Result<Tensor> {
    let (_, k) = logits.dims2()?;
    let mut out = logits.data().to_vec();
    for row in out.chunks_exact_mut(k) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        row.iter_mut().for_each(|v| *v /= sum);
    }
    Tensor::from_vec(logits.shape(), out)
}

/// Mean categorical cross-entropy of softmax(logits) and its gradient
/// `(p - onehot) / N` with respect to the logits.
pub fn softmax_cross_entropy(logits: &Tensor, labels: &[usize]) -> Result<(f64, Tensor)> {
    let (n, k) = logits.dims2()?;
    if labels.len() != n {
        return Err(Error::ShapeMismatch(format!("{n} logit rows but {} labels", labels.len())));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
        return Err(Error::LabelOutOfRange(bad, k));
    }
    let mut grad = logits.data().to_vec();
    let mut loss = 0.0;
    for (row, &label) in grad.chunks_exact_mut(k).zip(labels) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let log_sum = row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        loss -= row[label] - max - log_sum;
        for v in row.iter_mut() {
            *v = (*v - max - log_sum).exp() / n as f64;
        }
        row[label] -= 1.0 / n as f64;
    }
    Ok((loss / n as f64, Tensor::from_vec(logits.shape(), grad)?))
}

/// `sum factor * ||K||^2` over the layers' kernels, with per-layer kernel
/// gradients `2 * factor * K`.
pub fn l2_penalty(layers: &[&Conv2d]) -> (f64, Vec<Tensor>) {
    let mut total = 0.0;
    let grads = layers
        .iter()
        .map(|layer| {
            let f = layer.l2_factor;
            total += f * layer.kernels.sum_squares();
            let data = layer.kernels.data().iter().map(|w| 2.0 * f * w).collect();
            Tensor::from_vec(layer.kernels.shape(), data).expect("same shape")
        })
        .collect();
    (total, grads)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::testutil::{assert_grad_close, numeric_grad, random_tensor};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn uniform_logits() {
        let (loss, grad) = softmax_cross_entropy(&Tensor::zeros(&[2, 10]), &[3, 7]).unwrap();
        assert!((loss - 10f64.ln()).abs() < 1e-12);
        assert!((grad.data()[3] - (0.1 - 1.0) / 2.0).abs() < 1e-12);
    }

    #[test]
    fn saturated_logits_are_stable() {
        let mut logits = Tensor::zeros(&[1, 10]);
        logits.data_mut()[4] = 1000.0;
        let (loss, grad) = softmax_cross_entropy(&logits, &[4]).unwrap();
        assert!(loss.abs() < 1e-12);
        assert!(grad.data().iter().all(|g| g.abs() < 1e-12));

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut big = random_tensor(&[4, 10], &mut rng);
        big.data_mut().iter_mut().for_each(|v| *v *= 1e4);
        let p = softmax(&big).unwrap();
        for row in p.data().chunks_exact(10) {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        let (loss, grad) = softmax_cross_entropy(&big, &[0, 1, 2, 3]).unwrap();
        assert!(loss.is_finite() && grad.is_finite());
    }

    #[test]
    fn label_range() {
        assert!(matches!(
            softmax_cross_entropy(&Tensor::zeros(&[1, 10]), &[10]),
            Err(Error::LabelOutOfRange(10, 10))
        ));
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let logits = random_tensor(&[5, 10], &mut rng);
        let labels = [0, 9, 4, 4, 2];
        let (_, grad) = softmax_cross_entropy(&logits, &labels).unwrap();
        let num = numeric_grad(&logits, |t| softmax_cross_entropy(t, &labels).unwrap().0);
        assert_grad_close(&grad, &num, 1e-6);
    }

    #[test]
    fn l2_closed_forms() {
        let mut layer = Conv2d::zeros(1, 1, 1, 1);
        layer.l2_factor = 0.1;
        assert_eq!(l2_penalty(&[&layer]).0, 0.0);
        layer.kernels.data_mut()[0] = 3.0;
        let (p, g) = l2_penalty(&[&layer]);
        assert!((p - 0.9).abs() < 1e-12);
        assert!((g[0].data()[0] - 0.6).abs() < 1e-12);
    }

    #[test]
    fn combined_loss_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut layer = Conv2d::he_normal(2, 3, 3, 3, &mut rng);
        layer.l2_factor = 0.1;
        let (_, g) = l2_penalty(&[&layer]);
        let num = numeric_grad(&layer.kernels, |k| {
            let mut l = layer.clone();
            l.kernels = k.clone();
            l2_penalty(&[&l]).0
        });
        assert_grad_close(&g[0], &num, 1e-6);
    }
}
