use super::Tensor;
use crate::error::{Error, Result};

/// Non-overlapping max pooling with floor semantics: trailing rows/columns
/// that do not fill a window are dropped. Returns the output and, for every
/// output element, the flat input index of its maximum. Ties go to the first
/// element in row-major window order.
pub fn maxpool_forward(input: &Tensor, pool: (usize, usize)) -> Result<(Tensor, Vec<usize>)> {
    let (n, h, w, c) = input.dims4()?;
    let (ph, pw) = pool;
    if ph == 0 || pw == 0 {
        return Err(Error::InvalidConfig("pool size must be positive".into()));
    }
    let (oh, ow) = (h / ph, w / pw);
    let x = input.data();
    let mut out = Vec::with_capacity(n * oh * ow * c);
    let mut argmax = Vec::with_capacity(n * oh * ow * c);
    for b in 0..n {
        for y in 0..oh {
            for xx in 0..ow {
                for ch in 0..c {
                    let mut best_idx = ((b * h + y * ph) * w + xx * pw) * c + ch;
                    let mut best = x[best_idx];
                    for i in 0..ph {
                        for j in 0..pw {
                            let idx = ((b * h + y * ph + i) * w + xx * pw + j) * c + ch;
                            if x[idx] > best {
                                best = x[idx];
                                best_idx = idx;
                            }
                        }
                    }
                    out.push(best);
                    argmax.push(best_idx);
                }
            }
        }
    }
    Ok((Tensor::from_vec(&[n, oh, ow, c], out)?, argmax))
}

/// Routes each output gradient to its recorded argmax position.
pub fn maxpool_backward(grad_out: &Tensor, argmax: &[usize], input_shape: &[usize]) -> Result<Tensor> {
    if grad_out.len() != argmax.len() {
        return Err(Error::ShapeMismatch(format!(
            "pool grad has {} entries but {} argmax indices",
            grad_out.len(),
            argmax.len()
        )));
    }
    let mut grad_in = Tensor::zeros(input_shape);
    let gi = grad_in.data_mut();
    for (&g, &idx) in grad_out.data().iter().zip(argmax) {
        gi[idx] += g;
    }
    Ok(grad_in)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::testutil::{assert_grad_close, numeric_grad, random_tensor};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn constant_input() {
        let x = Tensor::filled(&[1, 6, 6, 2], 3.5);
        let (y, _) = maxpool_forward(&x, (2, 2)).unwrap();
        assert_eq!(y.shape(), &[1, 3, 3, 2]);
        assert!(y.data().iter().all(|&v| v == 3.5));
    }

    #[test]
    fn window_max_and_argmax() {
        let x = Tensor::from_vec(&[1, 2, 2, 1], vec![1.0, 4.0, 3.0, 2.0]).unwrap();
        let (y, arg) = maxpool_forward(&x, (2, 2)).unwrap();
        assert_eq!(y.data(), &[4.0]);
        assert_eq!(arg, vec![1]);
    }

    #[test]
    fn floor_sizes() {
        let (y, _) = maxpool_forward(&Tensor::zeros(&[1, 39, 39, 1]), (2, 2)).unwrap();
        assert_eq!(y.shape(), &[1, 19, 19, 1]);
    }

    #[test]
    fn ties_go_to_top_left() {
        let x = Tensor::filled(&[1, 2, 2, 1], 1.0);
        let (_, arg) = maxpool_forward(&x, (2, 2)).unwrap();
        let g = maxpool_backward(&Tensor::filled(&[1, 1, 1, 1], 5.0), &arg, x.shape()).unwrap();
        assert_eq!(g.data(), &[5.0, 0.0, 0.0, 0.0]);
        let z = maxpool_backward(&Tensor::zeros(&[1, 1, 1, 1]), &arg, x.shape()).unwrap();
        assert!(z.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        // Continuous random values have no ties almost surely.
        let x = random_tensor(&[2, 5, 4, 3], &mut rng);
        let (y, arg) = maxpool_forward(&x, (2, 2)).unwrap();
        let weights = random_tensor(y.shape(), &mut rng);
        let analytic = maxpool_backward(&weights, &arg, x.shape()).unwrap();
        let numeric = numeric_grad(&x, |t| {
            let (y, _) = maxpool_forward(t, (2, 2)).unwrap();
            y.data().iter().zip(weights.data()).map(|(a, b)| a * b).sum()
        });
        assert_grad_close(&analytic, &numeric, 1e-6);
    }
}
