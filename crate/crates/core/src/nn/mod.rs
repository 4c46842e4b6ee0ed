//! From-scratch network building blocks with exact backward passes.
//!
//! Activations use NHWC layout (`batch x height x width x channels`); dense
//! layers take `batch x features`. Everything runs in `f64`.

mod adam;
mod batchnorm;
mod conv;
mod dense;
mod loss;
mod pool;
#[cfg(test)]
pub(crate) mod testutil;

pub use adam::{adam_step, AdamState};
pub use batchnorm::{batchnorm_backward, batchnorm_forward, batchnorm_infer, BatchNorm, BatchNormCache, BatchNormGrads};
pub use conv::{conv2d_backward, conv2d_forward, Conv2d, ConvGrads};
pub use dense::{dense_backward, dense_forward, Dense, DenseGrads};
pub use loss::{l2_penalty, softmax, softmax_cross_entropy};
pub use pool::{maxpool_backward, maxpool_forward};

use rand::Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

/// Dense row-major array with explicit shape.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Self {
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; shape.iter().product()],
        }
    }

    pub fn filled(shape: &[usize], value: f64) -> Self {
        Tensor {
            shape: shape.to_vec(),
            data: vec![value; shape.iter().product()],
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::ShapeMismatch(format!(
                "shape {shape:?} needs {expected} values, got {}",
                data.len()
            )));
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn reshape(mut self, shape: &[usize]) -> Result<Self> {
        if shape.iter().product::<usize>() != self.data.len() {
            return Err(Error::ShapeMismatch(format!(
                "cannot reshape {:?} to {shape:?}",
                self.shape
            )));
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    pub(crate) fn dims4(&self) -> Result<(usize, usize, usize, usize)> {
        match *self.shape.as_slice() {
            [n, h, w, c] => Ok((n, h, w, c)),
            _ => Err(Error::ShapeMismatch(format!(
                "expected a 4-d tensor, got {:?}",
                self.shape
            ))),
        }
    }

    pub(crate) fn dims2(&self) -> Result<(usize, usize)> {
        match *self.shape.as_slice() {
            [n, d] => Ok((n, d)),
            _ => Err(Error::ShapeMismatch(format!(
                "expected a 2-d tensor, got {:?}",
                self.shape
            ))),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn sum_squares(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }
}

pub fn relu(input: &Tensor) -> Tensor {
    Tensor {
        shape: input.shape.clone(),
        data: input.data.iter().map(|&v| v.max(0.0)).collect(),
    }
}

/// Passes gradient where the forward input was strictly positive.
pub fn relu_backward(grad_out: &Tensor, input: &Tensor) -> Tensor {
    Tensor {
        shape: grad_out.shape.clone(),
        data: grad_out
            .data
            .iter()
            .zip(&input.data)
            .map(|(&g, &x)| if x > 0.0 { g } else { 0.0 })
            .collect(),
    }
}

/// Inverted dropout. Returns the output and the multiplicative mask
/// (`0` or `1 / (1 - rate)` per element; all ones in inference).
pub fn dropout(input: &Tensor, rate: f64, mode: Mode, rng: &mut impl Rng) -> (Tensor, Vec<f64>) {
    assert!((0.0..1.0).contains(&rate), "dropout rate must be in [0, 1)");
    if mode == Mode::Infer || rate == 0.0 {
        return (input.clone(), vec![1.0; input.len()]);
    }
    let keep = 1.0 / (1.0 - rate);
    let mask: Vec<f64> = (0..input.len())
        .map(|_| if rng.random::<f64>() < rate { 0.0 } else { keep })
        .collect();
    let data = input.data.iter().zip(&mask).map(|(x, m)| x * m).collect();
    (
        Tensor {
            shape: input.shape.clone(),
            data,
        },
        mask,
    )
}

pub fn dropout_backward(grad_out: &Tensor, mask: &[f64]) -> Tensor {
    Tensor {
        shape: grad_out.shape.clone(),
        data: grad_out.data.iter().zip(mask).map(|(g, m)| g * m).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn tensor_shape_checks() {
        assert!(Tensor::from_vec(&[2, 3], vec![0.0; 5]).is_err());
        let t = Tensor::from_vec(&[2, 3], vec![1.0; 6]).unwrap();
        assert_eq!(t.clone().reshape(&[3, 2]).unwrap().shape(), &[3, 2]);
        assert!(t.reshape(&[4, 2]).is_err());
    }

    #[test]
    fn relu_cases() {
        let neg = Tensor::from_vec(&[3], vec![-1.0, -0.5, -3.0]).unwrap();
        assert!(relu(&neg).data().iter().all(|&v| v == 0.0));
        let pos = Tensor::from_vec(&[3], vec![0.0, 0.5, 3.0]).unwrap();
        assert_eq!(relu(&pos), pos);
        let g = Tensor::filled(&[3], 1.0);
        // Gradient is zero at exactly 0.
        assert_eq!(relu_backward(&g, &pos).data(), &[0.0, 1.0, 1.0]);
    }

    #[test]
    fn dropout_identity_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let x = Tensor::from_vec(&[4], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let (y, mask) = dropout(&x, 0.0, Mode::Train, &mut rng);
        assert_eq!(y, x);
        assert!(mask.iter().all(|&m| m == 1.0));
        let (y, _) = dropout(&x, 0.5, Mode::Infer, &mut rng);
        assert_eq!(y, x);
    }

    #[test]
    fn dropout_statistics() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let n = 1_000_000;
        let x = Tensor::filled(&[n], 2.0);
        let (y, mask) = dropout(&x, 0.2, Mode::Train, &mut rng);
        let survivors = mask.iter().filter(|&&m| m > 0.0).count() as f64 / n as f64;
        assert!((survivors - 0.8).abs() < 0.002, "{survivors}");
        let mean = y.data().iter().sum::<f64>() / n as f64;
        assert!((mean - 2.0).abs() < 0.02);
    }

    #[test]
    fn dropout_is_seeded() {
        let x = Tensor::filled(&[100], 1.0);
        let a = dropout(&x, 0.3, Mode::Train, &mut ChaCha8Rng::seed_from_u64(9)).0;
        let b = dropout(&x, 0.3, Mode::Train, &mut ChaCha8Rng::seed_from_u64(9)).0;
        assert_eq!(a, b);
    }
}
