use super::{Mode, Tensor};
use crate::error::{Error, Result};

/// Per-channel batch normalization over every axis but the last.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm {
    pub gamma: Tensor,
    pub beta: Tensor,
    pub running_mean: Tensor,
    pub running_var: Tensor,
    /// Running statistics update as `momentum * old + (1 - momentum) * batch`.
    pub momentum: f64,
    pub epsilon: f64,
}

/// Values saved by a train-mode forward pass.
#[derive(Debug, Clone)]
pub struct BatchNormCache {
    xhat: Vec<f64>,
    inv_std: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchNormGrads {
    pub input: Tensor,
    pub gamma: Tensor,
    pub beta: Tensor,
}

impl BatchNorm {
    pub fn new(channels: usize) -> Self {
        BatchNorm {
            gamma: Tensor::filled(&[channels], 1.0),
            beta: Tensor::zeros(&[channels]),
            running_mean: Tensor::zeros(&[channels]),
            running_var: Tensor::filled(&[channels], 1.0),
            momentum: 0.99,
            epsilon: 1e-5,
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }
}

fn channel_count(input: &Tensor, bn: &BatchNorm) -> Result<usize> {
    let c = *input.shape().last().unwrap_or(&0);
    if c != bn.channels() || input.shape().len() < 2 {
        return Err(Error::ShapeMismatch(format!(
            "batch norm over {} channels got input {:?}",
            bn.channels(),
            input.shape()
        )));
    }
    Ok(c)
}

/// Inference-mode normalization with the running statistics.
pub fn batchnorm_infer(input: &Tensor, bn: &BatchNorm) -> Result<Tensor> {
    let c = channel_count(input, bn)?;
    let scale: Vec<f64> = bn
        .running_var
        .data()
        .iter()
        .zip(bn.gamma.data())
        .map(|(v, g)| g / (v + bn.epsilon).sqrt())
        .collect();
    let mean = bn.running_mean.data();
    let beta = bn.beta.data();
    let mut out = input.data().to_vec();
    for px in out.chunks_exact_mut(c) {
        for k in 0..c {
            px[k] = (px[k] - mean[k]) * scale[k] + beta[k];
        }
    }
    Tensor::from_vec(input.shape(), out)
}

/// Train mode normalizes with the biased batch variance and updates the
/// running statistics; infer mode uses the running statistics.
pub fn batchnorm_forward(input: &Tensor, bn: &mut BatchNorm, mode: Mode) -> Result<(Tensor, Option<BatchNormCache>)> {
    let c = channel_count(input, bn)?;
    let x = input.data();
    let gamma = bn.gamma.data();
    let beta = bn.beta.data();
    match mode {
        Mode::Infer => Ok((batchnorm_infer(input, bn)?, None)),
        Mode::Train => {
            let batch = input.shape()[0];
            if batch < 2 {
                return Err(Error::DegenerateBatch(batch));
            }
            let m = (x.len() / c) as f64;
            let mut mean = vec![0.0; c];
            for px in x.chunks_exact(c) {
                for k in 0..c {
                    mean[k] += px[k];
                }
            }
            mean.iter_mut().for_each(|v| *v /= m);
            let mut var = vec![0.0; c];
            for px in x.chunks_exact(c) {
                for k in 0..c {
                    let d = px[k] - mean[k];
                    var[k] += d * d;
                }
            }
            var.iter_mut().for_each(|v| *v /= m);
            let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + bn.epsilon).sqrt()).collect();
            let mut xhat = x.to_vec();
            let mut out = vec![0.0; x.len()];
            for (xh, o) in xhat.chunks_exact_mut(c).zip(out.chunks_exact_mut(c)) {
                for k in 0..c {
                    xh[k] = (xh[k] - mean[k]) * inv_std[k];
                    o[k] = gamma[k] * xh[k] + beta[k];
                }
            }
            let mom = bn.momentum;
            for (r, b) in bn.running_mean.data_mut().iter_mut().zip(&mean) {
                *r = mom * *r + (1.0 - mom) * b;
            }
            for (r, b) in bn.running_var.data_mut().iter_mut().zip(&var) {
                *r = mom * *r + (1.0 - mom) * b;
            }
            Ok((Tensor::from_vec(input.shape(), out)?, Some(BatchNormCache { xhat, inv_std })))
        }
    }
}

/// Gradients of the train-mode forward pass, including the dependence of the
/// batch mean and variance on every input.
pub fn batchnorm_backward(grad_out: &Tensor, cache: &BatchNormCache, bn: &BatchNorm) -> Result<BatchNormGrads> {
    let c = channel_count(grad_out, bn)?;
    if grad_out.len() != cache.xhat.len() {
        return Err(Error::ShapeMismatch("batch norm cache does not match gradient".into()));
    }
    let dy = grad_out.data();
    let gamma = bn.gamma.data();
    let m = (dy.len() / c) as f64;
    let mut sum_dy = vec![0.0; c];
    let mut sum_dy_xhat = vec![0.0; c];
    for (g, xh) in dy.chunks_exact(c).zip(cache.xhat.chunks_exact(c)) {
        for k in 0..c {
            sum_dy[k] += g[k];
            sum_dy_xhat[k] += g[k] * xh[k];
        }
    }
    let mut dx = vec![0.0; dy.len()];
    for ((d, g), xh) in dx.chunks_exact_mut(c).zip(dy.chunks_exact(c)).zip(cache.xhat.chunks_exact(c)) {
        for k in 0..c {
            d[k] = gamma[k] * cache.inv_std[k] / m * (m * g[k] - sum_dy[k] - xh[k] * sum_dy_xhat[k]);
        }
    }
    Ok(BatchNormGrads {
        input: Tensor::from_vec(grad_out.shape(), dx)?,
        gamma: Tensor::from_vec(&[c], sum_dy_xhat)?,
        beta: Tensor::from_vec(&[c], sum_dy)?,
    })
}
