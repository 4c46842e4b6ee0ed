use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::Tensor;
use crate::error::{Error, Result};

/// Fully connected layer, `y = x W + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    /// `inputs x units`
    pub weights: Tensor,
    /// `units`
    pub bias: Tensor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseGrads {
    pub input: Tensor,
    pub weights: Tensor,
    pub bias: Tensor,
}

impl Dense {
    pub fn zeros(inputs: usize, units: usize) -> Self {
        Dense {
            weights: Tensor::zeros(&[inputs, units]),
            bias: Tensor::zeros(&[units]),
        }
    }

    pub fn he_normal(inputs: usize, units: usize, rng: &mut impl Rng) -> Self {
        let mut layer = Dense::zeros(inputs, units);
        let normal = Normal::new(0.0, (2.0 / inputs as f64).sqrt()).expect("finite std");
        for w in layer.weights.data_mut() {
            *w = normal.sample(rng);
        }
        layer
    }

    pub fn inputs(&self) -> usize {
        self.weights.shape()[0]
    }

    pub fn units(&self) -> usize {
        self.weights.shape()[1]
    }
}

fn check(input: &Tensor, layer: &Dense) -> Result<(usize, usize, usize)> {
    let (n, d) = input.dims2()?;
    if d != layer.inputs() {
        return Err(Error::ShapeMismatch(format!(
            "dense layer expects {} features, got {d}",
            layer.inputs()
        )));
    }
    Ok((n, d, layer.units()))
}

pub fn dense_forward(input: &Tensor, layer: &Dense) -> Result<Tensor> {
    let (n, d, u) = check(input, layer)?;
    let w = layer.weights.data();
    let mut out = Vec::with_capacity(n * u);
    for row in input.data().chunks_exact(d) {
        let mut acc = layer.bias.data().to_vec();
        for (x, wrow) in row.iter().zip(w.chunks_exact(u)) {
            for (a, wv) in acc.iter_mut().zip(wrow) {
                *a += x * wv;
            }
        }
        out.extend(acc);
    }
    Tensor::from_vec(&[n, u], out)
}

pub fn dense_backward(grad_out: &Tensor, input: &Tensor, layer: &Dense) -> Result<DenseGrads> {
    let (n, d, u) = check(input, layer)?;
    if grad_out.shape() != [n, u] {
        return Err(Error::ShapeMismatch(format!(
            "dense grad_out {:?}, expected [{n}, {u}]",
            grad_out.shape()
        )));
    }
    let w = layer.weights.data();
    let mut gx = vec![0.0; n * d];
    let mut gw = vec![0.0; d * u];
    let mut gb = vec![0.0; u];
    for ((x, g), gxr) in input
        .data()
        .chunks_exact(d)
        .zip(grad_out.data().chunks_exact(u))
        .zip(gx.chunks_exact_mut(d))
    {
        for (b, gv) in gb.iter_mut().zip(g) {
            *b += gv;
        }
        for (((xv, wrow), gwrow), gxv) in x.iter().zip(w.chunks_exact(u)).zip(gw.chunks_exact_mut(u)).zip(gxr.iter_mut()) {
            let mut acc = 0.0;
            for ((wv, gwv), gv) in wrow.iter().zip(gwrow.iter_mut()).zip(g) {
                acc += wv * gv;
                *gwv += xv * gv;
            }
            *gxv = acc;
        }
    }
    Ok(DenseGrads {
        input: Tensor::from_vec(&[n, d], gx)?,
        weights: Tensor::from_vec(&[d, u], gw)?,
        bias: Tensor::from_vec(&[u], gb)?,
    })
}
