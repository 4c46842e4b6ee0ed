use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use super::Tensor;
use crate::error::{Error, Result};

/// Stride-1 "same" convolution (cross-correlation, no kernel flip).
#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d {
    /// `out_ch x in_ch x kh x kw`
    pub kernels: Tensor,
    /// `out_ch`
    pub bias: Tensor,
    /// L2 factor applied to the kernels (not the bias).
    pub l2_factor: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvGrads {
    pub input: Tensor,
    pub kernels: Tensor,
    pub bias: Tensor,
}

impl Conv2d {
    pub fn zeros(in_ch: usize, out_ch: usize, kh: usize, kw: usize) -> Self {
        assert!(kh % 2 == 1 && kw % 2 == 1, "kernel sides must be odd");
        Conv2d {
            kernels: Tensor::zeros(&[out_ch, in_ch, kh, kw]),
            bias: Tensor::zeros(&[out_ch]),
            l2_factor: 0.0,
        }
    }

    /// He-normal kernels (std `sqrt(2 / fan_in)`), zero bias.
    pub fn he_normal(in_ch: usize, out_ch: usize, kh: usize, kw: usize, rng: &mut impl Rng) -> Self {
        let mut layer = Conv2d::zeros(in_ch, out_ch, kh, kw);
        let normal = Normal::new(0.0, (2.0 / (kh * kw * in_ch) as f64).sqrt()).expect("finite std");
        for w in layer.kernels.data_mut() {
            *w = normal.sample(rng);
        }
        layer
    }

    pub fn out_channels(&self) -> usize {
        self.kernels.shape()[0]
    }

    pub fn in_channels(&self) -> usize {
        self.kernels.shape()[1]
    }

    pub fn kernel_size(&self) -> (usize, usize) {
        (self.kernels.shape()[2], self.kernels.shape()[3])
    }

    /// Kernels rearranged to `kh x kw x in_ch x out_ch` so the output-channel
    /// axis is contiguous.
    fn transposed(&self) -> Vec<f64> {
        let (co, ci) = (self.out_channels(), self.in_channels());
        let (kh, kw) = self.kernel_size();
        let k = self.kernels.data();
        let mut t = vec![0.0; k.len()];
        for o in 0..co {
            for c in 0..ci {
                for i in 0..kh {
                    for j in 0..kw {
                        t[((i * kw + j) * ci + c) * co + o] = k[((o * ci + c) * kh + i) * kw + j];
                    }
                }
            }
        }
        t
    }
}

struct Geometry {
    h: usize,
    w: usize,
    cin: usize,
    cout: usize,
    kh: usize,
    kw: usize,
}

impl Geometry {
    fn check(input: &Tensor, layer: &Conv2d) -> Result<(usize, Geometry)> {
        let (n, h, w, cin) = input.dims4()?;
        if cin != layer.in_channels() {
            return Err(Error::ShapeMismatch(format!(
                "conv expects {} input channels, got {cin}",
                layer.in_channels()
            )));
        }
        let (kh, kw) = layer.kernel_size();
        Ok((
            n,
            Geometry {
                h,
                w,
                cin,
                cout: layer.out_channels(),
                kh,
                kw,
            },
        ))
    }

    /// Calls `f(i, j, iy, ix)` for every kernel tap of output pixel `(y, x)`
    /// that lands inside the input.
    #[inline]
    fn taps(&self, y: usize, x: usize, mut f: impl FnMut(usize, usize, usize, usize)) {
        let (ph, pw) = (self.kh / 2, self.kw / 2);
        for i in 0..self.kh {
            let iy = y + i;
            if iy < ph || iy - ph >= self.h {
                continue;
            }
            for j in 0..self.kw {
                let ix = x + j;
                if ix < pw || ix - pw >= self.w {
                    continue;
                }
                f(i, j, iy - ph, ix - pw);
            }
        }
    }
}

/// `out[y, x, c] = bias[c] + sum_{i, j, ci} K[c, ci, i, j] * in[y + i - ph, x + j - pw, ci]`
/// with zeros outside the input.
pub fn conv2d_forward(input: &Tensor, layer: &Conv2d) -> Result<Tensor> {
    let (n, g) = Geometry::check(input, layer)?;
    let wt = layer.transposed();
    let bias = layer.bias.data();
    let in_size = g.h * g.w * g.cin;
    let out_size = g.h * g.w * g.cout;
    let mut out = vec![0.0; n * out_size];
    out.par_chunks_mut(out_size.max(1))
        .zip(input.data().par_chunks(in_size.max(1)))
        .for_each(|(out, inp)| {
            for y in 0..g.h {
                for x in 0..g.w {
                    let px = &mut out[(y * g.w + x) * g.cout..][..g.cout];
                    px.copy_from_slice(bias);
                    g.taps(y, x, |i, j, iy, ix| {
                        let src = &inp[(iy * g.w + ix) * g.cin..][..g.cin];
                        let taps = &wt[(i * g.kw + j) * g.cin * g.cout..][..g.cin * g.cout];
                        for (v, row) in src.iter().zip(taps.chunks_exact(g.cout)) {
                            for (o, w) in px.iter_mut().zip(row) {
                                *o += v * w;
                            }
                        }
                    });
                }
            }
        });
    Tensor::from_vec(&[n, g.h, g.w, g.cout], out)
}

/// Exact gradients of [`conv2d_forward`] with respect to its input, kernels
/// and bias. Per-sample kernel gradients are reduced in batch order.
pub fn conv2d_backward(grad_out: &Tensor, input: &Tensor, layer: &Conv2d) -> Result<ConvGrads> {
    let (n, g) = Geometry::check(input, layer)?;
    if grad_out.shape() != [n, g.h, g.w, g.cout] {
        return Err(Error::ShapeMismatch(format!(
            "conv grad_out {:?} does not match output [{n}, {}, {}, {}]",
            grad_out.shape(),
            g.h,
            g.w,
            g.cout
        )));
    }
    let wt = layer.transposed();
    let in_size = g.h * g.w * g.cin;
    let out_size = g.h * g.w * g.cout;
    let kernel_len = wt.len();

    let mut grad_in = vec![0.0; n * in_size];
    let partial_wt: Vec<Vec<f64>> = grad_in
        .par_chunks_mut(in_size.max(1))
        .zip(input.data().par_chunks(in_size.max(1)))
        .zip(grad_out.data().par_chunks(out_size.max(1)))
        .map(|((gin, inp), gout)| {
            let mut gw = vec![0.0; kernel_len];
            for y in 0..g.h {
                for x in 0..g.w {
                    let go = &gout[(y * g.w + x) * g.cout..][..g.cout];
                    g.taps(y, x, |i, j, iy, ix| {
                        let base = (i * g.kw + j) * g.cin * g.cout;
                        let src = &inp[(iy * g.w + ix) * g.cin..][..g.cin];
                        let dst = &mut gin[(iy * g.w + ix) * g.cin..][..g.cin];
                        let taps = &wt[base..base + g.cin * g.cout];
                        let gtaps = &mut gw[base..base + g.cin * g.cout];
                        for (c, (row, grow)) in taps
                            .chunks_exact(g.cout)
                            .zip(gtaps.chunks_exact_mut(g.cout))
                            .enumerate()
                        {
                            let v = src[c];
                            let mut acc = 0.0;
                            for ((w, gwv), gov) in row.iter().zip(grow.iter_mut()).zip(go) {
                                acc += w * gov;
                                *gwv += v * gov;
                            }
                            dst[c] += acc;
                        }
                    });
                }
            }
            gw
        })
        .collect();

    let mut gw_t = vec![0.0; kernel_len];
    for part in &partial_wt {
        for (a, b) in gw_t.iter_mut().zip(part) {
            *a += b;
        }
    }
    // Back to out x in x kh x kw.
    let mut gk = vec![0.0; kernel_len];
    for o in 0..g.cout {
        for c in 0..g.cin {
            for i in 0..g.kh {
                for j in 0..g.kw {
                    gk[((o * g.cin + c) * g.kh + i) * g.kw + j] = gw_t[((i * g.kw + j) * g.cin + c) * g.cout + o];
                }
            }
        }
    }
    let mut gb = vec![0.0; g.cout];
    for px in grad_out.data().chunks_exact(g.cout.max(1)) {
        for (b, v) in gb.iter_mut().zip(px) {
            *b += v;
        }
    }
    Ok(ConvGrads {
        input: Tensor::from_vec(input.shape(), grad_in)?,
        kernels: Tensor::from_vec(layer.kernels.shape(), gk)?,
        bias: Tensor::from_vec(&[g.cout], gb)?,
    })
}
