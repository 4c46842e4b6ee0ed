//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use sha2::{Digest, Sha256};
use spoken_digits::nn::Tensor;

/// Naive-DFT MFCC: pre-emphasis, truncated frames, symmetric Hamming,
/// direct DFT over bins `0..=n_fft/2`, explicit triangular mel filters,
/// natural log with floor, direct orthonormal DCT-II. Returns `n_coeffs`
/// rows of per-frame coefficients.
pub fn mfcc_oracle(samples: &[f64], rate: u32) -> Vec<Vec<f64>> {
    let (n_fft, n_mels, n_coeffs) = (2048usize, 26usize, 13usize);
    let frame_len = (0.025 * rate as f64) as usize;
    let hop = (0.010 * rate as f64) as usize;

    let mut x = vec![samples[0]];
    for t in 1..samples.len() {
        x.push(samples[t] - 0.97 * samples[t - 1]);
    }
    let mut frames = Vec::new();
    if x.len() < frame_len {
        let mut f = x.clone();
        f.resize(frame_len, 0.0);
        frames.push(f);
    } else {
        let mut start = 0;
        while start + frame_len <= x.len() {
            frames.push(x[start..start + frame_len].to_vec());
            start += hop;
        }
    }

    let mel = |hz: f64| 2595.0 * (1.0 + hz / 700.0).log10();
    let inv_mel = |m: f64| 700.0 * (10f64.powf(m / 2595.0) - 1.0);
    let top = mel(rate as f64 / 2.0);
    let centers: Vec<f64> = (0..n_mels + 2)
        .map(|i| (inv_mel(top * i as f64 / (n_mels + 1) as f64) * n_fft as f64 / rate as f64).round())
        .collect();
    let weight = |m: usize, k: f64| -> f64 {
        let (l, c, r) = (centers[m], centers[m + 1], centers[m + 2]);
        if k < l || k > r {
            0.0
        } else if k <= c {
            (k - l) / (c - l)
        } else {
            (r - k) / (r - c)
        }
    };

    let cos_table: Vec<f64> = (0..n_fft).map(|i| (2.0 * PI * i as f64 / n_fft as f64).cos()).collect();
    let sin_table: Vec<f64> = (0..n_fft).map(|i| (2.0 * PI * i as f64 / n_fft as f64).sin()).collect();

    let mut out = vec![Vec::new(); n_coeffs];
    for frame in &frames {
        let windowed: Vec<f64> = frame
            .iter()
            .enumerate()
            .map(|(n, v)| v * (0.54 - 0.46 * (2.0 * PI * n as f64 / (frame_len - 1) as f64).cos()))
            .collect();
        let power: Vec<f64> = (0..=n_fft / 2)
            .map(|k| {
                let (mut re, mut im) = (0.0, 0.0);
                for (n, v) in windowed.iter().enumerate() {
                    let idx = (k * n) % n_fft;
                    re += v * cos_table[idx];
                    im -= v * sin_table[idx];
                }
                (re * re + im * im) / n_fft as f64
            })
            .collect();
        let log_energy: Vec<f64> = (0..n_mels)
            .map(|m| {
                let e: f64 = power.iter().enumerate().map(|(k, p)| weight(m, k as f64) * p).sum();
                e.max(1e-10).ln()
            })
            .collect();
        for (k, row) in out.iter_mut().enumerate() {
            let scale = if k == 0 { (1.0 / n_mels as f64).sqrt() } else { (2.0 / n_mels as f64).sqrt() };
            let c: f64 = log_energy
                .iter()
                .enumerate()
                .map(|(i, v)| v * (PI * k as f64 * (2 * i + 1) as f64 / (2 * n_mels) as f64).cos())
                .sum();
            row.push(scale * c);
        }
    }
    out
}

/// `d[t] = sum_n n (c[t+n] - c[t-n]) / (2 sum_n n^2)`, indices clamped.
pub fn delta_oracle(rows: &[Vec<f64>], window: i64) -> Vec<Vec<f64>> {
    let denom: f64 = 2.0 * (1..=window).map(|n| (n * n) as f64).sum::<f64>();
    rows.iter()
        .map(|row| {
            let last = row.len() as i64 - 1;
            (0..row.len() as i64)
                .map(|t| {
                    (1..=window)
                        .map(|n| n as f64 * (row[(t + n).min(last) as usize] - row[(t - n).max(0) as usize]))
                        .sum::<f64>()
                        / denom
                })
                .collect()
        })
        .collect()
}

/// `|a - b| / max(|a|, |b|, floor)`.
pub fn rel_err(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

pub const FD_STEP: f64 = 1e-5;
/// Magnitude below which relative errors are measured against this floor.
pub const REL_FLOOR: f64 = 1e-3;

/// Central-difference gradient of `f` at `x`.
pub fn fd_grad(x: &Tensor, mut f: impl FnMut(&Tensor) -> f64) -> Tensor {
    let mut probe = x.clone();
    let mut g = Tensor::zeros(x.shape());
    for i in 0..x.len() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + FD_STEP;
        let up = f(&probe);
        probe.data_mut()[i] = orig - FD_STEP;
        let down = f(&probe);
        probe.data_mut()[i] = orig;
        g.data_mut()[i] = (up - down) / (2.0 * FD_STEP);
    }
    g
}

/// Largest per-element relative error between analytic and numeric grads.
pub fn max_rel(analytic: &Tensor, numeric: &Tensor) -> f64 {
    assert_eq!(analytic.shape(), numeric.shape());
    analytic
        .data()
        .iter()
        .zip(numeric.data())
        .map(|(a, n)| rel_err(*a, *n, REL_FLOOR))
        .fold(0.0, f64::max)
}

pub fn normal_tensor(shape: &[usize], rng: &mut impl Rng) -> Tensor {
    let n = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| rng.sample(StandardNormal)).collect()).unwrap()
}

pub fn weighted_sum(t: &Tensor, w: &Tensor) -> f64 {
    t.data().iter().zip(w.data()).map(|(a, b)| a * b).sum()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// SHA-256 of every file below `root`, keyed by relative path, sorted.
pub fn tree_hashes(root: &Path) -> Vec<(String, String)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.push((rel, hex::encode(Sha256::digest(fs::read(&path).unwrap()))));
            }
        }
    }
    out.sort();
    out
}

/// Random feature map values with standard-normal entries.
pub fn random_map(rng: &mut impl Rng) -> spoken_digits::features::FeatureMap {
    let values = ndarray::Array2::from_shape_fn((39, 39), |_| rng.sample::<f64, _>(StandardNormal));
    spoken_digits::features::FeatureMap::new(values).unwrap()
}
