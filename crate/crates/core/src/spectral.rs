//! FFT plumbing shared by the MFCC front end and the spectral gate.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

/// Forward and inverse complex FFT plans of one size.
#[derive(Clone)]
pub(crate) struct FftPair {
    len: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl FftPair {
    pub fn new(len: usize) -> Self {
        let mut planner = FftPlanner::new();
        FftPair {
            len,
            forward: planner.plan_fft_forward(len),
            inverse: planner.plan_fft_inverse(len),
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    /// Spectrum of a real frame, zero-padded to the plan length.
    pub fn forward_real(&self, frame: &[f64]) -> Vec<Complex<f64>> {
        let mut buf = vec![Complex::new(0.0, 0.0); self.len];
        for (b, &x) in buf.iter_mut().zip(frame) {
            b.re = x;
        }
        self.forward.process(&mut buf);
        buf
    }

    /// Inverse transform scaled by `1/len`, real part only.
    pub fn inverse_real(&self, spectrum: &mut [Complex<f64>]) -> Vec<f64> {
        self.inverse.process(spectrum);
        let scale = 1.0 / self.len as f64;
        spectrum.iter().map(|c| c.re * scale).collect()
    }
}

/// Square root of the periodic Hann window. Its square sums to one across
/// frames at 50% overlap, so analysis and synthesis with this window form a
/// tight frame.
pub(crate) fn sqrt_hann(n: usize) -> Vec<f64> {
    (0..n).map(|i| (PI * i as f64 / n as f64).sin()).collect()
}

/// Short-time Fourier transform with hop `n_fft / 2` and `n_fft / 2` zero
/// samples of padding in front, sized so every input sample lies in exactly
/// two frames.
pub(crate) struct Stft {
    fft: FftPair,
    window: Vec<f64>,
}

impl Stft {
    pub fn new(n_fft: usize) -> Self {
        assert!(n_fft >= 2 && n_fft % 2 == 0, "STFT size must be even");
        Stft {
            fft: FftPair::new(n_fft),
            window: sqrt_hann(n_fft),
        }
    }

    pub fn n_fft(&self) -> usize {
        self.fft.len()
    }

    fn hop(&self) -> usize {
        self.fft.len() / 2
    }

    pub fn analyze(&self, samples: &[f64]) -> Vec<Vec<Complex<f64>>> {
        let hop = self.hop();
        let n = self.n_fft();
        let frames = (hop + samples.len()).div_ceil(hop);
        let mut padded = vec![0.0; frames * hop + hop];
        padded[hop..hop + samples.len()].copy_from_slice(samples);
        (0..frames)
            .map(|k| {
                let frame: Vec<f64> = padded[k * hop..k * hop + n]
                    .iter()
                    .zip(&self.window)
                    .map(|(x, w)| x * w)
                    .collect();
                self.fft.forward_real(&frame)
            })
            .collect()
    }

    /// Weighted overlap-add back to `out_len` samples.
    pub fn synthesize(&self, spectra: Vec<Vec<Complex<f64>>>, out_len: usize) -> Vec<f64> {
        let hop = self.hop();
        let mut padded = vec![0.0; spectra.len() * hop + hop];
        for (k, mut spectrum) in spectra.into_iter().enumerate() {
            let frame = self.fft.inverse_real(&mut spectrum);
            for (i, (x, w)) in frame.iter().zip(&self.window).enumerate() {
                padded[k * hop + i] += x * w;
            }
        }
        padded[hop..hop + out_len].to_vec()
    }

    /// Magnitude spectra (bins `0..=n_fft/2`) of the frames lying fully
    /// inside `samples`, without padding.
    pub fn interior_magnitudes(&self, samples: &[f64]) -> Vec<(f64, Vec<f64>)> {
        let n = self.n_fft();
        let hop = self.hop();
        if samples.len() < n {
            return Vec::new();
        }
        let count = 1 + (samples.len() - n) / hop;
        (0..count)
            .map(|k| {
                let raw = &samples[k * hop..k * hop + n];
                let energy = raw.iter().map(|x| x * x).sum::<f64>();
                let frame: Vec<f64> = raw.iter().zip(&self.window).map(|(x, w)| x * w).collect();
                let spec = self.fft.forward_real(&frame);
                (energy, spec[..=n / 2].iter().map(|c| c.norm()).collect())
            })
            .collect()
    }
}
