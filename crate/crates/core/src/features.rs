//! MFCC front end and the fixed-size feature map fed to the network.
//!
//! Chain: pre-emphasis, framing, Hamming window, FFT power spectrum, mel
//! filterbank, log compression, orthonormal DCT-II. Thirteen static
//! coefficients are stacked with their deltas and delta-deltas into 39 rows,
//! and the frame axis is fitted to 39 columns.

use std::f64::consts::PI;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use ndarray::{s, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::audio::AudioClip;
use crate::error::{Error, Result};
use crate::spectral::FftPair;

pub const FEATURE_ROWS: usize = 39;
pub const FEATURE_COLS: usize = 39;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MfccConfig {
    pub frame_len_ms: f64,
    pub hop_ms: f64,
    pub n_fft: usize,
    pub n_mels: usize,
    pub n_coeffs: usize,
    pub fmin: f64,
    /// Upper filterbank edge; Nyquist when `None`.
    pub fmax: Option<f64>,
    pub pre_emphasis: f64,
    pub delta_window: usize,
    pub target_frames: usize,
    pub log_floor: f64,
}

impl Default for MfccConfig {
    fn default() -> Self {
        MfccConfig {
            frame_len_ms: 25.0,
            hop_ms: 10.0,
            n_fft: 2048,
            n_mels: 26,
            n_coeffs: 13,
            fmin: 0.0,
            fmax: None,
            pre_emphasis: 0.97,
            delta_window: 2,
            target_frames: FEATURE_COLS,
            log_floor: 1e-10,
        }
    }
}

impl MfccConfig {
    pub fn frame_len(&self, rate: u32) -> usize {
        ((self.frame_len_ms * rate as f64 / 1000.0) as usize).max(1)
    }

    pub fn hop(&self, rate: u32) -> usize {
        ((self.hop_ms * rate as f64 / 1000.0) as usize).max(1)
    }

    pub fn fmax_for(&self, rate: u32) -> f64 {
        self.fmax.unwrap_or(rate as f64 / 2.0)
    }

    pub fn validate(&self, rate: u32) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        let frame_len = self.frame_len(rate);
        if self.n_coeffs == 0 || self.n_coeffs > self.n_mels {
            return bad(format!("n_coeffs {} must be in 1..={}", self.n_coeffs, self.n_mels));
        }
        if !self.n_fft.is_power_of_two() || self.n_fft < frame_len {
            return Err(Error::BadFftSize {
                n_fft: self.n_fft,
                frame_len,
            });
        }
        if self.hop(rate) > frame_len {
            return bad("hop must not exceed the frame length".into());
        }
        if !(self.fmax_for(rate) <= rate as f64 / 2.0) || !(self.fmin >= 0.0) {
            return bad(format!("fmax must be <= {} Hz and fmin >= 0", rate as f64 / 2.0));
        }
        if !(0.0..1.0).contains(&self.pre_emphasis) {
            return bad(format!("pre_emphasis {} outside [0, 1)", self.pre_emphasis));
        }
        if self.delta_window == 0 || self.target_frames == 0 || !(self.log_floor > 0.0) {
            return bad("delta_window, target_frames and log_floor must be positive".into());
        }
        Ok(())
    }
}

/// `y[0] = x[0]`, `y[t] = x[t] - alpha * x[t-1]`.
pub fn pre_emphasize(signal: &[f64], alpha: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(signal.len());
    if let Some(&first) = signal.first() {
        out.push(first);
    }
    out.extend(signal.windows(2).map(|w| w[1] - alpha * w[0]));
    out
}

/// Frames start every `hop` samples. Signals shorter than one frame yield a
/// single zero-padded frame.
pub fn frame_signal(signal: &[f64], frame_len: usize, hop: usize) -> Vec<Vec<f64>> {
    assert!(hop >= 1 && frame_len >= hop, "need frame_len >= hop >= 1");
    if signal.len() < frame_len {
        let mut frame = signal.to_vec();
        frame.resize(frame_len, 0.0);
        return vec![frame];
    }
    let count = 1 + (signal.len() - frame_len) / hop;
    (0..count)
        .map(|i| signal[i * hop..i * hop + frame_len].to_vec())
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Window {
    Hamming,
    Rectangular,
}

impl Window {
    pub fn coefficients(self, len: usize) -> Vec<f64> {
        match self {
            Window::Rectangular => vec![1.0; len],
            Window::Hamming if len == 1 => vec![1.0],
            Window::Hamming => (0..len)
                .map(|n| 0.54 - 0.46 * (2.0 * PI * n as f64 / (len - 1) as f64).cos())
                .collect(),
        }
    }
}

fn check_fft_size(n_fft: usize, frame_len: usize) -> Result<()> {
    if !n_fft.is_power_of_two() || n_fft < frame_len {
        return Err(Error::BadFftSize { n_fft, frame_len });
    }
    Ok(())
}

/// Hamming-windowed periodogram `|DFT_k|^2 / n_fft` for `k = 0..=n_fft/2`.
pub fn power_spectrum(frame: &[f64], n_fft: usize) -> Result<Vec<f64>> {
    power_spectrum_with_window(frame, n_fft, Window::Hamming)
}

pub fn power_spectrum_with_window(frame: &[f64], n_fft: usize, window: Window) -> Result<Vec<f64>> {
    check_fft_size(n_fft, frame.len())?;
    let w = window.coefficients(frame.len());
    Ok(windowed_power(&FftPair::new(n_fft), frame, &w))
}

fn windowed_power(fft: &FftPair, frame: &[f64], window: &[f64]) -> Vec<f64> {
    let windowed: Vec<f64> = frame.iter().zip(window).map(|(x, w)| x * w).collect();
    let spectrum = fft.forward_real(&windowed);
    let n = fft.len();
    spectrum[..=n / 2]
        .iter()
        .map(|c| c.norm_sqr() / n as f64)
        .collect()
}

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Center FFT bins of `n_mels + 2` points equally spaced on the mel scale.
fn mel_points(n_mels: usize, n_fft: usize, rate: u32, fmin: f64, fmax: f64) -> Vec<usize> {
    let (lo, hi) = (hz_to_mel(fmin), hz_to_mel(fmax));
    (0..n_mels + 2)
        .map(|i| {
            let hz = mel_to_hz(lo + (hi - lo) * i as f64 / (n_mels + 1) as f64);
            (hz * n_fft as f64 / rate as f64).round() as usize
        })
        .collect()
}

/// Triangular mel filters, one row per filter over `n_fft/2 + 1` bins.
/// Row `m` rises from the previous center bin to 1 at its own center and
/// falls to 0 at the next center.
pub fn mel_filterbank(n_mels: usize, n_fft: usize, rate: u32, fmin: f64, fmax: f64) -> Result<Array2<f64>> {
    if !(fmin < fmax) || fmax > rate as f64 / 2.0 || fmin < 0.0 {
        return Err(Error::InvalidConfig(format!(
            "need 0 <= fmin < fmax <= {} Hz, got {fmin}..{fmax}",
            rate as f64 / 2.0
        )));
    }
    let points = mel_points(n_mels, n_fft, rate, fmin, fmax);
    let bins = n_fft / 2 + 1;
    let mut fb = Array2::zeros((n_mels, bins));
    for m in 0..n_mels {
        let (l, c, r) = (points[m], points[m + 1], points[m + 2]);
        if !(l < c && c < r) {
            return Err(Error::DegenerateBand(m));
        }
        for k in l..=r.min(bins - 1) {
            fb[[m, k]] = if k <= c {
                (k - l) as f64 / (c - l) as f64
            } else {
                (r - k) as f64 / (r - c) as f64
            };
        }
    }
    Ok(fb)
}

/// Orthonormal DCT-II basis, `n_out x n_in`.
pub fn dct_matrix(n_out: usize, n_in: usize) -> Array2<f64> {
    let n = n_in as f64;
    Array2::from_shape_fn((n_out, n_in), |(k, i)| {
        let scale = if k == 0 { (1.0 / n).sqrt() } else { (2.0 / n).sqrt() };
        scale * (PI * k as f64 * (2 * i + 1) as f64 / (2.0 * n)).cos()
    })
}

/// Reusable MFCC extractor for one sample rate and configuration.
#[derive(Clone)]
pub struct MfccExtractor {
    config: MfccConfig,
    rate: u32,
    fft: FftPair,
    window: Vec<f64>,
    /// Non-zero span of each filter: first bin and weights.
    filters: Vec<(usize, Vec<f64>)>,
    dct: Array2<f64>,
}

impl MfccExtractor {
    pub fn new(config: &MfccConfig, rate: u32) -> Result<Self> {
        config.validate(rate)?;
        let fb = mel_filterbank(config.n_mels, config.n_fft, rate, config.fmin, config.fmax_for(rate))?;
        let filters = fb
            .outer_iter()
            .map(|row| {
                let first = row.iter().position(|&w| w != 0.0).unwrap_or(0);
                let last = row.iter().rposition(|&w| w != 0.0).unwrap_or(0);
                (first, row.slice(s![first..=last]).to_vec())
            })
            .collect();
        Ok(MfccExtractor {
            config: config.clone(),
            rate,
            fft: FftPair::new(config.n_fft),
            window: Window::Hamming.coefficients(config.frame_len(rate)),
            filters,
            dct: dct_matrix(config.n_coeffs, config.n_mels),
        })
    }

    pub fn config(&self) -> &MfccConfig {
        &self.config
    }

    pub fn sample_rate(&self) -> u32 {
        self.rate
    }

    /// Static coefficients, `n_coeffs x frames`.
    pub fn mfcc(&self, clip: &AudioClip) -> Result<Array2<f64>> {
        if clip.is_empty() {
            return Err(Error::EmptyClip);
        }
        if clip.sample_rate() != self.rate {
            return Err(Error::RateMismatch(clip.sample_rate(), self.rate));
        }
        let cfg = &self.config;
        let emphasized = pre_emphasize(clip.samples(), cfg.pre_emphasis);
        let frames = frame_signal(&emphasized, cfg.frame_len(self.rate), cfg.hop(self.rate));
        let mut out = Array2::zeros((cfg.n_coeffs, frames.len()));
        let mut log_mel = vec![0.0; cfg.n_mels];
        for (t, frame) in frames.iter().enumerate() {
            let power = windowed_power(&self.fft, frame, &self.window);
            for (lm, (first, weights)) in log_mel.iter_mut().zip(&self.filters) {
                let e: f64 = weights.iter().zip(&power[*first..]).map(|(w, p)| w * p).sum();
                *lm = e.max(cfg.log_floor).ln();
            }
            for (k, basis) in self.dct.outer_iter().enumerate() {
                out[[k, t]] = basis.iter().zip(&log_mel).map(|(b, x)| b * x).sum();
            }
        }
        Ok(out)
    }

    /// Unstandardized 39-row feature map.
    pub fn feature_map(&self, clip: &AudioClip) -> Result<FeatureMap> {
        let stat = self.mfcc(clip)?;
        let d1 = delta(&stat, self.config.delta_window);
        let d2 = delta(&d1, self.config.delta_window);
        let stacked = ndarray::concatenate(Axis(0), &[stat.view(), d1.view(), d2.view()])
            .expect("equal frame counts");
        FeatureMap::new(fit_frames(stacked.view(), self.config.target_frames))
    }
}

pub fn mfcc(clip: &AudioClip, config: &MfccConfig) -> Result<Array2<f64>> {
    MfccExtractor::new(config, clip.sample_rate())?.mfcc(clip)
}

/// Regression deltas over `+-window` frames with edge replication.
pub fn delta(coeffs: &Array2<f64>, window: usize) -> Array2<f64> {
    let (rows, frames) = coeffs.dim();
    let mut out = Array2::zeros((rows, frames));
    if frames == 0 {
        return out;
    }
    let denom = 2.0 * (1..=window).map(|n| (n * n) as f64).sum::<f64>();
    let last = frames as i64 - 1;
    let at = |t: i64| t.clamp(0, last) as usize;
    for t in 0..frames as i64 {
        for n in 1..=window as i64 {
            let (fwd, back) = (at(t + n), at(t - n));
            for r in 0..rows {
                out[[r, t as usize]] += n as f64 * (coeffs[[r, fwd]] - coeffs[[r, back]]);
            }
        }
    }
    out.mapv_inplace(|v| v / denom);
    out
}

/// Center-crops or symmetrically zero-pads the column axis to `target`
/// (padding splits as floor/ceil, the extra column on the right).
pub fn fit_frames(map: ArrayView2<f64>, target: usize) -> Array2<f64> {
    let (rows, cols) = map.dim();
    if cols >= target {
        let start = (cols - target) / 2;
        return map.slice(s![.., start..start + target]).to_owned();
    }
    let left = (target - cols) / 2;
    let mut out = Array2::zeros((rows, target));
    out.slice_mut(s![.., left..left + cols]).assign(&map);
    out
}

/// Per-row z-score statistics estimated on a training set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardization {
    pub fn identity(rows: usize) -> Self {
        Standardization {
            mean: vec![0.0; rows],
            std: vec![1.0; rows],
        }
    }

    /// Mean and population standard deviation of each row over every column
    /// of every map. Rows with (near) zero spread get unit scale.
    pub fn fit<'a>(maps: impl IntoIterator<Item = &'a FeatureMap>) -> Self {
        let mut sum = vec![0.0; FEATURE_ROWS];
        let mut sum_sq = vec![0.0; FEATURE_ROWS];
        let mut count = 0usize;
        for map in maps {
            for (r, row) in map.values().outer_iter().enumerate() {
                sum[r] += row.sum();
                sum_sq[r] += row.iter().map(|v| v * v).sum::<f64>();
            }
            count += map.values().ncols();
        }
        if count == 0 {
            return Standardization::identity(FEATURE_ROWS);
        }
        let n = count as f64;
        let mean: Vec<f64> = sum.iter().map(|s| s / n).collect();
        let std = sum_sq
            .iter()
            .zip(&mean)
            .map(|(sq, m)| {
                let sd = (sq / n - m * m).max(0.0).sqrt();
                if sd > 1e-8 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Standardization { mean, std }
    }

    pub fn apply(&self, map: &FeatureMap) -> FeatureMap {
        let mut values = map.values().clone();
        for (r, mut row) in values.outer_iter_mut().enumerate() {
            let (m, s) = (self.mean[r], self.std[r]);
            row.mapv_inplace(|v| (v - m) / s);
        }
        FeatureMap { values }
    }
}

/// A 39 x 39 matrix: rows 0-12 static MFCCs, 13-25 deltas, 26-38
/// delta-deltas; columns are frames.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    values: Array2<f64>,
}

impl FeatureMap {
    pub fn new(values: Array2<f64>) -> Result<Self> {
        if values.dim() != (FEATURE_ROWS, FEATURE_COLS) {
            return Err(Error::ShapeMismatch(format!(
                "feature map must be {FEATURE_ROWS}x{FEATURE_COLS}, got {:?}",
                values.dim()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig("feature map has non-finite entries".into()));
        }
        Ok(FeatureMap { values })
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    /// Row-major copy of the values.
    pub fn to_vec(&self) -> Vec<f64> {
        self.values.iter().copied().collect()
    }
}

pub fn feature_map(clip: &AudioClip, config: &MfccConfig, stats: Option<&Standardization>) -> Result<FeatureMap> {
    let map = MfccExtractor::new(config, clip.sample_rate())?.feature_map(clip)?;
    Ok(match stats {
        Some(s) => s.apply(&map),
        None => map,
    })
}

pub const FEATURE_MAGIC: [u8; 4] = *b"SDFM";
pub const FEATURE_VERSION: u32 = 1;

/// Binary record: magic, version, rows, cols (u32 LE), then row-major f32 LE.
pub fn write_feature_record(map: &FeatureMap, mut w: impl Write) -> Result<()> {
    let (rows, cols) = map.values.dim();
    w.write_all(&FEATURE_MAGIC)?;
    for v in [FEATURE_VERSION, rows as u32, cols as u32] {
        w.write_all(&v.to_le_bytes())?;
    }
    for &v in map.values.iter() {
        w.write_all(&(v as f32).to_le_bytes())?;
    }
    Ok(())
}

pub fn read_feature_record(mut r: impl Read) -> Result<FeatureMap> {
    let mut header = [0u8; 16];
    r.read_exact(&mut header)?;
    if header[..4] != FEATURE_MAGIC {
        return Err(Error::BadMagic("feature record".into()));
    }
    let word = |i: usize| u32::from_le_bytes(header[i..i + 4].try_into().unwrap());
    let version = word(4);
    if version != FEATURE_VERSION {
        return Err(Error::InvalidConfig(format!("feature record version {version}")));
    }
    let (rows, cols) = (word(8) as usize, word(12) as usize);
    let mut payload = vec![0u8; rows * cols * 4];
    r.read_exact(&mut payload)?;
    let values = payload
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()) as f64)
        .collect();
    let values = Array2::from_shape_vec((rows, cols), values)
        .map_err(|e| Error::ShapeMismatch(e.to_string()))?;
    FeatureMap::new(values)
}

pub fn save_feature_record(map: &FeatureMap, path: impl AsRef<Path>) -> Result<()> {
    let mut buf = Vec::with_capacity(16 + FEATURE_ROWS * FEATURE_COLS * 4);
    write_feature_record(map, &mut buf)?;
    fs::write(path, buf)?;
    Ok(())
}

pub fn load_feature_record(path: impl AsRef<Path>) -> Result<FeatureMap> {
    read_feature_record(fs::read(path)?.as_slice())
}

/// One line per row, comma-separated, for inspecting a single clip.
pub fn feature_csv(map: &FeatureMap) -> String {
    let mut out = String::new();
    for row in map.values.outer_iter() {
        let line: Vec<String> = row.iter().map(|v| format!("{v:.6}")).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}
