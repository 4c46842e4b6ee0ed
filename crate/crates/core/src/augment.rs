//! Clip cleanup (silence trimming, spectral-gate noise reduction) and the
//! four augmentation operators: time shift, speed change, noise mixing and
//! volume change.

use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::audio::{clip_sample, mean_power, read_wav, resample, stretch_linear, write_wav, AudioClip};
use crate::dataset::{DatasetManifest, ManifestEntry, Origin};
use crate::error::{Error, Result};
use crate::spectral::Stft;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentConfig {
    /// Shifts are drawn uniformly from `[-shift_range_ms, shift_range_ms]`.
    pub shift_range_ms: f64,
    pub speed_factors: Vec<f64>,
    /// `f64::INFINITY` adds no noise.
    pub snr_db_choices: Vec<f64>,
    pub gain_db_range: (f64, f64),
    /// Augmented copies per source clip.
    pub multiplier: usize,
    /// Operators applied per copy, drawn without replacement.
    pub chain_length: usize,
    /// Directory of background-noise WAVs; seeded white noise when absent.
    pub noise_dir: Option<PathBuf>,
    pub seed: u64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            shift_range_ms: 100.0,
            speed_factors: vec![0.9, 1.0, 1.1],
            snr_db_choices: vec![5.0, 10.0, 20.0],
            gain_db_range: (-6.0, 6.0),
            multiplier: 1,
            chain_length: 1,
            noise_dir: None,
            seed: 0,
        }
    }
}

impl AugmentConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if !(self.shift_range_ms >= 0.0) {
            return bad(format!("shift_range_ms {} must be >= 0", self.shift_range_ms));
        }
        if self.speed_factors.is_empty() || self.snr_db_choices.is_empty() {
            return bad("speed_factors and snr_db_choices must be non-empty".into());
        }
        if let Some(f) = self.speed_factors.iter().find(|&&f| !(f > 0.5 && f <= 2.0)) {
            return bad(format!("speed factor {f} outside (0.5, 2.0]"));
        }
        if self.snr_db_choices.iter().any(|s| s.is_nan()) {
            return bad("snr_db_choices contains NaN".into());
        }
        let (lo, hi) = self.gain_db_range;
        if !(lo <= hi) {
            return bad(format!("gain_db_range ({lo}, {hi}) is empty"));
        }
        if self.multiplier == 0 {
            return bad("multiplier must be at least 1".into());
        }
        if self.chain_length == 0 || self.chain_length > AugmentKind::ALL.len() {
            return bad(format!("chain_length must be in 1..={}", AugmentKind::ALL.len()));
        }
        Ok(())
    }
}

/// Stationary noise magnitude per STFT bin (`n_fft / 2 + 1` entries).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseProfile {
    pub magnitude_floor: Vec<f64>,
}

impl NoiseProfile {
    pub fn n_fft(&self) -> usize {
        2 * (self.magnitude_floor.len().saturating_sub(1))
    }
}

/// Drops leading and trailing frames whose RMS falls below
/// `peak * 10^(threshold_db / 20)` (so `threshold_db` is negative, e.g. -40).
/// At least one frame is always kept.
pub fn trim_silence(clip: &AudioClip, threshold_db: f64, frame_ms: f64) -> Result<AudioClip> {
    if clip.is_empty() {
        return Err(Error::EmptyClip);
    }
    if !(frame_ms > 0.0) {
        return Err(Error::InvalidConfig(format!("frame_ms {frame_ms} must be > 0")));
    }
    let frame_len = ((frame_ms * clip.sample_rate() as f64 / 1000.0).round() as usize).max(1);
    let samples = clip.samples();
    let floor = clip.peak() * 10f64.powf(threshold_db / 20.0);
    let loud: Vec<bool> = samples
        .chunks(frame_len)
        .map(|frame| clip.peak() > 0.0 && mean_power(frame).sqrt() >= floor)
        .collect();
    let (start, end) = match (loud.iter().position(|&l| l), loud.iter().rposition(|&l| l)) {
        (Some(first), Some(last)) => (first * frame_len, ((last + 1) * frame_len).min(samples.len())),
        _ => (0, frame_len.min(samples.len())),
    };
    Ok(AudioClip::new(samples[start..end].to_vec(), clip.sample_rate()))
}

/// Mean STFT magnitude over the quietest 10% of full frames (hop `n_fft/2`).
pub fn estimate_noise_profile(clip: &AudioClip, n_fft: usize) -> Result<NoiseProfile> {
    if n_fft < 2 || n_fft % 2 != 0 {
        return Err(Error::InvalidConfig(format!("n_fft {n_fft} must be even and >= 2")));
    }
    let needed = n_fft + 9 * (n_fft / 2);
    if clip.len() < needed {
        return Err(Error::TooShort {
            needed,
            got: clip.len(),
        });
    }
    let mut frames = Stft::new(n_fft).interior_magnitudes(clip.samples());
    frames.sort_by(|a, b| a.0.total_cmp(&b.0));
    let take = frames.len().div_ceil(10);
    let mut floor = vec![0.0; n_fft / 2 + 1];
    for (_, mags) in &frames[..take] {
        for (f, m) in floor.iter_mut().zip(mags) {
            *f += m;
        }
    }
    floor.iter_mut().for_each(|f| *f /= take as f64);
    Ok(NoiseProfile {
        magnitude_floor: floor,
    })
}

/// Spectral gate: zeroes every STFT bin whose magnitude is below
/// `gate_factor * profile`, then resynthesizes by overlap-add. Bins above
/// the gate pass untouched.
pub fn reduce_noise(clip: &AudioClip, profile: &NoiseProfile, gate_factor: f64) -> Result<AudioClip> {
    if !(gate_factor >= 0.0) {
        return Err(Error::InvalidConfig(format!("gate_factor {gate_factor} must be >= 0")));
    }
    let n_fft = profile.n_fft();
    if n_fft < 2 {
        return Err(Error::ProfileLengthMismatch {
            expected: 2,
            got: profile.magnitude_floor.len(),
        });
    }
    if clip.is_empty() {
        return Ok(clip.clone());
    }
    let stft = Stft::new(n_fft);
    let mut spectra = stft.analyze(clip.samples());
    for spectrum in &mut spectra {
        for (k, bin) in spectrum.iter_mut().enumerate() {
            let gate = gate_factor * profile.magnitude_floor[k.min(n_fft - k)];
            if bin.norm() < gate {
                *bin = Default::default();
            }
        }
    }
    let out = stft.synthesize(spectra, clip.len());
    Ok(AudioClip::new(out, clip.sample_rate()))
}

/// Rotates samples right by `round(shift_ms * rate / 1000)` with zero fill.
/// Positive shifts delay the onset.
pub fn time_shift(clip: &AudioClip, shift_ms: f64) -> Result<AudioClip> {
    let duration_ms = clip.duration_ms();
    let shift = (shift_ms * clip.sample_rate() as f64 / 1000.0).round() as i64;
    if !(shift_ms.abs() < duration_ms) || shift.unsigned_abs() as usize >= clip.len() {
        return Err(Error::ShiftOutOfRange {
            shift_ms,
            duration_ms,
        });
    }
    let n = clip.len();
    let k = shift.unsigned_abs() as usize;
    let src = clip.samples();
    let mut out = vec![0.0; n];
    if shift >= 0 {
        out[k..].copy_from_slice(&src[..n - k]);
    } else {
        out[..n - k].copy_from_slice(&src[k..]);
    }
    Ok(AudioClip::new(out, clip.sample_rate()))
}

/// Naive speed change: length becomes `round(len / factor)` and the declared
/// sample rate is kept, so pitch scales with tempo.
pub fn speed_tune(clip: &AudioClip, factor: f64) -> Result<AudioClip> {
    if !(factor > 0.5 && factor <= 2.0) {
        return Err(Error::FactorOutOfRange(factor));
    }
    if clip.is_empty() {
        return Err(Error::EmptyClip);
    }
    let out_len = ((clip.len() as f64 / factor).round() as usize).max(1);
    Ok(AudioClip::new(
        stretch_linear(clip.samples(), out_len, factor),
        clip.sample_rate(),
    ))
}

/// Gain that brings `noise_power` to `signal_power / 10^(snr_db/10)`.
pub fn noise_scale(signal_power: f64, noise_power: f64, snr_db: f64) -> f64 {
    if snr_db == f64::INFINITY || signal_power == 0.0 {
        return 0.0;
    }
    (signal_power / (noise_power * 10f64.powf(snr_db / 10.0))).sqrt()
}

/// Noise looped or truncated to `len` samples.
pub fn fit_noise(noise: &[f64], len: usize) -> Vec<f64> {
    noise.iter().copied().cycle().take(len).collect()
}

/// Adds `noise`, looped to the clip length and scaled to the requested SNR,
/// then clips to `[-1, 1]`. `snr_db = +inf` returns the clip unchanged.
pub fn mix_noise(clip: &AudioClip, noise: &AudioClip, snr_db: f64) -> Result<AudioClip> {
    if snr_db.is_nan() {
        return Err(Error::InvalidConfig("snr_db is NaN".into()));
    }
    if clip.sample_rate() != noise.sample_rate() {
        return Err(Error::RateMismatch(clip.sample_rate(), noise.sample_rate()));
    }
    if snr_db == f64::INFINITY {
        return Ok(clip.clone());
    }
    let fitted = fit_noise(noise.samples(), clip.len());
    let noise_power = mean_power(&fitted);
    if noise_power == 0.0 {
        return Err(Error::SilentNoise);
    }
    let scale = noise_scale(clip.power(), noise_power, snr_db);
    let mixed = clip
        .samples()
        .iter()
        .zip(&fitted)
        .map(|(s, n)| s + scale * n)
        .collect();
    Ok(AudioClip::new(mixed, clip.sample_rate()))
}

pub fn adjust_volume(clip: &AudioClip, gain_db: f64) -> AudioClip {
    let gain = 10f64.powf(gain_db / 20.0);
    AudioClip::new(
        clip.samples().iter().map(|s| clip_sample(s * gain)).collect(),
        clip.sample_rate(),
    )
}

/// Scales the clip so its peak equals `target` (silent clips pass through).
pub fn normalize_peak(clip: &AudioClip, target: f64) -> AudioClip {
    let peak = clip.peak();
    if peak == 0.0 {
        return clip.clone();
    }
    let g = target / peak;
    AudioClip::new(clip.samples().iter().map(|s| s * g).collect(), clip.sample_rate())
}

/// Cleanup applied to every clip before feature extraction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PreprocessConfig {
    pub trim_silence: bool,
    pub trim_threshold_db: f64,
    pub trim_frame_ms: f64,
    pub noise_reduction: bool,
    pub gate_factor: f64,
    pub noise_n_fft: usize,
    pub peak_normalize: Option<f64>,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig {
            trim_silence: true,
            trim_threshold_db: -40.0,
            trim_frame_ms: 20.0,
            noise_reduction: false,
            gate_factor: 1.5,
            noise_n_fft: 2048,
            peak_normalize: None,
        }
    }
}

/// Noise reduction (profile estimated from the clip itself, skipped when the
/// clip is too short to profile), silence trimming, then optional peak
/// normalization.
pub fn preprocess(clip: &AudioClip, cfg: &PreprocessConfig) -> Result<AudioClip> {
    let mut clip = clip.clone();
    if cfg.noise_reduction {
        match estimate_noise_profile(&clip, cfg.noise_n_fft) {
            Ok(profile) => clip = reduce_noise(&clip, &profile, cfg.gate_factor)?,
            Err(Error::TooShort { .. }) => {}
            Err(e) => return Err(e),
        }
    }
    if cfg.trim_silence {
        clip = trim_silence(&clip, cfg.trim_threshold_db, cfg.trim_frame_ms)?;
    }
    if let Some(target) = cfg.peak_normalize {
        clip = normalize_peak(&clip, target);
    }
    Ok(clip)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AugmentKind {
    TimeShift,
    Speed,
    Noise,
    Volume,
}

impl AugmentKind {
    pub const ALL: [AugmentKind; 4] = [
        AugmentKind::TimeShift,
        AugmentKind::Speed,
        AugmentKind::Noise,
        AugmentKind::Volume,
    ];
}

/// One operator with its drawn parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum AugmentOp {
    TimeShift { shift_ms: f64 },
    Speed { factor: f64 },
    Noise { snr_db: f64 },
    Volume { gain_db: f64 },
}

/// Where background noise comes from when mixing.
#[derive(Debug, Clone)]
pub enum NoiseSource {
    White,
    Clips(Vec<AudioClip>),
}

impl NoiseSource {
    pub fn from_config(config: &AugmentConfig) -> Result<NoiseSource> {
        let Some(dir) = &config.noise_dir else {
            return Ok(NoiseSource::White);
        };
        let mut paths: Vec<PathBuf> = fs::read_dir(dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| {
                p.extension()
                    .map(|x| x.eq_ignore_ascii_case("wav"))
                    .unwrap_or(false)
            })
            .collect();
        paths.sort();
        let clips = paths
            .iter()
            .map(read_wav)
            .filter(|c| c.as_ref().map(|c| c.power() > 0.0).unwrap_or(true))
            .collect::<Result<Vec<_>>>()?;
        if clips.is_empty() {
            return Err(Error::SilentNoise);
        }
        Ok(NoiseSource::Clips(clips))
    }

    fn draw(&self, len: usize, rate: u32, rng: &mut impl Rng) -> Result<AudioClip> {
        match self {
            NoiseSource::White => {
                let normal = Normal::new(0.0, 0.1).expect("finite std");
                Ok(AudioClip::new(
                    (0..len.max(1)).map(|_| normal.sample(rng)).collect(),
                    rate,
                ))
            }
            NoiseSource::Clips(clips) => {
                let clip = clips.choose(rng).expect("non-empty noise set");
                resample(clip, rate)
            }
        }
    }
}

/// Draws an operator chain from the configured ranges.
pub fn draw_chain(config: &AugmentConfig, rng: &mut impl Rng) -> Vec<AugmentOp> {
    let mut kinds = AugmentKind::ALL;
    kinds.shuffle(rng);
    kinds[..config.chain_length]
        .iter()
        .map(|kind| match kind {
            AugmentKind::TimeShift => {
                let r = config.shift_range_ms;
                let shift_ms = if r > 0.0 { rng.random_range(-r..=r) } else { 0.0 };
                AugmentOp::TimeShift { shift_ms }
            }
            AugmentKind::Speed => AugmentOp::Speed {
                factor: *config.speed_factors.choose(rng).expect("validated"),
            },
            AugmentKind::Noise => AugmentOp::Noise {
                snr_db: *config.snr_db_choices.choose(rng).expect("validated"),
            },
            AugmentKind::Volume => {
                let (lo, hi) = config.gain_db_range;
                let gain_db = if hi > lo { rng.random_range(lo..=hi) } else { lo };
                AugmentOp::Volume { gain_db }
            }
        })
        .collect()
}

pub fn apply_op(
    clip: &AudioClip,
    op: AugmentOp,
    noise: &NoiseSource,
    rng: &mut impl Rng,
) -> Result<AudioClip> {
    match op {
        AugmentOp::TimeShift { shift_ms } => {
            // Keep the shift strictly inside the clip.
            let limit = (clip.duration_ms() - 1000.0 / clip.sample_rate() as f64).max(0.0);
            time_shift(clip, shift_ms.clamp(-limit, limit))
        }
        AugmentOp::Speed { factor } => speed_tune(clip, factor),
        AugmentOp::Noise { snr_db } => {
            let n = noise.draw(clip.len(), clip.sample_rate(), rng)?;
            mix_noise(clip, &n, snr_db)
        }
        AugmentOp::Volume { gain_db } => Ok(adjust_volume(clip, gain_db)),
    }
}

/// Random stream for copy generation of source clip `index`; independent of
/// processing order.
pub fn clip_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

/// `<stem>.aug<k>.wav` next to `path` (relative, `/`-separated).
pub fn augmented_path(path: &str, k: usize) -> String {
    let (dir, file) = match path.rfind('/') {
        Some(i) => (&path[..=i], &path[i + 1..]),
        None => ("", path),
    };
    let stem = Path::new(file)
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| file.to_string());
    format!("{dir}{stem}.aug{k}.wav")
}

/// Writes `multiplier` augmented copies of every original clip beside it and
/// returns the manifest with each original followed by its copies. Entries
/// already marked augmented pass through untouched.
pub fn augment_dataset(manifest: &DatasetManifest, config: &AugmentConfig) -> Result<DatasetManifest> {
    config.validate()?;
    let noise = NoiseSource::from_config(config)?;
    let groups = manifest
        .entries
        .par_iter()
        .enumerate()
        .map(|(index, entry)| -> Result<Vec<ManifestEntry>> {
            if entry.origin == Origin::Augmented {
                return Ok(vec![entry.clone()]);
            }
            let clip = read_wav(manifest.resolve(entry))?;
            let mut rng = clip_rng(config.seed, index);
            let mut out = vec![entry.clone()];
            for k in 1..=config.multiplier {
                let mut copy = clip.clone();
                for op in draw_chain(config, &mut rng) {
                    copy = apply_op(&copy, op, &noise, &mut rng)?;
                }
                let rel = augmented_path(&entry.path, k);
                write_wav(&copy, manifest.root.join(&rel))?;
                out.push(ManifestEntry {
                    path: rel,
                    origin: Origin::Augmented,
                    ..entry.clone()
                });
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DatasetManifest {
        entries: groups.into_iter().flatten().collect(),
        ..manifest.clone()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn tone(freq: f64, amp: f64, len: usize, rate: u32) -> Vec<f64> {
        (0..len)
            .map(|i| amp * (2.0 * PI * freq * i as f64 / rate as f64).sin())
            .collect()
    }

    fn white(len: usize, std: f64, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = Normal::new(0.0, std).unwrap();
        (0..len).map(|_| n.sample(&mut rng)).collect()
    }

    #[test]
    fn trim_keeps_loud_clip() {
        let clip = AudioClip::new(tone(300.0, 0.5, 4410, 44100), 44100);
        assert_eq!(trim_silence(&clip, -40.0, 20.0).unwrap(), clip);
    }

    #[test]
    fn trim_all_zero_keeps_one_frame() {
        let clip = AudioClip::new(vec![0.0; 44100], 44100);
        assert_eq!(trim_silence(&clip, -40.0, 20.0).unwrap().len(), 882);
        assert!(matches!(
            trim_silence(&AudioClip::new(vec![], 44100), -40.0, 20.0),
            Err(Error::EmptyClip)
        ));
    }

    #[test]
    fn trim_padded_tone() {
        let rate = 44100;
        let mut s = vec![0.0; rate as usize / 2];
        s.extend(tone(440.0, 0.6, rate as usize, rate));
        s.extend(vec![0.0; rate as usize / 2]);
        let out = trim_silence(&AudioClip::new(s, rate), -40.0, 20.0).unwrap();
        // Frames are 882 samples; 0.5 s of silence is exactly 25 frames.
        assert!((out.len() as i64 - rate as i64).abs() <= 882);
        assert!(out.samples()[..10].iter().any(|&x| x != 0.0));
    }

    #[test]
    fn noise_profile_of_silence_is_zero() {
        let clip = AudioClip::new(vec![0.0; 8192], 16000);
        let p = estimate_noise_profile(&clip, 512).unwrap();
        assert_eq!(p.magnitude_floor.len(), 257);
        assert!(p.magnitude_floor.iter().all(|&m| m == 0.0));
        assert!(matches!(
            estimate_noise_profile(&AudioClip::new(vec![0.0; 1000], 16000), 512),
            Err(Error::TooShort { .. })
        ));
    }

    #[test]
    fn noise_profile_selects_silent_tail() {
        let rate = 16000;
        let mut s = tone(1000.0, 0.9, 16000, rate);
        s.extend(vec![0.0; 4096]);
        let p = estimate_noise_profile(&AudioClip::new(s, rate), 512).unwrap();
        // Bin of 1 kHz at n_fft 512, 16 kHz.
        assert!(p.magnitude_floor[32] < 1e-9);
    }

    #[test]
    fn noise_profile_of_white_noise_is_flat() {
        let n_fft = 512;
        let std = 0.1;
        // Interior bins of a windowed Gaussian frame are complex Gaussian with
        // variance std^2 * sum(w^2); their magnitude is Rayleigh distributed.
        let sum_w2: f64 = crate::spectral::sqrt_hann(n_fft).iter().map(|w| w * w).sum();
        let expected = (PI / 4.0 * std * std * sum_w2).sqrt();
        let mut mean = vec![0.0; n_fft / 2 + 1];
        for draw in 0..100 {
            let clip = AudioClip::new(white(16 * n_fft, std, draw), 16000);
            let p = estimate_noise_profile(&clip, n_fft).unwrap();
            for (m, v) in mean.iter_mut().zip(&p.magnitude_floor) {
                *m += v / 100.0;
            }
        }
        for m in &mean[1..n_fft / 2] {
            assert!((m / expected - 1.0).abs() < 0.2, "{m} vs {expected}");
        }
    }

    #[test]
    fn zero_profile_reconstructs() {
        let clip = AudioClip::new(white(5000, 0.2, 1), 16000);
        let profile = NoiseProfile {
            magnitude_floor: vec![0.0; 257],
        };
        let out = reduce_noise(&clip, &profile, 3.0).unwrap();
        assert_eq!(out.len(), clip.len());
        for (a, b) in out.samples().iter().zip(clip.samples()) {
            assert!((a - b).abs() < 1e-6);
        }
        let silence = AudioClip::new(vec![0.0; 3000], 16000);
        let noisy = NoiseProfile {
            magnitude_floor: vec![1.0; 257],
        };
        assert_eq!(reduce_noise(&silence, &noisy, 1.5).unwrap(), silence);
    }

    #[test]
    fn gating_never_adds_energy() {
        let clip = AudioClip::new(white(6000, 0.2, 7), 16000);
        let profile = estimate_noise_profile(&AudioClip::new(white(8192, 0.1, 8), 16000), 256).unwrap();
        for gate in [0.0, 0.5, 1.5, 4.0] {
            let out = reduce_noise(&clip, &profile, gate).unwrap();
            assert!(out.power() <= clip.power() + 1e-15);
        }
    }

    #[test]
    fn profile_length_is_checked() {
        let clip = AudioClip::new(vec![0.1; 100], 16000);
        let profile = NoiseProfile {
            magnitude_floor: vec![0.0; 1],
        };
        assert!(matches!(
            reduce_noise(&clip, &profile, 1.0),
            Err(Error::ProfileLengthMismatch { .. })
        ));
    }

    /// Power at the tone's bins over mean power elsewhere, from one long FFT.
    fn tone_to_rest_db(x: &[f64], tone_bin: usize) -> f64 {
        let fft = crate::spectral::FftPair::new(x.len());
        let spec = fft.forward_real(x);
        let half = x.len() / 2;
        let (mut tone, mut rest, mut rest_n) = (0.0, 0.0, 0usize);
        for (k, c) in spec[1..half].iter().enumerate() {
            let k = k + 1;
            let p = c.norm_sqr();
            if k.abs_diff(tone_bin) <= 2 {
                tone += p;
            } else {
                rest += p;
                rest_n += 1;
            }
        }
        10.0 * (tone / (rest / rest_n as f64)).log10()
    }

    #[test]
    fn gating_improves_snr() {
        let rate = 16000;
        let len = 32768;
        let std = 0.05;
        // 5 dB SNR: amp^2 / 2 = std^2 * 10^0.5.
        let amp = (2.0 * std * std * 10f64.powf(0.5)).sqrt();
        let freq = 1000.0 * len as f64 / rate as f64;
        let tone_bin = freq.round() as usize;
        let freq = tone_bin as f64 * rate as f64 / len as f64;
        let noisy: Vec<f64> = tone(freq, amp, len, rate)
            .iter()
            .zip(white(len, std, 11))
            .map(|(s, n)| s + n)
            .collect();
        let profile = estimate_noise_profile(&AudioClip::new(white(len, std, 12), rate), 2048).unwrap();
        let clip = AudioClip::new(noisy, rate);
        let out = reduce_noise(&clip, &profile, 2.0).unwrap();
        let before = tone_to_rest_db(clip.samples(), tone_bin);
        let after = tone_to_rest_db(out.samples(), tone_bin);
        assert!(after - before >= 6.0, "before {before:.2} dB, after {after:.2} dB");
    }

    #[test]
    fn time_shift_contract() {
        let mut s = vec![0.0; 100];
        s[10] = 1.0;
        let clip = AudioClip::new(s, 1000);
        assert_eq!(time_shift(&clip, 0.0).unwrap(), clip);
        let shifted = time_shift(&clip, 5.0).unwrap();
        assert_eq!(shifted.samples()[15], 1.0);
        assert_eq!(shifted.samples()[10], 0.0);
        assert_eq!(shifted.len(), 100);
        assert!(matches!(time_shift(&clip, 100.0), Err(Error::ShiftOutOfRange { .. })));
        assert!(matches!(time_shift(&clip, -250.0), Err(Error::ShiftOutOfRange { .. })));
    }

    #[test]
    fn time_shift_back_and_forth() {
        let clip = AudioClip::new(white(500, 0.3, 3), 1000);
        let k = 37;
        let there = time_shift(&clip, k as f64).unwrap();
        let back = time_shift(&there, -(k as f64)).unwrap();
        let n = clip.len();
        assert_eq!(&back.samples()[..n - k], &clip.samples()[..n - k]);
        assert!(back.samples()[n - k..].iter().all(|&x| x == 0.0));
    }

    #[test]
    fn speed_tune_contract() {
        let clip = AudioClip::new(white(1000, 0.3, 4), 8000);
        assert_eq!(speed_tune(&clip, 1.0).unwrap(), clip);
        assert_eq!(speed_tune(&clip, 2.0).unwrap().len(), 500);
        assert!(matches!(speed_tune(&clip, 0.5), Err(Error::FactorOutOfRange(_))));
        assert!(matches!(speed_tune(&clip, 2.5), Err(Error::FactorOutOfRange(_))));
    }

    #[test]
    fn speed_tune_moves_pitch() {
        let rate = 44100;
        let clip = AudioClip::new(tone(440.0, 0.5, rate as usize, rate), rate);
        let fast = speed_tune(&clip, 1.1).unwrap();
        let fft = crate::spectral::FftPair::new(fast.len());
        let spec = fft.forward_real(fast.samples());
        let peak = (1..fast.len() / 2)
            .max_by(|&a, &b| spec[a].norm().total_cmp(&spec[b].norm()))
            .unwrap();
        let bin_hz = rate as f64 / fast.len() as f64;
        let peak_hz = peak as f64 * bin_hz;
        assert!((peak_hz - 484.0).abs() <= bin_hz, "{peak_hz}");
    }

    #[test]
    fn mix_noise_contract() {
        let clip = AudioClip::new(white(4000, 0.1, 5), 8000);
        let noise = AudioClip::new(white(1000, 0.1, 6), 8000);
        assert_eq!(mix_noise(&clip, &noise, f64::INFINITY).unwrap(), clip);
        assert_eq!(noise_scale(0.25, 0.25, 0.0), 1.0);
        let silent = AudioClip::new(vec![0.0; 10], 8000);
        assert!(matches!(mix_noise(&clip, &silent, 10.0), Err(Error::SilentNoise)));
        let other = AudioClip::new(vec![0.1; 10], 16000);
        assert!(matches!(mix_noise(&clip, &other, 10.0), Err(Error::RateMismatch(8000, 16000))));
    }

    #[test]
    fn mix_noise_hits_requested_snr() {
        let clip = AudioClip::new(white(4000, 0.1, 9), 8000);
        let noise = AudioClip::new(white(1500, 0.2, 10), 8000);
        let mixed = mix_noise(&clip, &noise, 10.0).unwrap();
        let added: Vec<f64> = mixed
            .samples()
            .iter()
            .zip(clip.samples())
            .map(|(m, c)| m - c)
            .collect();
        let snr = 10.0 * (clip.power() / mean_power(&added)).log10();
        assert!((snr - 10.0).abs() < 0.1, "{snr}");
    }

    #[test]
    fn volume_contract() {
        let clip = AudioClip::new(vec![0.8, -0.3, 0.5], 8000);
        assert_eq!(adjust_volume(&clip, 0.0), clip);
        let half = adjust_volume(&clip, -20.0 * 2f64.log10());
        assert!((half.samples()[0] - 0.4).abs() < 1e-6);
        let loud = adjust_volume(&clip, 20.0);
        assert_eq!(loud.samples()[2], 1.0);
    }

    #[test]
    fn augmented_names() {
        assert_eq!(augmented_path("3/clip.wav", 2), "3/clip.aug2.wav");
        assert_eq!(augmented_path("a.b.wav", 1), "a.b.aug1.wav");
    }

    #[test]
    fn config_validation() {
        assert!(AugmentConfig::default().validate().is_ok());
        let bad = AugmentConfig {
            speed_factors: vec![0.5],
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = AugmentConfig {
            multiplier: 0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }
}
