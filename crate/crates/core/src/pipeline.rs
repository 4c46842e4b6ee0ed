//! Glue between the dataset, feature and model layers: one flat
//! configuration record, manifest featurization and augmentation-aware
//! splitting.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::audio::{read_wav, resample, DEFAULT_SAMPLE_RATE};
use crate::augment::{preprocess, AugmentConfig, PreprocessConfig};
use crate::dataset::{DatasetManifest, Origin, NUM_CLASSES};
use crate::error::{Error, Result};
use crate::eval::{split_indices, Split, DEFAULT_RATIOS};
use crate::features::{FeatureMap, MfccConfig, MfccExtractor, FEATURE_COLS, FEATURE_ROWS};
use crate::model::{ModelConfig, Sample, TrainConfig};

/// Every tunable default in one flat JSON object. Unknown keys are rejected;
/// missing keys take their defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    pub sample_rate: u32,

    pub trim_silence: bool,
    pub trim_threshold_db: f64,
    pub trim_frame_ms: f64,
    pub noise_reduction: bool,
    pub gate_factor: f64,
    pub noise_n_fft: usize,
    pub peak_normalize: Option<f64>,

    pub frame_len_ms: f64,
    pub hop_ms: f64,
    pub n_fft: usize,
    pub n_mels: usize,
    pub n_coeffs: usize,
    pub fmin: f64,
    pub fmax: Option<f64>,
    pub pre_emphasis: f64,
    pub delta_window: usize,
    pub log_floor: f64,

    pub shift_range_ms: f64,
    pub speed_factors: Vec<f64>,
    pub snr_db_choices: Vec<f64>,
    pub gain_db_range: (f64, f64),
    pub multiplier: usize,
    pub chain_length: usize,
    pub noise_dir: Option<PathBuf>,

    pub conv_filters: Vec<usize>,
    pub kernel: (usize, usize),
    pub pool: (usize, usize),
    pub dense_units: usize,
    pub dropout_rate: f64,
    pub l2_factor: f64,
    pub l2_layers: usize,

    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub early_stop_patience: Option<usize>,
    pub standardize: bool,

    pub split_ratios: (f64, f64, f64),
    pub stratified: bool,
    pub k_folds: usize,
    pub cv_val_fraction: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let pre = PreprocessConfig::default();
        let mfcc = MfccConfig::default();
        let aug = AugmentConfig::default();
        let model = ModelConfig::default();
        let tc = TrainConfig::default();
        PipelineConfig {
            seed: 0,
            sample_rate: DEFAULT_SAMPLE_RATE,
            trim_silence: pre.trim_silence,
            trim_threshold_db: pre.trim_threshold_db,
            trim_frame_ms: pre.trim_frame_ms,
            noise_reduction: pre.noise_reduction,
            gate_factor: pre.gate_factor,
            noise_n_fft: pre.noise_n_fft,
            peak_normalize: pre.peak_normalize,
            frame_len_ms: mfcc.frame_len_ms,
            hop_ms: mfcc.hop_ms,
            n_fft: mfcc.n_fft,
            n_mels: mfcc.n_mels,
            n_coeffs: mfcc.n_coeffs,
            fmin: mfcc.fmin,
            fmax: mfcc.fmax,
            pre_emphasis: mfcc.pre_emphasis,
            delta_window: mfcc.delta_window,
            log_floor: mfcc.log_floor,
            shift_range_ms: aug.shift_range_ms,
            speed_factors: aug.speed_factors,
            snr_db_choices: aug.snr_db_choices,
            gain_db_range: aug.gain_db_range,
            multiplier: aug.multiplier,
            chain_length: aug.chain_length,
            noise_dir: aug.noise_dir,
            conv_filters: model.conv_filters,
            kernel: model.kernel,
            pool: model.pool,
            dense_units: model.dense_units,
            dropout_rate: model.dropout_rate,
            l2_factor: model.l2_factor,
            l2_layers: model.l2_layers,
            epochs: tc.epochs,
            batch_size: tc.batch_size,
            lr: tc.lr,
            early_stop_patience: tc.early_stop_patience,
            standardize: tc.standardize,
            split_ratios: DEFAULT_RATIOS,
            stratified: true,
            k_folds: 10,
            cv_val_fraction: 0.2,
        }
    }
}

impl PipelineConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::FileNotFound(path.to_path_buf()),
            _ => Error::Io(e),
        })?;
        serde_json::from_str(&text).map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))
    }

    pub fn preprocess(&self) -> PreprocessConfig {
        PreprocessConfig {
            trim_silence: self.trim_silence,
            trim_threshold_db: self.trim_threshold_db,
            trim_frame_ms: self.trim_frame_ms,
            noise_reduction: self.noise_reduction,
            gate_factor: self.gate_factor,
            noise_n_fft: self.noise_n_fft,
            peak_normalize: self.peak_normalize,
        }
    }

    pub fn mfcc(&self) -> MfccConfig {
        MfccConfig {
            frame_len_ms: self.frame_len_ms,
            hop_ms: self.hop_ms,
            n_fft: self.n_fft,
            n_mels: self.n_mels,
            n_coeffs: self.n_coeffs,
            fmin: self.fmin,
            fmax: self.fmax,
            pre_emphasis: self.pre_emphasis,
            delta_window: self.delta_window,
            target_frames: FEATURE_COLS,
            log_floor: self.log_floor,
        }
    }

    pub fn augment(&self) -> AugmentConfig {
        AugmentConfig {
            shift_range_ms: self.shift_range_ms,
            speed_factors: self.speed_factors.clone(),
            snr_db_choices: self.snr_db_choices.clone(),
            gain_db_range: self.gain_db_range,
            multiplier: self.multiplier,
            chain_length: self.chain_length,
            noise_dir: self.noise_dir.clone(),
            seed: self.seed,
        }
    }

    pub fn model(&self) -> ModelConfig {
        ModelConfig {
            conv_filters: self.conv_filters.clone(),
            kernel: self.kernel,
            pool: self.pool,
            dense_units: self.dense_units,
            dropout_rate: self.dropout_rate,
            l2_factor: self.l2_factor,
            l2_layers: self.l2_layers,
            classes: NUM_CLASSES,
            input_shape: (FEATURE_ROWS, FEATURE_COLS, 1),
        }
    }

    pub fn train(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            lr: self.lr,
            seed: self.seed,
            early_stop_patience: self.early_stop_patience,
            standardize: self.standardize,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.sample_rate == 0 {
            return Err(Error::InvalidConfig("sample_rate must be positive".into()));
        }
        if self.mfcc().n_coeffs * 3 != FEATURE_ROWS {
            return Err(Error::InvalidConfig(format!(
                "n_coeffs must be {} to fill the {FEATURE_ROWS}-row feature map",
                FEATURE_ROWS / 3
            )));
        }
        self.mfcc().validate(self.sample_rate)?;
        self.augment().validate()?;
        self.model().validate()?;
        if !(0.0..1.0).contains(&self.cv_val_fraction) {
            return Err(Error::InvalidConfig("cv_val_fraction must be in [0, 1)".into()));
        }
        Ok(())
    }
}

/// Reads, resamples, preprocesses and featurizes every manifest entry
/// (unstandardized maps, in manifest order).
pub fn featurize_manifest(manifest: &DatasetManifest, config: &PipelineConfig) -> Result<Vec<FeatureMap>> {
    let extractor = MfccExtractor::new(&config.mfcc(), config.sample_rate)?;
    let pre = config.preprocess();
    manifest
        .entries
        .par_iter()
        .map(|entry| {
            let clip = read_wav(manifest.resolve(entry))?;
            let clip = resample(&clip, config.sample_rate)?;
            extractor.feature_map(&preprocess(&clip, &pre)?)
        })
        .collect()
}

/// Path of the original clip an augmented path was derived from
/// (`3/a.aug2.wav` -> `3/a.wav`); other paths are returned unchanged.
pub fn source_path(path: &str) -> String {
    let (dir, file) = match path.rfind('/') {
        Some(i) => (&path[..=i], &path[i + 1..]),
        None => ("", path),
    };
    let parts: Vec<&str> = file.split('.').collect();
    let kept: Vec<&str> = parts
        .iter()
        .enumerate()
        .filter(|(i, p)| {
            !(*i > 0 && p.len() > 3 && p.starts_with("aug") && p[3..].bytes().all(|b| b.is_ascii_digit()))
        })
        .map(|(_, p)| *p)
        .collect();
    format!("{dir}{}", kept.join("."))
}

/// Splits the original clips; augmented copies join the training split when
/// their source clip is there and are left out otherwise, so validation and
/// test hold only original recordings. Indices refer to `manifest.entries`.
pub fn split_manifest(manifest: &DatasetManifest, config: &PipelineConfig) -> Result<Split> {
    let originals: Vec<usize> = (0..manifest.len())
        .filter(|&i| manifest.entries[i].origin == Origin::Original)
        .collect();
    let labels: Vec<usize> = originals.iter().map(|&i| manifest.entries[i].label).collect();
    let inner = split_indices(&labels, config.split_ratios, config.seed, config.stratified)?;
    let map = |v: &[usize]| v.iter().map(|&j| originals[j]).collect::<Vec<_>>();
    let mut split = Split {
        train: map(&inner.train),
        val: map(&inner.val),
        test: map(&inner.test),
    };
    let train_paths: std::collections::HashSet<&str> =
        split.train.iter().map(|&i| manifest.entries[i].path.as_str()).collect();
    let extra: Vec<usize> = (0..manifest.len())
        .filter(|&i| {
            let e = &manifest.entries[i];
            e.origin == Origin::Augmented && train_paths.contains(source_path(&e.path).as_str())
        })
        .collect();
    split.train.extend(extra);
    split.train.sort_unstable();
    Ok(split)
}

/// Pairs feature maps with their manifest labels for the given indices.
pub fn samples_for(manifest: &DatasetManifest, maps: &[FeatureMap], indices: &[usize]) -> Vec<Sample> {
    indices
        .iter()
        .map(|&i| Sample::new(maps[i].clone(), manifest.entries[i].label))
        .collect()
}
