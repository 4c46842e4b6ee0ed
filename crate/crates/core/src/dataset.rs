//! Corpus manifests: directory scanning, validation, persistence, and a
//! synthetic tone corpus for exercising the pipeline without recorded speech.
//!
//! The on-disk layout is `root/<label>/<file>.wav`, where `<label>` is either
//! the class index `0`..`9` or its configured display name.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::audio::{read_wav, write_wav, AudioClip, DEFAULT_SAMPLE_RATE};
use crate::error::{Error, Result};

pub const NUM_CLASSES: usize = 10;
pub const MANIFEST_VERSION: u32 = 1;

/// Bengali digits ০ through ৯.
pub const BANGLA_DIGITS: [&str; NUM_CLASSES] = ["০", "১", "২", "৩", "৪", "৫", "৬", "৭", "৮", "৯"];

pub fn default_label_names() -> Vec<String> {
    BANGLA_DIGITS.iter().map(|s| s.to_string()).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Origin {
    Original,
    Augmented,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    /// Path relative to the manifest root, `/`-separated.
    pub path: String,
    pub label: usize,
    pub origin: Origin,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub speaker_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub location: Option<String>,
}

impl ManifestEntry {
    pub fn new(path: impl Into<String>, label: usize, origin: Origin) -> Self {
        ManifestEntry {
            path: path.into(),
            label,
            origin,
            speaker_id: None,
            location: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub version: u32,
    pub root: PathBuf,
    pub label_names: Vec<String>,
    pub entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    pub fn new(root: impl Into<PathBuf>, entries: Vec<ManifestEntry>) -> Self {
        DatasetManifest {
            version: MANIFEST_VERSION,
            root: root.into(),
            label_names: default_label_names(),
            entries,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn resolve(&self, entry: &ManifestEntry) -> PathBuf {
        self.root.join(&entry.path)
    }

    pub fn labels(&self) -> Vec<usize> {
        self.entries.iter().map(|e| e.label).collect()
    }

    pub fn label_name(&self, label: usize) -> &str {
        self.label_names
            .get(label)
            .map(String::as_str)
            .unwrap_or("?")
    }

    /// Keeps the entries at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> DatasetManifest {
        DatasetManifest {
            entries: indices.iter().map(|&i| self.entries[i].clone()).collect(),
            ..self.clone()
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, serde_json::to_vec_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::FileNotFound(path.to_path_buf()),
            _ => Error::Io(e),
        })?;
        let manifest: DatasetManifest = serde_json::from_slice(&bytes)?;
        if manifest.version != MANIFEST_VERSION {
            return Err(Error::InvalidConfig(format!(
                "manifest version {} (expected {MANIFEST_VERSION})",
                manifest.version
            )));
        }
        Ok(manifest)
    }
}

/// True for file names following the `<stem>.aug<k>.wav` convention.
pub fn is_augmented_name(name: &str) -> bool {
    name.split('.')
        .any(|part| part.len() > 3 && part.starts_with("aug") && part[3..].bytes().all(|b| b.is_ascii_digit()))
}

pub fn scan_directory(root: impl AsRef<Path>) -> Result<DatasetManifest> {
    scan_directory_with_labels(root, default_label_names())
}

/// Scans `root/<label>/*.wav`. Directories may be named by class index or by
/// the matching entry of `label_names`.
pub fn scan_directory_with_labels(
    root: impl AsRef<Path>,
    label_names: Vec<String>,
) -> Result<DatasetManifest> {
    let root = root.as_ref();
    if !root.is_dir() {
        return Err(Error::FileNotFound(root.to_path_buf()));
    }
    let mut dirs: Vec<(String, PathBuf)> = Vec::new();
    for item in fs::read_dir(root)? {
        let item = item?;
        if item.file_type()?.is_dir() {
            dirs.push((item.file_name().to_string_lossy().into_owned(), item.path()));
        }
    }
    dirs.sort();

    let mut entries = Vec::new();
    for (name, dir) in dirs {
        let label = (0..NUM_CLASSES)
            .find(|&c| name == c.to_string() || label_names.get(c) == Some(&name))
            .ok_or_else(|| Error::UnknownLabelDirectory(name.clone()))?;
        let mut files: Vec<String> = fs::read_dir(&dir)?
            .filter_map(|f| f.ok())
            .filter(|f| f.file_type().map(|t| t.is_file()).unwrap_or(false))
            .map(|f| f.file_name().to_string_lossy().into_owned())
            .filter(|f| f.to_ascii_lowercase().ends_with(".wav"))
            .collect();
        files.sort();
        for file in files {
            let origin = if is_augmented_name(&file) {
                Origin::Augmented
            } else {
                Origin::Original
            };
            entries.push(ManifestEntry::new(format!("{name}/{file}"), label, origin));
        }
    }
    if entries.is_empty() {
        return Err(Error::EmptyDataset(root.to_path_buf()));
    }
    Ok(DatasetManifest {
        label_names,
        ..DatasetManifest::new(root, entries)
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Problem {
    Missing { index: usize, path: String },
    Undecodable { index: usize, path: String, reason: String },
    LabelOutOfRange { index: usize, path: String, label: usize },
    DuplicatePath { first: usize, second: usize, path: String },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub checked: usize,
    pub problems: Vec<Problem>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.problems.is_empty()
    }
}

pub fn validate_manifest(manifest: &DatasetManifest) -> ValidationReport {
    let mut problems = Vec::new();
    let mut seen: HashMap<&str, usize> = HashMap::new();
    for (index, entry) in manifest.entries.iter().enumerate() {
        if let Some(&first) = seen.get(entry.path.as_str()) {
            problems.push(Problem::DuplicatePath {
                first,
                second: index,
                path: entry.path.clone(),
            });
        } else {
            seen.insert(&entry.path, index);
        }
        if entry.label >= NUM_CLASSES {
            problems.push(Problem::LabelOutOfRange {
                index,
                path: entry.path.clone(),
                label: entry.label,
            });
        }
        let full = manifest.resolve(entry);
        if !full.is_file() {
            problems.push(Problem::Missing {
                index,
                path: entry.path.clone(),
            });
            continue;
        }
        if let Err(e) = read_wav(&full) {
            problems.push(Problem::Undecodable {
                index,
                path: entry.path.clone(),
                reason: e.to_string(),
            });
        }
    }
    ValidationReport {
        checked: manifest.entries.len(),
        problems,
    }
}

/// Fundamental frequency of synthetic class `label`.
pub fn synthetic_fundamental(label: usize) -> f64 {
    200.0 + 60.0 * label as f64
}

/// One synthetic clip: a two-partial chord at `f0` and `1.5 * f0` with
/// jittered amplitudes and phases plus white noise at 20 dB SNR.
pub fn synthesize_tone_clip(label: usize, rng: &mut impl Rng, sample_rate: u32) -> AudioClip {
    let f0 = synthetic_fundamental(label);
    let a1: f64 = rng.random_range(0.25..0.40);
    let a2 = a1 * rng.random_range(0.35..0.75);
    let p1 = rng.random_range(0.0..2.0 * PI);
    let p2 = rng.random_range(0.0..2.0 * PI);
    let signal_power = (a1 * a1 + a2 * a2) / 2.0;
    let noise = Normal::new(0.0, (signal_power / 100.0).sqrt()).expect("finite std");
    let rate = sample_rate as f64;
    let samples = (0..sample_rate as usize)
        .map(|i| {
            let t = i as f64 / rate;
            a1 * (2.0 * PI * f0 * t + p1).sin()
                + a2 * (2.0 * PI * 1.5 * f0 * t + p2).sin()
                + noise.sample(rng)
        })
        .collect();
    AudioClip::new(samples, sample_rate)
}

/// Writes `n_per_class` one-second clips per class under `out_dir/<label>/`.
pub fn generate_synthetic_corpus(
    out_dir: impl AsRef<Path>,
    n_per_class: usize,
    seed: u64,
) -> Result<DatasetManifest> {
    if n_per_class == 0 {
        return Err(Error::InvalidConfig("n_per_class must be at least 1".into()));
    }
    let out_dir = out_dir.as_ref();
    let mut entries = Vec::with_capacity(n_per_class * NUM_CLASSES);
    for label in 0..NUM_CLASSES {
        let dir = out_dir.join(label.to_string());
        fs::create_dir_all(&dir)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(label as u64);
        for i in 0..n_per_class {
            let clip = synthesize_tone_clip(label, &mut rng, DEFAULT_SAMPLE_RATE);
            let name = format!("tone{i:04}.wav");
            write_wav(&clip, dir.join(&name))?;
            entries.push(ManifestEntry::new(format!("{label}/{name}"), label, Origin::Original));
        }
    }
    Ok(DatasetManifest::new(out_dir, entries))
}
