use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("file not found: {0}")]
    FileNotFound(PathBuf),
    #[error("unsupported audio format: {0}")]
    UnsupportedFormat(String),
    #[error("malformed WAV header: {0}")]
    MalformedHeader(String),
    #[error("clip is empty")]
    EmptyClip,
    #[error("clip too short: need {needed} samples, got {got}")]
    TooShort { needed: usize, got: usize },
    #[error("noise profile has {got} bins, expected {expected}")]
    ProfileLengthMismatch { expected: usize, got: usize },
    #[error("time shift of {shift_ms} ms exceeds clip duration {duration_ms} ms")]
    ShiftOutOfRange { shift_ms: f64, duration_ms: f64 },
    #[error("speed factor {0} outside (0.5, 2.0]")]
    FactorOutOfRange(f64),
    #[error("noise clip is silent")]
    SilentNoise,
    #[error("sample rate mismatch: {0} Hz vs {1} Hz")]
    RateMismatch(u32, u32),
    #[error("FFT size {n_fft} must be a power of two and at least the frame length {frame_len}")]
    BadFftSize { n_fft: usize, frame_len: usize },
    #[error("mel filter {0} collapses to a single FFT bin; increase n_fft or reduce n_mels")]
    DegenerateBand(usize),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("batch normalization needs at least 2 samples in train mode, got {0}")]
    DegenerateBatch(usize),
    #[error("label {0} out of range 0..{1}")]
    LabelOutOfRange(usize, usize),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("training diverged at epoch {epoch} (loss is not finite)")]
    DivergedTraining { epoch: usize },
    #[error("unsupported checkpoint version {0}")]
    VersionMismatch(u8),
    #[error("checkpoint checksum mismatch (file truncated or corrupted)")]
    ChecksumMismatch,
    #[error("not a checkpoint file: {0}")]
    BadMagic(String),
    #[error("class {class} has {available} samples, needs at least {required}")]
    InsufficientClassSamples {
        class: usize,
        available: usize,
        required: usize,
    },
    #[error("confusion matrix is empty")]
    EmptyMatrix,
    #[error("directory {0:?} does not name a known label")]
    UnknownLabelDirectory(String),
    #[error("no WAV files found under {0}")]
    EmptyDataset(PathBuf),
    #[error("invalid data: {0}")]
    InvalidData(String),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::DivergedTraining { .. } => 3,
            Error::InvalidConfig(_) => 1,
            _ => 2,
        }
    }
}
