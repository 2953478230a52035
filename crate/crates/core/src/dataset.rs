//! Labeled context windows, stratified splitting and the on-disk dataset
//! format.
//!
//! A recording is cut into consecutive, non-overlapping windows. Each emitted
//! sample carries the window plus `context_s` seconds on either side; its
//! label depends only on the central window and the annotated events.
//!
//! On disk a dataset is a directory holding `dataset.json` (metadata, labels,
//! subject ids, window starts) and `dataset.f32`, a row-major
//! `[count x window_len]` little-endian `f32` tensor.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::edf::{ApneaEvent, EegRecording};

pub const FORMAT_VERSION: &str = "1";
pub const SIDECAR_FILE: &str = "dataset.json";
pub const TENSOR_FILE: &str = "dataset.f32";

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("recording is {duration_s:.1} s long, at least {required_s:.1} s needed")]
    RecordingTooShort { duration_s: f64, required_s: f64 },
    #[error("invalid windowing config: {0}")]
    InvalidConfig(&'static str),
    #[error("recording sampled at {recording} Hz, windowing configured for {config} Hz")]
    SampleRateMismatch { recording: f64, config: f64 },
    #[error("windows have different lengths ({first} vs {other})")]
    InhomogeneousWindows { first: usize, other: usize },
    #[error("dataset format version {found:?}, expected {FORMAT_VERSION:?}")]
    FormatVersionMismatch { found: String },
    #[error("sidecar declares {expected} values, tensor file holds {actual} bytes")]
    SidecarTensorDisagreement { expected: usize, actual: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WindowingConfig {
    pub window_s: f64,
    /// Context on each side of the window.
    pub context_s: f64,
    /// A single event must overlap the window by strictly more than this.
    pub min_overlap_s: f64,
    pub fs: f64,
}

impl Default for WindowingConfig {
    fn default() -> Self {
        Self {
            window_s: 30.0,
            context_s: 90.0,
            min_overlap_s: 10.0,
            fs: 128.0,
        }
    }
}

impl WindowingConfig {
    pub fn span_s(&self) -> f64 {
        self.window_s + 2.0 * self.context_s
    }

    /// Samples per emitted window (26,880 at the defaults).
    pub fn span_samples(&self) -> usize {
        (self.span_s() * self.fs).round() as usize
    }

    pub fn validate(&self) -> Result<(), DatasetError> {
        if !(self.fs > 0.0) {
            return Err(DatasetError::InvalidConfig("fs must be positive"));
        }
        if !(self.min_overlap_s > 0.0 && self.window_s > self.min_overlap_s) {
            return Err(DatasetError::InvalidConfig(
                "need window_s > min_overlap_s > 0",
            ));
        }
        if !(self.context_s >= 0.0) {
            return Err(DatasetError::InvalidConfig("context_s must be >= 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledWindow {
    pub subject_id: String,
    /// Start of the central window, seconds from recording start.
    pub window_start_s: f64,
    /// 1 = apnea.
    pub label: u8,
    pub samples: Vec<f32>,
}

fn overlap(a0: f64, a1: f64, b0: f64, b1: f64) -> f64 {
    (a1.min(b1) - a0.max(b0)).max(0.0)
}

/// 1 iff a single event overlaps `[start, end)` by more than
/// `config.min_overlap_s`.
pub fn label_window(
    window_start_s: f64,
    window_end_s: f64,
    events: &[ApneaEvent],
    config: &WindowingConfig,
) -> u8 {
    events.iter().any(|e| {
        overlap(window_start_s, window_end_s, e.onset_s, e.end_s()) > config.min_overlap_s
    }) as u8
}

/// Cut a preprocessed recording into labeled context windows.
///
/// Windows lacking full context on either side are dropped, so a recording
/// of `D` seconds (a multiple of the window length) yields
/// `D / window_s - 2 * context_s / window_s` windows.
pub fn build_windows(
    recording: &EegRecording,
    events: &[ApneaEvent],
    config: &WindowingConfig,
) -> Result<Vec<LabeledWindow>, DatasetError> {
    config.validate()?;
    if recording.fs != config.fs {
        return Err(DatasetError::SampleRateMismatch {
            recording: recording.fs,
            config: config.fs,
        });
    }
    let duration_s = recording.duration_s();
    if duration_s < config.span_s() {
        return Err(DatasetError::RecordingTooShort {
            duration_s,
            required_s: config.span_s(),
        });
    }
    let win = (config.window_s * config.fs).round() as usize;
    let ctx = (config.context_s * config.fs).round() as usize;
    let n = recording.samples.len();
    let mut out = Vec::new();
    let mut start = 0usize;
    while start + win <= n {
        if start >= ctx && start + win + ctx <= n {
            let t0 = start as f64 / config.fs;
            let t1 = (start + win) as f64 / config.fs;
            out.push(LabeledWindow {
                subject_id: recording.subject_id.clone(),
                window_start_s: t0,
                label: label_window(t0, t1, events, config),
                samples: recording.samples[start - ctx..start + win + ctx]
                    .iter()
                    .map(|&v| v as f32)
                    .collect(),
            });
        }
        start += win;
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitConfig {
    pub train_fraction: f64,
    pub seed: u64,
    /// Assign whole subjects to one side instead of individual windows.
    #[serde(default)]
    pub subject_wise: bool,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            train_fraction: 0.9,
            seed: 0,
            subject_wise: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SplitWarning {
    /// A class has too few members to appear on both sides of the split.
    DegenerateClass {
        label: u8,
        count: usize,
        train: usize,
        valid: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitProvenance {
    pub config: SplitConfig,
    /// Input indices assigned to each side, ascending.
    pub train_indices: Vec<usize>,
    pub valid_indices: Vec<usize>,
    pub warnings: Vec<SplitWarning>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSplit {
    pub train: Vec<LabeledWindow>,
    pub valid: Vec<LabeledWindow>,
    pub provenance: SplitProvenance,
}

fn split_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Per-class shuffle and proportional cut.
///
/// Each class contributes `round(train_fraction * class_count)` windows to the
/// training side. Classes that end up on a single side are reported as
/// [`SplitWarning::DegenerateClass`]; the split still proceeds.
pub fn stratified_split(
    windows: &[LabeledWindow],
    config: &SplitConfig,
) -> Result<DatasetSplit, DatasetError> {
    if !(config.train_fraction > 0.0 && config.train_fraction < 1.0) {
        return Err(DatasetError::InvalidConfig(
            "train_fraction must be in (0, 1)",
        ));
    }
    if config.subject_wise {
        return subject_wise_split(windows, config);
    }
    let mut rng = split_rng(config.seed);
    let mut train_idx = Vec::new();
    let mut valid_idx = Vec::new();
    let mut warnings = Vec::new();
    for label in [0u8, 1] {
        let mut members: Vec<usize> = windows
            .iter()
            .enumerate()
            .filter(|(_, w)| w.label == label)
            .map(|(i, _)| i)
            .collect();
        members.shuffle(&mut rng);
        let n_train = (config.train_fraction * members.len() as f64).round() as usize;
        let (t, v) = members.split_at(n_train);
        if t.is_empty() || v.is_empty() {
            let w = SplitWarning::DegenerateClass {
                label,
                count: members.len(),
                train: t.len(),
                valid: v.len(),
            };
            log::warn!("{w:?}");
            warnings.push(w);
        }
        train_idx.extend_from_slice(t);
        valid_idx.extend_from_slice(v);
    }
    Ok(assemble(windows, train_idx, valid_idx, warnings, config))
}

fn assemble(
    windows: &[LabeledWindow],
    mut train_idx: Vec<usize>,
    mut valid_idx: Vec<usize>,
    warnings: Vec<SplitWarning>,
    config: &SplitConfig,
) -> DatasetSplit {
    train_idx.sort_unstable();
    valid_idx.sort_unstable();
    DatasetSplit {
        train: train_idx.iter().map(|&i| windows[i].clone()).collect(),
        valid: valid_idx.iter().map(|&i| windows[i].clone()).collect(),
        provenance: SplitProvenance {
            config: *config,
            train_indices: train_idx,
            valid_indices: valid_idx,
            warnings,
        },
    }
}

fn subject_wise_split(
    windows: &[LabeledWindow],
    config: &SplitConfig,
) -> Result<DatasetSplit, DatasetError> {
    let mut by_subject: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, w) in windows.iter().enumerate() {
        by_subject.entry(&w.subject_id).or_default().push(i);
    }
    let mut subjects: Vec<&str> = by_subject.keys().copied().collect();
    subjects.shuffle(&mut split_rng(config.seed));
    let n_train = (config.train_fraction * subjects.len() as f64).round() as usize;
    let (t, v) = subjects.split_at(n_train);
    let gather = |s: &[&str]| -> Vec<usize> {
        s.iter().flat_map(|k| by_subject[k].iter().copied()).collect()
    };
    let (train_idx, valid_idx) = (gather(t), gather(v));
    let mut warnings = Vec::new();
    for label in [0u8, 1] {
        let count = |idx: &[usize]| idx.iter().filter(|&&i| windows[i].label == label).count();
        let (tr, va) = (count(&train_idx), count(&valid_idx));
        if tr == 0 || va == 0 {
            warnings.push(SplitWarning::DegenerateClass {
                label,
                count: tr + va,
                train: tr,
                valid: va,
            });
        }
    }
    Ok(assemble(windows, train_idx, valid_idx, warnings, config))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Sidecar {
    version: String,
    count: usize,
    window_len: usize,
    fs: f64,
    config: WindowingConfig,
    labels: Vec<u8>,
    subject_ids: Vec<String>,
    window_starts: Vec<f64>,
}

/// Write `windows` to `dir` (created if needed).
pub fn save_dataset(
    windows: &[LabeledWindow],
    config: &WindowingConfig,
    dir: impl AsRef<Path>,
) -> Result<(), DatasetError> {
    let dir = dir.as_ref();
    let window_len = windows
        .first()
        .map_or_else(|| config.span_samples(), |w| w.samples.len());
    if let Some(w) = windows.iter().find(|w| w.samples.len() != window_len) {
        return Err(DatasetError::InhomogeneousWindows {
            first: window_len,
            other: w.samples.len(),
        });
    }
    let sidecar = Sidecar {
        version: FORMAT_VERSION.to_string(),
        count: windows.len(),
        window_len,
        fs: config.fs,
        config: *config,
        labels: windows.iter().map(|w| w.label).collect(),
        subject_ids: windows.iter().map(|w| w.subject_id.clone()).collect(),
        window_starts: windows.iter().map(|w| w.window_start_s).collect(),
    };
    let mut blob = Vec::with_capacity(4 * window_len * windows.len());
    for w in windows {
        for v in &w.samples {
            blob.extend_from_slice(&v.to_le_bytes());
        }
    }
    fs::create_dir_all(dir)?;
    fs::write(dir.join(SIDECAR_FILE), serde_json::to_vec_pretty(&sidecar)?)?;
    fs::write(dir.join(TENSOR_FILE), blob)?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct StoredDataset {
    pub windows: Vec<LabeledWindow>,
    pub config: WindowingConfig,
}

pub fn load_dataset(dir: impl AsRef<Path>) -> Result<StoredDataset, DatasetError> {
    let dir = dir.as_ref();
    let sidecar: Sidecar = serde_json::from_slice(&fs::read(dir.join(SIDECAR_FILE))?)?;
    if sidecar.version != FORMAT_VERSION {
        return Err(DatasetError::FormatVersionMismatch {
            found: sidecar.version,
        });
    }
    let blob = fs::read(dir.join(TENSOR_FILE))?;
    let expected = sidecar.count * sidecar.window_len;
    if blob.len() != 4 * expected
        || sidecar.labels.len() != sidecar.count
        || sidecar.subject_ids.len() != sidecar.count
        || sidecar.window_starts.len() != sidecar.count
    {
        return Err(DatasetError::SidecarTensorDisagreement {
            expected,
            actual: blob.len(),
        });
    }
    let values: Vec<f32> = blob
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .collect();
    let windows = (0..sidecar.count)
        .map(|i| LabeledWindow {
            subject_id: sidecar.subject_ids[i].clone(),
            window_start_s: sidecar.window_starts[i],
            label: sidecar.labels[i],
            samples: values[i * sidecar.window_len..(i + 1) * sidecar.window_len].to_vec(),
        })
        .collect();
    Ok(StoredDataset {
        windows,
        config: sidecar.config,
    })
}

/// `(negatives, positives)`.
pub fn class_counts(windows: &[LabeledWindow]) -> (usize, usize) {
    let pos = windows.iter().filter(|w| w.label == 1).count();
    (windows.len() - pos, pos)
}
