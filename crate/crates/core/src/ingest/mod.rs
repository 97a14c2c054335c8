//! Dataset ingestion: recording parsers, synthetic EEG and segmentation.

mod edf;
mod manifest;
mod matrix_text;
mod synth;

pub use edf::{encode_edf, parse_edf, EdfSignalCalibration};
pub use manifest::{
    load_dataset_dir, read_store, write_store, DatasetId, DatasetManifest, IndexEntry, StoreInfo,
};
pub use matrix_text::{format_matrix_text, parse_matrix_text};
pub use synth::{synth_generate, SynthSpec, ALPHA_HZ, THETA_HZ};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Channel layout of the 19-channel resting-state recordings (10-20 system).
pub const DATASET1_CHANNELS: [&str; 19] = [
    "Fp1", "Fp2", "F7", "F3", "Fz", "F4", "F8", "T3", "C3", "Cz", "C4", "T4", "T5", "P3", "Pz",
    "P4", "T6", "O1", "O2",
];

/// Channel layout of the 16-channel adolescent recordings.
pub const DATASET2_CHANNELS: [&str; 16] = [
    "F7", "F3", "F4", "F8", "T3", "C3", "Cz", "C4", "T4", "T5", "P3", "Pz", "P4", "T6", "O1", "O2",
];

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("format error at byte {offset}: {message}")]
    Format { offset: usize, message: String },
    #[error("format error on line {line}: {message}")]
    Line { line: usize, message: String },
    #[error("expected {expected} values, found {found}")]
    ValueCount { expected: usize, found: usize },
    #[error("signal {signal} has degenerate calibration (digital min == digital max == {digital})")]
    DegenerateCalibration { signal: usize, digital: i32 },
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("invalid dataset: {0}")]
    Dataset(String),
    #[error("{path}: {source}")]
    File {
        path: String,
        #[source]
        source: Box<IngestError>,
    },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, IngestError>;

/// Class of a subject.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
pub enum Label {
    Control = 0,
    Schizophrenia = 1,
}

impl Label {
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Label> {
        match i {
            0 => Some(Label::Control),
            1 => Some(Label::Schizophrenia),
            _ => None,
        }
    }

    pub fn flipped(self) -> Label {
        match self {
            Label::Control => Label::Schizophrenia,
            Label::Schizophrenia => Label::Control,
        }
    }
}

impl From<Label> for u8 {
    fn from(l: Label) -> u8 {
        l as u8
    }
}

impl TryFrom<u8> for Label {
    type Error = String;
    fn try_from(v: u8) -> std::result::Result<Self, String> {
        Label::from_index(v as usize).ok_or_else(|| format!("label must be 0 or 1, got {v}"))
    }
}

/// One subject's multi-channel EEG, in microvolts.
#[derive(Debug, Clone, PartialEq)]
pub struct Recording {
    pub subject_id: String,
    pub label: Label,
    pub sample_rate_hz: f64,
    pub channel_names: Vec<String>,
    /// `[channels][samples]`
    pub data: Vec<Vec<f64>>,
}

impl Recording {
    /// Builds a recording after checking the shape and finiteness invariants.
    pub fn new(
        subject_id: impl Into<String>,
        label: Label,
        sample_rate_hz: f64,
        channel_names: Vec<String>,
        data: Vec<Vec<f64>>,
    ) -> Result<Self> {
        if !(sample_rate_hz > 0.0 && sample_rate_hz.is_finite()) {
            return Err(IngestError::Parameter(format!(
                "sample rate must be positive, got {sample_rate_hz}"
            )));
        }
        if channel_names.len() != data.len() {
            return Err(IngestError::Parameter(format!(
                "{} channel names for {} data rows",
                channel_names.len(),
                data.len()
            )));
        }
        if let Some(first) = data.first() {
            if let Some((i, row)) = data.iter().enumerate().find(|(_, r)| r.len() != first.len()) {
                return Err(IngestError::Parameter(format!(
                    "channel {i} has {} samples, channel 0 has {}",
                    row.len(),
                    first.len()
                )));
            }
        }
        for (c, row) in data.iter().enumerate() {
            if let Some(s) = row.iter().position(|v| !v.is_finite()) {
                return Err(IngestError::Parameter(format!(
                    "non-finite sample at channel {c}, index {s}"
                )));
            }
        }
        Ok(Recording { subject_id: subject_id.into(), label, sample_rate_hz, channel_names, data })
    }

    pub fn channels(&self) -> usize {
        self.data.len()
    }

    pub fn samples(&self) -> usize {
        self.data.first().map_or(0, Vec::len)
    }

    pub fn duration_s(&self) -> f64 {
        self.samples() as f64 / self.sample_rate_hz
    }
}

/// Fixed-size `channels × T` window of a recording; the unit of training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    /// `[channels][T]`
    pub data: Vec<Vec<f64>>,
    pub label: Label,
    pub source_subject: String,
    pub segment_index: usize,
}

impl Segment {
    pub fn channels(&self) -> usize {
        self.data.len()
    }

    pub fn samples(&self) -> usize {
        self.data.first().map_or(0, Vec::len)
    }

    /// Same segment with different channel data.
    pub fn with_data(&self, data: Vec<Vec<f64>>) -> Segment {
        Segment {
            data,
            label: self.label,
            source_subject: self.source_subject.clone(),
            segment_index: self.segment_index,
        }
    }
}

/// Result of cutting one recording.
#[derive(Debug, Clone)]
pub struct Segmentation {
    pub segments: Vec<Segment>,
    /// Set when the window is longer than the recording and nothing was cut.
    pub window_too_long: bool,
}

/// Cuts a recording into windows of `window_s` seconds. `overlap` is the
/// fraction of a window shared by consecutive windows; the trailing partial
/// window is discarded.
pub fn segment_recording(rec: &Recording, window_s: f64, overlap: f64) -> Result<Segmentation> {
    let exact = window_s * rec.sample_rate_hz;
    let window = exact.round();
    if !(window >= 1.0) || (exact - window).abs() > 1e-6 * window.max(1.0) {
        return Err(IngestError::Parameter(format!(
            "window of {window_s} s at {} Hz is not a positive whole number of samples",
            rec.sample_rate_hz
        )));
    }
    if !(0.0..1.0).contains(&overlap) {
        return Err(IngestError::Parameter(format!("overlap must be in [0, 1), got {overlap}")));
    }
    let window = window as usize;
    let hop = ((window as f64) * (1.0 - overlap)).round().max(1.0) as usize;
    let n = rec.samples();
    if n < window {
        log::warn!(
            "recording {} is {:.2} s long, shorter than the {window_s} s window",
            rec.subject_id,
            rec.duration_s()
        );
        return Ok(Segmentation { segments: Vec::new(), window_too_long: true });
    }
    let count = (n - window) / hop + 1;
    let segments = (0..count)
        .map(|i| {
            let start = i * hop;
            Segment {
                data: rec.data.iter().map(|row| row[start..start + window].to_vec()).collect(),
                label: rec.label,
                source_subject: rec.subject_id.clone(),
                segment_index: i,
            }
        })
        .collect();
    Ok(Segmentation { segments, window_too_long: false })
}
