//! Segment collections, dataset directories and the on-disk segment store.
//!
//! A dataset directory holds recording files plus `index.json`, a map from
//! file name to `{subject_id, label}`. `.edf` files are read as 19-channel
//! 250 Hz recordings; `.txt` / `.eea` files as 16 × 7680 matrix text.
//!
//! The segment store written by [`write_store`] is `manifest.json` (metadata,
//! labels, subjects and a SHA-256 of the payload) next to `segments.bin`
//! (every segment's samples as little-endian `f64`, channel-major, in
//! manifest order).

use super::{parse_edf, parse_matrix_text, IngestError, Label, Recording, Result, Segment};
use crate::dsp::Band;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetId {
    /// 19-channel, 250 Hz, 25 s windows.
    One,
    /// 16-channel, 128 Hz, one 60 s window per subject.
    Two,
    Synthetic,
}

impl DatasetId {
    pub fn default_window_s(self) -> Option<f64> {
        match self {
            DatasetId::One => Some(25.0),
            DatasetId::Two => Some(60.0),
            DatasetId::Synthetic => None,
        }
    }
}

impl std::fmt::Display for DatasetId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            DatasetId::One => "dataset1",
            DatasetId::Two => "dataset2",
            DatasetId::Synthetic => "synthetic",
        })
    }
}

/// A labelled set of equally shaped segments.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub dataset: DatasetId,
    pub sample_rate_hz: f64,
    pub channel_names: Vec<String>,
    pub segments: Vec<Segment>,
    /// Band the segments have been filtered to; `None` for raw data.
    pub band: Option<Band>,
    pub electrode_subset: Option<Vec<String>>,
}

impl DatasetManifest {
    pub fn new(
        dataset: DatasetId,
        sample_rate_hz: f64,
        channel_names: Vec<String>,
        segments: Vec<Segment>,
    ) -> Result<Self> {
        let m = DatasetManifest { dataset, sample_rate_hz, channel_names, segments, band: None, electrode_subset: None };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        let first = self
            .segments
            .first()
            .ok_or_else(|| IngestError::Dataset("dataset has no segments".into()))?;
        let shape = (first.channels(), first.samples());
        if shape.0 != self.channel_names.len() {
            return Err(IngestError::Dataset(format!(
                "segments have {} channels but {} channel names are recorded",
                shape.0,
                self.channel_names.len()
            )));
        }
        for s in &self.segments {
            if (s.channels(), s.samples()) != shape || s.data.iter().any(|r| r.len() != shape.1) {
                return Err(IngestError::Dataset(format!(
                    "segment {} of {} is not {}x{}",
                    s.segment_index, s.source_subject, shape.0, shape.1
                )));
            }
            if s.source_subject.is_empty() {
                return Err(IngestError::Dataset("segment without subject id".into()));
            }
        }
        let counts = self.class_counts();
        if counts.iter().any(|&c| c == 0) {
            return Err(IngestError::Dataset(format!("both classes must be present, counts {counts:?}")));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    /// `(channels, samples)` of every segment.
    pub fn shape(&self) -> (usize, usize) {
        self.segments.first().map_or((0, 0), |s| (s.channels(), s.samples()))
    }

    pub fn class_counts(&self) -> [usize; 2] {
        let mut counts = [0; 2];
        for s in &self.segments {
            counts[s.label.index()] += 1;
        }
        counts
    }

    pub fn labels(&self) -> Vec<Label> {
        self.segments.iter().map(|s| s.label).collect()
    }

    /// Segments cut from a list of recordings that share rate and channels.
    pub fn from_recordings(
        dataset: DatasetId,
        recordings: &[Recording],
        window_s: f64,
        overlap: f64,
    ) -> Result<Self> {
        let first = recordings
            .first()
            .ok_or_else(|| IngestError::Dataset("no recordings".into()))?;
        let mut segments = Vec::new();
        for rec in recordings {
            if rec.sample_rate_hz != first.sample_rate_hz || rec.channel_names != first.channel_names {
                return Err(IngestError::Dataset(format!(
                    "recording {} differs in rate or channel layout from {}",
                    rec.subject_id, first.subject_id
                )));
            }
            let cut = super::segment_recording(rec, window_s, overlap)?;
            segments.extend(cut.segments);
        }
        Self::new(dataset, first.sample_rate_hz, first.channel_names.clone(), segments)
    }

    /// SHA-256 over labels, subjects and sample bytes.
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.dataset.to_string().as_bytes());
        h.update(self.sample_rate_hz.to_le_bytes());
        for n in &self.channel_names {
            h.update(n.as_bytes());
            h.update([0]);
        }
        for s in &self.segments {
            h.update([s.label as u8]);
            h.update(s.source_subject.as_bytes());
            h.update((s.segment_index as u64).to_le_bytes());
            h.update(payload_bytes(std::slice::from_ref(s)));
        }
        hex(&h.finalize())
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn payload_bytes(segments: &[Segment]) -> Vec<u8> {
    let mut out = Vec::new();
    for s in segments {
        for v in s.data.iter().flatten() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub subject_id: String,
    pub label: Label,
}

/// Loads every file listed in `dir/index.json`. Errors are collected per
/// file; if any file fails, all failures are returned together.
pub fn load_dataset_dir(dir: &Path) -> std::result::Result<(DatasetId, Vec<Recording>), Vec<IngestError>> {
    let index_path = dir.join("index.json");
    let index: BTreeMap<String, IndexEntry> = fs::read_to_string(&index_path)
        .map_err(IngestError::from)
        .and_then(|t| serde_json::from_str(&t).map_err(IngestError::from))
        .map_err(|e| vec![IngestError::File { path: index_path.display().to_string(), source: Box::new(e) }])?;

    let mut recordings = Vec::new();
    let mut errors = Vec::new();
    let mut kind = None;
    for (file, entry) in &index {
        let path = dir.join(file);
        let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("").to_ascii_lowercase();
        let this_kind = match ext.as_str() {
            "edf" => DatasetId::One,
            "txt" | "eea" => DatasetId::Two,
            _ => {
                errors.push(IngestError::File {
                    path: path.display().to_string(),
                    source: Box::new(IngestError::Dataset(format!("unknown file type {ext:?}"))),
                });
                continue;
            }
        };
        if *kind.get_or_insert(this_kind) != this_kind {
            errors.push(IngestError::File {
                path: path.display().to_string(),
                source: Box::new(IngestError::Dataset("mixed dataset formats in one directory".into())),
            });
            continue;
        }
        let parsed = match this_kind {
            DatasetId::One => fs::read(&path)
                .map_err(IngestError::from)
                .and_then(|b| parse_edf(&b, &entry.subject_id, entry.label)),
            _ => fs::read_to_string(&path)
                .map_err(IngestError::from)
                .and_then(|t| parse_matrix_text(&t, 16, 7680, &entry.subject_id, entry.label)),
        };
        match parsed {
            Ok(r) => recordings.push(r),
            Err(e) => errors.push(IngestError::File { path: path.display().to_string(), source: Box::new(e) }),
        }
    }
    if !errors.is_empty() {
        return Err(errors);
    }
    match kind {
        Some(k) => Ok((k, recordings)),
        None => Err(vec![IngestError::Dataset(format!("{} lists no recordings", index_path.display()))]),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct StoredSegment {
    subject_id: String,
    segment_index: usize,
    label: Label,
}

/// Contents of `manifest.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoreInfo {
    pub format: String,
    pub dataset: DatasetId,
    pub sample_rate_hz: f64,
    pub channel_names: Vec<String>,
    pub channels: usize,
    pub samples: usize,
    pub class_counts: [usize; 2],
    pub payload_sha256: String,
    pub content_hash: String,
    segments: Vec<StoredSegment>,
}

const STORE_FORMAT: &str = "eegsz-segments/1";

pub fn write_store(dir: &Path, manifest: &DatasetManifest) -> Result<StoreInfo> {
    manifest.validate()?;
    fs::create_dir_all(dir)?;
    let payload = payload_bytes(&manifest.segments);
    let (channels, samples) = manifest.shape();
    let info = StoreInfo {
        format: STORE_FORMAT.into(),
        dataset: manifest.dataset,
        sample_rate_hz: manifest.sample_rate_hz,
        channel_names: manifest.channel_names.clone(),
        channels,
        samples,
        class_counts: manifest.class_counts(),
        payload_sha256: hex(&Sha256::digest(&payload)),
        content_hash: manifest.content_hash(),
        segments: manifest
            .segments
            .iter()
            .map(|s| StoredSegment { subject_id: s.source_subject.clone(), segment_index: s.segment_index, label: s.label })
            .collect(),
    };
    fs::write(dir.join("segments.bin"), payload)?;
    fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&info)? + "\n")?;
    Ok(info)
}

pub fn read_store(dir: &Path) -> Result<DatasetManifest> {
    let info: StoreInfo = serde_json::from_str(&fs::read_to_string(dir.join("manifest.json"))?)?;
    if info.format != STORE_FORMAT {
        return Err(IngestError::Dataset(format!("unsupported store format {:?}", info.format)));
    }
    let payload = fs::read(dir.join("segments.bin"))?;
    if hex(&Sha256::digest(&payload)) != info.payload_sha256 {
        return Err(IngestError::Dataset("segments.bin does not match the manifest checksum".into()));
    }
    let per_segment = info.channels * info.samples * 8;
    if payload.len() != per_segment * info.segments.len() {
        return Err(IngestError::Format {
            offset: payload.len(),
            message: format!("expected {} payload bytes", per_segment * info.segments.len()),
        });
    }
    let segments = info
        .segments
        .iter()
        .zip(payload.chunks_exact(per_segment.max(1)))
        .map(|(meta, bytes)| {
            let values: Vec<f64> =
                bytes.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes"))).collect();
            Segment {
                data: values.chunks_exact(info.samples.max(1)).map(<[f64]>::to_vec).collect(),
                label: meta.label,
                source_subject: meta.subject_id.clone(),
                segment_index: meta.segment_index,
            }
        })
        .collect();
    DatasetManifest::new(info.dataset, info.sample_rate_hz, info.channel_names, segments)
}
