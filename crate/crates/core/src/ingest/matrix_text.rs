//! One-value-per-line text recordings, channel-major (all samples of the
//! first channel, then the second, ...). Sampled at 128 Hz.

use super::{IngestError, Label, Recording, Result, DATASET2_CHANNELS};
use std::fmt::Write;

pub const MATRIX_TEXT_RATE_HZ: f64 = 128.0;

pub fn parse_matrix_text(
    text: &str,
    channels: usize,
    samples_per_channel: usize,
    subject_id: &str,
    label: Label,
) -> Result<Recording> {
    let expected = channels * samples_per_channel;
    let mut values = Vec::with_capacity(expected);
    for (i, line) in text.lines().enumerate() {
        let token = line.trim();
        if token.is_empty() {
            continue;
        }
        let v: f64 = token.parse().map_err(|_| IngestError::Line {
            line: i + 1,
            message: format!("cannot parse {token:?} as a number"),
        })?;
        if !v.is_finite() {
            return Err(IngestError::Line { line: i + 1, message: format!("non-finite value {token:?}") });
        }
        values.push(v);
    }
    if values.len() != expected {
        return Err(IngestError::ValueCount { expected, found: values.len() });
    }
    let names = if channels == DATASET2_CHANNELS.len() {
        DATASET2_CHANNELS.iter().map(|s| s.to_string()).collect()
    } else {
        (1..=channels).map(|c| format!("Ch{c}")).collect()
    };
    let data = if samples_per_channel == 0 {
        vec![Vec::new(); channels]
    } else {
        values.chunks_exact(samples_per_channel).map(<[f64]>::to_vec).collect()
    };
    Recording::new(subject_id, label, MATRIX_TEXT_RATE_HZ, names, data)
}

/// Writes a recording in the same channel-major layout; values are printed
/// with shortest round-trip precision.
pub fn format_matrix_text(rec: &Recording) -> String {
    let mut out = String::with_capacity(rec.channels() * rec.samples() * 8);
    for v in rec.data.iter().flatten() {
        writeln!(out, "{v}").expect("writing to a String cannot fail");
    }
    out
}
