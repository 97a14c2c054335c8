//! European Data Format reader (plain EDF, no annotations).
//!
//! Layout: a 256-byte fixed header, `ns` blocks of 256 bytes of per-signal
//! header fields (stored field-by-field across all signals), then data
//! records holding `samples_per_record[i]` little-endian `i16` values for
//! each signal in turn.

use super::{IngestError, Label, Recording, Result};

const FIXED_HEADER: usize = 256;
const SIGNAL_HEADER: usize = 256;

/// Per-signal linear map from digital to physical units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdfSignalCalibration {
    pub physical_min: f64,
    pub physical_max: f64,
    pub digital_min: i32,
    pub digital_max: i32,
}

impl EdfSignalCalibration {
    fn to_physical(&self, digital: i16) -> f64 {
        let scale = (self.physical_max - self.physical_min)
            / f64::from(self.digital_max - self.digital_min);
        self.physical_min + (f64::from(digital) - f64::from(self.digital_min)) * scale
    }

    fn to_digital(&self, physical: f64) -> i16 {
        let scale = f64::from(self.digital_max - self.digital_min)
            / (self.physical_max - self.physical_min);
        let d = f64::from(self.digital_min) + (physical - self.physical_min) * scale;
        d.round().clamp(f64::from(i16::MIN), f64::from(i16::MAX)) as i16
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn field(&mut self, width: usize, what: &str) -> Result<&'a str> {
        let start = self.pos;
        let raw = self.bytes.get(start..start + width).ok_or_else(|| IngestError::Format {
            offset: self.bytes.len(),
            message: format!("header truncated while reading {what} (field starts at byte {start})"),
        })?;
        self.pos += width;
        std::str::from_utf8(raw).map(str::trim).map_err(|_| IngestError::Format {
            offset: start,
            message: format!("{what} is not ASCII"),
        })
    }

    fn number<T: std::str::FromStr>(&mut self, width: usize, what: &str) -> Result<T> {
        let start = self.pos;
        let text = self.field(width, what)?;
        text.parse().map_err(|_| IngestError::Format {
            offset: start,
            message: format!("{what} is not numeric: {text:?}"),
        })
    }
}

/// Parses an EDF byte stream into a [`Recording`] in physical units.
///
/// All signals must share one sample rate so the result is a rectangular
/// `channels × samples` matrix.
pub fn parse_edf(bytes: &[u8], subject_id: &str, label: Label) -> Result<Recording> {
    let mut cur = Cursor { bytes, pos: 0 };
    cur.field(8, "version")?;
    cur.field(80, "patient id")?;
    cur.field(80, "recording id")?;
    cur.field(8, "start date")?;
    cur.field(8, "start time")?;
    let header_bytes: usize = cur.number(8, "header byte count")?;
    cur.field(44, "reserved")?;
    let n_records: i64 = cur.number(8, "number of data records")?;
    let record_duration: f64 = cur.number(8, "data record duration")?;
    let ns: usize = cur.number(4, "number of signals")?;

    if ns == 0 {
        return Err(IngestError::Format { offset: 252, message: "file declares zero signals".into() });
    }
    let expected_header = FIXED_HEADER + ns * SIGNAL_HEADER;
    if header_bytes != expected_header {
        return Err(IngestError::Format {
            offset: 184,
            message: format!("header size {header_bytes} does not match {expected_header} for {ns} signals"),
        });
    }
    if !(record_duration > 0.0) {
        return Err(IngestError::Format {
            offset: 244,
            message: format!("record duration must be positive, got {record_duration}"),
        });
    }

    let mut labels = Vec::with_capacity(ns);
    for _ in 0..ns {
        labels.push(cur.field(16, "signal label")?.to_string());
    }
    for _ in 0..ns {
        cur.field(80, "transducer type")?;
    }
    for _ in 0..ns {
        cur.field(8, "physical dimension")?;
    }
    let mut phys_min = Vec::with_capacity(ns);
    for _ in 0..ns {
        phys_min.push(cur.number::<f64>(8, "physical minimum")?);
    }
    let mut phys_max = Vec::with_capacity(ns);
    for _ in 0..ns {
        phys_max.push(cur.number::<f64>(8, "physical maximum")?);
    }
    let mut dig_min = Vec::with_capacity(ns);
    for _ in 0..ns {
        dig_min.push(cur.number::<i32>(8, "digital minimum")?);
    }
    let mut dig_max = Vec::with_capacity(ns);
    for _ in 0..ns {
        dig_max.push(cur.number::<i32>(8, "digital maximum")?);
    }
    for _ in 0..ns {
        cur.field(80, "prefiltering")?;
    }
    let mut per_record = Vec::with_capacity(ns);
    for _ in 0..ns {
        per_record.push(cur.number::<usize>(8, "samples per record")?);
    }
    for _ in 0..ns {
        cur.field(32, "signal reserved")?;
    }

    let calibrations: Vec<EdfSignalCalibration> = (0..ns)
        .map(|i| {
            if dig_min[i] == dig_max[i] {
                return Err(IngestError::DegenerateCalibration { signal: i, digital: dig_min[i] });
            }
            Ok(EdfSignalCalibration {
                physical_min: phys_min[i],
                physical_max: phys_max[i],
                digital_min: dig_min[i],
                digital_max: dig_max[i],
            })
        })
        .collect::<Result<_>>()?;

    let spr = per_record[0];
    if let Some(i) = per_record.iter().position(|&n| n != spr) {
        return Err(IngestError::Format {
            offset: FIXED_HEADER + ns * 216 + i * 8,
            message: format!("signal {i} has {} samples per record, signal 0 has {spr}", per_record[i]),
        });
    }
    let record_bytes = 2 * spr * ns;
    let available = bytes.len() - expected_header;
    let n_records = if n_records < 0 {
        // -1 means "unknown", used while a file is still being written
        available / record_bytes.max(1)
    } else {
        n_records as usize
    };
    if let Some(r) = (0..n_records).find(|r| (r + 1) * record_bytes > available) {
        return Err(IngestError::Format {
            offset: bytes.len(),
            message: format!(
                "data record {r} (starting at byte {}) truncated: file ends at byte {}",
                expected_header + r * record_bytes,
                bytes.len()
            ),
        });
    }

    let mut data = vec![Vec::with_capacity(n_records * spr); ns];
    let body = &bytes[expected_header..];
    for r in 0..n_records {
        let record = &body[r * record_bytes..(r + 1) * record_bytes];
        for (s, samples) in record.chunks_exact(2 * spr).enumerate() {
            let cal = &calibrations[s];
            data[s].extend(
                samples
                    .chunks_exact(2)
                    .map(|b| cal.to_physical(i16::from_le_bytes([b[0], b[1]]))),
            );
        }
    }

    Recording::new(subject_id, label, spr as f64 / record_duration, labels, data)
}

fn put(out: &mut Vec<u8>, text: &str, width: usize) {
    let mut field = text.as_bytes().to_vec();
    field.truncate(width);
    field.resize(width, b' ');
    out.extend_from_slice(&field);
}

/// Serializes a recording as EDF with one data record per second of signal
/// (or a single record when the rate is not a whole number of Hz). The
/// trailing partial record, if any, is dropped.
pub fn encode_edf(rec: &Recording, calibration: &[EdfSignalCalibration]) -> Vec<u8> {
    let ns = rec.channels();
    assert_eq!(calibration.len(), ns, "one calibration per channel");
    let (spr, duration) = if rec.sample_rate_hz.fract() == 0.0 && rec.sample_rate_hz >= 1.0 {
        (rec.sample_rate_hz as usize, 1.0)
    } else {
        (rec.samples(), rec.duration_s())
    };
    let n_records = if spr == 0 { 0 } else { rec.samples() / spr };

    let mut out = Vec::with_capacity(FIXED_HEADER * (ns + 1) + 2 * ns * n_records * spr);
    put(&mut out, "0", 8);
    put(&mut out, &rec.subject_id, 80);
    put(&mut out, "Startdate X X X X", 80);
    put(&mut out, "01.01.00", 8);
    put(&mut out, "00.00.00", 8);
    put(&mut out, &(FIXED_HEADER + ns * SIGNAL_HEADER).to_string(), 8);
    put(&mut out, "", 44);
    put(&mut out, &n_records.to_string(), 8);
    put(&mut out, &format!("{duration}"), 8);
    put(&mut out, &ns.to_string(), 4);
    for name in &rec.channel_names {
        put(&mut out, name, 16);
    }
    for _ in 0..ns {
        put(&mut out, "AgAgCl electrode", 80);
    }
    for _ in 0..ns {
        put(&mut out, "uV", 8);
    }
    for c in calibration {
        put(&mut out, &format!("{}", c.physical_min), 8);
    }
    for c in calibration {
        put(&mut out, &format!("{}", c.physical_max), 8);
    }
    for c in calibration {
        put(&mut out, &c.digital_min.to_string(), 8);
    }
    for c in calibration {
        put(&mut out, &c.digital_max.to_string(), 8);
    }
    for _ in 0..ns {
        put(&mut out, "", 80);
    }
    for _ in 0..ns {
        put(&mut out, &spr.to_string(), 8);
    }
    for _ in 0..ns {
        put(&mut out, "", 32);
    }
    for r in 0..n_records {
        for (row, cal) in rec.data.iter().zip(calibration) {
            for &v in &row[r * spr..(r + 1) * spr] {
                out.extend_from_slice(&cal.to_digital(v).to_le_bytes());
            }
        }
    }
    out
}
