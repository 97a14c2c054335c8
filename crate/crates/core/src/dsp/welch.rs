//! Welch power spectral density and the log-PSD feature used by the SVM.

use super::{DspError, Result};
use crate::ingest::Segment;
use rustfft::{num_complex::Complex64, FftPlanner};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::io::Write;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Window {
    /// Periodic Hann window.
    Hann,
    Rectangular,
}

impl Window {
    fn coefficients(self, n: usize) -> Vec<f64> {
        match self {
            Window::Hann => (0..n).map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos()).collect(),
            Window::Rectangular => vec![1.0; n],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WelchParams {
    pub nfft: usize,
    pub window: Window,
    /// Fraction of a block shared with the next block.
    pub overlap: f64,
}

impl Default for WelchParams {
    fn default() -> Self {
        WelchParams { nfft: 256, window: Window::Hann, overlap: 0.5 }
    }
}

/// One-sided Welch PSD of a single channel, in units² / Hz. Bins `0..=nfft/2`.
pub fn welch(x: &[f64], fs_hz: f64, params: &WelchParams) -> Result<Vec<f64>> {
    let n = params.nfft;
    if n < 2 {
        return Err(DspError::Parameter(format!("nfft must be at least 2, got {n}")));
    }
    if !(0.0..1.0).contains(&params.overlap) {
        return Err(DspError::Parameter(format!("overlap must be in [0, 1), got {}", params.overlap)));
    }
    if x.len() < n {
        return Err(DspError::Length { needed: n, got: x.len() });
    }
    let hop = ((n as f64) * (1.0 - params.overlap)).round().max(1.0) as usize;
    let w = params.window.coefficients(n);
    let w_energy: f64 = w.iter().map(|v| v * v).sum();
    let fft = FftPlanner::new().plan_fft_forward(n);

    let bins = n / 2 + 1;
    let mut acc = vec![0.0; bins];
    let mut blocks = 0usize;
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    let mut start = 0;
    while start + n <= x.len() {
        for (b, (&v, &wi)) in buf.iter_mut().zip(x[start..start + n].iter().zip(&w)) {
            *b = Complex64::new(v * wi, 0.0);
        }
        fft.process(&mut buf);
        for (a, c) in acc.iter_mut().zip(&buf) {
            *a += c.norm_sqr();
        }
        blocks += 1;
        start += hop;
    }
    let scale = 1.0 / (fs_hz * w_energy * blocks as f64);
    for (k, a) in acc.iter_mut().enumerate() {
        *a *= scale;
        if k != 0 && !(n % 2 == 0 && k == n / 2) {
            *a *= 2.0;
        }
    }
    Ok(acc)
}

/// Log-PSD of every channel of a segment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsdFeature {
    pub freqs_hz: Vec<f64>,
    /// `[channels][bins]`, natural log of µV²/Hz. Bins whose power is not
    /// strictly positive hold `NaN` and are listed in `undefined`.
    pub log_power: Vec<Vec<f64>>,
    /// Bins kept for classification.
    pub band_mask: Vec<bool>,
    /// `(channel, bin)` pairs where the log is undefined.
    pub undefined: Vec<(usize, usize)>,
}

impl PsdFeature {
    /// Restricts the mask to `lo_hz..=hi_hz`.
    pub fn with_band(mut self, lo_hz: f64, hi_hz: f64) -> Self {
        self.band_mask = self.freqs_hz.iter().map(|&f| f >= lo_hz && f <= hi_hz).collect();
        self
    }

    /// Masked bins flattened channel-major. Fails if a masked bin is undefined.
    pub fn feature_vector(&self) -> Result<Vec<f64>> {
        if let Some(&(c, b)) = self.undefined.iter().find(|(_, b)| self.band_mask[*b]) {
            return Err(DspError::Parameter(format!(
                "log power undefined at channel {c}, {} Hz",
                self.freqs_hz[b]
            )));
        }
        Ok(self
            .log_power
            .iter()
            .flat_map(|row| row.iter().zip(&self.band_mask).filter(|(_, &m)| m).map(|(v, _)| *v))
            .collect())
    }
}

/// Welch log-PSD with a 256-point Hann window and 50 % overlap; mask set to
/// 4-45 Hz.
pub fn welch_psd(seg: &Segment, fs_hz: f64) -> Result<PsdFeature> {
    let params = WelchParams::default();
    let mut log_power = Vec::with_capacity(seg.channels());
    let mut undefined = Vec::new();
    for (c, ch) in seg.data.iter().enumerate() {
        let psd = welch(ch, fs_hz, &params)?;
        log_power.push(
            psd.iter()
                .enumerate()
                .map(|(b, &p)| {
                    if p > 0.0 {
                        p.ln()
                    } else {
                        undefined.push((c, b));
                        f64::NAN
                    }
                })
                .collect(),
        );
    }
    let bins = params.nfft / 2 + 1;
    let freqs_hz = (0..bins).map(|k| k as f64 * fs_hz / params.nfft as f64).collect();
    let feature = PsdFeature { freqs_hz, log_power, band_mask: vec![true; bins], undefined };
    Ok(feature.with_band(4.0, 45.0))
}

/// Writes one CSV row per segment: subject, segment index, label, then the
/// masked log-PSD bins channel-major with headers like `Fp1@9.766Hz`.
pub fn write_feature_csv<W: Write>(
    out: W,
    channel_names: &[String],
    rows: &[(&Segment, &PsdFeature)],
) -> std::result::Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["subject_id".to_string(), "segment_index".into(), "label".into()];
    if let Some((_, first)) = rows.first() {
        for name in channel_names {
            for (f, _) in first.freqs_hz.iter().zip(&first.band_mask).filter(|(_, &m)| m) {
                header.push(format!("{name}@{f:.3}Hz"));
            }
        }
    }
    w.write_record(&header)?;
    for (seg, feat) in rows {
        let mut record = vec![seg.source_subject.clone(), seg.segment_index.to_string(), seg.label.index().to_string()];
        for row in &feat.log_power {
            record.extend(row.iter().zip(&feat.band_mask).filter(|(_, &m)| m).map(|(v, _)| format!("{v}")));
        }
        w.write_record(&record)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::Label;
    use rand::Rng;

    /// Direct O(n²) DFT periodogram of one Hann-windowed block.
    fn direct_periodogram(x: &[f64], fs: f64) -> Vec<f64> {
        let n = x.len();
        let w: Vec<f64> = (0..n).map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos()).collect();
        let energy: f64 = w.iter().map(|v| v * v).sum();
        (0..=n / 2)
            .map(|k| {
                let (mut re, mut im) = (0.0, 0.0);
                for t in 0..n {
                    let a = -2.0 * PI * (k * t) as f64 / n as f64;
                    re += x[t] * w[t] * a.cos();
                    im += x[t] * w[t] * a.sin();
                }
                let p = (re * re + im * im) / (fs * energy);
                if k == 0 || k == n / 2 { p } else { 2.0 * p }
            })
            .collect()
    }

    fn seg(data: Vec<Vec<f64>>) -> Segment {
        Segment { data, label: Label::Control, source_subject: "s".into(), segment_index: 0 }
    }

    #[test]
    fn ten_hz_peaks_at_bin_ten() {
        let x: Vec<f64> = (0..2048).map(|t| (2.0 * PI * 10.0 * t as f64 / 250.0).sin()).collect();
        let feat = welch_psd(&seg(vec![x.clone()]), 250.0).unwrap();
        let peak = |v: &[f64]| v.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
        assert_eq!(peak(&feat.log_power[0]), 10);
        assert_eq!(peak(&direct_periodogram(&x[..256], 250.0)), 10);
        assert!((feat.freqs_hz[1] - 250.0 / 256.0).abs() < 1e-12);
    }

    #[test]
    fn single_block_matches_direct_dft() {
        let mut rng = crate::rng::seeded(2);
        let x: Vec<f64> = (0..256).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let fast = welch(&x, 100.0, &WelchParams::default()).unwrap();
        for (a, b) in fast.iter().zip(direct_periodogram(&x, 100.0)) {
            assert!((a - b).abs() <= 1e-10 * b.abs().max(1e-12), "{a} vs {b}");
        }
    }

    #[test]
    fn parseval_rectangular_single_block() {
        let mut rng = crate::rng::seeded(8);
        let mut x: Vec<f64> = (0..512).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let mean = x.iter().sum::<f64>() / 512.0;
        x.iter_mut().for_each(|v| *v -= mean);
        let var = x.iter().map(|v| v * v).sum::<f64>() / 512.0;
        let params = WelchParams { nfft: 512, window: Window::Rectangular, overlap: 0.0 };
        let fs = 250.0;
        let psd = welch(&x, fs, &params).unwrap();
        let total: f64 = psd.iter().sum::<f64>() * fs / 512.0;
        assert!((total / var - 1.0).abs() < 0.01, "{total} vs {var}");
    }

    #[test]
    fn averaging_reduces_variance() {
        let mut rng = crate::rng::seeded(21);
        let (mut welch_var, mut single_var) = (0.0, 0.0);
        for _ in 0..100 {
            let x: Vec<f64> = (0..2048).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let w = welch(&x, 250.0, &WelchParams::default()).unwrap();
            let p = welch(&x[..256], 250.0, &WelchParams::default()).unwrap();
            let spread = |v: &[f64]| {
                let inner = &v[1..128];
                let m = inner.iter().sum::<f64>() / inner.len() as f64;
                inner.iter().map(|a| (a - m).powi(2)).sum::<f64>() / inner.len() as f64
            };
            welch_var += spread(&w);
            single_var += spread(&p);
        }
        assert!(welch_var < single_var, "{welch_var} vs {single_var}");
    }

    #[test]
    fn zero_segment_reports_masked_bins() {
        let feat = welch_psd(&seg(vec![vec![0.0; 512]]), 250.0).unwrap();
        assert_eq!(feat.undefined.len(), 129);
        assert!(feat.log_power[0].iter().all(|v| v.is_nan()));
        assert!(feat.feature_vector().is_err());
    }

    #[test]
    fn short_segment_is_length_error() {
        assert_eq!(
            welch_psd(&seg(vec![vec![1.0; 255]]), 250.0).unwrap_err(),
            DspError::Length { needed: 256, got: 255 }
        );
    }

    #[test]
    fn mask_restricts_features() {
        let mut rng = crate::rng::seeded(1);
        let x: Vec<f64> = (0..512).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let feat = welch_psd(&seg(vec![x.clone(), x]), 250.0).unwrap();
        let kept = feat.band_mask.iter().filter(|&&m| m).count();
        // 4.0 Hz lies between bins; bins 5..=46 fall inside 4-45 Hz
        assert_eq!(kept, 42);
        assert_eq!(feat.feature_vector().unwrap().len(), 84);
    }

    #[test]
    fn feature_csv_header() {
        let x: Vec<f64> = (0..256).map(|t| (t as f64).sin()).collect();
        let s = seg(vec![x]);
        let feat = welch_psd(&s, 250.0).unwrap();
        let mut buf = Vec::new();
        write_feature_csv(&mut buf, &["Cz".to_string()], &[(&s, &feat)]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let header = text.lines().next().unwrap();
        assert!(header.starts_with("subject_id,segment_index,label,Cz@4.883Hz,"), "{header}");
        assert_eq!(text.lines().nth(1).unwrap().split(',').count(), 3 + 42);
    }
}
