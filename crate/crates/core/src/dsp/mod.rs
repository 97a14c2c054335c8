//! Signal processing: band-pass filtering, band decomposition, z-scoring
//! and Welch spectral features.

mod filter;
mod welch;

pub use filter::{design_butterworth_bandpass, filtfilt, Biquad, FilterSpec};
pub use welch::{welch, welch_psd, write_feature_csv, PsdFeature, WelchParams, Window};

use crate::ingest::Segment;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

/// Butterworth band-pass order used for every band split.
pub const FILTER_ORDER: usize = 4;

#[derive(Debug, Error, PartialEq)]
pub enum DspError {
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("upper edge {hi_hz} Hz is not below Nyquist for fs = {fs_hz} Hz")]
    Nyquist { hi_hz: f64, fs_hz: f64 },
    #[error("section {section} is unstable")]
    Unstable { section: usize },
    #[error("input too short: need at least {needed} samples, got {got}")]
    Length { needed: usize, got: usize },
    #[error("channel {channel} is constant and cannot be standardized")]
    DegenerateChannel { channel: usize },
}

pub type Result<T> = std::result::Result<T, DspError>;

/// The canonical physiological bands.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Band {
    Theta,
    Alpha,
    Beta,
    Gamma,
    All,
}

impl Band {
    pub const ALL_BANDS: [Band; 5] = [Band::Theta, Band::Alpha, Band::Beta, Band::Gamma, Band::All];

    pub fn def(self) -> BandDef {
        let (lo_hz, hi_hz) = match self {
            Band::Theta => (4.0, 8.0),
            Band::Alpha => (8.0, 15.0),
            Band::Beta => (15.0, 32.0),
            Band::Gamma => (32.0, 45.0),
            Band::All => (4.0, 45.0),
        };
        BandDef { band: self, lo_hz, hi_hz }
    }

    pub fn name(self) -> &'static str {
        match self {
            Band::Theta => "theta",
            Band::Alpha => "alpha",
            Band::Beta => "beta",
            Band::Gamma => "gamma",
            Band::All => "all",
        }
    }
}

impl std::fmt::Display for Band {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Band {
    type Err = DspError;
    fn from_str(s: &str) -> Result<Band> {
        Band::ALL_BANDS
            .into_iter()
            .find(|b| b.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| DspError::Parameter(format!("unknown band {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandDef {
    pub band: Band,
    pub lo_hz: f64,
    pub hi_hz: f64,
}

impl BandDef {
    pub fn filter(&self, fs_hz: f64) -> Result<FilterSpec> {
        design_butterworth_bandpass(FILTER_ORDER, self.lo_hz, self.hi_hz, fs_hz)
    }
}

/// Filters every channel of `seg` into each requested band.
///
/// `Band::All` is a single 4-45 Hz pass, not a cascade of the broad filter
/// and itself.
pub fn band_decompose(seg: &Segment, bands: &[Band], fs_hz: f64) -> Result<BTreeMap<Band, Segment>> {
    let mut out = BTreeMap::new();
    for &band in bands {
        let spec = band.def().filter(fs_hz)?;
        let data = seg.data.iter().map(|ch| filtfilt(&spec, ch)).collect::<Result<Vec<_>>>()?;
        out.insert(band, seg.with_data(data));
    }
    Ok(out)
}

/// Per-channel standardization to zero mean and unit population standard
/// deviation.
pub fn zscore(seg: &Segment) -> Result<Segment> {
    let data = seg
        .data
        .iter()
        .enumerate()
        .map(|(c, ch)| zscore_channel(ch).ok_or(DspError::DegenerateChannel { channel: c }))
        .collect::<Result<Vec<_>>>()?;
    Ok(seg.with_data(data))
}

fn zscore_channel(x: &[f64]) -> Option<Vec<f64>> {
    if x.is_empty() {
        return None;
    }
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    let scale = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if !(std > f64::EPSILON * scale) || !std.is_finite() {
        return None;
    }
    Some(x.iter().map(|v| (v - mean) / std).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::Label;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn seg(data: Vec<Vec<f64>>) -> Segment {
        Segment { data, label: Label::Control, source_subject: "s".into(), segment_index: 0 }
    }

    fn variance(x: &[f64]) -> f64 {
        let m = x.iter().sum::<f64>() / x.len() as f64;
        x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / x.len() as f64
    }

    #[test]
    fn canonical_bands() {
        let defs: Vec<(f64, f64)> = Band::ALL_BANDS.iter().map(|b| (b.def().lo_hz, b.def().hi_hz)).collect();
        assert_eq!(defs, vec![(4.0, 8.0), (8.0, 15.0), (15.0, 32.0), (32.0, 45.0), (4.0, 45.0)]);
        assert_eq!("Gamma".parse::<Band>().unwrap(), Band::Gamma);
        assert!("delta".parse::<Band>().is_err());
    }

    #[test]
    fn zscore_closed_form() {
        let out = zscore(&seg(vec![vec![1.0, 2.0, 3.0]])).unwrap();
        let expected = [-1.224_744_871_391_589, 0.0, 1.224_744_871_391_589];
        for (a, b) in out.data[0].iter().zip(expected) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn zscore_of_standardized_is_unchanged() {
        let z = [-1.224_744_871_391_589, 0.0, 1.224_744_871_391_589];
        let out = zscore(&seg(vec![z.to_vec()])).unwrap();
        for (a, b) in out.data[0].iter().zip(z) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_channel_named_in_error() {
        let err = zscore(&seg(vec![vec![1.0, 2.0], vec![5.0, 5.0]])).unwrap_err();
        assert_eq!(err, DspError::DegenerateChannel { channel: 1 });
    }

    #[test]
    fn theta_sinusoid_stays_in_theta() {
        let fs = 250.0;
        let x: Vec<f64> = (0..2500).map(|t| (2.0 * PI * 6.0 * t as f64 / fs).sin()).collect();
        let bands = band_decompose(&seg(vec![x]), &[Band::Theta, Band::Gamma], fs).unwrap();
        let rms = |b: Band| (variance(&bands[&b].data[0][250..2250])).sqrt() * 2f64.sqrt();
        assert!(rms(Band::Theta) >= 0.9, "{}", rms(Band::Theta));
        assert!(rms(Band::Gamma) <= 0.01, "{}", rms(Band::Gamma));
    }

    #[test]
    fn band_limiting_removes_white_noise_power() {
        let mut rng = crate::rng::seeded(11);
        let x: Vec<f64> = (0..2000).map(|_| rand::Rng::gen_range(&mut rng, -1.0..1.0)).collect();
        let out = band_decompose(&seg(vec![x.clone()]), &[Band::All], 250.0).unwrap();
        assert!(variance(&out[&Band::All].data[0]) < variance(&x));
    }

    #[test]
    fn in_band_powers_add_up() {
        // one sinusoid at the geometric centre of each narrow band
        let fs = 250.0;
        let centres: Vec<f64> = Band::ALL_BANDS[..4].iter().map(|b| (b.def().lo_hz * b.def().hi_hz).sqrt()).collect();
        let x: Vec<f64> = (0..5000)
            .map(|t| {
                let t = t as f64 / fs;
                centres.iter().map(|f| (2.0 * PI * f * t).sin()).sum::<f64>()
            })
            .collect();
        let out = band_decompose(&seg(vec![x]), &Band::ALL_BANDS, fs).unwrap();
        let power = |b: Band| variance(&out[&b].data[0][500..4500]);
        let parts: f64 = [Band::Theta, Band::Alpha, Band::Beta, Band::Gamma].iter().map(|&b| power(b)).sum();
        let all = power(Band::All);
        assert!((parts / all - 1.0).abs() < 0.10, "{parts} vs {all}");
    }

    #[test]
    fn empty_band_list() {
        assert!(band_decompose(&seg(vec![vec![0.0; 100]]), &[], 250.0).unwrap().is_empty());
    }

    proptest! {
        #[test]
        fn zscore_is_idempotent(x in proptest::collection::vec(-1e3f64..1e3, 3..200)) {
            prop_assume!(variance(&x) > 1e-6);
            let once = zscore(&seg(vec![x])).unwrap();
            let twice = zscore(&once).unwrap();
            let mean = once.data[0].iter().sum::<f64>() / once.data[0].len() as f64;
            prop_assert!(mean.abs() < 1e-9);
            prop_assert!((variance(&once.data[0]) - 1.0).abs() < 1e-9);
            for (a, b) in once.data[0].iter().zip(&twice.data[0]) {
                prop_assert!((a - b).abs() < 1e-9);
            }
        }
    }
}
