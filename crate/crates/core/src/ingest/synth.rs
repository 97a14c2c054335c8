//! Synthetic two-class EEG.
//!
//! Both classes share a pink (1/f) noise background. Controls carry a strong
//! 10 Hz (alpha) rhythm on every channel, patients a 6 Hz (theta) rhythm, each
//! with a random phase per subject. The rhythm is spatially coherent, as
//! volume-conducted scalp rhythms are: each channel's phase deviates from
//! the subject's by at most `PHASE_JITTER` radians.

use super::{IngestError, Label, Recording, Result, DATASET1_CHANNELS};
use rand::Rng as _;
use rand_distr::StandardNormal;
use rustfft::{num_complex::Complex, FftPlanner};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

pub const ALPHA_HZ: f64 = 10.0;
pub const THETA_HZ: f64 = 6.0;

/// Standard deviation of the pink background, µV.
const NOISE_UV: f64 = 10.0;
/// Largest per-channel phase offset from the subject's rhythm phase.
const PHASE_JITTER: f64 = 0.3;
/// Nominal rhythm amplitude, µV; each subject gets a ±20% jitter.
const RHYTHM_UV: f64 = 30.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub subjects_per_class: usize,
    pub channels: usize,
    pub samples: usize,
    pub sample_rate_hz: f64,
    pub seed: u64,
}

/// Generates `2 * n_subjects_per_class` recordings, controls first.
pub fn synth_generate(spec: &SynthSpec) -> Result<Vec<Recording>> {
    if spec.subjects_per_class == 0 || spec.channels == 0 || spec.samples == 0 || !(spec.sample_rate_hz > 0.0) {
        return Err(IngestError::Parameter(format!("synthetic parameters must be positive: {spec:?}")));
    }
    let names: Vec<String> = if spec.channels <= DATASET1_CHANNELS.len() {
        DATASET1_CHANNELS[..spec.channels].iter().map(|s| s.to_string()).collect()
    } else {
        (1..=spec.channels).map(|c| format!("Ch{c}")).collect()
    };
    let mut planner = FftPlanner::new();
    let ifft = planner.plan_fft_inverse(spec.samples);

    let mut out = Vec::with_capacity(2 * spec.subjects_per_class);
    for (class, label, freq) in [(0u64, Label::Control, ALPHA_HZ), (1, Label::Schizophrenia, THETA_HZ)] {
        for s in 0..spec.subjects_per_class {
            let mut rng = crate::rng::derive(spec.seed, class << 32 | s as u64);
            let amplitude = RHYTHM_UV * rng.gen_range(0.8..1.2);
            let subject_phase = rng.gen_range(0.0..2.0 * PI);
            let data = (0..spec.channels)
                .map(|_| {
                    let mut x = pink_noise(spec.samples, &mut rng, ifft.as_ref());
                    let phase = subject_phase + rng.gen_range(-PHASE_JITTER..PHASE_JITTER);
                    for (t, v) in x.iter_mut().enumerate() {
                        *v += amplitude * (2.0 * PI * freq * t as f64 / spec.sample_rate_hz + phase).sin();
                    }
                    x
                })
                .collect();
            let id = format!("synth-{}-{s:03}", if class == 0 { "ctl" } else { "sz" });
            out.push(Recording::new(id, label, spec.sample_rate_hz, names.clone(), data)?);
        }
    }
    Ok(out)
}

/// Gaussian noise shaped to a 1/f power spectrum, zero mean, `NOISE_UV` std.
fn pink_noise(n: usize, rng: &mut crate::rng::Rng, ifft: &dyn rustfft::Fft<f64>) -> Vec<f64> {
    if n < 2 {
        return vec![0.0; n];
    }
    let mut spectrum = vec![Complex::new(0.0, 0.0); n];
    for k in 1..=n / 2 {
        let scale = 1.0 / (k as f64).sqrt();
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        spectrum[k] = Complex::new(re * scale, im * scale);
        if k != n - k {
            spectrum[n - k] = spectrum[k].conj();
        } else {
            spectrum[k].im = 0.0;
        }
    }
    ifft.process(&mut spectrum);
    let mut x: Vec<f64> = spectrum.iter().map(|c| c.re).collect();
    let mean = x.iter().sum::<f64>() / n as f64;
    let std = (x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
    for v in &mut x {
        *v = (*v - mean) / std * NOISE_UV;
    }
    x
}
