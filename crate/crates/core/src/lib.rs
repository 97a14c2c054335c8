//! Toolkit for EEG-based schizophrenia detection.
//!
//! The crate is split along the processing pipeline:
//!
//! * [`ingest`] reads EDF and plain-text matrix recordings, generates synthetic
//!   EEG and cuts recordings into labelled fixed-length segments.
//! * [`dsp`] holds Butterworth band-pass design, zero-phase filtering, band
//!   decomposition, z-scoring and Welch power spectra.
//! * [`nn`] is a small tensor engine with hand-written backpropagation for
//!   1-D convolution, max pooling, peephole LSTM, dense and dropout layers.
//! * [`models`] assembles the hybrid CNN-LSTM, CNN-only and LSTM-only
//!   networks, the linear SVM baseline and the training loop.
//! * [`eval`] runs cross-validated conditions, band/electrode/hyperparameter
//!   ablations and the ANOVA / paired t-test statistics.

pub mod dsp;
pub mod eval;
pub mod ingest;
pub mod models;
pub mod nn;
pub mod rng;

pub use ingest::{Label, Recording, Segment};
