//! Acoustic anomaly detection for industrial machines.
//!
//! The pipeline reads 16 kHz machine recordings (or generates synthetic ones),
//! extracts log-Mel spectrogram features, trains either a dense autoencoder or
//! a one-class / soft-boundary deep SVDD model on normal data only, and scores
//! test clips by reconstruction error or distance to the hypersphere center.

pub mod audio_io;
pub mod diffcore;
pub mod error;
pub mod evaluation;
pub mod features;
pub mod models;
pub mod pipeline;
pub mod synthgen;
pub mod training;

pub use error::{Error, Result};
