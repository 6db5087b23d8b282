//! Acoustic time-series toolkit: dataset validation, augmentation, feature
//! extraction, a contrastive spectrogram encoder, a BiLSTM calmness
//! classifier and the calmness statistics that compare the three conditions.

pub mod dsp;
pub mod error;
pub mod io;
pub mod rng;

pub use error::{Error, Result};
pub mod parallel;
pub mod validation;
pub mod features;
pub mod augment;
pub mod numerics;
pub mod split;
pub mod encoder;
pub mod embedding;
pub mod cam;
pub mod stats;
pub mod plot;
pub mod cli;
