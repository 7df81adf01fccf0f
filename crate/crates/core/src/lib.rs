//! Raw-waveform audio classification toolkit.
//!
//! The crate is organized bottom-up:
//!
//! * [`signal`]: STFT/ISTFT, polar decomposition, resampling, padding, gain.
//! * [`noise`]: seeded colored, uniform and phase noise.
//! * [`augment`]: label-preserving waveform transforms.
//! * [`mix`]: label-mixing augmentations (mixup, timemix, FreqMix, PhaseMix).
//! * [`pipeline`]: per-element augmentation pipeline with an introspection trace.
//! * [`model`]: the convolution + transformer classifier with exact gradients.
//! * [`train`]: AdamW, one-cycle schedule, EMA, losses, metrics, k-fold harness.
//! * [`phase_lab`]: phase-only / magnitude-only waveform synthesis experiment.
//! * [`data`]: WAV I/O, CSV manifests, fixed-duration batching.
//! * [`config`]: the merged run configuration file.
//!
//! Data-parallel loops go through [`parallel`], which uses rayon when the
//! `parallel` feature is enabled and falls back to plain iteration otherwise.

#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod augment;
pub mod config;
pub mod data;
pub mod error;
pub mod mix;
pub mod model;
pub mod noise;
pub mod parallel;
pub mod phase_lab;
pub mod pipeline;
pub mod rng;
pub mod signal;
pub mod synthetic;
pub mod train;

pub use error::{Error, Result};
pub use signal::{ComplexSpectrogram, StftConfig, Waveform};
