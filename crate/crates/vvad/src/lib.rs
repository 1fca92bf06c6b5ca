//! Visual voice activity detection toolkit.
//!
//! Detects whether a visible face is speaking, from video alone. Two model
//! families are provided: a recurrent network over frontalized 3D facial
//! landmarks and a per-frame convolutional network over color-encoded dense
//! optical flow. Around them sit an automatic annotation pipeline that turns
//! raw face detections plus audio voice activity into labeled clips, a
//! synthetic data generator for controlled experiments, and evaluation
//! protocols including cross-validation, clean-holdout testing, and label
//! noise studies.
//!
//! The `vvad` binary exposes the whole flow as subcommands; see the crate
//! README for a tour.

pub mod avad;
pub mod cli;
pub mod error;
pub mod eval;
pub mod flow;
pub mod geometry;
pub mod manifest;
pub mod models;
pub mod nn;
pub mod pipeline;
pub mod seed;
pub mod synth;

pub use error::{Error, Result};
