//! Dual-semantics network engine: the same weight graph runs as a
//! QCFS-activated ANN or as a time-stepped SNN built from integrate-and-fire
//! or group neurons.
//!
//! * [`neuron`]: IF and group-neuron dynamics and constant-input rate formulas.
//! * [`activation`]: QCFS and ReLU.
//! * [`network`]: layers, ANN and SNN forward passes, JSON model files.
//! * [`conversion`]: lambda-to-threshold mapping and IF-to-GN replacement.
//! * [`trainer`]: small dense QCFS networks trained with a straight-through
//!   estimator.
//! * [`analysis`]: firing-rate curves, conversion MSE, accuracy and
//!   rate-identity audits.
//! * [`data`]: CSV, IDX and synthetic blob datasets.

pub mod activation;
pub mod analysis;
pub mod conversion;
pub mod data;
pub mod error;
pub mod network;
pub mod neuron;
pub mod trainer;

pub use error::{Error, Result};
