//! Desk-scale testbed for adversarial attacks on ML-based interference
//! classification in an O-RAN-like setup.
//!
//! The pipeline: synthesize 5G-style signals with chirp/continuous-wave
//! interference ([`signal`]), convert them to wavelet scalograms
//! ([`scalogram`]), classify them with a small differentiable CNN ([`nn`]),
//! perturb stored scalograms with FGSM/PGD from a malicious xApp
//! ([`attack`], [`xapp`]), exchange data through a versioned key-value
//! HTTP service standing in for the RIC's shared data layer ([`sdl`]),
//! and measure the impact on network capacity and bit loss ([`netsim`]).
//! [`experiment`] orchestrates datasets, training, attack sweeps and
//! end-to-end runs.

pub mod nn;
pub mod scalogram;
pub mod signal;

pub use signal::{IqSignal, SignalClass};
