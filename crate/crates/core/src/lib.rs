//! Link-level simulator for coarse-to-fine channel-adaptive transmission over
//! OFDM block-fading channels.
//!
//! The crate is organised bottom-up:
//!
//! * [`phy`] - symbol blocking, OFDM modulation, tapped-delay-line block fading.
//! * [`receiver`] - pilot-based LS/LMMSE estimation and zero-forcing equalization.
//! * [`snr`] - average, per-subcarrier and EESM effective SNR.
//! * [`codec`] - the dual-phase surrogate codec (coarse allocation, fine re-encoding).
//! * [`cqi`] - CQI quantization baselines and the DQN-based CQI selector.
//! * [`harness`] - episode runner, scenarios, sweeps and file formats.

pub mod codec;
pub mod cqi;
pub mod error;
pub mod harness;
pub mod phy;
pub mod receiver;
pub mod rng;
pub mod snr;

pub use error::{Error, Result};
pub use num_complex::Complex64;
