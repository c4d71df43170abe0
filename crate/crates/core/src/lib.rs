//! Desk-scale reimplementation of a 4-sensor mmWave FMCW radar
//! touch-localization system: a synthetic scene simulator in place of the
//! hardware testbed, the per-sensor range-FFT/MTI/beamforming chain, a
//! conventional NLS-multilateration positioner with range calibration, a
//! feature store with a binary dataset container, a small convolutional
//! position regressor trained with hand-rolled backpropagation, and a
//! benchmark harness.

pub mod config;
pub mod csp;
pub mod dsp;
pub mod error;
pub mod features;
pub mod geom;
pub mod metrics;
pub mod pipeline;
pub mod sim;

pub mod cnn;

pub use error::{Error, Result};
