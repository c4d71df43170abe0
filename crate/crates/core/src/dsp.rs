//! Per-sensor pre-processing chain: zero-padding, windowing, range FFT,
//! IIR moving-target-indication (MTI) clutter removal, chirp averaging, and
//! boresight beamforming.
//!
//! For each chirp c and antenna j the IF samples x_IF(s) are zero-padded to
//! N_os * N_IF, multiplied by a window whose support is the first N_IF
//! samples, and transformed with an unnormalized forward DFT
//!
//!   X(r) = sum_s x_w(s) * exp(-i 2 pi r s / (N_os N_IF)).
//!
//! Only bins [0, N_os*N_IF/2) are kept; the input is real, so the upper half
//! is the conjugate mirror and carries no extra information. Range R maps to
//! oversampled bin R / dr_os.
//!
//! The MTI filter maintains a per-sensor clutter estimate
//! x_c(f) = beta * x_r(f) + (1 - beta) * x_c(f-1), zero-initialized, and
//! outputs x_MTI(f) = x_r(f) - x_c(f): static returns decay geometrically
//! while moving targets pass.

use ndarray::{Array1, Array2, Array3};
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use std::sync::Arc;

use crate::config::{DspConfig, RadarConfig, WindowKind};
use crate::error::{Error, Result};
use crate::sim::IfFrame;

/// Complex range-FFT data for one frame of one sensor, indexed
/// (range bin r, chirp c, antenna j).
#[derive(Debug, Clone, PartialEq)]
pub struct RangeProfileFrame {
    pub frame_index: usize,
    pub sensor_index: usize,
    /// Shape (N_os*N_IF/2, N_ch, N_rx).
    pub values: Array3<Complex64>,
}

/// Per-sensor IIR clutter estimate, same shape as a profile frame.
#[derive(Debug, Clone)]
pub struct MtiState {
    clutter: Array3<Complex64>,
}

impl MtiState {
    /// Zero-initialized state for the given configuration.
    pub fn new(config: &RadarConfig) -> Self {
        Self {
            clutter: Array3::zeros((config.n_range_bins(), config.n_chirps, config.n_rx)),
        }
    }

    /// Current clutter estimate.
    pub fn clutter(&self) -> &Array3<Complex64> {
        &self.clutter
    }
}

/// Post-MTI profile averaged over chirps and antennas (boresight beamforming).
#[derive(Debug, Clone, PartialEq)]
pub struct BeamformedProfile {
    pub frame_index: usize,
    pub sensor_index: usize,
    /// Shape (N_os*N_IF/2,).
    pub values: Array1<Complex64>,
}

/// Post-MTI profile averaged over chirps only, kept per antenna.
#[derive(Debug, Clone, PartialEq)]
pub struct PerRxProfiles {
    pub frame_index: usize,
    pub sensor_index: usize,
    /// Shape (N_os*N_IF/2, N_rx).
    pub values: Array2<Complex64>,
}

/// Window coefficients over the first `n_if` samples of the padded signal.
/// Samples beyond `n_if` multiply zeros, so only these values matter.
pub fn window_coefficients(kind: WindowKind, n_if: usize) -> Vec<f64> {
    let denom = (n_if - 1).max(1) as f64;
    (0..n_if)
        .map(|s| {
            let phase = 2.0 * std::f64::consts::PI * s as f64 / denom;
            match kind {
                WindowKind::Rectangular => 1.0,
                WindowKind::Hann => 0.5 * (1.0 - phase.cos()),
                WindowKind::Hamming => 0.54 - 0.46 * phase.cos(),
            }
        })
        .collect()
}

/// Range-FFT engine with a cached FFT plan and scratch buffers; create once
/// per (radar, dsp) configuration and reuse across frames.
pub struct RangeFftProcessor {
    fft: Arc<dyn Fft<f64>>,
    fft_len: usize,
    n_if: usize,
    window: Vec<f64>,
    buffer: Vec<Complex64>,
    scratch: Vec<Complex64>,
}

impl RangeFftProcessor {
    pub fn new(radar: &RadarConfig, dsp: &DspConfig) -> Self {
        let fft_len = radar.fft_len();
        let fft = FftPlanner::new().plan_fft_forward(fft_len);
        let scratch_len = fft.get_inplace_scratch_len();
        Self {
            fft,
            fft_len,
            n_if: radar.n_if_samples,
            window: window_coefficients(dsp.window, radar.n_if_samples),
            buffer: vec![Complex64::default(); fft_len],
            scratch: vec![Complex64::default(); scratch_len],
        }
    }

    /// Zero-pad, window, and transform one frame; keep bins
    /// [0, N_os*N_IF/2) for every (chirp, antenna) pair.
    pub fn compute_range_fft(&mut self, frame: &IfFrame) -> Result<RangeProfileFrame> {
        let (n_s, n_c, n_j) = frame.samples.dim();
        if n_s != self.n_if {
            return Err(Error::ShapeMismatch(format!(
                "frame has {n_s} IF samples, processor expects {}",
                self.n_if
            )));
        }
        let half = self.fft_len / 2;
        let mut values = Array3::zeros((half, n_c, n_j));
        for c in 0..n_c {
            for j in 0..n_j {
                for s in 0..self.fft_len {
                    self.buffer[s] = if s < n_s {
                        Complex64::new(frame.samples[[s, c, j]] * self.window[s], 0.0)
                    } else {
                        Complex64::new(0.0, 0.0)
                    };
                }
                self.fft
                    .process_with_scratch(&mut self.buffer, &mut self.scratch);
                for r in 0..half {
                    values[[r, c, j]] = self.buffer[r];
                }
            }
        }
        Ok(RangeProfileFrame {
            frame_index: frame.frame_index,
            sensor_index: frame.sensor_index,
            values,
        })
    }

    /// Full-length transform of a single windowed, zero-padded channel;
    /// exposes the complete spectrum for symmetry and energy checks.
    pub fn full_spectrum(&mut self, samples: &[f64]) -> Result<Vec<Complex64>> {
        if samples.len() != self.n_if {
            return Err(Error::ShapeMismatch(format!(
                "expected {} samples, got {}",
                self.n_if,
                samples.len()
            )));
        }
        for s in 0..self.fft_len {
            self.buffer[s] = if s < samples.len() {
                Complex64::new(samples[s] * self.window[s], 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            };
        }
        self.fft
            .process_with_scratch(&mut self.buffer, &mut self.scratch);
        Ok(self.buffer.clone())
    }
}

/// One step of the IIR clutter filter: returns the filtered frame and the
/// advanced state. States must be advanced in strict frame order.
pub fn mti_filter(
    profile: &RangeProfileFrame,
    mut state: MtiState,
    beta: f64,
) -> Result<(RangeProfileFrame, MtiState)> {
    if !(beta > 0.0 && beta < 1.0) {
        return Err(Error::Config(format!(
            "mti beta must lie in (0, 1), got {beta}"
        )));
    }
    if state.clutter.dim() != profile.values.dim() {
        return Err(Error::ShapeMismatch(format!(
            "MTI state shape {:?} does not match profile shape {:?}",
            state.clutter.dim(),
            profile.values.dim()
        )));
    }
    // x_c(f) = beta * x_r(f) + (1 - beta) * x_c(f-1); output x_r(f) - x_c(f).
    let mut filtered = profile.values.clone();
    ndarray::Zip::from(&mut state.clutter)
        .and(&profile.values)
        .for_each(|c, &x| *c = beta * x + (1.0 - beta) * *c);
    ndarray::Zip::from(&mut filtered)
        .and(&state.clutter)
        .for_each(|f, &c| *f -= c);
    Ok((
        RangeProfileFrame {
            frame_index: profile.frame_index,
            sensor_index: profile.sensor_index,
            values: filtered,
        },
        state,
    ))
}

/// Boresight beamforming: arithmetic mean over all (chirp, antenna) pairs.
pub fn beamform_average(profile: &RangeProfileFrame) -> BeamformedProfile {
    let (n_r, n_c, n_j) = profile.values.dim();
    let scale = 1.0 / (n_c * n_j) as f64;
    let mut values = Array1::zeros(n_r);
    for r in 0..n_r {
        let mut acc = Complex64::new(0.0, 0.0);
        for c in 0..n_c {
            for j in 0..n_j {
                acc += profile.values[[r, c, j]];
            }
        }
        values[r] = acc * scale;
    }
    BeamformedProfile {
        frame_index: profile.frame_index,
        sensor_index: profile.sensor_index,
        values,
    }
}

/// Chirp averaging without antenna combination: mean over chirps, one
/// profile per antenna.
pub fn per_rx_chirp_average(profile: &RangeProfileFrame) -> PerRxProfiles {
    let (n_r, n_c, n_j) = profile.values.dim();
    let scale = 1.0 / n_c as f64;
    let mut values = Array2::zeros((n_r, n_j));
    for r in 0..n_r {
        for j in 0..n_j {
            let mut acc = Complex64::new(0.0, 0.0);
            for c in 0..n_c {
                acc += profile.values[[r, c, j]];
            }
            values[[r, j]] = acc * scale;
        }
    }
    PerRxProfiles {
        frame_index: profile.frame_index,
        sensor_index: profile.sensor_index,
        values,
    }
}

/// Index of the largest |x|^2 in a profile.
pub fn peak_bin(values: &[Complex64]) -> usize {
    let mut best = 0;
    let mut best_power = f64::NEG_INFINITY;
    for (i, v) in values.iter().enumerate() {
        let p = v.norm_sqr();
        if p > best_power {
            best_power = p;
            best = i;
        }
    }
    best
}

/// Strict interior local maxima of |x| whose magnitude is at least
/// `rel_floor` times the global maximum. Used to count resolvable targets
/// in a profile.
pub fn local_maxima_above(values: &[Complex64], rel_floor: f64) -> Vec<usize> {
    let mags: Vec<f64> = values.iter().map(|v| v.norm()).collect();
    let global = mags.iter().cloned().fold(0.0_f64, f64::max);
    let floor = global * rel_floor;
    let mut peaks = Vec::new();
    for i in 1..mags.len().saturating_sub(1) {
        if mags[i] > mags[i - 1] && mags[i] > mags[i + 1] && mags[i] >= floor {
            peaks.push(i);
        }
    }
    peaks
}
