//! Conventional signal-processing positioner: per-antenna and beamformed
//! range estimation with consensus gating, per-sensor range calibration,
//! temporal averaging, and nonlinear-least-squares multilateration.
//!
//! Per sensor i and frame f, each antenna j yields a range estimate
//! r_ij = dr_os * argmax_r |x_MTI,c(r, j)|^2. When all per-antenna estimates
//! agree within dr_th the beamformed estimate r_bf (same argmax over the
//! beamformed profile) is accepted and the calibration offset r_cal,i is
//! subtracted; otherwise the frame is invalid for that sensor. Valid
//! estimates are averaged over the last N_w frames, and the position is
//! recovered by minimizing sum_i (||s_i - p|| - r_i)^2 with a damped
//! Gauss-Newton (Levenberg-Marquardt) iteration started from several
//! initial guesses.

use serde::{Deserialize, Serialize};

use crate::config::{CspConfig, DspConfig, RadarConfig};
use crate::dsp::{
    beamform_average, mti_filter, peak_bin, per_rx_chirp_average, BeamformedProfile, MtiState,
    PerRxProfiles, RangeFftProcessor,
};
use crate::error::{Error, Result};
use crate::geom::{SensorArray, TouchEvent};
use crate::sim::SessionRecording;

/// Per-sensor constant range offsets (cm), subtracted from beamformed
/// range estimates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationTable {
    pub offsets_cm: Vec<f64>,
}

impl CalibrationTable {
    /// All-zero table (uncalibrated operation).
    pub fn zero(n_sensors: usize) -> Self {
        Self {
            offsets_cm: vec![0.0; n_sensors],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.offsets_cm.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("calibration offsets must be finite".into()));
        }
        Ok(())
    }
}

/// Range observation of one sensor at one frame; `None` marks a frame
/// invalidated by the per-antenna consensus gate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensorRangeEstimate {
    pub sensor: usize,
    pub frame: usize,
    pub value_cm: Option<f64>,
}

/// Positioning method tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Csp,
    Cnn,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Csp => "csp",
            Method::Cnn => "cnn",
        }
    }
}

/// A 2-D position estimate in radar coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PositionEstimate {
    pub position_cm: (f64, f64),
    pub method: Method,
    pub event_id: usize,
    /// Achieved NLS objective in cm^2 (CSP only).
    pub residual_cm2: Option<f64>,
    pub n_sensors_used: usize,
    /// False when the iteration cap was hit before the step shrank below
    /// tolerance; the estimate is still the best point found.
    pub converged: bool,
}

/// Consensus gate and calibration arithmetic on already-extracted ranges:
/// returns r_bf - r_cal when every pair of per-antenna estimates agrees
/// within `tolerance_cm`, `None` otherwise.
pub fn consensus_estimate(
    per_rx_ranges_cm: &[f64],
    bf_range_cm: f64,
    tolerance_cm: f64,
    r_cal_cm: f64,
) -> Option<f64> {
    for (a, &ra) in per_rx_ranges_cm.iter().enumerate() {
        for &rb in per_rx_ranges_cm.iter().skip(a + 1) {
            if (ra - rb).abs() > tolerance_cm {
                return None;
            }
        }
    }
    Some(bf_range_cm - r_cal_cm)
}

/// Extract the per-frame range estimate for one sensor from its chirp-
/// averaged per-antenna profiles and beamformed profile.
pub fn estimate_ranges(
    per_rx: &PerRxProfiles,
    bf: &BeamformedProfile,
    radar: &RadarConfig,
    config: &CspConfig,
    calib: &CalibrationTable,
) -> SensorRangeEstimate {
    let dr_os = radar.oversampled_bin_cm();
    let (_, n_j) = per_rx.values.dim();
    let mut per_rx_ranges = Vec::with_capacity(n_j);
    for j in 0..n_j {
        let column: Vec<num_complex::Complex64> = per_rx.values.column(j).to_vec();
        per_rx_ranges.push(peak_bin(&column) as f64 * dr_os);
    }
    let bf_range = peak_bin(bf.values.as_slice().expect("contiguous")) as f64 * dr_os;
    let r_cal = calib.offsets_cm.get(bf.sensor_index).copied().unwrap_or(0.0);
    SensorRangeEstimate {
        sensor: bf.sensor_index,
        frame: bf.frame_index,
        value_cm: consensus_estimate(&per_rx_ranges, bf_range, config.consensus_tolerance_cm, r_cal),
    }
}

/// Mean of the valid entries in a window of per-frame estimates, or `None`
/// when every frame was invalid.
pub fn window_average_ranges(history: &[SensorRangeEstimate]) -> Option<f64> {
    let valid: Vec<f64> = history.iter().filter_map(|e| e.value_cm).collect();
    if valid.is_empty() {
        None
    } else {
        Some(valid.iter().sum::<f64>() / valid.len() as f64)
    }
}

/// One calibration observation: a ground-truth position and the sensor's
/// uncalibrated averaged range estimates (None where consensus failed).
#[derive(Debug, Clone)]
pub struct CalibrationEvent {
    pub gt_cm: (f64, f64),
    pub ranges_cm: Vec<Option<f64>>,
}

/// Estimate per-sensor range offsets as the empirical mean of the range
/// errors: r_cal,i = mean(measured - true), so that subtracting r_cal,i
/// from later measurements removes the bias. Uses only events where the
/// sensor produced a valid range; a sensor with no valid events fails.
pub fn estimate_calibration(
    events: &[CalibrationEvent],
    sensors: &SensorArray,
) -> Result<CalibrationTable> {
    let n = sensors.len();
    let mut sums = vec![0.0_f64; n];
    let mut counts = vec![0_usize; n];
    for ev in events {
        for i in 0..n.min(ev.ranges_cm.len()) {
            if let Some(measured) = ev.ranges_cm[i] {
                let true_range = sensors.range_to(i, ev.gt_cm);
                sums[i] += measured - true_range;
                counts[i] += 1;
            }
        }
    }
    let mut offsets = Vec::with_capacity(n);
    for i in 0..n {
        if counts[i] == 0 {
            return Err(Error::CalibrationFailure { sensor: i });
        }
        offsets.push(sums[i] / counts[i] as f64);
    }
    Ok(CalibrationTable { offsets_cm: offsets })
}

/// NLS objective sum_i (||s_i - p|| - r_i)^2 over the given (position,
/// range) anchors, in cm^2.
pub fn nls_objective(p: (f64, f64), anchors: &[((f64, f64), f64)]) -> f64 {
    anchors
        .iter()
        .map(|&((sx, sy), r)| {
            let d = ((p.0 - sx).powi(2) + (p.1 - sy).powi(2)).sqrt();
            (d - r).powi(2)
        })
        .sum()
}

/// Levenberg-Marquardt minimization of the range-residual objective from a
/// single start, with monotone acceptance. Returns (point, objective,
/// converged).
fn lm_from(
    start: (f64, f64),
    anchors: &[((f64, f64), f64)],
    config: &CspConfig,
) -> ((f64, f64), f64, bool) {
    let centroid = {
        let n = anchors.len() as f64;
        let (sx, sy) = anchors
            .iter()
            .fold((0.0, 0.0), |acc, &((x, y), _)| (acc.0 + x, acc.1 + y));
        (sx / n, sy / n)
    };
    let mut p = start;
    let mut objective = nls_objective(p, anchors);
    let mut lambda = 1e-3;
    let mut converged = false;

    for _ in 0..config.nls_max_iterations {
        // Keep iterates off the range-function singularities at the anchors.
        for &((sx, sy), _) in anchors {
            let d = ((p.0 - sx).powi(2) + (p.1 - sy).powi(2)).sqrt();
            if d < 1e-9 {
                let to_center = (centroid.0 - p.0, centroid.1 - p.1);
                let norm = (to_center.0.powi(2) + to_center.1.powi(2)).sqrt().max(1e-12);
                p = (
                    p.0 + 1e-6 * to_center.0 / norm,
                    p.1 + 1e-6 * to_center.1 / norm,
                );
            }
        }

        // J^T J and J^T e for residuals e_i = ||s_i - p|| - r_i.
        let (mut jtj00, mut jtj01, mut jtj11) = (0.0_f64, 0.0_f64, 0.0_f64);
        let (mut jte0, mut jte1) = (0.0_f64, 0.0_f64);
        for &((sx, sy), r) in anchors {
            let dx = p.0 - sx;
            let dy = p.1 - sy;
            let d = (dx * dx + dy * dy).sqrt().max(1e-12);
            let e = d - r;
            let (jx, jy) = (dx / d, dy / d);
            jtj00 += jx * jx;
            jtj01 += jx * jy;
            jtj11 += jy * jy;
            jte0 += jx * e;
            jte1 += jy * e;
        }

        let mut stepped = false;
        for _ in 0..20 {
            let a00 = jtj00 + lambda;
            let a11 = jtj11 + lambda;
            let det = a00 * a11 - jtj01 * jtj01;
            if det.abs() < 1e-18 {
                lambda *= 10.0;
                continue;
            }
            let dx = -(a11 * jte0 - jtj01 * jte1) / det;
            let dy = -(-jtj01 * jte0 + a00 * jte1) / det;
            let candidate = (p.0 + dx, p.1 + dy);
            let cand_obj = nls_objective(candidate, anchors);
            if cand_obj <= objective {
                p = candidate;
                objective = cand_obj;
                lambda = (lambda / 10.0).max(1e-12);
                stepped = true;
                if (dx * dx + dy * dy).sqrt() < config.nls_convergence_tol_cm {
                    converged = true;
                }
                break;
            }
            lambda *= 10.0;
        }
        if converged || !stepped {
            // No improving step found at any damping: local minimum.
            converged = converged || !stepped;
            break;
        }
    }
    (p, objective, converged)
}

/// Solve the multilateration problem from per-sensor averaged ranges.
/// `ranges_cm[i]` pairs with `sensors.positions_cm[i]`; `None` entries are
/// dropped. Fails when fewer than `min_valid_sensors` remain or the valid
/// sensors are collinear.
pub fn solve_nls(
    ranges_cm: &[Option<f64>],
    sensors: &SensorArray,
    config: &CspConfig,
) -> Result<PositionEstimate> {
    let anchors: Vec<((f64, f64), f64)> = ranges_cm
        .iter()
        .enumerate()
        .filter_map(|(i, r)| r.map(|r| (sensors.positions_cm[i], r)))
        .collect();
    if anchors.len() < config.min_valid_sensors {
        return Err(Error::PositioningUnavailable {
            valid: anchors.len(),
            required: config.min_valid_sensors,
        });
    }
    // Collinear anchors leave the lateral direction unobservable.
    let mut max_area = 0.0_f64;
    for a in 0..anchors.len() {
        for b in (a + 1)..anchors.len() {
            for c in (b + 1)..anchors.len() {
                let (pa, pb, pc) = (anchors[a].0, anchors[b].0, anchors[c].0);
                let area = ((pb.0 - pa.0) * (pc.1 - pa.1) - (pc.0 - pa.0) * (pb.1 - pa.1)).abs();
                max_area = max_area.max(area);
            }
        }
    }
    if max_area < 1e-9 {
        return Err(Error::Geometry("valid sensors are collinear".into()));
    }

    // Inverse-range-weighted centroid start: sensors reporting short ranges
    // pull the initial guess toward themselves.
    let mut wsum = 0.0;
    let mut initial = (0.0, 0.0);
    for &((sx, sy), r) in &anchors {
        let w = 1.0 / r.max(1e-3);
        initial = (initial.0 + w * sx, initial.1 + w * sy);
        wsum += w;
    }
    let initial = (initial.0 / wsum, initial.1 / wsum);

    // Multi-start: the weighted centroid plus the four quadrant centers of
    // the sensor bounding box (the objective is nonconvex).
    let (xs, ys): (Vec<f64>, Vec<f64>) = anchors.iter().map(|&((x, y), _)| (x, y)).unzip();
    let (xmin, xmax) = xs.iter().fold((f64::MAX, f64::MIN), |a, &v| (a.0.min(v), a.1.max(v)));
    let (ymin, ymax) = ys.iter().fold((f64::MAX, f64::MIN), |a, &v| (a.0.min(v), a.1.max(v)));
    let (xc, yc) = ((xmin + xmax) / 2.0, (ymin + ymax) / 2.0);
    let starts = [
        initial,
        ((xmin + xc) / 2.0, (ymin + yc) / 2.0),
        ((xc + xmax) / 2.0, (ymin + yc) / 2.0),
        ((xmin + xc) / 2.0, (yc + ymax) / 2.0),
        ((xc + xmax) / 2.0, (yc + ymax) / 2.0),
    ];

    let mut best: Option<((f64, f64), f64, bool)> = None;
    for start in starts {
        let trial = lm_from(start, &anchors, config);
        if best.as_ref().is_none_or(|b| trial.1 < b.1) {
            best = Some(trial);
        }
    }
    let (position, objective, converged) = best.expect("at least one start");
    Ok(PositionEstimate {
        position_cm: position,
        method: Method::Csp,
        event_id: 0,
        residual_cm2: Some(objective),
        n_sensors_used: anchors.len(),
        converged,
    })
}

/// Window-averaged per-sensor ranges for one touch event, extracted from a
/// materialized recording: runs the full DSP chain (with MTI state warmed
/// from frame 0) through the event frame f_n for every sensor, then averages
/// the per-frame estimates over the last `window_frames` frames.
pub fn event_window_ranges(
    recording: &SessionRecording,
    event: &TouchEvent,
    calib: &CalibrationTable,
    radar: &RadarConfig,
    dsp: &DspConfig,
    config: &CspConfig,
) -> Result<Vec<Option<f64>>> {
    let f_n = event.frame_index(radar.frame_rate_hz);
    let window_start = (f_n + 1).saturating_sub(config.window_frames);
    let mut averaged = Vec::with_capacity(recording.frames.len());
    let mut proc = RangeFftProcessor::new(radar, dsp);
    for frames in &recording.frames {
        if f_n >= frames.len() {
            return Err(Error::ShapeMismatch(format!(
                "event frame {f_n} beyond recording length {}",
                frames.len()
            )));
        }
        let mut state = MtiState::new(radar);
        let mut history = Vec::with_capacity(config.window_frames);
        for (f, frame) in frames.iter().enumerate().take(f_n + 1) {
            let profile = proc.compute_range_fft(frame)?;
            let (filtered, next) = mti_filter(&profile, state, dsp.mti_beta)?;
            state = next;
            if f >= window_start {
                let per_rx = per_rx_chirp_average(&filtered);
                let bf = beamform_average(&filtered);
                history.push(estimate_ranges(&per_rx, &bf, radar, config, calib));
            }
        }
        averaged.push(window_average_ranges(&history));
    }
    Ok(averaged)
}

/// End-to-end CSP localization of one touch event from a materialized
/// recording.
pub fn locate_event_csp(
    recording: &SessionRecording,
    event: &TouchEvent,
    sensors: &SensorArray,
    calib: &CalibrationTable,
    radar: &RadarConfig,
    dsp: &DspConfig,
    config: &CspConfig,
) -> Result<PositionEstimate> {
    let ranges = event_window_ranges(recording, event, calib, radar, dsp, config)?;
    let mut estimate = solve_nls(&ranges, sensors, config)?;
    estimate.event_id = recording
        .events
        .iter()
        .position(|e| e.row == event.row && e.col == event.col)
        .unwrap_or(0);
    Ok(estimate)
}
