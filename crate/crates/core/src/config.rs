//! Configuration types for the radar waveform, DSP chain, positioner,
//! simulator, model, and benchmark harness.
//!
//! Every default reproduces the reference measurement setup: a 4-sensor
//! 60 GHz FMCW array around a 34.3 cm x 17.8 cm touch area, 4.874 GHz chirp
//! bandwidth, 120 Hz frame rate, 64 IF samples over 8 chirps and 3 RX
//! antennas, and 8x zero-padded range FFTs.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{DisplayGeometry, SensorArray};

/// Speed of light in m/s.
pub const SPEED_OF_LIGHT_M_S: f64 = 299_792_458.0;

/// Waveform and array parameters of the radar sensors.
///
/// Derived quantities (`range_bin_m`, `oversampled_bin_m`) are methods so the
/// relation `dr = c / (2 f_BW)` holds by construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RadarConfig {
    /// Chirp bandwidth f_BW in Hz.
    pub chirp_bandwidth_hz: f64,
    /// Carrier frequency f_c in Hz (sets the phase sensitivity 4*pi*R*f_c/c).
    pub carrier_hz: f64,
    /// Frame repetition rate f_r in Hz.
    pub frame_rate_hz: f64,
    /// IF samples per chirp, N_IF.
    pub n_if_samples: usize,
    /// Chirps per frame, N_ch.
    pub n_chirps: usize,
    /// RX antennas per sensor, N_rx.
    pub n_rx: usize,
    /// Number of radar sensors, N_rad.
    pub n_sensors: usize,
    /// Zero-padding factor N_os for the range FFT.
    pub oversampling: usize,
}

impl Default for RadarConfig {
    fn default() -> Self {
        Self {
            chirp_bandwidth_hz: 4.874e9,
            carrier_hz: 60.0e9,
            frame_rate_hz: 120.0,
            n_if_samples: 64,
            n_chirps: 8,
            n_rx: 3,
            n_sensors: 4,
            oversampling: 8,
        }
    }
}

impl RadarConfig {
    /// Range-bin width dr = c / (2 f_BW) in meters (3.075 cm at defaults).
    pub fn range_bin_m(&self) -> f64 {
        SPEED_OF_LIGHT_M_S / (2.0 * self.chirp_bandwidth_hz)
    }

    /// Range-bin width in cm.
    pub fn range_bin_cm(&self) -> f64 {
        100.0 * self.range_bin_m()
    }

    /// Oversampled bin width dr_os = dr / N_os in meters.
    pub fn oversampled_bin_m(&self) -> f64 {
        self.range_bin_m() / self.oversampling as f64
    }

    /// Oversampled bin width in cm (0.384 cm at defaults).
    pub fn oversampled_bin_cm(&self) -> f64 {
        self.range_bin_cm() / self.oversampling as f64
    }

    /// Zero-padded FFT length N_os * N_IF.
    pub fn fft_len(&self) -> usize {
        self.oversampling * self.n_if_samples
    }

    /// Number of retained range bins, N_os * N_IF / 2.
    pub fn n_range_bins(&self) -> usize {
        self.fft_len() / 2
    }

    /// Unambiguous (maximum representable) range N_IF * dr / 2 in cm.
    pub fn unambiguous_range_cm(&self) -> f64 {
        self.n_if_samples as f64 * self.range_bin_cm() / 2.0
    }

    pub fn validate(&self) -> Result<()> {
        if self.chirp_bandwidth_hz <= 0.0 || self.carrier_hz <= 0.0 || self.frame_rate_hz <= 0.0 {
            return Err(Error::Config(
                "bandwidth, carrier, and frame rate must be positive".into(),
            ));
        }
        if self.n_if_samples == 0 || self.n_chirps == 0 || self.n_rx == 0 || self.n_sensors == 0 {
            return Err(Error::Config("array dimensions must be nonzero".into()));
        }
        if self.oversampling < 1 {
            return Err(Error::Config("oversampling must be >= 1".into()));
        }
        if self.fft_len() % 2 != 0 {
            return Err(Error::Config("FFT length must be even".into()));
        }
        Ok(())
    }
}

/// Window applied to the IF samples before the range FFT.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowKind {
    Rectangular,
    Hann,
    Hamming,
}

/// DSP-chain knobs. The zero-padding factor N_os lives in [`RadarConfig`]
/// (it defines the bin geometry used by every downstream module).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DspConfig {
    /// Window w_IF applied to the first N_IF samples of the padded signal.
    pub window: WindowKind,
    /// IIR clutter-filter response parameter, 0 < beta < 1.
    pub mti_beta: f64,
}

impl Default for DspConfig {
    fn default() -> Self {
        Self {
            window: WindowKind::Hann,
            mti_beta: 0.05,
        }
    }
}

impl DspConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.mti_beta > 0.0 && self.mti_beta < 1.0) {
            return Err(Error::Config(format!(
                "mti_beta must lie in (0, 1), got {}",
                self.mti_beta
            )));
        }
        Ok(())
    }
}

/// Conventional-positioner parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CspConfig {
    /// Consensus tolerance dr_th between per-RX range estimates, cm.
    pub consensus_tolerance_cm: f64,
    /// Temporal averaging window N_w (frames).
    pub window_frames: usize,
    /// Levenberg-Marquardt iteration cap.
    pub nls_max_iterations: usize,
    /// Step-norm convergence threshold, cm.
    pub nls_convergence_tol_cm: f64,
    /// Minimum sensors with valid averaged ranges for a position fix.
    pub min_valid_sensors: usize,
}

impl Default for CspConfig {
    fn default() -> Self {
        Self {
            // Two oversampled bins: tolerates +/-1 bin of per-antenna
            // disagreement at the default waveform (2 * 0.3844 cm).
            consensus_tolerance_cm: 2.0 * RadarConfig::default().oversampled_bin_cm(),
            window_frames: 5,
            nls_max_iterations: 100,
            nls_convergence_tol_cm: 1e-9,
            min_valid_sensors: 3,
        }
    }
}

impl CspConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window_frames < 1 {
            return Err(Error::Config("window_frames must be >= 1".into()));
        }
        if self.min_valid_sensors < 3 {
            return Err(Error::Config(
                "min_valid_sensors must be >= 3 for a planar fix".into(),
            ));
        }
        if self.consensus_tolerance_cm < 0.0 {
            return Err(Error::Config("consensus tolerance must be >= 0".into()));
        }
        Ok(())
    }
}

/// Distributed-target (finger + robot arm) model for the simulator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TargetModel {
    /// Reflectivity of the finger scatterer.
    pub finger_amplitude: f64,
    /// Arm scatterer offsets behind the finger along +y, cm.
    pub arm_offsets_cm: Vec<f64>,
    /// Arm amplitude as a multiple of the finger amplitude.
    pub arm_amplitude_ratio: f64,
    /// Per-frame rigid radial jitter of the whole target, cm (std dev).
    pub jitter_sigma_cm: f64,
    /// Start of the approach trajectory, cm beyond the touch point along +y.
    pub approach_offset_cm: f64,
}

impl Default for TargetModel {
    fn default() -> Self {
        Self {
            finger_amplitude: 1.0,
            arm_offsets_cm: vec![1.5, 2.5, 4.0],
            arm_amplitude_ratio: 2.0,
            jitter_sigma_cm: 0.1,
            approach_offset_cm: 3.0,
        }
    }
}

/// Static clutter model: fixed scatterers drawn once per session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClutterModel {
    /// Number of static clutter scatterers.
    pub count: usize,
    /// Reflectivity of each clutter scatterer.
    pub amplitude: f64,
}

impl Default for ClutterModel {
    fn default() -> Self {
        Self {
            count: 3,
            amplitude: 2.0,
        }
    }
}

/// Frame schedule of a recording session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SessionSchedule {
    /// Frames before the first touch (lets the MTI clutter estimate settle).
    pub lead_in_frames: usize,
    /// Frames moving in toward each grid point.
    pub approach_frames: usize,
    /// Frames dwelling on the point; the touch event fires at the midpoint.
    pub dwell_frames: usize,
    /// Frames moving back out.
    pub retract_frames: usize,
    /// Frames after the last touch.
    pub tail_frames: usize,
}

impl Default for SessionSchedule {
    fn default() -> Self {
        Self {
            lead_in_frames: 240,
            approach_frames: 8,
            dwell_frames: 14,
            retract_frames: 8,
            tail_frames: 60,
        }
    }
}

impl SessionSchedule {
    /// Frames spent on one grid point.
    pub fn frames_per_point(&self) -> usize {
        self.approach_frames + self.dwell_frames + self.retract_frames
    }

    /// Frame index of the touch event for the k-th visited point.
    pub fn touch_frame(&self, point_index: usize) -> usize {
        self.lead_in_frames
            + point_index * self.frames_per_point()
            + self.approach_frames
            + self.dwell_frames / 2
    }

    /// Total frames in a session covering `n_points` grid points.
    pub fn session_frames(&self, n_points: usize) -> usize {
        self.lead_in_frames + n_points * self.frames_per_point() + self.tail_frames
    }
}

/// Simulator parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    /// White-noise standard deviation added to every IF sample.
    pub noise_std: f64,
    /// When true, amplitudes fall off as 1/R^2 from each sensor.
    pub inverse_square_loss: bool,
    pub target: TargetModel,
    pub clutter: ClutterModel,
    pub schedule: SessionSchedule,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            // Target jitter already gives per-frame range estimates a
            // 0.2-0.3 cm scatter; this noise level adds visible IF noise
            // while keeping the per-antenna consensus miss rate at a few
            // percent (it passes 20% near noise_std = 8).
            noise_std: 4.0,
            inverse_square_loss: false,
            target: TargetModel::default(),
            clutter: ClutterModel::default(),
            schedule: SessionSchedule::default(),
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.noise_std < 0.0 {
            return Err(Error::Config("noise_std must be >= 0".into()));
        }
        if self.target.finger_amplitude <= 0.0 || self.target.arm_amplitude_ratio < 0.0 {
            return Err(Error::Config("target amplitudes must be positive".into()));
        }
        if self.schedule.dwell_frames == 0 {
            return Err(Error::Config("dwell_frames must be >= 1".into()));
        }
        Ok(())
    }
}

/// Convolution padding mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Padding {
    /// No padding; output shrinks by kernel-1 per axis.
    Valid,
    /// Zero padding; output keeps the input size.
    Same,
}

/// How complex feature tensors are turned into real CNN inputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputMode {
    /// One magnitude channel per sensor (C_in = N_rad).
    Magnitude,
    /// Stacked real and imaginary channels (C_in = 2 * N_rad).
    RealImag,
}

impl InputMode {
    /// Input channels produced for `n_sensors` radar sensors.
    pub fn channels(&self, n_sensors: usize) -> usize {
        match self {
            InputMode::Magnitude => n_sensors,
            InputMode::RealImag => 2 * n_sensors,
        }
    }
}

/// CNN architecture parameters: three conv+maxpool stages, one hidden dense
/// layer, and a 2-unit linear output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Filters per convolution stage (exactly three stages).
    pub conv_filters: [usize; 3],
    /// Square kernel side length.
    pub kernel: usize,
    /// Square max-pool side length.
    pub pool: usize,
    /// Hidden dense layer width.
    pub dense_units: usize,
    /// Output dimensionality (2D position).
    pub output_units: usize,
    pub padding: Padding,
    /// Input height (feature frames), width (range bins), and channels.
    pub input_shape: (usize, usize, usize),
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            conv_filters: [32, 32, 32],
            kernel: 3,
            pool: 2,
            dense_units: 16,
            output_units: 2,
            padding: Padding::Valid,
            input_shape: (61, 110, 4),
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.kernel == 0 || self.pool == 0 || self.dense_units == 0 || self.output_units == 0 {
            return Err(Error::Config("model dimensions must be nonzero".into()));
        }
        if self.conv_filters.iter().any(|&f| f == 0) {
            return Err(Error::Config("conv filter counts must be nonzero".into()));
        }
        let (h, w, c) = self.input_shape;
        if h == 0 || w == 0 || c == 0 {
            return Err(Error::Config("input shape must be nonzero".into()));
        }
        Ok(())
    }
}

/// Training-loop parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub input_mode: InputMode,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            batch_size: 32,
            // At the desk-scale session counts the validation loss levels out
            // near epoch 25; further epochs trade minutes for noise.
            epochs: 25,
            seed: 7,
            input_mode: InputMode::Magnitude,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.learning_rate <= 0.0 || !self.learning_rate.is_finite() {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be >= 1".into()));
        }
        Ok(())
    }
}

/// Latency-benchmark parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchmarkConfig {
    /// Timed single-sample forward passes.
    pub latency_trials: usize,
    /// Untimed warm-up passes.
    pub warmup: usize,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        Self {
            latency_trials: 200,
            warmup: 20,
        }
    }
}

/// Number of recording sessions per grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SessionPlan {
    /// Sessions on the base (training) grid.
    pub train_sessions: usize,
    /// Sessions on the half-cell-offset (validation/test) grid.
    pub valtest_sessions: usize,
}

impl Default for SessionPlan {
    fn default() -> Self {
        // Desk scale: minutes-level runtime. The full measurement protocol
        // (50 / 15) is available through `paper_scale`.
        Self {
            train_sessions: 5,
            valtest_sessions: 3,
        }
    }
}

impl SessionPlan {
    /// The full-protocol session counts (50 training / 15 val-test).
    pub fn paper_scale() -> Self {
        Self {
            train_sessions: 50,
            valtest_sessions: 15,
        }
    }
}

/// Feature-extraction window: +/- `window_half` frames around the touch
/// instant, and the first `r_max` oversampled range bins of each profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureConfig {
    /// Frames kept on each side of the ground-truth touch frame.
    pub window_half: usize,
    /// Range bins kept per beamformed profile.
    pub r_max: usize,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        // 110 bins reaches a little past the touch-area diagonal
        // (`compute_r_max` needs 101 at the default geometry) and fixes the
        // model input at 61 x 110.
        Self {
            window_half: 30,
            r_max: 110,
        }
    }
}

impl FeatureConfig {
    pub fn validate(&self) -> Result<()> {
        if self.r_max == 0 {
            return Err(Error::Config("features.r_max must be >= 1".into()));
        }
        Ok(())
    }
}

/// Top-level configuration document: every tunable of the simulator, DSP
/// chain, positioners, feature store, model, and benchmark harness. Loaded
/// from TOML by the command-line tool and snapshotted into each run
/// directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AppConfig {
    pub radar: RadarConfig,
    pub geometry: DisplayGeometry,
    pub sensors: SensorArray,
    /// Base (training) measurement grid. The validation/test grid is derived
    /// from it by the half-cell offset.
    pub grid: crate::geom::GridSpec,
    pub dsp: DspConfig,
    pub sim: SimConfig,
    pub csp: CspConfig,
    pub features: FeatureConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub bench: BenchmarkConfig,
    pub sessions: SessionPlan,
}

impl Default for AppConfig {
    fn default() -> Self {
        let geometry = DisplayGeometry::default();
        let grid = crate::geom::GridSpec::base_default(&geometry);
        Self {
            radar: RadarConfig::default(),
            geometry,
            sensors: SensorArray::default(),
            grid,
            dsp: DspConfig::default(),
            sim: SimConfig::default(),
            csp: CspConfig::default(),
            features: FeatureConfig::default(),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            bench: BenchmarkConfig::default(),
            sessions: SessionPlan::default(),
        }
    }
}

impl AppConfig {
    /// The validation/test grid implied by the base grid.
    pub fn offset_grid(&self) -> crate::geom::GridSpec {
        crate::geom::GridSpec::offset_from(&self.grid)
    }

    /// Validate every section plus the cross-section consistency rules.
    pub fn validate(&self) -> Result<()> {
        self.radar.validate()?;
        self.sensors.validate()?;
        self.dsp.validate()?;
        self.sim.validate()?;
        self.csp.validate()?;
        self.features.validate()?;
        self.model.validate()?;
        self.train.validate()?;
        if self.grid.rows < 2 || self.grid.cols < 2 {
            return Err(Error::Config(
                "grid must have at least 2 rows and 2 columns so the offset grid is nonempty"
                    .into(),
            ));
        }
        self.grid.validate(&self.geometry)?;
        self.offset_grid().validate(&self.geometry)?;
        if self.sensors.len() != self.radar.n_sensors {
            return Err(Error::Config(format!(
                "sensor array has {} positions but the radar section declares {} sensors",
                self.sensors.len(),
                self.radar.n_sensors
            )));
        }
        if self.features.r_max > self.radar.n_range_bins() {
            return Err(Error::Config(format!(
                "features.r_max = {} exceeds the {} range bins the waveform produces",
                self.features.r_max,
                self.radar.n_range_bins()
            )));
        }
        if self.csp.min_valid_sensors > self.radar.n_sensors {
            return Err(Error::Config(format!(
                "csp.min_valid_sensors = {} exceeds the {} sensors available",
                self.csp.min_valid_sensors, self.radar.n_sensors
            )));
        }
        let expected = (
            2 * self.features.window_half + 1,
            self.features.r_max,
            self.radar.n_sensors,
        );
        if self.model.input_shape != expected {
            return Err(Error::Config(format!(
                "model.input_shape {:?} does not match the (frames, bins, sensors) = {:?} \
                 that the feature window produces",
                self.model.input_shape, expected
            )));
        }
        if self.bench.latency_trials == 0 {
            return Err(Error::Config("bench.latency_trials must be >= 1".into()));
        }
        if self.sessions.train_sessions == 0 || self.sessions.valtest_sessions == 0 {
            return Err(Error::Config(
                "sessions.train_sessions and sessions.valtest_sessions must be >= 1".into(),
            ));
        }
        Ok(())
    }

    /// Parse and validate a TOML document.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: AppConfig =
            toml::from_str(text).map_err(|e| Error::Config(format!("config parse error: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    /// Load and validate a TOML config file.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    /// Serialize to a TOML document, round-trippable through `load`.
    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self)
            .map_err(|e| Error::Config(format!("config serialize error: {e}")))
    }
}
