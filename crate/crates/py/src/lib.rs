//! Python bindings for the radar touch-localization core: waveform
//! geometry, coordinate transforms, the multilateration positioner, and the
//! percentile helper used by the reports.
//!
//! Build with `cargo build -p radtouch-py`, then import the produced
//! `libradtouch_py.so` as `radtouch_py` (see `python/smoke_test.py`).

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use radtouch_core::config::{CspConfig, RadarConfig as CoreRadar};
use radtouch_core::csp::solve_nls;
use radtouch_core::geom::{
    compute_r_max as core_r_max, gt_to_radar_coords as core_gt_to_radar,
    DisplayGeometry as CoreGeometry, SensorArray as CoreSensors,
};
use radtouch_core::metrics::percentile_nearest_rank as core_percentile;
use radtouch_core::Error;

fn to_py_err(error: Error) -> PyErr {
    match &error {
        Error::Config(_) | Error::Geometry(_) => PyValueError::new_err(error.to_string()),
        _ => PyRuntimeError::new_err(error.to_string()),
    }
}

/// Waveform and array parameters; derived quantities are methods.
#[pyclass(module = "radtouch_py", from_py_object)]
#[derive(Clone)]
struct RadarConfig {
    inner: CoreRadar,
}

#[pymethods]
impl RadarConfig {
    #[new]
    #[pyo3(signature = (
        chirp_bandwidth_hz = 4.874e9,
        carrier_hz = 60.0e9,
        frame_rate_hz = 120.0,
        n_if_samples = 64,
        n_chirps = 8,
        n_rx = 3,
        n_sensors = 4,
        oversampling = 8,
    ))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        chirp_bandwidth_hz: f64,
        carrier_hz: f64,
        frame_rate_hz: f64,
        n_if_samples: usize,
        n_chirps: usize,
        n_rx: usize,
        n_sensors: usize,
        oversampling: usize,
    ) -> PyResult<Self> {
        let inner = CoreRadar {
            chirp_bandwidth_hz,
            carrier_hz,
            frame_rate_hz,
            n_if_samples,
            n_chirps,
            n_rx,
            n_sensors,
            oversampling,
        };
        inner.validate().map_err(to_py_err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn chirp_bandwidth_hz(&self) -> f64 {
        self.inner.chirp_bandwidth_hz
    }

    #[getter]
    fn frame_rate_hz(&self) -> f64 {
        self.inner.frame_rate_hz
    }

    #[getter]
    fn n_sensors(&self) -> usize {
        self.inner.n_sensors
    }

    #[getter]
    fn oversampling(&self) -> usize {
        self.inner.oversampling
    }

    /// Range-bin width c / (2 f_BW) in cm.
    fn range_resolution_cm(&self) -> f64 {
        self.inner.range_bin_cm()
    }

    /// Oversampled bin width in cm.
    fn oversampled_bin_cm(&self) -> f64 {
        self.inner.oversampled_bin_cm()
    }

    /// Unambiguous range of the waveform in cm.
    fn unambiguous_range_cm(&self) -> f64 {
        self.inner.unambiguous_range_cm()
    }

    /// Half-spectrum bin count after zero padding.
    fn n_range_bins(&self) -> usize {
        self.inner.n_range_bins()
    }

    fn __repr__(&self) -> String {
        format!(
            "RadarConfig(chirp_bandwidth_hz={:.4e}, frame_rate_hz={}, n_sensors={})",
            self.inner.chirp_bandwidth_hz, self.inner.frame_rate_hz, self.inner.n_sensors
        )
    }
}

/// Touch-area geometry: size, offset from sensor 0, and grid spacing.
#[pyclass(module = "radtouch_py", from_py_object)]
#[derive(Clone)]
struct DisplayGeometry {
    inner: CoreGeometry,
}

#[pymethods]
impl DisplayGeometry {
    #[new]
    #[pyo3(signature = (
        d_l = 34.3,
        d_w = 17.8,
        d_x0 = 1.0,
        d_y0 = 1.5,
        delta_x = 1.0,
        delta_y = 1.0,
    ))]
    fn new(d_l: f64, d_w: f64, d_x0: f64, d_y0: f64, delta_x: f64, delta_y: f64) -> Self {
        Self {
            inner: CoreGeometry {
                d_l,
                d_w,
                d_x0,
                d_y0,
                delta_x,
                delta_y,
            },
        }
    }

    #[getter]
    fn d_l(&self) -> f64 {
        self.inner.d_l
    }

    #[getter]
    fn d_w(&self) -> f64 {
        self.inner.d_w
    }

    fn __repr__(&self) -> String {
        format!(
            "DisplayGeometry(d_l={}, d_w={}, d_x0={}, d_y0={})",
            self.inner.d_l, self.inner.d_w, self.inner.d_x0, self.inner.d_y0
        )
    }
}

/// Sensor positions in radar coordinates (cm).
#[pyclass(module = "radtouch_py", from_py_object)]
#[derive(Clone)]
struct SensorArray {
    inner: CoreSensors,
}

#[pymethods]
impl SensorArray {
    #[new]
    #[pyo3(signature = (positions_cm = None))]
    fn new(positions_cm: Option<Vec<(f64, f64)>>) -> PyResult<Self> {
        let inner = match positions_cm {
            Some(positions_cm) => CoreSensors { positions_cm },
            None => CoreSensors::default(),
        };
        inner.validate().map_err(to_py_err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn positions_cm(&self) -> Vec<(f64, f64)> {
        self.inner.positions_cm.clone()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    /// Euclidean distance from sensor `i` to a point (cm).
    fn range_to(&self, i: usize, point: (f64, f64)) -> PyResult<f64> {
        if i >= self.inner.len() {
            return Err(PyValueError::new_err(format!(
                "sensor index {i} out of range for {} sensors",
                self.inner.len()
            )));
        }
        Ok(self.inner.range_to(i, point))
    }

    fn __repr__(&self) -> String {
        format!("SensorArray(positions_cm={:?})", self.inner.positions_cm)
    }
}

/// A solved 2-D position with its fit diagnostics.
#[pyclass(module = "radtouch_py")]
struct PositionFix {
    #[pyo3(get)]
    x_cm: f64,
    #[pyo3(get)]
    y_cm: f64,
    #[pyo3(get)]
    residual_cm2: Option<f64>,
    #[pyo3(get)]
    n_sensors_used: usize,
    #[pyo3(get)]
    converged: bool,
}

#[pymethods]
impl PositionFix {
    fn __repr__(&self) -> String {
        format!(
            "PositionFix(x_cm={:.4}, y_cm={:.4}, n_sensors_used={}, converged={})",
            self.x_cm, self.y_cm, self.n_sensors_used, self.converged
        )
    }
}

/// Map a relative ground-truth position (fractions of the touch area) into
/// radar coordinates (cm).
#[pyfunction]
fn gt_to_radar_coords(
    p_tx: f64,
    p_ty: f64,
    geometry: &DisplayGeometry,
) -> PyResult<(f64, f64)> {
    core_gt_to_radar(p_tx, p_ty, &geometry.inner).map_err(to_py_err)
}

/// Number of range bins needed to cover the touch-area diagonal.
#[pyfunction]
fn compute_r_max(geometry: &DisplayGeometry, radar: &RadarConfig) -> usize {
    core_r_max(&geometry.inner, &radar.inner)
}

/// Solve for a 2-D position from per-sensor ranges (cm) by nonlinear least
/// squares. `None` entries mark sensors without a valid range.
#[pyfunction]
#[pyo3(signature = (ranges_cm, sensors = None, min_valid_sensors = 3))]
fn solve_position(
    ranges_cm: Vec<Option<f64>>,
    sensors: Option<SensorArray>,
    min_valid_sensors: usize,
) -> PyResult<PositionFix> {
    let sensors = match sensors {
        Some(s) => s.inner,
        None => CoreSensors::default(),
    };
    let config = CspConfig {
        min_valid_sensors,
        ..CspConfig::default()
    };
    let estimate = solve_nls(&ranges_cm, &sensors, &config).map_err(to_py_err)?;
    Ok(PositionFix {
        x_cm: estimate.position_cm.0,
        y_cm: estimate.position_cm.1,
        residual_cm2: estimate.residual_cm2,
        n_sensors_used: estimate.n_sensors_used,
        converged: estimate.converged,
    })
}

/// Nearest-rank percentile: the ceil(p * n)-th smallest value, p in (0, 1].
#[pyfunction]
fn percentile_nearest_rank(values: Vec<f64>, p: f64) -> PyResult<f64> {
    core_percentile(&values, p).map_err(to_py_err)
}

#[pymodule]
fn radtouch_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<RadarConfig>()?;
    m.add_class::<DisplayGeometry>()?;
    m.add_class::<SensorArray>()?;
    m.add_class::<PositionFix>()?;
    m.add_function(wrap_pyfunction!(gt_to_radar_coords, m)?)?;
    m.add_function(wrap_pyfunction!(compute_r_max, m)?)?;
    m.add_function(wrap_pyfunction!(solve_position, m)?)?;
    m.add_function(wrap_pyfunction!(percentile_nearest_rank, m)?)?;
    Ok(())
}
