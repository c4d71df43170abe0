//! Planar geometry: the touch area, the sensor array around it, touch grids,
//! the relative-to-radar coordinate transform, and train/val/test splitting.
//!
//! Two coordinate systems appear throughout:
//! - touchscreen coordinates: relative positions (p_tx, p_ty) in [0,1]^2,
//!   origin at the top-left display corner, p_ty growing downward;
//! - radar coordinates: cm, origin at sensor 0, x to the right along the top
//!   edge, y upward, so the display interior has negative y.

use serde::{Deserialize, Serialize};

use crate::config::RadarConfig;
use crate::error::{Error, Result};

/// Touch-area dimensions and its offset from radar sensor 0, all in cm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DisplayGeometry {
    /// Touch-area length d_l along x, cm.
    pub d_l: f64,
    /// Touch-area width d_w along y, cm.
    pub d_w: f64,
    /// Horizontal offset of the touch area from sensor 0, cm.
    pub d_x0: f64,
    /// Vertical offset of the touch area from sensor 0, cm.
    pub d_y0: f64,
    /// Grid spacing along x, cm.
    pub delta_x: f64,
    /// Grid spacing along y, cm.
    pub delta_y: f64,
}

impl Default for DisplayGeometry {
    fn default() -> Self {
        Self {
            d_l: 34.3,
            d_w: 17.8,
            d_x0: 1.0,
            d_y0: 1.5,
            delta_x: 1.0,
            delta_y: 1.0,
        }
    }
}

/// Positions of the radar sensors in radar coordinates (cm).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SensorArray {
    pub positions_cm: Vec<(f64, f64)>,
}

impl Default for SensorArray {
    fn default() -> Self {
        Self {
            positions_cm: vec![(0.0, 0.0), (35.8, 0.9), (36.4, -19.8), (0.6, -20.2)],
        }
    }
}

impl SensorArray {
    pub fn len(&self) -> usize {
        self.positions_cm.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions_cm.is_empty()
    }

    /// Euclidean distance from sensor `i` to `point` in cm.
    pub fn range_to(&self, i: usize, point: (f64, f64)) -> f64 {
        let (sx, sy) = self.positions_cm[i];
        ((point.0 - sx).powi(2) + (point.1 - sy).powi(2)).sqrt()
    }

    pub fn validate(&self) -> Result<()> {
        if self.positions_cm.is_empty() {
            return Err(Error::Config("sensor array is empty".into()));
        }
        for (a, pa) in self.positions_cm.iter().enumerate() {
            for (b, pb) in self.positions_cm.iter().enumerate().skip(a + 1) {
                let d = ((pa.0 - pb.0).powi(2) + (pa.1 - pb.1).powi(2)).sqrt();
                if d < 1e-9 {
                    return Err(Error::Config(format!("sensors {a} and {b} coincide")));
                }
            }
        }
        Ok(())
    }
}

/// A single ground-truth touch: relative position, timing, and provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TouchEvent {
    /// Relative horizontal position on the display, in [0, 1].
    pub p_tx: f64,
    /// Relative vertical position on the display, in [0, 1].
    pub p_ty: f64,
    /// Ground-truth touch timestamp in seconds from session start.
    pub t_gt: f64,
    /// Session the touch belongs to.
    pub session: usize,
    /// Grid row (0-based) of the touched point.
    pub row: usize,
    /// Grid column (0-based) of the touched point.
    pub col: usize,
}

impl TouchEvent {
    /// Radar frame index corresponding to the ground-truth timestamp.
    pub fn frame_index(&self, frame_rate_hz: f64) -> usize {
        (self.t_gt * frame_rate_hz).round() as usize
    }
}

/// Map a relative touch position to radar coordinates (cm):
/// x = p_tx * d_l + d_x0, y = -(p_ty * d_w + d_y0).
pub fn gt_to_radar_coords(p_tx: f64, p_ty: f64, geom: &DisplayGeometry) -> Result<(f64, f64)> {
    if !(0.0..=1.0).contains(&p_tx) || !(0.0..=1.0).contains(&p_ty) {
        return Err(Error::Geometry(format!(
            "relative coordinates ({p_tx}, {p_ty}) outside [0,1]^2"
        )));
    }
    Ok((p_tx * geom.d_l + geom.d_x0, -(p_ty * geom.d_w + geom.d_y0)))
}

/// Number of oversampled range bins needed to cover the farthest possible
/// on-display target: ceil(N_os * sqrt(d_l^2 + d_w^2) / dr).
pub fn compute_r_max(geom: &DisplayGeometry, config: &RadarConfig) -> usize {
    let diag_cm = (geom.d_l.powi(2) + geom.d_w.powi(2)).sqrt();
    (config.oversampling as f64 * diag_cm / config.range_bin_cm()).ceil() as usize
}

/// A rectangular grid of touch points on the display, visited in raster
/// order (row by row, column by column).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    /// Number of rows (points along y).
    pub rows: usize,
    /// Number of columns (points along x).
    pub cols: usize,
    /// Offset of grid point (0,0) from the display corner, cm.
    pub origin_cm: (f64, f64),
    /// Point spacing, cm.
    pub spacing_cm: f64,
}

impl GridSpec {
    /// The base training grid: 31 x 16 points at 1 cm pitch, centered on the
    /// default display.
    pub fn base_default(geom: &DisplayGeometry) -> Self {
        let cols = 31;
        let rows = 16;
        Self {
            rows,
            cols,
            origin_cm: (
                (geom.d_l - (cols - 1) as f64 * geom.delta_x) / 2.0,
                (geom.d_w - (rows - 1) as f64 * geom.delta_y) / 2.0,
            ),
            spacing_cm: geom.delta_x,
        }
    }

    /// The validation/test grid: one point fewer per axis, shifted by half a
    /// cell (0.5 cm, 0.5 cm) so its points interleave the base grid.
    pub fn offset_from(base: &GridSpec) -> Self {
        Self {
            rows: base.rows - 1,
            cols: base.cols - 1,
            origin_cm: (
                base.origin_cm.0 + 0.5 * base.spacing_cm,
                base.origin_cm.1 + 0.5 * base.spacing_cm,
            ),
            spacing_cm: base.spacing_cm,
        }
    }

    pub fn n_points(&self) -> usize {
        self.rows * self.cols
    }

    /// Relative display coordinates of grid point (row, col).
    pub fn relative_position(&self, row: usize, col: usize, geom: &DisplayGeometry) -> (f64, f64) {
        (
            (self.origin_cm.0 + col as f64 * self.spacing_cm) / geom.d_l,
            (self.origin_cm.1 + row as f64 * self.spacing_cm) / geom.d_w,
        )
    }

    /// Raster-order visit index of (row, col).
    pub fn point_index(&self, row: usize, col: usize) -> usize {
        row * self.cols + col
    }

    /// Fails if any grid point falls outside the touch area.
    pub fn validate(&self, geom: &DisplayGeometry) -> Result<()> {
        if self.rows == 0 || self.cols == 0 {
            return Err(Error::Geometry("grid has no points".into()));
        }
        let max_x = self.origin_cm.0 + (self.cols - 1) as f64 * self.spacing_cm;
        let max_y = self.origin_cm.1 + (self.rows - 1) as f64 * self.spacing_cm;
        if self.origin_cm.0 < 0.0 || self.origin_cm.1 < 0.0 || max_x > geom.d_l || max_y > geom.d_w
        {
            return Err(Error::Geometry(format!(
                "grid spans [{:.2}, {:.2}] x [{:.2}, {:.2}] cm, exceeding the {} x {} cm touch area",
                self.origin_cm.0, max_x, self.origin_cm.1, max_y, geom.d_l, geom.d_w
            )));
        }
        Ok(())
    }
}

/// Dataset split tags.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn as_str(&self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }

    /// Inverse of [`Split::as_str`].
    pub fn from_name(name: &str) -> Option<Split> {
        match name {
            "train" => Some(Split::Train),
            "val" => Some(Split::Val),
            "test" => Some(Split::Test),
            _ => None,
        }
    }
}

/// Split assignment for a point on the offset grid: odd rows (1-based) go to
/// validation, even rows to test.
pub fn offset_grid_split(row: usize) -> Split {
    if (row + 1) % 2 == 1 {
        Split::Val
    } else {
        Split::Test
    }
}

/// Event counts implied by a grid/session plan, computable without
/// simulating anything.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetPlan {
    pub train_events: usize,
    pub val_events: usize,
    pub test_events: usize,
}

/// Count the events each split will contain for the given grids and session
/// counts.
pub fn plan_dataset(
    base: &GridSpec,
    offset: &GridSpec,
    train_sessions: usize,
    valtest_sessions: usize,
) -> DatasetPlan {
    let val_rows = (0..offset.rows).filter(|&r| offset_grid_split(r) == Split::Val).count();
    let test_rows = offset.rows - val_rows;
    DatasetPlan {
        train_events: train_sessions * base.n_points(),
        val_events: valtest_sessions * val_rows * offset.cols,
        test_events: valtest_sessions * test_rows * offset.cols,
    }
}
