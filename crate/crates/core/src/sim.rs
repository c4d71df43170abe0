//! Synthetic FMCW scene simulator: stands in for the physical testbed by
//! producing per-sensor real-valued IF sample streams for scenes of moving
//! targets and static clutter.
//!
//! Signal model for one sensor at one frame, with scatterer k at range R_k
//! (cm) and reflectivity A_k:
//!
//!   x_IF(s, c, j) = sum_k A_k cos(2 pi (R_k / dr) s / N_IF + phi_k) + n(s, c, j)
//!   phi_k = 4 pi R_k f_c / c_light
//!
//! so a scatterer at range R lands on oversampled FFT bin R / dr_os. Targets
//! are boresight: the deterministic part is identical across chirps and
//! antennas, while the additive white Gaussian noise n is independent per
//! (sample, chirp, antenna).
//!
//! A touch target is distributed: one finger scatterer plus a few stronger
//! arm scatterers 1-4 cm behind it, the whole body moving rigidly along an
//! approach/dwell/retract trajectory with per-frame rigid 2-D Gaussian
//! jitter (projection onto any line of sight has the configured radial
//! sigma). Clutter scatterers are strictly static so the MTI filter can
//! remove them.

use ndarray::Array3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::config::{RadarConfig, SimConfig, TargetModel};
use crate::error::{Error, Result};
use crate::geom::{DisplayGeometry, GridSpec, SensorArray, TouchEvent};

/// Reference range for the optional inverse-square amplitude falloff, cm.
const PATH_LOSS_REF_CM: f64 = 20.0;

/// Scatterer role: targets move and carry jitter, clutter never moves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScattererKind {
    Target,
    Clutter,
}

/// A point reflector in radar coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scatterer {
    pub position_cm: (f64, f64),
    pub amplitude: f64,
    pub kind: ScattererKind,
}

/// Deterministic rigid displacement of the target body per global frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Trajectory {
    /// No deterministic motion.
    Static,
    /// Linear approach from `offset_cm` to zero over [start, arrive], hold
    /// until `depart`, linear retract back to `offset_cm` by `leave`.
    /// Outside [start, leave] the body rests at `offset_cm`.
    ApproachDwellRetract {
        offset_cm: (f64, f64),
        start: usize,
        arrive: usize,
        depart: usize,
        leave: usize,
    },
}

impl Trajectory {
    /// Displacement added to every target scatterer at `frame`.
    pub fn displacement(&self, frame: usize) -> (f64, f64) {
        match *self {
            Trajectory::Static => (0.0, 0.0),
            Trajectory::ApproachDwellRetract {
                offset_cm,
                start,
                arrive,
                depart,
                leave,
            } => {
                let lerp = |a: f64| (offset_cm.0 * a, offset_cm.1 * a);
                if frame <= start {
                    lerp(1.0)
                } else if frame < arrive {
                    lerp((arrive - frame) as f64 / (arrive - start) as f64)
                } else if frame < depart {
                    (0.0, 0.0)
                } else if frame < leave {
                    lerp((frame - depart) as f64 / (leave - depart) as f64)
                } else {
                    lerp(1.0)
                }
            }
        }
    }
}

/// A simulated world: scatterers, the target body's trajectory, and the
/// jitter model. The jitter stream is keyed by (jitter_seed, frame) only,
/// so merging two scenes with the same seed preserves superposition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub scatterers: Vec<Scatterer>,
    pub trajectory: Trajectory,
    /// Std dev of each component of the rigid per-frame jitter, cm.
    pub jitter_sigma_cm: f64,
    pub jitter_seed: u64,
}

impl Scene {
    /// A scene with only the given scatterers and no motion.
    pub fn static_scene(scatterers: Vec<Scatterer>) -> Self {
        Self {
            scatterers,
            trajectory: Trajectory::Static,
            jitter_sigma_cm: 0.0,
            jitter_seed: 0,
        }
    }

    /// Merge two scenes sharing the same motion model.
    pub fn union(mut self, other: &Scene) -> Self {
        self.scatterers.extend(other.scatterers.iter().cloned());
        self
    }

    /// Rigid jitter displacement of the target body at `frame`.
    fn jitter(&self, frame: usize) -> (f64, f64) {
        if self.jitter_sigma_cm == 0.0 {
            return (0.0, 0.0);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(mix(self.jitter_seed, 0x6a69, frame as u64));
        let normal = Normal::new(0.0, self.jitter_sigma_cm).expect("sigma validated");
        (normal.sample(&mut rng), normal.sample(&mut rng))
    }

    /// Instantaneous position of scatterer `k` at `frame`.
    pub fn position_at(&self, k: usize, frame: usize) -> (f64, f64) {
        let sc = &self.scatterers[k];
        match sc.kind {
            ScattererKind::Clutter => sc.position_cm,
            ScattererKind::Target => {
                let d = self.trajectory.displacement(frame);
                let j = self.jitter(frame);
                (
                    sc.position_cm.0 + d.0 + j.0,
                    sc.position_cm.1 + d.1 + j.1,
                )
            }
        }
    }
}

/// One frame of real IF samples for one sensor, shape (N_IF, N_ch, N_rx).
#[derive(Debug, Clone, PartialEq)]
pub struct IfFrame {
    pub frame_index: usize,
    pub sensor_index: usize,
    pub samples: Array3<f64>,
}

/// SplitMix64-style hash for deriving independent deterministic streams.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive a stream key from a seed and two indices.
pub(crate) fn mix(seed: u64, a: u64, b: u64) -> u64 {
    splitmix64(seed ^ splitmix64(a.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ splitmix64(b)))
}

/// Synthesize the IF frame seen by `sensor_index` at `frame_index`.
///
/// The deterministic part is shared by all (chirp, antenna) pairs; noise
/// with std `noise_std` is drawn independently per sample from a stream
/// keyed by (scene noise key = jitter_seed, sensor, frame).
pub fn synthesize_if_frame(
    scene: &Scene,
    sensors: &SensorArray,
    sensor_index: usize,
    frame_index: usize,
    radar: &RadarConfig,
    noise_std: f64,
) -> Result<IfFrame> {
    synthesize_with_options(
        scene,
        sensors,
        sensor_index,
        frame_index,
        radar,
        noise_std,
        false,
    )
}

/// As [`synthesize_if_frame`], with the optional inverse-square amplitude
/// falloff (normalized to unity at 20 cm).
pub fn synthesize_with_options(
    scene: &Scene,
    sensors: &SensorArray,
    sensor_index: usize,
    frame_index: usize,
    radar: &RadarConfig,
    noise_std: f64,
    inverse_square_loss: bool,
) -> Result<IfFrame> {
    if noise_std < 0.0 {
        return Err(Error::Config("noise_std must be >= 0".into()));
    }
    if sensor_index >= sensors.len() {
        return Err(Error::Config(format!(
            "sensor index {sensor_index} out of range ({} sensors)",
            sensors.len()
        )));
    }
    let n_if = radar.n_if_samples;
    let limit_cm = radar.unambiguous_range_cm();
    let dr_cm = radar.range_bin_cm();
    let phase_per_cm = 4.0 * std::f64::consts::PI * radar.carrier_hz / (100.0 * crate::config::SPEED_OF_LIGHT_M_S);

    // Deterministic beat-tone sum, shared across chirps and antennas.
    let mut base = vec![0.0_f64; n_if];
    for k in 0..scene.scatterers.len() {
        let pos = scene.position_at(k, frame_index);
        let range_cm = sensors.range_to(sensor_index, pos);
        if range_cm >= limit_cm {
            return Err(Error::UnambiguousRange {
                range_cm,
                limit_cm,
            });
        }
        let mut amp = scene.scatterers[k].amplitude;
        if inverse_square_loss && range_cm > 0.0 {
            amp *= (PATH_LOSS_REF_CM / range_cm).powi(2);
        }
        let phi = phase_per_cm * range_cm;
        let omega = 2.0 * std::f64::consts::PI * (range_cm / dr_cm) / n_if as f64;
        for (s, b) in base.iter_mut().enumerate() {
            *b += amp * (omega * s as f64 + phi).cos();
        }
    }

    let mut samples = Array3::zeros((n_if, radar.n_chirps, radar.n_rx));
    for c in 0..radar.n_chirps {
        for j in 0..radar.n_rx {
            for s in 0..n_if {
                samples[[s, c, j]] = base[s];
            }
        }
    }
    if noise_std > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(mix(
            scene.jitter_seed ^ 0x6e6f_6973_6500,
            sensor_index as u64,
            frame_index as u64,
        ));
        let normal = Normal::new(0.0, noise_std).expect("noise_std validated");
        for c in 0..radar.n_chirps {
            for j in 0..radar.n_rx {
                for s in 0..n_if {
                    samples[[s, c, j]] += normal.sample(&mut rng);
                }
            }
        }
    }
    Ok(IfFrame {
        frame_index,
        sensor_index,
        samples,
    })
}

/// Build the distributed-target scene for one touch: a finger scatterer at
/// the touch point plus arm scatterers behind it along +y, all carrying the
/// session trajectory and jitter; static clutter is appended unchanged.
pub fn make_touch_scene(
    touch_point_cm: (f64, f64),
    target: &TargetModel,
    clutter: &[Scatterer],
    trajectory: Trajectory,
    jitter_seed: u64,
    geom: &DisplayGeometry,
) -> Result<Scene> {
    let x_ok = touch_point_cm.0 >= geom.d_x0 && touch_point_cm.0 <= geom.d_x0 + geom.d_l;
    let y_ok = touch_point_cm.1 <= -geom.d_y0 && touch_point_cm.1 >= -(geom.d_y0 + geom.d_w);
    if !x_ok || !y_ok {
        return Err(Error::Geometry(format!(
            "touch point ({:.2}, {:.2}) cm outside the touch area",
            touch_point_cm.0, touch_point_cm.1
        )));
    }
    let mut scatterers = Vec::with_capacity(1 + target.arm_offsets_cm.len() + clutter.len());
    scatterers.push(Scatterer {
        position_cm: touch_point_cm,
        amplitude: target.finger_amplitude,
        kind: ScattererKind::Target,
    });
    for &off in &target.arm_offsets_cm {
        scatterers.push(Scatterer {
            position_cm: (touch_point_cm.0, touch_point_cm.1 + off),
            amplitude: target.finger_amplitude * target.arm_amplitude_ratio,
            kind: ScattererKind::Target,
        });
    }
    for c in clutter {
        if c.kind != ScattererKind::Clutter {
            return Err(Error::Config("clutter list contains non-clutter scatterers".into()));
        }
        scatterers.push(c.clone());
    }
    Ok(Scene {
        scatterers,
        trajectory,
        jitter_sigma_cm: target.jitter_sigma_cm,
        jitter_seed,
    })
}

/// Session-level simulator: visits every grid point in raster order on the
/// configured schedule and synthesizes frames on demand, so callers can
/// stream without holding the whole recording.
pub struct SessionSim {
    grid: GridSpec,
    geom: DisplayGeometry,
    sensors: SensorArray,
    radar: RadarConfig,
    sim: SimConfig,
    session_index: usize,
    /// One scene per grid point (finger + arm + shared clutter), with
    /// global-frame trajectories.
    scenes: Vec<Scene>,
    events: Vec<TouchEvent>,
    clutter_only: Scene,
    n_frames: usize,
}

impl SessionSim {
    pub fn new(
        grid: &GridSpec,
        geom: &DisplayGeometry,
        sensors: &SensorArray,
        radar: &RadarConfig,
        sim: &SimConfig,
        session_index: usize,
        seed: u64,
    ) -> Result<Self> {
        grid.validate(geom)?;
        sim.validate()?;
        radar.validate()?;
        sensors.validate()?;

        let jitter_seed = mix(seed, 0x6a69_7474, session_index as u64);
        let clutter_seed = mix(seed, 0x636c_7574, session_index as u64);

        // Session-static clutter scatterers, uniform over the touch area.
        let mut rng = ChaCha8Rng::seed_from_u64(clutter_seed);
        let mut clutter = Vec::with_capacity(sim.clutter.count);
        for _ in 0..sim.clutter.count {
            use rand::Rng;
            let x = geom.d_x0 + rng.random_range(0.0..geom.d_l);
            let y = -(geom.d_y0 + rng.random_range(0.0..geom.d_w));
            clutter.push(Scatterer {
                position_cm: (x, y),
                amplitude: sim.clutter.amplitude,
                kind: ScattererKind::Clutter,
            });
        }

        let schedule = &sim.schedule;
        let mut scenes = Vec::with_capacity(grid.n_points());
        let mut events = Vec::with_capacity(grid.n_points());
        for row in 0..grid.rows {
            for col in 0..grid.cols {
                let k = grid.point_index(row, col);
                let (p_tx, p_ty) = grid.relative_position(row, col, geom);
                let point = crate::geom::gt_to_radar_coords(p_tx, p_ty, geom)?;
                let start = schedule.lead_in_frames + k * schedule.frames_per_point();
                let trajectory = Trajectory::ApproachDwellRetract {
                    offset_cm: (0.0, sim.target.approach_offset_cm),
                    start,
                    arrive: start + schedule.approach_frames,
                    depart: start + schedule.approach_frames + schedule.dwell_frames,
                    leave: start + schedule.frames_per_point(),
                };
                scenes.push(make_touch_scene(
                    point,
                    &sim.target,
                    &clutter,
                    trajectory,
                    jitter_seed,
                    geom,
                )?);
                let touch_frame = schedule.touch_frame(k);
                events.push(TouchEvent {
                    p_tx,
                    p_ty,
                    t_gt: touch_frame as f64 / radar.frame_rate_hz,
                    session: session_index,
                    row,
                    col,
                });
            }
        }

        Ok(Self {
            grid: grid.clone(),
            geom: geom.clone(),
            sensors: sensors.clone(),
            radar: radar.clone(),
            sim: sim.clone(),
            session_index,
            scenes,
            events,
            clutter_only: Scene {
                scatterers: clutter,
                trajectory: Trajectory::Static,
                jitter_sigma_cm: 0.0,
                jitter_seed,
            },
            n_frames: schedule.session_frames(grid.n_points()),
        })
    }

    pub fn n_frames(&self) -> usize {
        self.n_frames
    }

    pub fn events(&self) -> &[TouchEvent] {
        &self.events
    }

    pub fn session_index(&self) -> usize {
        self.session_index
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    /// The scene active at `frame`: the current grid point's target plus
    /// clutter, or clutter alone during lead-in and tail.
    fn scene_at(&self, frame: usize) -> &Scene {
        let schedule = &self.sim.schedule;
        if frame < schedule.lead_in_frames {
            return &self.clutter_only;
        }
        let k = (frame - schedule.lead_in_frames) / schedule.frames_per_point();
        if k < self.scenes.len() {
            &self.scenes[k]
        } else {
            &self.clutter_only
        }
    }

    /// Synthesize the IF frame for one sensor at one global frame index.
    pub fn synthesize(&self, sensor_index: usize, frame_index: usize) -> Result<IfFrame> {
        synthesize_with_options(
            self.scene_at(frame_index),
            &self.sensors,
            sensor_index,
            frame_index,
            &self.radar,
            self.sim.noise_std,
            self.sim.inverse_square_loss,
        )
    }

    pub fn geometry(&self) -> &DisplayGeometry {
        &self.geom
    }

    pub fn sensors(&self) -> &SensorArray {
        &self.sensors
    }
}

/// A fully materialized session: per-sensor frame sequences plus ground
/// truth. Practical for small grids and tests; large runs should stream
/// through [`SessionSim`] instead.
#[derive(Debug, Clone)]
pub struct SessionRecording {
    pub session_index: usize,
    /// frames[sensor][frame]
    pub frames: Vec<Vec<IfFrame>>,
    pub events: Vec<TouchEvent>,
    pub radar: RadarConfig,
    pub seed: u64,
}

impl SessionRecording {
    pub fn n_frames(&self) -> usize {
        self.frames.first().map_or(0, Vec::len)
    }
}

/// Materialize a full session recording.
pub fn run_session(
    grid: &GridSpec,
    geom: &DisplayGeometry,
    sensors: &SensorArray,
    radar: &RadarConfig,
    sim: &SimConfig,
    session_index: usize,
    seed: u64,
) -> Result<SessionRecording> {
    let s = SessionSim::new(grid, geom, sensors, radar, sim, session_index, seed)?;
    let mut frames = Vec::with_capacity(sensors.len());
    for sensor in 0..sensors.len() {
        let mut per_sensor = Vec::with_capacity(s.n_frames());
        for f in 0..s.n_frames() {
            per_sensor.push(s.synthesize(sensor, f)?);
        }
        frames.push(per_sensor);
    }
    Ok(SessionRecording {
        session_index,
        frames,
        events: s.events.clone(),
        radar: radar.clone(),
        seed,
    })
}
