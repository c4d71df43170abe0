//! Run-directory orchestration shared by the command-line tool and the
//! integration tests.
//!
//! A *run directory* collects every artifact of one experiment:
//!
//! ```text
//! run/
//!   config.toml              resolved configuration snapshot
//!   sessions.json            simulation summary (seed, grids, event counts)
//!   dataset/                 feature container (manifest.json + blobs)
//!   ranges.csv               per-event window-averaged uncalibrated ranges
//!   calibration.json         per-sensor range offsets, cm
//!   estimates_csp_test.csv   conventional positioner, test split
//!   estimates_cnn_test.csv   learned positioner, test split
//!   model.bin                trained network parameters
//!   train_report.json        per-epoch losses and timings
//!   latency.csv              per-trial single-sample inference latency
//!   latency.json             latency summary statistics
//!   report/                  summary.csv, RMSE maps, CDFs, SVG heatmaps
//! ```
//!
//! Each stage reads only persisted artifacts from earlier stages, so stages
//! can run in separate processes. A stage invoked before its inputs exist
//! fails with [`Error::MissingDependency`] naming the stage to run first.
//!
//! The configuration snapshot written by `simulate` is authoritative for the
//! run directory; later stages use it unless the caller passes an explicit
//! override. Given the same seed and configuration, `simulate` and the two
//! evaluation stages write byte-identical CSV and binary artifacts.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array3;
use num_complex::Complex32;
use serde::{Deserialize, Serialize};

use crate::cnn::{
    benchmark_inference, featurize_event, featurize_split, load_model, save_model, stage_shapes,
    train, Cnn, LatencyStats, TrainReport,
};
use crate::config::{AppConfig, SessionPlan};
use crate::csp::{
    estimate_calibration, estimate_ranges, solve_nls, window_average_ranges, CalibrationEvent,
    CalibrationTable, Method, SensorRangeEstimate,
};
use crate::dsp::{beamform_average, mti_filter, per_rx_chirp_average, MtiState, RangeFftProcessor};
use crate::error::{Error, Result};
use crate::features::{assemble_feature, load_manifest, load_split, DatasetWriter};
use crate::geom::{offset_grid_split, plan_dataset, DatasetPlan, Split};
use crate::metrics::{evaluate, EvalRecord, Metrics, PointRmse};
use crate::sim::SessionSim;

pub const CONFIG_SNAPSHOT: &str = "config.toml";
pub const SESSIONS_FILE: &str = "sessions.json";
pub const DATASET_DIR: &str = "dataset";
pub const RANGES_FILE: &str = "ranges.csv";
pub const CALIBRATION_FILE: &str = "calibration.json";
pub const MODEL_FILE: &str = "model.bin";
pub const TRAIN_REPORT_FILE: &str = "train_report.json";
pub const LATENCY_CSV_FILE: &str = "latency.csv";
pub const LATENCY_JSON_FILE: &str = "latency.json";
pub const REPORT_DIR: &str = "report";

/// Reference single-sample inference latency the report compares against:
/// the figure achieved by the embedded hardware prototype this simulator
/// models.
pub const REFERENCE_LATENCY_MS: f64 = 2.0;

/// Test-split estimate table name for a positioning method.
pub fn estimates_file(method: Method) -> String {
    format!("estimates_{}_test.csv", method.as_str())
}

fn missing(path: &Path, stage: &str) -> Error {
    Error::MissingDependency(format!(
        "{} not found; run the `{}` stage first",
        path.display(),
        stage
    ))
}

fn require(path: &Path, stage: &str) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(missing(path, stage))
    }
}

fn corrupt(path: &Path, line_no: usize, message: impl std::fmt::Display) -> Error {
    Error::Corrupt(format!("{} line {}: {}", path.display(), line_no, message))
}

/// Write the resolved configuration snapshot into the run directory.
pub fn write_config_snapshot(config: &AppConfig, run: &Path) -> Result<()> {
    fs::create_dir_all(run)?;
    fs::write(run.join(CONFIG_SNAPSHOT), config.to_toml_string()?)?;
    Ok(())
}

/// Load the configuration snapshot of a run directory.
pub fn load_config_snapshot(run: &Path) -> Result<AppConfig> {
    let path = run.join(CONFIG_SNAPSHOT);
    require(&path, "simulate")?;
    AppConfig::load(&path)
}

fn effective_config(run: &Path, override_config: Option<&AppConfig>) -> Result<AppConfig> {
    match override_config {
        Some(config) => {
            config.validate()?;
            Ok(config.clone())
        }
        None => load_config_snapshot(run),
    }
}

/// Everything the DSP chain produces for one session in one pass: the
/// truncated beamformed feature stack, shape (n_frames, r_max, n_sensors),
/// and the per-frame uncalibrated range estimates, indexed \[sensor\]\[frame\].
pub struct SessionProcessOutput {
    pub stack: Array3<Complex32>,
    pub frame_ranges: Vec<Vec<SensorRangeEstimate>>,
}

/// Run every frame of a session through the per-sensor chain (range FFT,
/// MTI, beamforming, per-antenna peak extraction). The stack keeps the first
/// `features.r_max` bins of each beamformed profile; range estimates use the
/// full half-spectrum and an all-zero calibration table.
pub fn process_session(sim: &SessionSim, config: &AppConfig) -> Result<SessionProcessOutput> {
    let n_frames = sim.n_frames();
    let n_sensors = sim.sensors().len();
    let r_max = config.features.r_max;
    let mut stack = Array3::zeros((n_frames, r_max, n_sensors));
    let mut frame_ranges = Vec::with_capacity(n_sensors);
    let uncalibrated = CalibrationTable::zero(n_sensors);
    let mut processor = RangeFftProcessor::new(&config.radar, &config.dsp);
    for sensor in 0..n_sensors {
        let mut mti = MtiState::new(&config.radar);
        let mut per_frame = Vec::with_capacity(n_frames);
        for frame in 0..n_frames {
            let if_frame = sim.synthesize(sensor, frame)?;
            let profile = processor.compute_range_fft(&if_frame)?;
            let (filtered, next) = mti_filter(&profile, mti, config.dsp.mti_beta)?;
            mti = next;
            let bf = beamform_average(&filtered);
            let per_rx = per_rx_chirp_average(&filtered);
            per_frame.push(estimate_ranges(
                &per_rx,
                &bf,
                &config.radar,
                &config.csp,
                &uncalibrated,
            ));
            for (bin, value) in bf.values.iter().take(r_max).enumerate() {
                stack[[frame, bin, sensor]] = Complex32::new(value.re as f32, value.im as f32);
            }
        }
        frame_ranges.push(per_frame);
    }
    Ok(SessionProcessOutput {
        stack,
        frame_ranges,
    })
}

/// Window-averaged range per sensor over the `window` frames ending at the
/// ground-truth touch frame.
pub fn event_ranges_from_frames(
    frame_ranges: &[Vec<SensorRangeEstimate>],
    frame_gt: usize,
    window: usize,
) -> Vec<Option<f64>> {
    let start = (frame_gt + 1).saturating_sub(window);
    frame_ranges
        .iter()
        .map(|per_frame| {
            let end = (frame_gt + 1).min(per_frame.len());
            window_average_ranges(&per_frame[start.min(end)..end])
        })
        .collect()
}

/// One row of `ranges.csv`: an event's identity, label, and window-averaged
/// uncalibrated range estimates (one per sensor, empty where no frame in the
/// window passed the consensus gate).
#[derive(Debug, Clone, PartialEq)]
pub struct EventRangeRow {
    pub event_id: usize,
    pub session: usize,
    pub split: Split,
    pub row: usize,
    pub col: usize,
    pub point_index: usize,
    pub gt_cm: (f64, f64),
    pub frame_gt: usize,
    pub ranges_cm: Vec<Option<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SessionSummary {
    pub index: usize,
    /// "base" for training-grid sessions, "offset" for val/test sessions.
    pub grid_kind: String,
    pub rows: usize,
    pub cols: usize,
    pub n_frames: usize,
    pub n_events: usize,
    pub first_event_id: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimulateSummary {
    pub seed: u64,
    pub paper_scale: bool,
    pub train_sessions: usize,
    pub valtest_sessions: usize,
    /// Event counts implied by the grids and session counts.
    pub planned: DatasetPlan,
    /// Event counts actually written to the container.
    pub written: DatasetPlan,
    pub window_half: usize,
    pub r_max: usize,
    pub sessions: Vec<SessionSummary>,
}

fn fmt_f64(value: f64) -> String {
    format!("{value}")
}

fn fmt_opt_f64(value: Option<f64>) -> String {
    value.map(fmt_f64).unwrap_or_default()
}

/// Simulate every session, stream features into the dataset container, and
/// persist the per-event range table plus the run summary.
///
/// `paper_scale` swaps the configured session counts for the full
/// measurement protocol (50 training / 15 val-test sessions).
pub fn stage_simulate(
    config: &AppConfig,
    run: &Path,
    seed: u64,
    paper_scale: bool,
) -> Result<SimulateSummary> {
    config.validate()?;
    write_config_snapshot(config, run)?;

    let plan = if paper_scale {
        SessionPlan::paper_scale()
    } else {
        config.sessions.clone()
    };
    let base = config.grid.clone();
    let offset = config.offset_grid();
    let planned = plan_dataset(&base, &offset, plan.train_sessions, plan.valtest_sessions);

    let mut writer = DatasetWriter::create(
        &run.join(DATASET_DIR),
        config.features.window_half,
        config.features.r_max,
        config.radar.n_sensors,
        seed,
        serde_json::to_value(config)?,
    )?;

    let mut ranges_csv = String::from("event_id,session,split,row,col,point_index,gt_x_cm,gt_y_cm,frame_gt");
    for sensor in 0..config.radar.n_sensors {
        let _ = write!(ranges_csv, ",r{sensor}_cm");
    }
    ranges_csv.push('\n');

    let mut sessions = Vec::new();
    let mut written = DatasetPlan {
        train_events: 0,
        val_events: 0,
        test_events: 0,
    };
    let mut event_id = 0usize;
    let total_sessions = plan.train_sessions + plan.valtest_sessions;
    for index in 0..total_sessions {
        let is_train = index < plan.train_sessions;
        let grid = if is_train { &base } else { &offset };
        let sim = SessionSim::new(
            grid,
            &config.geometry,
            &config.sensors,
            &config.radar,
            &config.sim,
            index,
            seed,
        )?;
        let output = process_session(&sim, config)?;
        let first_event_id = event_id;
        for event in sim.events() {
            let point_index = grid.point_index(event.row, event.col);
            let split = if is_train {
                Split::Train
            } else {
                offset_grid_split(event.row)
            };
            let feature = assemble_feature(
                output.stack.view(),
                event,
                event_id,
                point_index,
                split,
                &config.geometry,
                &config.radar,
                config.features.window_half,
            )?;
            let ranges = event_ranges_from_frames(
                &output.frame_ranges,
                feature.meta.frame_gt,
                config.csp.window_frames,
            );
            let _ = write!(
                ranges_csv,
                "{},{},{},{},{},{},{},{},{}",
                event_id,
                index,
                split.as_str(),
                event.row,
                event.col,
                point_index,
                fmt_f64(feature.meta.gt_cm.0),
                fmt_f64(feature.meta.gt_cm.1),
                feature.meta.frame_gt
            );
            for r in &ranges {
                let _ = write!(ranges_csv, ",{}", fmt_opt_f64(*r));
            }
            ranges_csv.push('\n');
            writer.append(&feature)?;
            match split {
                Split::Train => written.train_events += 1,
                Split::Val => written.val_events += 1,
                Split::Test => written.test_events += 1,
            }
            event_id += 1;
        }
        sessions.push(SessionSummary {
            index,
            grid_kind: if is_train { "base" } else { "offset" }.to_string(),
            rows: grid.rows,
            cols: grid.cols,
            n_frames: sim.n_frames(),
            n_events: sim.events().len(),
            first_event_id,
        });
    }
    writer.finalize()?;
    fs::write(run.join(RANGES_FILE), ranges_csv)?;

    let summary = SimulateSummary {
        seed,
        paper_scale,
        train_sessions: plan.train_sessions,
        valtest_sessions: plan.valtest_sessions,
        planned,
        written,
        window_half: config.features.window_half,
        r_max: config.features.r_max,
        sessions,
    };
    let mut text = serde_json::to_string_pretty(&summary)?;
    text.push('\n');
    fs::write(run.join(SESSIONS_FILE), text)?;
    Ok(summary)
}

/// Parse `ranges.csv` back into event rows.
pub fn load_ranges(run: &Path, n_sensors: usize) -> Result<Vec<EventRangeRow>> {
    let path = run.join(RANGES_FILE);
    require(&path, "simulate")?;
    let text = fs::read_to_string(&path)?;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 9 + n_sensors {
            return Err(corrupt(
                &path,
                i + 1,
                format!("expected {} fields, found {}", 9 + n_sensors, fields.len()),
            ));
        }
        let parse_usize = |idx: usize| -> Result<usize> {
            fields[idx]
                .parse()
                .map_err(|_| corrupt(&path, i + 1, format!("bad integer '{}'", fields[idx])))
        };
        let parse_f64 = |idx: usize| -> Result<f64> {
            fields[idx]
                .parse()
                .map_err(|_| corrupt(&path, i + 1, format!("bad float '{}'", fields[idx])))
        };
        let split = Split::from_name(fields[2])
            .ok_or_else(|| corrupt(&path, i + 1, format!("bad split '{}'", fields[2])))?;
        let mut ranges_cm = Vec::with_capacity(n_sensors);
        for s in 0..n_sensors {
            let field = fields[9 + s];
            if field.is_empty() {
                ranges_cm.push(None);
            } else {
                ranges_cm.push(Some(field.parse().map_err(|_| {
                    corrupt(&path, i + 1, format!("bad float '{field}'"))
                })?));
            }
        }
        rows.push(EventRangeRow {
            event_id: parse_usize(0)?,
            session: parse_usize(1)?,
            split,
            row: parse_usize(3)?,
            col: parse_usize(4)?,
            point_index: parse_usize(5)?,
            gt_cm: (parse_f64(6)?, parse_f64(7)?),
            frame_gt: parse_usize(8)?,
            ranges_cm,
        });
    }
    Ok(rows)
}

/// Persist a calibration table as a JSON object keyed by sensor index.
pub fn save_calibration(table: &CalibrationTable, path: &Path) -> Result<()> {
    let map: BTreeMap<String, f64> = table
        .offsets_cm
        .iter()
        .enumerate()
        .map(|(i, &v)| (i.to_string(), v))
        .collect();
    let mut text = serde_json::to_string_pretty(&map)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

/// Load a calibration table written by [`save_calibration`].
pub fn load_calibration(path: &Path, n_sensors: usize) -> Result<CalibrationTable> {
    require(path, "calibrate")?;
    let map: BTreeMap<String, f64> = serde_json::from_str(&fs::read_to_string(path)?)?;
    if map.len() != n_sensors {
        return Err(Error::Corrupt(format!(
            "{}: expected {} sensor offsets, found {}",
            path.display(),
            n_sensors,
            map.len()
        )));
    }
    let mut offsets_cm = vec![0.0; n_sensors];
    for (key, value) in map {
        let index: usize = key.parse().map_err(|_| {
            Error::Corrupt(format!("{}: bad sensor index '{key}'", path.display()))
        })?;
        if index >= n_sensors {
            return Err(Error::Corrupt(format!(
                "{}: sensor index {index} out of range for {n_sensors} sensors",
                path.display()
            )));
        }
        offsets_cm[index] = value;
    }
    Ok(CalibrationTable { offsets_cm })
}

/// Estimate per-sensor range offsets from the training-split events of the
/// range table and persist them as `calibration.json`.
pub fn stage_calibrate(run: &Path, override_config: Option<&AppConfig>) -> Result<CalibrationTable> {
    let config = effective_config(run, override_config)?;
    let rows = load_ranges(run, config.radar.n_sensors)?;
    let events: Vec<CalibrationEvent> = rows
        .iter()
        .filter(|r| r.split == Split::Train)
        .map(|r| CalibrationEvent {
            gt_cm: r.gt_cm,
            ranges_cm: r.ranges_cm.clone(),
        })
        .collect();
    if events.is_empty() {
        return Err(Error::MissingDependency(
            "range table has no training-split events; run the `simulate` stage first".into(),
        ));
    }
    let table = estimate_calibration(&events, &config.sensors)?;
    save_calibration(&table, &run.join(CALIBRATION_FILE))?;
    Ok(table)
}

/// Result of an evaluation stage: the method, its test-split metrics, and
/// the per-event records behind them.
#[derive(Debug, Clone)]
pub struct EvalOutcome {
    pub method: Method,
    pub metrics: Metrics,
    pub records: Vec<EvalRecord>,
}

const ESTIMATES_HEADER: &str = "event_id,session,point_index,row,col,gt_x_cm,gt_y_cm,status,\
                                est_x_cm,est_y_cm,error_cm,residual_cm2,n_sensors_used,converged";

struct EstimateCsvRow<'a> {
    event_id: usize,
    session: usize,
    point_index: usize,
    row: usize,
    col: usize,
    gt_cm: (f64, f64),
    estimate_cm: Option<(f64, f64)>,
    residual_cm2: Option<f64>,
    n_sensors_used: Option<usize>,
    converged: Option<bool>,
    out: &'a mut String,
}

impl EstimateCsvRow<'_> {
    fn write(self) {
        let status = if self.estimate_cm.is_some() {
            "ok"
        } else {
            "unavailable"
        };
        let error_cm = self.estimate_cm.map(|(x, y)| {
            ((x - self.gt_cm.0).powi(2) + (y - self.gt_cm.1).powi(2)).sqrt()
        });
        let _ = writeln!(
            self.out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.event_id,
            self.session,
            self.point_index,
            self.row,
            self.col,
            fmt_f64(self.gt_cm.0),
            fmt_f64(self.gt_cm.1),
            status,
            fmt_opt_f64(self.estimate_cm.map(|p| p.0)),
            fmt_opt_f64(self.estimate_cm.map(|p| p.1)),
            fmt_opt_f64(error_cm),
            fmt_opt_f64(self.residual_cm2),
            self.n_sensors_used.map(|n| n.to_string()).unwrap_or_default(),
            self.converged.map(|c| c.to_string()).unwrap_or_default(),
        );
    }
}

/// Locate every test-split event with the conventional positioner
/// (calibrated window-averaged ranges, nonlinear least squares) and persist
/// the estimate table.
pub fn stage_csp_eval(run: &Path, override_config: Option<&AppConfig>) -> Result<EvalOutcome> {
    let config = effective_config(run, override_config)?;
    let rows = load_ranges(run, config.radar.n_sensors)?;
    let calibration = load_calibration(&run.join(CALIBRATION_FILE), config.radar.n_sensors)?;

    let mut csv = String::from(ESTIMATES_HEADER);
    csv.push('\n');
    let mut records = Vec::new();
    for row in rows.iter().filter(|r| r.split == Split::Test) {
        let calibrated: Vec<Option<f64>> = row
            .ranges_cm
            .iter()
            .enumerate()
            .map(|(i, r)| r.map(|r| r - calibration.offsets_cm[i]))
            .collect();
        let (estimate_cm, residual_cm2, n_sensors_used, converged) =
            match solve_nls(&calibrated, &config.sensors, &config.csp) {
                Ok(est) => (
                    Some(est.position_cm),
                    est.residual_cm2,
                    Some(est.n_sensors_used),
                    Some(est.converged),
                ),
                Err(Error::PositioningUnavailable { .. }) => (None, None, None, None),
                Err(e) => return Err(e),
            };
        EstimateCsvRow {
            event_id: row.event_id,
            session: row.session,
            point_index: row.point_index,
            row: row.row,
            col: row.col,
            gt_cm: row.gt_cm,
            estimate_cm,
            residual_cm2,
            n_sensors_used,
            converged,
            out: &mut csv,
        }
        .write();
        records.push(EvalRecord {
            event_id: row.event_id,
            point_index: row.point_index,
            gt_cm: row.gt_cm,
            estimate_cm,
        });
    }
    if records.is_empty() {
        return Err(Error::MissingDependency(
            "range table has no test-split events; run the `simulate` stage first".into(),
        ));
    }
    fs::write(run.join(estimates_file(Method::Csp)), csv)?;
    let metrics = evaluate(&records)?;
    Ok(EvalOutcome {
        method: Method::Csp,
        metrics,
        records,
    })
}

/// Train the network on the container's train split, selecting the epoch
/// with the lowest validation loss, and persist the model plus the training
/// report.
pub fn stage_train(
    run: &Path,
    override_config: Option<&AppConfig>,
    seed_override: Option<u64>,
) -> Result<TrainReport> {
    let mut config = effective_config(run, override_config)?;
    if let Some(seed) = seed_override {
        config.train.seed = seed;
    }
    let dataset_dir = run.join(DATASET_DIR);
    require(&dataset_dir.join(crate::features::MANIFEST_NAME), "simulate")?;
    let manifest = load_manifest(&dataset_dir)?;
    let container_shape = (
        2 * manifest.window_half + 1,
        manifest.r_max,
        manifest.n_sensors,
    );
    if container_shape != config.model.input_shape {
        return Err(Error::Config(format!(
            "dataset container shape {:?} does not match model.input_shape {:?}",
            container_shape, config.model.input_shape
        )));
    }

    let train_split = load_split(&dataset_dir, &manifest, Split::Train)?;
    let (train_x, train_y) = featurize_split::<f32>(&train_split, config.train.input_mode);
    drop(train_split);
    let val_split = load_split(&dataset_dir, &manifest, Split::Val)?;
    let (val_x, val_y) = featurize_split::<f32>(&val_split, config.train.input_mode);
    drop(val_split);

    let mut model = Cnn::<f32>::new(&config.model, config.train.input_mode, config.train.seed)?;
    let report = train(&mut model, &train_x, &train_y, &val_x, &val_y, &config.train)?;
    save_model(&model, &run.join(MODEL_FILE))?;
    let mut text = serde_json::to_string_pretty(&report)?;
    text.push('\n');
    fs::write(run.join(TRAIN_REPORT_FILE), text)?;
    Ok(report)
}

/// Locate every test-split event with the trained network and persist the
/// estimate table.
pub fn stage_cnn_eval(run: &Path, override_config: Option<&AppConfig>) -> Result<EvalOutcome> {
    let _config = effective_config(run, override_config)?;
    let model_path = run.join(MODEL_FILE);
    require(&model_path, "train")?;
    let model: Cnn<f32> = load_model(&model_path)?;
    let dataset_dir = run.join(DATASET_DIR);
    require(&dataset_dir.join(crate::features::MANIFEST_NAME), "simulate")?;
    let manifest = load_manifest(&dataset_dir)?;
    let test_split = load_split(&dataset_dir, &manifest, Split::Test)?;
    if test_split.n_events() == 0 {
        return Err(Error::MissingDependency(
            "dataset container has no test-split events; run the `simulate` stage first".into(),
        ));
    }

    let mut csv = String::from(ESTIMATES_HEADER);
    csv.push('\n');
    let mut records = Vec::with_capacity(test_split.n_events());
    for i in 0..test_split.n_events() {
        let meta = &test_split.meta[i];
        let input = featurize_event::<f32>(test_split.event(i), model.input_mode);
        let estimate = model.predict(&input)?;
        EstimateCsvRow {
            event_id: meta.event_id,
            session: meta.session,
            point_index: meta.point_index,
            row: meta.row,
            col: meta.col,
            gt_cm: meta.gt_cm,
            estimate_cm: Some(estimate),
            residual_cm2: None,
            n_sensors_used: None,
            converged: None,
            out: &mut csv,
        }
        .write();
        records.push(EvalRecord {
            event_id: meta.event_id,
            point_index: meta.point_index,
            gt_cm: meta.gt_cm,
            estimate_cm: Some(estimate),
        });
    }
    fs::write(run.join(estimates_file(Method::Cnn)), csv)?;
    let metrics = evaluate(&records)?;
    Ok(EvalOutcome {
        method: Method::Cnn,
        metrics,
        records,
    })
}

/// Measure single-sample inference latency of the persisted model and write
/// per-trial samples plus summary statistics. Uses the first test-split
/// feature as input when the container is present, an all-zero tensor
/// otherwise; the arithmetic is identical either way.
pub fn stage_bench_latency(
    run: &Path,
    override_config: Option<&AppConfig>,
) -> Result<LatencyStats> {
    let config = effective_config(run, override_config)?;
    let model_path = run.join(MODEL_FILE);
    require(&model_path, "train")?;
    let model: Cnn<f32> = load_model(&model_path)?;
    let dataset_dir = run.join(DATASET_DIR);
    let input = match load_manifest(&dataset_dir) {
        Ok(manifest) => {
            let test_split = load_split(&dataset_dir, &manifest, Split::Test)?;
            if test_split.n_events() > 0 {
                featurize_event::<f32>(test_split.event(0), model.input_mode)
            } else {
                zero_input(&model)?
            }
        }
        Err(_) => zero_input(&model)?,
    };
    let stats = benchmark_inference(&model, &input, &config.bench)?;

    let mut csv = String::from("trial,latency_ms\n");
    for (i, ms) in stats.samples_ms.iter().enumerate() {
        let _ = writeln!(csv, "{},{}", i, fmt_f64(*ms));
    }
    fs::write(run.join(LATENCY_CSV_FILE), csv)?;
    let mut text = serde_json::to_string_pretty(&stats)?;
    text.push('\n');
    fs::write(run.join(LATENCY_JSON_FILE), text)?;
    Ok(stats)
}

fn zero_input(model: &Cnn<f32>) -> Result<Array3<f32>> {
    let shapes = stage_shapes(&model.config, model.input_mode)?;
    Ok(Array3::zeros(shapes[0]))
}

/// Which positioning methods a report should cover.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MethodSelection {
    Csp,
    Cnn,
    Both,
}

impl MethodSelection {
    fn methods(self) -> Vec<Method> {
        match self {
            MethodSelection::Csp => vec![Method::Csp],
            MethodSelection::Cnn => vec![Method::Cnn],
            MethodSelection::Both => vec![Method::Csp, Method::Cnn],
        }
    }
}

/// Per-method summary row of a report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: Method,
    pub n_events: usize,
    pub n_available: usize,
    pub n_unavailable: usize,
    pub median_error_cm: f64,
    pub p90_error_cm: f64,
    pub rmse_map_median_cm: f64,
    pub rmse_map_p90_cm: f64,
}

/// Latency summary with the timing budget context.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LatencyReport {
    pub median_ms: f64,
    pub p90_ms: f64,
    pub mean_ms: f64,
    /// Half the frame period, 1000 / (2 f_r) ms: the budget that leaves half
    /// of every frame interval for the rest of the system.
    pub budget_ms: f64,
    pub reference_ms: f64,
    pub within_budget: bool,
    /// Median latency divided by the reference latency.
    pub ratio_to_reference: f64,
}

/// Everything `report` renders, also persisted as `report/report.json`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunReport {
    pub range_resolution_cm: f64,
    pub oversampled_bin_cm: f64,
    pub methods: Vec<MethodSummary>,
    pub latency: Option<LatencyReport>,
}

/// Minimal estimate-table row used by the report stage.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimateRow {
    pub event_id: usize,
    pub session: usize,
    pub point_index: usize,
    pub row: usize,
    pub col: usize,
    pub gt_cm: (f64, f64),
    pub estimate_cm: Option<(f64, f64)>,
}

/// Parse an estimate table written by an evaluation stage.
pub fn load_estimates(path: &Path) -> Result<Vec<EstimateRow>> {
    let text = fs::read_to_string(path)?;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 14 {
            return Err(corrupt(
                path,
                i + 1,
                format!("expected 14 fields, found {}", fields.len()),
            ));
        }
        let parse_usize = |idx: usize| -> Result<usize> {
            fields[idx]
                .parse()
                .map_err(|_| corrupt(path, i + 1, format!("bad integer '{}'", fields[idx])))
        };
        let parse_f64 = |idx: usize| -> Result<f64> {
            fields[idx]
                .parse()
                .map_err(|_| corrupt(path, i + 1, format!("bad float '{}'", fields[idx])))
        };
        let estimate_cm = match fields[7] {
            "ok" => Some((parse_f64(8)?, parse_f64(9)?)),
            "unavailable" => None,
            other => return Err(corrupt(path, i + 1, format!("bad status '{other}'"))),
        };
        rows.push(EstimateRow {
            event_id: parse_usize(0)?,
            session: parse_usize(1)?,
            point_index: parse_usize(2)?,
            row: parse_usize(3)?,
            col: parse_usize(4)?,
            gt_cm: (parse_f64(5)?, parse_f64(6)?),
            estimate_cm,
        });
    }
    Ok(rows)
}

fn ramp_color(t: f64) -> String {
    // Diverging blue -> near-white -> red.
    let lo = (33.0, 102.0, 172.0);
    let mid = (247.0, 247.0, 247.0);
    let hi = (178.0, 24.0, 43.0);
    let t = t.clamp(0.0, 1.0);
    let (a, b, u) = if t < 0.5 {
        (lo, mid, t * 2.0)
    } else {
        (mid, hi, (t - 0.5) * 2.0)
    };
    let lerp = |x: f64, y: f64| (x + (y - x) * u).round() as u8;
    format!(
        "rgb({},{},{})",
        lerp(a.0, b.0),
        lerp(a.1, b.1),
        lerp(a.2, b.2)
    )
}

/// Render an RMSE-per-point heatmap as a standalone SVG document.
fn heatmap_svg(
    points: &[PointRmse],
    coords: &BTreeMap<usize, (usize, usize)>,
    method: Method,
) -> String {
    const CELL: usize = 24;
    const GAP: usize = 2;
    const MARGIN: usize = 12;
    const TITLE_H: usize = 28;
    const LEGEND_H: usize = 24;

    let rows = coords.values().map(|&(r, _)| r + 1).max().unwrap_or(1);
    let cols = coords.values().map(|&(_, c)| c + 1).max().unwrap_or(1);
    let width = 2 * MARGIN + cols * CELL;
    let height = TITLE_H + rows * CELL + LEGEND_H + MARGIN;

    let finite: Vec<f64> = points.iter().map(|p| p.rmse_cm).collect();
    let min = finite.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = finite.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let span = (max - min).max(f64::EPSILON);

    let mut svg = String::new();
    let _ = write!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" \
         viewBox=\"0 0 {width} {height}\">\n\
         <rect width=\"{width}\" height=\"{height}\" fill=\"white\"/>\n\
         <text x=\"{MARGIN}\" y=\"19\" font-family=\"sans-serif\" font-size=\"14\">\
         {} test-split RMSE per grid point (cm)</text>\n",
        method.as_str().to_uppercase()
    );
    for point in points {
        let Some(&(row, col)) = coords.get(&point.point_index) else {
            continue;
        };
        let x = MARGIN + col * CELL;
        let y = TITLE_H + row * CELL;
        let t = (point.rmse_cm - min) / span;
        let _ = write!(
            svg,
            "<rect x=\"{x}\" y=\"{y}\" width=\"{}\" height=\"{}\" fill=\"{}\">\
             <title>point {} (row {row}, col {col}): rmse {:.3} cm over {} events</title>\
             </rect>\n",
            CELL - GAP,
            CELL - GAP,
            ramp_color(t),
            point.point_index,
            point.rmse_cm,
            point.n_events
        );
    }
    let legend_y = TITLE_H + rows * CELL + 16;
    let _ = write!(
        svg,
        "<text x=\"{MARGIN}\" y=\"{legend_y}\" font-family=\"sans-serif\" font-size=\"12\">\
         min {min:.3} cm ({}), max {max:.3} cm ({})</text>\n</svg>\n",
        ramp_color(0.0),
        ramp_color(1.0)
    );
    svg
}

fn method_summary(method: Method, metrics: &Metrics) -> MethodSummary {
    MethodSummary {
        method,
        n_events: metrics.n_events,
        n_available: metrics.n_available,
        n_unavailable: metrics.n_unavailable,
        median_error_cm: metrics.median_error_cm,
        p90_error_cm: metrics.p90_error_cm,
        rmse_map_median_cm: metrics.rmse_map_median_cm,
        rmse_map_p90_cm: metrics.rmse_map_p90_cm,
    }
}

/// Render the run report: `summary.csv`, per-method RMSE maps (CSV and SVG
/// heatmap), error CDFs, and `report.json` with the latency comparison when
/// a latency benchmark exists.
pub fn stage_report(
    run: &Path,
    override_config: Option<&AppConfig>,
    selection: MethodSelection,
) -> Result<RunReport> {
    let config = effective_config(run, override_config)?;
    let report_dir = run.join(REPORT_DIR);
    fs::create_dir_all(&report_dir)?;

    let mut summary_csv = String::from(
        "method,n_events,n_available,n_unavailable,median_error_cm,p90_error_cm,\
         rmse_map_median_cm,rmse_map_p90_cm\n",
    );
    let mut methods = Vec::new();
    for method in selection.methods() {
        let path = run.join(estimates_file(method));
        let eval_stage = match method {
            Method::Csp => "csp-eval",
            Method::Cnn => "cnn-eval",
        };
        require(&path, eval_stage)?;
        let rows = load_estimates(&path)?;
        let records: Vec<EvalRecord> = rows
            .iter()
            .map(|r| EvalRecord {
                event_id: r.event_id,
                point_index: r.point_index,
                gt_cm: r.gt_cm,
                estimate_cm: r.estimate_cm,
            })
            .collect();
        let metrics = evaluate(&records)?;
        let coords: BTreeMap<usize, (usize, usize)> = rows
            .iter()
            .map(|r| (r.point_index, (r.row, r.col)))
            .collect();

        let mut map_csv = String::from("point_index,row,col,gt_x_cm,gt_y_cm,n_events,rmse_cm\n");
        for point in &metrics.rmse_map {
            let (row, col) = coords[&point.point_index];
            let _ = writeln!(
                map_csv,
                "{},{},{},{},{},{},{}",
                point.point_index,
                row,
                col,
                fmt_f64(point.gt_cm.0),
                fmt_f64(point.gt_cm.1),
                point.n_events,
                fmt_f64(point.rmse_cm)
            );
        }
        fs::write(
            report_dir.join(format!("rmse_map_{}.csv", method.as_str())),
            map_csv,
        )?;

        let mut errors = metrics.errors_cm.clone();
        errors.sort_by(|a, b| a.partial_cmp(b).expect("finite errors"));
        let mut cdf_csv = String::from("error_cm,fraction\n");
        let n = errors.len();
        for (i, e) in errors.iter().enumerate() {
            let _ = writeln!(cdf_csv, "{},{}", fmt_f64(*e), fmt_f64((i + 1) as f64 / n as f64));
        }
        fs::write(
            report_dir.join(format!("cdf_{}.csv", method.as_str())),
            cdf_csv,
        )?;

        fs::write(
            report_dir.join(format!("heatmap_{}.svg", method.as_str())),
            heatmap_svg(&metrics.rmse_map, &coords, method),
        )?;

        let summary = method_summary(method, &metrics);
        let _ = writeln!(
            summary_csv,
            "{},{},{},{},{},{},{},{}",
            summary.method.as_str(),
            summary.n_events,
            summary.n_available,
            summary.n_unavailable,
            fmt_f64(summary.median_error_cm),
            fmt_f64(summary.p90_error_cm),
            fmt_f64(summary.rmse_map_median_cm),
            fmt_f64(summary.rmse_map_p90_cm)
        );
        methods.push(summary);
    }
    fs::write(report_dir.join("summary.csv"), summary_csv)?;

    let latency_path = run.join(LATENCY_JSON_FILE);
    let latency = if latency_path.exists() {
        let stats: LatencyStats = serde_json::from_str(&fs::read_to_string(&latency_path)?)?;
        let budget_ms = 1000.0 / (2.0 * config.radar.frame_rate_hz);
        Some(LatencyReport {
            median_ms: stats.median_ms,
            p90_ms: stats.p90_ms,
            mean_ms: stats.mean_ms,
            budget_ms,
            reference_ms: REFERENCE_LATENCY_MS,
            within_budget: stats.median_ms < budget_ms,
            ratio_to_reference: stats.median_ms / REFERENCE_LATENCY_MS,
        })
    } else {
        None
    };

    let report = RunReport {
        range_resolution_cm: config.radar.range_bin_cm(),
        oversampled_bin_cm: config.radar.oversampled_bin_cm(),
        methods,
        latency,
    };
    let mut text = serde_json::to_string_pretty(&report)?;
    text.push('\n');
    fs::write(report_dir.join("report.json"), text)?;
    Ok(report)
}

/// Absolute paths of the artifacts a run directory may contain, for callers
/// that need to point at them (the command-line tool's output messages).
pub fn artifact_path(run: &Path, name: &str) -> PathBuf {
    run.join(name)
}
