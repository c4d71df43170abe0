//! Feature extraction and the on-disk dataset container.
//!
//! A feature is the complex-valued beamformed MTI output around one touch:
//! frames [f_GT - W_h, f_GT + W_h], range bins [0, R_max), all sensors,
//! giving a (2*W_h + 1, R_max, N_rad) tensor. Features are stored in
//! single precision: a manifest plus one blob per split, each blob a
//! row-major (event, frame, range, sensor) sequence of interleaved
//! little-endian f32 (re, im) pairs, integrity-checked with SHA-256.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use ndarray::{Array3, ArrayView3};
use num_complex::Complex32;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::RadarConfig;
use crate::error::{Error, Result};
use crate::geom::{gt_to_radar_coords, DisplayGeometry, Split, TouchEvent};

/// Name of the container manifest inside a dataset directory.
pub const MANIFEST_NAME: &str = "manifest.json";

/// Container format version written and accepted by this crate.
pub const FORMAT_VERSION: u32 = 1;

/// Dtype tag for interleaved little-endian f32 (re, im) pairs.
pub const DTYPE_TAG: &str = "c64-f32le";

/// Blob file name for a split.
pub fn split_blob_name(split: Split) -> &'static str {
    match split {
        Split::Train => "train.bin",
        Split::Val => "val.bin",
        Split::Test => "test.bin",
    }
}

/// Everything known about one touch event besides its signal window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventMeta {
    pub event_id: usize,
    pub session: usize,
    pub split: Split,
    pub row: usize,
    pub col: usize,
    /// Grid point identifier, stable across repetitions of the same point.
    pub point_index: usize,
    /// Label: ground-truth touch position in radar coordinates (cm).
    pub gt_cm: (f64, f64),
    /// Frame index of the ground-truth touch instant.
    pub frame_gt: usize,
}

/// One extracted feature: metadata plus the complex window, shape
/// (2*W_h + 1, R_max, N_rad).
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTensor {
    pub meta: EventMeta,
    pub values: Array3<Complex32>,
}

/// Cut the temporal window around `frame_gt` out of a per-session stack of
/// beamformed profiles, shape (n_frames, n_bins, n_sensors). Fails when the
/// window would extend past either end of the session.
pub fn extract_window(
    stack: ArrayView3<'_, Complex32>,
    frame_gt: usize,
    window_half: usize,
) -> Result<Array3<Complex32>> {
    let n_frames = stack.dim().0;
    if frame_gt < window_half || frame_gt + window_half >= n_frames {
        return Err(Error::ShapeMismatch(format!(
            "feature window [{} - {}, {} + {}] outside session frames [0, {})",
            frame_gt, window_half, frame_gt, window_half, n_frames
        )));
    }
    Ok(stack
        .slice(ndarray::s![
            frame_gt - window_half..=frame_gt + window_half,
            ..,
            ..
        ])
        .to_owned())
}

/// Assemble the feature tensor and label for one touch event from its
/// session's beamformed profile stack (already truncated to R_max bins).
#[allow(clippy::too_many_arguments)]
pub fn assemble_feature(
    stack: ArrayView3<'_, Complex32>,
    event: &TouchEvent,
    event_id: usize,
    point_index: usize,
    split: Split,
    geom: &DisplayGeometry,
    radar: &RadarConfig,
    window_half: usize,
) -> Result<FeatureTensor> {
    let frame_gt = event.frame_index(radar.frame_rate_hz);
    let values = extract_window(stack, frame_gt, window_half)?;
    let gt_cm = gt_to_radar_coords(event.p_tx, event.p_ty, geom)?;
    Ok(FeatureTensor {
        meta: EventMeta {
            event_id,
            session: event.session,
            split,
            row: event.row,
            col: event.col,
            point_index,
            gt_cm,
            frame_gt,
        },
        values,
    })
}

/// Per-split section of the manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub file: String,
    pub n_events: usize,
    /// [n_events, n_frames, n_bins, n_sensors].
    pub shape: [usize; 4],
    pub sha256: String,
    pub events: Vec<EventMeta>,
}

/// Container manifest: layout, provenance, and integrity data for the
/// split blobs beside it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format_version: u32,
    pub dtype: String,
    pub window_half: usize,
    pub r_max: usize,
    pub n_sensors: usize,
    pub seed: u64,
    /// Snapshot of the configuration the dataset was generated with.
    pub config: serde_json::Value,
    pub splits: BTreeMap<String, SplitManifest>,
}

struct SplitWriter {
    writer: BufWriter<File>,
    digest: Sha256,
    events: Vec<EventMeta>,
}

/// Streaming container writer: events are appended one at a time (in any
/// split order) and blobs never reside in memory as a whole.
pub struct DatasetWriter {
    dir: PathBuf,
    window_half: usize,
    r_max: usize,
    n_sensors: usize,
    seed: u64,
    config: serde_json::Value,
    writers: BTreeMap<&'static str, SplitWriter>,
}

impl DatasetWriter {
    pub fn create(
        dir: &Path,
        window_half: usize,
        r_max: usize,
        n_sensors: usize,
        seed: u64,
        config: serde_json::Value,
    ) -> Result<Self> {
        std::fs::create_dir_all(dir)?;
        let mut writers = BTreeMap::new();
        for split in [Split::Train, Split::Val, Split::Test] {
            let name = split_blob_name(split);
            let file = File::create(dir.join(name))?;
            writers.insert(
                name,
                SplitWriter {
                    writer: BufWriter::new(file),
                    digest: Sha256::new(),
                    events: Vec::new(),
                },
            );
        }
        Ok(Self {
            dir: dir.to_path_buf(),
            window_half,
            r_max,
            n_sensors,
            seed,
            config,
            writers,
        })
    }

    /// Expected per-event tensor shape.
    pub fn event_shape(&self) -> (usize, usize, usize) {
        (2 * self.window_half + 1, self.r_max, self.n_sensors)
    }

    pub fn append(&mut self, feature: &FeatureTensor) -> Result<()> {
        let expected = self.event_shape();
        if feature.values.dim() != expected {
            return Err(Error::ShapeMismatch(format!(
                "feature shape {:?} does not match container shape {:?}",
                feature.values.dim(),
                expected
            )));
        }
        let mut bytes = Vec::with_capacity(feature.values.len() * 8);
        for v in feature.values.iter() {
            bytes.extend_from_slice(&v.re.to_le_bytes());
            bytes.extend_from_slice(&v.im.to_le_bytes());
        }
        let slot = self
            .writers
            .get_mut(split_blob_name(feature.meta.split))
            .expect("all splits present");
        slot.writer.write_all(&bytes)?;
        slot.digest.update(&bytes);
        slot.events.push(feature.meta.clone());
        Ok(())
    }

    /// Flush blobs and write the manifest; consumes the writer.
    pub fn finalize(self) -> Result<DatasetManifest> {
        let (frames, bins, sensors) = (2 * self.window_half + 1, self.r_max, self.n_sensors);
        let mut splits = BTreeMap::new();
        for (name, slot) in self.writers {
            let SplitWriter {
                mut writer,
                digest,
                events,
            } = slot;
            writer.flush()?;
            let sha256 = digest
                .finalize()
                .iter()
                .map(|b| format!("{b:02x}"))
                .collect::<String>();
            splits.insert(
                name.trim_end_matches(".bin").to_string(),
                SplitManifest {
                    file: name.to_string(),
                    n_events: events.len(),
                    shape: [events.len(), frames, bins, sensors],
                    sha256,
                    events,
                },
            );
        }
        let manifest = DatasetManifest {
            format_version: FORMAT_VERSION,
            dtype: DTYPE_TAG.to_string(),
            window_half: self.window_half,
            r_max: self.r_max,
            n_sensors: self.n_sensors,
            seed: self.seed,
            config: self.config,
            splits,
        };
        let file = File::create(self.dir.join(MANIFEST_NAME))?;
        serde_json::to_writer_pretty(BufWriter::new(file), &manifest)?;
        Ok(manifest)
    }
}

/// Read and validate a container manifest.
pub fn load_manifest(dir: &Path) -> Result<DatasetManifest> {
    let path = dir.join(MANIFEST_NAME);
    if !path.exists() {
        return Err(Error::MissingDependency(format!(
            "dataset manifest not found at {}",
            path.display()
        )));
    }
    let manifest: DatasetManifest = serde_json::from_reader(File::open(path)?)?;
    if manifest.format_version != FORMAT_VERSION {
        return Err(Error::Corrupt(format!(
            "unsupported container format version {}",
            manifest.format_version
        )));
    }
    if manifest.dtype != DTYPE_TAG {
        return Err(Error::Corrupt(format!(
            "unsupported container dtype {:?}",
            manifest.dtype
        )));
    }
    Ok(manifest)
}

/// One fully loaded split: event metadata plus the flat complex buffer in
/// (event, frame, range, sensor) row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitData {
    /// (n_events, n_frames, n_bins, n_sensors).
    pub shape: (usize, usize, usize, usize),
    pub meta: Vec<EventMeta>,
    pub values: Vec<Complex32>,
}

impl SplitData {
    pub fn n_events(&self) -> usize {
        self.shape.0
    }

    /// View of one event's tensor, shape (n_frames, n_bins, n_sensors).
    pub fn event(&self, index: usize) -> ArrayView3<'_, Complex32> {
        let (_, f, b, s) = self.shape;
        let stride = f * b * s;
        ArrayView3::from_shape((f, b, s), &self.values[index * stride..(index + 1) * stride])
            .expect("event buffer matches shape")
    }
}

/// Load one split blob, verifying its length and SHA-256 against the
/// manifest.
pub fn load_split(dir: &Path, manifest: &DatasetManifest, split: Split) -> Result<SplitData> {
    let section = manifest.splits.get(split.as_str()).ok_or_else(|| {
        Error::Corrupt(format!("manifest has no {:?} split section", split.as_str()))
    })?;
    let path = dir.join(&section.file);
    if !path.exists() {
        return Err(Error::MissingDependency(format!(
            "split blob not found at {}",
            path.display()
        )));
    }
    let mut bytes = Vec::new();
    File::open(&path)?.read_to_end(&mut bytes)?;
    let [n, f, b, s] = section.shape;
    let expected_len = n * f * b * s * 8;
    if bytes.len() != expected_len {
        return Err(Error::Corrupt(format!(
            "split blob {} is {} bytes, expected {}",
            section.file,
            bytes.len(),
            expected_len
        )));
    }
    let sha256 = Sha256::digest(&bytes)
        .iter()
        .map(|byte| format!("{byte:02x}"))
        .collect::<String>();
    if sha256 != section.sha256 {
        return Err(Error::Corrupt(format!(
            "split blob {} failed its checksum",
            section.file
        )));
    }
    let values: Vec<Complex32> = bytes
        .chunks_exact(8)
        .map(|c| {
            Complex32::new(
                f32::from_le_bytes([c[0], c[1], c[2], c[3]]),
                f32::from_le_bytes([c[4], c[5], c[6], c[7]]),
            )
        })
        .collect();
    Ok(SplitData {
        shape: (n, f, b, s),
        meta: section.events.clone(),
        values,
    })
}
