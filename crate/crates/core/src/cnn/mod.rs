//! Convolutional position regressor: three conv(3x3)+ReLU+maxpool(2x2)
//! stages, one hidden dense layer, and a linear 2-unit output head that
//! predicts the touch position in cm. Complex feature tensors enter either
//! as per-sensor magnitudes or as stacked real/imaginary channels, each
//! sample normalized by its own peak magnitude.

pub mod layers;
pub mod train;

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2, Array3, ArrayView3};
use num_complex::Complex32;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{InputMode, ModelConfig};
use crate::error::{Error, Result};
pub use layers::Scalar;
use layers::{
    conv_out_len, maxpool, maxpool_backward, relu, relu_backward, scalar, Conv2d, Dense,
};
pub use train::{benchmark_inference, evaluate_loss, train, Adam, EpochStats, LatencyStats, TrainReport};

/// Per-stage activation shapes of the convolutional trunk, starting with
/// the input (C_in, H, W) and ending with the shape that is flattened.
pub fn stage_shapes(
    config: &ModelConfig,
    input_mode: InputMode,
) -> Result<Vec<(usize, usize, usize)>> {
    config.validate()?;
    let (h0, w0, sensors) = config.input_shape;
    let mut shapes = vec![(input_mode.channels(sensors), h0, w0)];
    let (mut h, mut w) = (h0, w0);
    for &filters in &config.conv_filters {
        let hc = conv_out_len(h, config.kernel, config.padding);
        let wc = conv_out_len(w, config.kernel, config.padding);
        let (hp, wp) = (hc / config.pool, wc / config.pool);
        if hp == 0 || wp == 0 {
            return Err(Error::Config(format!(
                "input {h0}x{w0} collapses to zero spatial size in the conv trunk"
            )));
        }
        shapes.push((filters, hp, wp));
        h = hp;
        w = wp;
    }
    Ok(shapes)
}

/// The network. Generic over the float type: training uses f32, gradient
/// validation f64.
#[derive(Debug, Clone, PartialEq)]
pub struct Cnn<T> {
    pub config: ModelConfig,
    pub input_mode: InputMode,
    conv: Vec<Conv2d<T>>,
    dense1: Dense<T>,
    dense2: Dense<T>,
}

/// Cached intermediate activations of one forward pass, consumed by
/// `backward`.
pub struct Tape<T> {
    stages: Vec<StageCache<T>>,
    out_dim: (usize, usize, usize),
    flat: Array1<T>,
    z1: Array1<T>,
    h: Array1<T>,
}

struct StageCache<T> {
    col: Array2<T>,
    z: Array3<T>,
    input_dim: (usize, usize, usize),
    prepool_dim: (usize, usize, usize),
    argmax: Array3<usize>,
}

/// Parameter gradients, mirroring the model's tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct CnnGrads<T> {
    pub conv_w: Vec<Array2<T>>,
    pub conv_b: Vec<Array1<T>>,
    pub d1_w: Array2<T>,
    pub d1_b: Array1<T>,
    pub d2_w: Array2<T>,
    pub d2_b: Array1<T>,
}

impl<T: Scalar> Cnn<T> {
    /// All-zero parameters (predicts exactly (0, 0) everywhere).
    pub fn zeros(config: &ModelConfig, input_mode: InputMode) -> Result<Self> {
        let shapes = stage_shapes(config, input_mode)?;
        let mut conv = Vec::new();
        for (i, &filters) in config.conv_filters.iter().enumerate() {
            conv.push(Conv2d::zeros(
                shapes[i].0,
                filters,
                config.kernel,
                config.padding,
            ));
        }
        let (c, h, w) = *shapes.last().expect("nonempty");
        let flat = c * h * w;
        Ok(Self {
            config: config.clone(),
            input_mode,
            conv,
            dense1: Dense::zeros(flat, config.dense_units),
            dense2: Dense::zeros(config.dense_units, config.output_units),
        })
    }

    /// Fan-in-scaled uniform initialization, U(-1/sqrt(fan_in),
    /// 1/sqrt(fan_in)) for weights and zero biases, deterministic in `seed`.
    pub fn new(config: &ModelConfig, input_mode: InputMode, seed: u64) -> Result<Self> {
        let mut model = Self::zeros(config, input_mode)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for conv in &mut model.conv {
            let bound = 1.0 / ((conv.c_in * conv.kernel * conv.kernel) as f64).sqrt();
            for v in conv.weight.iter_mut() {
                *v = scalar(rng.random_range(-bound..bound));
            }
        }
        for dense in [&mut model.dense1, &mut model.dense2] {
            let bound = 1.0 / (dense.weight.dim().1 as f64).sqrt();
            for v in dense.weight.iter_mut() {
                *v = scalar(rng.random_range(-bound..bound));
            }
        }
        Ok(model)
    }

    pub fn param_count(&self) -> usize {
        self.conv.iter().map(|c| c.param_count()).sum::<usize>()
            + self.dense1.param_count()
            + self.dense2.param_count()
    }

    /// Parameter tensors as flat slices, in a fixed canonical order.
    pub fn param_slices(&self) -> Vec<&[T]> {
        let mut out = Vec::new();
        for c in &self.conv {
            out.push(c.weight.as_slice().expect("standard layout"));
            out.push(c.bias.as_slice().expect("standard layout"));
        }
        out.push(self.dense1.weight.as_slice().expect("standard layout"));
        out.push(self.dense1.bias.as_slice().expect("standard layout"));
        out.push(self.dense2.weight.as_slice().expect("standard layout"));
        out.push(self.dense2.bias.as_slice().expect("standard layout"));
        out
    }

    /// Mutable view of the same tensors, same order as `param_slices`.
    pub fn param_slices_mut(&mut self) -> Vec<&mut [T]> {
        let Cnn {
            conv,
            dense1,
            dense2,
            ..
        } = self;
        let mut out = Vec::new();
        for c in conv.iter_mut() {
            out.push(c.weight.as_slice_mut().expect("standard layout"));
            out.push(c.bias.as_slice_mut().expect("standard layout"));
        }
        out.push(dense1.weight.as_slice_mut().expect("standard layout"));
        out.push(dense1.bias.as_slice_mut().expect("standard layout"));
        out.push(dense2.weight.as_slice_mut().expect("standard layout"));
        out.push(dense2.bias.as_slice_mut().expect("standard layout"));
        out
    }

    /// Copy of all parameters, for checkpointing.
    pub fn snapshot(&self) -> Vec<Vec<T>> {
        self.param_slices().iter().map(|s| s.to_vec()).collect()
    }

    /// Restore parameters from a checkpoint made by `snapshot`.
    pub fn restore(&mut self, snapshot: &[Vec<T>]) -> Result<()> {
        let mut slices = self.param_slices_mut();
        if slices.len() != snapshot.len()
            || slices
                .iter()
                .zip(snapshot)
                .any(|(s, snap)| s.len() != snap.len())
        {
            return Err(Error::ShapeMismatch(
                "checkpoint does not match model parameterization".into(),
            ));
        }
        for (slice, snap) in slices.iter_mut().zip(snapshot) {
            slice.copy_from_slice(snap);
        }
        Ok(())
    }

    fn check_input(&self, x: &Array3<T>) -> Result<()> {
        let (h, w, sensors) = self.config.input_shape;
        let expected = (self.input_mode.channels(sensors), h, w);
        if x.dim() != expected {
            return Err(Error::ShapeMismatch(format!(
                "network input shape {:?} does not match expected {:?}",
                x.dim(),
                expected
            )));
        }
        Ok(())
    }

    /// Forward pass keeping every intermediate needed for `backward`.
    pub fn forward_cached(&self, x: &Array3<T>) -> Result<(Array1<T>, Tape<T>)> {
        self.check_input(x)?;
        let mut stages = Vec::with_capacity(self.conv.len());
        let mut a = x.clone();
        for conv in &self.conv {
            let input_dim = a.dim();
            let (z, col) = conv.forward(&a)?;
            let act = relu(&z);
            let prepool_dim = act.dim();
            let (pooled, argmax) = maxpool(&act, self.config.pool);
            stages.push(StageCache {
                col,
                z,
                input_dim,
                prepool_dim,
                argmax,
            });
            a = pooled;
        }
        let out_dim = a.dim();
        let flat = Array1::from_iter(a.iter().copied());
        let z1 = self.dense1.forward(&flat);
        let h = relu(&z1);
        let out = self.dense2.forward(&h);
        Ok((
            out,
            Tape {
                stages,
                out_dim,
                flat,
                z1,
                h,
            },
        ))
    }

    /// Inference-only forward pass.
    pub fn forward(&self, x: &Array3<T>) -> Result<Array1<T>> {
        Ok(self.forward_cached(x)?.0)
    }

    /// Predicted position for one sample.
    pub fn predict(&self, x: &Array3<T>) -> Result<(f64, f64)> {
        let out = self.forward(x)?;
        Ok((
            out[0].to_f64().expect("finite output"),
            out[1].to_f64().expect("finite output"),
        ))
    }

    /// Accumulate parameter gradients for one sample given the gradient of
    /// the loss with respect to the network output.
    pub fn backward(&self, tape: &Tape<T>, dout: &Array1<T>, grads: &mut CnnGrads<T>) {
        let (dh, dw2, db2) = self.dense2.backward(&tape.h, dout);
        grads.d2_w += &dw2;
        grads.d2_b += &db2;
        let dz1 = relu_backward(&dh, &tape.z1);
        let (dflat, dw1, db1) = self.dense1.backward(&tape.flat, &dz1);
        grads.d1_w += &dw1;
        grads.d1_b += &db1;
        let mut d = dflat
            .into_shape_with_order(tape.out_dim)
            .expect("flatten dims");
        for (i, (conv, cache)) in self.conv.iter().zip(&tape.stages).enumerate().rev() {
            let dpre = maxpool_backward(&d, &cache.argmax, cache.prepool_dim);
            let dz = relu_backward(&dpre, &cache.z);
            let (dx, dw, db) = conv.backward(&dz, &cache.col, cache.input_dim);
            grads.conv_w[i] += &dw;
            grads.conv_b[i] += &db;
            d = dx;
        }
    }
}

impl<T: Scalar> CnnGrads<T> {
    pub fn zeros_like(model: &Cnn<T>) -> Self {
        Self {
            conv_w: model
                .conv
                .iter()
                .map(|c| Array2::zeros(c.weight.dim()))
                .collect(),
            conv_b: model
                .conv
                .iter()
                .map(|c| Array1::zeros(c.bias.len()))
                .collect(),
            d1_w: Array2::zeros(model.dense1.weight.dim()),
            d1_b: Array1::zeros(model.dense1.bias.len()),
            d2_w: Array2::zeros(model.dense2.weight.dim()),
            d2_b: Array1::zeros(model.dense2.bias.len()),
        }
    }

    /// Flat gradient slices in the same order as `Cnn::param_slices`.
    pub fn slices(&self) -> Vec<&[T]> {
        let mut out = Vec::new();
        for (w, b) in self.conv_w.iter().zip(&self.conv_b) {
            out.push(w.as_slice().expect("standard layout"));
            out.push(b.as_slice().expect("standard layout"));
        }
        out.push(self.d1_w.as_slice().expect("standard layout"));
        out.push(self.d1_b.as_slice().expect("standard layout"));
        out.push(self.d2_w.as_slice().expect("standard layout"));
        out.push(self.d2_b.as_slice().expect("standard layout"));
        out
    }

    pub fn scale(&mut self, factor: T) {
        for w in &mut self.conv_w {
            w.mapv_inplace(|v| v * factor);
        }
        for b in &mut self.conv_b {
            b.mapv_inplace(|v| v * factor);
        }
        self.d1_w.mapv_inplace(|v| v * factor);
        self.d1_b.mapv_inplace(|v| v * factor);
        self.d2_w.mapv_inplace(|v| v * factor);
        self.d2_b.mapv_inplace(|v| v * factor);
    }
}

/// Squared-error loss for one sample, in cm^2: ||pred - target||^2.
pub fn sample_loss<T: Scalar>(pred: &Array1<T>, target: &Array1<T>) -> T {
    pred.iter()
        .zip(target.iter())
        .fold(T::zero(), |acc, (&p, &t)| acc + (p - t) * (p - t))
}

/// Gradient of `sample_loss` with respect to the prediction.
pub fn sample_loss_grad<T: Scalar>(pred: &Array1<T>, target: &Array1<T>) -> Array1<T> {
    let two = scalar::<T>(2.0);
    Array1::from_iter(
        pred.iter()
            .zip(target.iter())
            .map(|(&p, &t)| two * (p - t)),
    )
}

/// Turn one complex feature tensor (frames, bins, sensors) into network
/// input channels (C, frames, bins), normalized by the sample's own peak
/// magnitude (samples that are identically zero are divided by one).
pub fn featurize_event<T: Scalar>(view: ArrayView3<'_, Complex32>, mode: InputMode) -> Array3<T> {
    let (h, w, sensors) = view.dim();
    let mut peak = 0.0_f32;
    for v in view.iter() {
        peak = peak.max(v.norm());
    }
    let denom = if peak > 0.0 { peak } else { 1.0 };
    match mode {
        InputMode::Magnitude => Array3::from_shape_fn((sensors, h, w), |(c, i, j)| {
            scalar((view[[i, j, c]].norm() / denom) as f64)
        }),
        InputMode::RealImag => Array3::from_shape_fn((2 * sensors, h, w), |(c, i, j)| {
            let z = view[[i, j, c / 2]];
            let part = if c % 2 == 0 { z.re } else { z.im };
            scalar((part / denom) as f64)
        }),
    }
}

/// Featurize a loaded split into network inputs and (n, 2) cm labels.
pub fn featurize_split<T: Scalar>(
    split: &crate::features::SplitData,
    mode: InputMode,
) -> (Vec<Array3<T>>, Array2<T>) {
    let n = split.n_events();
    let mut xs = Vec::with_capacity(n);
    let mut ys = Array2::zeros((n, 2));
    for i in 0..n {
        xs.push(featurize_event(split.event(i), mode));
        ys[[i, 0]] = scalar(split.meta[i].gt_cm.0);
        ys[[i, 1]] = scalar(split.meta[i].gt_cm.1);
    }
    (xs, ys)
}

const MODEL_MAGIC: &[u8; 8] = b"RTCNNv01";

#[derive(Debug, Serialize, Deserialize)]
struct ModelHeader {
    format_version: u32,
    dtype: String,
    model: ModelConfig,
    input_mode: InputMode,
    param_count: usize,
    sha256: String,
}

/// Serialize a model: 8-byte magic, header length, JSON header, then every
/// parameter as little-endian f32 in canonical order, checksummed.
pub fn save_model<T: Scalar>(model: &Cnn<T>, path: &Path) -> Result<()> {
    let mut blob = Vec::with_capacity(model.param_count() * 4);
    for slice in model.param_slices() {
        for &v in slice {
            blob.extend_from_slice(&(v.to_f32().expect("finite parameter")).to_le_bytes());
        }
    }
    let sha256 = Sha256::digest(&blob)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect::<String>();
    let header = ModelHeader {
        format_version: 1,
        dtype: "f32le".to_string(),
        model: model.config.clone(),
        input_mode: model.input_mode,
        param_count: model.param_count(),
        sha256,
    };
    let header_json = serde_json::to_vec(&header)?;
    let mut out = BufWriter::new(File::create(path)?);
    out.write_all(MODEL_MAGIC)?;
    out.write_all(&(header_json.len() as u32).to_le_bytes())?;
    out.write_all(&header_json)?;
    out.write_all(&blob)?;
    out.flush()?;
    Ok(())
}

/// Load a model saved by `save_model`, verifying magic, version, length,
/// and checksum.
pub fn load_model<T: Scalar>(path: &Path) -> Result<Cnn<T>> {
    if !path.exists() {
        return Err(Error::MissingDependency(format!(
            "model file not found at {}",
            path.display()
        )));
    }
    let mut bytes = Vec::new();
    File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.len() < 12 || &bytes[..8] != MODEL_MAGIC {
        return Err(Error::Corrupt("not a model file (bad magic)".into()));
    }
    let header_len = u32::from_le_bytes([bytes[8], bytes[9], bytes[10], bytes[11]]) as usize;
    if bytes.len() < 12 + header_len {
        return Err(Error::Corrupt("model header truncated".into()));
    }
    let header: ModelHeader = serde_json::from_slice(&bytes[12..12 + header_len])?;
    if header.format_version != 1 || header.dtype != "f32le" {
        return Err(Error::Corrupt(format!(
            "unsupported model format {} / {}",
            header.format_version, header.dtype
        )));
    }
    let blob = &bytes[12 + header_len..];
    if blob.len() != header.param_count * 4 {
        return Err(Error::Corrupt(format!(
            "model blob is {} bytes, expected {}",
            blob.len(),
            header.param_count * 4
        )));
    }
    let sha256 = Sha256::digest(blob)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect::<String>();
    if sha256 != header.sha256 {
        return Err(Error::Corrupt("model blob failed its checksum".into()));
    }
    let mut model = Cnn::<T>::zeros(&header.model, header.input_mode)?;
    if model.param_count() != header.param_count {
        return Err(Error::Corrupt(
            "model architecture does not match stored parameter count".into(),
        ));
    }
    let mut offset = 0usize;
    for slice in model.param_slices_mut() {
        for v in slice.iter_mut() {
            let raw = f32::from_le_bytes([
                blob[offset],
                blob[offset + 1],
                blob[offset + 2],
                blob[offset + 3],
            ]);
            *v = scalar(raw as f64);
            offset += 4;
        }
    }
    Ok(model)
}
