//! Training loop (Adam, shuffled mini-batches, best-validation
//! checkpointing) and the single-sample inference latency benchmark.

use std::time::Instant;

use ndarray::{Array1, Array2, Array3};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::{BenchmarkConfig, TrainConfig};
use crate::error::{Error, Result};
use crate::metrics::percentile_nearest_rank;

use super::layers::{scalar, Scalar};
use super::{sample_loss, sample_loss_grad, Cnn, CnnGrads};

/// Adam optimizer state; moments are kept per parameter tensor in the
/// model's canonical slice order.
pub struct Adam<T> {
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
    t: u64,
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
}

impl<T: Scalar> Adam<T> {
    pub fn new(model: &Cnn<T>, lr: f64) -> Self {
        let shapes: Vec<usize> = model.param_slices().iter().map(|s| s.len()).collect();
        Self {
            m: shapes.iter().map(|&n| vec![T::zero(); n]).collect(),
            v: shapes.iter().map(|&n| vec![T::zero(); n]).collect(),
            t: 0,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    /// One update from already batch-averaged gradients.
    pub fn step(&mut self, model: &mut Cnn<T>, grads: &CnnGrads<T>) {
        self.t += 1;
        let b1 = scalar::<T>(self.beta1);
        let b2 = scalar::<T>(self.beta2);
        let one = T::one();
        // Bias-corrected step size.
        let corr1 = 1.0 - self.beta1.powi(self.t as i32);
        let corr2 = 1.0 - self.beta2.powi(self.t as i32);
        let alpha = scalar::<T>(self.lr * corr2.sqrt() / corr1);
        let eps = scalar::<T>(self.eps);
        let grad_slices = grads.slices();
        for ((slice, grad), (m, v)) in model
            .param_slices_mut()
            .into_iter()
            .zip(grad_slices)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            for i in 0..slice.len() {
                let g = grad[i];
                m[i] = b1 * m[i] + (one - b1) * g;
                v[i] = b2 * v[i] + (one - b2) * g * g;
                slice[i] = slice[i] - alpha * m[i] / (v[i].sqrt() + eps);
            }
        }
    }
}

/// Loss and timing of one epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    /// Mean per-sample squared error over the epoch's training batches,
    /// cm^2, measured with the parameters current at each batch.
    pub train_loss_cm2: f64,
    /// Full validation loss after the epoch, cm^2.
    pub val_loss_cm2: f64,
    pub seconds: f64,
}

/// Everything the training run produced besides the weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochStats>,
    pub best_epoch: usize,
    pub best_val_loss_cm2: f64,
    pub total_seconds: f64,
    pub param_count: usize,
    pub n_train: usize,
    pub n_val: usize,
    pub seed: u64,
}

/// Mean per-sample squared error (cm^2) of the model over a set.
pub fn evaluate_loss<T: Scalar>(
    model: &Cnn<T>,
    xs: &[Array3<T>],
    ys: &Array2<T>,
) -> Result<f64> {
    if xs.is_empty() {
        return Err(Error::Train("cannot evaluate an empty set".into()));
    }
    let mut total = 0.0_f64;
    for (i, x) in xs.iter().enumerate() {
        let pred = model.forward(x)?;
        let target = Array1::from_vec(vec![ys[[i, 0]], ys[[i, 1]]]);
        total += sample_loss(&pred, &target).to_f64().expect("finite loss");
    }
    Ok(total / xs.len() as f64)
}

/// Train with Adam on shuffled mini-batches, evaluating the validation set
/// after every epoch and restoring the best-validation parameters at the
/// end. Aborts with an error if the loss stops being finite.
pub fn train<T: Scalar>(
    model: &mut Cnn<T>,
    train_x: &[Array3<T>],
    train_y: &Array2<T>,
    val_x: &[Array3<T>],
    val_y: &Array2<T>,
    config: &TrainConfig,
) -> Result<TrainReport> {
    config.validate()?;
    if train_x.is_empty() || val_x.is_empty() {
        return Err(Error::Train("training and validation sets must be nonempty".into()));
    }
    if train_x.len() != train_y.dim().0 || val_x.len() != val_y.dim().0 {
        return Err(Error::ShapeMismatch(
            "label count does not match sample count".into(),
        ));
    }
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut adam = Adam::new(model, config.learning_rate);
    let mut indices: Vec<usize> = (0..train_x.len()).collect();
    let mut epochs = Vec::with_capacity(config.epochs);
    let mut best_val = f64::INFINITY;
    let mut best_epoch = 0usize;
    let mut best_params = model.snapshot();

    for epoch in 1..=config.epochs {
        let epoch_start = Instant::now();
        indices.shuffle(&mut rng);
        let mut epoch_loss = 0.0_f64;
        for batch in indices.chunks(config.batch_size) {
            let mut grads = CnnGrads::zeros_like(model);
            let mut batch_loss = 0.0_f64;
            for &i in batch {
                let (pred, tape) = model.forward_cached(&train_x[i])?;
                let target = Array1::from_vec(vec![train_y[[i, 0]], train_y[[i, 1]]]);
                batch_loss += sample_loss(&pred, &target).to_f64().expect("finite");
                let dout = sample_loss_grad(&pred, &target);
                model.backward(&tape, &dout, &mut grads);
            }
            if !batch_loss.is_finite() {
                return Err(Error::Train(format!(
                    "loss diverged (non-finite) in epoch {epoch}"
                )));
            }
            grads.scale(scalar::<T>(1.0 / batch.len() as f64));
            adam.step(model, &grads);
            epoch_loss += batch_loss;
        }
        let train_loss = epoch_loss / train_x.len() as f64;
        let val_loss = evaluate_loss(model, val_x, val_y)?;
        if !val_loss.is_finite() {
            return Err(Error::Train(format!(
                "validation loss diverged (non-finite) after epoch {epoch}"
            )));
        }
        if val_loss < best_val {
            best_val = val_loss;
            best_epoch = epoch;
            best_params = model.snapshot();
        }
        epochs.push(EpochStats {
            epoch,
            train_loss_cm2: train_loss,
            val_loss_cm2: val_loss,
            seconds: epoch_start.elapsed().as_secs_f64(),
        });
    }
    model.restore(&best_params)?;
    Ok(TrainReport {
        epochs,
        best_epoch,
        best_val_loss_cm2: best_val,
        total_seconds: start.elapsed().as_secs_f64(),
        param_count: model.param_count(),
        n_train: train_x.len(),
        n_val: val_x.len(),
        seed: config.seed,
    })
}

/// Latency distribution of repeated single-sample forward passes on the
/// calling thread.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyStats {
    pub median_ms: f64,
    pub p90_ms: f64,
    pub mean_ms: f64,
    pub min_ms: f64,
    pub max_ms: f64,
    pub trials: usize,
    pub samples_ms: Vec<f64>,
}

/// Time single-sample inference: `warmup` untimed passes, then
/// `latency_trials` timed ones. Everything runs on the calling thread.
pub fn benchmark_inference<T: Scalar>(
    model: &Cnn<T>,
    input: &Array3<T>,
    config: &BenchmarkConfig,
) -> Result<LatencyStats> {
    if config.latency_trials == 0 {
        return Err(Error::Config("latency_trials must be >= 1".into()));
    }
    let mut sink = T::zero();
    for _ in 0..config.warmup {
        let out = model.forward(input)?;
        sink = sink + out[0];
    }
    let mut samples = Vec::with_capacity(config.latency_trials);
    for _ in 0..config.latency_trials {
        let t0 = Instant::now();
        let out = model.forward(input)?;
        let dt = t0.elapsed();
        sink = sink + out[0];
        samples.push(dt.as_secs_f64() * 1e3);
    }
    // Keep the accumulated outputs observable so the passes cannot be
    // optimized away.
    if !sink.to_f64().unwrap_or(0.0).is_finite() {
        return Err(Error::Train("non-finite inference output".into()));
    }
    let mean = samples.iter().sum::<f64>() / samples.len() as f64;
    Ok(LatencyStats {
        median_ms: percentile_nearest_rank(&samples, 0.5)?,
        p90_ms: percentile_nearest_rank(&samples, 0.9)?,
        mean_ms: mean,
        min_ms: samples.iter().cloned().fold(f64::INFINITY, f64::min),
        max_ms: samples.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        trials: samples.len(),
        samples_ms: samples,
    })
}
