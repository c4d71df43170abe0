//! Neural-network primitives: 2-D convolution via im2col and matrix
//! multiplication, 2x2 max pooling with cached argmax, ReLU, and dense
//! layers. Everything is generic over the float type so gradients can be
//! validated in f64 while training runs in f32.

use ndarray::{Array1, Array2, Array3, ScalarOperand};
use num_traits::Float;

use crate::config::Padding;
use crate::error::{Error, Result};

/// Float scalar usable by the network: ndarray linear algebra plus the
/// numeric conversions the optimizer needs.
pub trait Scalar:
    Float
    + num_traits::NumAssignOps
    + ndarray::LinalgScalar
    + ScalarOperand
    + std::fmt::Debug
    + std::fmt::Display
    + Send
    + Sync
    + 'static
{
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Cast an f64 constant into the network scalar type.
pub(crate) fn scalar<T: Scalar>(v: f64) -> T {
    T::from(v).expect("f64 representable in scalar type")
}

/// Output spatial size of a convolution along one axis.
pub fn conv_out_len(input: usize, kernel: usize, padding: Padding) -> usize {
    match padding {
        Padding::Valid => input + 1 - kernel.min(input + 1),
        Padding::Same => input,
    }
}

/// Leading zero padding along one axis for `Same` convolutions (the
/// trailing padding is `kernel - 1 - pad_before`).
fn pad_before(kernel: usize, padding: Padding) -> usize {
    match padding {
        Padding::Valid => 0,
        Padding::Same => (kernel - 1) / 2,
    }
}

/// The contiguous output-column span `[ox0, ox1)` whose input column
/// `ox + dj - pad` stays inside `[0, w)`, so a whole row of patch entries is
/// one slice copy.
fn ox_span(dj: usize, pad: usize, w: usize, w_out: usize) -> (usize, usize) {
    let ox0 = pad.saturating_sub(dj);
    let ox1 = (w + pad - dj).min(w_out);
    (ox0, ox1.max(ox0))
}

/// Expand input patches into a (C_in * k * k, H_out * W_out) matrix so the
/// convolution becomes a single matrix product.
pub fn im2col<T: Scalar>(x: &Array3<T>, kernel: usize, padding: Padding) -> Array2<T> {
    let (c_in, h, w) = x.dim();
    let h_out = conv_out_len(h, kernel, padding);
    let w_out = conv_out_len(w, kernel, padding);
    let pad = pad_before(kernel, padding);
    let mut col = Array2::zeros((c_in * kernel * kernel, h_out * w_out));
    let x_flat = x.as_slice().expect("standard-layout conv input");
    let col_flat = col.as_slice_mut().expect("standard-layout col");
    let plane = h * w;
    let out_plane = h_out * w_out;
    for c in 0..c_in {
        for di in 0..kernel {
            for dj in 0..kernel {
                let row = (c * kernel + di) * kernel + dj;
                let (ox0, ox1) = ox_span(dj, pad, w, w_out);
                if ox1 == ox0 {
                    continue;
                }
                let len = ox1 - ox0;
                for oy in 0..h_out {
                    let iy = oy + di;
                    if iy < pad || iy - pad >= h {
                        continue;
                    }
                    let src = c * plane + (iy - pad) * w + (ox0 + dj - pad);
                    let dst = row * out_plane + oy * w_out + ox0;
                    col_flat[dst..dst + len].copy_from_slice(&x_flat[src..src + len]);
                }
            }
        }
    }
    col
}

/// Scatter-add a column-space gradient back onto the input layout; the
/// adjoint of `im2col`.
pub fn col2im<T: Scalar>(
    dcol: &Array2<T>,
    input_dim: (usize, usize, usize),
    kernel: usize,
    padding: Padding,
) -> Array3<T> {
    let (c_in, h, w) = input_dim;
    let h_out = conv_out_len(h, kernel, padding);
    let w_out = conv_out_len(w, kernel, padding);
    let pad = pad_before(kernel, padding);
    let mut dx = Array3::zeros(input_dim);
    let dcol_flat = dcol.as_slice().expect("standard-layout dcol");
    let dx_flat = dx.as_slice_mut().expect("standard-layout dx");
    let plane = h * w;
    let out_plane = h_out * w_out;
    for c in 0..c_in {
        for di in 0..kernel {
            for dj in 0..kernel {
                let row = (c * kernel + di) * kernel + dj;
                let (ox0, ox1) = ox_span(dj, pad, w, w_out);
                if ox1 == ox0 {
                    continue;
                }
                let len = ox1 - ox0;
                for oy in 0..h_out {
                    let iy = oy + di;
                    if iy < pad || iy - pad >= h {
                        continue;
                    }
                    let dst = c * plane + (iy - pad) * w + (ox0 + dj - pad);
                    let src = row * out_plane + oy * w_out + ox0;
                    for (d, &g) in dx_flat[dst..dst + len]
                        .iter_mut()
                        .zip(&dcol_flat[src..src + len])
                    {
                        *d += g;
                    }
                }
            }
        }
    }
    dx
}

/// Convolution layer holding its weights as a (C_out, C_in * k * k) matrix
/// ready for the im2col product.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d<T> {
    pub weight: Array2<T>,
    pub bias: Array1<T>,
    pub c_in: usize,
    pub c_out: usize,
    pub kernel: usize,
    pub padding: Padding,
}

impl<T: Scalar> Conv2d<T> {
    pub fn zeros(c_in: usize, c_out: usize, kernel: usize, padding: Padding) -> Self {
        Self {
            weight: Array2::zeros((c_out, c_in * kernel * kernel)),
            bias: Array1::zeros(c_out),
            c_in,
            c_out,
            kernel,
            padding,
        }
    }

    pub fn param_count(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    /// Pre-activation output (C_out, H_out, W_out) plus the column matrix
    /// cached for the backward pass.
    pub fn forward(&self, x: &Array3<T>) -> Result<(Array3<T>, Array2<T>)> {
        let (c_in, h, w) = x.dim();
        if c_in != self.c_in {
            return Err(Error::ShapeMismatch(format!(
                "conv expects {} input channels, got {c_in}",
                self.c_in
            )));
        }
        let h_out = conv_out_len(h, self.kernel, self.padding);
        let w_out = conv_out_len(w, self.kernel, self.padding);
        if h_out == 0 || w_out == 0 {
            return Err(Error::ShapeMismatch(format!(
                "conv input {h}x{w} too small for kernel {}",
                self.kernel
            )));
        }
        let col = im2col(x, self.kernel, self.padding);
        let mut out2 = self.weight.dot(&col);
        for (mut row, &b) in out2.rows_mut().into_iter().zip(self.bias.iter()) {
            row.mapv_inplace(|v| v + b);
        }
        let out = out2
            .into_shape_with_order((self.c_out, h_out, w_out))
            .expect("conv output reshape");
        Ok((out, col))
    }

    /// Gradients of weights, bias, and input given the pre-activation
    /// gradient `dz` and the cached column matrix.
    pub fn backward(
        &self,
        dz: &Array3<T>,
        col: &Array2<T>,
        input_dim: (usize, usize, usize),
    ) -> (Array3<T>, Array2<T>, Array1<T>) {
        let (c_out, h_out, w_out) = dz.dim();
        let dz2 = dz
            .view()
            .into_shape_with_order((c_out, h_out * w_out))
            .expect("contiguous dz");
        let dw = dz2.dot(&col.t());
        let db = dz2.sum_axis(ndarray::Axis(1));
        let dcol = self.weight.t().dot(&dz2);
        let dx = col2im(&dcol, input_dim, self.kernel, self.padding);
        (dx, dw, db)
    }
}

/// 2x2-style max pooling with stride equal to the pool size; trailing rows
/// and columns that do not fill a window are dropped. Returns the pooled
/// map and the flat (h * W + w) input index of each maximum for the
/// backward scatter.
pub fn maxpool<T: Scalar>(x: &Array3<T>, pool: usize) -> (Array3<T>, Array3<usize>) {
    let (c, h, w) = x.dim();
    let (hp, wp) = (h / pool, w / pool);
    let mut out = Array3::zeros((c, hp, wp));
    let mut argmax = Array3::zeros((c, hp, wp));
    let x_flat = x.as_slice().expect("standard-layout pool input");
    let out_flat = out.as_slice_mut().expect("standard-layout pool output");
    let arg_flat = argmax.as_slice_mut().expect("standard-layout pool argmax");
    let plane = h * w;
    let out_plane = hp * wp;
    for ci in 0..c {
        let x_plane = &x_flat[ci * plane..(ci + 1) * plane];
        for oy in 0..hp {
            let dst_row = ci * out_plane + oy * wp;
            for ox in 0..wp {
                let start = oy * pool * w + ox * pool;
                let mut best = x_plane[start];
                let mut best_idx = start;
                for dy in 0..pool {
                    let row0 = (oy * pool + dy) * w + ox * pool;
                    for (dx, &v) in x_plane[row0..row0 + pool].iter().enumerate() {
                        if v > best {
                            best = v;
                            best_idx = row0 + dx;
                        }
                    }
                }
                out_flat[dst_row + ox] = best;
                arg_flat[dst_row + ox] = best_idx;
            }
        }
    }
    (out, argmax)
}

/// Route pooled gradients back to the argmax positions.
pub fn maxpool_backward<T: Scalar>(
    dy: &Array3<T>,
    argmax: &Array3<usize>,
    input_dim: (usize, usize, usize),
) -> Array3<T> {
    let (_, _, w) = input_dim;
    let mut dx = Array3::zeros(input_dim);
    for ((c, oy, ox), &g) in dy.indexed_iter() {
        let idx = argmax[[c, oy, ox]];
        dx[[c, idx / w, idx % w]] += g;
    }
    dx
}

/// Elementwise max(0, x).
pub fn relu<T: Scalar, D: ndarray::Dimension>(
    x: &ndarray::Array<T, D>,
) -> ndarray::Array<T, D> {
    x.mapv(|v| if v > T::zero() { v } else { T::zero() })
}

/// Gradient mask of ReLU evaluated at pre-activation `z`: passes `dy`
/// where z > 0.
pub fn relu_backward<T: Scalar, D: ndarray::Dimension>(
    dy: &ndarray::Array<T, D>,
    z: &ndarray::Array<T, D>,
) -> ndarray::Array<T, D> {
    let mut out = dy.clone();
    ndarray::Zip::from(&mut out).and(z).for_each(|d, &zv| {
        if zv <= T::zero() {
            *d = T::zero();
        }
    });
    out
}

/// Fully connected layer, weight shape (out, in).
#[derive(Debug, Clone, PartialEq)]
pub struct Dense<T> {
    pub weight: Array2<T>,
    pub bias: Array1<T>,
}

impl<T: Scalar> Dense<T> {
    pub fn zeros(n_in: usize, n_out: usize) -> Self {
        Self {
            weight: Array2::zeros((n_out, n_in)),
            bias: Array1::zeros(n_out),
        }
    }

    pub fn param_count(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    pub fn forward(&self, x: &Array1<T>) -> Array1<T> {
        self.weight.dot(x) + &self.bias
    }

    /// Gradients of input, weight, and bias for output gradient `dy`.
    pub fn backward(&self, x: &Array1<T>, dy: &Array1<T>) -> (Array1<T>, Array2<T>, Array1<T>) {
        let dx = self.weight.t().dot(dy);
        let dw = dy
            .view()
            .insert_axis(ndarray::Axis(1))
            .dot(&x.view().insert_axis(ndarray::Axis(0)));
        (dx, dw, dy.clone())
    }
}
