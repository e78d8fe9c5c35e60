//! Trainable linear heads and their analytic losses. Parameters flatten as
//! the row-major `[d_in, d_out]` weight followed by the bias.

use crate::detection::{sigmoid_box_grad, smooth_l1, smooth_l1_grad, BoundingBox};
use crate::error::{invalid, shape_err, Result};
use crate::tensor::{sigmoid, softmax_vec, Tensor};

#[derive(Clone, Debug, PartialEq)]
pub struct LinearHead {
    /// `[d_in, d_out]`
    pub weight: Tensor,
    pub bias: Tensor,
}

impl LinearHead {
    pub fn zeros(d_in: usize, d_out: usize) -> Self {
        Self { weight: Tensor::zeros(&[d_in, d_out]), bias: Tensor::zeros(&[d_out]) }
    }

    pub fn from_parts(weight: Tensor, bias: Tensor) -> Result<Self> {
        if weight.rank() != 2 || bias.shape() != [weight.shape()[1]] {
            return shape_err(format!("head weight {:?} / bias {:?}", weight.shape(), bias.shape()));
        }
        Ok(Self { weight, bias })
    }

    pub fn d_in(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn d_out(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn param_count(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    pub fn params(&self) -> Vec<f64> {
        let mut p = self.weight.data().to_vec();
        p.extend_from_slice(self.bias.data());
        p
    }

    pub fn set_params(&mut self, p: &[f64]) -> Result<()> {
        if p.len() != self.param_count() {
            return shape_err(format!("{} parameters for a head of {}", p.len(), self.param_count()));
        }
        let n = self.weight.len();
        self.weight = Tensor::new(self.weight.shape().to_vec(), p[..n].to_vec())?;
        self.bias = Tensor::new(self.bias.shape().to_vec(), p[n..].to_vec())?;
        Ok(())
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        affine(&self.params(), x, self.d_out())
    }
}

/// `x W + b` from a flat parameter vector.
pub fn affine(params: &[f64], x: &[f64], d_out: usize) -> Vec<f64> {
    let d_in = x.len();
    let mut y = params[d_in * d_out..d_in * d_out + d_out].to_vec();
    for (i, &xi) in x.iter().enumerate() {
        if xi != 0.0 {
            let row = &params[i * d_out..(i + 1) * d_out];
            for (o, w) in y.iter_mut().zip(row) {
                *o += xi * w;
            }
        }
    }
    y
}

/// Accumulates `scale * outer(x, dy)` and `scale * dy` into a flat gradient.
fn accumulate(grad: &mut [f64], x: &[f64], dy: &[f64], scale: f64) {
    let d_out = dy.len();
    for (i, &xi) in x.iter().enumerate() {
        let row = &mut grad[i * d_out..(i + 1) * d_out];
        for (g, d) in row.iter_mut().zip(dy) {
            *g += scale * xi * d;
        }
    }
    let n = x.len() * d_out;
    for (g, d) in grad[n..n + d_out].iter_mut().zip(dy) {
        *g += scale * d;
    }
}

fn check_len(params: &[f64], d_in: usize, d_out: usize) -> Result<()> {
    if params.len() != (d_in + 1) * d_out {
        return shape_err(format!("{} parameters for a {d_in}->{d_out} head", params.len()));
    }
    Ok(())
}

/// Cross-entropy of `softmax(x W + b)` against `label`, with its gradient
/// `(p - onehot)` spread over the parameters.
pub fn softmax_ce(params: &[f64], x: &[f64], label: usize, classes: usize) -> Result<(f64, Vec<f64>)> {
    check_len(params, x.len(), classes)?;
    if label >= classes {
        return invalid(format!("label {label} outside {classes} classes"));
    }
    let p = softmax_vec(&affine(params, x, classes));
    let loss = -p[label].max(f64::MIN_POSITIVE).ln();
    let mut dy = p;
    dy[label] -= 1.0;
    let mut grad = vec![0.0; params.len()];
    accumulate(&mut grad, x, &dy, 1.0);
    Ok((loss, grad))
}

/// Half mean squared error of `x W + b` against `target`.
pub fn squared_error(params: &[f64], x: &[f64], target: &[f64]) -> Result<(f64, Vec<f64>)> {
    let d_out = target.len();
    check_len(params, x.len(), d_out)?;
    let y = affine(params, x, d_out);
    let n = d_out as f64;
    let mut loss = 0.0;
    let dy: Vec<f64> = y
        .iter()
        .zip(target)
        .map(|(a, b)| {
            loss += 0.5 * (a - b) * (a - b) / n;
            (a - b) / n
        })
        .collect();
    let mut grad = vec![0.0; params.len()];
    accumulate(&mut grad, x, &dy, 1.0);
    Ok((loss, grad))
}

/// Mean two-class cross-entropy over every cell; cells listed in `positive`
/// are foreground.
pub fn anchor_classification(params: &[f64], cells: &Tensor, positive: &[usize]) -> Result<(f64, Vec<f64>)> {
    let (n, c) = cell_dims(cells)?;
    check_len(params, c, 2)?;
    let mut grad = vec![0.0; params.len()];
    let mut loss = 0.0;
    for (i, row) in cells.data().chunks(c).enumerate() {
        let label = positive.contains(&i) as usize;
        let (l, g) = softmax_ce(params, row, label, 2)?;
        loss += l / n as f64;
        for (a, b) in grad.iter_mut().zip(g) {
            *a += b / n as f64;
        }
    }
    Ok((loss, grad))
}

/// Mean smooth-L1 over the coordinates of `sigmoid(x W + b) * anchor` for the
/// matched `(cell, target)` pairs.
pub fn anchor_regression(
    params: &[f64],
    cells: &Tensor,
    anchors: &[BoundingBox],
    matches: &[(usize, BoundingBox)],
) -> Result<(f64, Vec<f64>)> {
    let (n, c) = cell_dims(cells)?;
    check_len(params, c, 4)?;
    if anchors.len() != n {
        return shape_err(format!("{n} cells for {} anchors", anchors.len()));
    }
    let mut grad = vec![0.0; params.len()];
    if matches.is_empty() {
        return Ok((0.0, grad));
    }
    let scale = 1.0 / (4.0 * matches.len() as f64);
    let mut loss = 0.0;
    for (cell, target) in matches {
        let x = &cells.data()[cell * c..(cell + 1) * c];
        let z = affine(params, x, 4);
        let a = anchors[*cell].coords();
        let t = target.coords();
        let mut dz = [0.0; 4];
        for k in 0..4 {
            let d = sigmoid(z[k]) * a[k] - t[k];
            loss += smooth_l1(d) * scale;
            dz[k] = smooth_l1_grad(d) * sigmoid_box_grad(z[k], a[k]);
        }
        accumulate(&mut grad, x, &dz, scale);
    }
    Ok((loss, grad))
}

fn cell_dims(cells: &Tensor) -> Result<(usize, usize)> {
    match *cells.shape() {
        [n, c] if n > 0 => Ok((n, c)),
        ref s => shape_err(format!("cell features must be [N, C], got {s:?}")),
    }
}

/// Per-dimension standardization fitted on training rows.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureScaler {
    pub mean: Vec<f64>,
    pub inv_std: Vec<f64>,
}

impl FeatureScaler {
    pub fn identity(dim: usize) -> Self {
        Self { mean: vec![0.0; dim], inv_std: vec![1.0; dim] }
    }

    pub fn fit<'a>(rows: impl IntoIterator<Item = &'a [f64]>) -> Result<Self> {
        let rows: Vec<&[f64]> = rows.into_iter().collect();
        let Some(first) = rows.first() else {
            return invalid("cannot fit a scaler on zero rows");
        };
        let d = first.len();
        let n = rows.len() as f64;
        let mut mean = vec![0.0; d];
        for r in &rows {
            for (m, v) in mean.iter_mut().zip(r.iter()) {
                *m += v / n;
            }
        }
        let mut var = vec![0.0; d];
        for r in &rows {
            for ((s, v), m) in var.iter_mut().zip(r.iter()).zip(&mean) {
                *s += (v - m) * (v - m) / n;
            }
        }
        let inv_std = var.iter().map(|v| if *v > 1e-18 { 1.0 / v.sqrt() } else { 1.0 }).collect();
        Ok(Self { mean, inv_std })
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.mean).zip(&self.inv_std).map(|((v, m), s)| (v - m) * s).collect()
    }

    /// Row-wise standardization of an `[N, d]` tensor.
    pub fn apply_rows(&self, rows: &Tensor) -> Result<Tensor> {
        let d = self.mean.len();
        if rows.rank() != 2 || rows.shape()[1] != d {
            return shape_err(format!("scaler of width {d} on {:?}", rows.shape()));
        }
        let data = rows.data().chunks(d).flat_map(|r| self.apply(r)).collect();
        Tensor::new(rows.shape().to_vec(), data)
    }
}
