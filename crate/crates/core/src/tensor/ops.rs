use super::{ConvSpec, Tensor};
use crate::error::{invalid, shape_err, Result};
use crate::rng::SeedRng;

pub const BATCH_NORM_EPS: f64 = 1e-5;
pub const LAYER_NORM_EPS: f64 = 1e-5;

fn dims4(t: &Tensor, what: &str) -> Result<(usize, usize, usize, usize)> {
    match *t.shape() {
        [c, d, h, w] => Ok((c, d, h, w)),
        ref s => shape_err(format!("{what} expects [C, T, H, W], got {s:?}")),
    }
}

/// 3-D cross-correlation (no kernel flip) of a `[C_in, T, H, W]` input with
/// `[C_out, C_in, kt, kh, kw]` weights.
pub fn conv3d(input: &Tensor, weight: &Tensor, bias: Option<&Tensor>, spec: &ConvSpec) -> Result<Tensor> {
    let (cin, t, h, w) = dims4(input, "conv3d input")?;
    let (cout, wcin, kt, kh, kw) = match *weight.shape() {
        [a, b, c, d, e] => (a, b, c, d, e),
        ref s => return shape_err(format!("conv3d weight expects [C_out, C_in, kt, kh, kw], got {s:?}")),
    };
    if wcin != cin {
        return shape_err(format!("conv3d input has {cin} channels but weight expects {wcin}"));
    }
    if (kt, kh, kw) != spec.kernel {
        return shape_err(format!(
            "conv3d weight kernel {:?} disagrees with spec kernel {:?}",
            (kt, kh, kw),
            spec.kernel
        ));
    }
    match (bias, spec.bias_enabled) {
        (Some(b), true) if b.shape() != [cout] => {
            return shape_err(format!("conv3d bias shape {:?}, expected [{cout}]", b.shape()))
        }
        (None, true) => return shape_err("conv3d spec enables bias but none was given"),
        (Some(_), false) => return shape_err("conv3d bias given but spec disables it"),
        _ => {}
    }
    let (ot, oh, ow) = spec.output_extents((t, h, w))?;
    let (st, sh, sw) = spec.stride;
    let (pt, ph, pw) = spec.padding;

    let x = input.data();
    let k = weight.data();
    let mut out = vec![0.0; cout * ot * oh * ow];
    let plane_out = ot * oh * ow;
    for oc in 0..cout {
        let dst = &mut out[oc * plane_out..(oc + 1) * plane_out];
        if let Some(b) = bias {
            dst.iter_mut().for_each(|v| *v = b.data()[oc]);
        }
        for ic in 0..cin {
            let src = &x[ic * t * h * w..(ic + 1) * t * h * w];
            for dz in 0..kt {
                for dy in 0..kh {
                    for dx in 0..kw {
                        let wv = k[(((oc * cin + ic) * kt + dz) * kh + dy) * kw + dx];
                        if wv == 0.0 {
                            continue;
                        }
                        for oz in 0..ot {
                            let iz = (oz * st + dz) as isize - pt as isize;
                            if iz < 0 || iz >= t as isize {
                                continue;
                            }
                            for oy in 0..oh {
                                let iy = (oy * sh + dy) as isize - ph as isize;
                                if iy < 0 || iy >= h as isize {
                                    continue;
                                }
                                let row_in = (iz as usize * h + iy as usize) * w;
                                let row_out = (oz * oh + oy) * ow;
                                let (lo, hi) = valid_span(ow, sw, dx, pw, w);
                                if lo >= hi {
                                    continue;
                                }
                                let first = lo * sw + dx - pw;
                                let out_row = &mut dst[row_out + lo..row_out + hi];
                                if sw == 1 {
                                    let in_row = &src[row_in + first..row_in + first + (hi - lo)];
                                    for (o, v) in out_row.iter_mut().zip(in_row) {
                                        *o += wv * v;
                                    }
                                } else {
                                    for (j, o) in out_row.iter_mut().enumerate() {
                                        *o += wv * src[row_in + first + j * sw];
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    Tensor::new(vec![cout, ot, oh, ow], out)
}

/// Output positions `lo..hi` along one axis whose input tap `o*stride + k - pad`
/// lands inside `0..len`.
fn valid_span(out_len: usize, stride: usize, k: usize, pad: usize, len: usize) -> (usize, usize) {
    let lo = if k >= pad { 0 } else { (pad - k).div_ceil(stride) };
    // largest o with o*stride + k - pad <= len - 1
    let hi = if len + pad < k + 1 { 0 } else { ((len + pad - k - 1) / stride + 1).min(out_len) };
    (lo, hi.max(lo))
}

/// Per-channel 3-D max pooling; padded cells never win.
pub fn pool3d_max(input: &Tensor, spec: &ConvSpec) -> Result<Tensor> {
    let (c, t, h, w) = dims4(input, "pool3d_max input")?;
    let (ot, oh, ow) = spec.output_extents((t, h, w))?;
    let (kt, kh, kw) = spec.kernel;
    let (st, sh, sw) = spec.stride;
    let (pt, ph, pw) = spec.padding;
    let x = input.data();
    let mut out = Vec::with_capacity(c * ot * oh * ow);
    for ch in 0..c {
        let base = ch * t * h * w;
        for oz in 0..ot {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut best = f64::NEG_INFINITY;
                    for dz in 0..kt {
                        let iz = (oz * st + dz) as isize - pt as isize;
                        if iz < 0 || iz >= t as isize {
                            continue;
                        }
                        for dy in 0..kh {
                            let iy = (oy * sh + dy) as isize - ph as isize;
                            if iy < 0 || iy >= h as isize {
                                continue;
                            }
                            for dx in 0..kw {
                                let ix = (ox * sw + dx) as isize - pw as isize;
                                if ix < 0 || ix >= w as isize {
                                    continue;
                                }
                                let v = x[base + (iz as usize * h + iy as usize) * w + ix as usize];
                                if v > best {
                                    best = v;
                                }
                            }
                        }
                    }
                    if best == f64::NEG_INFINITY {
                        return shape_err(format!(
                            "pool window at ({oz}, {oy}, {ox}) covers only padding"
                        ));
                    }
                    out.push(best);
                }
            }
        }
    }
    Tensor::new(vec![c, ot, oh, ow], out)
}

pub fn relu(input: &Tensor) -> Tensor {
    input.map(|v| v.max(0.0))
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Inference-mode batch-norm statistics for a channel-first tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchNormParams {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub eps: f64,
}

impl BatchNormParams {
    pub fn identity(channels: usize) -> Self {
        Self {
            mean: vec![0.0; channels],
            var: vec![1.0; channels],
            gamma: vec![1.0; channels],
            beta: vec![0.0; channels],
            eps: 0.0,
        }
    }

    pub fn channels(&self) -> usize {
        self.mean.len()
    }
}

/// `gamma (x - mean) / sqrt(var + eps) + beta` with channels on axis 0.
pub fn batch_norm(input: &Tensor, p: &BatchNormParams) -> Result<Tensor> {
    let c = input.shape()[0];
    for (name, v) in [("mean", &p.mean), ("var", &p.var), ("gamma", &p.gamma), ("beta", &p.beta)] {
        if v.len() != c {
            return shape_err(format!("batch_norm {name} has {} entries for {c} channels", v.len()));
        }
    }
    if let Some(bad) = p.var.iter().find(|v| **v < 0.0 || !v.is_finite()) {
        return invalid(format!("batch_norm variance must be >= 0, got {bad}"));
    }
    if !(p.eps >= 0.0) {
        return invalid(format!("batch_norm eps must be >= 0, got {}", p.eps));
    }
    let inner = input.len() / c;
    let mut out = Vec::with_capacity(input.len());
    for ch in 0..c {
        let denom = (p.var[ch] + p.eps).sqrt();
        if denom == 0.0 {
            return invalid(format!("batch_norm channel {ch} has zero variance and eps"));
        }
        let scale = p.gamma[ch] / denom;
        for &v in &input.data()[ch * inner..(ch + 1) * inner] {
            out.push(scale * (v - p.mean[ch]) + p.beta[ch]);
        }
    }
    Tensor::new(input.shape().to_vec(), out)
}

/// Inverted dropout: zero with probability `p`, scale survivors by `1/(1-p)`.
/// One uniform draw per element, in row-major order, from `SeedRng::new(seed)`.
pub fn dropout(input: &Tensor, p: f64, seed: u64) -> Result<Tensor> {
    if !(0.0..=1.0).contains(&p) {
        return invalid(format!("dropout probability {p} outside [0, 1]"));
    }
    if p == 0.0 {
        return Ok(input.clone());
    }
    if p == 1.0 {
        return Ok(Tensor::zeros(input.shape()));
    }
    let keep = 1.0 / (1.0 - p);
    let mut rng = SeedRng::new(seed);
    Ok(input.map(|v| if rng.uniform() < p { 0.0 } else { v * keep }))
}

/// Per-channel mean over every non-channel axis; `[C, ...] -> [C]`.
pub fn global_avg_pool(input: &Tensor) -> Result<Tensor> {
    if input.rank() < 2 {
        return shape_err(format!("global_avg_pool needs rank >= 2, got {:?}", input.shape()));
    }
    let c = input.shape()[0];
    let inner = input.len() / c;
    let data = input
        .data()
        .chunks(inner)
        .map(|ch| ch.iter().sum::<f64>() / inner as f64)
        .collect();
    Tensor::new(vec![c], data)
}

fn axis_layout(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let n = shape[axis];
    let inner = shape[axis + 1..].iter().product();
    (outer, n, inner)
}

/// Max-subtracted softmax along `axis`.
pub fn softmax(input: &Tensor, axis: usize) -> Result<Tensor> {
    if axis >= input.rank() {
        return shape_err(format!("softmax axis {axis} out of range for {:?}", input.shape()));
    }
    let (outer, n, inner) = axis_layout(input.shape(), axis);
    let x = input.data();
    let mut out = vec![0.0; x.len()];
    for o in 0..outer {
        for i in 0..inner {
            let idx = |k: usize| (o * n + k) * inner + i;
            let m = (0..n).map(|k| x[idx(k)]).fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for k in 0..n {
                let e = (x[idx(k)] - m).exp();
                out[idx(k)] = e;
                sum += e;
            }
            for k in 0..n {
                out[idx(k)] /= sum;
            }
        }
    }
    Tensor::new(input.shape().to_vec(), out)
}

pub fn softmax_vec(logits: &[f64]) -> Vec<f64> {
    softmax(&Tensor::from_vec(logits.to_vec()), 0)
        .expect("rank-1 softmax")
        .into_data()
}

/// Normalise each row over the last axis, then apply `gamma`/`beta`.
pub fn layer_norm(input: &Tensor, gamma: &[f64], beta: &[f64], eps: f64) -> Result<Tensor> {
    let d = *input.shape().last().expect("rank >= 1");
    if gamma.len() != d || beta.len() != d {
        return shape_err(format!(
            "layer_norm affine lengths ({}, {}) differ from row width {d}",
            gamma.len(),
            beta.len()
        ));
    }
    let mut out = Vec::with_capacity(input.len());
    for row in input.data().chunks(d) {
        let mean = row.iter().sum::<f64>() / d as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
        let inv = 1.0 / (var + eps).sqrt();
        for (j, &v) in row.iter().enumerate() {
            out.push(gamma[j] * (v - mean) * inv + beta[j]);
        }
    }
    Tensor::new(input.shape().to_vec(), out)
}

/// `x W + b` over the last axis; weight is `[d_in, d_out]`.
pub fn linear(input: &Tensor, weight: &Tensor, bias: Option<&Tensor>) -> Result<Tensor> {
    let (din, dout) = match *weight.shape() {
        [a, b] => (a, b),
        ref s => return shape_err(format!("linear weight must be [d_in, d_out], got {s:?}")),
    };
    let last = *input.shape().last().expect("rank >= 1");
    if last != din {
        return shape_err(format!(
            "linear input width {last} does not match weight d_in {din}"
        ));
    }
    if let Some(b) = bias {
        if b.shape() != [dout] {
            return shape_err(format!("linear bias shape {:?}, expected [{dout}]", b.shape()));
        }
    }
    let rows = input.len() / din;
    let w = weight.data();
    let mut out = vec![0.0; rows * dout];
    for (r, x) in input.data().chunks(din).enumerate() {
        let dst = &mut out[r * dout..(r + 1) * dout];
        if let Some(b) = bias {
            dst.copy_from_slice(b.data());
        }
        for (i, &xi) in x.iter().enumerate() {
            if xi == 0.0 {
                continue;
            }
            let wrow = &w[i * dout..(i + 1) * dout];
            for (o, wv) in dst.iter_mut().zip(wrow) {
                *o += xi * wv;
            }
        }
    }
    let mut shape = input.shape().to_vec();
    *shape.last_mut().unwrap() = dout;
    Tensor::new(shape, out)
}

/// `[m, k] x [k, n]`.
pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.rank() != 2 {
        return shape_err(format!("matmul lhs must be rank 2, got {:?}", a.shape()));
    }
    linear(a, b, None)
}

/// Nearest-neighbour resampling of the last two axes to `(out_h, out_w)`.
/// Source index is `floor((i + 0.5) * in / out)`.
pub fn resize_nearest(input: &Tensor, out_h: usize, out_w: usize) -> Result<Tensor> {
    if input.rank() < 2 || out_h == 0 || out_w == 0 {
        return shape_err(format!(
            "resize_nearest of {:?} to {out_h}x{out_w}",
            input.shape()
        ));
    }
    let r = input.rank();
    let (h, w) = (input.shape()[r - 2], input.shape()[r - 1]);
    let planes = input.len() / (h * w);
    let ys: Vec<usize> = (0..out_h).map(|i| nearest_src(i, h, out_h)).collect();
    let xs: Vec<usize> = (0..out_w).map(|j| nearest_src(j, w, out_w)).collect();
    let mut out = Vec::with_capacity(planes * out_h * out_w);
    for p in 0..planes {
        let plane = &input.data()[p * h * w..(p + 1) * h * w];
        for &y in &ys {
            for &x in &xs {
                out.push(plane[y * w + x]);
            }
        }
    }
    let mut shape = input.shape().to_vec();
    shape[r - 2] = out_h;
    shape[r - 1] = out_w;
    Tensor::new(shape, out)
}

pub(crate) fn nearest_src(i: usize, len_in: usize, len_out: usize) -> usize {
    (((i as f64 + 0.5) * len_in as f64 / len_out as f64).floor() as usize).min(len_in - 1)
}
