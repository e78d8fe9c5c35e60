//! Nested-loop reference implementations. Written against raw index
//! arithmetic only; nothing here calls into the kernels it checks.

use eitnet_core::eval::SyntheticAction;
use eitnet_core::Tensor;

pub fn idx(shape: &[usize], index: &[usize]) -> usize {
    let mut off = 0;
    for (d, i) in shape.iter().zip(index) {
        off = off * d + i;
    }
    off
}

pub fn conv3d(
    x: &Tensor,
    k: &Tensor,
    bias: Option<&[f64]>,
    stride: [usize; 3],
    pad: [usize; 3],
) -> (Vec<usize>, Vec<f64>) {
    let xs = x.shape();
    let ks = k.shape();
    let (cin, cout) = (xs[0], ks[0]);
    let ext = [xs[1], xs[2], xs[3]];
    let ker = [ks[2], ks[3], ks[4]];
    let mut o = [0usize; 3];
    for a in 0..3 {
        o[a] = (ext[a] + 2 * pad[a] - ker[a]) / stride[a] + 1;
    }
    let shape = vec![cout, o[0], o[1], o[2]];
    let mut out = vec![0.0; cout * o[0] * o[1] * o[2]];
    for oc in 0..cout {
        for z in 0..o[0] {
            for y in 0..o[1] {
                for xx in 0..o[2] {
                    let mut acc = bias.map(|b| b[oc]).unwrap_or(0.0);
                    for ic in 0..cin {
                        for a in 0..ker[0] {
                            for b in 0..ker[1] {
                                for c in 0..ker[2] {
                                    let iz = (z * stride[0] + a) as i64 - pad[0] as i64;
                                    let iy = (y * stride[1] + b) as i64 - pad[1] as i64;
                                    let ix = (xx * stride[2] + c) as i64 - pad[2] as i64;
                                    if iz < 0 || iy < 0 || ix < 0 {
                                        continue;
                                    }
                                    let (iz, iy, ix) = (iz as usize, iy as usize, ix as usize);
                                    if iz >= ext[0] || iy >= ext[1] || ix >= ext[2] {
                                        continue;
                                    }
                                    acc += x.data()[idx(xs, &[ic, iz, iy, ix])]
                                        * k.data()[idx(ks, &[oc, ic, a, b, c])];
                                }
                            }
                        }
                    }
                    out[idx(&shape, &[oc, z, y, xx])] = acc;
                }
            }
        }
    }
    (shape, out)
}

pub fn pool3d_max(x: &Tensor, ker: [usize; 3], stride: [usize; 3]) -> (Vec<usize>, Vec<f64>) {
    let xs = x.shape();
    let ext = [xs[1], xs[2], xs[3]];
    let mut o = [0usize; 3];
    for a in 0..3 {
        o[a] = (ext[a] - ker[a]) / stride[a] + 1;
    }
    let shape = vec![xs[0], o[0], o[1], o[2]];
    let mut out = Vec::new();
    for c in 0..xs[0] {
        for z in 0..o[0] {
            for y in 0..o[1] {
                for xx in 0..o[2] {
                    let mut vals = Vec::new();
                    for a in 0..ker[0] {
                        for b in 0..ker[1] {
                            for d in 0..ker[2] {
                                vals.push(
                                    x.data()[idx(
                                        xs,
                                        &[c, z * stride[0] + a, y * stride[1] + b, xx * stride[2] + d],
                                    )],
                                );
                            }
                        }
                    }
                    vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
                    out.push(*vals.last().unwrap());
                }
            }
        }
    }
    (shape, out)
}

pub fn linear(x: &[f64], rows: usize, din: usize, w: &[f64], dout: usize, b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; rows * dout];
    for r in 0..rows {
        for o in 0..dout {
            let mut acc = b[o];
            for i in 0..din {
                acc += x[r * din + i] * w[i * dout + o];
            }
            out[r * dout + o] = acc;
        }
    }
    out
}

pub fn softmax_rows(x: &[f64], rows: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; rows * n];
    for r in 0..rows {
        let denom: f64 = (0..n).map(|j| x[r * n + j].exp()).sum();
        for j in 0..n {
            out[r * n + j] = x[r * n + j].exp() / denom;
        }
    }
    out
}

pub fn batch_norm(x: &Tensor, mean: &[f64], var: &[f64], gamma: &[f64], beta: &[f64], eps: f64) -> Vec<f64> {
    let c = x.shape()[0];
    let inner = x.len() / c;
    let mut out = vec![0.0; x.len()];
    for ch in 0..c {
        for i in 0..inner {
            let v = x.data()[ch * inner + i];
            out[ch * inner + i] = gamma[ch] * (v - mean[ch]) / (var[ch] + eps).sqrt() + beta[ch];
        }
    }
    out
}

pub fn layer_norm(x: &[f64], rows: usize, d: usize, gamma: &[f64], beta: &[f64], eps: f64) -> Vec<f64> {
    let mut out = vec![0.0; rows * d];
    for r in 0..rows {
        let row = &x[r * d..(r + 1) * d];
        let mut mean = 0.0;
        for v in row {
            mean += v;
        }
        mean /= d as f64;
        let mut var = 0.0;
        for v in row {
            var += (v - mean).powi(2);
        }
        var /= d as f64;
        for j in 0..d {
            out[r * d + j] = gamma[j] * (row[j] - mean) / (var + eps).sqrt() + beta[j];
        }
    }
    out
}

pub fn global_avg_pool(x: &Tensor) -> Vec<f64> {
    let c = x.shape()[0];
    let inner = x.len() / c;
    (0..c)
        .map(|ch| {
            let mut s = 0.0;
            for i in 0..inner {
                s += x.data()[ch * inner + i];
            }
            s / inner as f64
        })
        .collect()
}

/// Single-head attention with explicit loops over queries and keys.
#[allow(clippy::too_many_arguments)]
pub fn attention(
    x: &[f64],
    s: usize,
    d: usize,
    wq: &[f64],
    bq: &[f64],
    wk: &[f64],
    bk: &[f64],
    wv: &[f64],
    bv: &[f64],
) -> (Vec<f64>, Vec<f64>) {
    let q = linear(x, s, d, wq, d, bq);
    let k = linear(x, s, d, wk, d, bk);
    let v = linear(x, s, d, wv, d, bv);
    let mut scores = vec![0.0; s * s];
    for i in 0..s {
        for j in 0..s {
            let mut dot = 0.0;
            for c in 0..d {
                dot += q[i * d + c] * k[j * d + c];
            }
            scores[i * s + j] = dot / (d as f64).sqrt();
        }
    }
    let a = softmax_rows(&scores, s, s);
    let mut z = vec![0.0; s * d];
    for i in 0..s {
        for c in 0..d {
            let mut acc = 0.0;
            for j in 0..s {
                acc += a[i * s + j] * v[j * d + c];
            }
            z[i * d + c] = acc;
        }
    }
    (a, z)
}

/// Bitwise reflected CRC-32 (polynomial 0xEDB88320).
pub fn crc32(bytes: &[u8]) -> u32 {
    let mut crc = 0xFFFF_FFFFu32;
    for &b in bytes {
        crc ^= b as u32;
        for _ in 0..8 {
            crc = if crc & 1 != 0 { (crc >> 1) ^ 0xEDB8_8320 } else { crc >> 1 };
        }
    }
    !crc
}

/// Median of each k x k neighbourhood (replicated border) by full sort.
pub fn median_filter(img: &[f64], h: usize, w: usize, k: usize) -> Vec<f64> {
    let r = (k / 2) as i64;
    let mut out = vec![0.0; h * w];
    for y in 0..h as i64 {
        for x in 0..w as i64 {
            let mut vals = Vec::new();
            for dy in -r..=r {
                for dx in -r..=r {
                    let yy = (y + dy).clamp(0, h as i64 - 1) as usize;
                    let xx = (x + dx).clamp(0, w as i64 - 1) as usize;
                    vals.push(img[yy * w + xx]);
                }
            }
            vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
            out[y as usize * w + x as usize] = vals[vals.len() / 2];
        }
    }
    out
}

pub fn max_abs(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn trajectory(s: &SyntheticAction) -> Vec<f64> {
    s.poses.iter().flat_map(|p| p.joints.iter().flatten().copied()).collect()
}

/// Nearest class centroid on raw pose trajectories, fitted on training groups.
pub fn centroid_accuracy(data: &[SyntheticAction], train: impl Fn(&SyntheticAction) -> bool) -> f64 {
    let dim = trajectory(&data[0]).len();
    let mut sums = vec![vec![0.0; dim]; 4];
    let mut counts = [0usize; 4];
    for s in data.iter().filter(|s| train(s)) {
        let k = s.label.index();
        for (a, v) in sums[k].iter_mut().zip(trajectory(s)) {
            *a += v;
        }
        counts[k] += 1;
    }
    for (k, c) in sums.iter_mut().enumerate() {
        for v in c.iter_mut() {
            *v /= counts[k] as f64;
        }
    }
    let test: Vec<&SyntheticAction> = data.iter().filter(|s| !train(s)).collect();
    let mut correct = 0;
    for s in &test {
        let x = trajectory(s);
        let mut best = (f64::INFINITY, 0);
        for (k, c) in sums.iter().enumerate() {
            let d: f64 = x.iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum();
            if d < best.0 {
                best = (d, k);
            }
        }
        correct += (best.1 == s.label.index()) as usize;
    }
    100.0 * correct as f64 / test.len() as f64
}
