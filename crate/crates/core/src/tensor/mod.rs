//! Dense row-major `f64` tensors and the kernels the pipeline is built from.
//!
//! Layouts are unbatched and channel-first: a clip is `[C, T, H, W]`, a frame
//! `[C, H, W]`, a token sequence `[S, d]`.

mod io;
mod ops;

pub use io::{load_tensor, read_tensor, save_tensor, tensor_from_bytes, tensor_to_bytes, write_tensor};
pub use ops::*;

use crate::error::{shape_err, Result};
use crate::rng::SeedRng;

pub const MAX_RANK: usize = 5;

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.is_empty() || shape.len() > MAX_RANK {
            return shape_err(format!("rank {} outside 1..={MAX_RANK}", shape.len()));
        }
        if shape.contains(&0) {
            return shape_err(format!("zero extent in shape {shape:?}"));
        }
        let n: usize = shape.iter().product();
        if n != data.len() {
            return shape_err(format!(
                "shape {shape:?} holds {n} values but {} were given",
                data.len()
            ));
        }
        Ok(Self { shape, data })
    }

    pub fn full(shape: &[usize], value: f64) -> Self {
        let n = shape.iter().product();
        Self::new(shape.to_vec(), vec![value; n]).expect("valid shape")
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, 0.0)
    }

    pub fn from_vec(data: Vec<f64>) -> Self {
        let n = data.len();
        Self::new(vec![n], data).expect("nonempty vector")
    }

    /// Standard-normal entries scaled by `std`.
    pub fn randn(shape: &[usize], std: f64, rng: &mut SeedRng) -> Self {
        let n: usize = shape.iter().product();
        let data = (0..n).map(|_| rng.normal() * std).collect();
        Self::new(shape.to_vec(), data).expect("valid shape")
    }

    pub fn uniform(shape: &[usize], lo: f64, hi: f64, rng: &mut SeedRng) -> Self {
        let n: usize = shape.iter().product();
        let data = (0..n).map(|_| rng.range(lo, hi)).collect();
        Self::new(shape.to_vec(), data).expect("valid shape")
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn reshape(self, shape: Vec<usize>) -> Result<Self> {
        Self::new(shape, self.data)
    }

    pub fn strides(&self) -> Vec<usize> {
        let mut strides = vec![1; self.shape.len()];
        for i in (0..self.shape.len().saturating_sub(1)).rev() {
            strides[i] = strides[i + 1] * self.shape[i + 1];
        }
        strides
    }

    pub fn offset(&self, index: &[usize]) -> usize {
        debug_assert_eq!(index.len(), self.shape.len());
        index
            .iter()
            .zip(self.strides())
            .map(|(i, s)| i * s)
            .sum()
    }

    pub fn at(&self, index: &[usize]) -> f64 {
        self.data[self.offset(index)]
    }

    pub fn map(&self, mut f: impl FnMut(f64) -> f64) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_with(&self, other: &Tensor, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        if self.shape != other.shape {
            return shape_err(format!(
                "elementwise op on mismatched shapes {:?} and {:?}",
                self.shape, other.shape
            ));
        }
        Ok(Self {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn add(&self, other: &Tensor) -> Result<Self> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn scale(&self, k: f64) -> Self {
        self.map(|v| v * k)
    }

    pub fn max_abs_diff(&self, other: &Tensor) -> f64 {
        assert_eq!(self.shape, other.shape, "max_abs_diff on mismatched shapes");
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Slice along axis 0.
    pub fn index_axis0(&self, i: usize) -> Result<Self> {
        if i >= self.shape[0] {
            return shape_err(format!("index {i} out of range for axis 0 of {:?}", self.shape));
        }
        let inner: usize = self.shape[1..].iter().product();
        let shape = if self.shape.len() == 1 {
            vec![1]
        } else {
            self.shape[1..].to_vec()
        };
        Self::new(shape, self.data[i * inner..(i + 1) * inner].to_vec())
    }

    /// Stack equal-shaped tensors along a new leading axis.
    pub fn stack(items: &[Tensor]) -> Result<Self> {
        let first = match items.first() {
            Some(t) => t,
            None => return shape_err("stack of zero tensors"),
        };
        let mut data = Vec::with_capacity(first.len() * items.len());
        for t in items {
            if t.shape != first.shape {
                return shape_err(format!(
                    "stack of mismatched shapes {:?} and {:?}",
                    first.shape, t.shape
                ));
            }
            data.extend_from_slice(&t.data);
        }
        let mut shape = vec![items.len()];
        shape.extend_from_slice(&first.shape);
        Self::new(shape, data)
    }

    /// 2-D transpose.
    pub fn transpose(&self) -> Result<Self> {
        if self.rank() != 2 {
            return shape_err(format!("transpose needs rank 2, got {:?}", self.shape));
        }
        let (r, c) = (self.shape[0], self.shape[1]);
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = self.data[i * c + j];
            }
        }
        Self::new(vec![c, r], out)
    }
}

/// Kernel, stride and zero-padding for a 3-D window over `(T, H, W)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvSpec {
    pub kernel: (usize, usize, usize),
    pub stride: (usize, usize, usize),
    pub padding: (usize, usize, usize),
    pub bias_enabled: bool,
}

impl ConvSpec {
    pub fn new(kernel: (usize, usize, usize)) -> Self {
        Self {
            kernel,
            stride: (1, 1, 1),
            padding: (0, 0, 0),
            bias_enabled: true,
        }
    }

    pub fn stride(mut self, stride: (usize, usize, usize)) -> Self {
        self.stride = stride;
        self
    }

    pub fn padding(mut self, padding: (usize, usize, usize)) -> Self {
        self.padding = padding;
        self
    }

    pub fn bias(mut self, enabled: bool) -> Self {
        self.bias_enabled = enabled;
        self
    }

    /// Padding that keeps extents at stride 1 (odd kernels).
    pub fn same(kernel: (usize, usize, usize)) -> Self {
        Self::new(kernel).padding((kernel.0 / 2, kernel.1 / 2, kernel.2 / 2))
    }

    /// `floor((in + 2 pad - k) / stride) + 1` per axis.
    pub fn output_extents(&self, input: (usize, usize, usize)) -> Result<(usize, usize, usize)> {
        let k = [self.kernel.0, self.kernel.1, self.kernel.2];
        let s = [self.stride.0, self.stride.1, self.stride.2];
        let p = [self.padding.0, self.padding.1, self.padding.2];
        let i = [input.0, input.1, input.2];
        let mut out = [0usize; 3];
        for a in 0..3 {
            if k[a] == 0 || s[a] == 0 {
                return shape_err(format!("kernel and stride must be >= 1, got {:?}", self));
            }
            let padded = i[a] + 2 * p[a];
            if k[a] > padded {
                return shape_err(format!(
                    "kernel extent {} exceeds padded input extent {} on axis {a}",
                    k[a], padded
                ));
            }
            out[a] = (padded - k[a]) / s[a] + 1;
        }
        Ok((out[0], out[1], out[2]))
    }
}
