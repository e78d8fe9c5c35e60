//! Inflated-3D feature extractor: blocks of
//! `relu(conv3d) -> max pool -> batch norm -> dropout`, then a global average
//! pool and an optional softmax classifier.
//!
//! The conv step is a single 3-D convolution with the block kernel plus bias.
//! Batch norm precedes dropout inside each block.

use crate::error::{invalid, shape_err, Error, Result};
use crate::rng::SeedRng;
use crate::tensor::{
    batch_norm, conv3d, dropout, global_avg_pool, linear, pool3d_max, relu, softmax, BatchNormParams, ConvSpec,
    Tensor,
};

#[derive(Clone, Debug)]
pub struct I3DBlockParams {
    /// `[C_out, C_in, kt, kh, kw]`
    pub weight: Tensor,
    pub bias: Option<Tensor>,
    pub conv: ConvSpec,
    /// `None` skips pooling.
    pub pool: Option<ConvSpec>,
    pub norm: BatchNormParams,
    pub dropout: f64,
}

impl I3DBlockParams {
    pub fn in_channels(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn out_channels(&self) -> usize {
        self.weight.shape()[0]
    }

    /// 3x3x3 same-padded conv with He-scaled weights, optional pool, identity norm.
    pub fn seeded(cin: usize, cout: usize, pool: Option<ConvSpec>, rng: &mut SeedRng) -> Self {
        let std = (2.0 / (cin * 27) as f64).sqrt();
        Self {
            weight: Tensor::randn(&[cout, cin, 3, 3, 3], std, rng),
            bias: Some(Tensor::zeros(&[cout])),
            conv: ConvSpec::same((3, 3, 3)),
            pool,
            norm: BatchNormParams {
                eps: crate::tensor::BATCH_NORM_EPS,
                ..BatchNormParams::identity(cout)
            },
            dropout: 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct I3DHeadParams {
    /// `[C_final, classes]`
    pub weight: Tensor,
    pub bias: Tensor,
}

pub fn i3d_block(input: &Tensor, p: &I3DBlockParams, seed: u64) -> Result<Tensor> {
    let spec = ConvSpec {
        bias_enabled: p.bias.is_some(),
        ..p.conv
    };
    let mut x = relu(&conv3d(input, &p.weight, p.bias.as_ref(), &spec)?);
    if let Some(pool) = &p.pool {
        x = pool3d_max(&x, pool)?;
    }
    let x = batch_norm(&x, &p.norm)?;
    dropout(&x, p.dropout, seed)
}

/// Blocks in order, then per-channel global average. Block `i` draws its
/// dropout mask from `seed + i`.
pub fn i3d_forward_seeded(clip: &Tensor, blocks: &[I3DBlockParams], seed: u64) -> Result<Tensor> {
    if blocks.is_empty() {
        return invalid("i3d_forward needs at least one block");
    }
    let mut x = clip.clone();
    for (i, b) in blocks.iter().enumerate() {
        x = i3d_block(&x, b, seed.wrapping_add(i as u64)).map_err(|e| match e {
            Error::Shape(m) => Error::Shape(format!("i3d block {i}: {m}")),
            other => other,
        })?;
    }
    global_avg_pool(&x)
}

pub fn i3d_forward(clip: &Tensor, blocks: &[I3DBlockParams]) -> Result<Tensor> {
    i3d_forward_seeded(clip, blocks, 0)
}

/// `softmax(features W_c + b_c)`.
pub fn i3d_classify(features: &Tensor, head: &I3DHeadParams) -> Result<Tensor> {
    if features.rank() != 1 {
        return shape_err(format!("i3d features must be a vector, got {:?}", features.shape()));
    }
    softmax(&linear(features, &head.weight, Some(&head.bias))?, 0)
}

/// Desk-scale stack: channels `in -> 8 -> 16 -> 32`; the first block pools
/// space only, the second space and time, the third not at all.
pub fn default_blocks(in_channels: usize, rng: &mut SeedRng) -> Vec<I3DBlockParams> {
    let space = ConvSpec::new((1, 2, 2)).stride((1, 2, 2));
    let spacetime = ConvSpec::new((2, 2, 2)).stride((2, 2, 2));
    vec![
        I3DBlockParams::seeded(in_channels, 8, Some(space), rng),
        I3DBlockParams::seeded(8, 16, Some(spacetime), rng),
        I3DBlockParams::seeded(16, 32, None, rng),
    ]
}

/// Stand-in features when the 3-D stage is disabled: the time-averaged clip,
/// flattened and averaged into `dim` contiguous bins.
pub fn mean_frame_features(clip: &Tensor, dim: usize) -> Result<Tensor> {
    let (c, t, h, w) = match *clip.shape() {
        [c, t, h, w] => (c, t, h, w),
        ref s => return shape_err(format!("expected [C, T, H, W], got {s:?}")),
    };
    if dim == 0 {
        return invalid("feature dimension must be >= 1");
    }
    let plane = h * w;
    let mut mean = vec![0.0; c * plane];
    for ch in 0..c {
        for f in 0..t {
            let src = &clip.data()[(ch * t + f) * plane..(ch * t + f + 1) * plane];
            for (m, v) in mean[ch * plane..(ch + 1) * plane].iter_mut().zip(src) {
                *m += v / t as f64;
            }
        }
    }
    let n = mean.len();
    let out = (0..dim)
        .map(|b| {
            let lo = b * n / dim;
            let hi = ((b + 1) * n / dim).max(lo + 1).min(n);
            mean[lo.min(n - 1)..hi].iter().sum::<f64>() / (hi - lo.min(n - 1)) as f64
        })
        .collect();
    Ok(Tensor::from_vec(out))
}
