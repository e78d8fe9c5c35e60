//! Space-time transformer encoder over patch tokens.
//!
//! Tokens are laid out as an optional summary token (index 0) followed by
//! patch tokens in `(frame, row, col)` order. Attention is single-head with
//! `d_k = d_model`. Each encoder block computes
//!
//! ```text
//! Z = softmax(Q K^T / sqrt(d_k)) V
//! H = LayerNorm(Z + X)
//! Y = LayerNorm(ReLU(H W1 + b1) W2 + b2 + H)
//! ```
//!
//! where `X` is the block input (the patch embedding for the first block).
//! The attention step can be restricted to groups of tokens:
//! [`AttentionMode::Temporal`] attends across frames at one grid position,
//! [`AttentionMode::Spatial`] across positions within one frame, and
//! [`AttentionMode::Divided`] runs a temporal block then a spatial block with
//! the same parameters. A divided pass skips a sub-block whose groups would
//! all be singletons (one frame, or a 1x1 grid), keeping one pass when both
//! would be skipped. The summary token forms its
//! own group in the restricted modes.

use crate::error::{invalid, shape_err, Result};
use crate::rng::SeedRng;
use crate::tensor::{layer_norm, linear, relu, softmax, Tensor, LAYER_NORM_EPS};

pub const D_MODEL: usize = 32;
pub const ENCODER_BLOCKS: usize = 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TokenLayout {
    pub frames: usize,
    pub grid_h: usize,
    pub grid_w: usize,
    pub patch: usize,
    pub summary: bool,
}

impl TokenLayout {
    pub fn patch_tokens(&self) -> usize {
        self.frames * self.grid_h * self.grid_w
    }

    pub fn tokens(&self) -> usize {
        self.patch_tokens() + usize::from(self.summary)
    }

    fn patch_index(&self, t: usize, i: usize, j: usize) -> usize {
        usize::from(self.summary) + (t * self.grid_h + i) * self.grid_w + j
    }

    /// Restricted passes a divided block runs, in order. A pass whose groups
    /// would all be singletons is dropped, but at least one pass always runs.
    pub fn divided_passes(&self) -> Vec<AttentionMode> {
        let mut passes = Vec::with_capacity(2);
        if self.frames > 1 {
            passes.push(AttentionMode::Temporal);
        }
        if self.grid_h * self.grid_w > 1 || passes.is_empty() {
            passes.push(AttentionMode::Spatial);
        }
        passes
    }

    /// Token index groups for one attention pass.
    pub fn groups(&self, mode: AttentionMode) -> Vec<Vec<usize>> {
        let mut groups = Vec::new();
        if self.summary && mode != AttentionMode::Joint {
            groups.push(vec![0]);
        }
        match mode {
            AttentionMode::Joint => groups.push((0..self.tokens()).collect()),
            AttentionMode::Temporal => {
                for i in 0..self.grid_h {
                    for j in 0..self.grid_w {
                        groups.push((0..self.frames).map(|t| self.patch_index(t, i, j)).collect());
                    }
                }
            }
            AttentionMode::Spatial => {
                for t in 0..self.frames {
                    let mut g = Vec::with_capacity(self.grid_h * self.grid_w);
                    for i in 0..self.grid_h {
                        for j in 0..self.grid_w {
                            g.push(self.patch_index(t, i, j));
                        }
                    }
                    groups.push(g);
                }
            }
            AttentionMode::Divided => unreachable!("divided mode is two passes"),
        }
        groups
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TokenSequence {
    /// `[S, d_model]`
    pub tokens: Tensor,
    pub layout: Option<TokenLayout>,
}

impl TokenSequence {
    pub fn new(tokens: Tensor, layout: Option<TokenLayout>) -> Result<Self> {
        if tokens.rank() != 2 {
            return shape_err(format!("token sequence must be [S, d], got {:?}", tokens.shape()));
        }
        if let Some(l) = layout {
            if l.frames == 0 || l.grid_h == 0 || l.grid_w == 0 {
                return invalid(format!("token layout has a zero extent: {l:?}"));
            }
            if l.tokens() != tokens.shape()[0] {
                return shape_err(format!(
                    "layout describes {} tokens but sequence has {}",
                    l.tokens(),
                    tokens.shape()[0]
                ));
            }
        }
        Ok(Self { tokens, layout })
    }

    pub fn len(&self) -> usize {
        self.tokens.shape()[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn width(&self) -> usize {
        self.tokens.shape()[1]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AttentionMode {
    Joint,
    Temporal,
    Spatial,
    Divided,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EncoderParams {
    pub wq: Tensor,
    pub bq: Tensor,
    pub wk: Tensor,
    pub bk: Tensor,
    pub wv: Tensor,
    pub bv: Tensor,
    pub w1: Tensor,
    pub b1: Tensor,
    pub w2: Tensor,
    pub b2: Tensor,
    pub ln1_gamma: Vec<f64>,
    pub ln1_beta: Vec<f64>,
    pub ln2_gamma: Vec<f64>,
    pub ln2_beta: Vec<f64>,
    pub eps: f64,
}

impl EncoderParams {
    pub fn d_model(&self) -> usize {
        self.wq.shape()[0]
    }

    pub fn seeded(d: usize, hidden: usize, rng: &mut SeedRng) -> Self {
        let sd = 1.0 / (d as f64).sqrt();
        let sh = 1.0 / (hidden as f64).sqrt();
        Self {
            wq: Tensor::randn(&[d, d], sd, rng),
            bq: Tensor::zeros(&[d]),
            wk: Tensor::randn(&[d, d], sd, rng),
            bk: Tensor::zeros(&[d]),
            wv: Tensor::randn(&[d, d], sd, rng),
            bv: Tensor::zeros(&[d]),
            w1: Tensor::randn(&[d, hidden], sd, rng),
            b1: Tensor::zeros(&[hidden]),
            w2: Tensor::randn(&[hidden, d], sh, rng),
            b2: Tensor::zeros(&[d]),
            ln1_gamma: vec![1.0; d],
            ln1_beta: vec![0.0; d],
            ln2_gamma: vec![1.0; d],
            ln2_beta: vec![0.0; d],
            eps: LAYER_NORM_EPS,
        }
    }
}

/// Split `[C, T, H, W]` into `P x P` patches, flatten each as `(c, y, x)`,
/// project to `d_model` and add the positional row.
pub fn patch_embed(
    clip: &Tensor,
    patch: usize,
    proj_weight: &Tensor,
    proj_bias: &Tensor,
    pos_enc: &Tensor,
) -> Result<TokenSequence> {
    let (c, t, h, w) = match *clip.shape() {
        [c, t, h, w] => (c, t, h, w),
        ref s => return shape_err(format!("patch_embed expects [C, T, H, W], got {s:?}")),
    };
    if patch == 0 || h % patch != 0 || w % patch != 0 {
        return invalid(format!("patch size {patch} must divide frame extents {h}x{w}"));
    }
    let (gh, gw) = (h / patch, w / patch);
    let layout = TokenLayout {
        frames: t,
        grid_h: gh,
        grid_w: gw,
        patch,
        summary: false,
    };
    let n = layout.patch_tokens();
    let pdim = c * patch * patch;
    if pos_enc.shape()[0] != n {
        return shape_err(format!("positional table has {} rows for {n} patches", pos_enc.shape()[0]));
    }
    let x = clip.data();
    let mut flat = Vec::with_capacity(n * pdim);
    for f in 0..t {
        for i in 0..gh {
            for j in 0..gw {
                for ch in 0..c {
                    for y in 0..patch {
                        let row = ((ch * t + f) * h + i * patch + y) * w + j * patch;
                        flat.extend_from_slice(&x[row..row + patch]);
                    }
                }
            }
        }
    }
    let patches = Tensor::new(vec![n, pdim], flat)?;
    let tokens = linear(&patches, proj_weight, Some(proj_bias))?.add(pos_enc)?;
    TokenSequence::new(tokens, Some(layout))
}

fn rows(t: &Tensor, idx: &[usize]) -> Result<Tensor> {
    let d = t.shape()[1];
    let mut data = Vec::with_capacity(idx.len() * d);
    for &i in idx {
        data.extend_from_slice(&t.data()[i * d..(i + 1) * d]);
    }
    Tensor::new(vec![idx.len(), d], data)
}

/// Attention output `Z` and attention matrix `A` for `[S, d]` tokens.
pub fn attention_weights(tokens: &Tensor, p: &EncoderParams) -> Result<(Tensor, Tensor)> {
    if tokens.rank() != 2 || tokens.shape()[1] != p.d_model() {
        return shape_err(format!(
            "attention over {:?} tokens with d_model {}",
            tokens.shape(),
            p.d_model()
        ));
    }
    let s = tokens.shape()[0];
    let d = p.d_model();
    let q = linear(tokens, &p.wq, Some(&p.bq))?;
    let k = linear(tokens, &p.wk, Some(&p.bk))?;
    let v = linear(tokens, &p.wv, Some(&p.bv))?;
    let scale = 1.0 / (d as f64).sqrt();
    let mut scores = vec![0.0; s * s];
    for i in 0..s {
        let qi = &q.data()[i * d..(i + 1) * d];
        for j in 0..s {
            let kj = &k.data()[j * d..(j + 1) * d];
            scores[i * s + j] = qi.iter().zip(kj).map(|(a, b)| a * b).sum::<f64>() * scale;
        }
    }
    let a = softmax(&Tensor::new(vec![s, s], scores)?, 1)?;
    let mut z = vec![0.0; s * d];
    for i in 0..s {
        let zi = &mut z[i * d..(i + 1) * d];
        for j in 0..s {
            let aij = a.data()[i * s + j];
            for (o, vv) in zi.iter_mut().zip(&v.data()[j * d..(j + 1) * d]) {
                *o += aij * vv;
            }
        }
    }
    Ok((Tensor::new(vec![s, d], z)?, a))
}

pub fn self_attention(tokens: &Tensor, p: &EncoderParams) -> Result<Tensor> {
    attention_weights(tokens, p).map(|(z, _)| z)
}

fn grouped_attention(seq: &TokenSequence, p: &EncoderParams, mode: AttentionMode) -> Result<Tensor> {
    if mode == AttentionMode::Joint {
        return self_attention(&seq.tokens, p);
    }
    let layout = seq
        .layout
        .ok_or_else(|| crate::Error::InvalidArgument(format!("{mode:?} attention needs token layout metadata")))?;
    let d = seq.width();
    let mut z = vec![0.0; seq.len() * d];
    for group in layout.groups(mode) {
        let zg = self_attention(&rows(&seq.tokens, &group)?, p)?;
        for (r, &i) in group.iter().enumerate() {
            z[i * d..(i + 1) * d].copy_from_slice(&zg.data()[r * d..(r + 1) * d]);
        }
    }
    Tensor::new(vec![seq.len(), d], z)
}

fn block_pass(seq: &TokenSequence, p: &EncoderParams, mode: AttentionMode) -> Result<TokenSequence> {
    let z = grouped_attention(seq, p, mode)?;
    let h = layer_norm(&z.add(&seq.tokens)?, &p.ln1_gamma, &p.ln1_beta, p.eps)?;
    let f = linear(&relu(&linear(&h, &p.w1, Some(&p.b1))?), &p.w2, Some(&p.b2))?;
    let y = layer_norm(&f.add(&h)?, &p.ln2_gamma, &p.ln2_beta, p.eps)?;
    TokenSequence::new(y, seq.layout)
}

/// One encoder block; see the module docs for the attention modes.
pub fn encoder_block(seq: &TokenSequence, p: &EncoderParams, mode: AttentionMode) -> Result<TokenSequence> {
    if seq.width() != p.d_model() {
        return shape_err(format!("token width {} but d_model {}", seq.width(), p.d_model()));
    }
    if mode != AttentionMode::Divided {
        return block_pass(seq, p, mode);
    }
    let layout = seq
        .layout
        .ok_or_else(|| crate::Error::InvalidArgument("divided attention needs token layout metadata".into()))?;
    let mut out = seq.clone();
    for pass in layout.divided_passes() {
        out = block_pass(&out, p, pass)?;
    }
    Ok(out)
}

pub fn mean_token(tokens: &Tensor) -> Result<Tensor> {
    if tokens.rank() != 2 {
        return shape_err(format!("expected [S, d] tokens, got {:?}", tokens.shape()));
    }
    let (s, d) = (tokens.shape()[0], tokens.shape()[1]);
    let mut m = vec![0.0; d];
    for row in tokens.data().chunks(d) {
        for (a, v) in m.iter_mut().zip(row) {
            *a += v;
        }
    }
    Ok(Tensor::from_vec(m.into_iter().map(|v| v / s as f64).collect()))
}

/// Mean-pool, linear, softmax.
pub fn classify_sequence(tokens: &Tensor, weight: &Tensor, bias: &Tensor) -> Result<Tensor> {
    if tokens.rank() != 2 || tokens.shape()[0] == 0 {
        return invalid("classify_sequence needs a nonempty [S, d] sequence");
    }
    softmax(&linear(&mean_token(tokens)?, weight, Some(bias))?, 0)
}

/// Prepend one summary token projected from a clip-level feature vector.
pub fn with_summary(seq: &TokenSequence, features: &Tensor, weight: &Tensor, bias: &Tensor) -> Result<TokenSequence> {
    let token = linear(features, weight, Some(bias))?;
    if token.len() != seq.width() {
        return shape_err(format!("summary token width {} vs d_model {}", token.len(), seq.width()));
    }
    let mut data = token.into_data();
    data.extend_from_slice(seq.tokens.data());
    let layout = seq.layout.map(|l| TokenLayout { summary: true, ..l });
    TokenSequence::new(Tensor::new(vec![seq.len() + 1, seq.width()], data)?, layout)
}

#[derive(Clone, Debug)]
pub struct TemporalConfig {
    pub patch: usize,
    pub d_model: usize,
    pub hidden: usize,
    pub blocks: usize,
    pub mode: AttentionMode,
    pub summary_token: bool,
}

impl Default for TemporalConfig {
    fn default() -> Self {
        Self {
            patch: 4,
            d_model: D_MODEL,
            hidden: 2 * D_MODEL,
            blocks: ENCODER_BLOCKS,
            mode: AttentionMode::Divided,
            summary_token: true,
        }
    }
}

/// Patch embedding, optional summary token and the encoder stack.
#[derive(Clone, Debug)]
pub struct TemporalEncoder {
    pub config: TemporalConfig,
    pub proj_weight: Tensor,
    pub proj_bias: Tensor,
    pub pos_enc: Tensor,
    pub summary_weight: Tensor,
    pub summary_bias: Tensor,
    pub blocks: Vec<EncoderParams>,
}

impl TemporalEncoder {
    /// Sizes the positional table for `[channels, frames, h, w]` clips and a
    /// `feature_dim`-wide summary input.
    pub fn seeded(
        config: TemporalConfig,
        clip_shape: (usize, usize, usize, usize),
        feature_dim: usize,
        rng: &mut SeedRng,
    ) -> Self {
        let (c, t, h, w) = clip_shape;
        let p = config.patch;
        let d = config.d_model;
        let pdim = c * p * p;
        let n = t * (h / p) * (w / p);
        let blocks = (0..config.blocks)
            .map(|_| EncoderParams::seeded(d, config.hidden, rng))
            .collect();
        Self {
            proj_weight: Tensor::randn(&[pdim, d], 1.0 / (pdim as f64).sqrt(), rng),
            proj_bias: Tensor::zeros(&[d]),
            pos_enc: Tensor::randn(&[n, d], 1.0, rng),
            summary_weight: Tensor::randn(&[feature_dim, d], 1.0 / (feature_dim as f64).sqrt(), rng),
            summary_bias: Tensor::zeros(&[d]),
            blocks,
            config,
        }
    }

    /// Input tokens before any encoder block.
    pub fn embed(&self, clip: &Tensor, features: Option<&Tensor>) -> Result<TokenSequence> {
        let seq = patch_embed(clip, self.config.patch, &self.proj_weight, &self.proj_bias, &self.pos_enc)?;
        match (self.config.summary_token, features) {
            (true, Some(f)) => with_summary(&seq, f, &self.summary_weight, &self.summary_bias),
            _ => Ok(seq),
        }
    }

    pub fn encode(&self, clip: &Tensor, features: Option<&Tensor>) -> Result<TokenSequence> {
        let mut seq = self.embed(clip, features)?;
        for b in &self.blocks {
            seq = encoder_block(&seq, b, self.config.mode)?;
        }
        Ok(seq)
    }
}

/// Write class probabilities as `clip_id,class_id,probability`.
pub fn write_probabilities_csv<W: std::io::Write>(
    mut w: W,
    rows: &[(String, Vec<f64>)],
    comment: Option<&str>,
) -> Result<()> {
    if let Some(c) = comment {
        writeln!(w, "# {c}")?;
    }
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["clip_id", "class_id", "probability"])?;
    for (clip, probs) in rows {
        for (k, p) in probs.iter().enumerate() {
            out.write_record([clip.clone(), k.to_string(), format!("{p:.8}")])?;
        }
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(d: usize, seed: u64) -> EncoderParams {
        EncoderParams::seeded(d, 2 * d, &mut SeedRng::new(seed))
    }

    #[test]
    fn patch_embed_counts_and_zero_case() {
        let d = 4;
        let mut rng = SeedRng::new(1);
        let clip = Tensor::uniform(&[1, 3, 4, 4], 0.0, 1.0, &mut rng);
        let seq = patch_embed(&clip, 4, &Tensor::zeros(&[16, d]), &Tensor::zeros(&[d]), &Tensor::zeros(&[3, d])).unwrap();
        assert_eq!(seq.len(), 3);

        let pos = Tensor::randn(&[18, d], 1.0, &mut rng);
        let seq = patch_embed(&Tensor::zeros(&[1, 3, 4, 6]), 2, &Tensor::zeros(&[4, d]), &Tensor::zeros(&[d]), &pos).unwrap();
        assert_eq!(seq.tokens, pos);
        assert!(patch_embed(&clip, 3, &Tensor::zeros(&[9, d]), &Tensor::zeros(&[d]), &Tensor::zeros(&[3, d])).is_err());
    }

    #[test]
    fn attention_single_and_identical_tokens() {
        let p = params(4, 2);
        let x = Tensor::new(vec![1, 4], vec![0.3, -1.0, 2.0, 0.5]).unwrap();
        let z = self_attention(&x, &p).unwrap();
        let v = linear(&x, &p.wv, Some(&p.bv)).unwrap();
        assert!(z.max_abs_diff(&v) < 1e-15);

        let rows: Vec<f64> = (0..5).flat_map(|_| x.data().to_vec()).collect();
        let xs = Tensor::new(vec![5, 4], rows).unwrap();
        let z = self_attention(&xs, &p).unwrap();
        for r in 0..5 {
            for c in 0..4 {
                assert!((z.at(&[r, c]) - v.data()[c]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn restricted_modes_need_layout() {
        let p = params(4, 3);
        let seq = TokenSequence::new(Tensor::zeros(&[3, 4]), None).unwrap();
        assert!(encoder_block(&seq, &p, AttentionMode::Divided).is_err());
        assert!(encoder_block(&seq, &p, AttentionMode::Temporal).is_err());
        assert!(encoder_block(&seq, &p, AttentionMode::Joint).is_ok());
    }

    #[test]
    fn groups_partition_tokens() {
        let l = TokenLayout {
            frames: 3,
            grid_h: 2,
            grid_w: 2,
            patch: 2,
            summary: true,
        };
        for mode in [AttentionMode::Temporal, AttentionMode::Spatial, AttentionMode::Joint] {
            let mut all: Vec<usize> = l.groups(mode).concat();
            all.sort();
            assert_eq!(all, (0..13).collect::<Vec<_>>());
        }
        assert_eq!(l.groups(AttentionMode::Temporal)[1], vec![1, 5, 9]);
        assert_eq!(l.groups(AttentionMode::Spatial)[1], vec![1, 2, 3, 4]);
    }

    #[test]
    fn classify_cases() {
        let mut rng = SeedRng::new(4);
        let toks = Tensor::randn(&[5, 3], 1.0, &mut rng);
        let p = classify_sequence(&toks, &Tensor::zeros(&[3, 4]), &Tensor::zeros(&[4])).unwrap();
        assert!(p.data().iter().all(|&v| (v - 0.25).abs() < 1e-15));
        let p = classify_sequence(&toks, &Tensor::zeros(&[3, 2]), &Tensor::from_vec(vec![0.0, 3f64.ln()])).unwrap();
        assert!((p.data()[1] - 0.75).abs() < 1e-15);
        let w = Tensor::randn(&[3, 4], 1.0, &mut rng);
        let a = classify_sequence(&toks, &w, &Tensor::zeros(&[4])).unwrap();
        let b = classify_sequence(&toks, &w, &Tensor::full(&[4], 7.5)).unwrap();
        assert!(a.max_abs_diff(&b) < 1e-12);
    }

    #[test]
    fn encoder_shapes_and_determinism() {
        let mut rng = SeedRng::new(5);
        let enc = TemporalEncoder::seeded(TemporalConfig::default(), (1, 4, 8, 8), 32, &mut rng);
        let clip = Tensor::uniform(&[1, 4, 8, 8], 0.0, 1.0, &mut rng);
        let f = Tensor::randn(&[32], 1.0, &mut rng);
        let a = enc.encode(&clip, Some(&f)).unwrap();
        assert_eq!(a.tokens.shape(), &[4 * 4 + 1, 32]);
        assert_eq!(a, enc.encode(&clip, Some(&f)).unwrap());
        assert!(a.tokens.is_finite());
    }
}
