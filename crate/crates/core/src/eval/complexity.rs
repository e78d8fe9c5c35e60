//! Parameter and multiply-accumulate accounting from layer shapes alone.
//!
//! Conventions: a MAC is one multiply-add. Bias additions, activations,
//! pooling and softmax cost nothing. Norm layers cost one MAC per element
//! (the fused scale-and-shift) and own only their affine parameters;
//! running statistics are buffers, not parameters. Zero-padded taps of a
//! convolution are counted like any other tap.

use std::io::Write;

use crate::error::Result;
use crate::tensor::ConvSpec;
use crate::temporal::{AttentionMode, TokenLayout};

use super::pipeline::{PipelineConfig, FEATURE_DIM};

#[derive(Clone, Debug, PartialEq)]
pub enum LayerSpec {
    /// `rows` input vectors through a `d_in -> d_out` projection.
    Linear { rows: usize, d_in: usize, d_out: usize, bias: bool },
    Conv3d {
        in_channels: usize,
        out_channels: usize,
        /// `(T, H, W)` of the input.
        input: (usize, usize, usize),
        spec: ConvSpec,
    },
    /// Q, K and V projections of `rows` tokens.
    AttentionProjection { rows: usize, d_model: usize, bias: bool },
    /// Scores and weighted sums within each token group.
    AttentionMix { group_sizes: Vec<usize>, d_model: usize },
    Norm { channels: usize, elements: usize },
    /// Learned additive table such as a positional encoding.
    Table { rows: usize, width: usize },
    /// Weighted sum of `levels` equally shaped maps.
    Fusion { levels: usize, elements: usize },
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Cost {
    pub params: u64,
    pub macs: u64,
}

impl std::ops::Add for Cost {
    type Output = Cost;
    fn add(self, o: Cost) -> Cost {
        Cost { params: self.params + o.params, macs: self.macs + o.macs }
    }
}

impl LayerSpec {
    pub fn cost(&self) -> Result<Cost> {
        let u = |n: usize| n as u64;
        Ok(match self {
            LayerSpec::Linear { rows, d_in, d_out, bias } => Cost {
                params: u(d_in * d_out + if *bias { *d_out } else { 0 }),
                macs: u(rows * d_in * d_out),
            },
            LayerSpec::Conv3d { in_channels, out_channels, input, spec } => {
                let (t, h, w) = spec.output_extents(*input)?;
                let taps = in_channels * spec.kernel.0 * spec.kernel.1 * spec.kernel.2;
                Cost {
                    params: u(out_channels * taps + if spec.bias_enabled { *out_channels } else { 0 }),
                    macs: u(out_channels * t * h * w * taps),
                }
            }
            LayerSpec::AttentionProjection { rows, d_model, bias } => Cost {
                params: u(3 * d_model * d_model + if *bias { 3 * d_model } else { 0 }),
                macs: u(3 * rows * d_model * d_model),
            },
            LayerSpec::AttentionMix { group_sizes, d_model } => Cost {
                params: 0,
                macs: group_sizes.iter().map(|&g| u(2 * g * g * d_model)).sum(),
            },
            LayerSpec::Norm { channels, elements } => Cost { params: u(2 * channels), macs: u(*elements) },
            LayerSpec::Table { rows, width } => Cost { params: u(rows * width), macs: 0 },
            LayerSpec::Fusion { levels, elements } => Cost { params: u(*levels), macs: u(levels * elements) },
        })
    }
}

/// A named layer in forward order. `shared` marks a second use of weights
/// already counted, which adds MACs but no parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    pub name: String,
    pub spec: LayerSpec,
    pub shared: bool,
}

impl Layer {
    pub fn new(name: impl Into<String>, spec: LayerSpec) -> Self {
        Self { name: name.into(), spec, shared: false }
    }

    pub fn cost(&self) -> Result<Cost> {
        let c = self.spec.cost()?;
        Ok(if self.shared { Cost { params: 0, ..c } } else { c })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerCost {
    pub name: String,
    pub cost: Cost,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Complexity {
    pub layers: Vec<LayerCost>,
    pub total: Cost,
}

impl Complexity {
    pub fn from_layers(layers: &[Layer]) -> Result<Self> {
        let mut total = Cost::default();
        let mut out = Vec::with_capacity(layers.len());
        for l in layers {
            let cost = l.cost()?;
            total = total + cost;
            out.push(LayerCost { name: l.name.clone(), cost });
        }
        Ok(Self { layers: out, total })
    }

    /// `layer,params,macs` rows followed by a `total` row.
    pub fn write_csv<W: Write>(&self, w: W, comment: Option<&str>) -> Result<()> {
        let mut w = w;
        if let Some(c) = comment {
            writeln!(w, "# {c}")?;
        }
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["layer", "params", "macs"])?;
        for l in &self.layers {
            out.write_record([l.name.clone(), l.cost.params.to_string(), l.cost.macs.to_string()])?;
        }
        out.write_record(["total".to_string(), self.total.params.to_string(), self.total.macs.to_string()])?;
        out.flush()?;
        Ok(())
    }
}

fn encoder_pass(prefix: &str, layout: &TokenLayout, mode: AttentionMode, d: usize, hidden: usize, shared: bool) -> Vec<Layer> {
    let s = layout.tokens();
    let group_sizes = layout.groups(mode).iter().map(Vec::len).collect();
    [
        ("qkv", LayerSpec::AttentionProjection { rows: s, d_model: d, bias: true }),
        ("attend", LayerSpec::AttentionMix { group_sizes, d_model: d }),
        ("norm1", LayerSpec::Norm { channels: d, elements: s * d }),
        ("ffn1", LayerSpec::Linear { rows: s, d_in: d, d_out: hidden, bias: true }),
        ("ffn2", LayerSpec::Linear { rows: s, d_in: hidden, d_out: d, bias: true }),
        ("norm2", LayerSpec::Norm { channels: d, elements: s * d }),
    ]
    .into_iter()
    .map(|(n, spec)| Layer { name: format!("{prefix}.{n}"), spec, shared })
    .collect()
}

/// Layers of one forward pass of the configured pipeline. The second pass of
/// a divided block reuses the first pass's weights and is marked shared.
pub fn pipeline_layers(config: &PipelineConfig) -> Result<Vec<Layer>> {
    config.validate()?;
    let mut layers = Vec::new();
    let t = config.frames;
    if config.toggles.detection {
        let det = &config.detector;
        let (mut h, mut w) = config.input_hw;
        let mut cin = 1;
        let spec = ConvSpec::new((1, 3, 3)).stride((1, 2, 2)).padding((0, 1, 1));
        for level in 0..det.levels {
            layers.push(Layer::new(
                format!("detector.backbone{level}"),
                LayerSpec::Conv3d { in_channels: cin, out_channels: det.backbone_width, input: (1, h, w), spec },
            ));
            let (_, oh, ow) = spec.output_extents((1, h, w))?;
            (h, w, cin) = (oh, ow, det.backbone_width);
        }
        let cells = det.fused_hw.0 * det.fused_hw.1;
        let c = det.backbone_width;
        layers.push(Layer::new("detector.fusion", LayerSpec::Fusion { levels: det.levels, elements: c * cells }));
        layers.push(Layer::new("detector.cls", LayerSpec::Linear { rows: cells, d_in: c, d_out: 2, bias: true }));
        layers.push(Layer::new("detector.reg", LayerSpec::Linear { rows: cells, d_in: c, d_out: 4, bias: true }));
    }
    let (rh, rw) = config.roi_hw;
    if config.toggles.spatiotemporal {
        // mirrors `default_blocks`: 1 -> 8 -> 16 -> FEATURE_DIM
        let space = ConvSpec::new((1, 2, 2)).stride((1, 2, 2));
        let spacetime = ConvSpec::new((2, 2, 2)).stride((2, 2, 2));
        let mut input = (t, rh, rw);
        for (i, (cin, cout, pool)) in [(1, 8, Some(space)), (8, 16, Some(spacetime)), (16, FEATURE_DIM, None)]
            .into_iter()
            .enumerate()
        {
            let conv = ConvSpec::same((3, 3, 3));
            layers.push(Layer::new(format!("i3d.block{i}.conv"), LayerSpec::Conv3d { in_channels: cin, out_channels: cout, input, spec: conv }));
            let mut out = conv.output_extents(input)?;
            if let Some(p) = pool {
                out = p.output_extents(out)?;
            }
            layers.push(Layer::new(format!("i3d.block{i}.norm"), LayerSpec::Norm { channels: cout, elements: cout * out.0 * out.1 * out.2 }));
            input = out;
        }
    }
    let tc = &config.temporal;
    let d = tc.d_model;
    let layout = TokenLayout {
        frames: t,
        grid_h: rh / tc.patch,
        grid_w: rw / tc.patch,
        patch: tc.patch,
        summary: tc.summary_token,
    };
    let n = layout.patch_tokens();
    layers.push(Layer::new("encoder.patch", LayerSpec::Linear { rows: n, d_in: tc.patch * tc.patch, d_out: d, bias: true }));
    layers.push(Layer::new("encoder.position", LayerSpec::Table { rows: n, width: d }));
    if tc.summary_token {
        layers.push(Layer::new("encoder.summary", LayerSpec::Linear { rows: 1, d_in: FEATURE_DIM, d_out: d, bias: true }));
    }
    if config.toggles.temporal {
        for b in 0..tc.blocks {
            let prefix = format!("encoder.block{b}");
            match tc.mode {
                AttentionMode::Divided => {
                    for (k, mode) in layout.divided_passes().into_iter().enumerate() {
                        let tag = if mode == AttentionMode::Temporal { "time" } else { "space" };
                        layers.extend(encoder_pass(&format!("{prefix}.{tag}"), &layout, mode, d, tc.hidden, k > 0));
                    }
                }
                mode => layers.extend(encoder_pass(&prefix, &layout, mode, d, tc.hidden, false)),
            }
        }
    }
    layers.push(Layer::new(
        "classifier",
        LayerSpec::Linear { rows: 1, d_in: FEATURE_DIM + d, d_out: config.classes, bias: true },
    ));
    layers.push(Layer::new(
        "pose_head",
        LayerSpec::Linear { rows: 1, d_in: FEATURE_DIM, d_out: config.pose_outputs(), bias: true },
    ));
    Ok(layers)
}

pub fn count_params_flops(config: &PipelineConfig) -> Result<Complexity> {
    Complexity::from_layers(&pipeline_layers(config)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::StageToggles;

    #[test]
    fn toy_linear_and_conv() {
        let lin = LayerSpec::Linear { rows: 1, d_in: 4, d_out: 2, bias: true };
        assert_eq!(lin.cost().unwrap(), Cost { params: 10, macs: 8 });
        let conv = LayerSpec::Conv3d {
            in_channels: 1,
            out_channels: 1,
            input: (4, 4, 4),
            spec: ConvSpec::new((3, 3, 3)),
        };
        assert_eq!(conv.cost().unwrap(), Cost { params: 28, macs: 216 });
    }

    #[test]
    fn attention_projection_scales_quadratically() {
        let at = |d| LayerSpec::AttentionProjection { rows: 10, d_model: d, bias: false }.cost().unwrap();
        assert_eq!(at(32).params * 4, at(64).params);
        assert_eq!(at(32).params, 3 * 32 * 32);
    }

    #[test]
    fn disabling_stages_only_removes_cost() {
        let full = count_params_flops(&PipelineConfig::default()).unwrap().total;
        for (_, t) in StageToggles::ablations().into_iter().skip(1) {
            let c = count_params_flops(&PipelineConfig { toggles: t, ..Default::default() }).unwrap().total;
            assert!(c.params < full.params && c.macs < full.macs, "{t}: {c:?} vs {full:?}");
        }
    }

    #[test]
    fn shared_pass_adds_no_parameters() {
        let layers = pipeline_layers(&PipelineConfig::default()).unwrap();
        let shared: Vec<_> = layers.iter().filter(|l| l.shared).collect();
        assert!(!shared.is_empty());
        assert!(shared.iter().all(|l| l.cost().unwrap().params == 0 && l.cost().unwrap().macs > 0));
    }
}
