//! Detection stage: a small strided CNN backbone, weighted multi-scale
//! fusion, sigmoid-scaled anchor regression, the combined detection loss,
//! greedy NMS and region cropping for the downstream clip models.
//!
//! Box regression follows `box = sigmoid(FC_reg(features)) * anchor`
//! coordinatewise on `(cx, cy, w, h)`. That form can only shrink an anchor,
//! so anchors must be at least as large (and as far from the origin) as the
//! boxes they are expected to produce.

use std::cmp::Ordering;
use std::io::Write;

use crate::error::{invalid, shape_err, Result};
use crate::rng::SeedRng;
use crate::tensor::{conv3d, linear, relu, resize_nearest, sigmoid, softmax, ConvSpec, Tensor};

/// Default balance between classification and regression loss.
pub const DEFAULT_LAMBDA: f64 = 1.0;
pub const FUSION_EPS: f64 = 1e-4;

/// Multi-scale feature maps `[C, H_i, W_i]`, coarse to fine.
#[derive(Clone, Debug)]
pub struct FeaturePyramid {
    levels: Vec<Tensor>,
}

impl FeaturePyramid {
    pub fn new(levels: Vec<Tensor>) -> Result<Self> {
        if levels.len() < 2 {
            return invalid(format!("feature pyramid needs >= 2 levels, got {}", levels.len()));
        }
        let c = levels[0].shape()[0];
        for (i, l) in levels.iter().enumerate() {
            if l.rank() != 3 {
                return shape_err(format!("pyramid level {i} must be [C, H, W], got {:?}", l.shape()));
            }
            if l.shape()[0] != c {
                return shape_err(format!(
                    "pyramid level {i} has {} channels, level 0 has {c}",
                    l.shape()[0]
                ));
            }
        }
        Ok(Self { levels })
    }

    pub fn levels(&self) -> &[Tensor] {
        &self.levels
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    /// Nearest-neighbour resample of every level to a common `h x w`.
    pub fn resampled(&self, h: usize, w: usize) -> Result<Self> {
        let levels = self
            .levels
            .iter()
            .map(|l| resize_nearest(l, h, w))
            .collect::<Result<Vec<_>>>()?;
        Self::new(levels)
    }
}

/// Nonnegative per-level fusion weights, normalised as `w_i / (sum w + eps)`.
#[derive(Clone, Debug, PartialEq)]
pub struct FusionWeights {
    pub raw: Vec<f64>,
    pub eps: f64,
}

impl FusionWeights {
    pub fn new(raw: Vec<f64>, eps: f64) -> Result<Self> {
        if raw.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return invalid(format!("fusion weights must be finite and >= 0, got {raw:?}"));
        }
        if !(eps >= 0.0) {
            return invalid(format!("fusion eps must be >= 0, got {eps}"));
        }
        if eps == 0.0 && raw.iter().all(|w| *w == 0.0) {
            return invalid("all-zero fusion weights need a positive eps");
        }
        Ok(Self { raw, eps })
    }

    pub fn uniform(n: usize) -> Self {
        Self {
            raw: vec![1.0; n],
            eps: FUSION_EPS,
        }
    }

    pub fn normalized(&self) -> Vec<f64> {
        let total: f64 = self.raw.iter().sum::<f64>() + self.eps;
        self.raw.iter().map(|w| w / total).collect()
    }
}

/// `sum_i alpha_i * F_i` over levels that already share one extent.
pub fn bifpn_fuse(pyramid: &FeaturePyramid, weights: &FusionWeights) -> Result<Tensor> {
    let levels = pyramid.levels();
    if weights.raw.len() != levels.len() {
        return shape_err(format!(
            "{} fusion weights for {} pyramid levels",
            weights.raw.len(),
            levels.len()
        ));
    }
    let shape = levels[0].shape();
    if let Some(bad) = levels.iter().find(|l| l.shape() != shape) {
        return shape_err(format!(
            "fusion needs equal level shapes, got {:?} and {:?}; resample first",
            shape,
            bad.shape()
        ));
    }
    let alpha = weights.normalized();
    let mut out = vec![0.0; levels[0].len()];
    for (l, a) in levels.iter().zip(&alpha) {
        for (o, v) in out.iter_mut().zip(l.data()) {
            *o += a * v;
        }
    }
    Tensor::new(shape.to_vec(), out)
}

/// Elementwise `current / (previous + eps)`.
pub fn level_attention(current: &Tensor, previous: &Tensor, eps: f64) -> Result<Tensor> {
    current.zip_with(previous, |c, p| c / (p + eps))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundingBox {
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
    pub score: f64,
    pub class_id: u32,
}

impl BoundingBox {
    pub fn new(cx: f64, cy: f64, w: f64, h: f64) -> Self {
        Self {
            cx,
            cy,
            w,
            h,
            score: 1.0,
            class_id: 0,
        }
    }

    pub fn with_score(mut self, score: f64, class_id: u32) -> Self {
        self.score = score;
        self.class_id = class_id;
        self
    }

    /// Smallest box holding every `(x, y)` point.
    pub fn enclosing(points: impl IntoIterator<Item = (f64, f64)>) -> Option<Self> {
        let (mut x0, mut y0, mut x1, mut y1) = (f64::MAX, f64::MAX, f64::MIN, f64::MIN);
        let mut any = false;
        for (x, y) in points {
            any = true;
            x0 = x0.min(x);
            y0 = y0.min(y);
            x1 = x1.max(x);
            y1 = y1.max(y);
        }
        any.then(|| Self::from_corners(x0, y0, x1, y1))
    }

    pub fn from_corners(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        Self::new((x0 + x1) / 2.0, (y0 + y1) / 2.0, x1 - x0, y1 - y0)
    }

    pub fn corners(&self) -> (f64, f64, f64, f64) {
        (
            self.cx - self.w / 2.0,
            self.cy - self.h / 2.0,
            self.cx + self.w / 2.0,
            self.cy + self.h / 2.0,
        )
    }

    pub fn coords(&self) -> [f64; 4] {
        [self.cx, self.cy, self.w, self.h]
    }

    pub fn area(&self) -> f64 {
        self.w.max(0.0) * self.h.max(0.0)
    }

    pub fn iou(&self, other: &BoundingBox) -> f64 {
        let (ax0, ay0, ax1, ay1) = self.corners();
        let (bx0, by0, bx1, by1) = other.corners();
        let iw = (ax1.min(bx1) - ax0.max(bx0)).max(0.0);
        let ih = (ay1.min(by1) - ay0.max(by0)).max(0.0);
        let inter = iw * ih;
        let union = self.area() + other.area() - inter;
        if union <= 0.0 {
            0.0
        } else {
            inter / union
        }
    }
}

/// One anchor per cell of an `rows x cols` grid, centred in its cell.
pub fn grid_anchors(rows: usize, cols: usize, cell: f64, size: (f64, f64)) -> Vec<BoundingBox> {
    let mut out = Vec::with_capacity(rows * cols);
    for i in 0..rows {
        for j in 0..cols {
            out.push(BoundingBox::new(
                (j as f64 + 0.5) * cell,
                (i as f64 + 0.5) * cell,
                size.0,
                size.1,
            ));
        }
    }
    out
}

/// Per-cell feature rows `[H*W, C]` from a `[C, H, W]` map.
pub fn cell_features(fused: &Tensor) -> Result<Tensor> {
    match *fused.shape() {
        [c, h, w] => Tensor::new(vec![c, h * w], fused.data().to_vec())?.transpose(),
        ref s => shape_err(format!("fused features must be [C, H, W], got {s:?}")),
    }
}

/// `sigmoid(logit) * anchor` coordinatewise; anchor score/class carried over.
pub fn boxes_from_logits(logits: &Tensor, anchors: &[BoundingBox]) -> Result<Vec<BoundingBox>> {
    if logits.shape() != [anchors.len(), 4] {
        return shape_err(format!(
            "regression output {:?} does not match {} anchors",
            logits.shape(),
            anchors.len()
        ));
    }
    Ok(logits
        .data()
        .chunks(4)
        .zip(anchors)
        .map(|(z, a)| BoundingBox {
            cx: sigmoid(z[0]) * a.cx,
            cy: sigmoid(z[1]) * a.cy,
            w: sigmoid(z[2]) * a.w,
            h: sigmoid(z[3]) * a.h,
            score: a.score,
            class_id: a.class_id,
        })
        .collect())
}

/// Regress one box per anchor from a fused `[C, H, W]` map (one anchor per cell).
pub fn predict_boxes(
    fused: &Tensor,
    reg_weight: &Tensor,
    reg_bias: &Tensor,
    anchors: &[BoundingBox],
) -> Result<Vec<BoundingBox>> {
    let cells = cell_features(fused)?;
    if cells.shape()[0] != anchors.len() {
        return shape_err(format!(
            "{} feature cells but {} anchors",
            cells.shape()[0],
            anchors.len()
        ));
    }
    let logits = linear(&cells, reg_weight, Some(reg_bias))?;
    boxes_from_logits(&logits, anchors)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DetectionLossParts {
    pub cls: f64,
    pub reg: f64,
    pub lambda: f64,
}

impl DetectionLossParts {
    pub fn total(&self) -> f64 {
        self.cls + self.lambda * self.reg
    }
}

pub fn smooth_l1(x: f64) -> f64 {
    let a = x.abs();
    if a < 1.0 {
        0.5 * x * x
    } else {
        a - 0.5
    }
}

pub fn smooth_l1_grad(x: f64) -> f64 {
    if x.abs() < 1.0 {
        x
    } else {
        x.signum()
    }
}

/// Derivative of `sigmoid(z) * anchor` with respect to `z`.
pub fn sigmoid_box_grad(z: f64, anchor: f64) -> f64 {
    let s = sigmoid(z);
    s * (1.0 - s) * anchor
}

/// Mean cross-entropy over scored anchors plus `lambda` times mean smooth-L1
/// over the coordinates of matched box pairs.
pub fn detection_loss(
    pred_scores: &[Vec<f64>],
    true_labels: &[usize],
    pred_boxes: &[BoundingBox],
    true_boxes: &[BoundingBox],
    lambda: f64,
) -> Result<DetectionLossParts> {
    if pred_scores.is_empty() {
        return invalid("detection loss over an empty match set");
    }
    if pred_scores.len() != true_labels.len() {
        return shape_err(format!(
            "{} score vectors for {} labels",
            pred_scores.len(),
            true_labels.len()
        ));
    }
    if pred_boxes.len() != true_boxes.len() {
        return shape_err(format!(
            "{} predicted boxes for {} targets",
            pred_boxes.len(),
            true_boxes.len()
        ));
    }
    if !(lambda >= 0.0) {
        return invalid(format!("lambda must be >= 0, got {lambda}"));
    }
    let mut cls = 0.0;
    for (p, &y) in pred_scores.iter().zip(true_labels) {
        let py = *p
            .get(y)
            .ok_or_else(|| crate::Error::InvalidArgument(format!("label {y} outside {} classes", p.len())))?;
        cls -= py.max(f64::MIN_POSITIVE).ln();
    }
    cls /= pred_scores.len() as f64;
    let mut reg = 0.0;
    for (p, t) in pred_boxes.iter().zip(true_boxes) {
        for (a, b) in p.coords().iter().zip(t.coords()) {
            reg += smooth_l1(a - b);
        }
    }
    if !pred_boxes.is_empty() {
        reg /= 4.0 * pred_boxes.len() as f64;
    }
    Ok(DetectionLossParts { cls, reg, lambda })
}

fn rank_order(a: &BoundingBox, b: &BoundingBox) -> Ordering {
    b.score
        .partial_cmp(&a.score)
        .unwrap_or(Ordering::Equal)
        .then(a.class_id.cmp(&b.class_id))
        .then(a.cx.partial_cmp(&b.cx).unwrap_or(Ordering::Equal))
}

/// Greedy class-agnostic suppression in (score desc, class asc, cx asc) order.
pub fn nms(boxes: &[BoundingBox], iou_threshold: f64) -> Vec<BoundingBox> {
    let mut order = boxes.to_vec();
    order.sort_by(rank_order);
    let mut kept: Vec<BoundingBox> = Vec::new();
    for b in order {
        if kept.iter().all(|k| k.iou(&b) <= iou_threshold) {
            kept.push(b);
        }
    }
    kept
}

/// Greedy one-to-one matching by descending IoU; pairs are `(anchor, target)`.
/// Equal IoUs (an anchor enclosing several shifted targets, or a target
/// enclosed by several anchors) go to the nearer centre first.
pub fn match_anchors(anchors: &[BoundingBox], targets: &[BoundingBox]) -> Vec<(usize, usize)> {
    let mut pairs = Vec::new();
    for (a, anchor) in anchors.iter().enumerate() {
        for (t, target) in targets.iter().enumerate() {
            let iou = anchor.iou(target);
            if iou > 0.0 {
                let dist = (anchor.cx - target.cx).hypot(anchor.cy - target.cy);
                pairs.push((iou, dist, a, t));
            }
        }
    }
    pairs.sort_by(|x, y| {
        y.0.partial_cmp(&x.0)
            .unwrap_or(Ordering::Equal)
            .then(x.1.partial_cmp(&y.1).unwrap_or(Ordering::Equal))
            .then((x.2, x.3).cmp(&(y.2, y.3)))
    });
    let mut used_a = vec![false; anchors.len()];
    let mut used_t = vec![false; targets.len()];
    let mut out = Vec::new();
    for (_, _, a, t) in pairs {
        if !used_a[a] && !used_t[t] {
            used_a[a] = true;
            used_t[t] = true;
            out.push((a, t));
        }
    }
    out.sort();
    out
}

/// Integer pixel window `[x0, x1) x [y0, y1)` of a box clamped to the frame.
pub fn clamp_box(b: &BoundingBox, height: usize, width: usize) -> Result<(usize, usize, usize, usize)> {
    let (bx0, by0, bx1, by1) = b.corners();
    let x0 = bx0.max(0.0).floor();
    let y0 = by0.max(0.0).floor();
    let x1 = bx1.min(width as f64).ceil();
    let y1 = by1.min(height as f64).ceil();
    if !(x1 > x0 && y1 > y0) || !x0.is_finite() || !y0.is_finite() {
        return invalid(format!("box {b:?} does not intersect a {height}x{width} frame"));
    }
    Ok((x0 as usize, y0 as usize, x1 as usize, y1 as usize))
}

/// Crop `[C, H, W]` (or every frame of `[C, T, H, W]`) to the box and
/// resample it to `out_hw` by nearest neighbour.
pub fn crop_region(frame: &Tensor, b: &BoundingBox, out_hw: (usize, usize)) -> Result<Tensor> {
    let r = frame.rank();
    if r != 3 && r != 4 {
        return shape_err(format!("crop_region expects [C, H, W] or [C, T, H, W], got {:?}", frame.shape()));
    }
    let (h, w) = (frame.shape()[r - 2], frame.shape()[r - 1]);
    let (x0, y0, x1, y1) = clamp_box(b, h, w)?;
    let (ch, cw) = (y1 - y0, x1 - x0);
    let planes = frame.len() / (h * w);
    let mut data = Vec::with_capacity(planes * ch * cw);
    for p in 0..planes {
        let plane = &frame.data()[p * h * w..(p + 1) * h * w];
        for y in y0..y1 {
            data.extend_from_slice(&plane[y * w + x0..y * w + x1]);
        }
    }
    let mut shape = frame.shape().to_vec();
    shape[r - 2] = ch;
    shape[r - 1] = cw;
    resize_nearest(&Tensor::new(shape, data)?, out_hw.0, out_hw.1)
}

/// One stride-2 conv + ReLU stage of the toy backbone.
#[derive(Clone, Debug)]
pub struct BackboneStage {
    pub weight: Tensor,
    pub bias: Tensor,
    pub spec: ConvSpec,
}

/// Stack of strided 2-D convolutions (3-D kernels with unit depth); every
/// stage output is one pyramid level.
#[derive(Clone, Debug)]
pub struct Backbone {
    pub stages: Vec<BackboneStage>,
}

impl Backbone {
    /// `in_channels -> width -> width -> ...`, 3x3 kernels, stride 2, He init.
    pub fn seeded(in_channels: usize, width: usize, levels: usize, rng: &mut SeedRng) -> Self {
        let mut stages = Vec::with_capacity(levels);
        let mut cin = in_channels;
        for _ in 0..levels {
            let std = (2.0 / (cin * 9) as f64).sqrt();
            stages.push(BackboneStage {
                weight: Tensor::randn(&[width, cin, 1, 3, 3], std, rng),
                bias: Tensor::zeros(&[width]),
                spec: ConvSpec::new((1, 3, 3)).stride((1, 2, 2)).padding((0, 1, 1)),
            });
            cin = width;
        }
        Self { stages }
    }

    /// Pyramid for a `[C, H, W]` frame, coarse level first.
    pub fn forward(&self, frame: &Tensor) -> Result<FeaturePyramid> {
        let (c, h, w) = match *frame.shape() {
            [c, h, w] => (c, h, w),
            ref s => return shape_err(format!("backbone expects [C, H, W], got {s:?}")),
        };
        let mut x = Tensor::new(vec![c, 1, h, w], frame.data().to_vec())?;
        let mut levels = Vec::with_capacity(self.stages.len());
        for s in &self.stages {
            x = relu(&conv3d(&x, &s.weight, Some(&s.bias), &s.spec)?);
            let sh = x.shape();
            levels.push(Tensor::new(vec![sh[0], sh[2], sh[3]], x.data().to_vec())?);
        }
        levels.reverse();
        FeaturePyramid::new(levels)
    }
}

/// Linear per-cell heads: 2-way (background, player) scores and box logits.
#[derive(Clone, Debug, PartialEq)]
pub struct DetectionHead {
    pub cls_weight: Tensor,
    pub cls_bias: Tensor,
    pub reg_weight: Tensor,
    pub reg_bias: Tensor,
}

impl DetectionHead {
    pub fn zeros(channels: usize) -> Self {
        Self {
            cls_weight: Tensor::zeros(&[channels, 2]),
            cls_bias: Tensor::zeros(&[2]),
            reg_weight: Tensor::zeros(&[channels, 4]),
            reg_bias: Tensor::zeros(&[4]),
        }
    }
}

#[derive(Clone, Debug)]
pub struct DetectorConfig {
    pub backbone_width: usize,
    pub levels: usize,
    /// Common extent every level is resampled to before fusion.
    pub fused_hw: (usize, usize),
    pub anchor_size: (f64, f64),
    pub nms_iou: f64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            backbone_width: 16,
            levels: 3,
            fused_hw: (8, 8),
            anchor_size: (12.0, 28.0),
            nms_iou: 0.5,
        }
    }
}

/// Backbone, fusion and heads composed in sequence.
#[derive(Clone, Debug)]
pub struct Detector {
    pub config: DetectorConfig,
    pub backbone: Backbone,
    pub fusion: FusionWeights,
    pub head: DetectionHead,
}

/// Fused features and per-anchor outputs for one frame.
#[derive(Clone, Debug)]
pub struct DetectorOutput {
    /// `[cells, C]` fused features, one row per anchor.
    pub cells: Tensor,
    pub anchors: Vec<BoundingBox>,
    /// `[cells, 2]` class probabilities.
    pub probs: Tensor,
    /// `[cells, 4]` regression logits.
    pub logits: Tensor,
}

impl Detector {
    pub fn seeded(config: DetectorConfig, in_channels: usize, rng: &mut SeedRng) -> Self {
        let backbone = Backbone::seeded(in_channels, config.backbone_width, config.levels, rng);
        Self {
            fusion: FusionWeights::uniform(config.levels),
            head: DetectionHead::zeros(config.backbone_width),
            backbone,
            config,
        }
    }

    /// Anchors for a frame of the given size, one per fused cell.
    pub fn anchors(&self, frame_hw: (usize, usize)) -> Vec<BoundingBox> {
        let (gh, gw) = self.config.fused_hw;
        let cell = frame_hw.0 as f64 / gh as f64;
        let mut anchors = grid_anchors(gh, gw, cell, self.config.anchor_size);
        let cell_w = frame_hw.1 as f64 / gw as f64;
        for (k, a) in anchors.iter_mut().enumerate() {
            a.cx = (k % gw) as f64 * cell_w + cell_w / 2.0;
        }
        anchors
    }

    pub fn fused_features(&self, frame: &Tensor) -> Result<Tensor> {
        let (gh, gw) = self.config.fused_hw;
        let pyramid = self.backbone.forward(frame)?.resampled(gh, gw)?;
        bifpn_fuse(&pyramid, &self.fusion)
    }

    pub fn run(&self, frame: &Tensor) -> Result<DetectorOutput> {
        let fused = self.fused_features(frame)?;
        let cells = cell_features(&fused)?;
        let r = frame.rank();
        let anchors = self.anchors((frame.shape()[r - 2], frame.shape()[r - 1]));
        let probs = softmax(&linear(&cells, &self.head.cls_weight, Some(&self.head.cls_bias))?, 1)?;
        let logits = linear(&cells, &self.head.reg_weight, Some(&self.head.reg_bias))?;
        Ok(DetectorOutput {
            cells,
            anchors,
            probs,
            logits,
        })
    }

    /// Scored player boxes after NMS, best first.
    pub fn detect(&self, frame: &Tensor) -> Result<Vec<BoundingBox>> {
        let out = self.run(frame)?;
        let mut boxes = boxes_from_logits(&out.logits, &out.anchors)?;
        for (b, p) in boxes.iter_mut().zip(out.probs.data().chunks(2)) {
            b.score = p[1];
            b.class_id = 1;
        }
        Ok(nms(&boxes, self.config.nms_iou))
    }
}

/// Write detections as `frame_id,camera_id,class_id,score,cx,cy,w,h`.
pub fn write_detections_csv<W: Write>(
    w: W,
    rows: &[(u64, u16, BoundingBox)],
    comment: Option<&str>,
) -> Result<()> {
    let mut w = w;
    if let Some(c) = comment {
        writeln!(w, "# {c}")?;
    }
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["frame_id", "camera_id", "class_id", "score", "cx", "cy", "w", "h"])?;
    for (frame, cam, b) in rows {
        out.write_record([
            frame.to_string(),
            cam.to_string(),
            b.class_id.to_string(),
            format!("{:.6}", b.score),
            format!("{:.4}", b.cx),
            format!("{:.4}", b.cy),
            format!("{:.4}", b.w),
            format!("{:.4}", b.h),
        ])?;
    }
    out.flush()?;
    Ok(())
}
