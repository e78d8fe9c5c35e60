//! Toy trainer: frozen feature stages, trainable linear heads, Adam with a
//! step-decayed learning rate and validation-based early stopping.

use std::io::Write;

use crate::detection::{boxes_from_logits, match_anchors, BoundingBox, DetectionHead};
use crate::error::{invalid, Error, Result};
use crate::metrics::{accuracy, mpjpe, pa_mpjpe};
use crate::rng::SeedRng;
use crate::tensor::Tensor;

use super::augment::{AugmentConfig, AugmentTransform};
use super::heads::{anchor_classification, anchor_regression, softmax_ce, squared_error, FeatureScaler, LinearHead};
use super::pipeline::{best_region, full_frame, pose_target, EitNet, Prediction, StageFeatures};
use super::synth::SyntheticAction;

#[derive(Clone, Debug)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub decay_every: usize,
    pub decay_factor: f64,
    pub patience: usize,
    pub validation_fraction: f64,
    pub augment: AugmentConfig,
    /// Augmented views are drawn from this many seeded variants per sample,
    /// so frozen-stage outputs can be reused across epochs.
    pub augment_variants: usize,
    pub lambda: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.001,
            epochs: 50,
            batch_size: 8,
            decay_every: 10,
            decay_factor: 0.1,
            patience: 5,
            validation_fraction: 0.2,
            augment: AugmentConfig::with_crop(28, 28),
            augment_variants: 3,
            lambda: crate::detection::DEFAULT_LAMBDA,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return invalid(format!("learning rate must be positive, got {}", self.learning_rate));
        }
        if self.epochs == 0 || self.batch_size == 0 || self.decay_every == 0 || self.augment_variants == 0 {
            return invalid("epochs, batch size, decay period and augment variants must be >= 1");
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return invalid("validation fraction must be in [0, 1)");
        }
        if !(self.lambda >= 0.0) {
            return invalid("lambda must be >= 0");
        }
        Ok(())
    }

    pub fn learning_rate_at(&self, epoch: usize) -> f64 {
        learning_rate_at(self.learning_rate, epoch, self.decay_every, self.decay_factor)
    }
}

/// Step decay: `base * factor^floor((epoch - 1) / every)` for 1-based epochs.
pub fn learning_rate_at(base: f64, epoch: usize, every: usize, factor: f64) -> f64 {
    let steps = (epoch.max(1) - 1) / every;
    base * factor.powf(steps as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StopDecision {
    Improved,
    Stale(usize),
    Stop,
}

/// Counts consecutive epochs whose validation loss is strictly greater than
/// the best seen so far.
#[derive(Clone, Debug)]
pub struct EarlyStopping {
    pub patience: usize,
    best: Option<f64>,
    stale: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        Self { patience, best: None, stale: 0 }
    }

    pub fn best(&self) -> Option<f64> {
        self.best
    }

    pub fn observe(&mut self, val_loss: f64) -> StopDecision {
        match self.best {
            Some(b) if val_loss > b => {
                self.stale += 1;
                if self.stale >= self.patience {
                    StopDecision::Stop
                } else {
                    StopDecision::Stale(self.stale)
                }
            }
            _ => {
                self.best = Some(val_loss);
                self.stale = 0;
                StopDecision::Improved
            }
        }
    }
}

#[derive(Clone, Debug)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(n: usize) -> Self {
        Self { beta1: 0.9, beta2: 0.999, eps: 1e-8, m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grad[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
            params[i] -= lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + self.eps);
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub train_acc: f64,
    pub val_loss: f64,
    pub val_acc: f64,
}

pub const LEARNING_CURVE_HEADER: [&str; 6] = ["epoch", "lr", "train_loss", "train_acc", "val_loss", "val_acc"];

pub fn write_learning_curve_csv<W: Write>(mut w: W, rows: &[EpochRecord], comment: Option<&str>) -> Result<()> {
    if let Some(c) = comment {
        writeln!(w, "# {c}")?;
    }
    let mut out = csv::Writer::from_writer(w);
    out.write_record(LEARNING_CURVE_HEADER)?;
    for r in rows {
        out.write_record([
            r.epoch.to_string(),
            format!("{:e}", r.lr),
            format!("{:.6}", r.train_loss),
            format!("{:.2}", r.train_acc),
            format!("{:.6}", r.val_loss),
            format!("{:.2}", r.val_acc),
        ])?;
    }
    out.flush()?;
    Ok(())
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub model: EitNet,
    /// Action and pose head epochs; `*_acc` is action accuracy.
    pub curve: Vec<EpochRecord>,
    /// Detection head epochs (empty when detection is off); `*_acc` is the
    /// share of frames whose top box overlaps the truth by IoU >= 0.5.
    pub detection_curve: Vec<EpochRecord>,
    /// Epoch whose action and pose weights were kept (lowest validation loss).
    pub best_epoch: usize,
    pub stopped_early: bool,
}

/// Detector inputs and anchor assignment for one transformed frame.
#[derive(Clone, Debug)]
pub struct DetectionExample {
    /// Unscaled fused detector cells `[cells, C]`.
    pub cells: Tensor,
    pub anchors: Vec<BoundingBox>,
    pub matched: Vec<(usize, BoundingBox)>,
    pub truth: Option<BoundingBox>,
}

/// One view of a sample after the frozen stages.
#[derive(Clone, Debug)]
pub struct Example {
    pub label: usize,
    pub features: StageFeatures,
    pub pose: Vec<f64>,
}

pub fn build_detection_example(model: &EitNet, clip: &Tensor, truth: Option<BoundingBox>) -> Result<DetectionExample> {
    let (cells, anchors) = model.detection_cells(clip)?;
    let matched = match &truth {
        Some(g) => match_anchors(&anchors, std::slice::from_ref(g))
            .into_iter()
            .map(|(a, _)| (a, *g))
            .collect(),
        None => Vec::new(),
    };
    Ok(DetectionExample { cells, anchors, matched, truth })
}

/// Runs the frozen stages on a transformed clip cropped to `roi`.
pub fn build_example(model: &EitNet, sample: &SyntheticAction, t: &AugmentTransform, clip: &Tensor, roi: &BoundingBox) -> Result<Example> {
    let features = model.stage_features(clip, roi)?;
    let poses: Vec<_> = sample.poses.iter().map(|p| t.map_pose(p)).collect();
    Ok(Example { label: sample.label.index(), features, pose: pose_target(&poses) })
}

/// Fits the cell scaler and starts the detection heads from the foreground
/// prior and the mean matched box-to-anchor ratio.
fn init_detection_priors(model: &mut EitNet, first: &[&DetectionExample]) -> Result<()> {
    let rows: Vec<&[f64]> = first.iter().flat_map(|e| e.cells.data().chunks(e.cells.shape()[1])).collect();
    model.cell_scaler = FeatureScaler::fit(rows)?;
    let cells_per_frame = first.first().map_or(1, |e| e.cells.shape()[0]);
    let prior = 1.0 / cells_per_frame.max(2) as f64;
    let mut ratio = [0.0; 4];
    let mut n = 0usize;
    for e in first {
        for (a, t) in &e.matched {
            let (ac, tc) = (e.anchors[*a].coords(), t.coords());
            for k in 0..4 {
                ratio[k] += tc[k] / ac[k];
            }
            n += 1;
        }
    }
    let head = &mut model.detector.head;
    head.cls_bias = Tensor::from_vec(vec![0.0, (prior / (1.0 - prior)).ln()]);
    if n > 0 {
        let logit = |r: f64| {
            let r = (r / n as f64).clamp(0.02, 0.98);
            (r / (1.0 - r)).ln()
        };
        head.reg_bias = Tensor::from_vec(ratio.iter().map(|&r| logit(r)).collect());
    }
    Ok(())
}

/// Flat parameters of every trainable head.
#[derive(Clone, Debug, PartialEq)]
pub struct HeadParams {
    pub classifier: Vec<f64>,
    pub pose: Vec<f64>,
    pub det_cls: Vec<f64>,
    pub det_reg: Vec<f64>,
}

impl HeadParams {
    pub fn from_model(m: &EitNet) -> Self {
        let h = &m.detector.head;
        let flat = |w: &Tensor, b: &Tensor| {
            let mut p = w.data().to_vec();
            p.extend_from_slice(b.data());
            p
        };
        Self {
            classifier: m.classifier.params(),
            pose: m.pose_head.params(),
            det_cls: flat(&h.cls_weight, &h.cls_bias),
            det_reg: flat(&h.reg_weight, &h.reg_bias),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            classifier: vec![0.0; self.classifier.len()],
            pose: vec![0.0; self.pose.len()],
            det_cls: vec![0.0; self.det_cls.len()],
            det_reg: vec![0.0; self.det_reg.len()],
        }
    }

    fn slots(&mut self) -> [&mut Vec<f64>; 4] {
        [&mut self.classifier, &mut self.pose, &mut self.det_cls, &mut self.det_reg]
    }

    /// `self += scale * other`, slot by slot.
    fn add_scaled(&mut self, other: &mut Self, scale: f64) {
        for (a, b) in self.slots().into_iter().zip(other.slots()) {
            for (x, y) in a.iter_mut().zip(b.iter()) {
                *x += scale * y;
            }
        }
    }

    pub fn store(&self, m: &mut EitNet) -> Result<()> {
        m.classifier.set_params(&self.classifier)?;
        m.pose_head.set_params(&self.pose)?;
        let c = m.detector.head.cls_weight.shape()[0];
        let mut cls = LinearHead::zeros(c, 2);
        cls.set_params(&self.det_cls)?;
        let mut reg = LinearHead::zeros(c, 4);
        reg.set_params(&self.det_reg)?;
        m.detector.head = DetectionHead {
            cls_weight: cls.weight,
            cls_bias: cls.bias,
            reg_weight: reg.weight,
            reg_bias: reg.bias,
        };
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossParts {
    pub classification: f64,
    pub pose: f64,
    pub detection: f64,
}

impl LossParts {
    pub fn total(&self) -> f64 {
        self.classification + self.pose + self.detection
    }
}

/// Action and pose head loss and gradients on one example; the flag is
/// whether the predicted label is right.
pub fn example_loss(model: &EitNet, p: &HeadParams, ex: &Example) -> Result<(LossParts, HeadParams, bool)> {
    let x = model.classifier_input(&ex.features);
    let (cls, g_cls) = softmax_ce(&p.classifier, &x, ex.label, model.config.classes)?;
    let logits = super::heads::affine(&p.classifier, &x, model.config.classes);
    let correct = logits
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |b, (i, &v)| if v > b.1 { (i, v) } else { b })
        .0
        == ex.label;
    let feat = model.feature_scaler.apply(&ex.features.features);
    let (pose, g_pose) = squared_error(&p.pose, &feat, &ex.pose)?;
    let mut grad = p.zeros_like();
    grad.classifier = g_cls;
    grad.pose = g_pose;
    Ok((LossParts { classification: cls, pose, detection: 0.0 }, grad, correct))
}

/// Anchor classification plus `lambda`-weighted box regression on one frame;
/// the flag is whether the top detection overlaps the truth by at least 0.5.
pub fn detection_example_loss(
    model: &EitNet,
    p: &HeadParams,
    ex: &DetectionExample,
    lambda: f64,
) -> Result<(LossParts, HeadParams, bool)> {
    let cells = model.cell_scaler.apply_rows(&ex.cells)?;
    let positives: Vec<usize> = ex.matched.iter().map(|m| m.0).collect();
    let (lc, gc) = anchor_classification(&p.det_cls, &cells, &positives)?;
    let (lr, gr) = anchor_regression(&p.det_reg, &cells, &ex.anchors, &ex.matched)?;
    let mut grad = p.zeros_like();
    grad.det_cls = gc;
    grad.det_reg = gr.into_iter().map(|g| lambda * g).collect();
    let hit = match &ex.truth {
        Some(t) => {
            let d = ex.cells.shape()[1];
            let top = cells
                .data()
                .chunks(d)
                .map(|row| {
                    let s = super::heads::affine(&p.det_cls, row, 2);
                    s[1] - s[0]
                })
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |b, (i, s)| if s > b.1 { (i, s) } else { b })
                .0;
            let row = &cells.data()[top * d..(top + 1) * d];
            let z = super::heads::affine(&p.det_reg, row, 4);
            let b = boxes_from_logits(&Tensor::new(vec![1, 4], z)?, &ex.anchors[top..=top])?;
            b[0].iou(t) >= 0.5
        }
        None => false,
    };
    Ok((LossParts { classification: 0.0, pose: 0.0, detection: lc + lambda * lr }, grad, hit))
}

fn augment_rng(seed: u64, sample_id: u32, variant: usize) -> SeedRng {
    SeedRng::new(seed ^ 0x5eed_a06e).fork(((sample_id as u64) << 16) | variant as u64)
}

fn in_hw(sample: &SyntheticAction) -> (usize, usize) {
    let s = sample.clip.shape();
    (s[s.len() - 2], s[s.len() - 1])
}

/// Evaluation-time view: centred crop to the model input extent.
pub fn eval_transform(model: &EitNet, sample: &SyntheticAction) -> Result<AugmentTransform> {
    AugmentTransform::center(in_hw(sample), model.config.input_hw)
}

/// Splits off a seeded validation subset; returns `(train, validation)`.
pub fn validation_split<'a>(
    samples: &[&'a SyntheticAction],
    fraction: f64,
    seed: u64,
) -> (Vec<&'a SyntheticAction>, Vec<&'a SyntheticAction>) {
    let mut idx: Vec<usize> = (0..samples.len()).collect();
    SeedRng::new(seed ^ 0x7a11d).shuffle(&mut idx);
    let n_val = if samples.len() >= 2 {
        ((samples.len() as f64 * fraction).round() as usize).clamp(usize::from(fraction > 0.0), samples.len() - 1)
    } else {
        0
    };
    let (val, train) = idx.split_at(n_val);
    let mut train: Vec<usize> = train.to_vec();
    let mut val: Vec<usize> = val.to_vec();
    train.sort_unstable();
    val.sort_unstable();
    (train.iter().map(|&i| samples[i]).collect(), val.iter().map(|&i| samples[i]).collect())
}

/// Result of one optimisation run over a fixed set of heads.
struct Fit {
    curve: Vec<EpochRecord>,
    best_epoch: usize,
    stopped_early: bool,
}

/// The epoch loop shared by both training phases: shuffled mini-batches
/// from the epoch's augmentation variant, Adam on the `active` head slots,
/// per-epoch validation, early stopping and best-weight restore.
#[allow(clippy::too_many_arguments)]
fn fit_heads<E>(
    model: &EitNet,
    params: &mut HeadParams,
    active: [bool; 4],
    train: &[Vec<E>],
    val: &[E],
    config: &TrainConfig,
    salt: u64,
    loss: impl Fn(&EitNet, &HeadParams, &E) -> Result<(LossParts, HeadParams, bool)>,
) -> Result<Fit> {
    let mut opt: Vec<Adam> = params.clone().slots().iter().map(|s| Adam::new(s.len())).collect();
    let mut stopper = EarlyStopping::new(config.patience);
    let mut best = (params.clone(), 0usize);
    let mut curve = Vec::new();
    let mut stopped_early = false;
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut shuffle_rng = SeedRng::new(config.seed ^ salt);
    let mean = |p: &HeadParams, set: &mut dyn Iterator<Item = &E>| -> Result<(f64, f64, usize)> {
        let (mut sum, mut ok, mut n) = (0.0, 0usize, 0usize);
        for ex in set {
            let (l, _, hit) = loss(model, p, ex)?;
            sum += l.total();
            ok += hit as usize;
            n += 1;
        }
        let d = n.max(1) as f64;
        Ok((sum / d, 100.0 * ok as f64 / d, n))
    };

    for epoch in 1..=config.epochs {
        let lr = config.learning_rate_at(epoch);
        shuffle_rng.shuffle(&mut order);
        let (mut loss_sum, mut correct) = (0.0, 0usize);
        for (b, batch) in order.chunks(config.batch_size).enumerate() {
            let mut grad = params.zeros_like();
            for &i in batch {
                let ex = &train[i][(epoch - 1) % train[i].len()];
                let (l, mut g, ok) = loss(model, params, ex)?;
                if !l.total().is_finite() {
                    return Err(Error::NonFinite(format!("epoch {epoch} batch {b} example {i}: loss parts {l:?}")));
                }
                loss_sum += l.total();
                correct += ok as usize;
                grad.add_scaled(&mut g, 1.0 / batch.len() as f64);
            }
            for (((p, g), o), on) in params.slots().into_iter().zip(grad.slots()).zip(&mut opt).zip(active) {
                if on {
                    o.step(p, g, lr);
                }
            }
        }
        let n = train.len().max(1) as f64;
        let (train_loss, train_acc) = (loss_sum / n, 100.0 * correct as f64 / n);
        let (val_loss, val_acc) = if val.is_empty() {
            (train_loss, train_acc)
        } else {
            let (l, a, _) = mean(params, &mut val.iter())?;
            (l, a)
        };
        if !val_loss.is_finite() {
            return Err(Error::NonFinite(format!("epoch {epoch}: validation loss {val_loss}")));
        }
        curve.push(EpochRecord { epoch, lr, train_loss, train_acc, val_loss, val_acc });
        match stopper.observe(val_loss) {
            StopDecision::Improved => best = (params.clone(), epoch),
            StopDecision::Stale(_) => {}
            StopDecision::Stop => {
                stopped_early = true;
                break;
            }
        }
    }
    *params = best.0;
    Ok(Fit { curve, best_epoch: best.1, stopped_early })
}

/// A transformed training view, before any head has run.
struct View<'a> {
    sample: &'a SyntheticAction,
    transform: AugmentTransform,
    clip: Tensor,
    truth: Option<BoundingBox>,
}

fn make_view<'a>(sample: &'a SyntheticAction, transform: AugmentTransform) -> Result<View<'a>> {
    let clip = transform.apply(&sample.clip)?;
    let truth = transform.map_box(&sample.player_box);
    Ok(View { sample, transform, clip, truth })
}

/// Trains the heads in two phases. With detection enabled the detection
/// heads are fitted first; the action and pose heads are then fitted on
/// the regions that trained detector proposes, which is what they see at
/// inference time.
pub fn train_toy(mut model: EitNet, samples: &[&SyntheticAction], config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    if samples.len() < 2 {
        return invalid("training needs at least two samples");
    }
    let (train, val) = validation_split(samples, config.validation_fraction, config.seed);
    let views: Vec<Vec<View>> = train
        .iter()
        .map(|s| {
            (0..config.augment_variants)
                .map(|v| {
                    let mut rng = augment_rng(config.seed, s.sample_id, v);
                    make_view(s, AugmentTransform::sample(&config.augment, in_hw(s), &mut rng)?)
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    let val_views: Vec<View> = val
        .iter()
        .map(|s| make_view(s, eval_transform(&model, s)?))
        .collect::<Result<_>>()?;

    let mut params = HeadParams::from_model(&model);
    let mut detection_curve = Vec::new();
    let mut regions: Vec<Vec<BoundingBox>> = views
        .iter()
        .map(|vs| vs.iter().map(|v| full_frame(v.transform.crop_hw)).collect())
        .collect();
    let mut val_regions: Vec<BoundingBox> = val_views.iter().map(|v| full_frame(v.transform.crop_hw)).collect();

    if model.config.toggles.detection {
        let det: Vec<Vec<DetectionExample>> = views
            .iter()
            .map(|vs| vs.iter().map(|v| build_detection_example(&model, &v.clip, v.truth)).collect())
            .collect::<Result<_>>()?;
        let det_val: Vec<DetectionExample> = val_views
            .iter()
            .map(|v| build_detection_example(&model, &v.clip, v.truth))
            .collect::<Result<_>>()?;
        let first: Vec<&DetectionExample> = det.iter().map(|d| &d[0]).collect();
        init_detection_priors(&mut model, &first)?;
        params = HeadParams::from_model(&model);
        let fit = fit_heads(&model, &mut params, [false, false, true, true], &det, &det_val, config, 0xde7, |m, p, e| {
            detection_example_loss(m, p, e, config.lambda)
        })?;
        detection_curve = fit.curve;
        params.store(&mut model)?;
        for (r, d) in regions.iter_mut().zip(&det) {
            for (r, e) in r.iter_mut().zip(d) {
                *r = best_region(model.boxes_from_cells(&e.cells, &e.anchors)?, (r.h as usize, r.w as usize));
            }
        }
        for (r, e) in val_regions.iter_mut().zip(&det_val) {
            *r = best_region(model.boxes_from_cells(&e.cells, &e.anchors)?, (r.h as usize, r.w as usize));
        }
    }

    let examples: Vec<Vec<Example>> = views
        .iter()
        .zip(&regions)
        .map(|(vs, rs)| {
            vs.iter()
                .zip(rs)
                .map(|(v, r)| build_example(&model, v.sample, &v.transform, &v.clip, r))
                .collect()
        })
        .collect::<Result<_>>()?;
    let val_examples: Vec<Example> = val_views
        .iter()
        .zip(&val_regions)
        .map(|(v, r)| build_example(&model, v.sample, &v.transform, &v.clip, r))
        .collect::<Result<_>>()?;

    // scalers and the pose prior come from the first augmented view
    let first: Vec<&Example> = examples.iter().map(|e| &e[0]).collect();
    model.feature_scaler = FeatureScaler::fit(first.iter().map(|e| e.features.features.as_slice()))?;
    model.representation_scaler = FeatureScaler::fit(first.iter().map(|e| e.features.representation.as_slice()))?;
    let d = first[0].pose.len();
    let mut mean_pose = vec![0.0; d];
    for e in &first {
        for (m, v) in mean_pose.iter_mut().zip(&e.pose) {
            *m += v / first.len() as f64;
        }
    }
    let mut bias_only = vec![0.0; model.pose_head.param_count()];
    let n_w = bias_only.len() - d;
    bias_only[n_w..].copy_from_slice(&mean_pose);
    model.pose_head.set_params(&bias_only)?;
    params.pose = model.pose_head.params();

    let fit = fit_heads(&model, &mut params, [true, true, false, false], &examples, &val_examples, config, 0x0bad_cafe, example_loss)?;
    params.store(&mut model)?;
    Ok(TrainOutcome {
        model,
        curve: fit.curve,
        detection_curve,
        best_epoch: fit.best_epoch,
        stopped_early: fit.stopped_early,
    })
}

#[derive(Clone, Debug)]
pub struct EvalResult {
    pub accuracy: f64,
    pub mpjpe: f64,
    pub pa_mpjpe: f64,
    pub predictions: Vec<Prediction>,
}

/// Full inference (detected region included) on the centred view of each sample.
pub fn evaluate(model: &EitNet, samples: &[&SyntheticAction]) -> Result<EvalResult> {
    if samples.is_empty() {
        return invalid("evaluation set is empty");
    }
    let mut predictions = Vec::with_capacity(samples.len());
    let (mut pred_poses, mut true_poses) = (Vec::new(), Vec::new());
    let (mut labels, mut truths) = (Vec::new(), Vec::new());
    for s in samples {
        let t = eval_transform(model, s)?;
        let p = model.predict(&t.apply(&s.clip)?)?;
        pred_poses.extend(p.poses.iter().cloned());
        true_poses.extend(s.poses.iter().map(|q| t.map_pose(q)));
        labels.push(p.label);
        truths.push(s.label.index());
        predictions.push(p);
    }
    Ok(EvalResult {
        accuracy: accuracy(&labels, &truths)?,
        mpjpe: mpjpe(&pred_poses, &true_poses)?,
        pa_mpjpe: pa_mpjpe(&pred_poses, &true_poses)?,
        predictions,
    })
}
