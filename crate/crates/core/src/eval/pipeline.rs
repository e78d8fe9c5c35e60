//! The full clip pipeline: player detection on the clip's mean frame, region
//! crop, 3-D conv features, space-time encoder and the trainable heads.

use std::fmt;
use std::str::FromStr;

use crate::detection::{boxes_from_logits, crop_region, nms, BoundingBox, Detector, DetectorConfig};
use crate::error::{invalid, shape_err, Error, Result};
use crate::metrics::SkeletonPose;
use crate::rng::SeedRng;
use crate::spatiotemporal::{default_blocks, i3d_forward, mean_frame_features, I3DBlockParams};
use crate::temporal::{mean_token, TemporalConfig, TemporalEncoder};
use crate::tensor::{linear, softmax, softmax_vec, Tensor};

use super::heads::{FeatureScaler, LinearHead};
use super::synth::skeleton::JOINTS;

/// Pose head outputs are in units of this many millimetres.
pub const POSE_UNIT_MM: f64 = 100.0;
pub const FEATURE_DIM: usize = 32;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct StageToggles {
    pub detection: bool,
    pub spatiotemporal: bool,
    pub temporal: bool,
}

impl StageToggles {
    pub const ALL: Self = Self { detection: true, spatiotemporal: true, temporal: true };

    pub fn any(&self) -> bool {
        self.detection || self.spatiotemporal || self.temporal
    }

    /// The full pipeline followed by each single-stage-off variant.
    pub fn ablations() -> [(&'static str, StageToggles); 4] {
        [
            ("full", Self::ALL),
            ("no_detection", Self { detection: false, ..Self::ALL }),
            ("no_i3d", Self { spatiotemporal: false, ..Self::ALL }),
            ("no_timesformer", Self { temporal: false, ..Self::ALL }),
        ]
    }
}

impl Default for StageToggles {
    fn default() -> Self {
        Self::ALL
    }
}

impl fmt::Display for StageToggles {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let on: Vec<&str> = [(self.detection, "det"), (self.spatiotemporal, "i3d"), (self.temporal, "tsf")]
            .into_iter()
            .filter_map(|(b, n)| b.then_some(n))
            .collect();
        if on.is_empty() {
            f.write_str("none")
        } else {
            f.write_str(&on.join(","))
        }
    }
}

impl FromStr for StageToggles {
    type Err = Error;

    /// Comma-separated enabled stages out of `det`, `i3d`, `tsf`; `none`
    /// disables everything.
    fn from_str(s: &str) -> Result<Self> {
        let mut t = Self { detection: false, spatiotemporal: false, temporal: false };
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty() && *p != "none") {
            match part {
                "det" => t.detection = true,
                "i3d" => t.spatiotemporal = true,
                "tsf" => t.temporal = true,
                other => return invalid(format!("unknown stage {other:?} (expected det, i3d, tsf)")),
            }
        }
        Ok(t)
    }
}

#[derive(Clone, Debug)]
pub struct PipelineConfig {
    pub toggles: StageToggles,
    pub frames: usize,
    /// Model input extent (after the evaluation-time centre crop).
    pub input_hw: (usize, usize),
    /// Player region is resampled to this extent.
    pub roi_hw: (usize, usize),
    /// The region is grown by this factor about its centre before cropping,
    /// so limbs survive small localisation errors.
    pub region_margin: f64,
    pub classes: usize,
    pub joints: usize,
    pub detector: DetectorConfig,
    pub temporal: TemporalConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            toggles: StageToggles::ALL,
            frames: 8,
            input_hw: (28, 28),
            roi_hw: (16, 16),
            region_margin: 1.25,
            classes: 4,
            joints: JOINTS,
            detector: DetectorConfig::default(),
            temporal: TemporalConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.toggles.any() {
            return invalid("at least one pipeline stage must be enabled");
        }
        let p = self.temporal.patch;
        if p == 0 || !self.roi_hw.0.is_multiple_of(p) || !self.roi_hw.1.is_multiple_of(p) {
            return invalid(format!("patch {p} must divide the region extent {:?}", self.roi_hw));
        }
        if !(self.region_margin >= 1.0 && self.region_margin.is_finite()) {
            return invalid(format!("region margin must be >= 1, got {}", self.region_margin));
        }
        if self.frames < 2 || self.classes < 2 || self.joints == 0 {
            return invalid("need >= 2 frames, >= 2 classes and >= 1 joint");
        }
        Ok(())
    }

    pub fn pose_outputs(&self) -> usize {
        self.frames * self.joints * 3
    }
}

/// Frozen-stage outputs the heads consume.
#[derive(Clone, Debug, PartialEq)]
pub struct StageFeatures {
    /// Clip-level 3-D conv features (or the mean-frame stand-in).
    pub features: Vec<f64>,
    /// Mean encoder token (or mean input token when the encoder is off).
    pub representation: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub roi: BoundingBox,
    pub probabilities: Vec<f64>,
    pub label: usize,
    pub poses: Vec<SkeletonPose>,
}

#[derive(Clone, Debug)]
pub struct EitNet {
    pub config: PipelineConfig,
    /// Seed the frozen stages were drawn from.
    pub seed: u64,
    pub detector: Detector,
    pub blocks: Vec<I3DBlockParams>,
    pub encoder: TemporalEncoder,
    pub classifier: LinearHead,
    pub pose_head: LinearHead,
    pub feature_scaler: FeatureScaler,
    pub representation_scaler: FeatureScaler,
    /// Standardizes fused detector cells before the detection heads.
    pub cell_scaler: FeatureScaler,
}

pub fn full_frame(hw: (usize, usize)) -> BoundingBox {
    BoundingBox::from_corners(0.0, 0.0, hw.1 as f64, hw.0 as f64)
}

/// First usable box of a best-first list, else the whole `hw` frame.
pub fn best_region(boxes: Vec<BoundingBox>, hw: (usize, usize)) -> BoundingBox {
    boxes
        .into_iter()
        .find(|b| b.w >= 1.0 && b.h >= 1.0 && b.w.is_finite() && b.h.is_finite())
        .unwrap_or_else(|| full_frame(hw))
}

/// Temporal mean of a `[C, T, H, W]` clip as a `[C, H, W]` frame.
pub fn mean_frame(clip: &Tensor) -> Result<Tensor> {
    let (c, t, h, w) = match *clip.shape() {
        [c, t, h, w] => (c, t, h, w),
        ref s => return shape_err(format!("expected [C, T, H, W], got {s:?}")),
    };
    let plane = h * w;
    let mut out = vec![0.0; c * plane];
    for ch in 0..c {
        for f in 0..t {
            let src = &clip.data()[(ch * t + f) * plane..(ch * t + f + 1) * plane];
            for (o, v) in out[ch * plane..(ch + 1) * plane].iter_mut().zip(src) {
                *o += v / t as f64;
            }
        }
    }
    Tensor::new(vec![c, h, w], out)
}

impl EitNet {
    pub fn seeded(config: PipelineConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let root = SeedRng::new(seed);
        let detector = Detector::seeded(config.detector.clone(), 1, &mut root.clone().fork(1));
        let blocks = default_blocks(1, &mut root.clone().fork(2));
        let (rh, rw) = config.roi_hw;
        let encoder = TemporalEncoder::seeded(
            config.temporal.clone(),
            (1, config.frames, rh, rw),
            FEATURE_DIM,
            &mut root.clone().fork(3),
        );
        let d = config.temporal.d_model;
        Ok(Self {
            classifier: LinearHead::zeros(FEATURE_DIM + d, config.classes),
            pose_head: LinearHead::zeros(FEATURE_DIM, config.pose_outputs()),
            feature_scaler: FeatureScaler::identity(FEATURE_DIM),
            representation_scaler: FeatureScaler::identity(d),
            cell_scaler: FeatureScaler::identity(config.detector.backbone_width),
            detector,
            blocks,
            encoder,
            config,
            seed,
        })
    }

    fn check_clip(&self, clip: &Tensor) -> Result<()> {
        match *clip.shape() {
            [1, t, _, _] if t == self.config.frames => Ok(()),
            ref s => shape_err(format!("pipeline expects [1, {}, H, W] clips, got {s:?}", self.config.frames)),
        }
    }

    /// Raw per-cell fused detector features `[cells, C]` and the matching anchors.
    pub fn detection_cells(&self, clip: &Tensor) -> Result<(Tensor, Vec<BoundingBox>)> {
        let frame = mean_frame(clip)?;
        let fused = self.detector.fused_features(&frame)?;
        let cells = crate::detection::cell_features(&fused)?;
        Ok((cells, self.detector.anchors((frame.shape()[1], frame.shape()[2]))))
    }

    /// Scored, regressed and suppressed player boxes on the clip's mean frame.
    pub fn detect(&self, clip: &Tensor) -> Result<Vec<BoundingBox>> {
        let (cells, anchors) = self.detection_cells(clip)?;
        self.boxes_from_cells(&cells, &anchors)
    }

    /// Detection heads and NMS applied to raw cells from [`Self::detection_cells`].
    pub fn boxes_from_cells(&self, cells: &Tensor, anchors: &[BoundingBox]) -> Result<Vec<BoundingBox>> {
        let cells = self.cell_scaler.apply_rows(cells)?;
        let head = &self.detector.head;
        let probs = softmax(&linear(&cells, &head.cls_weight, Some(&head.cls_bias))?, 1)?;
        let logits = linear(&cells, &head.reg_weight, Some(&head.reg_bias))?;
        let mut boxes = boxes_from_logits(&logits, anchors)?;
        for (b, p) in boxes.iter_mut().zip(probs.data().chunks(2)) {
            b.score = p[1];
            b.class_id = 1;
        }
        Ok(nms(&boxes, self.detector.config.nms_iou))
    }

    /// Player region: the top detection when the detector is enabled, the
    /// whole frame otherwise (or when detection yields nothing usable).
    pub fn locate(&self, clip: &Tensor) -> Result<BoundingBox> {
        self.check_clip(clip)?;
        let hw = (clip.shape()[2], clip.shape()[3]);
        if !self.config.toggles.detection {
            return Ok(full_frame(hw));
        }
        Ok(best_region(self.detect(clip)?, hw))
    }

    pub fn stage_features(&self, clip: &Tensor, roi: &BoundingBox) -> Result<StageFeatures> {
        self.check_clip(clip)?;
        let m = self.config.region_margin;
        let roi = BoundingBox { w: roi.w * m, h: roi.h * m, ..*roi };
        let region = match crop_region(clip, &roi, self.config.roi_hw) {
            Ok(r) => r,
            Err(_) => crop_region(clip, &full_frame((clip.shape()[2], clip.shape()[3])), self.config.roi_hw)?,
        };
        let features = if self.config.toggles.spatiotemporal {
            i3d_forward(&region, &self.blocks)?
        } else {
            mean_frame_features(&region, FEATURE_DIM)?
        };
        let seq = if self.config.toggles.temporal {
            self.encoder.encode(&region, Some(&features))?
        } else {
            self.encoder.embed(&region, Some(&features))?
        };
        let representation = mean_token(&seq.tokens)?.into_data();
        Ok(StageFeatures { features: features.into_data(), representation })
    }

    /// Standardized clip features followed by the standardized sequence
    /// representation.
    pub fn classifier_input(&self, f: &StageFeatures) -> Vec<f64> {
        let mut x = self.feature_scaler.apply(&f.features);
        x.extend(self.representation_scaler.apply(&f.representation));
        x
    }

    pub fn class_probabilities(&self, f: &StageFeatures) -> Vec<f64> {
        softmax_vec(&self.classifier.forward(&self.classifier_input(f)))
    }

    pub fn poses(&self, f: &StageFeatures) -> Result<Vec<SkeletonPose>> {
        let out = self.pose_head.forward(&self.feature_scaler.apply(&f.features));
        out.chunks(self.config.joints * 3)
            .map(|frame| {
                SkeletonPose::new(
                    frame
                        .chunks(3)
                        .map(|j| [j[0] * POSE_UNIT_MM, j[1] * POSE_UNIT_MM, j[2] * POSE_UNIT_MM])
                        .collect(),
                )
            })
            .collect()
    }

    pub fn predict(&self, clip: &Tensor) -> Result<Prediction> {
        let roi = self.locate(clip)?;
        let f = self.stage_features(clip, &roi)?;
        let probabilities = self.class_probabilities(&f);
        let label = probabilities
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |b, (i, &p)| if p > b.1 { (i, p) } else { b })
            .0;
        Ok(Prediction { roi, label, poses: self.poses(&f)?, probabilities })
    }
}

/// Flattens a pose sequence into pose-head units.
pub fn pose_target(poses: &[SkeletonPose]) -> Vec<f64> {
    poses
        .iter()
        .flat_map(|p| p.joints.iter().flatten().map(|v| v / POSE_UNIT_MM))
        .collect()
}
