//! Training-time augmentation: rotation about the frame centre, random crop
//! and horizontal flip, all nearest-neighbour. The sampled transform is
//! returned so boxes and poses can follow the pixels.

use crate::detection::BoundingBox;
use crate::error::{invalid, shape_err, Result};
use crate::metrics::SkeletonPose;
use crate::rng::SeedRng;
use crate::tensor::Tensor;

use super::synth::skeleton::MIRROR_PAIRS;

/// Crop side used at full resolution.
pub const FULL_SCALE_CROP: usize = 224;
pub const MAX_ROTATION_DEG: f64 = 15.0;

#[derive(Clone, Debug, PartialEq)]
pub struct AugmentConfig {
    pub crop_h: usize,
    pub crop_w: usize,
    pub max_rotation_deg: f64,
    pub flip_probability: f64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self::with_crop(FULL_SCALE_CROP, FULL_SCALE_CROP)
    }
}

impl AugmentConfig {
    pub fn with_crop(crop_h: usize, crop_w: usize) -> Self {
        Self {
            crop_h,
            crop_w,
            max_rotation_deg: MAX_ROTATION_DEG,
            flip_probability: 0.5,
        }
    }
}

/// A sampled augmentation for `[.., H, W]` inputs.
#[derive(Clone, Debug, PartialEq)]
pub struct AugmentTransform {
    pub in_hw: (usize, usize),
    pub crop_hw: (usize, usize),
    /// Top-left of the crop in the rotated frame.
    pub offset: (usize, usize),
    pub flip: bool,
    /// Counter-clockwise, radians.
    pub angle: f64,
}

impl AugmentTransform {
    pub fn identity(in_hw: (usize, usize)) -> Self {
        Self { in_hw, crop_hw: in_hw, offset: (0, 0), flip: false, angle: 0.0 }
    }

    /// Centred crop with no rotation or flip; the evaluation-time view.
    pub fn center(in_hw: (usize, usize), crop_hw: (usize, usize)) -> Result<Self> {
        check_crop(in_hw, crop_hw)?;
        Ok(Self {
            in_hw,
            crop_hw,
            offset: ((in_hw.0 - crop_hw.0) / 2, (in_hw.1 - crop_hw.1) / 2),
            flip: false,
            angle: 0.0,
        })
    }

    pub fn sample(config: &AugmentConfig, in_hw: (usize, usize), rng: &mut SeedRng) -> Result<Self> {
        let crop_hw = (config.crop_h, config.crop_w);
        check_crop(in_hw, crop_hw)?;
        let oy = rng.below(in_hw.0 - crop_hw.0 + 1);
        let ox = rng.below(in_hw.1 - crop_hw.1 + 1);
        let flip = rng.uniform() < config.flip_probability;
        let max = config.max_rotation_deg.to_radians();
        let angle = rng.range(-max, max);
        Ok(Self { in_hw, crop_hw, offset: (oy, ox), flip, angle })
    }

    /// Applies the transform to every `H x W` plane of a rank >= 2 tensor.
    pub fn apply(&self, input: &Tensor) -> Result<Tensor> {
        let r = input.rank();
        if r < 2 || (input.shape()[r - 2], input.shape()[r - 1]) != self.in_hw {
            return shape_err(format!("augment expects [.., {}, {}], got {:?}", self.in_hw.0, self.in_hw.1, input.shape()));
        }
        let (h, w) = self.in_hw;
        let (ch, cw) = self.crop_hw;
        let (cy, cx) = ((h as f64 - 1.0) / 2.0, (w as f64 - 1.0) / 2.0);
        let (sin, cos) = self.angle.sin_cos();
        // source pixel index for every output pixel, shared by all planes
        let mut src = Vec::with_capacity(ch * cw);
        for y in 0..ch {
            for x in 0..cw {
                let xr = if self.flip { cw - 1 - x } else { x };
                let (ry, rx) = ((y + self.offset.0) as f64, (xr + self.offset.1) as f64);
                let (u, v) = (rx - cx, cy - ry);
                let (us, vs) = (cos * u + sin * v, -sin * u + cos * v);
                let sx = (cx + us).round().clamp(0.0, (w - 1) as f64) as usize;
                let sy = (cy - vs).round().clamp(0.0, (h - 1) as f64) as usize;
                src.push(sy * w + sx);
            }
        }
        let planes = input.len() / (h * w);
        let mut data = Vec::with_capacity(planes * ch * cw);
        for p in 0..planes {
            let plane = &input.data()[p * h * w..(p + 1) * h * w];
            data.extend(src.iter().map(|&i| plane[i]));
        }
        let mut shape = input.shape().to_vec();
        shape[r - 2] = ch;
        shape[r - 1] = cw;
        Tensor::new(shape, data)
    }

    fn map_point(&self, x: f64, y: f64) -> (f64, f64) {
        let (h, w) = (self.in_hw.0 as f64, self.in_hw.1 as f64);
        let (sin, cos) = self.angle.sin_cos();
        let (u, v) = (x - w / 2.0, h / 2.0 - y);
        let (ur, vr) = (cos * u - sin * v, sin * u + cos * v);
        let (mut px, py) = (w / 2.0 + ur - self.offset.1 as f64, h / 2.0 - vr - self.offset.0 as f64);
        if self.flip {
            px = self.crop_hw.1 as f64 - px;
        }
        (px, py)
    }

    /// Box enclosing the transformed corners, clipped to the crop. `None` when
    /// the box leaves the crop entirely.
    pub fn map_box(&self, b: &BoundingBox) -> Option<BoundingBox> {
        let (x0, y0, x1, y1) = b.corners();
        let pts = [(x0, y0), (x1, y0), (x0, y1), (x1, y1)].map(|(x, y)| self.map_point(x, y));
        let e = BoundingBox::enclosing(pts)?;
        let (ex0, ey0, ex1, ey1) = e.corners();
        let (ch, cw) = (self.crop_hw.0 as f64, self.crop_hw.1 as f64);
        let (cx0, cy0, cx1, cy1) = (ex0.max(0.0), ey0.max(0.0), ex1.min(cw), ey1.min(ch));
        (cx1 > cx0 && cy1 > cy0).then(|| BoundingBox::from_corners(cx0, cy0, cx1, cy1).with_score(b.score, b.class_id))
    }

    /// In-plane rotation of the camera-aligned pose and, when flipped, an
    /// x mirror with left/right joints swapped. Cropping does not move a pose.
    pub fn map_pose(&self, pose: &SkeletonPose) -> SkeletonPose {
        let (sin, cos) = self.angle.sin_cos();
        let mut joints: Vec<[f64; 3]> = pose
            .joints
            .iter()
            .map(|p| {
                let x = cos * p[0] - sin * p[1];
                let y = sin * p[0] + cos * p[1];
                [if self.flip { -x } else { x }, y, p[2]]
            })
            .collect();
        if self.flip {
            for &(a, b) in MIRROR_PAIRS.iter() {
                if b < joints.len() {
                    joints.swap(a, b);
                }
            }
        }
        SkeletonPose { joints }
    }
}

fn check_crop(in_hw: (usize, usize), crop_hw: (usize, usize)) -> Result<()> {
    if crop_hw.0 == 0 || crop_hw.1 == 0 || crop_hw.0 > in_hw.0 || crop_hw.1 > in_hw.1 {
        return invalid(format!("crop {crop_hw:?} does not fit input {in_hw:?}"));
    }
    Ok(())
}

/// Seeded augmentation of a `[.., H, W]` clip.
pub fn augment(clip: &Tensor, config: &AugmentConfig, seed: u64) -> Result<(Tensor, AugmentTransform)> {
    let r = clip.rank();
    if r < 2 {
        return shape_err(format!("augment needs a rank >= 2 tensor, got {:?}", clip.shape()));
    }
    let in_hw = (clip.shape()[r - 2], clip.shape()[r - 1]);
    let t = AugmentTransform::sample(config, in_hw, &mut SeedRng::new(seed))?;
    Ok((t.apply(clip)?, t))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn clip(rng: &mut SeedRng) -> Tensor {
        Tensor::randn(&[1, 3, 6, 7], 1.0, rng)
    }

    #[test]
    fn identity_and_involution() {
        let mut rng = SeedRng::new(1);
        let x = clip(&mut rng);
        assert_eq!(AugmentTransform::identity((6, 7)).apply(&x).unwrap(), x);
        let flip = AugmentTransform { flip: true, ..AugmentTransform::identity((6, 7)) };
        assert_eq!(flip.apply(&flip.apply(&x).unwrap()).unwrap(), x);
        assert_ne!(flip.apply(&x).unwrap(), x);
    }

    #[test]
    fn seeded_and_bounded() {
        let mut rng = SeedRng::new(2);
        let x = Tensor::randn(&[1, 2, 32, 32], 1.0, &mut rng);
        let cfg = AugmentConfig::with_crop(28, 28);
        let (a, ta) = augment(&x, &cfg, 9).unwrap();
        let (b, tb) = augment(&x, &cfg, 9).unwrap();
        assert_eq!((a.clone(), ta.clone()), (b, tb));
        assert_eq!(a.shape(), &[1, 2, 28, 28]);
        assert!(ta.angle.abs() <= 15f64.to_radians());
        assert!(augment(&x, &AugmentConfig::default(), 0).is_err());
    }

    #[test]
    fn box_follows_pixels() {
        // single bright pixel inside a box, checked after a transform
        let mut data = vec![0.0; 32 * 32];
        data[20 * 32 + 9] = 1.0;
        let x = Tensor::new(vec![32, 32], data).unwrap();
        let b = BoundingBox::from_corners(8.0, 19.0, 11.0, 22.0);
        let t = AugmentTransform { in_hw: (32, 32), crop_hw: (28, 28), offset: (2, 3), flip: true, angle: 0.2 };
        let y = t.apply(&x).unwrap();
        let (i, _) = y.data().iter().enumerate().find(|(_, v)| **v == 1.0).unwrap();
        let (py, px) = ((i / 28) as f64 + 0.5, (i % 28) as f64 + 0.5);
        let m = t.map_box(&b).unwrap();
        let (x0, y0, x1, y1) = m.corners();
        assert!(px >= x0 - 1.0 && px <= x1 + 1.0 && py >= y0 - 1.0 && py <= y1 + 1.0, "{px},{py} vs {m:?}");
    }

    #[test]
    fn pose_flip_twice_is_identity() {
        let p = SkeletonPose::new((0..13).map(|i| [i as f64, 2.0 * i as f64, 1.0]).collect()).unwrap();
        let t = AugmentTransform { flip: true, ..AugmentTransform::identity((8, 8)) };
        assert_eq!(t.map_pose(&t.map_pose(&p)), p);
        assert_ne!(t.map_pose(&p), p);
    }
}
