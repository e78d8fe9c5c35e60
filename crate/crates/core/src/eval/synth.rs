//! Seeded synthetic basketball clips: parametric stick-figure motions for four
//! actions, seen from five azimuths, rendered to small grayscale clips with
//! ground-truth 3-D poses and a player box.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use crate::detection::BoundingBox;
use crate::error::{invalid, Error, Result};
use crate::metrics::SkeletonPose;
use crate::rng::SeedRng;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ActionLabel {
    Dribble,
    Shoot,
    Pass,
    Jump,
}

impl ActionLabel {
    pub const ALL: [ActionLabel; 4] = [ActionLabel::Dribble, ActionLabel::Shoot, ActionLabel::Pass, ActionLabel::Jump];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            ActionLabel::Dribble => "dribble",
            ActionLabel::Shoot => "shoot",
            ActionLabel::Pass => "pass",
            ActionLabel::Jump => "jump",
        }
    }
}

impl fmt::Display for ActionLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ActionLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::Format(format!("unknown action label {s:?}")))
    }
}

pub mod skeleton {
    pub const JOINTS: usize = 13;
    pub const HEAD: usize = 0;
    pub const NECK: usize = 1;
    pub const L_SHOULDER: usize = 2;
    pub const R_SHOULDER: usize = 3;
    pub const L_ELBOW: usize = 4;
    pub const R_ELBOW: usize = 5;
    pub const L_WRIST: usize = 6;
    pub const R_WRIST: usize = 7;
    pub const PELVIS: usize = 8;
    pub const L_KNEE: usize = 9;
    pub const R_KNEE: usize = 10;
    pub const L_ANKLE: usize = 11;
    pub const R_ANKLE: usize = 12;

    pub const BONES: [(usize, usize); 12] = [
        (HEAD, NECK),
        (NECK, L_SHOULDER),
        (NECK, R_SHOULDER),
        (L_SHOULDER, L_ELBOW),
        (L_ELBOW, L_WRIST),
        (R_SHOULDER, R_ELBOW),
        (R_ELBOW, R_WRIST),
        (NECK, PELVIS),
        (PELVIS, L_KNEE),
        (L_KNEE, L_ANKLE),
        (PELVIS, R_KNEE),
        (R_KNEE, R_ANKLE),
    ];

    /// Left/right pairs swapped by a horizontal mirror.
    pub const MIRROR_PAIRS: [(usize, usize); 5] = [
        (L_SHOULDER, R_SHOULDER),
        (L_ELBOW, R_ELBOW),
        (L_WRIST, R_WRIST),
        (L_KNEE, R_KNEE),
        (L_ANKLE, R_ANKLE),
    ];
}

use skeleton::*;

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticConfig {
    pub subjects: u32,
    pub views: u32,
    pub repetitions: u32,
    pub frames: usize,
    pub height: usize,
    pub width: usize,
    /// Std of additive gaussian pixel noise.
    pub pixel_noise: f64,
    /// Std of per-joint positional noise in millimetres.
    pub pose_noise_mm: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            subjects: 10,
            views: 5,
            repetitions: 2,
            frames: 8,
            height: 32,
            width: 32,
            pixel_noise: 0.05,
            pose_noise_mm: 10.0,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        if self.subjects != 10 || self.views != 5 {
            return invalid(format!(
                "synthetic data uses 10 subjects and 5 views, got {} and {}",
                self.subjects, self.views
            ));
        }
        if self.repetitions == 0 {
            return invalid("repetitions must be >= 1");
        }
        if self.frames < 2 {
            return invalid("clips need >= 2 frames");
        }
        if self.height < 16 || self.width < 16 {
            return invalid("frames must be at least 16x16");
        }
        if !(self.pixel_noise >= 0.0 && self.pose_noise_mm >= 0.0) {
            return invalid("noise levels must be >= 0");
        }
        Ok(())
    }

    pub fn sample_count(&self) -> usize {
        (self.subjects * self.views * self.repetitions) as usize * ActionLabel::ALL.len()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticAction {
    pub sample_id: u32,
    pub subject_id: u32,
    pub view_id: u32,
    pub label: ActionLabel,
    /// `[1, T, H, W]`
    pub clip: Tensor,
    /// One pose per frame, millimetres, camera-aligned axes (x right, y up,
    /// z towards the camera), origin at the resting pelvis.
    pub poses: Vec<SkeletonPose>,
    /// Region covering the player over the whole clip, in pixels.
    pub player_box: BoundingBox,
}

/// Azimuth of view `v` (1-based) in radians, spread over [-60, 60] degrees.
pub fn view_azimuth(view_id: u32, views: u32) -> f64 {
    if views <= 1 {
        return 0.0;
    }
    let f = (view_id - 1) as f64 / (views - 1) as f64;
    (-60.0 + 120.0 * f).to_radians()
}

#[derive(Clone, Copy, Debug)]
struct Subject {
    height: f64,
    arm: f64,
    tempo: f64,
    amplitude: f64,
}

impl Subject {
    fn sample(rng: &mut SeedRng) -> Self {
        Self {
            height: rng.range(0.92, 1.08),
            arm: rng.range(0.9, 1.1),
            tempo: rng.range(0.85, 1.15),
            amplitude: rng.range(0.8, 1.2),
        }
    }
}

type P3 = [f64; 3];

fn add(a: P3, b: P3) -> P3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

/// Arm hanging at pitch 0, pointing forward at pi/2, overhead at pi; `bend`
/// adds extra pitch to the forearm.
fn arm(shoulder: P3, pitch: f64, bend: f64, upper: f64, fore: f64, side: f64) -> (P3, P3) {
    let elbow = add(shoulder, [side * 20.0, -upper * pitch.cos(), upper * pitch.sin()]);
    let p2 = pitch + bend;
    let wrist = add(elbow, [side * 10.0, -fore * p2.cos(), fore * p2.sin()]);
    (elbow, wrist)
}

fn smoothstep(x: f64) -> f64 {
    let x = x.clamp(0.0, 1.0);
    x * x * (3.0 - 2.0 * x)
}

/// Body pose (mm, x right / y up / z forward) and ball centre at phase `u`.
fn body_pose(label: ActionLabel, u: f64, s: &Subject) -> (Vec<P3>, P3) {
    let k = s.height;
    let a = s.amplitude;
    let (upper, fore) = (280.0 * k * s.arm, 250.0 * k * s.arm);
    let mut lift = 0.0;
    let mut crouch = 0.0;
    let (lp, lb, rp, rb);
    let ball_rel: Option<P3>;
    match label {
        ActionLabel::Dribble => {
            let bounce = (2.0 * PI * 2.0 * u).sin();
            rp = 0.7 + 0.35 * a * bounce;
            rb = 0.5;
            lp = 0.35;
            lb = 0.3;
            crouch = 90.0 * a;
            ball_rel = Some([0.0, -(bounce.abs()) * 650.0 * k, 80.0]);
        }
        ActionLabel::Shoot => {
            let r = smoothstep(u * 1.3);
            rp = 0.9 + 2.0 * a.min(1.0) * r;
            lp = rp - 0.1;
            rb = 1.3 * (1.0 - r);
            lb = rb;
            crouch = 120.0 * a * (PI * u.min(0.6) / 0.6).sin();
            ball_rel = None;
        }
        ActionLabel::Pass => {
            let r = (PI * u).sin();
            rp = 1.1 + 0.35 * a * r;
            lp = rp;
            rb = 1.4 * (1.0 - smoothstep(u * 1.4));
            lb = rb;
            ball_rel = Some([0.0, 0.0, 120.0 + 700.0 * smoothstep((u - 0.45) * 2.0)]);
        }
        ActionLabel::Jump => {
            let r = (PI * u).sin();
            lift = 330.0 * a * r;
            crouch = 110.0 * (1.0 - r) * (1.0 - u);
            rp = 0.3 + 2.2 * r;
            lp = rp;
            rb = 0.2;
            lb = 0.2;
            ball_rel = None;
        }
    }
    let pelvis = [0.0, lift - crouch, 0.0];
    let neck = add(pelvis, [0.0, 500.0 * k, 20.0 * crouch / 100.0]);
    let head = add(neck, [0.0, 150.0 * k, 0.0]);
    let ls = add(neck, [-180.0 * k, -30.0 * k, 0.0]);
    let rs = add(neck, [180.0 * k, -30.0 * k, 0.0]);
    let (le, lw) = arm(ls, lp, lb, upper, fore, -1.0);
    let (re, rw) = arm(rs, rp, rb, upper, fore, 1.0);
    // knees move forward as the hips drop, ankles stay on the floor unless airborne
    let thigh = 450.0 * k;
    let floor = -900.0 * k + lift;
    let knee_fwd = (crouch * 1.2).min(thigh * 0.8);
    let lk = [-100.0 * k, (pelvis[1] + floor) / 2.0, knee_fwd];
    let rk = [100.0 * k, (pelvis[1] + floor) / 2.0, knee_fwd];
    let la = [-100.0 * k, floor, 0.0];
    let ra = [100.0 * k, floor, 0.0];
    let joints = vec![head, neck, ls, rs, le, re, lw, rw, pelvis, lk, rk, la, ra];
    let hands = [(lw[0] + rw[0]) / 2.0, (lw[1] + rw[1]) / 2.0, (lw[2] + rw[2]) / 2.0];
    let ball = match (label, ball_rel) {
        (ActionLabel::Dribble, Some(r)) => add(rw, r),
        (_, Some(r)) => add(hands, r),
        (ActionLabel::Shoot, None) => add(hands, [0.0, 120.0 + 900.0 * smoothstep((u - 0.7) * 3.0), 0.0]),
        _ => add(hands, [0.0, 0.0, 100.0]),
    };
    (joints, ball)
}

fn rotate_y(p: P3, angle: f64) -> P3 {
    let (s, c) = angle.sin_cos();
    [c * p[0] + s * p[2], p[1], -s * p[0] + c * p[2]]
}

fn seg_dist2(px: f64, py: f64, a: (f64, f64), b: (f64, f64)) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let t = if len2 > 0.0 { (((px - a.0) * dx + (py - a.1) * dy) / len2).clamp(0.0, 1.0) } else { 0.0 };
    let (qx, qy) = (a.0 + t * dx - px, a.1 + t * dy - py);
    qx * qx + qy * qy
}

/// Pixels per millimetre for a frame of height `h`.
fn pixel_scale(h: usize) -> f64 {
    h as f64 * 0.6 / 1800.0
}

fn render(joints2d: &[(f64, f64)], ball: (f64, f64), h: usize, w: usize, out: &mut [f64]) {
    let width = 0.7 * h as f64 / 32.0;
    let ball_r = 1.4 * h as f64 / 32.0;
    for y in 0..h {
        for x in 0..w {
            let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
            let mut v = 0.1;
            for &(i, j) in BONES.iter() {
                let d2 = seg_dist2(px, py, joints2d[i], joints2d[j]);
                v = f64::max(v, (-d2 / (2.0 * width * width)).exp());
            }
            let bd = ((px - ball.0).powi(2) + (py - ball.1).powi(2)).sqrt();
            if bd < ball_r {
                v = v.max(0.75);
            }
            out[y * w + x] = v;
        }
    }
}

pub fn generate_sample(
    config: &SyntheticConfig,
    seed: u64,
    sample_id: u32,
    subject_id: u32,
    view_id: u32,
    label: ActionLabel,
) -> Result<SyntheticAction> {
    config.validate()?;
    let subject = Subject::sample(&mut SeedRng::new(seed).fork(1_000_000 + subject_id as u64));
    let mut rng = SeedRng::new(seed).fork(sample_id as u64);
    let (t, h, w) = (config.frames, config.height, config.width);
    let phase = rng.range(0.0, 0.12);
    let azimuth = view_azimuth(view_id, config.views) + rng.range(-10.0, 10.0).to_radians();
    let shift_x = rng.range(-0.2, 0.2) * w as f64;
    let scale = pixel_scale(h);
    let (cx, cy) = (w as f64 / 2.0 + shift_x, h as f64 * 0.55);

    let mut clip = vec![0.0; t * h * w];
    let mut poses = Vec::with_capacity(t);
    let mut corners = Vec::new();
    for f in 0..t {
        let u = (subject.tempo * f as f64 / (t - 1) as f64 + phase).min(1.0);
        let (body, ball) = body_pose(label, u, &subject);
        let cam: Vec<P3> = body.iter().map(|&p| rotate_y(p, azimuth)).collect();
        let ball = rotate_y(ball, azimuth);
        let to_px = |p: &P3| (cx + scale * p[0], cy - scale * p[1]);
        let j2: Vec<(f64, f64)> = cam.iter().map(to_px).collect();
        corners.extend(j2.iter().copied());
        render(&j2, to_px(&ball), h, w, &mut clip[f * h * w..(f + 1) * h * w]);
        let noisy = cam
            .iter()
            .map(|p| {
                let mut q = *p;
                for c in q.iter_mut() {
                    *c += rng.normal() * config.pose_noise_mm;
                }
                q
            })
            .collect();
        poses.push(SkeletonPose::new(noisy)?);
    }
    if config.pixel_noise > 0.0 {
        for v in clip.iter_mut() {
            *v += rng.normal() * config.pixel_noise;
        }
    }
    let margin = 1.5 * h as f64 / 32.0;
    let b = BoundingBox::enclosing(corners).expect("non-empty skeleton");
    let (x0, y0, x1, y1) = b.corners();
    let player_box = BoundingBox::from_corners(
        (x0 - margin).max(0.0),
        (y0 - margin).max(0.0),
        (x1 + margin).min(w as f64),
        (y1 + margin).min(h as f64),
    );
    Ok(SyntheticAction {
        sample_id,
        subject_id,
        view_id,
        label,
        clip: Tensor::new(vec![1, t, h, w], clip)?,
        poses,
        player_box,
    })
}

/// Every (subject, view, label, repetition) combination, in that nesting order.
pub fn generate_synthetic_dataset(config: &SyntheticConfig, seed: u64) -> Result<Vec<SyntheticAction>> {
    config.validate()?;
    let mut out = Vec::with_capacity(config.sample_count());
    let mut id = 0u32;
    for subject in 1..=config.subjects {
        for view in 1..=config.views {
            for label in ActionLabel::ALL {
                for _ in 0..config.repetitions {
                    out.push(generate_sample(config, seed, id, subject, view, label)?);
                    id += 1;
                }
            }
        }
    }
    Ok(out)
}
