//! wasm-bindgen bindings for the browser demo in `www/`.
//!
//! Every export returns `Result<_, String>` so the same functions are callable
//! from native tests; in the browser an `Err` surfaces as a thrown string.

use eitnet_core::metrics::{mpjpe_pose, pa_mpjpe_pose, procrustes_align, SkeletonPose};
use eitnet_core::stream::camera::CameraSpec;
use eitnet_core::stream::median::median_filter_u8;
use eitnet_core::stream::sim::{quadrant_classifier, render_frame, run_simulation, SimConfig, SCENE_CLASSES};
use eitnet_core::SeedRng;
use wasm_bindgen::prelude::*;

/// Synthetic camera frame: a bright square in the quadrant of `class` with
/// salt-and-pepper noise at rate `noise`.
#[wasm_bindgen]
pub fn noisy_frame(class: usize, height: usize, width: usize, noise: f64, seed: u64) -> Result<Vec<u8>, String> {
    if class >= SCENE_CLASSES {
        return Err(format!("class must be below {SCENE_CLASSES}, got {class}"));
    }
    if height == 0 || width == 0 {
        return Err("frame extents must be positive".into());
    }
    if !(0.0..=1.0).contains(&noise) {
        return Err(format!("noise must lie in [0, 1], got {noise}"));
    }
    Ok(render_frame(class, 1, height, width, noise, &mut SeedRng::new(seed)))
}

/// Edge-replicated k x k median filter over a row-major 8-bit frame.
#[wasm_bindgen]
pub fn median_filter(pixels: &[u8], height: usize, width: usize, k: usize) -> Result<Vec<u8>, String> {
    if pixels.len() != height * width {
        return Err(format!("{} pixels for a {height}x{width} frame", pixels.len()));
    }
    median_filter_u8(pixels, height, width, k).map_err(|e| e.to_string())
}

/// Similarity alignment of one skeleton onto another.
#[wasm_bindgen]
pub struct Alignment {
    mpjpe: f64,
    pa_mpjpe: f64,
    scale: f64,
    rotation: Vec<f64>,
    translation: Vec<f64>,
    aligned: Vec<f64>,
}

#[wasm_bindgen]
impl Alignment {
    /// Mean joint distance before alignment.
    #[wasm_bindgen(getter)]
    pub fn mpjpe(&self) -> f64 {
        self.mpjpe
    }

    /// Mean joint distance after alignment.
    #[wasm_bindgen(getter)]
    pub fn pa_mpjpe(&self) -> f64 {
        self.pa_mpjpe
    }

    #[wasm_bindgen(getter)]
    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// Row-major 3x3.
    #[wasm_bindgen(getter)]
    pub fn rotation(&self) -> Vec<f64> {
        self.rotation.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn translation(&self) -> Vec<f64> {
        self.translation.clone()
    }

    /// The predicted joints after the transform, flattened `x, y, z` triples.
    #[wasm_bindgen(getter)]
    pub fn aligned(&self) -> Vec<f64> {
        self.aligned.clone()
    }
}

fn pose(flat: &[f64], what: &str) -> Result<SkeletonPose, String> {
    if flat.is_empty() || !flat.len().is_multiple_of(3) {
        return Err(format!("{what}: expected x, y, z triples, got {} numbers", flat.len()));
    }
    SkeletonPose::new(flat.chunks(3).map(|c| [c[0], c[1], c[2]]).collect()).map_err(|e| format!("{what}: {e}"))
}

/// Aligns `pred` onto `truth`; both are flattened `x, y, z` joint triples.
#[wasm_bindgen]
pub fn align_skeletons(pred: &[f64], truth: &[f64]) -> Result<Alignment, String> {
    let (p, t) = (pose(pred, "prediction")?, pose(truth, "ground truth")?);
    let tr = procrustes_align(&p, &t).map_err(|e| e.to_string())?;
    Ok(Alignment {
        mpjpe: mpjpe_pose(&p, &t).map_err(|e| e.to_string())?,
        pa_mpjpe: pa_mpjpe_pose(&p, &t).map_err(|e| e.to_string())?,
        scale: tr.scale,
        rotation: tr.rotation.iter().flatten().copied().collect(),
        translation: tr.translation.to_vec(),
        aligned: tr.apply(&p).joints.iter().flatten().copied().collect(),
    })
}

/// Runs the deterministic multi-camera stream simulation and returns its CSV
/// report (per-camera counts, latency and one row per sync window).
#[wasm_bindgen]
pub fn simulate_streams(
    cameras: u16,
    duration_ms: u32,
    jitter_us: f64,
    drop_probability: f64,
    seed: u64,
) -> Result<String, String> {
    if !(1..=16).contains(&cameras) {
        return Err(format!("between 1 and 16 cameras, got {cameras}"));
    }
    let specs = (1..=cameras)
        .map(|id| CameraSpec {
            clock_offset_us: (i64::from(id) - 1) * 700,
            jitter_std_us: jitter_us,
            drop_probability,
            ..CameraSpec::new(id, 33_333)
        })
        .collect();
    let cfg = SimConfig::new(specs, u64::from(duration_ms) * 1_000, seed);
    run_simulation(&cfg, &mut quadrant_classifier).map(|r| r.to_csv()).map_err(|e| e.to_string())
}
