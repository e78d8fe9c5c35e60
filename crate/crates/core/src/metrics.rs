//! Pose and classification metrics: MPJPE, Procrustes-aligned PA-MPJPE and
//! accuracy. Procrustes alignment is per frame.

use nalgebra::{Matrix3, Vector3, SVD};

use crate::error::{invalid, shape_err, Error, Result};

/// Joint positions in millimetres.
#[derive(Clone, Debug, PartialEq)]
pub struct SkeletonPose {
    pub joints: Vec<[f64; 3]>,
}

impl SkeletonPose {
    pub fn new(joints: Vec<[f64; 3]>) -> Result<Self> {
        if joints.is_empty() {
            return invalid("skeleton needs at least one joint");
        }
        if joints.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("skeleton joint coordinate".into()));
        }
        Ok(Self { joints })
    }

    pub fn len(&self) -> usize {
        self.joints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.joints.is_empty()
    }

    pub fn translated(&self, t: [f64; 3]) -> Self {
        Self {
            joints: self
                .joints
                .iter()
                .map(|p| [p[0] + t[0], p[1] + t[1], p[2] + t[2]])
                .collect(),
        }
    }
}

fn dist(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

/// `p -> s R p + t`.
#[derive(Clone, Debug, PartialEq)]
pub struct SimilarityTransform {
    pub scale: f64,
    pub rotation: [[f64; 3]; 3],
    pub translation: [f64; 3],
}

impl SimilarityTransform {
    pub fn identity() -> Self {
        Self {
            scale: 1.0,
            rotation: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            translation: [0.0; 3],
        }
    }

    pub fn apply_point(&self, p: &[f64; 3]) -> [f64; 3] {
        let r = &self.rotation;
        let mut out = [0.0; 3];
        for i in 0..3 {
            out[i] = self.scale * (r[i][0] * p[0] + r[i][1] * p[1] + r[i][2] * p[2]) + self.translation[i];
        }
        out
    }

    pub fn apply(&self, pose: &SkeletonPose) -> SkeletonPose {
        SkeletonPose {
            joints: pose.joints.iter().map(|p| self.apply_point(p)).collect(),
        }
    }

    /// Largest deviation of `R^T R` from the identity.
    pub fn orthonormality_error(&self) -> f64 {
        let r = Matrix3::from_fn(|i, j| self.rotation[i][j]);
        (r.transpose() * r - Matrix3::identity()).abs().max()
    }

    pub fn determinant(&self) -> f64 {
        Matrix3::from_fn(|i, j| self.rotation[i][j]).determinant()
    }

    /// Rotation from an axis (need not be unit) and angle, Rodrigues form.
    pub fn rotation_about(axis: [f64; 3], angle: f64) -> [[f64; 3]; 3] {
        let n = (axis[0] * axis[0] + axis[1] * axis[1] + axis[2] * axis[2]).sqrt();
        let (x, y, z) = (axis[0] / n, axis[1] / n, axis[2] / n);
        let (s, c) = angle.sin_cos();
        let v = 1.0 - c;
        [
            [c + x * x * v, x * y * v - z * s, x * z * v + y * s],
            [y * x * v + z * s, c + y * y * v, y * z * v - x * s],
            [z * x * v - y * s, z * y * v + x * s, c + z * z * v],
        ]
    }
}

fn check_pair(pred: &SkeletonPose, truth: &SkeletonPose) -> Result<()> {
    if pred.len() != truth.len() {
        return shape_err(format!("{} predicted joints vs {} ground-truth joints", pred.len(), truth.len()));
    }
    Ok(())
}

fn check_sequences(pred: &[SkeletonPose], truth: &[SkeletonPose]) -> Result<()> {
    if pred.is_empty() || pred.len() != truth.len() {
        return shape_err(format!("pose sequences of length {} and {}", pred.len(), truth.len()));
    }
    pred.iter().zip(truth).try_for_each(|(p, t)| check_pair(p, t))
}

/// Mean joint distance for one frame.
pub fn mpjpe_pose(pred: &SkeletonPose, truth: &SkeletonPose) -> Result<f64> {
    check_pair(pred, truth)?;
    let total: f64 = pred.joints.iter().zip(&truth.joints).map(|(a, b)| dist(a, b)).sum();
    Ok(total / pred.len() as f64)
}

/// Mean Euclidean joint distance over all joints of all frames.
pub fn mpjpe(pred: &[SkeletonPose], truth: &[SkeletonPose]) -> Result<f64> {
    check_sequences(pred, truth)?;
    let mut total = 0.0;
    let mut n = 0usize;
    for (p, t) in pred.iter().zip(truth) {
        for (a, b) in p.joints.iter().zip(&t.joints) {
            total += dist(a, b);
            n += 1;
        }
    }
    Ok(total / n as f64)
}

fn centroid(p: &SkeletonPose) -> Vector3<f64> {
    let mut c = Vector3::zeros();
    for j in &p.joints {
        c += Vector3::new(j[0], j[1], j[2]);
    }
    c / p.len() as f64
}

const DEGENERATE_TOL: f64 = 1e-9;

/// Similarity transform `(s, R, t)` minimising `sum |truth_i - (s R pred_i + t)|^2`.
///
/// Both sets are centred, `R` comes from the SVD of the cross-covariance with
/// the smallest singular direction flipped when needed so `det R = +1`, `s`
/// is the trace ratio and `t` the centroid residual.
pub fn procrustes_align(pred: &SkeletonPose, truth: &SkeletonPose) -> Result<SimilarityTransform> {
    check_pair(pred, truth)?;
    if pred.len() < 3 {
        return Err(Error::Degenerate(format!("procrustes needs >= 3 joints, got {}", pred.len())));
    }
    let mu_p = centroid(pred);
    let mu_t = centroid(truth);
    let n = pred.len() as f64;
    let mut cov = Matrix3::zeros();
    let mut scatter_p = Matrix3::zeros();
    let mut scatter_t = Matrix3::zeros();
    let mut var_p = 0.0;
    for (a, b) in pred.joints.iter().zip(&truth.joints) {
        let x = Vector3::new(a[0], a[1], a[2]) - mu_p;
        let y = Vector3::new(b[0], b[1], b[2]) - mu_t;
        cov += y * x.transpose();
        scatter_p += x * x.transpose();
        scatter_t += y * y.transpose();
        var_p += x.norm_squared();
    }
    cov /= n;
    var_p /= n;
    for (name, s) in [("prediction", scatter_p), ("ground truth", scatter_t)] {
        let sv = s.symmetric_eigenvalues();
        let mut ev: Vec<f64> = sv.iter().copied().collect();
        ev.sort_by(|a, b| b.partial_cmp(a).unwrap());
        if ev[0] <= f64::EPSILON || ev[1] <= DEGENERATE_TOL * ev[0] {
            return Err(Error::Degenerate(format!("{name} joints are coincident or collinear")));
        }
    }
    let svd = SVD::new(cov, true, true);
    let (u, v_t) = match (svd.u, svd.v_t) {
        (Some(u), Some(v_t)) => (u, v_t),
        _ => return Err(Error::Degenerate("cross-covariance SVD did not converge".into())),
    };
    let d = svd.singular_values;
    let mut flip = Matrix3::identity();
    if (u * v_t).determinant() < 0.0 {
        // flip the direction of the smallest singular value
        let (k, _) = d.iter().enumerate().fold((0, f64::MAX), |acc, (i, &v)| if v < acc.1 { (i, v) } else { acc });
        flip[(k, k)] = -1.0;
    }
    let r = u * flip * v_t;
    let trace: f64 = (0..3).map(|i| d[i] * flip[(i, i)]).sum();
    let scale = trace / var_p;
    if !(scale > 0.0) {
        return Err(Error::Degenerate(format!("non-positive Procrustes scale {scale}")));
    }
    let t = mu_t - scale * r * mu_p;
    Ok(SimilarityTransform {
        scale,
        rotation: [
            [r[(0, 0)], r[(0, 1)], r[(0, 2)]],
            [r[(1, 0)], r[(1, 1)], r[(1, 2)]],
            [r[(2, 0)], r[(2, 1)], r[(2, 2)]],
        ],
        translation: [t[0], t[1], t[2]],
    })
}

/// Mean joint distance after applying `transform` to `pred`.
pub fn aligned_error(pred: &SkeletonPose, truth: &SkeletonPose, transform: &SimilarityTransform) -> Result<f64> {
    mpjpe_pose(&transform.apply(pred), truth)
}

pub fn pa_mpjpe_pose(pred: &SkeletonPose, truth: &SkeletonPose) -> Result<f64> {
    let tr = procrustes_align(pred, truth)?;
    aligned_error(pred, truth, &tr)
}

/// MPJPE after per-frame Procrustes alignment of `pred` onto `truth`.
pub fn pa_mpjpe(pred: &[SkeletonPose], truth: &[SkeletonPose]) -> Result<f64> {
    check_sequences(pred, truth)?;
    let mut total = 0.0;
    for (p, t) in pred.iter().zip(truth) {
        total += pa_mpjpe_pose(p, t)?;
    }
    Ok(total / pred.len() as f64)
}

/// Percentage of positions where prediction equals truth.
pub fn accuracy<L: PartialEq>(predictions: &[L], truths: &[L]) -> Result<f64> {
    if predictions.is_empty() {
        return invalid("accuracy of an empty prediction set");
    }
    if predictions.len() != truths.len() {
        return shape_err(format!("{} predictions for {} labels", predictions.len(), truths.len()));
    }
    let correct = predictions.iter().zip(truths).filter(|(p, t)| p == t).count();
    Ok(100.0 * correct as f64 / predictions.len() as f64)
}
