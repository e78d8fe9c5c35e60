//! Central finite differences against analytic gradients, and a seeded check
//! of every trainable head.

use std::io::Write;

use crate::detection::BoundingBox;
use crate::error::{invalid, Error, Result};
use crate::rng::SeedRng;
use crate::tensor::Tensor;

use super::heads::{anchor_classification, anchor_regression, softmax_ce, squared_error};

/// Relative errors divide by `max(|analytic|, |numeric|, REL_FLOOR)`, so
/// coordinates whose true gradient is ~0 are judged on absolute error.
pub const REL_FLOOR: f64 = 1e-6;
pub const DEFAULT_STEP: f64 = 1e-5;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GradCheck {
    pub max_abs_error: f64,
    pub max_rel_error: f64,
    /// Coordinate with the largest relative error.
    pub worst_index: usize,
}

/// Compares `analytic` with `(f(x + h e_i) - f(x - h e_i)) / 2h` at every
/// coordinate of `x`.
pub fn gradient_check(f: impl Fn(&[f64]) -> Result<f64>, analytic: &[f64], x: &[f64], h: f64) -> Result<GradCheck> {
    if !(h > 0.0 && h.is_finite()) {
        return invalid(format!("step must be positive, got {h}"));
    }
    if analytic.len() != x.len() {
        return invalid(format!("{} analytic entries for {} coordinates", analytic.len(), x.len()));
    }
    let mut probe = x.to_vec();
    let mut out = GradCheck { max_abs_error: 0.0, max_rel_error: 0.0, worst_index: 0 };
    for i in 0..x.len() {
        probe[i] = x[i] + h;
        let up = f(&probe)?;
        probe[i] = x[i] - h;
        let down = f(&probe)?;
        probe[i] = x[i];
        if !up.is_finite() || !down.is_finite() {
            return Err(Error::NonFinite(format!("loss at coordinate {i}: f(+h) = {up}, f(-h) = {down}")));
        }
        let numeric = (up - down) / (2.0 * h);
        let a = analytic[i];
        if !a.is_finite() {
            return Err(Error::NonFinite(format!("analytic gradient at coordinate {i} is {a}")));
        }
        let abs = (a - numeric).abs();
        let rel = abs / a.abs().max(numeric.abs()).max(REL_FLOOR);
        out.max_abs_error = out.max_abs_error.max(abs);
        if rel > out.max_rel_error {
            out.max_rel_error = rel;
            out.worst_index = i;
        }
    }
    Ok(out)
}

/// Convenience for losses that return `(value, gradient)`.
pub fn check_loss(loss: impl Fn(&[f64]) -> Result<(f64, Vec<f64>)>, x: &[f64], h: f64) -> Result<GradCheck> {
    let (_, g) = loss(x)?;
    gradient_check(|p| loss(p).map(|(v, _)| v), &g, x, h)
}

#[derive(Clone, Debug, PartialEq)]
pub struct HeadCheck {
    pub layer: &'static str,
    pub params: usize,
    pub result: GradCheck,
}

fn random_box(rng: &mut SeedRng, extent: f64) -> BoundingBox {
    let w = rng.range(2.0, extent / 2.0);
    let h = rng.range(2.0, extent / 2.0);
    BoundingBox::new(rng.range(w / 2.0, extent - w / 2.0), rng.range(h / 2.0, extent - h / 2.0), w, h)
}

/// Finite-difference checks of the action classifier, pose head and both
/// detection heads at seeded random points and inputs shaped like the
/// default pipeline's.
pub fn check_trainable_heads(seed: u64, h: f64) -> Result<Vec<HeadCheck>> {
    let mut rng = SeedRng::new(seed);
    let vec_of = |n: usize, std: f64, rng: &mut SeedRng| Tensor::randn(&[n], std, rng).into_data();
    let mut rows = Vec::new();

    let (d, classes) = (64, 4);
    let x = vec_of(d, 1.0, &mut rng);
    let p = vec_of((d + 1) * classes, 0.3, &mut rng);
    let label = rng.below(classes);
    let r = check_loss(|w| softmax_ce(w, &x, label, classes), &p, h)?;
    rows.push(HeadCheck { layer: "classifier", params: p.len(), result: r });

    let (d, outs) = (32, 8 * 13 * 3);
    let x = vec_of(d, 1.0, &mut rng);
    let target = vec_of(outs, 1.0, &mut rng);
    let p = vec_of((d + 1) * outs, 0.1, &mut rng);
    let r = check_loss(|w| squared_error(w, &x, &target), &p, h)?;
    rows.push(HeadCheck { layer: "pose_head", params: p.len(), result: r });

    let (cells, c) = (16, 16);
    let feats = Tensor::randn(&[cells, c], 1.0, &mut rng);
    let positives = [rng.below(cells)];
    let p = vec_of((c + 1) * 2, 0.3, &mut rng);
    let r = check_loss(|w| anchor_classification(w, &feats, &positives), &p, h)?;
    rows.push(HeadCheck { layer: "detector_cls", params: p.len(), result: r });

    let anchors: Vec<BoundingBox> = (0..cells).map(|_| random_box(&mut rng, 28.0)).collect();
    let matches: Vec<(usize, BoundingBox)> = (0..3)
        .map(|k| (k * 5 % cells, random_box(&mut rng, 28.0)))
        .collect();
    let p = vec_of((c + 1) * 4, 0.3, &mut rng);
    let r = check_loss(|w| anchor_regression(w, &feats, &anchors, &matches), &p, h)?;
    rows.push(HeadCheck { layer: "detector_reg", params: p.len(), result: r });
    Ok(rows)
}

pub fn write_gradcheck_csv<W: Write>(mut w: W, rows: &[HeadCheck], h: f64, comment: Option<&str>) -> Result<()> {
    if let Some(c) = comment {
        writeln!(w, "# {c}")?;
    }
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["layer", "params", "step", "max_abs_error", "max_rel_error"])?;
    for r in rows {
        out.write_record([
            r.layer.to_string(),
            r.params.to_string(),
            format!("{h:e}"),
            format!("{:.3e}", r.result.max_abs_error),
            format!("{:.3e}", r.result.max_rel_error),
        ])?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_at_origin() {
        let h = 1e-3;
        let r = gradient_check(|x| Ok(x.iter().map(|v| v * v).sum()), &[0.0; 5], &[0.0; 5], h).unwrap();
        assert!(r.max_abs_error <= h * h);
    }

    #[test]
    fn wrong_gradient_is_caught() {
        let r = gradient_check(|x| Ok(x[0] * x[0]), &[1.0], &[1.0], 1e-5).unwrap();
        assert!(r.max_rel_error > 0.4);
    }

    #[test]
    fn rejects_bad_step_and_nan() {
        assert!(gradient_check(|_| Ok(0.0), &[0.0], &[0.0], 0.0).is_err());
        assert!(matches!(gradient_check(|_| Ok(f64::NAN), &[0.0], &[0.0], 1e-3), Err(Error::NonFinite(_))));
    }

    #[test]
    fn heads_agree() {
        for row in check_trainable_heads(3, DEFAULT_STEP).unwrap() {
            assert!(row.result.max_rel_error <= 1e-4, "{row:?}");
        }
    }
}
