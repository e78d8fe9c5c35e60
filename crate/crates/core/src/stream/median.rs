use crate::error::{invalid, shape_err, Result};
use crate::tensor::Tensor;

/// `k x k` median filter over an `[H, W]` frame with replicated borders.
pub fn median_filter(frame: &Tensor, k: usize) -> Result<Tensor> {
    let (h, w) = match *frame.shape() {
        [h, w] => (h, w),
        ref s => return shape_err(format!("median_filter expects [H, W], got {s:?}")),
    };
    if k.is_multiple_of(2) {
        return invalid(format!("median window must be odd, got {k}"));
    }
    if k > h.min(w) {
        return invalid(format!("median window {k} exceeds frame {h}x{w}"));
    }
    let r = (k / 2) as isize;
    let x = frame.data();
    let mut window = Vec::with_capacity(k * k);
    let mut out = Vec::with_capacity(h * w);
    for y in 0..h as isize {
        for xx in 0..w as isize {
            window.clear();
            for dy in -r..=r {
                let yy = (y + dy).clamp(0, h as isize - 1) as usize;
                for dx in -r..=r {
                    let cx = (xx + dx).clamp(0, w as isize - 1) as usize;
                    window.push(x[yy * w + cx]);
                }
            }
            let mid = window.len() / 2;
            let (_, m, _) = window.select_nth_unstable_by(mid, |a, b| a.total_cmp(b));
            out.push(*m);
        }
    }
    Tensor::new(vec![h, w], out)
}

/// Median-filter a `u8` frame, returning `u8`s.
pub fn median_filter_u8(pixels: &[u8], height: usize, width: usize, k: usize) -> Result<Vec<u8>> {
    let t = Tensor::new(vec![height, width], pixels.iter().map(|&p| p as f64).collect())?;
    Ok(median_filter(&t, k)?.data().iter().map(|&v| v as u8).collect())
}
