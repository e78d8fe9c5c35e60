//! One-way clock calibration from handshake timestamps.
//!
//! Offsets are `camera_clock - hub_clock`. Each handshake sample is
//! `(camera send stamp, hub receive stamp)`, so `send - recv = offset - latency`
//! and the estimate is `median(send - recv) + latency_floor`. Latency above the
//! floor biases the estimate low; this is a coarse estimator.

use std::collections::BTreeMap;

use crate::error::{Error, Result};

pub const MIN_HANDSHAKE_SAMPLES: usize = 3;

pub fn median_i64(values: &mut [i64]) -> i64 {
    values.sort_unstable();
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]).div_euclid(2)
    }
}

pub fn calibrate_clocks(
    samples: &BTreeMap<u16, Vec<(u64, u64)>>,
    latency_floor_us: i64,
) -> Result<BTreeMap<u16, i64>> {
    let mut out = BTreeMap::new();
    for (&cam, s) in samples {
        if s.len() < MIN_HANDSHAKE_SAMPLES {
            return Err(Error::InvalidArgument(format!(
                "camera {cam}: {} handshake samples, need >= {MIN_HANDSHAKE_SAMPLES}",
                s.len()
            )));
        }
        let mut d: Vec<i64> = s.iter().map(|&(send, recv)| send as i64 - recv as i64).collect();
        out.insert(cam, median_i64(&mut d) + latency_floor_us);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeedRng;

    fn exchange(offset: i64, n: usize, jitter: impl Fn(usize) -> i64) -> Vec<(u64, u64)> {
        (0..n)
            .map(|k| {
                let t = 1_000_000 + 1_000 * k as i64;
                ((t + offset) as u64, (t + jitter(k)) as u64)
            })
            .collect()
    }

    #[test]
    fn exact_offset_without_latency() {
        let samples = BTreeMap::from([(1, exchange(500, 5, |_| 0))]);
        assert_eq!(calibrate_clocks(&samples, 0).unwrap()[&1], 500);
    }

    #[test]
    fn symmetric_jitter_within_bound() {
        let mut rng = SeedRng::new(17);
        let jit: Vec<i64> = (0..101).map(|_| rng.range(-100.0, 100.0).round() as i64).collect();
        // latency floor 0: jitter enters as +/- latency around zero
        let samples = BTreeMap::from([(2, exchange(500, 101, |k| jit[k]))]);
        let est = calibrate_clocks(&samples, 0).unwrap()[&2];
        assert!((est - 500).abs() <= 100, "estimate {est}");
    }

    #[test]
    fn equal_offsets_equal_estimates() {
        let samples = BTreeMap::from([(1, exchange(-300, 7, |k| k as i64 * 3)), (2, exchange(-300, 7, |k| k as i64 * 3))]);
        let est = calibrate_clocks(&samples, 0).unwrap();
        assert_eq!(est[&1], est[&2]);
    }

    #[test]
    fn too_few_samples() {
        let samples = BTreeMap::from([(1, exchange(0, 2, |_| 0))]);
        assert!(calibrate_clocks(&samples, 0).is_err());
    }
}
