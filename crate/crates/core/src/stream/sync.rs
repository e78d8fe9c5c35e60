//! Grouping of clock-corrected frames into synchronization windows.

use std::collections::BTreeMap;

use super::packet::StreamPacket;

#[derive(Clone, Debug, PartialEq)]
pub struct SyncWindow {
    pub window_index: i64,
    /// Window centre on the hub clock.
    pub reference_time_us: i64,
    pub frames: BTreeMap<u16, StreamPacket>,
    pub completeness: f64,
    /// Hub time at which the window was closed.
    pub closed_at_us: i64,
}

impl SyncWindow {
    pub fn close_latency_us(&self) -> i64 {
        self.closed_at_us - self.reference_time_us
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct CameraCounters {
    pub accepted: u64,
    pub duplicates: u64,
    pub dropped_late: u64,
}

#[derive(Clone, Copy, Debug)]
struct CameraState {
    last_index: Option<i64>,
    last_seen_us: i64,
}

/// Watermark-based window aggregator. A window `w` closes once every
/// expected camera has delivered a frame for a later window, or has been
/// silent for more than two window periods.
#[derive(Debug)]
pub struct Synchronizer {
    period_us: i64,
    offsets: BTreeMap<u16, i64>,
    cameras: BTreeMap<u16, CameraState>,
    counters: BTreeMap<u16, CameraCounters>,
    open: BTreeMap<i64, BTreeMap<u16, StreamPacket>>,
    last_closed: Option<i64>,
    now_us: i64,
    unknown_camera: u64,
}

impl Synchronizer {
    /// `offsets` holds the estimated `camera - hub` clock offset of every
    /// expected camera.
    pub fn new(offsets: BTreeMap<u16, i64>, window_period_us: u64, start_us: i64) -> Self {
        assert!(window_period_us > 0, "window period must be positive");
        let cameras = offsets
            .keys()
            .map(|&id| (id, CameraState { last_index: None, last_seen_us: start_us }))
            .collect();
        let counters = offsets.keys().map(|&id| (id, CameraCounters::default())).collect();
        Self {
            period_us: window_period_us as i64,
            offsets,
            cameras,
            counters,
            open: BTreeMap::new(),
            last_closed: None,
            now_us: start_us,
            unknown_camera: 0,
        }
    }

    pub fn corrected_timestamp(&self, camera_id: u16, timestamp_us: u64) -> Option<i64> {
        self.offsets.get(&camera_id).map(|off| timestamp_us as i64 - off)
    }

    pub fn window_index(&self, corrected_us: i64) -> i64 {
        (corrected_us as f64 / self.period_us as f64).round() as i64
    }

    pub fn counters(&self) -> &BTreeMap<u16, CameraCounters> {
        &self.counters
    }

    pub fn unknown_camera_frames(&self) -> u64 {
        self.unknown_camera
    }

    pub fn last_closed(&self) -> Option<i64> {
        self.last_closed
    }

    /// Feeds one frame received at hub time `arrival_us`; returns any
    /// windows that closed as a result, in index order.
    pub fn push(&mut self, packet: StreamPacket, arrival_us: i64) -> Vec<SyncWindow> {
        self.now_us = self.now_us.max(arrival_us);
        let cam = packet.camera_id;
        let Some(corrected) = self.corrected_timestamp(cam, packet.timestamp_us) else {
            self.unknown_camera += 1;
            return self.advance(arrival_us);
        };
        let w = self.window_index(corrected);
        let state = self.cameras.get_mut(&cam).expect("known camera");
        state.last_seen_us = self.now_us;
        state.last_index = Some(state.last_index.map_or(w, |l| l.max(w)));
        let counters = self.counters.get_mut(&cam).expect("known camera");
        if self.last_closed.is_some_and(|c| w <= c) {
            counters.dropped_late += 1;
        } else {
            let slot = self.open.entry(w).or_default();
            if slot.insert(cam, packet).is_some() {
                counters.duplicates += 1;
            } else {
                counters.accepted += 1;
            }
        }
        self.close_ready()
    }

    /// Moves the hub clock forward without delivering a frame.
    pub fn advance(&mut self, now_us: i64) -> Vec<SyncWindow> {
        self.now_us = self.now_us.max(now_us);
        self.close_ready()
    }

    /// Closes every remaining window.
    pub fn finish(&mut self) -> Vec<SyncWindow> {
        let keys: Vec<i64> = self.open.keys().copied().collect();
        keys.into_iter().map(|w| self.close(w)).collect()
    }

    fn passed(&self, w: i64) -> bool {
        self.cameras.values().all(|s| {
            s.last_index.is_some_and(|l| l > w) || self.now_us - s.last_seen_us > 2 * self.period_us
        })
    }

    fn close_ready(&mut self) -> Vec<SyncWindow> {
        let mut out = Vec::new();
        while let Some((&w, _)) = self.open.first_key_value() {
            if !self.passed(w) {
                break;
            }
            out.push(self.close(w));
        }
        out
    }

    fn close(&mut self, w: i64) -> SyncWindow {
        let frames = self.open.remove(&w).unwrap_or_default();
        self.last_closed = Some(self.last_closed.map_or(w, |c| c.max(w)));
        let expected = self.cameras.len().max(1);
        SyncWindow {
            window_index: w,
            reference_time_us: w * self.period_us,
            completeness: frames.len() as f64 / expected as f64,
            frames,
            closed_at_us: self.now_us,
        }
    }
}

/// Batch form: feeds `(packet, arrival)` pairs in the given order and closes
/// everything at the end.
pub fn synchronize(
    packets: impl IntoIterator<Item = (StreamPacket, i64)>,
    offsets: &BTreeMap<u16, i64>,
    window_period_us: u64,
) -> Vec<SyncWindow> {
    let mut sync = Synchronizer::new(offsets.clone(), window_period_us, 0);
    let mut out = Vec::new();
    for (p, t) in packets {
        out.extend(sync.push(p, t));
    }
    out.extend(sync.finish());
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pkt(cam: u16, seq: u32, ts: u64) -> StreamPacket {
        StreamPacket { camera_id: cam, sequence_no: seq, timestamp_us: ts, height: 1, width: 1, payload: vec![seq as u8] }
    }

    #[test]
    fn identical_timestamps_single_window() {
        let offsets = BTreeMap::from([(1, 0), (2, 0), (3, 0)]);
        let packets = (1..=3).map(|c| (pkt(c, 0, 1000), 1500));
        let w = synchronize(packets, &offsets, 33_333);
        assert_eq!(w.len(), 1);
        assert_eq!(w[0].completeness, 1.0);
    }

    #[test]
    fn offsets_are_removed() {
        let offsets = BTreeMap::from([(1, 500), (2, -700)]);
        let packets = vec![(pkt(1, 0, 10_500), 11_000), (pkt(2, 0, 9_300), 11_000)];
        let w = synchronize(packets, &offsets, 10_000);
        assert_eq!(w.len(), 1);
        assert_eq!(w[0].window_index, 1);
    }

    #[test]
    fn later_duplicate_wins() {
        let offsets = BTreeMap::from([(1, 0)]);
        let mut s = Synchronizer::new(offsets, 1000, 0);
        assert!(s.push(pkt(1, 0, 0), 10).is_empty());
        assert!(s.push(pkt(1, 1, 100), 20).is_empty());
        let out = s.push(pkt(1, 2, 1000), 1010);
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].frames[&1].sequence_no, 1);
        assert_eq!(s.counters()[&1].duplicates, 1);
        // window 0 is closed now
        s.push(pkt(1, 3, 10), 1020);
        assert_eq!(s.counters()[&1].dropped_late, 1);
    }

    #[test]
    fn silent_camera_releases_windows() {
        let offsets = BTreeMap::from([(1, 0), (2, 0)]);
        let mut s = Synchronizer::new(offsets, 1000, 0);
        let mut closed = Vec::new();
        for k in 0..10u32 {
            closed.extend(s.push(pkt(1, k, k as u64 * 1000), k as i64 * 1000 + 50));
        }
        closed.extend(s.finish());
        assert_eq!(closed.len(), 10);
        assert!(closed.iter().all(|w| w.completeness == 0.5));
        assert!(closed.windows(2).all(|p| p[0].window_index < p[1].window_index));
    }
}
