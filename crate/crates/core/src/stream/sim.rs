//! In-process camera network: seeded producers, a lossy FIFO link and one
//! aggregator that calibrates, synchronizes, filters and classifies.

use std::collections::{BTreeMap, VecDeque};
use std::fmt::Write as _;
use std::sync::mpsc;
use std::thread;

use super::camera::CameraSpec;
use super::clock::calibrate_clocks;
use super::feedback::argmax;
use super::median::median_filter_u8;
use super::packet::{decode_packet, encode_packet, StreamPacket};
use super::sync::{SyncWindow, Synchronizer};
use crate::error::{invalid, Error, Result};
use crate::rng::SeedRng;
use crate::tensor::Tensor;

/// Hub time of the first frame; leaves room for handshakes and negative offsets.
pub const SIM_EPOCH_US: u64 = 10_000_000;
const HANDSHAKE_SPACING_US: u64 = 1_000;
const MAX_ABS_OFFSET_US: i64 = 5_000_000;
/// Frames per scene segment of the synthetic activity.
pub const SCENE_SEGMENT_FRAMES: u64 = 15;
pub const SCENE_CLASSES: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SchedulerMode {
    Deterministic,
    Threaded,
}

#[derive(Clone, Debug)]
pub struct SimConfig {
    pub cameras: Vec<CameraSpec>,
    pub duration_us: u64,
    pub seed: u64,
    /// Defaults to the first camera's frame period.
    pub window_period_us: Option<u64>,
    pub frame_height: u16,
    pub frame_width: u16,
    pub median_window: usize,
    pub queue_capacity: usize,
    pub latency_base_us: u64,
    pub latency_spread_us: u64,
    pub handshake_samples: usize,
    /// Probability that a pixel is replaced by salt-and-pepper noise.
    pub noise_probability: f64,
    pub mode: SchedulerMode,
}

impl SimConfig {
    pub fn new(cameras: Vec<CameraSpec>, duration_us: u64, seed: u64) -> Self {
        Self {
            cameras,
            duration_us,
            seed,
            window_period_us: None,
            frame_height: 16,
            frame_width: 16,
            median_window: 3,
            queue_capacity: 64,
            latency_base_us: 2_000,
            latency_spread_us: 1_000,
            handshake_samples: 16,
            noise_probability: 0.05,
            mode: SchedulerMode::Deterministic,
        }
    }

    pub fn window_period(&self) -> u64 {
        self.window_period_us
            .unwrap_or_else(|| self.cameras.first().map_or(1, |c| c.frame_period_us))
    }

    pub fn validate(&self) -> Result<()> {
        if self.cameras.is_empty() {
            return invalid("simulation needs at least one camera");
        }
        for (i, c) in self.cameras.iter().enumerate() {
            c.validate()?;
            if c.clock_offset_us.abs() > MAX_ABS_OFFSET_US {
                return invalid(format!("camera {}: |offset| exceeds {MAX_ABS_OFFSET_US}us", c.camera_id));
            }
            if self.cameras[..i].iter().any(|o| o.camera_id == c.camera_id) {
                return invalid(format!("duplicate camera id {}", c.camera_id));
            }
        }
        if self.window_period() == 0 {
            return invalid("window period must be > 0");
        }
        if self.frame_height == 0 || self.frame_width == 0 {
            return invalid("frame extents must be > 0");
        }
        let k = self.median_window;
        if k.is_multiple_of(2) || k > self.frame_height.min(self.frame_width) as usize {
            return invalid(format!("median window {k} must be odd and fit the frame"));
        }
        if self.queue_capacity == 0 {
            return invalid("queue capacity must be > 0");
        }
        if !(0.0..=1.0).contains(&self.noise_probability) {
            return invalid("noise probability outside [0, 1]");
        }
        Ok(())
    }
}

/// Scene class shown at nominal frame `k`.
pub fn scene_class(frame: u64) -> usize {
    ((frame / SCENE_SEGMENT_FRAMES) % SCENE_CLASSES as u64) as usize
}

/// Window that frame `k` of a camera belongs to absent jitter and offset errors.
pub fn nominal_window(spec: &CameraSpec, frame: u64, window_period_us: u64) -> i64 {
    let t = SIM_EPOCH_US + frame * spec.frame_period_us;
    (t as f64 / window_period_us as f64).round() as i64
}

/// Bright square in the quadrant of the scene class, on a dark background,
/// with salt-and-pepper noise.
pub fn render_frame(class: usize, camera_id: u16, h: usize, w: usize, noise: f64, rng: &mut SeedRng) -> Vec<u8> {
    let mut px = vec![40u8; h * w];
    let (qy, qx) = (class / 2, class % 2);
    let side = (h.min(w) / 4).max(1);
    let shift = (camera_id as usize) % 2;
    let y0 = (qy * h / 2 + h / 4).saturating_sub(side / 2) + shift;
    let x0 = (qx * w / 2 + w / 4).saturating_sub(side / 2);
    for y in y0..(y0 + side).min(h) {
        for x in x0..(x0 + side).min(w) {
            px[y * w + x] = 200;
        }
    }
    for p in px.iter_mut() {
        if rng.uniform() < noise {
            *p = if rng.uniform() < 0.5 { 0 } else { 255 };
        }
    }
    px
}

fn truncated_normal(rng: &mut SeedRng, std: f64) -> f64 {
    if std == 0.0 {
        return 0.0;
    }
    loop {
        let z = rng.normal();
        if z.abs() <= 3.0 {
            return z * std;
        }
    }
}

#[derive(Clone, Debug)]
struct Transmission {
    arrival_us: i64,
    camera_id: u16,
    sequence_no: u32,
    bytes: Vec<u8>,
}

#[derive(Debug)]
struct CameraOutput {
    handshakes: Vec<(u64, u64)>,
    transmissions: Vec<Transmission>,
    produced: u64,
    dropped_link: u64,
}

fn link_latency(cfg: &SimConfig, rng: &mut SeedRng) -> i64 {
    (cfg.latency_base_us + (rng.uniform() * cfg.latency_spread_us as f64) as u64) as i64
}

fn produce_camera(spec: &CameraSpec, cfg: &SimConfig) -> Result<CameraOutput> {
    let mut rng = SeedRng::new(cfg.seed).fork(spec.camera_id as u64 + 1);
    let offset = spec.clock_offset_us;
    let start = SIM_EPOCH_US - cfg.handshake_samples as u64 * HANDSHAKE_SPACING_US - HANDSHAKE_SPACING_US;
    let handshakes = (0..cfg.handshake_samples as u64)
        .map(|i| {
            let hub = (start + i * HANDSHAKE_SPACING_US) as i64;
            let lat = link_latency(cfg, &mut rng);
            ((hub + offset) as u64, (hub + lat) as u64)
        })
        .collect();

    let (h, w) = (cfg.frame_height as usize, cfg.frame_width as usize);
    let mut transmissions = Vec::new();
    let (mut produced, mut dropped_link) = (0u64, 0u64);
    let mut last_arrival = i64::MIN;
    let mut k = 0u64;
    while k * spec.frame_period_us < cfg.duration_us {
        let jitter = truncated_normal(&mut rng, spec.jitter_std_us).round() as i64;
        let capture = (SIM_EPOCH_US + k * spec.frame_period_us) as i64 + jitter;
        let payload = render_frame(scene_class(k), spec.camera_id, h, w, cfg.noise_probability, &mut rng);
        let packet = StreamPacket {
            camera_id: spec.camera_id,
            sequence_no: k as u32,
            timestamp_us: (capture + offset) as u64,
            height: cfg.frame_height,
            width: cfg.frame_width,
            payload,
        };
        produced += 1;
        let dropped = rng.bernoulli(spec.drop_probability);
        let latency = link_latency(cfg, &mut rng);
        if dropped {
            dropped_link += 1;
        } else {
            let bytes = encode_packet(&packet).map_err(|e| Error::InvalidArgument(e.to_string()))?;
            // FIFO link: a packet never overtakes its predecessor
            let arrival = (capture + latency).max(last_arrival);
            last_arrival = arrival;
            transmissions.push(Transmission {
                arrival_us: arrival,
                camera_id: spec.camera_id,
                sequence_no: packet.sequence_no,
                bytes,
            });
        }
        k += 1;
    }
    Ok(CameraOutput { handshakes, transmissions, produced, dropped_link })
}

#[derive(Clone, Debug, PartialEq)]
pub struct CameraCounts {
    pub camera_id: u16,
    pub produced: u64,
    pub delivered: u64,
    pub dropped_link: u64,
    pub dropped_late: u64,
    pub duplicates: u64,
    /// Hub-side loss estimate from sequence gaps: `1 - received / (highest + 1)`.
    pub estimated_loss: f64,
    pub true_offset_us: i64,
    pub estimated_offset_us: i64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct WindowRecord {
    pub window_index: i64,
    pub reference_time_us: i64,
    /// `(camera_id, sequence_no)` of every frame grouped into the window.
    pub members: Vec<(u16, u32)>,
    pub completeness: f64,
    pub close_latency_us: i64,
    pub outcome: std::result::Result<Vec<f64>, String>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LatencySummary {
    pub p50_us: i64,
    pub p95_us: i64,
    pub max_us: i64,
}

/// Nearest-rank percentile of sorted data.
pub fn percentile(sorted: &[i64], q: f64) -> i64 {
    if sorted.is_empty() {
        return 0;
    }
    let rank = (q * sorted.len() as f64).ceil().max(1.0) as usize;
    sorted[rank.min(sorted.len()) - 1]
}

impl LatencySummary {
    pub fn from_samples(samples: &[i64]) -> Self {
        let mut s = samples.to_vec();
        s.sort_unstable();
        Self {
            p50_us: percentile(&s, 0.50),
            p95_us: percentile(&s, 0.95),
            max_us: s.last().copied().unwrap_or(0),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimulationReport {
    pub seed: u64,
    pub window_period_us: u64,
    pub cameras: Vec<CameraCounts>,
    pub decode_errors: u64,
    pub windows: Vec<WindowRecord>,
    pub latency: LatencySummary,
}

fn csv_safe(s: &str) -> String {
    s.replace([',', '\n', '\r'], ";")
}

impl SimulationReport {
    pub fn conservation_holds(&self) -> bool {
        self.cameras.iter().all(|c| c.produced == c.delivered + c.dropped_link)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        s.push_str("[counts]\ncamera_id,produced,delivered,dropped_link,dropped_late,duplicates,estimated_loss\n");
        for c in &self.cameras {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{:.6}",
                c.camera_id, c.produced, c.delivered, c.dropped_link, c.dropped_late, c.duplicates, c.estimated_loss
            );
        }
        s.push_str("\n[clock]\ncamera_id,true_offset_us,estimated_offset_us\n");
        for c in &self.cameras {
            let _ = writeln!(s, "{},{},{}", c.camera_id, c.true_offset_us, c.estimated_offset_us);
        }
        s.push_str("\n[latency]\nwindow_period_us,decode_errors,p50_us,p95_us,max_us\n");
        let _ = writeln!(
            s,
            "{},{},{},{},{}",
            self.window_period_us, self.decode_errors, self.latency.p50_us, self.latency.p95_us, self.latency.max_us
        );
        s.push_str("\n[windows]\nwindow_index,reference_time_us,frames,completeness,close_latency_us,label,confidence,members,status\n");
        for w in &self.windows {
            let members: Vec<String> = w.members.iter().map(|(c, q)| format!("{c}:{q}")).collect();
            let (label, conf, status) = match &w.outcome {
                Ok(p) => match argmax(p) {
                    Some((l, c)) => (l.to_string(), format!("{c:.6}"), "ok".to_string()),
                    None => (String::new(), String::new(), "error: empty probabilities".into()),
                },
                Err(e) => (String::new(), String::new(), format!("error: {}", csv_safe(e))),
            };
            let _ = writeln!(
                s,
                "{},{},{},{:.6},{},{},{},{},{}",
                w.window_index,
                w.reference_time_us,
                w.members.len(),
                w.completeness,
                w.close_latency_us,
                label,
                conf,
                members.join(";"),
                status
            );
        }
        s
    }
}

/// Per-window classifier invoked by the aggregator with the median-filtered
/// frames (one `[H, W]` tensor per camera, in camera-id order).
pub type WindowHook<'a> = dyn FnMut(&SyncWindow, &[Tensor]) -> Result<Vec<f64>> + 'a;

/// Scores each quadrant by its mean brightness across cameras.
pub fn quadrant_classifier(_window: &SyncWindow, frames: &[Tensor]) -> Result<Vec<f64>> {
    if frames.is_empty() {
        return invalid("window without frames");
    }
    let mut score = [0.0f64; SCENE_CLASSES];
    for f in frames {
        let (h, w) = (f.shape()[0], f.shape()[1]);
        let mut sums = [0.0f64; SCENE_CLASSES];
        let mut counts = [0usize; SCENE_CLASSES];
        for y in 0..h {
            for x in 0..w {
                let q = (2 * y / h) * 2 + (2 * x / w);
                sums[q] += f.data()[y * w + x];
                counts[q] += 1;
            }
        }
        for q in 0..SCENE_CLASSES {
            score[q] += sums[q] / counts[q].max(1) as f64 / frames.len() as f64;
        }
    }
    Ok(crate::tensor::softmax_vec(&score.map(|v| 20.0 * v)))
}

struct Aggregator<'h, 'a> {
    sync: Synchronizer,
    delivered: BTreeMap<u16, u64>,
    highest_seq: BTreeMap<u16, u32>,
    decode_errors: u64,
    median_window: usize,
    windows: Vec<WindowRecord>,
    hook: &'h mut WindowHook<'a>,
}

impl Aggregator<'_, '_> {
    fn receive(&mut self, arrival_us: i64, bytes: &[u8]) {
        match decode_packet(bytes) {
            Ok(p) => {
                *self.delivered.entry(p.camera_id).or_default() += 1;
                let top = self.highest_seq.entry(p.camera_id).or_insert(p.sequence_no);
                *top = (*top).max(p.sequence_no);
                let closed = self.sync.push(p, arrival_us);
                self.handle(closed);
            }
            Err(_) => self.decode_errors += 1,
        }
    }

    /// Feeds buffered packets in arrival order while every live producer has
    /// at least one pending.
    fn release(&mut self, pending: &mut [VecDeque<Transmission>], live: &[bool]) {
        loop {
            if pending.iter().zip(live).any(|(q, &l)| l && q.is_empty()) {
                return;
            }
            let next = pending
                .iter_mut()
                .filter(|q| !q.is_empty())
                .min_by_key(|q| (q[0].arrival_us, q[0].camera_id, q[0].sequence_no));
            let Some(t) = next.and_then(VecDeque::pop_front) else { return };
            self.receive(t.arrival_us, &t.bytes);
        }
    }

    fn handle(&mut self, closed: Vec<SyncWindow>) {
        for w in closed {
            let frames: Result<Vec<Tensor>> = w
                .frames
                .values()
                .map(|p| {
                    let (h, wd) = (p.height as usize, p.width as usize);
                    let filtered = median_filter_u8(&p.payload, h, wd, self.median_window)?;
                    Tensor::new(vec![h, wd], filtered.iter().map(|&v| v as f64 / 255.0).collect())
                })
                .collect();
            let outcome = frames.and_then(|f| (self.hook)(&w, &f)).map_err(|e| e.to_string());
            self.windows.push(WindowRecord {
                window_index: w.window_index,
                reference_time_us: w.reference_time_us,
                members: w.frames.values().map(|p| (p.camera_id, p.sequence_no)).collect(),
                completeness: w.completeness,
                close_latency_us: w.close_latency_us(),
                outcome,
            });
        }
    }
}

pub fn run_simulation(cfg: &SimConfig, hook: &mut WindowHook<'_>) -> Result<SimulationReport> {
    cfg.validate()?;
    let window_period = cfg.window_period();

    // Handshakes happen before streaming starts, so they are produced first in
    // both modes; only frame delivery differs.
    let outputs: Vec<CameraOutput> = match cfg.mode {
        SchedulerMode::Deterministic => cfg.cameras.iter().map(|c| produce_camera(c, cfg)).collect::<Result<_>>()?,
        SchedulerMode::Threaded => {
            let handles: Vec<_> = cfg
                .cameras
                .iter()
                .map(|c| {
                    let (c, cfg) = (c.clone(), cfg.clone());
                    thread::spawn(move || produce_camera(&c, &cfg))
                })
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().map_err(|_| Error::InvalidArgument("producer thread panicked".into()))?)
                .collect::<Result<_>>()?
        }
    };

    let samples: BTreeMap<u16, Vec<(u64, u64)>> = cfg
        .cameras
        .iter()
        .zip(&outputs)
        .map(|(c, o)| (c.camera_id, o.handshakes.clone()))
        .collect();
    let offsets = calibrate_clocks(&samples, cfg.latency_base_us as i64)?;

    let mut agg = Aggregator {
        sync: Synchronizer::new(offsets.clone(), window_period, SIM_EPOCH_US as i64),
        delivered: BTreeMap::new(),
        highest_seq: BTreeMap::new(),
        decode_errors: 0,
        median_window: cfg.median_window,
        windows: Vec::new(),
        hook,
    };

    let mut counts: Vec<(u64, u64)> = outputs.iter().map(|o| (o.produced, o.dropped_link)).collect();
    match cfg.mode {
        SchedulerMode::Deterministic => {
            let mut all: Vec<Transmission> = outputs.into_iter().flat_map(|o| o.transmissions).collect();
            all.sort_by_key(|t| (t.arrival_us, t.camera_id, t.sequence_no));
            for t in &all {
                agg.receive(t.arrival_us, &t.bytes);
            }
        }
        SchedulerMode::Threaded => {
            // Each producer sends in arrival order and then a terminator; the
            // aggregator releases the earliest buffered packet only once every
            // live producer has one pending, so delivery order matches the
            // deterministic scheduler.
            let (tx, rx) = mpsc::sync_channel::<(usize, Option<Transmission>)>(cfg.queue_capacity);
            let n = outputs.len();
            let producers: Vec<_> = outputs
                .into_iter()
                .enumerate()
                .map(|(i, mut o)| {
                    let tx = tx.clone();
                    o.transmissions.sort_by_key(|t| (t.arrival_us, t.sequence_no));
                    thread::spawn(move || {
                        for t in o.transmissions {
                            if tx.send((i, Some(t))).is_err() {
                                return;
                            }
                        }
                        let _ = tx.send((i, None));
                    })
                })
                .collect();
            drop(tx);
            let mut pending: Vec<VecDeque<Transmission>> = (0..n).map(|_| VecDeque::new()).collect();
            let mut live = vec![true; n];
            for (i, msg) in rx {
                match msg {
                    Some(t) => pending[i].push_back(t),
                    None => live[i] = false,
                }
                agg.release(&mut pending, &live);
            }
            for p in producers {
                p.join().map_err(|_| Error::InvalidArgument("producer thread panicked".into()))?;
            }
            live.iter_mut().for_each(|l| *l = false);
            agg.release(&mut pending, &live);
        }
    }
    let rest = agg.sync.finish();
    agg.handle(rest);

    let sync_counts = agg.sync.counters().clone();
    let cameras = cfg
        .cameras
        .iter()
        .zip(counts.iter_mut())
        .map(|(c, &mut (produced, dropped_link))| {
            let sc = sync_counts.get(&c.camera_id).copied().unwrap_or_default();
            let delivered = agg.delivered.get(&c.camera_id).copied().unwrap_or(0);
            let estimated_loss = match agg.highest_seq.get(&c.camera_id) {
                Some(&top) => 1.0 - delivered as f64 / (top as f64 + 1.0),
                None => 0.0,
            };
            CameraCounts {
                camera_id: c.camera_id,
                produced,
                delivered,
                dropped_link,
                dropped_late: sc.dropped_late,
                duplicates: sc.duplicates,
                estimated_loss,
                true_offset_us: c.clock_offset_us,
                estimated_offset_us: offsets[&c.camera_id],
            }
        })
        .collect();
    let lat: Vec<i64> = agg.windows.iter().map(|w| w.close_latency_us).collect();
    Ok(SimulationReport {
        seed: cfg.seed,
        window_period_us: window_period,
        cameras,
        decode_errors: agg.decode_errors,
        latency: LatencySummary::from_samples(&lat),
        windows: agg.windows,
    })
}
