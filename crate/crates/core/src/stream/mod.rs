//! Simulated multi-camera acquisition: wire format, clock calibration,
//! window synchronization, preprocessing and feedback.

pub mod camera;
pub mod clock;
pub mod feedback;
pub mod median;
pub mod packet;
pub mod sim;
pub mod sync;

pub use camera::{parse_camera_config, CameraSpec};
pub use clock::calibrate_clocks;
pub use feedback::{emit_feedback, FeedbackMessage};
pub use median::{median_filter, median_filter_u8};
pub use packet::{decode_packet, encode_packet, PacketError, StreamPacket};
pub use sim::{run_simulation, SchedulerMode, SimConfig, SimulationReport};
pub use sync::{synchronize, SyncWindow, Synchronizer};
