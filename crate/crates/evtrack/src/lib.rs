//! Learning-free 6-DoF object pose tracking for event cameras.
//!
//! The pipeline alternates propagation and correction at a fixed cycle rate:
//! events feed an exponentially-decaying edge surface and a triplet-matching
//! optical-flow front end; flow vectors drive a Kalman filter over the object
//! twist; the pose is propagated by the filtered twist and then locally
//! corrected by scoring a small set of rendered edge templates against the
//! event surface. An optional unscented filter smooths the output trajectory.
//!
//! A deterministic synthetic event simulator ([`simulator`]) provides ground
//! truth for end-to-end evaluation ([`metrics`]).

pub mod config;
pub mod corrector;
pub mod eros;
pub mod flow;
pub mod io;
pub mod metrics;
pub mod render;
pub mod simulator;
pub mod tracker;
pub mod types;
pub mod ukf;
pub mod velocity_kf;

pub use config::Config;
pub use types::{CameraIntrinsics, Event, Pose, TimedPose, Twist};
