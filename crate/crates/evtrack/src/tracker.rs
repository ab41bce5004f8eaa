//! 500 Hz tracking loop: event fan-out to EROS and the flow grid, twist
//! filtering, pose propagation, template correction, and UKF smoothing.

use crate::config::Config;
use crate::corrector::{correct, HYPOTHESIS_COUNT};
use crate::eros::ErosSurface;
use crate::flow::RoiGrid;
use crate::io::Mesh;
use crate::render::render_depth_roi;
use crate::types::{CameraIntrinsics, Event, Pose, TimedPose, Twist};
use crate::ukf::UkfSmoother;
use crate::velocity_kf::TwistFilter;
use nalgebra::{Quaternion, UnitQuaternion};
use std::time::Instant;

/// Advance a pose by a twist over dt.
///
/// Translation integrates the object-origin velocity (t + v dt); rotation
/// uses the closed-form quaternion update about the object origin with the
/// small-angle guard at |omega| dt < 1e-8.
pub fn propagate(pose: &Pose, twist: &Twist, dt: f64) -> Pose {
    let translation = pose.translation + twist.v * dt;
    let omega = twist.omega;
    let angle = omega.norm() * dt;
    let q = pose.rotation.into_inner();
    let delta = if angle < 1e-8 {
        // first-order: exp([0, w dt/2]) ~ 1 + [0, w dt/2]
        Quaternion::new(1.0, omega.x * dt * 0.5, omega.y * dt * 0.5, omega.z * dt * 0.5)
    } else {
        let half = angle * 0.5;
        let axis = omega / omega.norm();
        Quaternion::from_parts(half.cos(), axis * half.sin())
    };
    let rotation = UnitQuaternion::from_quaternion(delta * q);
    Pose::new(translation, rotation)
}

/// Per-cycle diagnostics, produced when debug output is requested.
#[derive(Debug, Clone)]
pub struct CycleDebug {
    pub t: f64,
    pub twist: Twist,
    pub flows: usize,
    pub applied_measurements: usize,
    pub skipped_measurements: usize,
    pub scores: Option<[f64; HYPOTHESIS_COUNT]>,
    pub selected: usize,
    pub blind: bool,
    pub cycle_ms: f64,
    /// Emitted flow vectors, retained only when debug output is requested.
    pub flow_vectors: Option<Vec<crate::flow::FlowVector>>,
}

#[derive(Debug, Clone)]
pub struct TrackOutput {
    pub trajectory: Vec<TimedPose>,
    pub blind_cycles: usize,
    pub skipped_measurements: usize,
    pub mean_cycle_ms: f64,
    pub debug: Vec<CycleDebug>,
}

#[derive(Debug, Clone)]
pub struct TrackerState {
    pub pose: Pose,
    pub clock: f64,
    pub twist_filter: TwistFilter,
    pub ukf: UkfSmoother,
    eros: ErosSurface,
    grid: RoiGrid,
    config: Config,
    k: CameraIntrinsics,
    /// Leaky integral of per-cycle correction rotation rates. The flow field
    /// of a compact object barely separates omega x r_mean from a pure
    /// translation, so the decayed twist filter systematically under-reads
    /// spin; this complementary term learns the residual rotation rate from
    /// the corrections the template stage keeps applying, and carries the
    /// pose through attitudes where the score landscape momentarily flattens
    /// and the corrector goes quiet.
    omega_bias: nalgebra::Vector3<f64>,
}

impl TrackerState {
    pub fn new(initial_pose: Pose, k: CameraIntrinsics, config: Config) -> Self {
        let mut ukf = UkfSmoother::new(&config);
        ukf.initialize(&initial_pose);
        Self {
            pose: initial_pose,
            clock: 0.0,
            twist_filter: TwistFilter::new(&config),
            ukf,
            eros: ErosSurface::new(k.width, k.height, config.eros_k, config.eros_lambda),
            grid: RoiGrid::new(&config),
            config,
            k,
            omega_bias: nalgebra::Vector3::zeros(),
        }
    }

    /// Run one cycle over the events in (clock, clock + dt]. Returns the
    /// emitted pose and diagnostics.
    pub fn cycle(&mut self, mesh: &Mesh, events: &[Event], collect_debug: bool) -> (TimedPose, CycleDebug) {
        let started = Instant::now();
        let dt = self.config.cycle_dt;
        let cycle_end = self.clock + dt;

        // fan-out: EROS per event, flow grid per cycle
        for e in events {
            let _ = self.eros.update(e);
        }
        let flows = self.grid.step(events, cycle_end);

        // twist filter: predict + sequential flow updates at rendered depth
        self.twist_filter.predict();
        let depth = render_depth_roi(mesh, &self.pose, &self.k).ok();
        let mut applied = 0usize;
        let mut skipped = 0usize;
        if let Some(raster) = &depth {
            let origin = self.pose.translation;
            for f in &flows {
                let z = raster.depth_near(f.u.round() as i64, f.v.round() as i64, 4);
                if z.is_finite() {
                    if self
                        .twist_filter
                        .update(f, z, &self.k, &origin, dt)
                        .is_ok_and(|o| o == crate::velocity_kf::UpdateOutcome::Applied)
                    {
                        applied += 1;
                    } else {
                        skipped += 1;
                    }
                } else {
                    skipped += 1;
                }
            }
        } else {
            skipped += flows.len();
        }

        // propagate with the filtered twist plus the learned rotation bias
        let twist = self.twist_filter.twist();
        let mut twist_eff = twist;
        twist_eff.omega += self.omega_bias;
        self.pose = propagate(&self.pose, &twist_eff, dt);

        // template correction
        let mut scores = None;
        let mut selected = 0usize;
        let mut blind = depth.is_none();
        let pose_before = self.pose;
        for _ in 0..self.config.corrector_iterations {
            let c = correct(&self.pose, &self.eros, mesh, &self.k, &self.config);
            blind = blind || c.scores.is_none();
            scores = c.scores;
            selected = c.selected;
            self.pose = c.pose;
        }

        // integrate the applied correction rate into the rotation bias; a
        // sustained one-sided stream of rotation picks means the propagated
        // twist is short, while clean tracking produces sign-alternating
        // picks that cancel in the integral
        if self.config.correction_feedback > 0.0 {
            let gain = self.config.correction_feedback;
            let dq = self.pose.rotation * pose_before.rotation.inverse();
            let dr = dq.scaled_axis();
            const LEAK: f64 = 0.998;
            self.omega_bias = self.omega_bias * LEAK + dr * (gain / dt);
        }

        // UKF smoothing on the output side
        let emitted = if self.config.ukf_enabled {
            self.ukf.predict(&twist, dt);
            self.ukf.update(&self.pose)
        } else {
            self.pose
        };

        self.clock = cycle_end;
        let debug = CycleDebug {
            t: cycle_end,
            twist,
            flows: flows.len(),
            applied_measurements: applied,
            skipped_measurements: skipped,
            scores: if collect_debug { scores } else { None },
            selected,
            blind,
            cycle_ms: started.elapsed().as_secs_f64() * 1e3,
            flow_vectors: if collect_debug { Some(flows) } else { None },
        };
        (TimedPose { t: cycle_end, pose: emitted }, debug)
    }
}

/// Track through an event stream. Cycles lie on the dt lattice starting at
/// zero; `duration` (defaulting to the last event timestamp) sets the end.
pub fn run(
    events: &[Event],
    mesh: &Mesh,
    k: &CameraIntrinsics,
    initial_pose: Pose,
    config: &Config,
    duration: Option<f64>,
    collect_debug: bool,
) -> TrackOutput {
    let end = duration.unwrap_or_else(|| events.last().map_or(0.0, |e| e.t));
    let dt = config.cycle_dt;
    let cycles = (end / dt).ceil() as usize;

    let mut state = TrackerState::new(initial_pose, *k, config.clone());
    let mut trajectory = Vec::with_capacity(cycles);
    let mut debug = Vec::new();
    let mut blind_cycles = 0usize;
    let mut skipped = 0usize;
    let mut total_ms = 0.0;

    let mut next = 0usize; // cursor into the sorted event stream
    for c in 0..cycles {
        let cycle_end = (c + 1) as f64 * dt;
        let start = next;
        while next < events.len() && events[next].t <= cycle_end {
            next += 1;
        }
        let (tp, dbg) = state.cycle(mesh, &events[start..next], collect_debug);
        blind_cycles += dbg.blind as usize;
        skipped += dbg.skipped_measurements;
        total_ms += dbg.cycle_ms;
        trajectory.push(tp);
        if collect_debug {
            debug.push(dbg);
        }
    }
    TrackOutput {
        trajectory,
        blind_cycles,
        skipped_measurements: skipped,
        mean_cycle_ms: if cycles > 0 { total_ms / cycles as f64 } else { 0.0 },
        debug,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::{UnitQuaternion, Vector3};

    #[test]
    fn zero_twist_leaves_pose_unchanged() {
        let pose = Pose::new(Vector3::new(0.1, 0.2, 0.5), UnitQuaternion::from_euler_angles(0.1, 0.2, 0.3));
        let p = propagate(&pose, &Twist::zero(), 0.002);
        assert_eq!(p, pose);
    }

    #[test]
    fn pure_translation_advances_linearly() {
        let pose = Pose::new(Vector3::new(0.0, 0.0, 0.5), UnitQuaternion::identity());
        let twist = Twist::new(Vector3::new(0.1, 0.0, 0.0), Vector3::zeros());
        let p = propagate(&pose, &twist, 0.002);
        assert_relative_eq!(p.translation.x, 0.0002, epsilon = 1e-15);
        assert_eq!(p.rotation, UnitQuaternion::identity());
    }

    #[test]
    fn five_hundred_steps_of_constant_omega_match_closed_form() {
        // pose at the origin so rotation about the camera origin and about
        // the object origin coincide
        let mut pose = Pose::identity();
        let twist = Twist::new(Vector3::zeros(), Vector3::new(0.0, 0.0, std::f64::consts::PI));
        for _ in 0..500 {
            pose = propagate(&pose, &twist, 0.002);
        }
        let expected = UnitQuaternion::from_axis_angle(&Vector3::z_axis(), std::f64::consts::PI);
        let err = crate::types::rotation_angle_between(
            &pose,
            &Pose::new(Vector3::zeros(), expected),
        )
        .to_radians();
        assert!(err < 1e-6, "axis-angle error {err} rad");
        assert!(pose.translation.norm() < 1e-12);
    }

    #[test]
    fn small_angle_guard_at_tiny_omega() {
        let pose = Pose::identity();
        let twist = Twist::new(Vector3::zeros(), Vector3::new(1e-12, 0.0, 0.0));
        let p = propagate(&pose, &twist, 0.002);
        assert!((p.rotation.into_inner().norm() - 1.0).abs() < 1e-12);
        // rotation accumulated is omega*dt
        assert!((p.rotation.angle() - 2e-15).abs() < 1e-16);
    }

    #[test]
    fn empty_stream_repeats_initial_pose() {
        let mesh = Mesh::cuboid(0.1, 0.1, 0.1);
        let k = CameraIntrinsics::new(600.0, 600.0, 320.0, 240.0, 640, 480).unwrap();
        let init = Pose::new(Vector3::new(0.0, 0.0, 0.5), UnitQuaternion::identity());
        let mut cfg = Config::default();
        cfg.ukf_enabled = false;
        let out = run(&[], &mesh, &k, init, &cfg, Some(0.02), false);
        assert_eq!(out.trajectory.len(), 10);
        for (i, tp) in out.trajectory.iter().enumerate() {
            assert_relative_eq!(tp.t, (i + 1) as f64 * 0.002, epsilon = 1e-12);
            assert!((tp.pose.translation - init.translation).norm() < 1e-12);
            assert!(crate::types::rotation_angle_between(&tp.pose, &init) < 1e-9);
            let n = tp.pose.rotation.into_inner().norm();
            assert!((n - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn blind_when_object_off_screen() {
        let mesh = Mesh::cuboid(0.1, 0.1, 0.1);
        let k = CameraIntrinsics::new(600.0, 600.0, 320.0, 240.0, 640, 480).unwrap();
        let init = Pose::new(Vector3::new(10.0, 0.0, 0.5), UnitQuaternion::identity());
        let out = run(&[], &mesh, &k, init, &Config::default(), Some(0.01), false);
        assert_eq!(out.blind_cycles, 5);
        // propagation-only with zero twist keeps the pose constant
        assert!((out.trajectory.last().unwrap().pose.translation - init.translation).norm() < 1e-9);
    }
}
