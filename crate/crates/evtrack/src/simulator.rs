//! Deterministic synthetic event generator: renders geometric edge masks
//! along a trajectory and emits one event per edge-mask toggle, plus optional
//! seeded background noise. Ground truth is sampled at 500 Hz.

use crate::io::Mesh;
use crate::render::{edge_mask, projected_roi, rasterize};
use crate::types::{CameraIntrinsics, Event, Pose, TimedPose};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_chacha::rand_core::SeedableRng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("time {0} outside trajectory span")]
    OutOfSpan(f64),
    #[error("trajectory needs at least 2 samples")]
    TooShort,
    #[error("object never visible along the trajectory")]
    NeverVisible,
}

#[derive(Debug, Clone)]
pub struct SimConfig {
    /// Frame step for edge-toggle detection, seconds.
    pub dt: f64,
    /// Background noise rate, events per second over the full sensor.
    pub noise_rate: f64,
    /// Timestamp jitter standard deviation, seconds.
    pub jitter_sigma: f64,
    pub seed: u64,
    /// Ground-truth sampling period, seconds.
    pub gt_dt: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self { dt: 0.0005, noise_rate: 0.0, jitter_sigma: 0.0, seed: 0, gt_dt: 0.002 }
    }
}

/// Linear interpolation of translation, slerp of rotation, between the
/// bracketing trajectory samples.
pub fn interpolate_pose(trajectory: &[TimedPose], t: f64) -> Result<Pose, SimError> {
    if trajectory.len() < 2 {
        return Err(SimError::TooShort);
    }
    let first = trajectory.first().unwrap();
    let last = trajectory.last().unwrap();
    if t < first.t || t > last.t {
        return Err(SimError::OutOfSpan(t));
    }
    let hi = trajectory.partition_point(|tp| tp.t < t).min(trajectory.len() - 1).max(1);
    let (a, b) = (&trajectory[hi - 1], &trajectory[hi]);
    let span = b.t - a.t;
    let alpha = if span > 0.0 { ((t - a.t) / span).clamp(0.0, 1.0) } else { 0.0 };
    let translation = a.pose.translation * (1.0 - alpha) + b.pose.translation * alpha;
    let rotation = a
        .pose
        .rotation
        .try_slerp(&b.pose.rotation, alpha, 1e-12)
        .unwrap_or(if alpha < 0.5 { a.pose.rotation } else { b.pose.rotation });
    Ok(Pose::new(translation, rotation))
}

/// Render the edge-pixel set at a pose; pixels are full-sensor coordinates.
fn edge_pixels(mesh: &Mesh, pose: &Pose, k: &CameraIntrinsics) -> Option<Vec<(u32, u32)>> {
    let roi = projected_roi(mesh, pose, k, 0.05).ok()?;
    let raster = rasterize(mesh, pose, k, roi);
    let mask = edge_mask(&raster);
    let mut out = Vec::new();
    for y in 0..roi.h {
        for x in 0..roi.w {
            if mask[y * roi.w + x] > 0.0 {
                let (px, py) = (roi.x0 + x as i64, roi.y0 + y as i64);
                if k.contains(px, py) {
                    out.push((px as u32, py as u32));
                }
            }
        }
    }
    Some(out)
}

/// Simulate an event stream and 500 Hz ground truth along the trajectory.
pub fn simulate(
    mesh: &Mesh,
    trajectory: &[TimedPose],
    k: &CameraIntrinsics,
    config: &SimConfig,
) -> Result<(Vec<Event>, Vec<TimedPose>), SimError> {
    if trajectory.len() < 2 {
        return Err(SimError::TooShort);
    }
    let t0 = trajectory.first().unwrap().t;
    let t1 = trajectory.last().unwrap().t;
    let steps = ((t1 - t0) / config.dt).floor() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let mut events: Vec<Event> = Vec::new();
    let mut prev: std::collections::HashSet<(u32, u32)> = std::collections::HashSet::new();
    let mut visible_frames = 0usize;
    // per-pixel last emitted timestamp keeps jittered streams monotone per pixel
    let mut last_emit: std::collections::HashMap<(u32, u32), f64> = std::collections::HashMap::new();

    for step in 0..=steps {
        let t = t0 + step as f64 * config.dt;
        let pixels = edge_pixels(mesh, &interpolate_pose(trajectory, t)?, k);
        let current: std::collections::HashSet<(u32, u32)> = match &pixels {
            Some(p) => {
                visible_frames += 1;
                p.iter().copied().collect()
            }
            None => std::collections::HashSet::new(),
        };
        if step > 0 {
            // toggles against the previous frame; sort for determinism
            let mut toggles: Vec<((u32, u32), i8)> = Vec::new();
            for &p in current.difference(&prev) {
                toggles.push((p, 1));
            }
            for &p in prev.difference(&current) {
                toggles.push((p, -1));
            }
            toggles.sort_unstable();
            let step_start = t - config.dt;
            for (p, polarity) in toggles {
                let mut ts = step_start + rng.random::<f64>() * config.dt;
                if config.jitter_sigma > 0.0 {
                    ts += gaussian(&mut rng) * config.jitter_sigma;
                }
                let floor = last_emit.get(&p).copied().unwrap_or(t0);
                let ts = ts.clamp(floor, t1);
                last_emit.insert(p, ts);
                events.push(Event { t: ts, x: p.0, y: p.1, polarity });
            }
        }
        prev = current;
    }
    if visible_frames * 10 < steps * 9 {
        return Err(SimError::NeverVisible);
    }

    // Poisson background noise: exponential inter-arrival times
    if config.noise_rate > 0.0 {
        let mut t = t0;
        loop {
            t += -rng.random::<f64>().max(1e-300).ln() / config.noise_rate;
            if t >= t1 {
                break;
            }
            events.push(Event {
                t,
                x: rng.random_range(0..k.width),
                y: rng.random_range(0..k.height),
                polarity: if rng.random::<bool>() { 1 } else { -1 },
            });
        }
    }

    events.sort_by(|a, b| {
        a.t.partial_cmp(&b.t)
            .unwrap()
            .then(a.y.cmp(&b.y))
            .then(a.x.cmp(&b.x))
            .then(a.polarity.cmp(&b.polarity))
    });

    let gt_steps = ((t1 - t0) / config.gt_dt).floor() as usize;
    let mut ground_truth = Vec::with_capacity(gt_steps + 1);
    for i in 0..=gt_steps {
        let t = t0 + i as f64 * config.gt_dt;
        ground_truth.push(TimedPose { t, pose: interpolate_pose(trajectory, t)? });
    }
    Ok((events, ground_truth))
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller
    let u1: f64 = rng.random::<f64>().max(1e-300);
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Count edge-mask toggles between consecutive rendered frames; independent
/// oracle for the simulated event count (noise-free streams).
pub fn count_toggles(
    mesh: &Mesh,
    trajectory: &[TimedPose],
    k: &CameraIntrinsics,
    dt: f64,
) -> Result<usize, SimError> {
    let t0 = trajectory.first().ok_or(SimError::TooShort)?.t;
    let t1 = trajectory.last().unwrap().t;
    let steps = ((t1 - t0) / dt).floor() as usize;
    let mut prev: std::collections::HashSet<(u32, u32)> = std::collections::HashSet::new();
    let mut count = 0usize;
    for step in 0..=steps {
        let t = t0 + step as f64 * dt;
        let current: std::collections::HashSet<(u32, u32)> =
            match edge_pixels(mesh, &interpolate_pose(trajectory, t)?, k) {
                Some(p) => p.into_iter().collect(),
                None => Default::default(),
            };
        if step > 0 {
            count += current.symmetric_difference(&prev).count();
        }
        prev = current;
    }
    Ok(count)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{UnitQuaternion, Vector3};

    fn k600() -> CameraIntrinsics {
        CameraIntrinsics::new(600.0, 600.0, 320.0, 240.0, 640, 480).unwrap()
    }

    fn static_trajectory() -> Vec<TimedPose> {
        let pose = Pose::new(Vector3::new(0.0, 0.0, 0.5), UnitQuaternion::identity());
        vec![TimedPose { t: 0.0, pose }, TimedPose { t: 0.1, pose }]
    }

    #[test]
    fn interpolation_hits_samples_and_midpoints() {
        let a = Pose::new(Vector3::new(0.0, 0.0, 0.4), UnitQuaternion::identity());
        let b = Pose::new(
            Vector3::new(0.0, 0.0, 0.6),
            UnitQuaternion::from_axis_angle(&Vector3::z_axis(), std::f64::consts::FRAC_PI_2),
        );
        let traj = vec![TimedPose { t: 0.0, pose: a }, TimedPose { t: 1.0, pose: b }];
        let at0 = interpolate_pose(&traj, 0.0).unwrap();
        assert_eq!(at0.translation, a.translation);
        let mid = interpolate_pose(&traj, 0.5).unwrap();
        assert!((mid.translation - Vector3::new(0.0, 0.0, 0.5)).norm() < 1e-12);
        assert!((mid.rotation.angle().to_degrees() - 45.0).abs() < 1e-9);
        assert!(interpolate_pose(&traj, 1.5).is_err());
        assert!(interpolate_pose(&traj, -0.1).is_err());
    }

    #[test]
    fn static_object_no_noise_emits_nothing() {
        let (events, gt) = simulate(
            &Mesh::cuboid(0.1, 0.1, 0.1),
            &static_trajectory(),
            &k600(),
            &SimConfig::default(),
        )
        .unwrap();
        assert!(events.is_empty());
        assert_eq!(gt.len(), 51); // 0..=0.1 s at 2 ms
    }

    #[test]
    fn deterministic_with_fixed_seed() {
        let mesh = Mesh::cuboid(0.1, 0.1, 0.1);
        let k = k600();
        let a = Pose::new(Vector3::new(-0.05, 0.0, 0.5), UnitQuaternion::identity());
        let b = Pose::new(Vector3::new(0.05, 0.0, 0.5), UnitQuaternion::identity());
        let traj = vec![TimedPose { t: 0.0, pose: a }, TimedPose { t: 0.5, pose: b }];
        let cfg = SimConfig { noise_rate: 1000.0, seed: 9, ..Default::default() };
        let (e1, _) = simulate(&mesh, &traj, &k, &cfg).unwrap();
        let (e2, _) = simulate(&mesh, &traj, &k, &cfg).unwrap();
        assert_eq!(e1, e2);
        assert!(!e1.is_empty());
    }

    #[test]
    fn events_sorted_and_in_span() {
        let mesh = Mesh::cuboid(0.1, 0.1, 0.1);
        let k = k600();
        let a = Pose::new(Vector3::new(-0.05, 0.0, 0.5), UnitQuaternion::identity());
        let b = Pose::new(Vector3::new(0.05, 0.0, 0.5), UnitQuaternion::identity());
        let traj = vec![TimedPose { t: 0.0, pose: a }, TimedPose { t: 0.5, pose: b }];
        let (events, _) =
            simulate(&mesh, &traj, &k, &SimConfig { noise_rate: 500.0, seed: 3, ..Default::default() })
                .unwrap();
        for w in events.windows(2) {
            assert!(w[0].t <= w[1].t);
        }
        assert!(events.iter().all(|e| e.t >= 0.0 && e.t <= 0.5));
    }

    #[test]
    fn event_count_matches_toggle_oracle() {
        let mesh = Mesh::cuboid(0.1, 0.1, 0.1);
        let k = k600();
        let a = Pose::new(Vector3::new(-0.04, 0.0, 0.5), UnitQuaternion::identity());
        let b = Pose::new(Vector3::new(0.04, 0.0, 0.5), UnitQuaternion::identity());
        let traj = vec![TimedPose { t: 0.0, pose: a }, TimedPose { t: 0.4, pose: b }];
        let cfg = SimConfig::default();
        let (events, _) = simulate(&mesh, &traj, &k, &cfg).unwrap();
        let oracle = count_toggles(&mesh, &traj, &k, cfg.dt).unwrap();
        assert_eq!(events.len(), oracle);
        assert!(oracle > 0);
    }

    #[test]
    fn noise_free_events_lie_near_edges() {
        let mesh = Mesh::cuboid(0.1, 0.1, 0.1);
        let k = k600();
        let a = Pose::new(Vector3::new(-0.04, 0.0, 0.5), UnitQuaternion::identity());
        let b = Pose::new(Vector3::new(0.04, 0.0, 0.5), UnitQuaternion::identity());
        let traj = vec![TimedPose { t: 0.0, pose: a }, TimedPose { t: 0.2, pose: b }];
        let cfg = SimConfig::default();
        let (events, _) = simulate(&mesh, &traj, &k, &cfg).unwrap();
        for e in events.iter().step_by(97) {
            // nearest frame's edge set must contain a pixel within 2 px
            let step = ((e.t / cfg.dt).round() as usize).min(((0.2) / cfg.dt) as usize);
            let t = step as f64 * cfg.dt;
            let pixels = edge_pixels(&mesh, &interpolate_pose(&traj, t).unwrap(), &k).unwrap();
            let near = pixels.iter().any(|&(x, y)| {
                (x as i64 - e.x as i64).abs() <= 2 && (y as i64 - e.y as i64).abs() <= 2
            });
            assert!(near, "event at ({}, {}) far from any edge", e.x, e.y);
        }
    }

    #[test]
    fn speed_independent_pixel_set() {
        let mesh = Mesh::cuboid(0.1, 0.1, 0.1);
        let k = k600();
        let a = Pose::new(Vector3::new(-0.04, 0.0, 0.5), UnitQuaternion::identity());
        let b = Pose::new(Vector3::new(0.04, 0.0, 0.5), UnitQuaternion::identity());
        let slow = vec![TimedPose { t: 0.0, pose: a }, TimedPose { t: 0.4, pose: b }];
        let fast = vec![TimedPose { t: 0.0, pose: a }, TimedPose { t: 0.2, pose: b }];
        // halve dt for the fast sweep so per-step displacement matches
        let (es, _) = simulate(&mesh, &slow, &k, &SimConfig::default()).unwrap();
        let (ef, _) =
            simulate(&mesh, &fast, &k, &SimConfig { dt: 0.00025, ..Default::default() }).unwrap();
        let set = |evs: &[Event]| -> std::collections::HashSet<(u32, u32)> {
            evs.iter().map(|e| (e.x, e.y)).collect()
        };
        let (ss, sf) = (set(&es), set(&ef));
        let diff = ss.symmetric_difference(&sf).count();
        assert!(
            diff <= ss.len() / 10,
            "pixel sets differ by {diff} of {}",
            ss.len()
        );
        let dur_s = es.last().unwrap().t - es.first().unwrap().t;
        let dur_f = ef.last().unwrap().t - ef.first().unwrap().t;
        assert!((dur_f - dur_s / 2.0).abs() < 0.02);
    }

    #[test]
    fn never_visible_errors() {
        let mesh = Mesh::cuboid(0.1, 0.1, 0.1);
        let pose = Pose::new(Vector3::new(10.0, 0.0, 0.5), UnitQuaternion::identity());
        let traj = vec![TimedPose { t: 0.0, pose }, TimedPose { t: 0.1, pose }];
        assert!(matches!(
            simulate(&mesh, &traj, &k600(), &SimConfig::default()),
            Err(SimError::NeverVisible)
        ));
    }
}
