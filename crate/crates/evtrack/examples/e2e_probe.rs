use evtrack::config::Config;
use evtrack::io::Mesh;
use evtrack::metrics::evaluate;
use evtrack::simulator::{simulate, SimConfig};
use evtrack::tracker::run;
use evtrack::types::{CameraIntrinsics, Pose, TimedPose};
use nalgebra::{UnitQuaternion, Unit, Vector3};

fn tilt() -> UnitQuaternion<f64> {
    UnitQuaternion::from_axis_angle(&Unit::new_normalize(Vector3::new(1.0, 1.0, 0.0)), 0.6)
}

fn translate_scene(dur: f64) -> Vec<TimedPose> {
    let q = tilt();
    vec![
        TimedPose { t: 0.0, pose: Pose::new(Vector3::new(-0.2, 0.0, 0.5), q) },
        TimedPose { t: dur, pose: Pose::new(Vector3::new(-0.2 + 0.2 * dur, 0.0, 0.5), q) },
    ]
}

fn spin_scene(dur: f64) -> Vec<TimedPose> {
    let axis = Unit::new_normalize(Vector3::new(0.3, 1.0, 0.2));
    let rate = std::f64::consts::PI; // 180 deg/s
    let n = (dur / 0.01).round() as usize;
    (0..=n)
        .map(|i| {
            let t = dur * i as f64 / n as f64;
            let q = UnitQuaternion::from_axis_angle(&axis, rate * t) * tilt();
            TimedPose { t, pose: Pose::new(Vector3::new(0.0, 0.0, 0.5), q) }
        })
        .collect()
}

fn screw_scene(dur: f64) -> Vec<TimedPose> {
    let axis = Unit::new_normalize(Vector3::new(1.0, 0.0, 0.0));
    let rate = std::f64::consts::FRAC_PI_2; // 90 deg/s about the motion axis
    let n = (dur / 0.01).round() as usize;
    (0..=n)
        .map(|i| {
            let t = dur * i as f64 / n as f64;
            let q = UnitQuaternion::from_axis_angle(&axis, rate * t) * tilt();
            let p = Vector3::new(-0.15 + 0.15 * t, 0.0, 0.5);
            TimedPose { t, pose: Pose::new(p, q) }
        })
        .collect()
}

fn main() {
    let k = CameraIntrinsics::new(600.0, 600.0, 320.0, 240.0, 640, 480).unwrap();
    let mesh = Mesh::cuboid(0.1, 0.1, 0.1);
    let dur: f64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(2.0);

    for (name, traj) in [
        ("translate", translate_scene(dur)),
        ("spin", spin_scene(dur)),
        ("screw", screw_scene(dur)),
    ] {
        let t0 = std::time::Instant::now();
        let (events, gt) =
            simulate(&mesh, &traj, &k, &SimConfig { seed: 1, ..Default::default() }).unwrap();
        eprintln!(
            "{name}({dur}s): {} events in {:.1}s",
            events.len(),
            t0.elapsed().as_secs_f64()
        );

        for ukf in [true, false] {
            let cfg = Config { ukf_enabled: ukf, ..Config::default() };
            let t0 = std::time::Instant::now();
            let out = run(&events, &mesh, &k, traj[0].pose, &cfg, Some(dur), false);
            let rep = evaluate(&out.trajectory, &gt, 0.0011).unwrap();
            eprintln!(
                "  ukf={ukf}: ep_rmse={:.3}cm (std {:.3}) er_rmse={:.3}deg (std {:.3}) blind={} cycle={:.2}ms wall={:.1}s",
                rep.position_rmse_cm,
                rep.position_std_cm,
                rep.rotation_rmse_deg,
                rep.rotation_std_deg,
                out.blind_cycles,
                out.mean_cycle_ms,
                t0.elapsed().as_secs_f64()
            );
        }
    }
}
