use evtrack::config::Config;
use evtrack::corrector::score;
use evtrack::eros::ErosSurface;
use evtrack::io::Mesh;
use evtrack::render::{projected_roi, render_template};
use evtrack::simulator::{simulate, SimConfig};
use evtrack::types::{CameraIntrinsics, Pose, TimedPose};
use nalgebra::{Unit, UnitQuaternion, Vector3};

fn main() {
    let k = CameraIntrinsics::new(600.0, 600.0, 320.0, 240.0, 640, 480).unwrap();
    let mesh = Mesh::cuboid(0.1, 0.1, 0.1);
    let dur = 1.0;
    let tilt = UnitQuaternion::from_axis_angle(
        &Unit::new_normalize(Vector3::new(1.0, 1.0, 0.0)),
        0.6,
    );
    let axis = Unit::new_normalize(Vector3::new(0.3, 1.0, 0.2));
    let rate = std::f64::consts::PI;
    let n = (dur / 0.01_f64).round() as usize;
    let traj: Vec<TimedPose> = (0..=n)
        .map(|i| {
            let t = dur * i as f64 / n as f64;
            let q = UnitQuaternion::from_axis_angle(&axis, rate * t) * tilt;
            TimedPose { t, pose: Pose::new(Vector3::new(0.0, 0.0, 0.5), q) }
        })
        .collect();
    let (events, gt) =
        simulate(&mesh, &traj, &k, &SimConfig { seed: 1, ..Default::default() }).unwrap();
    let cfg = Config::default();
    let t0: f64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(0.85);
    let mut eros = ErosSurface::new(k.width, k.height, cfg.eros_k, cfg.eros_lambda);
    for e in events.iter().filter(|e| e.t <= t0) {
        let _ = eros.update(e);
    }
    let gt_pose = gt
        .iter()
        .min_by(|x, y| (x.t - t0).abs().partial_cmp(&(y.t - t0).abs()).unwrap())
        .unwrap()
        .pose;

    let eval = |pose: &Pose| -> f64 {
        let roi = projected_roi(&mesh, pose, &k, cfg.roi_dilation).unwrap();
        let mut patch = eros.snapshot_rect(roi.x0, roi.y0, roi.w, roi.h);
        let pmax = patch.iter().cloned().fold(0.0_f64, f64::max);
        for v in patch.iter_mut() {
            if *v < cfg.patch_trail_cutoff * pmax {
                *v = 0.0;
            }
        }
        let t = render_template(&mesh, pose, &k, roi, cfg.dog_sigma1, cfg.dog_sigma2).unwrap();
        let e = t.values.iter().map(|v| v * v).sum::<f64>().sqrt();
        score(&t, &patch) / e.max(1e-12)
    };

    for (name, ax) in [
        ("cam-x", Vector3::x_axis()),
        ("cam-y", Vector3::y_axis()),
        ("cam-z", Vector3::z_axis()),
        ("spin ", axis),
        ("esc  ", Unit::new_normalize(Vector3::new(-0.83, -0.55, 0.0))),
        ("tiltn", Unit::new_normalize(Vector3::new(-1.0, -1.0, 0.0))),
    ] {
        eprint!("{name}: ");
        for deg in [-15.0, -10.0, -5.0, -2.0, 0.0, 2.0, 5.0, 10.0, 15.0] {
            let dq = UnitQuaternion::from_axis_angle(&ax, (deg as f64).to_radians());
            let p = Pose::new(gt_pose.translation, dq * gt_pose.rotation);
            eprint!("{deg}:{:.3} ", eval(&p));
        }
        eprintln!();
    }
}
