use evtrack::config::Config;
use evtrack::corrector::{perturbations, score, PoseDelta};
use evtrack::eros::ErosSurface;
use evtrack::io::Mesh;
use evtrack::render::{projected_roi, render_template};
use evtrack::simulator::{simulate, SimConfig};
use evtrack::types::{project, CameraIntrinsics, Pose, TimedPose};
use nalgebra::{UnitQuaternion, Vector3};

fn main() {
    let k = CameraIntrinsics::new(600.0, 600.0, 320.0, 240.0, 640, 480).unwrap();
    let mesh = Mesh::cuboid(0.1, 0.1, 0.1);
    let dur = 2.0;
    let a = Pose::new(Vector3::new(-0.2, 0.0, 0.5), UnitQuaternion::identity());
    let b = Pose::new(Vector3::new(-0.2 + 0.2 * dur, 0.0, 0.5), UnitQuaternion::identity());
    let traj = vec![TimedPose { t: 0.0, pose: a }, TimedPose { t: dur, pose: b }];
    let (events, gt) =
        simulate(&mesh, &traj, &k, &SimConfig { seed: 1, ..Default::default() }).unwrap();
    let cfg = Config::default();

    // feed EROS with everything up to t0
    let t0: f64 = std::env::args().nth(2).and_then(|s| s.parse().ok()).unwrap_or(1.4);
    let mut eros = ErosSurface::new(k.width, k.height, cfg.eros_k, cfg.eros_lambda);
    for e in events.iter().filter(|e| e.t <= t0) {
        let _ = eros.update(e);
    }
    let gt_pose = {
        let g = gt.iter().min_by(|x, y| {
            (x.t - t0).abs().partial_cmp(&(y.t - t0).abs()).unwrap()
        });
        g.unwrap().pose
    };

    let names = [
        "null", "+x ", "-x ", "+y ", "-y ", "+z ", "-z ", "+rx", "-rx", "+ry", "-ry", "+rz",
        "-rz",
    ];
    // offsets in pixels converted to meters at z=0.5 / fx=600
    for (lag_px, dz, yaw_deg) in [
        (0.0, 0.0, 0.0),
        (1.0, 0.0, 0.0),
        (0.0, 0.0, 1.0),
        (0.0, 0.0, -1.0),
        (0.0, 0.0, 3.0),
        (0.0, 0.0, -3.0),
        (1.0, 0.0, -1.0),
        (0.0, -0.01, 0.0),
    ] {
        let yaw = UnitQuaternion::from_axis_angle(
            &Vector3::y_axis(),
            (yaw_deg as f64).to_radians(),
        );
        let pose = Pose::new(
            gt_pose.translation - Vector3::new(lag_px * 0.5 / 600.0, 0.0, -dz),
            yaw * gt_pose.rotation,
        );
        let roi = projected_roi(&mesh, &pose, &k, cfg.roi_dilation).unwrap();
        let z_ref = pose.translation.z;
        let (u, v) = project(&pose.translation, &k).unwrap();
        let p_centre = ((u - k.cx).powi(2) + (v - k.cy).powi(2)).sqrt();
        let r_roi = 0.5 * ((roi.w as f64).powi(2) + (roi.h as f64).powi(2)).sqrt()
            / (1.0 + cfg.roi_dilation);
        let deltas = perturbations(z_ref, p_centre + r_roi, &k, cfg.delta_p, cfg.theta_deg);
        let mut patch = eros.snapshot_rect(roi.x0, roi.y0, roi.w, roi.h);
        let thresh: f64 = std::env::args()
            .nth(1)
            .and_then(|s| s.parse().ok())
            .unwrap_or(0.0);
        let pmax = patch.iter().cloned().fold(0.0_f64, f64::max);
        for v in patch.iter_mut() {
            if *v < thresh * pmax {
                *v = 0.0;
            }
        }
        let mut raw = Vec::new();
        let mut norm = Vec::new();
        for d in &deltas {
            let pose_i = PoseDelta::apply(d, &pose);
            let t = render_template(&mesh, &pose_i, &k, roi, cfg.dog_sigma1, cfg.dog_sigma2)
                .unwrap();
            let s = score(&t, &patch);
            let energy = t.values.iter().map(|v| v * v).sum::<f64>().sqrt();
            raw.push(s);
            norm.push(s / energy.max(1e-12));
        }
        let am = |v: &Vec<f64>| {
            let mut b = 0;
            for (i, x) in v.iter().enumerate() {
                if *x > v[b] {
                    b = i;
                }
            }
            b
        };
        let (br, bn) = (am(&raw), am(&norm));
        eprintln!("lag {lag_px} px dz {dz} m yaw {yaw_deg} deg:");
        eprint!("  raw : ");
        for (i, s) in raw.iter().enumerate() {
            eprint!("{}={:.1}{} ", names[i], s, if i == br { "*" } else { "" });
        }
        eprintln!();
        eprint!("  norm: ");
        for (i, s) in norm.iter().enumerate() {
            eprint!("{}={:.3}{} ", names[i], s, if i == bn { "*" } else { "" });
        }
        eprintln!();
    }
}
