use evtrack::config::Config;
use evtrack::io::Mesh;
use evtrack::simulator::{simulate, SimConfig};
use evtrack::tracker::run;
use evtrack::types::{CameraIntrinsics, Pose, TimedPose};
use nalgebra::{UnitQuaternion, Vector3};

fn main() {
    let k = CameraIntrinsics::new(600.0, 600.0, 320.0, 240.0, 640, 480).unwrap();
    let mesh = Mesh::cuboid(0.1, 0.1, 0.1);
    let dur: f64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(0.4);
    let scene = std::env::args().nth(2).unwrap_or_else(|| "translate".into());
    let tilt = UnitQuaternion::from_axis_angle(
        &nalgebra::Unit::new_normalize(Vector3::new(1.0, 1.0, 0.0)),
        0.6,
    );
    let traj: Vec<TimedPose> = match scene.as_str() {
        "translate" => {
            let a = Pose::new(Vector3::new(-0.2, 0.0, 0.5), tilt);
            let b = Pose::new(Vector3::new(-0.2 + 0.2 * dur, 0.0, 0.5), tilt);
            vec![TimedPose { t: 0.0, pose: a }, TimedPose { t: dur, pose: b }]
        }
        "spin" => {
            let axis = nalgebra::Unit::new_normalize(Vector3::new(0.3, 1.0, 0.2));
            let rate = std::f64::consts::PI;
            let n = (dur / 0.01).round() as usize;
            (0..=n)
                .map(|i| {
                    let t = dur * i as f64 / n as f64;
                    let q = UnitQuaternion::from_axis_angle(&axis, rate * t) * tilt;
                    TimedPose { t, pose: Pose::new(Vector3::new(0.0, 0.0, 0.5), q) }
                })
                .collect()
        }
        "screw" => {
            let axis = nalgebra::Unit::new_normalize(Vector3::new(1.0, 0.0, 0.0));
            let rate = std::f64::consts::FRAC_PI_2;
            let n = (dur / 0.01).round() as usize;
            (0..=n)
                .map(|i| {
                    let t = dur * i as f64 / n as f64;
                    let q = UnitQuaternion::from_axis_angle(&axis, rate * t) * tilt;
                    let p = Vector3::new(-0.15 + 0.15 * t, 0.0, 0.5);
                    TimedPose { t, pose: Pose::new(p, q) }
                })
                .collect()
        }
        other => panic!("unknown scene {other}"),
    };
    let a = traj[0].pose;
    let (events, gt) =
        simulate(&mesh, &traj, &k, &SimConfig { seed: 1, ..Default::default() }).unwrap();
    eprintln!("{} events", events.len());

    let qw: f64 = std::env::var("EV_QW").ok().and_then(|s| s.parse().ok()).unwrap_or(0.1);
    let ci: usize = std::env::var("EV_CI").ok().and_then(|s| s.parse().ok()).unwrap_or(1);
    let cfg = Config {
        ukf_enabled: false,
        kf_q_w: qw,
        corrector_iterations: ci,
        ..Config::default()
    };
    let out = run(&events, &mesh, &k, a, &cfg, Some(dur), true);
    let mut csv =
        String::from("cycle,t,ex,ey,ez,rot,ax,ay,az,sel,flows,applied,score_null,score_best\n");
    for (i, (tp, d)) in out.trajectory.iter().zip(&out.debug).enumerate() {
        let gidx = gt.iter().position(|g| (g.t - tp.t).abs() < 1e-9).unwrap();
        let err = tp.pose.translation - gt[gidx].pose.translation;
        let rerr = evtrack::types::rotation_angle_between(&tp.pose, &gt[gidx].pose);
        // error rotation axis in camera frame
        let dq = tp.pose.rotation * gt[gidx].pose.rotation.inverse();
        let axv = dq.scaled_axis();
        let axn = if axv.norm() > 1e-9 { axv / axv.norm() } else { axv };
        let (s0, sb) = d
            .scores
            .map(|s| (s[0], s[d.selected]))
            .unwrap_or((f64::NAN, f64::NAN));
        csv.push_str(&format!(
            "{},{:.4},{:.5},{:.5},{:.5},{:.3},{:.3},{:.3},{:.3},{},{},{},{:.3},{:.3}\n",
            i, tp.t, err.x, err.y, err.z, rerr, axn.x, axn.y, axn.z,
            d.selected, d.flows, d.applied_measurements, s0, sb
        ));
    }
    std::fs::write("/tmp/diag_cycles.csv", csv).unwrap();

    let mut fcsv = String::from("cycle,t,u,v,fu,fv,support\n");
    for (i, (tp, d)) in out.trajectory.iter().zip(&out.debug).enumerate() {
        if !(300..=520).contains(&i) {
            continue;
        }
        if let Some(fv) = d.flow_vectors.as_ref() {
            for f in fv {
                fcsv.push_str(&format!(
                    "{},{:.4},{:.1},{:.1},{:.1},{:.1},{}\n",
                    i, tp.t, f.u, f.v, f.fu, f.fv, f.support
                ));
            }
        }
    }
    std::fs::write("/tmp/diag_flows.csv", fcsv).unwrap();

    let stride = (out.trajectory.len() / 20).max(1);
    for (i, (tp, d)) in out.trajectory.iter().zip(&out.debug).enumerate() {
        if i % stride != 0 {
            continue;
        }
        // ground truth at the same timestamp
        let gidx = gt.iter().position(|g| (g.t - tp.t).abs() < 1e-9).unwrap();
        let err = tp.pose.translation - gt[gidx].pose.translation;
        let rerr = evtrack::types::rotation_angle_between(&tp.pose, &gt[gidx].pose);
        let (mfu, mfv, msup) = d
            .flow_vectors
            .as_ref()
            .map(|fv| {
                let n = fv.len().max(1) as f64;
                (
                    fv.iter().map(|f| f.fu).sum::<f64>() / n,
                    fv.iter().map(|f| f.fv).sum::<f64>() / n,
                    fv.iter().map(|f| f.support).sum::<usize>() as f64 / n,
                )
            })
            .unwrap_or((0.0, 0.0, 0.0));
        eprintln!(
            "c{:4} t={:.3} err=({:+.4},{:+.4},{:+.4})m rot={:5.2}deg twist_v=({:+.3},{:+.3},{:+.3}) w=({:+.2},{:+.2},{:+.2}) flows={} app={} skip={} sel={:2} mF=({:+.0},{:+.0}) msup={:.0}",
            i, tp.t, err.x, err.y, err.z, rerr,
            d.twist.v.x, d.twist.v.y, d.twist.v.z,
            d.twist.omega.x, d.twist.omega.y, d.twist.omega.z,
            d.flows, d.applied_measurements, d.skipped_measurements, d.selected, mfu, mfv, msup
        );
    }
}
