use evtrack::config::Config;
use evtrack::corrector::correct;
use evtrack::eros::ErosSurface;
use evtrack::flow::{find_triplets, RoiGrid};
use evtrack::io::Mesh;
use evtrack::simulator::{simulate, SimConfig};
use evtrack::types::{CameraIntrinsics, Pose, TimedPose};
use nalgebra::{UnitQuaternion, Vector3};
use std::time::Instant;

fn main() {
    let k = CameraIntrinsics::new(600.0, 600.0, 320.0, 240.0, 640, 480).unwrap();
    let mesh = Mesh::cuboid(0.1, 0.1, 0.1);
    let dur = 0.5;
    let a = Pose::new(Vector3::new(-0.2, 0.0, 0.5), UnitQuaternion::identity());
    let b = Pose::new(Vector3::new(-0.2 + 0.2 * dur, 0.0, 0.5), UnitQuaternion::identity());
    let traj = vec![TimedPose { t: 0.0, pose: a }, TimedPose { t: dur, pose: b }];
    let (events, _) =
        simulate(&mesh, &traj, &k, &SimConfig { seed: 1, ..Default::default() }).unwrap();
    eprintln!("{} events", events.len());

    let cfg = Config::default();
    let mut grid = RoiGrid::new(&cfg);
    let mut eros = ErosSurface::new(k.width, k.height, cfg.eros_k, cfg.eros_lambda);
    let mut cursor = 0usize;
    let mut pose = a;
    for c in 0..100usize {
        let end = (c + 1) as f64 * cfg.cycle_dt;
        let start = cursor;
        while cursor < events.len() && events[cursor].t <= end {
            cursor += 1;
        }
        let batch = &events[start..cursor];
        let t = Instant::now();
        for e in batch {
            let _ = eros.update(e);
        }
        let t_eros = t.elapsed();
        let t = Instant::now();
        let flows = grid.step(batch, end);
        let t_flow = t.elapsed();
        let t = Instant::now();
        let corr = correct(&pose, &eros, &mesh, &k, &cfg);
        pose = corr.pose;
        let t_corr = t.elapsed();
        if c % 10 == 0 || t_flow.as_millis() > 50 {
            eprintln!(
                "cycle {c}: {} ev, eros {:?}, flow {:?} ({} flows, {} cells), corr {:?}",
                batch.len(),
                t_eros,
                t_flow,
                flows.len(),
                grid.active_cells(),
                t_corr
            );
        }
        // cell occupancy snapshot at cycle 50
        if c == 50 {
            let t = Instant::now();
            let tr = find_triplets(&events[start..cursor.min(start + 64)], cfg.flow_tau, cfg.flow_collinearity_tol);
            eprintln!("  find_triplets(64 ev): {:?} -> {} triplets", t.elapsed(), tr.len());
        }
    }
}
