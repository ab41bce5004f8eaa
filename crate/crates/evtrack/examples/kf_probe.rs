use evtrack::config::Config;
use evtrack::flow::FlowVector;
use evtrack::types::CameraIntrinsics;
use evtrack::velocity_kf::{interaction_matrix, TwistFilter};
use nalgebra::Vector6;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() {
    let k = CameraIntrinsics::new(600.0, 600.0, 320.0, 240.0, 640, 480).unwrap();
    let target = Vector6::new(0.2, -0.1, 0.05, 0.3, -0.2, 0.5);
    for m in [8, 32, 100, 200] {
        let cfg = Config::default();
        let mut f = TwistFilter::new(&cfg);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            f.predict();
            for _ in 0..m {
                let u = rng.random_range(100.0..540.0);
                let v = rng.random_range(80.0..400.0);
                let z = 0.5;
                let j = interaction_matrix(u, v, z, &k).unwrap();
                let pv = j * target;
                let flow = FlowVector { u, v, fu: pv.x, fv: pv.y, t: 0.0, support: 3 };
                f.update(&flow, z, &k, cfg.cycle_dt).unwrap();
            }
        }
        let t = f.twist();
        let got = Vector6::new(t.v.x, t.v.y, t.v.z, t.omega.x, t.omega.y, t.omega.z);
        let rel = (got - target).amax() / target.norm();
        println!("m={m:4}  max rel err = {rel:.4}");
    }
}
