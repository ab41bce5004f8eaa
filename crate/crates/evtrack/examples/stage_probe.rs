use evtrack::io::Mesh;
use evtrack::render::{edge_mask, projected_roi, rasterize, render_depth_roi, render_template};
use evtrack::types::{CameraIntrinsics, Pose};
use nalgebra::{UnitQuaternion, Vector3};
use std::time::Instant;

fn main() {
    let k = CameraIntrinsics::new(600.0, 600.0, 320.0, 240.0, 640, 480).unwrap();
    let mesh = Mesh::cuboid(0.1, 0.1, 0.1);
    let pose = Pose::new(Vector3::new(-0.2, 0.0, 0.5), UnitQuaternion::identity());

    let t = Instant::now();
    let roi = projected_roi(&mesh, &pose, &k, 0.05).unwrap();
    eprintln!("projected_roi: {:?} -> {}x{} at ({},{})", t.elapsed(), roi.w, roi.h, roi.x0, roi.y0);

    let t = Instant::now();
    let raster = rasterize(&mesh, &pose, &k, roi);
    eprintln!("rasterize: {:?}", t.elapsed());

    let t = Instant::now();
    let mask = edge_mask(&raster);
    eprintln!("edge_mask: {:?} ({} edge px)", t.elapsed(), mask.iter().filter(|&&v| v > 0.0).count());

    let t = Instant::now();
    let roi2 = projected_roi(&mesh, &pose, &k, 0.2).unwrap();
    let tpl = render_template(&mesh, &pose, &k, roi2, 1.0, 2.5).unwrap();
    eprintln!("render_template: {:?} ({}x{})", t.elapsed(), tpl.rect.w, tpl.rect.h);

    let t = Instant::now();
    let _d = render_depth_roi(&mesh, &pose, &k).unwrap();
    eprintln!("render_depth_roi: {:?}", t.elapsed());
}
