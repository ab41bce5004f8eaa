//! Software renderer: z-buffered rasterization for depth lookups, geometric
//! edge masks, and Sobel + Difference-of-Gaussians appearance templates.

use crate::io::Mesh;
use crate::types::{project, CameraIntrinsics, Pose};
use nalgebra::Vector3;
use thiserror::Error;

/// Background sentinel in depth buffers.
pub const NO_DEPTH: f64 = f64::INFINITY;

/// Sentinel face id for background pixels.
pub const NO_FACE: i32 = -1;

#[derive(Debug, Error)]
pub enum RenderError {
    #[error("object not visible")]
    NotVisible,
}

/// Pixel-aligned rectangle; origin may lie outside the image.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Rect {
    pub x0: i64,
    pub y0: i64,
    pub w: usize,
    pub h: usize,
}

impl Rect {
    pub fn contains(&self, x: i64, y: i64) -> bool {
        x >= self.x0 && y >= self.y0 && x < self.x0 + self.w as i64 && y < self.y0 + self.h as i64
    }

    pub fn dilated(&self, margin: i64) -> Rect {
        Rect {
            x0: self.x0 - margin,
            y0: self.y0 - margin,
            w: self.w + 2 * margin as usize,
            h: self.h + 2 * margin as usize,
        }
    }
}

/// Depth + face-id raster over a rectangle.
#[derive(Debug, Clone)]
pub struct Raster {
    pub rect: Rect,
    pub depth: Vec<f64>,
    pub face: Vec<i32>,
    /// Camera-frame unit normal per mesh triangle.
    pub normals: Vec<Vector3<f64>>,
}

impl Raster {
    pub fn depth_at(&self, x: i64, y: i64) -> f64 {
        if !self.rect.contains(x, y) {
            return NO_DEPTH;
        }
        let ix = (y - self.rect.y0) as usize * self.rect.w + (x - self.rect.x0) as usize;
        self.depth[ix]
    }

    /// Depth at (x, y), falling back to the nearest rendered pixel within
    /// `radius`. Flow vectors sit on edge pixels that often straddle the
    /// silhouette boundary, so an exact lookup misses roughly half of them.
    pub fn depth_near(&self, x: i64, y: i64, radius: i64) -> f64 {
        let z = self.depth_at(x, y);
        if z.is_finite() {
            return z;
        }
        for r in 1..=radius {
            let mut best = f64::INFINITY;
            for dy in -r..=r {
                for dx in -r..=r {
                    if dx.abs() < r && dy.abs() < r {
                        continue;
                    }
                    let z = self.depth_at(x + dx, y + dy);
                    if z < best {
                        best = z;
                    }
                }
            }
            if best.is_finite() {
                return best;
            }
        }
        NO_DEPTH
    }

    pub fn face_at(&self, x: i64, y: i64) -> i32 {
        if !self.rect.contains(x, y) {
            return NO_FACE;
        }
        let ix = (y - self.rect.y0) as usize * self.rect.w + (x - self.rect.x0) as usize;
        self.face[ix]
    }
}

/// Full-frame depth map for the velocity filter.
#[derive(Debug, Clone)]
pub struct DepthMap {
    pub width: usize,
    pub height: usize,
    pub depth: Vec<f64>,
}

impl DepthMap {
    pub fn at(&self, x: i64, y: i64) -> f64 {
        if x < 0 || y < 0 || x >= self.width as i64 || y >= self.height as i64 {
            return NO_DEPTH;
        }
        self.depth[y as usize * self.width + x as usize]
    }
}

/// Signed edge-expectation image over an ROI; max |value| normalized to 1.
#[derive(Debug, Clone)]
pub struct TemplateImage {
    pub rect: Rect,
    pub values: Vec<f64>,
}

const NEAR_PLANE: f64 = 1e-4;

/// Bounding box of the projected mesh, dilated by `dilation` (fraction of the
/// larger side). Errors if no vertex projects in front of the camera.
pub fn projected_roi(
    mesh: &Mesh,
    pose: &Pose,
    k: &CameraIntrinsics,
    dilation: f64,
) -> Result<Rect, RenderError> {
    let mut min_u = f64::INFINITY;
    let mut max_u = f64::NEG_INFINITY;
    let mut min_v = f64::INFINITY;
    let mut max_v = f64::NEG_INFINITY;
    let mut any = false;
    for v in &mesh.vertices {
        let p = pose.transform_point(v);
        if p.z <= NEAR_PLANE {
            continue;
        }
        if let Ok((u, w)) = project(&p, k) {
            min_u = min_u.min(u);
            max_u = max_u.max(u);
            min_v = min_v.min(w);
            max_v = max_v.max(w);
            any = true;
        }
    }
    if !any {
        return Err(RenderError::NotVisible);
    }
    let side = (max_u - min_u).max(max_v - min_v);
    let m = (side * dilation).ceil() as i64 + 1;
    let x0 = min_u.floor() as i64 - m;
    let y0 = min_v.floor() as i64 - m;
    let x1 = max_u.ceil() as i64 + m;
    let y1 = max_v.ceil() as i64 + m;
    // reject ROIs fully outside the sensor
    if x1 < 0 || y1 < 0 || x0 >= k.width as i64 || y0 >= k.height as i64 {
        return Err(RenderError::NotVisible);
    }
    Ok(Rect { x0, y0, w: (x1 - x0 + 1) as usize, h: (y1 - y0 + 1) as usize })
}

/// Z-buffered rasterization of the mesh over `rect`. Pixel (x, y) is sampled
/// at continuous coordinate (x, y); depth is perspective-correct (1/z
/// interpolated in screen space). Top-left fill rule, double-precision edge
/// functions.
pub fn rasterize(mesh: &Mesh, pose: &Pose, k: &CameraIntrinsics, rect: Rect) -> Raster {
    let n = rect.w * rect.h;
    let mut depth = vec![NO_DEPTH; n];
    let mut face = vec![NO_FACE; n];

    let cam_pts: Vec<Vector3<f64>> = mesh.vertices.iter().map(|v| pose.transform_point(v)).collect();
    let mut normals = Vec::with_capacity(mesh.triangles.len());

    for (fid, tri) in mesh.triangles.iter().enumerate() {
        let (a, b, c) = (&cam_pts[tri[0]], &cam_pts[tri[1]], &cam_pts[tri[2]]);
        let normal = (b - a).cross(&(c - a));
        normals.push(if normal.norm() > 0.0 { normal.normalize() } else { Vector3::z() });
        if a.z <= NEAR_PLANE || b.z <= NEAR_PLANE || c.z <= NEAR_PLANE {
            continue; // near-plane clipping of whole triangles
        }
        let pa = (k.fx * a.x / a.z + k.cx, k.fy * a.y / a.z + k.cy, 1.0 / a.z);
        let pb = (k.fx * b.x / b.z + k.cx, k.fy * b.y / b.z + k.cy, 1.0 / b.z);
        let pc = (k.fx * c.x / c.z + k.cx, k.fy * c.y / c.z + k.cy, 1.0 / c.z);

        let area = edge_fn(pa, pb, (pc.0, pc.1));
        if area == 0.0 {
            continue;
        }
        // normalize winding so edge functions are >= 0 inside
        let (p0, p1, p2, area) =
            if area > 0.0 { (pa, pb, pc, area) } else { (pa, pc, pb, -area) };

        let min_x = p0.0.min(p1.0).min(p2.0).floor() as i64;
        let max_x = p0.0.max(p1.0).max(p2.0).ceil() as i64;
        let min_y = p0.1.min(p1.1).min(p2.1).floor() as i64;
        let max_y = p0.1.max(p1.1).max(p2.1).ceil() as i64;
        let x_lo = min_x.max(rect.x0);
        let x_hi = max_x.min(rect.x0 + rect.w as i64 - 1);
        let y_lo = min_y.max(rect.y0);
        let y_hi = max_y.min(rect.y0 + rect.h as i64 - 1);

        let tl0 = top_left(p1, p2);
        let tl1 = top_left(p2, p0);
        let tl2 = top_left(p0, p1);

        for y in y_lo..=y_hi {
            for x in x_lo..=x_hi {
                let p = (x as f64, y as f64);
                let w0 = edge_fn_shared(p1, p2, p);
                let w1 = edge_fn_shared(p2, p0, p);
                let w2 = edge_fn_shared(p0, p1, p);
                let inside = (w0 > 0.0 || (w0 == 0.0 && tl0))
                    && (w1 > 0.0 || (w1 == 0.0 && tl1))
                    && (w2 > 0.0 || (w2 == 0.0 && tl2));
                if !inside {
                    continue;
                }
                let inv_z = (w0 * p0.2 + w1 * p1.2 + w2 * p2.2) / area;
                let z = 1.0 / inv_z;
                let ix = (y - rect.y0) as usize * rect.w + (x - rect.x0) as usize;
                if z < depth[ix] {
                    depth[ix] = z;
                    face[ix] = fid as i32;
                }
            }
        }
    }
    Raster { rect, depth, face, normals }
}

fn edge_fn(a: (f64, f64, f64), b: (f64, f64, f64), p: (f64, f64)) -> f64 {
    (b.0 - a.0) * (p.1 - a.1) - (b.1 - a.1) * (p.0 - a.0)
}

/// Edge function evaluated in a canonical endpoint order so that the two
/// triangles sharing an edge see bit-identical magnitudes (opposite signs).
/// Without this, near-zero values can come out negative on both sides and
/// leave pinholes along shared diagonals.
fn edge_fn_shared(a: (f64, f64, f64), b: (f64, f64, f64), p: (f64, f64)) -> f64 {
    if (a.0, a.1) <= (b.0, b.1) {
        edge_fn(a, b, p)
    } else {
        -edge_fn(b, a, p)
    }
}

fn top_left(a: (f64, f64, f64), b: (f64, f64, f64)) -> bool {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    dy < 0.0 || (dy == 0.0 && dx > 0.0) // counter-clockwise in image coords
}

/// Full-frame depth render at the given pose.
pub fn render_depth(mesh: &Mesh, pose: &Pose, k: &CameraIntrinsics) -> DepthMap {
    let rect = Rect { x0: 0, y0: 0, w: k.width as usize, h: k.height as usize };
    let raster = rasterize(mesh, pose, k, rect);
    DepthMap { width: rect.w, height: rect.h, depth: raster.depth }
}

/// Fast path: render depth only where the object projects, background
/// elsewhere. Same values as `render_depth` on object pixels.
pub fn render_depth_roi(mesh: &Mesh, pose: &Pose, k: &CameraIntrinsics) -> Result<Raster, RenderError> {
    let rect = projected_roi(mesh, pose, k, 0.05)?;
    Ok(rasterize(mesh, pose, k, rect))
}

const NORMAL_EDGE_COS: f64 = 0.985; // ~10 degrees
const DEPTH_EDGE_REL: f64 = 0.01;

/// Binary geometric edge mask over the raster rectangle: silhouette pixels,
/// depth discontinuities, and face-orientation discontinuities.
pub fn edge_mask(raster: &Raster) -> Vec<f64> {
    let (w, h) = (raster.rect.w, raster.rect.h);
    let mut mask = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let ix = y * w + x;
            let f = raster.face[ix];
            if f == NO_FACE {
                continue;
            }
            let z = raster.depth[ix];
            let mut edge = false;
            for (dx, dy) in [(-1i64, 0i64), (1, 0), (0, -1), (0, 1)] {
                let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                    edge = true; // raster border treated as background
                    break;
                }
                let nix = ny as usize * w + nx as usize;
                let nf = raster.face[nix];
                if nf == NO_FACE {
                    edge = true; // silhouette
                    break;
                }
                if (raster.depth[nix] - z).abs() > DEPTH_EDGE_REL * z {
                    edge = true;
                    break;
                }
                if nf != f {
                    let dot = raster.normals[f as usize].dot(&raster.normals[nf as usize]);
                    if dot < NORMAL_EDGE_COS {
                        edge = true;
                        break;
                    }
                }
            }
            if edge {
                mask[ix] = 1.0;
            }
        }
    }
    mask
}

/// 3x3 Sobel gradient magnitude, zero padding.
pub fn sobel_magnitude(img: &[f64], w: usize, h: usize) -> Vec<f64> {
    let at = |x: i64, y: i64| -> f64 {
        if x < 0 || y < 0 || x >= w as i64 || y >= h as i64 {
            0.0
        } else {
            img[y as usize * w + x as usize]
        }
    };
    let mut out = vec![0.0; w * h];
    for y in 0..h as i64 {
        for x in 0..w as i64 {
            let gx = -at(x - 1, y - 1) + at(x + 1, y - 1) - 2.0 * at(x - 1, y)
                + 2.0 * at(x + 1, y)
                - at(x - 1, y + 1)
                + at(x + 1, y + 1);
            let gy = -at(x - 1, y - 1) - 2.0 * at(x, y - 1) - at(x + 1, y - 1)
                + at(x - 1, y + 1)
                + 2.0 * at(x, y + 1)
                + at(x + 1, y + 1);
            out[y as usize * w + x as usize] = (gx * gx + gy * gy).sqrt();
        }
    }
    out
}

/// Separable Gaussian blur with zero padding; kernel radius 3*sigma.
pub fn gaussian_blur(img: &[f64], w: usize, h: usize, sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as i64;
    let mut kernel = Vec::with_capacity((2 * radius + 1) as usize);
    let mut sum = 0.0;
    for i in -radius..=radius {
        let v = (-(i as f64).powi(2) / (2.0 * sigma * sigma)).exp();
        kernel.push(v);
        sum += v;
    }
    for v in &mut kernel {
        *v /= sum;
    }
    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w as i64 {
            let mut acc = 0.0;
            for (ki, &kv) in kernel.iter().enumerate() {
                let sx = x + ki as i64 - radius;
                if sx >= 0 && sx < w as i64 {
                    acc += kv * img[y * w + sx as usize];
                }
            }
            tmp[y * w + x as usize] = acc;
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h as i64 {
        for x in 0..w {
            let mut acc = 0.0;
            for (ki, &kv) in kernel.iter().enumerate() {
                let sy = y + ki as i64 - radius;
                if sy >= 0 && sy < h as i64 {
                    acc += kv * tmp[sy as usize * w + x];
                }
            }
            out[y as usize * w + x] = acc;
        }
    }
    out
}

/// Render the signed edge-expectation template for `pose` over `roi`:
/// geometric edge image -> Sobel magnitude -> DoG(sigma1) - DoG(sigma2) ->
/// max |value| normalized to 1.
pub fn render_template(
    mesh: &Mesh,
    pose: &Pose,
    k: &CameraIntrinsics,
    roi: Rect,
    sigma1: f64,
    sigma2: f64,
) -> Result<TemplateImage, RenderError> {
    // pad so border effects of Sobel + the wider Gaussian stay outside the ROI
    let pad = (3.0 * sigma2).ceil() as i64 + 2;
    let work = roi.dilated(pad);
    let raster = rasterize(mesh, pose, k, work);
    if raster.face.iter().all(|&f| f == NO_FACE) {
        return Err(RenderError::NotVisible);
    }
    let mask = edge_mask(&raster);
    // require the silhouette to intersect the requested ROI
    let mut visible = false;
    'outer: for y in 0..roi.h {
        for x in 0..roi.w {
            let ix = (y + pad as usize) * work.w + x + pad as usize;
            if raster.face[ix] != NO_FACE {
                visible = true;
                break 'outer;
            }
        }
    }
    if !visible {
        return Err(RenderError::NotVisible);
    }
    // filter only the bounding box of the edge pixels (plus filter support);
    // outside it the Sobel + DoG response is exactly zero, and the edge band
    // is usually a small fraction of the working rectangle
    let mut bx0 = usize::MAX;
    let mut by0 = usize::MAX;
    let (mut bx1, mut by1) = (0usize, 0usize);
    for y in 0..work.h {
        for x in 0..work.w {
            if mask[y * work.w + x] > 0.0 {
                bx0 = bx0.min(x);
                by0 = by0.min(y);
                bx1 = bx1.max(x);
                by1 = by1.max(y);
            }
        }
    }
    if bx0 == usize::MAX {
        return Err(RenderError::NotVisible);
    }
    let support = (3.0 * sigma2).ceil() as usize + 1; // Sobel reach + blur radius
    let cx0 = bx0.saturating_sub(support);
    let cy0 = by0.saturating_sub(support);
    let cx1 = (bx1 + support).min(work.w - 1);
    let cy1 = (by1 + support).min(work.h - 1);
    let (cw, ch) = (cx1 - cx0 + 1, cy1 - cy0 + 1);
    let mut crop = vec![0.0; cw * ch];
    for y in 0..ch {
        crop[y * cw..(y + 1) * cw]
            .copy_from_slice(&mask[(cy0 + y) * work.w + cx0..(cy0 + y) * work.w + cx0 + cw]);
    }
    let sob = sobel_magnitude(&crop, cw, ch);
    let g1 = gaussian_blur(&sob, cw, ch, sigma1);
    let g2 = gaussian_blur(&sob, cw, ch, sigma2);
    let mut values = vec![0.0; roi.w * roi.h];
    let mut max_abs = 0.0f64;
    for y in 0..roi.h {
        for x in 0..roi.w {
            let (wx, wy) = (x + pad as usize, y + pad as usize);
            let v = if wx >= cx0 && wx <= cx1 && wy >= cy0 && wy <= cy1 {
                let ci = (wy - cy0) * cw + (wx - cx0);
                g1[ci] - g2[ci]
            } else {
                0.0
            };
            values[y * roi.w + x] = v;
            max_abs = max_abs.max(v.abs());
        }
    }
    if max_abs == 0.0 {
        return Err(RenderError::NotVisible);
    }
    for v in &mut values {
        *v /= max_abs;
    }
    Ok(TemplateImage { rect: roi, values })
}
