//! Template-based local pose correction: perturb the propagated pose along
//! each degree of freedom, render edge templates, score them against the EROS
//! observation, and keep the best hypothesis.

use crate::config::Config;
use crate::eros::ErosSurface;
use crate::io::Mesh;
use crate::render::{projected_roi, render_template, RenderError, TemplateImage};
use crate::types::{compose, project, CameraIntrinsics, Pose};
use nalgebra::{UnitQuaternion, Vector3};
use rayon::prelude::*;

pub const HYPOTHESIS_COUNT: usize = 13;

/// One pose increment: camera-frame translation offset and an object-frame
/// rotation increment (right-multiplied).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseDelta {
    pub translation: Vector3<f64>,
    pub rotation: UnitQuaternion<f64>,
}

impl PoseDelta {
    pub fn identity() -> Self {
        Self { translation: Vector3::zeros(), rotation: UnitQuaternion::identity() }
    }

    pub fn apply(&self, pose: &Pose) -> Pose {
        let rotated = compose(pose, &Pose::new(Vector3::zeros(), self.rotation));
        Pose::new(rotated.translation + self.translation, rotated.rotation)
    }
}

/// The 13 hypothesis increments: null motion first, then +/- translations
/// along x, y, z sized for `delta_p` pixels of image motion, then +/-
/// rotations of `theta_deg` about the object axes.
pub fn perturbations(
    z_ref: f64,
    p_bar: f64,
    k: &CameraIntrinsics,
    delta_p: f64,
    theta_deg: f64,
) -> Vec<PoseDelta> {
    assert!(z_ref > 0.0, "object depth must be positive");
    let p_bar = p_bar.max(1.0); // degenerate at the principal point
    let dx = z_ref * delta_p / k.fx;
    let dy = z_ref * delta_p / k.fy;
    let dz = z_ref * delta_p / p_bar;
    let theta = theta_deg.to_radians();
    let mut out = Vec::with_capacity(HYPOTHESIS_COUNT);
    out.push(PoseDelta::identity());
    for t in [
        Vector3::new(dx, 0.0, 0.0),
        Vector3::new(-dx, 0.0, 0.0),
        Vector3::new(0.0, dy, 0.0),
        Vector3::new(0.0, -dy, 0.0),
        Vector3::new(0.0, 0.0, dz),
        Vector3::new(0.0, 0.0, -dz),
    ] {
        out.push(PoseDelta { translation: t, rotation: UnitQuaternion::identity() });
    }
    for axis in [Vector3::x_axis(), Vector3::y_axis(), Vector3::z_axis()] {
        for sign in [1.0, -1.0] {
            out.push(PoseDelta {
                translation: Vector3::zeros(),
                rotation: UnitQuaternion::from_axis_angle(&axis, sign * theta),
            });
        }
    }
    out
}

/// Signed dot product of template and observation over the shared ROI.
pub fn score(template: &TemplateImage, eros_patch: &[f64]) -> f64 {
    debug_assert_eq!(template.values.len(), eros_patch.len());
    template.values.iter().zip(eros_patch).map(|(t, o)| t * o).sum()
}

/// Result of one correction step.
#[derive(Debug, Clone)]
pub struct Correction {
    pub pose: Pose,
    /// None when the object was not visible and correction was skipped.
    pub scores: Option<[f64; HYPOTHESIS_COUNT]>,
    pub selected: usize,
}

/// Score the 13 hypotheses around the propagated pose against the EROS
/// surface and apply the best increment. Ties keep the null hypothesis, then
/// the earliest hypothesis.
pub fn correct(
    propagated: &Pose,
    eros: &ErosSurface,
    mesh: &Mesh,
    k: &CameraIntrinsics,
    config: &Config,
) -> Correction {
    let roi = match projected_roi(mesh, propagated, k, config.roi_dilation) {
        Ok(r) => r,
        Err(RenderError::NotVisible) => {
            return Correction { pose: *propagated, scores: None, selected: 0 }
        }
    };
    let z_ref = propagated.translation.z;
    if z_ref <= 0.0 {
        return Correction { pose: *propagated, scores: None, selected: 0 };
    }
    // p_bar anchors the z-step size: a depth change moves an image point
    // radially in proportion to its distance from the principal point. The
    // object origin alone degenerates near the image centre (a z step there
    // moves the centre pixel not at all while still rescaling the whole
    // silhouette), so fold in the silhouette's own radial extent: the
    // farthest edge pixel moves by roughly (p_centre + r_roi)/z per unit z.
    let p_bar = match project(&propagated.translation, k) {
        Ok((u, v)) => {
            let p_centre = ((u - k.cx).powi(2) + (v - k.cy).powi(2)).sqrt();
            let r_roi = 0.5
                * ((roi.w as f64).powi(2) + (roi.h as f64).powi(2)).sqrt()
                / (1.0 + config.roi_dilation);
            p_centre + r_roi
        }
        Err(_) => return Correction { pose: *propagated, scores: None, selected: 0 },
    };
    let deltas = perturbations(z_ref, p_bar, k, config.delta_p, config.theta_deg);
    let mut patch = eros.snapshot_rect(roi.x0, roi.y0, roi.w, roi.h);

    // suppress the decayed trail the moving edge leaves behind on the decay
    // surface: it is only a few decay steps older than the live band, close
    // enough in value to reward hypotheses that slide the template backwards
    // onto it. Keeping only values near the patch maximum isolates the most
    // recent band; being a cutoff relative to the patch's own maximum it
    // preserves invariance of the selection under positive scaling.
    let pmax = patch.iter().cloned().fold(0.0_f64, f64::max);
    let cutoff = config.patch_trail_cutoff * pmax;
    for v in patch.iter_mut() {
        if *v < cutoff {
            *v = 0.0;
        }
    }

    // normalize by template energy: hypotheses change the rendered silhouette
    // area (depth steps rescale it, rotations expose extra faces), and a raw
    // dot product rewards sheer ridge area over alignment — an enlarged or
    // rotated template that sweeps more event mass would otherwise outscore
    // the well-aligned one
    let scored: Vec<f64> = deltas
        .par_iter()
        .map(|delta| {
            let pose_i = delta.apply(propagated);
            match render_template(mesh, &pose_i, k, roi, config.dog_sigma1, config.dog_sigma2) {
                Ok(t) => {
                    let energy = t.values.iter().map(|v| v * v).sum::<f64>().sqrt();
                    score(&t, &patch) / energy.max(1e-12)
                }
                Err(_) => f64::NEG_INFINITY,
            }
        })
        .collect();

    if scored.iter().all(|s| *s == f64::NEG_INFINITY) {
        return Correction { pose: *propagated, scores: None, selected: 0 };
    }
    let mut best = 0usize;
    for (i, s) in scored.iter().enumerate() {
        if *s > scored[best] {
            best = i;
        }
    }
    let mut scores = [0.0; HYPOTHESIS_COUNT];
    scores.copy_from_slice(&scored);
    Correction { pose: deltas[best].apply(propagated), scores: Some(scores), selected: best }
}
