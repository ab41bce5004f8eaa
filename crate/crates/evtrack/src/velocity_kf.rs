//! Linear Kalman filter on the 6D object twist, measured through event
//! optical flow via the interaction matrix.

use crate::config::Config;
use crate::flow::FlowVector;
use crate::types::{CameraIntrinsics, Twist};
use nalgebra::{Matrix2, Matrix6, SMatrix, Vector2, Vector3, Vector6};
use thiserror::Error;

pub type InteractionMatrix = SMatrix<f64, 2, 6>;

#[derive(Debug, Error)]
pub enum KfError {
    #[error("non-positive depth {0}")]
    BadDepth(f64),
}

/// 2x6 matrix mapping an object twist (object-origin convention, see
/// [`Twist`]) to the pixel velocity of the object point imaged at (u, v)
/// with depth z. `origin` is the object origin in camera coordinates: the
/// imaged point moves with v + omega x r where r is its lever arm from the
/// origin, so the rotational block depends on where the object sits.
pub fn interaction_matrix(
    u: f64,
    v: f64,
    z: f64,
    k: &CameraIntrinsics,
    origin: &Vector3<f64>,
) -> Result<InteractionMatrix, KfError> {
    if z <= 0.0 {
        return Err(KfError::BadDepth(z));
    }
    let ub = u - k.cx;
    let vb = v - k.cy;
    let (fx, fy) = (k.fx, k.fy);
    // translational block rows: projection jacobian at (u, v, z)
    let a_u = Vector3::new(fx / z, 0.0, -ub / z);
    let a_v = Vector3::new(0.0, fy / z, -vb / z);
    // rotational block rows: d(pixel)/d(omega) = row of J_v applied to
    // omega x r, which works out to r x a per row
    let r = Vector3::new(z * ub / fx, z * vb / fy, z) - origin;
    let w_u = r.cross(&a_u);
    let w_v = r.cross(&a_v);
    Ok(InteractionMatrix::from_rows(&[
        [a_u.x, a_u.y, a_u.z, w_u.x, w_u.y, w_u.z].into(),
        [a_v.x, a_v.y, a_v.z, w_v.x, w_v.y, w_v.z].into(),
    ]))
}

/// Outcome of one measurement update.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UpdateOutcome {
    Applied,
    /// Innovation failed the Mahalanobis gate.
    Gated,
}

#[derive(Debug, Clone)]
pub struct TwistFilter {
    state: Vector6<f64>,
    covariance: Matrix6<f64>,
    rho: f64,
    process_noise: Matrix6<f64>,
    measurement_noise: Matrix2<f64>,
    gating: bool,
}

impl TwistFilter {
    pub fn new(config: &Config) -> Self {
        let mut q = Matrix6::zeros();
        for i in 0..3 {
            q[(i, i)] = config.kf_q_v * config.kf_q_v;
            q[(i + 3, i + 3)] = config.kf_q_w * config.kf_q_w;
        }
        Self {
            state: Vector6::zeros(),
            // moderate initial uncertainty: wide enough to pick up motion
            // quickly, tight enough that a handful of outlier flows in the
            // first cycle cannot slam the state before gating has any
            // covariance contrast to work with
            covariance: Self::initial_covariance(),
            rho: config.kf_rho,
            process_noise: q,
            measurement_noise: Matrix2::identity() * config.kf_r_px * config.kf_r_px,
            gating: config.kf_gating,
        }
    }

    fn initial_covariance() -> Matrix6<f64> {
        let mut p = Matrix6::zeros();
        for i in 0..3 {
            p[(i, i)] = 0.25; // (0.5 m/s)^2
            // wide enough that flows induced by a fast spin (several rad/s)
            // pass the innovation gate on the first cycles; angular leverage
            // on image flow is weak, so acquisition dies if the gate opens
            // narrower than the dynamics the tracker is expected to lock onto
            p[(i + 3, i + 3)] = 9.0; // (3 rad/s)^2
        }
        p
    }

    pub fn twist(&self) -> Twist {
        Twist::new(self.state.fixed_rows::<3>(0).into(), self.state.fixed_rows::<3>(3).into())
    }

    pub fn set_twist(&mut self, twist: &Twist) {
        self.state.fixed_rows_mut::<3>(0).copy_from(&twist.v);
        self.state.fixed_rows_mut::<3>(3).copy_from(&twist.omega);
    }

    pub fn covariance(&self) -> &Matrix6<f64> {
        &self.covariance
    }

    /// Decayed motion model: state <- rho * state, covariance inflated by the
    /// process noise. Call once per tracker period.
    pub fn predict(&mut self) {
        self.state *= self.rho;
        self.covariance = self.covariance * (self.rho * self.rho) + self.process_noise;
        self.symmetrize();
    }

    /// One sequential update from a flow measurement at rendered depth z.
    /// Measurement is the per-cycle pixel displacement F * dt with model
    /// h = J * V * dt. A flow registered from `support` triplet candidates
    /// is the aggregate of that many raw observations, so its noise shrinks
    /// by 1/support; the factor is capped because triplets within one cell
    /// share events and their errors are far from independent.
    pub fn update(
        &mut self,
        flow: &FlowVector,
        z: f64,
        k: &CameraIntrinsics,
        origin: &Vector3<f64>,
        dt: f64,
    ) -> Result<UpdateOutcome, KfError> {
        const MAX_SUPPORT_WEIGHT: f64 = 150.0;
        // variance multiplier across the flow direction: triplet matching on a
        // straight edge recovers only the component of motion along the edge
        // normal (aperture problem), so the across-flow component is close to
        // unconstrained. Corner cells do constrain it, but for them the
        // tangential residual is near zero anyway and the loose prior costs
        // little information.
        const TANGENTIAL_VAR_FACTOR: f64 = 100.0;
        let j = interaction_matrix(flow.u, flow.v, z, k, origin)?;
        let h = j * dt;
        let z_meas = Vector2::new(flow.fu, flow.fv) * dt;
        let weight = (flow.support.max(1) as f64).min(MAX_SUPPORT_WEIGHT);
        let norm = (flow.fu * flow.fu + flow.fv * flow.fv).sqrt();
        let r = if norm > 1e-9 {
            let n = Vector2::new(flow.fu / norm, flow.fv / norm);
            let t = Vector2::new(-n.y, n.x);
            let r_n = self.measurement_noise[(0, 0)] / weight;
            let r_t = self.measurement_noise[(1, 1)] * TANGENTIAL_VAR_FACTOR;
            n * n.transpose() * r_n + t * t.transpose() * r_t
        } else {
            self.measurement_noise / weight
        };
        let innovation = z_meas - h * self.state;
        let s = h * self.covariance * h.transpose() + r;
        let s_inv = s.try_inverse().unwrap_or_else(Matrix2::identity);
        if self.gating {
            let d2 = (innovation.transpose() * s_inv * innovation)[(0, 0)];
            if d2 > 9.0 {
                return Ok(UpdateOutcome::Gated);
            }
        }
        let gain = self.covariance * h.transpose() * s_inv;
        self.state += gain * innovation;
        // Joseph form keeps the covariance positive-definite
        let ikh = Matrix6::identity() - gain * h;
        self.covariance = ikh * self.covariance * ikh.transpose()
            + gain * r * gain.transpose();
        self.symmetrize();
        Ok(UpdateOutcome::Applied)
    }

    fn symmetrize(&mut self) {
        self.covariance = (self.covariance + self.covariance.transpose()) * 0.5;
    }

    pub fn covariance_is_positive_definite(&self) -> bool {
        self.covariance.cholesky().is_some()
    }
}
