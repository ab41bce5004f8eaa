//! Unscented Kalman filter smoothing of the corrected pose.
//!
//! State: 6-vector [position, rotation-vector error] anchored at a reference
//! quaternion that is re-anchored after every update. The measurement is the
//! corrected pose itself, so the update is linear in the error coordinates;
//! sigma points are only needed to push the state through the motion model.

use crate::config::Config;
use crate::tracker::propagate;
use crate::types::{Pose, Twist};
use nalgebra::{Matrix6, UnitQuaternion, Vector3, Vector6};

#[derive(Debug, Clone)]
pub struct UkfSmoother {
    q_ref: UnitQuaternion<f64>,
    state: Vector6<f64>,
    covariance: Matrix6<f64>,
    process_noise: Matrix6<f64>,
    measurement_noise: Matrix6<f64>,
    alpha: f64,
    beta: f64,
    kappa: f64,
    constant_twist: bool,
    /// Number of times the covariance lost positive-definiteness and the
    /// filter was reinitialized.
    pub reinit_count: usize,
    initialized: bool,
}

const N: usize = 6;

fn diag_block(pos: f64, rot: f64) -> Matrix6<f64> {
    let mut m = Matrix6::zeros();
    for i in 0..3 {
        m[(i, i)] = pos * pos;
        m[(i + 3, i + 3)] = rot * rot;
    }
    m
}

/// Rotation vector of q relative to the reference (left error), with the
/// quaternion sign canonicalized to keep the angle in [0, pi].
fn rotation_error(q: &UnitQuaternion<f64>, q_ref: &UnitQuaternion<f64>) -> Vector3<f64> {
    let mut rel = (q / q_ref).into_inner();
    if rel.w < 0.0 {
        rel = -rel;
    }
    UnitQuaternion::from_quaternion(rel).scaled_axis()
}

impl UkfSmoother {
    pub fn new(config: &Config) -> Self {
        Self {
            q_ref: UnitQuaternion::identity(),
            state: Vector6::zeros(),
            covariance: diag_block(0.1, 0.5),
            process_noise: diag_block(config.ukf_q_pos, config.ukf_q_rot),
            measurement_noise: diag_block(config.ukf_r_pos, config.ukf_r_rot),
            alpha: config.ukf_alpha,
            beta: config.ukf_beta,
            kappa: config.ukf_kappa,
            constant_twist: config.ukf_constant_twist,
            reinit_count: 0,
            initialized: false,
        }
    }

    pub fn initialize(&mut self, pose: &Pose) {
        self.q_ref = pose.rotation;
        self.state = Vector6::zeros();
        self.state.fixed_rows_mut::<3>(0).copy_from(&pose.translation);
        self.covariance = diag_block(0.01, 0.05);
        self.initialized = true;
    }

    pub fn mean_pose(&self) -> Pose {
        let t: Vector3<f64> = self.state.fixed_rows::<3>(0).into();
        let dr: Vector3<f64> = self.state.fixed_rows::<3>(3).into();
        Pose::new(t, UnitQuaternion::from_scaled_axis(dr) * self.q_ref)
    }

    fn pose_from(&self, x: &Vector6<f64>) -> Pose {
        let t: Vector3<f64> = x.fixed_rows::<3>(0).into();
        let dr: Vector3<f64> = x.fixed_rows::<3>(3).into();
        Pose::new(t, UnitQuaternion::from_scaled_axis(dr) * self.q_ref)
    }

    /// Push the state through the motion model (constant twist over dt, or a
    /// random walk when `constant_twist` is off) with the unscented transform.
    pub fn predict(&mut self, twist: &Twist, dt: f64) {
        if !self.initialized {
            return;
        }
        let motion = if self.constant_twist { *twist } else { Twist::zero() };

        let lambda = self.alpha * self.alpha * (N as f64 + self.kappa) - N as f64;
        let gamma = (N as f64 + lambda).sqrt();
        let chol = match self.covariance.cholesky() {
            Some(c) => c,
            None => {
                self.reinitialize_at(&self.mean_pose());
                return;
            }
        };
        let sqrt_p = chol.l();

        let mut sigma = Vec::with_capacity(2 * N + 1);
        sigma.push(self.state);
        for i in 0..N {
            let col = sqrt_p.column(i) * gamma;
            sigma.push(self.state + col);
            sigma.push(self.state - col);
        }

        // propagate the anchor first so transformed sigma points stay small
        let new_ref = propagate(&self.pose_from(&self.state), &motion, dt).rotation;

        let mut transformed = Vec::with_capacity(sigma.len());
        for x in &sigma {
            let p = propagate(&self.pose_from(x), &motion, dt);
            let mut y = Vector6::zeros();
            y.fixed_rows_mut::<3>(0).copy_from(&p.translation);
            y.fixed_rows_mut::<3>(3).copy_from(&rotation_error(&p.rotation, &new_ref));
            transformed.push(y);
        }

        let w0_m = lambda / (N as f64 + lambda);
        let wi = 1.0 / (2.0 * (N as f64 + lambda));
        let w0_c = w0_m + 1.0 - self.alpha * self.alpha + self.beta;

        // deviation form: with small alpha the raw weights are huge and of
        // mixed sign, so summing sigma points directly loses ~1e-9 of
        // precision per call; anchoring at the centre point avoids that
        let mut mean = transformed[0];
        for t in &transformed[1..] {
            mean += (t - transformed[0]) * wi;
        }
        let mut cov = {
            let d = transformed[0] - mean;
            d * d.transpose() * w0_c
        };
        for t in &transformed[1..] {
            let d = t - mean;
            cov += d * d.transpose() * wi;
        }
        cov += self.process_noise;

        self.q_ref = new_ref;
        self.state = mean;
        self.covariance = (cov + cov.transpose()) * 0.5;
    }

    /// Fuse the corrected pose as a direct pose measurement and return the
    /// posterior mean pose.
    pub fn update(&mut self, measurement: &Pose) -> Pose {
        if !self.initialized {
            self.initialize(measurement);
            return *measurement;
        }
        let mut z = Vector6::zeros();
        z.fixed_rows_mut::<3>(0).copy_from(&measurement.translation);
        z.fixed_rows_mut::<3>(3)
            .copy_from(&rotation_error(&measurement.rotation, &self.q_ref));

        // identity measurement model in the error coordinates
        let innovation = z - self.state;
        let s = self.covariance + self.measurement_noise;
        let s_inv = match s.try_inverse() {
            Some(inv) => inv,
            None => {
                self.reinitialize_at(measurement);
                return *measurement;
            }
        };
        let gain = self.covariance * s_inv;
        self.state += gain * innovation;
        let ikh = Matrix6::identity() - gain;
        self.covariance = ikh * self.covariance * ikh.transpose()
            + gain * self.measurement_noise * gain.transpose();
        self.covariance = (self.covariance + self.covariance.transpose()) * 0.5;

        if self.covariance.cholesky().is_none() {
            self.reinitialize_at(measurement);
            return *measurement;
        }

        // re-anchor the reference quaternion at the posterior mean
        let posterior = self.mean_pose();
        self.q_ref = posterior.rotation;
        self.state.fixed_rows_mut::<3>(3).copy_from(&Vector3::zeros());
        posterior
    }

    fn reinitialize_at(&mut self, pose: &Pose) {
        self.reinit_count += 1;
        self.initialize(pose);
    }

    pub fn covariance_trace(&self) -> f64 {
        self.covariance.trace()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Vector3;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn smoother() -> UkfSmoother {
        UkfSmoother::new(&Config::default())
    }

    #[test]
    fn constant_identity_measurements_converge() {
        let mut ukf = smoother();
        let target = Pose::identity();
        let mut last_trace = f64::INFINITY;
        let mut post = target;
        for i in 0..100 {
            ukf.predict(&Twist::zero(), 0.002);
            post = ukf.update(&target);
            let trace = ukf.covariance_trace();
            if i > 0 {
                assert!(trace <= last_trace + 1e-12, "trace grew at cycle {i}");
            }
            last_trace = trace;
        }
        assert!(post.translation.norm() < 1e-9);
        assert!(crate::types::rotation_angle_between(&post, &target) < 1e-6);
    }

    #[test]
    fn smoothing_reduces_variance_of_noisy_measurements() {
        let mut ukf = smoother();
        let base = Pose::new(Vector3::new(0.0, 0.0, 0.5), UnitQuaternion::identity());
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut raw = Vec::new();
        let mut smoothed = Vec::new();
        ukf.initialize(&base);
        for _ in 0..1000 {
            ukf.predict(&Twist::zero(), 0.002);
            let eps = 0.002 * if rng.random::<bool>() { 1.0 } else { -1.0 };
            let m = Pose::new(base.translation + Vector3::new(eps, 0.0, 0.0), base.rotation);
            let p = ukf.update(&m);
            raw.push(m.translation.x);
            smoothed.push(p.translation.x);
        }
        let std = |xs: &[f64]| {
            let mean = xs.iter().sum::<f64>() / xs.len() as f64;
            (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / xs.len() as f64).sqrt()
        };
        assert!(
            std(&smoothed) < std(&raw),
            "smoothed std {} >= raw std {}",
            std(&smoothed),
            std(&raw)
        );
    }

    #[test]
    fn outlier_is_attenuated() {
        let mut ukf = smoother();
        let base = Pose::new(Vector3::new(0.0, 0.0, 0.5), UnitQuaternion::identity());
        ukf.initialize(&base);
        for _ in 0..50 {
            ukf.predict(&Twist::zero(), 0.002);
            ukf.update(&base);
        }
        let outlier = Pose::new(base.translation + Vector3::new(0.05, 0.0, 0.0), base.rotation);
        ukf.predict(&Twist::zero(), 0.002);
        let post = ukf.update(&outlier);
        let dev = (post.translation - base.translation).norm();
        assert!(dev < 0.05, "posterior deviation {dev} not below outlier deviation");
        assert!(dev > 0.0);
    }

    #[test]
    fn constant_twist_prediction_tracks_moving_pose() {
        let mut ukf = smoother();
        let twist = Twist::new(Vector3::new(0.2, 0.0, 0.0), Vector3::zeros());
        let mut truth = Pose::new(Vector3::new(0.0, 0.0, 0.5), UnitQuaternion::identity());
        ukf.initialize(&truth);
        for _ in 0..200 {
            truth = propagate(&truth, &twist, 0.002);
            ukf.predict(&twist, 0.002);
            let post = ukf.update(&truth);
            assert!((post.translation - truth.translation).norm() < 1e-3);
        }
    }

    #[test]
    fn rotation_error_canonicalizes_sign() {
        let q = UnitQuaternion::from_axis_angle(&Vector3::z_axis(), 0.3);
        let neg = UnitQuaternion::from_quaternion(-q.into_inner());
        let r1 = rotation_error(&q, &UnitQuaternion::identity());
        let r2 = rotation_error(&neg, &UnitQuaternion::identity());
        assert!((r1 - r2).norm() < 1e-12);
        assert!((r1.norm() - 0.3).abs() < 1e-12);
    }
}
