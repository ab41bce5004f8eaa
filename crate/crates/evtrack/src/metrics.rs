//! Accuracy evaluation of a tracked trajectory against ground truth.

use crate::types::{rotation_angle_between, TimedPose};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("empty trajectory")]
    Empty,
    #[error("no ground-truth sample within {0} s of any estimate")]
    Disjoint(f64),
}

#[derive(Debug, Clone)]
pub struct MetricsReport {
    /// Position RMSE, centimetres.
    pub position_rmse_cm: f64,
    /// Rotation RMSE, degrees.
    pub rotation_rmse_deg: f64,
    pub position_std_cm: f64,
    pub rotation_std_deg: f64,
    pub pairs: usize,
    /// Per-pair (t, position error cm, rotation error deg).
    pub series: Vec<(f64, f64, f64)>,
}

/// Compare an estimated trajectory with ground truth. Each estimate is
/// associated with the nearest ground-truth timestamp; pairs farther apart
/// than `max_gap` seconds are dropped. Equidistant neighbours resolve to the
/// earlier sample.
pub fn evaluate(
    estimate: &[TimedPose],
    ground_truth: &[TimedPose],
    max_gap: f64,
) -> Result<MetricsReport, MetricsError> {
    if estimate.is_empty() || ground_truth.is_empty() {
        return Err(MetricsError::Empty);
    }
    let mut series = Vec::new();
    for est in estimate {
        let hi = ground_truth.partition_point(|g| g.t < est.t);
        let mut best: Option<&TimedPose> = None;
        // candidates either side of the insertion point; prefer the earlier on ties
        for idx in [hi.checked_sub(1), Some(hi)].into_iter().flatten() {
            if let Some(g) = ground_truth.get(idx) {
                let closer = match best {
                    None => true,
                    Some(b) => (g.t - est.t).abs() < (b.t - est.t).abs(),
                };
                if closer {
                    best = Some(g);
                }
            }
        }
        let Some(g) = best else { continue };
        if (g.t - est.t).abs() > max_gap {
            continue;
        }
        let ep = (est.pose.translation - g.pose.translation).norm() * 100.0;
        let er = rotation_angle_between(&est.pose, &g.pose); // degrees
        series.push((est.t, ep, er));
    }
    if series.is_empty() {
        return Err(MetricsError::Disjoint(max_gap));
    }
    let n = series.len() as f64;
    let rmse = |sel: fn(&(f64, f64, f64)) -> f64| -> f64 {
        (series.iter().map(|s| sel(s) * sel(s)).sum::<f64>() / n).sqrt()
    };
    let std = |sel: fn(&(f64, f64, f64)) -> f64| -> f64 {
        let mean = series.iter().map(sel).sum::<f64>() / n;
        (series.iter().map(|s| (sel(s) - mean).powi(2)).sum::<f64>() / n).sqrt()
    };
    Ok(MetricsReport {
        position_rmse_cm: rmse(|s| s.1),
        rotation_rmse_deg: rmse(|s| s.2),
        position_std_cm: std(|s| s.1),
        rotation_std_deg: std(|s| s.2),
        pairs: series.len(),
        series,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::Pose;
    use nalgebra::{UnitQuaternion, Vector3};

    fn tp(t: f64, x: f64) -> TimedPose {
        TimedPose {
            t,
            pose: Pose::new(Vector3::new(x, 0.0, 0.5), UnitQuaternion::identity()),
        }
    }

    #[test]
    fn identical_trajectories_zero_error() {
        let traj: Vec<_> = (0..10).map(|i| tp(i as f64 * 0.01, 0.01 * i as f64)).collect();
        let r = evaluate(&traj, &traj, 0.005).unwrap();
        assert_eq!(r.pairs, 10);
        assert!(r.position_rmse_cm < 1e-12);
        assert!(r.rotation_rmse_deg < 1e-9);
    }

    #[test]
    fn constant_offset_rmse() {
        let gt: Vec<_> = (0..10).map(|i| tp(i as f64 * 0.01, 0.0)).collect();
        // 1 cm offset everywhere
        let est: Vec<_> = (0..10).map(|i| tp(i as f64 * 0.01, 0.01)).collect();
        let r = evaluate(&est, &gt, 0.005).unwrap();
        assert!((r.position_rmse_cm - 1.0).abs() < 1e-9);
        assert!(r.position_std_cm < 1e-9);
    }

    #[test]
    fn rotation_error_in_degrees() {
        let gt = vec![tp(0.0, 0.0), tp(0.01, 0.0)];
        let q = UnitQuaternion::from_axis_angle(&Vector3::y_axis(), 10f64.to_radians());
        let est = vec![TimedPose {
            t: 0.0,
            pose: Pose::new(Vector3::new(0.0, 0.0, 0.5), q),
        }];
        let r = evaluate(&est, &gt, 0.005).unwrap();
        assert!((r.rotation_rmse_deg - 10.0).abs() < 1e-9);
    }

    #[test]
    fn nearest_association_with_tie_to_earlier() {
        let gt = vec![tp(0.0, 0.0), tp(0.02, 0.05)];
        // estimate at 0.01 is equidistant: should pair with t=0.0
        let est = vec![tp(0.01, 0.0)];
        let r = evaluate(&est, &gt, 0.02).unwrap();
        assert_eq!(r.pairs, 1);
        assert!(r.position_rmse_cm < 1e-12);
    }

    #[test]
    fn disjoint_ranges_error() {
        let gt = vec![tp(0.0, 0.0), tp(0.01, 0.0)];
        let est = vec![tp(5.0, 0.0)];
        assert!(matches!(evaluate(&est, &gt, 0.005), Err(MetricsError::Disjoint(_))));
        assert!(matches!(evaluate(&[], &gt, 0.005), Err(MetricsError::Empty)));
    }
}
