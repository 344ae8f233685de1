//! Trajectory error metrics and the loop-coverage recall proxy.

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::geometry::Se3;
use crate::map::SlamMap;

/// Default minimum number of retained points per loop frame.
pub const DEFAULT_RECALL_THRESHOLD: usize = 40;

/// Rigid transform `(R, t)` minimizing `Σ‖R·a_i + t − b_i‖²` (no scale).
pub fn align_rigid(a: &[Vector3<f64>], b: &[Vector3<f64>]) -> Result<(Matrix3<f64>, Vector3<f64>)> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch(a.len(), b.len()));
    }
    if a.is_empty() {
        return Err(Error::UndefinedMetric("alignment of empty trajectories".into()));
    }
    let n = a.len() as f64;
    let ma = a.iter().sum::<Vector3<f64>>() / n;
    let mb = b.iter().sum::<Vector3<f64>>() / n;
    let mut cov = Matrix3::zeros();
    for (x, y) in a.iter().zip(b) {
        cov += (y - mb) * (x - ma).transpose();
    }
    let svd = cov.svd(true, true);
    let (u, vt) = (svd.u.expect("u requested"), svd.v_t.expect("v requested"));
    let mut d = Matrix3::identity();
    if (u * vt).determinant() < 0.0 {
        d[(2, 2)] = -1.0;
    }
    let r = u * d * vt;
    Ok((r, mb - r * ma))
}

/// Absolute pose error: RMSE of camera centres after rigid alignment.
pub fn ape(estimated: &[Se3], ground_truth: &[Se3]) -> Result<f64> {
    if estimated.len() != ground_truth.len() {
        return Err(Error::LengthMismatch(estimated.len(), ground_truth.len()));
    }
    if estimated.len() < 2 {
        return Err(Error::UndefinedMetric("absolute pose error needs at least two poses".into()));
    }
    let est: Vec<Vector3<f64>> = estimated.iter().map(Se3::center).collect();
    let gt: Vec<Vector3<f64>> = ground_truth.iter().map(Se3::center).collect();
    let (r, t) = align_rigid(&est, &gt)?;
    let sq: f64 = est.iter().zip(&gt).map(|(e, g)| (r * e + t - g).norm_squared()).sum();
    Ok((sq / est.len() as f64).sqrt())
}

/// Relative pose error over a frame offset: RMSE over `j` of the translation
/// of `(Q_j⁻¹ Q_{j+δ})⁻¹ (P_j⁻¹ P_{j+δ})` with camera-to-world poses.
pub fn rpe(estimated: &[Se3], ground_truth: &[Se3], delta: usize) -> Result<f64> {
    if estimated.len() != ground_truth.len() {
        return Err(Error::LengthMismatch(estimated.len(), ground_truth.len()));
    }
    let t = estimated.len();
    if delta == 0 || delta >= t {
        return Err(Error::UndefinedMetric(format!("frame offset {delta} must lie in [1, {t})")));
    }
    let cw = |p: &Se3| p.inverse();
    let mut sq = 0.0;
    for j in 0..t - delta {
        let rel_est = cw(&estimated[j]).inverse().compose(&cw(&estimated[j + delta]));
        let rel_gt = cw(&ground_truth[j]).inverse().compose(&cw(&ground_truth[j + delta]));
        sq += rel_gt.inverse().compose(&rel_est).translation.norm_squared();
    }
    Ok((sq / (t - delta) as f64).sqrt())
}

/// Fraction of loop frames that keep at least `threshold` selected points.
pub fn recall_proxy(map: &SlamMap, selected: &[usize], threshold: usize) -> Result<f64> {
    let loops = map.loop_frames();
    if loops.is_empty() {
        return Err(Error::UndefinedMetric("map has no loop frames".into()));
    }
    let mut chosen = vec![false; map.num_points()];
    for &p in selected {
        if let Some(c) = chosen.get_mut(p) {
            *c = true;
        }
    }
    let covered = loops
        .iter()
        .filter(|&&j| map.frame_observations(j).iter().filter(|r| chosen[r.point]).count() >= threshold)
        .count();
    Ok(covered as f64 / loops.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::map::tests::visibility_map;
    use crate::map::{Keyframe, SlamMap};
    use approx::assert_abs_diff_eq;
    use nalgebra::{Rotation3, Vector6};
    use proptest::prelude::*;

    /// Camera-to-world translation only, world-to-camera stored.
    fn at(x: f64, y: f64, z: f64) -> Se3 {
        Se3::new(Matrix3::identity(), -Vector3::new(x, y, z))
    }

    fn line(n: usize) -> Vec<Se3> {
        (0..n).map(|i| at(i as f64, 0.0, 0.0)).collect()
    }

    #[test]
    fn identical_trajectories_have_zero_error() {
        let a = line(5);
        assert_abs_diff_eq!(ape(&a, &a).unwrap(), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(rpe(&a, &a, 1).unwrap(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn single_offset_pose_on_a_line() {
        // centres 0,1,2,3 versus 0,1,2,4 on one axis: alignment only shifts
        // by the mean offset 0.25, leaving residuals (−¼, −¼, −¼, ¾)
        let gt = line(4);
        let mut est = gt.clone();
        est[3] = at(4.0, 0.0, 0.0);
        assert_abs_diff_eq!(ape(&est, &gt).unwrap(), (0.75f64 / 4.0).sqrt(), epsilon = 1e-9);
    }

    #[test]
    fn translation_spike_in_relative_error() {
        // spike of 1 m sideways on frame 2 of 0..4 touches windows (1,2) and (2,3)
        let gt = line(4);
        let mut est = gt.clone();
        est[2] = at(2.0, 1.0, 0.0);
        assert_abs_diff_eq!(rpe(&est, &gt, 1).unwrap(), (2.0f64 / 3.0).sqrt(), epsilon = 1e-12);
        // offset 2: windows (0,2) and (1,3), only the first is hit
        assert_abs_diff_eq!(rpe(&est, &gt, 2).unwrap(), (1.0f64 / 2.0).sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn length_and_offset_errors() {
        assert!(matches!(ape(&line(3), &line(4)), Err(Error::LengthMismatch(3, 4))));
        assert!(rpe(&line(4), &line(4), 4).is_err());
        assert!(rpe(&line(4), &line(4), 0).is_err());
    }

    fn with_loops(map: SlamMap, loops: &[usize]) -> SlamMap {
        let kfs: Vec<Keyframe> =
            map.keyframes().iter().map(|k| Keyframe { is_loop_frame: loops.contains(&k.index), ..k.clone() }).collect();
        SlamMap::new(*map.camera(), kfs, map.points().to_vec(), map.observations().to_vec())
    }

    #[test]
    fn recall_counts_covered_loop_frames() {
        let vis = [(0, 1), (1, 1), (2, 1), (0, 2), (3, 2), (4, 3)];
        let map = with_loops(visibility_map(3, 5, &vis), &[1, 2]);
        assert_eq!(recall_proxy(&map, &[0, 1, 2, 3, 4], 2).unwrap(), 1.0);
        assert_eq!(recall_proxy(&map, &[0, 1], 2).unwrap(), 0.5);
        assert_eq!(recall_proxy(&map, &[4], 1).unwrap(), 0.0);
        let no_loops = visibility_map(3, 5, &vis);
        assert!(matches!(recall_proxy(&no_loops, &[0], 1), Err(Error::UndefinedMetric(_))));
    }

    fn pose_strategy() -> impl Strategy<Value = Se3> {
        prop::array::uniform6(-2.0f64..2.0).prop_map(|v| {
            let d = Vector6::from_row_slice(&v);
            Se3::identity().retract(&d)
        })
    }

    proptest! {
        #[test]
        fn ape_ignores_rigid_motion(traj in prop::collection::vec(pose_strategy(), 3..10), g in pose_strategy()) {
            // moving every camera by the same world transform
            let moved: Vec<Se3> = traj.iter().map(|p| p.compose(&g.inverse())).collect();
            prop_assert!(ape(&moved, &traj).unwrap() < 1e-9);
        }

        #[test]
        fn rpe_ignores_global_rigid_motion(traj in prop::collection::vec(pose_strategy(), 3..10), g in pose_strategy()) {
            let moved: Vec<Se3> = traj.iter().map(|p| p.compose(&g)).collect();
            prop_assert!(rpe(&moved, &traj, 1).unwrap() < 1e-9);
        }

        #[test]
        fn alignment_recovers_rotation(axis in prop::array::uniform3(-1.5f64..1.5)) {
            let r = *Rotation3::new(Vector3::from_row_slice(&axis)).matrix();
            let a: Vec<Vector3<f64>> = (0..6).map(|i| Vector3::new(i as f64, (i * i) as f64 * 0.3, (i % 3) as f64)).collect();
            let b: Vec<Vector3<f64>> = a.iter().map(|x| r * x + Vector3::new(1.0, -2.0, 0.5)).collect();
            let (rr, _) = align_rigid(&a, &b).unwrap();
            prop_assert!((rr - r).abs().max() < 1e-9);
        }
    }
}
