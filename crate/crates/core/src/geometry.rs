//! Pinhole stereo camera, rigid transforms and measurement Jacobians.
//!
//! Poses map world coordinates into the camera frame (`p_cam = R p_world + t`).
//! Pose perturbations are 6-vectors `[rho; phi]` applied on the left:
//! `T' = (Exp(phi) R, Exp(phi) t + rho)`, so a camera-frame point moves by
//! `rho + phi x p_cam` to first order.

use nalgebra::{Matrix3, Matrix3x6, Quaternion, Rotation3, SMatrix, UnitQuaternion, Vector3, Vector6};

use crate::error::{Error, Result};

/// Observations closer than this to the image plane are rejected.
pub const DEPTH_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    /// Stereo baseline in metres.
    pub baseline: f64,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, baseline: f64) -> Self {
        Self { fx, fy, cx, cy, baseline }
    }

    /// fx = fy = 1, principal point at the origin.
    pub fn canonical(baseline: f64) -> Self {
        Self::new(1.0, 1.0, 0.0, 0.0, baseline)
    }

    pub fn is_valid(&self) -> bool {
        [self.fx, self.fy, self.cx, self.cy, self.baseline].iter().all(|v| v.is_finite())
            && self.fx > 0.0
            && self.fy > 0.0
            && self.baseline > 0.0
    }
}

/// Rigid world-to-camera transform.
///
/// The rotation is stored as a raw matrix so that malformed input can be
/// represented and diagnosed rather than silently re-orthonormalized.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Se3 {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl Default for Se3 {
    fn default() -> Self {
        Self::identity()
    }
}

impl Se3 {
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Self {
        Self { rotation, translation }
    }

    pub fn identity() -> Self {
        Self::new(Matrix3::identity(), Vector3::zeros())
    }

    pub fn from_quaternion(wxyz: [f64; 4], translation: Vector3<f64>) -> Self {
        let q = UnitQuaternion::from_quaternion(Quaternion::new(wxyz[0], wxyz[1], wxyz[2], wxyz[3]));
        Self::new(*q.to_rotation_matrix().matrix(), translation)
    }

    /// Unit quaternion (w, x, y, z) with non-negative w.
    pub fn quaternion_wxyz(&self) -> [f64; 4] {
        let rot = Rotation3::from_matrix_unchecked(self.rotation);
        let q = UnitQuaternion::from_rotation_matrix(&rot);
        let q = if q.w < 0.0 { -q.into_inner() } else { q.into_inner() };
        [q.w, q.i, q.j, q.k]
    }

    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    /// `self ∘ other`: apply `other` first.
    pub fn compose(&self, other: &Se3) -> Se3 {
        Se3::new(self.rotation * other.rotation, self.rotation * other.translation + self.translation)
    }

    pub fn inverse(&self) -> Se3 {
        let rt = self.rotation.transpose();
        Se3::new(rt, -(rt * self.translation))
    }

    /// Camera centre in world coordinates.
    pub fn center(&self) -> Vector3<f64> {
        -(self.rotation.transpose() * self.translation)
    }

    /// Left-multiplied perturbation by `delta = [rho; phi]`.
    pub fn retract(&self, delta: &Vector6<f64>) -> Se3 {
        let rho = delta.fixed_rows::<3>(0).into_owned();
        let phi = delta.fixed_rows::<3>(3).into_owned();
        let dr = *Rotation3::new(phi).matrix();
        Se3::new(dr * self.rotation, dr * self.translation + rho)
    }

    pub fn to_homogeneous(&self) -> SMatrix<f64, 4, 4> {
        let mut m = SMatrix::<f64, 4, 4>::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    /// Largest absolute entry of `RᵀR − I`.
    pub fn orthonormality_error(&self) -> f64 {
        (self.rotation.transpose() * self.rotation - Matrix3::identity()).abs().max()
    }

    pub fn is_valid_rotation(&self, tol: f64) -> bool {
        self.orthonormality_error() <= tol && (self.rotation.determinant() - 1.0).abs() <= tol
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ObservationKind {
    Stereo,
    Mono,
}

impl ObservationKind {
    pub fn dim(self) -> usize {
        match self {
            ObservationKind::Stereo => 3,
            ObservationKind::Mono => 2,
        }
    }
}

pub fn transform_point(pose: &Se3, world_point: &Vector3<f64>) -> Vector3<f64> {
    pose.transform_point(world_point)
}

fn checked_camera_point(pose: &Se3, point: &Vector3<f64>) -> Result<Vector3<f64>> {
    let pc = pose.transform_point(point);
    if !(pc.z > DEPTH_FLOOR) {
        return Err(Error::BehindCamera { depth: pc.z });
    }
    Ok(pc)
}

/// Projection of a camera-frame point: `(u_left, v, u_right)`.
pub fn project_camera_point(cam: &CameraIntrinsics, pc: &Vector3<f64>) -> Vector3<f64> {
    let inv_z = 1.0 / pc.z;
    Vector3::new(
        cam.fx * pc.x * inv_z + cam.cx,
        cam.fy * pc.y * inv_z + cam.cy,
        cam.fx * (pc.x - cam.baseline) * inv_z + cam.cx,
    )
}

pub fn project_stereo(cam: &CameraIntrinsics, pose: &Se3, point: &Vector3<f64>) -> Result<Vector3<f64>> {
    let pc = checked_camera_point(pose, point)?;
    Ok(project_camera_point(cam, &pc))
}

pub fn project_mono(cam: &CameraIntrinsics, pose: &Se3, point: &Vector3<f64>) -> Result<[f64; 2]> {
    let z = project_stereo(cam, pose, point)?;
    Ok([z.x, z.y])
}

/// Jacobian of a stereo or mono projection. Mono keeps only the first two rows.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationJacobian {
    pub kind: ObservationKind,
    /// ∂z/∂[rho; phi], stereo layout (row 3 unused for mono).
    pub pose: SMatrix<f64, 3, 6>,
    /// ∂z/∂p_world, stereo layout.
    pub point: Matrix3<f64>,
}

impl ObservationJacobian {
    pub fn meas_dim(&self) -> usize {
        self.kind.dim()
    }

    pub fn pose_rows(&self) -> nalgebra::DMatrix<f64> {
        self.pose.rows(0, self.meas_dim()).into_owned().resize(self.meas_dim(), 6, 0.0)
    }

    pub fn point_rows(&self) -> nalgebra::DMatrix<f64> {
        self.point.rows(0, self.meas_dim()).into_owned().resize(self.meas_dim(), 3, 0.0)
    }
}

pub fn observation_jacobian(
    cam: &CameraIntrinsics,
    pose: &Se3,
    point: &Vector3<f64>,
    kind: ObservationKind,
) -> Result<ObservationJacobian> {
    let pc = checked_camera_point(pose, point)?;
    let (x, y, z) = (pc.x, pc.y, pc.z);
    let iz = 1.0 / z;
    let iz2 = iz * iz;
    // ∂(u_l, v, u_r)/∂p_cam
    let dproj = Matrix3::new(
        cam.fx * iz,
        0.0,
        -cam.fx * x * iz2,
        0.0,
        cam.fy * iz,
        -cam.fy * y * iz2,
        cam.fx * iz,
        0.0,
        -cam.fx * (x - cam.baseline) * iz2,
    );
    // ∂p_cam/∂[rho; phi] = [I | -[p_cam]x]
    let mut dpc = Matrix3x6::zeros();
    dpc.fixed_view_mut::<3, 3>(0, 0).copy_from(&Matrix3::identity());
    dpc.fixed_view_mut::<3, 3>(0, 3).copy_from(&(-pc.cross_matrix()));
    let mut pose_j = dproj * dpc;
    let mut point_j = dproj * pose.rotation;
    if kind == ObservationKind::Mono {
        pose_j.row_mut(2).fill(0.0);
        point_j.row_mut(2).fill(0.0);
    }
    Ok(ObservationJacobian { kind, pose: pose_j, point: point_j })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_pose(rng: &mut ChaCha8Rng) -> Se3 {
        let axis = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let rot = *Rotation3::new(axis * 0.4).matrix();
        let t = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        Se3::new(rot, t)
    }

    #[test]
    fn identity_and_translation() {
        let p = Vector3::new(1.0, 2.0, 3.0);
        assert_eq!(transform_point(&Se3::identity(), &p), p);
        let pose = Se3::new(Matrix3::identity(), Vector3::new(0.0, 0.0, -1.0));
        assert_eq!(transform_point(&pose, &Vector3::new(0.0, 0.0, 1.0)), Vector3::zeros());
    }

    #[test]
    fn transform_matches_homogeneous_matrix() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let pose = random_pose(&mut rng);
            let p = Vector3::new(rng.random(), rng.random(), rng.random());
            let h = pose.to_homogeneous() * nalgebra::Vector4::new(p.x, p.y, p.z, 1.0);
            assert_abs_diff_eq!(transform_point(&pose, &p), h.xyz(), epsilon = 1e-12);
        }
    }

    #[test]
    fn compose_is_sequential_application() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..50 {
            let (a, b) = (random_pose(&mut rng), random_pose(&mut rng));
            let p = Vector3::new(rng.random(), rng.random(), rng.random());
            assert_abs_diff_eq!(
                a.compose(&b).transform_point(&p),
                a.transform_point(&b.transform_point(&p)),
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn stereo_axis_point() {
        let cam = CameraIntrinsics::canonical(0.5);
        let z = project_stereo(&cam, &Se3::identity(), &Vector3::new(0.0, 0.0, 1.0)).unwrap();
        assert_abs_diff_eq!(z, Vector3::new(0.0, 0.0, -0.5), epsilon = 1e-15);
        let m = project_mono(&cam, &Se3::identity(), &Vector3::new(0.0, 0.0, 1.0)).unwrap();
        assert_eq!(m, [0.0, 0.0]);
    }

    #[test]
    fn doubling_depth_halves_offset() {
        let cam = CameraIntrinsics::new(400.0, 410.0, 320.0, 240.0, 0.3);
        let a = project_stereo(&cam, &Se3::identity(), &Vector3::new(0.7, -0.2, 2.0)).unwrap();
        let b = project_stereo(&cam, &Se3::identity(), &Vector3::new(0.7, -0.2, 4.0)).unwrap();
        assert_abs_diff_eq!((b.x - cam.cx) * 2.0, a.x - cam.cx, epsilon = 1e-12);
    }

    #[test]
    fn projection_matches_scalar_formulas() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let cam = CameraIntrinsics::new(420.0, 415.0, 318.0, 241.0, 0.54);
        for _ in 0..100 {
            let pose = random_pose(&mut rng);
            let p = Vector3::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0), rng.random_range(4.0..8.0));
            let r = pose.rotation;
            let t = pose.translation;
            let xc = r[(0, 0)] * p.x + r[(0, 1)] * p.y + r[(0, 2)] * p.z + t.x;
            let yc = r[(1, 0)] * p.x + r[(1, 1)] * p.y + r[(1, 2)] * p.z + t.y;
            let zc = r[(2, 0)] * p.x + r[(2, 1)] * p.y + r[(2, 2)] * p.z + t.z;
            let z = project_stereo(&cam, &pose, &p).unwrap();
            assert_abs_diff_eq!(z.x, 420.0 * xc / zc + 318.0, epsilon = 1e-9);
            assert_abs_diff_eq!(z.y, 415.0 * yc / zc + 241.0, epsilon = 1e-9);
            assert_abs_diff_eq!(z.z, 420.0 * (xc - 0.54) / zc + 318.0, epsilon = 1e-9);
            let m = project_mono(&cam, &pose, &p).unwrap();
            assert_eq!(m, [z.x, z.y]);
        }
    }

    #[test]
    fn behind_camera_is_rejected() {
        let cam = CameraIntrinsics::canonical(0.5);
        let err = project_stereo(&cam, &Se3::identity(), &Vector3::new(0.0, 0.0, -1.0)).unwrap_err();
        assert!(matches!(err, Error::BehindCamera { .. }));
        assert!(observation_jacobian(&cam, &Se3::identity(), &Vector3::new(0.0, 0.0, 0.0), ObservationKind::Stereo)
            .is_err());
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let cam = CameraIntrinsics::new(420.0, 415.0, 318.0, 241.0, 0.54);
        let h = 1e-6;
        for case in 0..100 {
            let pose = random_pose(&mut rng);
            let p = Vector3::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0), rng.random_range(4.0..8.0));
            let kind = if case % 2 == 0 { ObservationKind::Stereo } else { ObservationKind::Mono };
            let jac = observation_jacobian(&cam, &pose, &p, kind).unwrap();
            for k in 0..6 {
                let mut d = Vector6::zeros();
                d[k] = h;
                let zp = project_stereo(&cam, &pose.retract(&d), &p).unwrap();
                let zm = project_stereo(&cam, &pose.retract(&(-d)), &p).unwrap();
                let fd = (zp - zm) / (2.0 * h);
                for r in 0..kind.dim() {
                    assert!(
                        (fd[r] - jac.pose[(r, k)]).abs() < 1e-5,
                        "pose d{r}/d{k}: {} vs {}",
                        fd[r],
                        jac.pose[(r, k)]
                    );
                }
            }
            for k in 0..3 {
                let mut d = Vector3::zeros();
                d[k] = h;
                let fd = (project_stereo(&cam, &pose, &(p + d)).unwrap()
                    - project_stereo(&cam, &pose, &(p - d)).unwrap())
                    / (2.0 * h);
                for r in 0..kind.dim() {
                    assert!((fd[r] - jac.point[(r, k)]).abs() < 1e-5);
                }
            }
        }
    }

    #[test]
    fn axis_point_closed_form_and_mono_rows() {
        let cam = CameraIntrinsics::canonical(0.5);
        let p = Vector3::new(0.0, 0.0, 2.0);
        let s = observation_jacobian(&cam, &Se3::identity(), &p, ObservationKind::Stereo).unwrap();
        assert_abs_diff_eq!(s.point[(0, 0)], cam.fx / 2.0, epsilon = 1e-15);
        let m = observation_jacobian(&cam, &Se3::identity(), &p, ObservationKind::Mono).unwrap();
        assert_eq!(m.pose_rows(), s.pose_rows().rows(0, 2).into_owned());
        assert_eq!(m.point_rows(), s.point_rows().rows(0, 2).into_owned());
    }

    #[test]
    fn quaternion_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let pose = random_pose(&mut rng);
            let q = pose.quaternion_wxyz();
            let back = Se3::from_quaternion(q, pose.translation);
            assert_abs_diff_eq!(back.rotation, pose.rotation, epsilon = 1e-12);
        }
    }

    #[test]
    fn scaled_rotation_is_invalid() {
        let pose = Se3::new(Matrix3::identity() * 2.0, Vector3::zeros());
        assert!(!pose.is_valid_rotation(1e-9));
        assert!(Se3::identity().is_valid_rotation(1e-12));
    }
}
