//! Multi-pinhole reprojection residual on the measured cube face, its
//! analytic pose/point Jacobians, and the alternative bearing-space metrics.

use nalgebra::{DVector, Matrix2x3, Matrix2x6, Matrix3, Vector2, Vector3};

use super::{CubemapObservation, MapPoint, MetricKind, OptimError, Se3Pose};
use crate::calib::{Bearing, CubemapCamera, FacePoint};

/// Shared terms of the residual/Jacobian chain at one observation:
/// `P2 = T_BW P` (body frame), `P1 = R_CiB P2` (face-camera frame),
/// `u = pi(K P1)` on the measured face.
pub(crate) struct RuTerms {
    pub residual: Vector2<f64>,
    /// `-(du/dP1) * R_CiB`, the 2x3 prefix shared by both Jacobians.
    pub m: Matrix2x3<f64>,
    /// Point in the body frame.
    pub p2: Vector3<f64>,
}

pub(crate) fn ru_terms(
    cam: &CubemapCamera,
    pose: &Se3Pose,
    point: &Vector3<f64>,
    fp: &FacePoint,
) -> Result<RuTerms, OptimError> {
    let p2 = pose.transform(point);
    // The residual lives on the measured face's pinhole plane, which extends
    // smoothly beyond the physical panel: a point whose direction currently
    // falls on a neighbouring face still has a well-defined (large) residual
    // here. Clipping at the panel seam instead would make usability flip
    // discontinuously mid-optimization and strand the solver against the
    // seam; only a non-positive face-camera depth is genuinely degenerate.
    let rot = fp.face.rotation_body_to_face();
    let p1 = rot * p2;
    if p1.z <= 1e-9 {
        return Err(OptimError::DegenerateDepth { depth: p1.z });
    }
    let f = cam.focal();
    let pp = cam.principal_point();
    let (x, y, z) = (p1.x, p1.y, p1.z);
    let residual = Vector2::new(fp.u - (f * x / z + pp), fp.v - (f * y / z + pp));
    let du_dp1 = Matrix2x3::new(
        f / z,
        0.0,
        -f * x / (z * z),
        0.0,
        f / z,
        -f * y / (z * z),
    );
    let m = -du_dp1 * rot.matrix();
    Ok(RuTerms { residual, m, p2 })
}

fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

pub(crate) fn jac_pose_from_terms(t: &RuTerms) -> Matrix2x6<f64> {
    let rot_block = t.m * (-skew(&t.p2));
    let mut j = Matrix2x6::zeros();
    j.fixed_view_mut::<2, 3>(0, 0).copy_from(&rot_block);
    j.fixed_view_mut::<2, 3>(0, 3).copy_from(&t.m);
    j
}

pub(crate) fn jac_point_from_terms(t: &RuTerms, pose: &Se3Pose) -> Matrix2x3<f64> {
    t.m * pose.rotation.matrix()
}

/// Pixel reprojection residual `u_measured - u_predicted` on the measured
/// cube face's pinhole plane (which extends beyond the physical panel).
/// Errors when the face-camera depth is not positive.
pub fn residual_ru(
    cam: &CubemapCamera,
    pose: &Se3Pose,
    point: &MapPoint,
    obs: &CubemapObservation,
) -> Result<Vector2<f64>, OptimError> {
    Ok(ru_terms(cam, pose, &point.position, &obs.fp)?.residual)
}

/// Analytic 2x6 Jacobian of the pixel residual with respect to a
/// left-multiplied pose increment, columns ordered `(phi, rho)`.
pub fn jacobian_pose(
    cam: &CubemapCamera,
    pose: &Se3Pose,
    point: &MapPoint,
    obs: &CubemapObservation,
) -> Result<Matrix2x6<f64>, OptimError> {
    let t = ru_terms(cam, pose, &point.position, &obs.fp)?;
    Ok(jac_pose_from_terms(&t))
}

/// Analytic 2x3 Jacobian of the pixel residual with respect to the world
/// point position.
pub fn jacobian_point(
    cam: &CubemapCamera,
    pose: &Se3Pose,
    point: &MapPoint,
    obs: &CubemapObservation,
) -> Result<Matrix2x3<f64>, OptimError> {
    let t = ru_terms(cam, pose, &point.position, &obs.fp)?;
    Ok(jac_point_from_terms(&t, pose))
}

/// Unit bearing of a world point seen from a world→body pose, or `None`
/// when the point coincides with the camera center.
pub fn predicted_bearing(pose: &Se3Pose, point: &Vector3<f64>) -> Option<Bearing> {
    let p2 = pose.transform(point);
    let n = p2.norm();
    if n < 1e-12 {
        None
    } else {
        Some(Bearing::new_unchecked(p2 / n))
    }
}

/// Bearing-space residual of the chosen metric between a measured bearing
/// `b_m` and a predicted bearing `b_p`.
///
/// * `RA1`: arc angle `acos(b_m . b_p)`, radians (1D).
/// * `RA2`: cosine gap `1 - b_m . b_p` (1D).
/// * `Rt`: tangential component `(I - b_p b_p') b_m` (3D; note it also
///   vanishes for exactly antipodal bearings).
/// * `Rf`: plain difference `b_m - b_p` (3D).
///
/// The pixel metric has no bearing-space form; use [`residual_ru`].
pub fn residual_metric(kind: MetricKind, b_p: &Bearing, b_m: &Bearing) -> DVector<f64> {
    let dot = b_m.dot(b_p).clamp(-1.0, 1.0);
    match kind {
        MetricKind::Ru => panic!("the pixel metric is evaluated by residual_ru, not in bearing space"),
        MetricKind::RA1 => DVector::from_vec(vec![dot.acos()]),
        MetricKind::RA2 => DVector::from_vec(vec![1.0 - dot]),
        MetricKind::Rt => {
            let bp = b_p.into_inner();
            let t = b_m.into_inner() - bp * dot;
            DVector::from_vec(vec![t.x, t.y, t.z])
        }
        MetricKind::Rf => {
            let d = b_m.into_inner() - b_p.into_inner();
            DVector::from_vec(vec![d.x, d.y, d.z])
        }
    }
}
