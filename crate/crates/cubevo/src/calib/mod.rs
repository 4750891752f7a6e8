//! Camera models: polynomial fisheye intrinsics and the multi-pinhole
//! cubemap camera.
//!
//! All bearings live in the camera body frame: `x` right, `y` down, `z`
//! forward. The cubemap camera is a bundle of up to six virtual pinhole
//! cameras of identical square resolution, one per cube face, sharing the
//! body origin and rotated by fixed axis-aligned rotations.

mod fisheye;

pub use fisheye::{load_ocamcalib, load_ocamcalib_file, CalibError, FisheyeIntrinsics};

use nalgebra::{Matrix3, Rotation3, Unit, Vector3};

/// Unit direction vector; the frame is stated wherever a bearing appears.
pub type Bearing = Unit<Vector3<f64>>;

/// Identity of one cube face. The declaration order is the fixed tie-break
/// priority used by [`CubemapCamera::face_of`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FaceId {
    Front,
    Left,
    Right,
    Up,
    Down,
    Back,
}

impl FaceId {
    /// All faces in tie-break priority order.
    pub const ALL: [FaceId; 6] = [
        FaceId::Front,
        FaceId::Left,
        FaceId::Right,
        FaceId::Up,
        FaceId::Down,
        FaceId::Back,
    ];

    /// Outward body-frame axis of this face (the face camera's optical axis
    /// expressed in the body frame).
    pub fn outward_axis(self) -> Vector3<f64> {
        match self {
            FaceId::Front => Vector3::new(0.0, 0.0, 1.0),
            FaceId::Left => Vector3::new(-1.0, 0.0, 0.0),
            FaceId::Right => Vector3::new(1.0, 0.0, 0.0),
            FaceId::Up => Vector3::new(0.0, -1.0, 0.0),
            FaceId::Down => Vector3::new(0.0, 1.0, 0.0),
            FaceId::Back => Vector3::new(0.0, 0.0, -1.0),
        }
    }

    /// Rotation from the body frame into this face's camera frame. The
    /// entries are exact (0 / +-1), so the outward axis maps to `(0, 0, 1)`
    /// without rounding.
    pub fn rotation_body_to_face(self) -> Rotation3<f64> {
        let m = match self {
            FaceId::Front => Matrix3::identity(),
            // +90 deg about y: body -x becomes the face forward axis.
            FaceId::Left => Matrix3::new(0.0, 0.0, 1.0, 0.0, 1.0, 0.0, -1.0, 0.0, 0.0),
            // -90 deg about y: body +x becomes the face forward axis.
            FaceId::Right => Matrix3::new(0.0, 0.0, -1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 0.0),
            // -90 deg about x: body -y (up) becomes the face forward axis.
            FaceId::Up => Matrix3::new(1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, -1.0, 0.0),
            // +90 deg about x: body +y (down) becomes the face forward axis.
            FaceId::Down => Matrix3::new(1.0, 0.0, 0.0, 0.0, 0.0, -1.0, 0.0, 1.0, 0.0),
            // 180 deg about y: body -z becomes the face forward axis.
            FaceId::Back => Matrix3::new(-1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, -1.0),
        };
        Rotation3::from_matrix_unchecked(m)
    }

    /// Face whose outward axis has the strictly largest dot product with
    /// `dir`, ignoring which faces a camera has active; ties resolve to the
    /// earlier face in [`FaceId::ALL`] priority order.
    pub fn of_direction(dir: &Vector3<f64>) -> FaceId {
        let mut best = FaceId::Front;
        let mut best_dot = f64::NEG_INFINITY;
        for f in FaceId::ALL {
            let dot = f.outward_axis().dot(dir);
            if dot > best_dot {
                best_dot = dot;
                best = f;
            }
        }
        best
    }

    /// Lower-case face name, as used by the CLI and output file names.
    pub fn name(self) -> &'static str {
        match self {
            FaceId::Front => "front",
            FaceId::Left => "left",
            FaceId::Right => "right",
            FaceId::Up => "up",
            FaceId::Down => "down",
            FaceId::Back => "back",
        }
    }

    /// Parses a lower-case face name.
    pub fn parse(name: &str) -> Option<FaceId> {
        FaceId::ALL.iter().copied().find(|f| f.name() == name)
    }
}

/// Real-valued pixel position on one cube face.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FacePoint {
    pub face: FaceId,
    pub u: f64,
    pub v: f64,
}

impl FacePoint {
    pub fn new(face: FaceId, u: f64, v: f64) -> Self {
        Self { face, u, v }
    }
}

/// Multi-pinhole cubemap camera: square faces of `face_size` pixels, focal
/// length exactly `face_size / 2` (90 degree face field of view) and
/// principal point `(face_size - 1) / 2` under the pixel-center convention.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CubemapCamera {
    face_size: u32,
    active: Vec<FaceId>,
}

impl CubemapCamera {
    pub const MIN_FACE_SIZE: u32 = 64;
    pub const MAX_FACE_SIZE: u32 = 4096;

    /// Builds a camera with an explicit ordered set of active faces.
    pub fn new(face_size: u32, active: &[FaceId]) -> Result<Self, CalibError> {
        if !(Self::MIN_FACE_SIZE..=Self::MAX_FACE_SIZE).contains(&face_size) {
            return Err(CalibError::ImageTooSmall {
                width: face_size,
                height: face_size,
            });
        }
        let mut seen = [false; 6];
        let mut faces = Vec::with_capacity(active.len());
        for &f in active {
            if !seen[f as usize] {
                seen[f as usize] = true;
                faces.push(f);
            }
        }
        if faces.is_empty() {
            return Err(CalibError::EmptyPoly);
        }
        Ok(Self {
            face_size,
            active: faces,
        })
    }

    /// Builds a camera with the default forward-looking face set: front,
    /// left, right, up and down active, back disabled.
    pub fn with_default_faces(face_size: u32) -> Result<Self, CalibError> {
        Self::new(
            face_size,
            &[
                FaceId::Front,
                FaceId::Left,
                FaceId::Right,
                FaceId::Up,
                FaceId::Down,
            ],
        )
    }

    pub fn face_size(&self) -> u32 {
        self.face_size
    }

    /// Focal length shared by all face cameras: exactly `face_size / 2`.
    pub fn focal(&self) -> f64 {
        f64::from(self.face_size) / 2.0
    }

    /// Principal point coordinate (same for u and v): `(face_size - 1) / 2`.
    pub fn principal_point(&self) -> f64 {
        (f64::from(self.face_size) - 1.0) / 2.0
    }

    /// Active faces in their configured order.
    pub fn active_faces(&self) -> &[FaceId] {
        &self.active
    }

    pub fn is_active(&self, face: FaceId) -> bool {
        self.active.contains(&face)
    }

    /// Selects the face whose outward axis has the strictly largest dot
    /// product with `b`; ties resolve to the earlier face in priority order
    /// front > left > right > up > down > back. Selecting an inactive face
    /// is an error: such a bearing is invisible to this camera.
    pub fn face_of(&self, b: &Bearing) -> Result<FaceId, CalibError> {
        let best = FaceId::of_direction(b);
        if self.is_active(best) {
            Ok(best)
        } else {
            let dot = best.outward_axis().dot(b);
            Err(CalibError::OutOfFov {
                theta_deg: dot.clamp(-1.0, 1.0).acos().to_degrees(),
                fov_deg: 0.0,
            })
        }
    }

    /// Projects a body-frame point onto the face selected by its direction.
    pub fn project(&self, p_body: &Vector3<f64>) -> Result<FacePoint, CalibError> {
        let norm = p_body.norm();
        if norm < 1e-12 {
            return Err(CalibError::NonFinite);
        }
        let dir = Unit::new_unchecked(p_body / norm);
        let face = self.face_of(&dir)?;
        self.project_on_face(p_body, face)
    }

    /// Projects a body-frame point through one specific face camera without
    /// face selection. Fails when the point is not in front of that face.
    pub fn project_on_face(
        &self,
        p_body: &Vector3<f64>,
        face: FaceId,
    ) -> Result<FacePoint, CalibError> {
        let p_face = face.rotation_body_to_face() * p_body;
        if p_face.z <= 1e-12 {
            return Err(CalibError::OutOfFov {
                theta_deg: 90.0,
                fov_deg: 90.0,
            });
        }
        let f = self.focal();
        let pp = self.principal_point();
        Ok(FacePoint {
            face,
            u: f * p_face.x / p_face.z + pp,
            v: f * p_face.y / p_face.z + pp,
        })
    }

    /// Lifts a face pixel back to a unit bearing in the body frame.
    pub fn unproject(&self, fp: &FacePoint) -> Bearing {
        let f = self.focal();
        let pp = self.principal_point();
        let ray_face = Vector3::new((fp.u - pp) / f, (fp.v - pp) / f, 1.0);
        let ray_body = fp.face.rotation_body_to_face().inverse() * ray_face;
        Unit::new_normalize(ray_body)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn minimal_model() -> FisheyeIntrinsics {
        FisheyeIntrinsics::new(
            vec![-160.0],
            vec![],
            (640.0, 360.0),
            (1.0, 0.0, 0.0),
            (1280, 720),
        )
        .unwrap()
    }

    #[test]
    fn center_pixel_lifts_to_forward_axis() {
        let intr = minimal_model();
        let b = intr.cam_to_bearing(640.0, 360.0).unwrap();
        assert_relative_eq!(b.into_inner(), Vector3::new(0.0, 0.0, 1.0), epsilon = 1e-15);
    }

    #[test]
    fn equal_angle_model_maps_fov_edge_onto_horizontal_bearing() {
        // 180 degree equal-angle profile reaching 90 deg polar angle at
        // radius 300; the closed form is theta(rho) = (pi/2) * rho / 300.
        let intr = crate::synth::equiangular_intrinsics(
            90f64.to_radians(),
            300.0,
            (720, 720),
            (359.5, 359.5),
        )
        .unwrap();
        assert_relative_eq!(intr.poly[0], -2.0 * 300.0 / std::f64::consts::PI, epsilon = 1e-12);
        let b = intr.cam_to_bearing(359.5 + 300.0, 359.5).unwrap();
        assert!((b.into_inner() - Vector3::new(1.0, 0.0, 0.0)).norm() < 1e-9);
        // Inversion recovers the pixel.
        let (u, v) = intr
            .bearing_to_pixel(&Unit::new_normalize(Vector3::new(1.0, 0.0, 0.0)))
            .unwrap();
        assert!((u - 659.5).abs() < 1e-6 && (v - 359.5).abs() < 1e-6);
    }

    #[test]
    fn equal_angle_model_matches_closed_form_on_a_grid() {
        let r = 300.0;
        let intr = crate::synth::equiangular_intrinsics(
            90f64.to_radians(),
            r,
            (720, 720),
            (359.5, 359.5),
        )
        .unwrap();
        for i in 0..200 {
            let rho = r * f64::from(i) / 199.0;
            let az = f64::from(i) * 0.7;
            let u = 359.5 + rho * az.cos();
            let v = 359.5 + rho * az.sin();
            if u < 0.0 || v < 0.0 || u > 719.0 || v > 719.0 {
                continue;
            }
            let b = intr.cam_to_bearing(u, v).unwrap();
            let theta = (std::f64::consts::FRAC_PI_2) * rho / r;
            let expect = Vector3::new(
                theta.sin() * az.cos(),
                theta.sin() * az.sin(),
                theta.cos(),
            );
            assert!(
                (b.into_inner() - expect).norm() < 1e-9,
                "rho={rho} az={az}"
            );
        }
    }

    #[test]
    fn bearing_pixel_round_trip_with_nontrivial_affine() {
        let mut intr = crate::synth::equiangular_intrinsics(
            95f64.to_radians(),
            349.5,
            (700, 700),
            (349.5, 349.5),
        )
        .unwrap();
        intr.affine = (1.001, -2.0e-4, 3.0e-4);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let fov = intr.max_polar_angle();
        for _ in 0..1000 {
            let theta = rng.random_range(0.0..fov * 0.999);
            let az = rng.random_range(0.0..std::f64::consts::TAU);
            let b = Unit::new_normalize(Vector3::new(
                theta.sin() * az.cos(),
                theta.sin() * az.sin(),
                theta.cos(),
            ));
            let Ok((u, v)) = intr.bearing_to_pixel(&b) else {
                // A bearing inside the polar bound can still fall outside the
                // rectangular image under a skewed affine; skip those.
                continue;
            };
            let b2 = intr.cam_to_bearing(u, v).unwrap();
            // Chordal distance, not `angle()`: acos cannot resolve angles
            // below ~2e-8 (1 ulp of a unit dot product).
            let gap = (b.into_inner() - b2.into_inner()).norm();
            assert!(gap < 1e-12, "round trip gap {gap} at theta {theta}");
        }
    }

    #[test]
    fn out_of_fov_bearing_is_rejected() {
        let intr = crate::synth::equiangular_intrinsics(
            95f64.to_radians(),
            349.5,
            (700, 700),
            (349.5, 349.5),
        )
        .unwrap();
        let fov = intr.max_polar_angle();
        assert_relative_eq!(fov, 95f64.to_radians(), epsilon = 1e-6);
        let theta = fov + 0.02;
        let b = Unit::new_normalize(Vector3::new(theta.sin(), 0.0, theta.cos()));
        assert!(matches!(
            intr.bearing_to_pixel(&b),
            Err(CalibError::OutOfFov { .. })
        ));
    }

    #[test]
    fn inverse_polynomial_path_follows_the_file_convention() {
        // Hand-pick an inverse polynomial and verify bearing_to_pixel
        // evaluates it at the raw elevation angle of the file's axis.
        let mut intr = minimal_model();
        intr.inv_poly = vec![100.0, -63.66];
        let b = Unit::new_normalize(Vector3::new(0.3, 0.0, 1.0));
        let (u, v) = intr.bearing_to_pixel(&b).unwrap();
        let t = (-b.z).atan2(b.x.hypot(b.y));
        let rho = 100.0 - 63.66 * t;
        assert_relative_eq!(u, 640.0 + rho, epsilon = 1e-12);
        assert_relative_eq!(v, 360.0, epsilon = 1e-12);
    }

    #[test]
    fn parses_minimal_calibration_file() {
        let text = "# forward poly\n1 -160.0\n# inverse poly\n0\n# center row col\n360 640\n# affine\n1 0 0\n# size height width\n720 1280\n";
        let intr = load_ocamcalib(text).unwrap();
        assert_eq!(intr.poly, vec![-160.0]);
        assert!(intr.inv_poly.is_empty());
        assert_eq!(intr.center, (640.0, 360.0));
        assert_eq!(intr.affine, (1.0, 0.0, 0.0));
        assert_eq!(intr.image_size, (1280, 720));
    }

    #[test]
    fn serialization_round_trip_preserves_all_fields() {
        let intr = FisheyeIntrinsics::new(
            vec![-159.26, 0.0, 6.42e-4, -2.1e-7, 3.3e-10],
            vec![231.7, 142.2, 11.9, 17.3],
            (642.31, 358.77),
            (1.0004, -1.7e-5, 2.4e-5),
            (1280, 720),
        )
        .unwrap();
        let text = intr.to_ocamcalib_string();
        let again = load_ocamcalib(&text).unwrap();
        assert_eq!(intr.poly, again.poly);
        assert_eq!(intr.inv_poly, again.inv_poly);
        assert_eq!(intr.center, again.center);
        assert_eq!(intr.affine, again.affine);
        assert_eq!(intr.image_size, again.image_size);
    }

    #[test]
    fn parser_reports_line_numbers_and_rejects_bad_input() {
        // Truncated coefficient list.
        let err = load_ocamcalib("2 -160.0\n").unwrap_err();
        assert!(matches!(err, CalibError::Parse { .. }), "{err}");
        // Non-numeric token on line 2.
        let err = load_ocamcalib("1 -160.0\nbogus\n360 640\n1 0 0\n720 1280\n").unwrap_err();
        match err {
            CalibError::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected error {other}"),
        }
        // Trailing garbage.
        let err =
            load_ocamcalib("1 -160.0\n0\n360 640\n1 0 0\n720 1280\n42\n").unwrap_err();
        assert!(matches!(err, CalibError::Parse { line: 6, .. }), "{err}");
    }

    #[test]
    fn validation_rejects_degenerate_models() {
        let err = FisheyeIntrinsics::new(vec![], vec![], (1.0, 1.0), (1.0, 0.0, 0.0), (10, 10))
            .unwrap_err();
        assert!(matches!(err, CalibError::EmptyPoly));
        let err = FisheyeIntrinsics::new(
            vec![0.0, 1.0],
            vec![],
            (5.0, 5.0),
            (1.0, 0.0, 0.0),
            (10, 10),
        )
        .unwrap_err();
        assert!(matches!(err, CalibError::ZeroLeadingCoeff));
        let err = FisheyeIntrinsics::new(
            vec![-160.0],
            vec![],
            (5.0, 5.0),
            (1.0, 2.0, 0.5),
            (10, 10),
        )
        .unwrap_err();
        assert!(matches!(err, CalibError::DegenerateAffine { .. }));
        let err = FisheyeIntrinsics::new(
            vec![-160.0],
            vec![],
            (20.0, 5.0),
            (1.0, 0.0, 0.0),
            (10, 10),
        )
        .unwrap_err();
        assert!(matches!(err, CalibError::CenterOutsideImage { .. }));
    }

    #[test]
    fn pixel_outside_bounds_is_a_domain_error() {
        let intr = minimal_model();
        assert!(matches!(
            intr.cam_to_bearing(-1.0, 10.0),
            Err(CalibError::PixelOutOfBounds { .. })
        ));
        assert!(matches!(
            intr.cam_to_bearing(10.0, 1e9),
            Err(CalibError::PixelOutOfBounds { .. })
        ));
    }

    #[test]
    fn rotation_table_maps_outward_axes_exactly() {
        for f in FaceId::ALL {
            let r = f.rotation_body_to_face();
            let mapped = r * f.outward_axis();
            assert_eq!(mapped, Vector3::new(0.0, 0.0, 1.0), "{f:?}");
            // Proper rotation.
            assert_relative_eq!(r.matrix().determinant(), 1.0, epsilon = 1e-15);
            assert_relative_eq!(
                (r.matrix() * r.matrix().transpose()),
                Matrix3::identity(),
                epsilon = 1e-15
            );
        }
    }

    #[test]
    fn focal_is_half_face_size() {
        for (s, f) in [(450u32, 225.0), (550, 275.0), (650, 325.0)] {
            let cam = CubemapCamera::with_default_faces(s).unwrap();
            assert_eq!(cam.focal(), f);
            assert_eq!(cam.principal_point(), (f64::from(s) - 1.0) / 2.0);
        }
    }

    #[test]
    fn face_selection_priority_and_inactive_faces() {
        let cam = CubemapCamera::with_default_faces(650).unwrap();
        let diag = Unit::new_normalize(Vector3::new(1.0, 0.0, 1.0));
        assert_eq!(cam.face_of(&diag).unwrap(), FaceId::Front);
        let behind = Unit::new_normalize(Vector3::new(0.1, 0.0, -1.0));
        assert!(cam.face_of(&behind).is_err());
        let all = CubemapCamera::new(650, &FaceId::ALL).unwrap();
        assert_eq!(all.face_of(&behind).unwrap(), FaceId::Back);
    }

    #[test]
    fn projection_matches_hand_values() {
        let cam = CubemapCamera::with_default_faces(650).unwrap();
        let fp = cam.project(&Vector3::new(0.0, 0.0, 5.0)).unwrap();
        assert_eq!(fp.face, FaceId::Front);
        assert_eq!((fp.u, fp.v), (324.5, 324.5));
        // Cube corner direction: three-way tie resolved to front, lands on
        // the face border.
        let fp = cam.project(&Vector3::new(1.0, 1.0, 1.0)).unwrap();
        assert_eq!(fp.face, FaceId::Front);
        assert_eq!((fp.u, fp.v), (649.5, 649.5));
    }

    #[test]
    fn unproject_then_face_of_round_trip() {
        let cam = CubemapCamera::with_default_faces(650).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..2000 {
            let face = cam.active_faces()[rng.random_range(0..cam.active_faces().len())];
            // Interior pixels only: the face border is shared with the
            // neighbor face and resolves by priority there.
            let u = rng.random_range(1.0..648.0);
            let v = rng.random_range(1.0..648.0);
            let fp = FacePoint::new(face, u, v);
            let b = cam.unproject(&fp);
            assert_eq!(cam.face_of(&b).unwrap(), face);
            let fp2 = cam.project(&b.into_inner().scale(3.7)).unwrap();
            assert!((fp2.u - u).abs() < 1e-9 && (fp2.v - v).abs() < 1e-9);
        }
    }
}
