//! Reprojection residuals, analytic Jacobians, Levenberg–Marquardt pose
//! optimization, and small-scale bundle adjustment on the cubemap camera.
//!
//! Poses are world→body transforms updated by left-multiplied SE(3)
//! increments `exp(xi^) * T` with the tangent ordered `xi = (phi, rho)`
//! (rotation first). The pixel residual lives on the measured cube face;
//! alternate bearing-space metrics exist for the pose-optimization
//! comparison benchmark.

mod ba;
mod pose;
mod reproj;

pub use ba::{bundle_adjust, BaConfig, BaResult};
pub use pose::{optimize_pose, PoseObservation, PoseOptConfig, PoseOptResult};
pub use reproj::{
    jacobian_point, jacobian_pose, predicted_bearing, residual_metric, residual_ru,
};

use nalgebra::{Matrix3, Rotation3, Vector3, Vector6};
use thiserror::Error;

use crate::calib::FacePoint;

#[derive(Debug, Error)]
pub enum OptimError {
    #[error("face-camera depth {depth:.3e} is not positive")]
    DegenerateDepth { depth: f64 },
    #[error("need at least {need} usable observations, got {got}")]
    TooFewObservations { got: usize, need: usize },
    #[error("{what} index {index} out of range ({len} available)")]
    BadIndex {
        what: &'static str,
        index: usize,
        len: usize,
    },
    #[error("point {point} has {count} observations; bundle adjustment needs at least 2")]
    PointUnderObserved { point: usize, count: usize },
    #[error("gauge not fixed: hold two poses fixed, or one pose plus a scale anchor")]
    GaugeUnfixed,
    #[error("normal equations stayed singular up to damping {lambda:.1e}")]
    SingularNormalMatrix { lambda: f64 },
    #[error("{what}: {got} exceeds the supported maximum {max}")]
    TooLarge {
        what: &'static str,
        got: usize,
        max: usize,
    },
}

/// Rigid transform; in optimization contexts it carries the world→body map
/// `x_body = R x_world + t`, in trajectory files the camera-to-world
/// convention (documented at each use).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Se3Pose {
    pub rotation: Rotation3<f64>,
    pub translation: Vector3<f64>,
}

impl Se3Pose {
    pub fn new(rotation: Rotation3<f64>, translation: Vector3<f64>) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    pub fn identity() -> Self {
        Self {
            rotation: Rotation3::identity(),
            translation: Vector3::zeros(),
        }
    }

    /// Applies the transform: `R p + t`.
    pub fn transform(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    /// Inverse rigid transform.
    pub fn inverse(&self) -> Se3Pose {
        let rot = self.rotation.inverse();
        Se3Pose {
            rotation: rot,
            translation: -(rot * self.translation),
        }
    }

    /// Composition `self ∘ rhs` (apply `rhs` first).
    pub fn compose(&self, rhs: &Se3Pose) -> Se3Pose {
        Se3Pose {
            rotation: self.rotation * rhs.rotation,
            translation: self.rotation * rhs.translation + self.translation,
        }
    }

    /// For a world→body pose, the body origin expressed in the world frame.
    pub fn center(&self) -> Vector3<f64> {
        -(self.rotation.inverse() * self.translation)
    }

    /// Left-multiplied increment: `exp(xi^) * self`.
    pub fn retract(&self, xi: &Vector6<f64>) -> Se3Pose {
        se3_exp(xi).compose(self)
    }
}

/// SE(3) tangent increment, ordered rotation first: `xi = (phi, rho)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Se3Tangent {
    pub phi: Vector3<f64>,
    pub rho: Vector3<f64>,
}

impl Se3Tangent {
    pub fn from_vector(xi: &Vector6<f64>) -> Self {
        Self {
            phi: Vector3::new(xi[0], xi[1], xi[2]),
            rho: Vector3::new(xi[3], xi[4], xi[5]),
        }
    }

    pub fn to_vector(&self) -> Vector6<f64> {
        Vector6::new(
            self.phi.x, self.phi.y, self.phi.z, self.rho.x, self.rho.y, self.rho.z,
        )
    }
}

/// SE(3) exponential map: rotation by Rodrigues' formula, translation
/// through the left Jacobian, `t = J_l(phi) rho`.
pub fn se3_exp(xi: &Vector6<f64>) -> Se3Pose {
    let t = Se3Tangent::from_vector(xi);
    let rotation = Rotation3::from_scaled_axis(t.phi);
    let theta_sq = t.phi.norm_squared();
    let hat = Matrix3::new(
        0.0, -t.phi.z, t.phi.y, t.phi.z, 0.0, -t.phi.x, -t.phi.y, t.phi.x, 0.0,
    );
    let (a, b) = if theta_sq < 1e-8 {
        // Leading Taylor terms of (1-cos)/theta^2 and (theta-sin)/theta^3.
        (0.5 - theta_sq / 24.0, 1.0 / 6.0 - theta_sq / 120.0)
    } else {
        let theta = theta_sq.sqrt();
        (
            (1.0 - theta.cos()) / theta_sq,
            (theta - theta.sin()) / (theta_sq * theta),
        )
    };
    let j_l = Matrix3::identity() + a * hat + b * (hat * hat);
    Se3Pose {
        rotation,
        translation: j_l * t.rho,
    }
}

/// Huber robust kernel: for a residual block of norm `e`, returns the IRLS
/// scaling applied to the residual/Jacobian rows and the block's
/// contribution to the robust cost. Without a delta this is plain least
/// squares (`weight 1`, cost `e^2`).
pub(crate) fn huber(e: f64, delta: Option<f64>) -> (f64, f64) {
    match delta {
        None => (1.0, e * e),
        Some(d) => {
            if e <= d {
                (1.0, e * e)
            } else {
                ((d / e).sqrt(), d * (2.0 * e - d))
            }
        }
    }
}

/// Landmark position in the world frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MapPoint {
    pub position: Vector3<f64>,
}

impl MapPoint {
    pub fn new(position: Vector3<f64>) -> Self {
        Self { position }
    }
}

/// One pixel measurement of a landmark on a cube face, tying a point id to
/// a pose id with a per-observation noise scale.
#[derive(Debug, Clone, Copy)]
pub struct CubemapObservation {
    pub point_id: usize,
    pub pose_id: usize,
    pub fp: FacePoint,
    /// Measurement noise standard deviation, pixels (weights the residual
    /// as 1/sigma).
    pub sigma_px: f64,
}

impl CubemapObservation {
    pub fn new(point_id: usize, pose_id: usize, fp: FacePoint) -> Self {
        Self {
            point_id,
            pose_id,
            fp,
            sigma_px: 1.0,
        }
    }
}

/// Residual metric used by pose optimization: the face-pixel reprojection
/// residual or one of the bearing-space alternatives.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MetricKind {
    /// Pixel residual on the measured cube face (2D).
    Ru,
    /// Arc angle between bearings, `acos(b_m . b_p)` (1D).
    RA1,
    /// Cosine gap `1 - b_m . b_p` (1D).
    RA2,
    /// Component of the measured bearing tangential to the prediction (3D).
    Rt,
    /// Bearing difference `b_m - b_p` (3D).
    Rf,
}

impl MetricKind {
    pub const ALL: [MetricKind; 5] = [
        MetricKind::Ru,
        MetricKind::RA1,
        MetricKind::RA2,
        MetricKind::Rt,
        MetricKind::Rf,
    ];

    /// Residual dimension.
    pub fn dim(self) -> usize {
        match self {
            MetricKind::Ru => 2,
            MetricKind::RA1 | MetricKind::RA2 => 1,
            MetricKind::Rt | MetricKind::Rf => 3,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            MetricKind::Ru => "ru",
            MetricKind::RA1 => "ra1",
            MetricKind::RA2 => "ra2",
            MetricKind::Rt => "rt",
            MetricKind::Rf => "rf",
        }
    }

    pub fn parse(name: &str) -> Option<MetricKind> {
        MetricKind::ALL.iter().copied().find(|m| m.name() == name)
    }
}
