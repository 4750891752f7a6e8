//! Midpoint triangulation of bearing correspondences.
//!
//! Works directly on unit bearings, so points seen on any cube face —
//! including lateral and rear faces where a pinhole depth parameterization
//! breaks down — triangulate identically. Depths are signed distances along
//! each observed bearing, not optical-axis depths.

use nalgebra::{Rotation3, Unit, Vector3};

/// Quality classification of a triangulated point, in decreasing severity.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TriangulationStatus {
    /// The two rays are (numerically) parallel; no unique midpoint exists.
    IllConditioned,
    /// At least one signed depth is non-positive.
    BehindCamera,
    /// The ray parallax is below the requested minimum angle.
    LowParallax,
    Ok,
}

/// Triangulated point with its geometric diagnostics. `point` is expressed
/// in frame 1; the depths are signed distances along the frame-1 and
/// frame-2 bearings.
#[derive(Debug, Clone, Copy)]
pub struct TriangulationResult {
    pub point: Vector3<f64>,
    pub depth1: f64,
    pub depth2: f64,
    /// Angle between the two sight rays, radians.
    pub parallax: f64,
    pub status: TriangulationStatus,
}

/// Triangulates one bearing correspondence by intersecting the two sight
/// rays at the midpoint of their common perpendicular.
///
/// The relative pose maps frame-1 coordinates to frame 2: `x2 = R21 x1 + t21`.
/// `min_parallax` (radians) is the angle under which a well-signed point is
/// still reported as [`TriangulationStatus::LowParallax`]; statuses are
/// assigned with precedence ill-conditioned, behind-camera, low-parallax.
pub fn triangulate(
    r1: &Unit<Vector3<f64>>,
    r2: &Unit<Vector3<f64>>,
    r21: &Rotation3<f64>,
    t21: &Vector3<f64>,
    min_parallax: f64,
) -> TriangulationResult {
    let d1 = r1.into_inner();
    let d2 = r21.inverse() * r2.into_inner();
    // Camera-2 center expressed in frame 1.
    let o2 = -(r21.inverse() * t21);
    let b = d1.dot(&d2);
    let cross = d1.cross(&d2).norm();
    let parallax = cross.atan2(b);
    if cross < 1e-12 {
        return TriangulationResult {
            point: Vector3::zeros(),
            depth1: 0.0,
            depth2: 0.0,
            parallax,
            status: TriangulationStatus::IllConditioned,
        };
    }
    // Closest points of the rays s1*d1 and o2 + s2*d2.
    let denom = 1.0 - b * b;
    let pd1 = o2.dot(&d1);
    let pd2 = o2.dot(&d2);
    let s1 = (pd1 - b * pd2) / denom;
    let s2 = (b * pd1 - pd2) / denom;
    let point = (s1 * d1 + o2 + s2 * d2) / 2.0;
    let depth1 = point.dot(&d1);
    let depth2 = (point - o2).dot(&d2);
    let status = if depth1 <= 0.0 || depth2 <= 0.0 {
        TriangulationStatus::BehindCamera
    } else if parallax < min_parallax {
        TriangulationStatus::LowParallax
    } else {
        TriangulationStatus::Ok
    };
    TriangulationResult {
        point,
        depth1,
        depth2,
        parallax,
        status,
    }
}
