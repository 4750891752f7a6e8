//! Two-view epipolar geometry on bearing vectors.
//!
//! Correspondences are unit bearings, so the epipolar constraint is
//! `r2' * E * r1 = 0` with no projective normalization; `n = E * r1` is the
//! normal of the epipolar plane in the second body frame. Because a fixed
//! angular inlier threshold treats face-center and face-border pixels very
//! differently, the RANSAC scoring uses an adaptive per-point threshold that
//! maps a pixel-distance band on the observed cube face onto the unit
//! sphere ([`inlier_threshold_sin_theta`]).

use nalgebra::{DMatrix, Matrix3, Rotation3, Unit, Vector2, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::calib::{Bearing, CubemapCamera, FacePoint};
use crate::triangulate::{self, TriangulationStatus};

#[derive(Debug, Error)]
pub enum EpipolarError {
    #[error("need at least {need} correspondences, got {got}")]
    TooFewCorrespondences { got: usize, need: usize },
    #[error("degenerate correspondence configuration: the nullspace of the design matrix is not unique")]
    DegenerateSample,
    #[error("bearing lies at the epipole; epipolar residual is undefined")]
    EpipoleDegenerate,
    #[error("epipolar plane normal is parallel to the face optical axis; threshold geometry is undefined")]
    DegenerateThreshold,
    #[error("ransac found no model with at least {need} inliers (best {best})")]
    NoModel { best: usize, need: usize },
    #[error("cheirality is ambiguous: best candidate explains {best} of {total} points")]
    AmbiguousCheirality { best: usize, total: usize },
}

/// One bearing correspondence between two frames, with the cube-face pixel
/// each bearing was observed at (needed for adaptive thresholds).
#[derive(Debug, Clone, Copy)]
pub struct Correspondence {
    pub r1: Bearing,
    pub r2: Bearing,
    pub fp1: FacePoint,
    pub fp2: FacePoint,
}

/// Essential matrix estimate, held on the essential manifold with singular
/// values `(1, 1, 0)` and Frobenius norm `sqrt(2)`.
#[derive(Debug, Clone, Copy)]
pub struct EssentialModel(pub Matrix3<f64>);

impl EssentialModel {
    /// Builds the essential matrix `[t]_x * R` of a relative pose
    /// (frame 1 to frame 2), scaled onto the essential manifold.
    pub fn from_rotation_translation(r21: &Rotation3<f64>, t21: &Vector3<f64>) -> Self {
        let t = t21.normalize();
        let e = skew(&t) * r21.matrix();
        EssentialModel(e)
    }
}

fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Estimates an essential matrix from at least eight bearing correspondences
/// with the direct linear method, then projects the minimizer onto the
/// essential manifold (singular values averaged to `(1, 1, 0)`).
///
/// The solve is declared degenerate when the two smallest singular values of
/// the design matrix are indistinguishable (< 1e-12 apart), i.e. the
/// nullspace is not unique.
pub fn estimate_essential_8pt(corrs: &[Correspondence]) -> Result<EssentialModel, EpipolarError> {
    if corrs.len() < 8 {
        return Err(EpipolarError::TooFewCorrespondences {
            got: corrs.len(),
            need: 8,
        });
    }
    // At least 9 rows: nalgebra computes a thin SVD, and an 8x9 design matrix
    // would come back with only eight right singular vectors - the nullspace
    // vector we need is the ninth. Zero rows leave A'A (and thus V) unchanged.
    let mut a = DMatrix::<f64>::zeros(corrs.len().max(9), 9);
    for (i, c) in corrs.iter().enumerate() {
        let (r1, r2) = (c.r1.into_inner(), c.r2.into_inner());
        for row_j in 0..3 {
            for col_k in 0..3 {
                // Coefficient of E[j,k] in r2' * E * r1.
                a[(i, 3 * row_j + col_k)] = r2[row_j] * r1[col_k];
            }
        }
    }
    let svd = a.svd(false, true);
    let sv = &svd.singular_values;
    let n = sv.len();
    if sv[n - 2] - sv[n - 1] < 1e-12 {
        return Err(EpipolarError::DegenerateSample);
    }
    let v_t = svd.v_t.as_ref().expect("svd requested v_t");
    let e_vec = v_t.row(n - 1);
    let e_raw = Matrix3::new(
        e_vec[0], e_vec[1], e_vec[2], e_vec[3], e_vec[4], e_vec[5], e_vec[6], e_vec[7], e_vec[8],
    );
    // Project onto the essential manifold.
    let svd3 = e_raw.svd(true, true);
    let u = svd3.u.unwrap();
    let vt = svd3.v_t.unwrap();
    let e = u * Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, 0.0)) * vt;
    Ok(EssentialModel(e))
}

/// Signed epipolar residual `r2 . normalize(E * r1)`: the sine of the angular
/// deviation of `r2` from the epipolar plane of `r1`.
pub fn epipolar_residual(
    e: &EssentialModel,
    r1: &Bearing,
    r2: &Bearing,
) -> Result<f64, EpipolarError> {
    let n = e.0 * r1.into_inner();
    let norm = n.norm();
    if norm < 1e-12 {
        return Err(EpipolarError::EpipoleDegenerate);
    }
    Ok(r2.dot(&(n / norm)))
}

/// Intermediate geometry of the adaptive spherical inlier threshold, kept
/// for introspection and testing.
#[derive(Debug, Clone, Copy)]
pub struct ThresholdGeometry {
    /// Pixel band half-width on the face.
    pub th: f64,
    /// Face focal length, pixels.
    pub f: f64,
    /// Epipolar plane normal rotated into the observed face frame.
    pub n_face: Vector3<f64>,
    /// In-plane direction of the epipolar line on the face (`n_face x z`).
    pub e_dir: Vector2<f64>,
    /// Length of the offset component along the epipolar line direction.
    pub len_oo: f64,
    /// Length of the offset component perpendicular to it.
    pub len_po: f64,
    pub tan_phi: f64,
    pub tan_phi_theta: f64,
    pub tan_theta: f64,
    /// Sine of the spherical inlier angle for a `th`-pixel band.
    pub sin_theta: f64,
}

/// Maps a pixel-distance inlier band of width `th` around the epipolar line
/// into a spherical threshold at the observed face point.
///
/// With the face point `P` at centered offset `OP` from the face center `O`,
/// the offset splits into a component along the epipolar line direction
/// (`oo`) and one perpendicular to it (`po`). Treating `P` as sitting on the
/// band boundary, the angle `theta` subtended at the camera center between
/// `P`'s ray and the ray of its in-image perpendicular foot on the line is
///
/// ```text
/// tan(phi + theta) = (th + po) / sqrt(f^2 + oo^2)
/// tan(phi)        = po / sqrt(f^2 + oo^2)
/// ```
///
/// and a bearing is an inlier when `|r2 . n| <= sin(theta)`. At the face
/// center this reduces to the closed form `sin(theta) = th / sqrt(th^2 + f^2)`;
/// toward the face borders the threshold shrinks, reflecting that one pixel
/// there spans a smaller angle.
pub fn inlier_threshold_sin_theta(
    cam: &CubemapCamera,
    fp: &FacePoint,
    n_body: &Vector3<f64>,
    th: f64,
) -> Result<ThresholdGeometry, EpipolarError> {
    let n_face = fp.face.rotation_body_to_face() * n_body;
    let e_dir = Vector2::new(n_face.y, -n_face.x); // n_face x (0,0,1)
    let e_norm = e_dir.norm();
    let n_norm = n_face.norm();
    if n_norm < 1e-12 || e_norm < 1e-9 * n_norm {
        return Err(EpipolarError::DegenerateThreshold);
    }
    let pp = cam.principal_point();
    let op = Vector2::new(fp.u - pp, fp.v - pp);
    let oo = (e_dir.dot(&op) / e_norm).abs();
    let po = (op.norm_squared() - oo * oo).max(0.0).sqrt();
    let f = cam.focal();
    let base = (f * f + oo * oo).sqrt();
    let tan_phi_theta = (th + po) / base;
    let tan_phi = po / base;
    let tan_theta = (tan_phi_theta - tan_phi) / (1.0 + tan_phi_theta * tan_phi);
    let sin_theta = tan_theta / (tan_theta * tan_theta + 1.0).sqrt();
    Ok(ThresholdGeometry {
        th,
        f,
        n_face,
        e_dir,
        len_oo: oo,
        len_po: po,
        tan_phi,
        tan_phi_theta,
        tan_theta,
        sin_theta,
    })
}

/// Fallback spherical threshold when the line geometry is degenerate: a
/// `th`-pixel band at the face center.
pub fn min_sin_theta(cam: &CubemapCamera, th: f64) -> f64 {
    let f = cam.focal();
    th / (th * th + f * f).sqrt()
}

/// RANSAC configuration for essential-matrix estimation.
#[derive(Debug, Clone)]
pub struct RansacConfig {
    /// Hard cap on hypothesis iterations.
    pub max_iterations: usize,
    /// Probability of drawing at least one all-inlier sample; drives the
    /// adaptive iteration bound.
    pub confidence: f64,
    /// Pixel half-width of the inlier band around the epipolar line.
    pub th: f64,
    /// Seed of the deterministic sampler.
    pub seed: u64,
}

impl Default for RansacConfig {
    fn default() -> Self {
        Self {
            max_iterations: 500,
            confidence: 0.99,
            th: 1.0,
            seed: 0,
        }
    }
}

/// Result of [`ransac_essential`].
#[derive(Debug, Clone)]
pub struct RansacResult {
    pub model: EssentialModel,
    /// Per-correspondence inlier mask of the final model.
    pub inliers: Vec<bool>,
    pub n_inliers: usize,
    /// Hypothesis iterations actually executed.
    pub iterations: usize,
}

/// Symmetric adaptive inlier test: the epipolar constraint scalar must stay
/// within the spherical band threshold evaluated at both observations.
fn is_inlier(cam: &CubemapCamera, e: &EssentialModel, c: &Correspondence, th: f64) -> bool {
    let scalar = c.r2.dot(&(e.0 * c.r1.into_inner()));
    let check = |n: Vector3<f64>, fp: &FacePoint| -> bool {
        let norm = n.norm();
        if norm < 1e-12 {
            // The bearing sits at the epipole: the constraint is trivially
            // satisfied and carries no band information.
            return true;
        }
        let sin_theta = match inlier_threshold_sin_theta(cam, fp, &n, th) {
            Ok(g) => g.sin_theta,
            Err(_) => min_sin_theta(cam, th),
        };
        scalar.abs() <= sin_theta * norm
    };
    check(e.0 * c.r1.into_inner(), &c.fp2) && check(e.0.transpose() * c.r2.into_inner(), &c.fp1)
}

/// Robust essential-matrix estimation with adaptive per-point thresholds.
///
/// Samples eight-point subsets with a seeded deterministic generator, scores
/// hypotheses with the symmetric adaptive test, adapts the iteration bound
/// from the best inlier ratio, then re-estimates the model on the winning
/// inlier set and recomputes its mask.
pub fn ransac_essential(
    cam: &CubemapCamera,
    corrs: &[Correspondence],
    cfg: &RansacConfig,
) -> Result<RansacResult, EpipolarError> {
    let n = corrs.len();
    if n < 8 {
        return Err(EpipolarError::TooFewCorrespondences { got: n, need: 8 });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut best_mask = vec![false; n];
    let mut best_count = 0usize;
    let mut best_model: Option<EssentialModel> = None;
    let mut needed = cfg.max_iterations;
    let mut iterations = 0usize;
    while iterations < needed.min(cfg.max_iterations) {
        iterations += 1;
        let idx = rand::seq::index::sample(&mut rng, n, 8);
        let sample: Vec<Correspondence> = idx.iter().map(|i| corrs[i]).collect();
        let Ok(model) = estimate_essential_8pt(&sample) else {
            continue;
        };
        let mask: Vec<bool> = corrs.iter().map(|c| is_inlier(cam, &model, c, cfg.th)).collect();
        let count = mask.iter().filter(|&&b| b).count();
        if count > best_count {
            best_count = count;
            best_mask = mask;
            best_model = Some(model);
            // Adaptive bound: iterations needed to hit an all-inlier sample
            // with the configured confidence, given the observed ratio.
            let w = count as f64 / n as f64;
            let p_good = w.powi(8);
            if p_good > 1.0 - 1e-12 {
                needed = iterations;
            } else if p_good > 1e-12 {
                let est = (1.0 - cfg.confidence).ln() / (1.0 - p_good).ln();
                needed = est.ceil().min(cfg.max_iterations as f64) as usize;
            }
        }
    }
    let Some(mut model) = best_model else {
        return Err(EpipolarError::NoModel { best: 0, need: 8 });
    };
    if best_count < 8 {
        return Err(EpipolarError::NoModel {
            best: best_count,
            need: 8,
        });
    }
    // Final least-squares fit on all inliers of the best hypothesis.
    let inlier_corrs: Vec<Correspondence> = corrs
        .iter()
        .zip(&best_mask)
        .filter_map(|(c, &keep)| keep.then_some(*c))
        .collect();
    if let Ok(refit) = estimate_essential_8pt(&inlier_corrs) {
        model = refit;
    }
    let inliers: Vec<bool> = corrs.iter().map(|c| is_inlier(cam, &model, c, cfg.th)).collect();
    let n_inliers = inliers.iter().filter(|&&b| b).count();
    Ok(RansacResult {
        model,
        inliers,
        n_inliers,
        iterations,
    })
}

/// Decomposes an essential matrix into the relative pose (frame 1 to
/// frame 2) by cheirality: among the four `(R, t)` candidates, pick the one
/// that places the most triangulated correspondences at positive depth along
/// both observed bearings. Depth is measured along the bearing rather than
/// the optical axis, so correspondences seen on lateral cube faces vote
/// correctly.
pub fn decompose_essential(
    e: &EssentialModel,
    corrs: &[Correspondence],
) -> Result<(Rotation3<f64>, Unit<Vector3<f64>>), EpipolarError> {
    if corrs.is_empty() {
        return Err(EpipolarError::TooFewCorrespondences { got: 0, need: 1 });
    }
    let svd = e.0.svd(true, true);
    let u = svd.u.unwrap();
    let vt = svd.v_t.unwrap();
    let w = Matrix3::new(0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0);
    let mut r_a = u * w * vt;
    let mut r_b = u * w.transpose() * vt;
    if r_a.determinant() < 0.0 {
        r_a = -r_a;
    }
    if r_b.determinant() < 0.0 {
        r_b = -r_b;
    }
    let t = u.column(2).into_owned();
    let candidates = [
        (r_a, t),
        (r_a, -t),
        (r_b, t),
        (r_b, -t),
    ];
    let mut best = 0usize;
    let mut best_count = 0usize;
    for (i, (r, t)) in candidates.iter().enumerate() {
        let rot = Rotation3::from_matrix_unchecked(*r);
        let count = corrs
            .iter()
            .filter(|c| {
                let tri = triangulate::triangulate(&c.r1, &c.r2, &rot, t, 0.0);
                tri.status != TriangulationStatus::IllConditioned
                    && tri.depth1 > 0.0
                    && tri.depth2 > 0.0
            })
            .count();
        if count > best_count {
            best_count = count;
            best = i;
        }
    }
    if best_count * 2 <= corrs.len() {
        return Err(EpipolarError::AmbiguousCheirality {
            best: best_count,
            total: corrs.len(),
        });
    }
    let (r, t) = candidates[best];
    Ok((
        Rotation3::from_matrix_unchecked(r),
        Unit::new_normalize(t),
    ))
}
