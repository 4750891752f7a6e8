//! Joint Levenberg–Marquardt refinement of poses and points (bundle
//! adjustment) at desk scale.
//!
//! The damped normal equations are solved exactly by eliminating the
//! block-diagonal point part first and factoring the reduced dense pose
//! system, which keeps the solve cheap without changing the solution. The
//! gauge must be fixed explicitly: either two fixed poses, or one fixed
//! pose plus a scale anchor that penalizes drift of one camera-to-camera
//! distance from its initial value.

use nalgebra::{DMatrix, DVector, Matrix3, Matrix6, Matrix6x3, Vector3, Vector6};

use super::reproj::{jac_point_from_terms, jac_pose_from_terms, ru_terms};
use super::{huber, CubemapObservation, OptimError, Se3Pose};
use crate::calib::CubemapCamera;

const MAX_POSES: usize = 200;
const MAX_POINTS: usize = 5000;
const MAX_LAMBDA: f64 = 1e8;
/// Stiffness of the scale-anchor penalty row.
const ANCHOR_WEIGHT: f64 = 1e4;

/// Configuration of [`bundle_adjust`].
#[derive(Debug, Clone)]
pub struct BaConfig {
    /// Pose indices held constant. Two poses fix the full gauge; one pose
    /// requires `scale_anchor` as well.
    pub fixed_poses: Vec<usize>,
    /// Free pose whose camera-center distance to the first fixed pose is
    /// penalized toward its initial value (fixes scale when only one pose
    /// is held).
    pub scale_anchor: Option<usize>,
    /// Huber kernel width in sigma-weighted pixels, or `None` for plain
    /// least squares.
    pub huber_delta: Option<f64>,
    pub max_iterations: usize,
    pub lambda_init: f64,
    pub step_tol: f64,
    pub cost_tol: f64,
}

impl Default for BaConfig {
    fn default() -> Self {
        Self {
            fixed_poses: Vec::new(),
            scale_anchor: None,
            huber_delta: None,
            max_iterations: 50,
            lambda_init: 1e-4,
            step_tol: 1e-10,
            cost_tol: 1e-12,
        }
    }
}

/// Result of [`bundle_adjust`].
#[derive(Debug, Clone)]
pub struct BaResult {
    pub poses: Vec<Se3Pose>,
    pub points: Vec<Vector3<f64>>,
    /// Unweighted pixel RMS of the usable reprojection residuals at the
    /// input state.
    pub initial_rms_px: f64,
    /// Same at the returned state.
    pub final_rms_px: f64,
    pub iterations: usize,
    pub accepted_steps: usize,
    pub converged: bool,
    /// Robust cost after each accepted step (non-increasing).
    pub cost_history: Vec<f64>,
}

struct Anchor {
    pose: usize,
    fixed: usize,
    distance: f64,
}

impl Anchor {
    fn residual(&self, poses: &[Se3Pose]) -> f64 {
        let d = (poses[self.pose].center() - poses[self.fixed].center()).norm();
        ANCHOR_WEIGHT * (d - self.distance)
    }
}

/// Robust sigma-weighted cost over the given active mask, or `None` when an
/// active observation is no longer usable at this state.
fn cost_on(
    cam: &CubemapCamera,
    poses: &[Se3Pose],
    points: &[Vector3<f64>],
    obs: &[CubemapObservation],
    active: &[bool],
    huber_delta: Option<f64>,
    anchor: Option<&Anchor>,
) -> Option<f64> {
    let mut cost = 0.0;
    for (o, &on) in obs.iter().zip(active) {
        if !on {
            continue;
        }
        let t = ru_terms(cam, &poses[o.pose_id], &points[o.point_id], &o.fp).ok()?;
        let e = t.residual.norm() / o.sigma_px;
        cost += huber(e, huber_delta).1;
    }
    if let Some(a) = anchor {
        let r = a.residual(poses);
        cost += r * r;
    }
    Some(cost)
}

/// Unweighted pixel RMS over the observations usable at this state.
fn rms_px(
    cam: &CubemapCamera,
    poses: &[Se3Pose],
    points: &[Vector3<f64>],
    obs: &[CubemapObservation],
) -> f64 {
    let mut sum = 0.0;
    let mut n = 0usize;
    for o in obs {
        if let Ok(t) = ru_terms(cam, &poses[o.pose_id], &points[o.point_id], &o.fp) {
            sum += t.residual.norm_squared();
            n += 1;
        }
    }
    if n == 0 {
        f64::NAN
    } else {
        (sum / n as f64).sqrt()
    }
}

/// Linearization of the problem at one state.
struct Blocks {
    active: Vec<bool>,
    u: Vec<Matrix6<f64>>,
    g_p: Vec<Vector6<f64>>,
    v: Vec<Matrix3<f64>>,
    g_x: Vec<Vector3<f64>>,
    /// Per point: (free pose slot, accumulated 6x3 cross block).
    w: Vec<Vec<(usize, Matrix6x3<f64>)>>,
    cost: f64,
    max_gradient: f64,
}

#[allow(clippy::too_many_arguments)]
fn linearize(
    cam: &CubemapCamera,
    poses: &[Se3Pose],
    points: &[Vector3<f64>],
    obs: &[CubemapObservation],
    free_slot: &[Option<usize>],
    n_free: usize,
    huber_delta: Option<f64>,
    anchor: Option<&Anchor>,
) -> Blocks {
    let mut b = Blocks {
        active: vec![false; obs.len()],
        u: vec![Matrix6::zeros(); n_free],
        g_p: vec![Vector6::zeros(); n_free],
        v: vec![Matrix3::zeros(); points.len()],
        g_x: vec![Vector3::zeros(); points.len()],
        w: vec![Vec::new(); points.len()],
        cost: 0.0,
        max_gradient: 0.0,
    };
    for (idx, o) in obs.iter().enumerate() {
        let Ok(t) = ru_terms(cam, &poses[o.pose_id], &points[o.point_id], &o.fp) else {
            continue;
        };
        b.active[idx] = true;
        let e = t.residual.norm() / o.sigma_px;
        let (w_rob, contrib) = huber(e, huber_delta);
        b.cost += contrib;
        let w = w_rob / o.sigma_px;
        let jx = jac_point_from_terms(&t, &poses[o.pose_id]) * w;
        let r = t.residual * w;
        b.v[o.point_id] += jx.transpose() * jx;
        b.g_x[o.point_id] += jx.transpose() * r;
        if let Some(slot) = free_slot[o.pose_id] {
            let jp = jac_pose_from_terms(&t) * w;
            b.u[slot] += jp.transpose() * jp;
            b.g_p[slot] += jp.transpose() * r;
            let cross = jp.transpose() * jx;
            let entry = b.w[o.point_id].iter_mut().find(|(s, _)| *s == slot);
            match entry {
                Some((_, m)) => *m += cross,
                None => b.w[o.point_id].push((slot, cross)),
            }
        }
    }
    if let Some(a) = anchor {
        if let Some(slot) = free_slot[a.pose] {
            let r = a.residual(poses);
            b.cost += r * r;
            let h = 1e-7;
            let mut row = Vector6::zeros();
            let mut scratch = poses.to_vec();
            for k in 0..6 {
                let mut step = Vector6::zeros();
                step[k] = h;
                scratch[a.pose] = poses[a.pose].retract(&step);
                let rp = a.residual(&scratch);
                step[k] = -h;
                scratch[a.pose] = poses[a.pose].retract(&step);
                let rm = a.residual(&scratch);
                row[k] = (rp - rm) / (2.0 * h);
            }
            b.u[slot] += row * row.transpose();
            b.g_p[slot] += row * r;
        }
    }
    let grad_p = b.g_p.iter().map(|g| g.amax()).fold(0.0, f64::max);
    let grad_x = b.g_x.iter().map(|g| g.amax()).fold(0.0, f64::max);
    b.max_gradient = grad_p.max(grad_x);
    b
}

/// Solves the damped normal equations by point elimination. Returns the
/// pose and point updates, or `None` when the reduced system cannot be
/// factored at this damping.
fn solve_damped(b: &Blocks, n_free: usize, lambda: f64) -> Option<(Vec<Vector6<f64>>, Vec<Vector3<f64>>)> {
    let n_points = b.v.len();
    let mut v_inv = Vec::with_capacity(n_points);
    for v in &b.v {
        let mut vd = *v;
        for k in 0..3 {
            vd[(k, k)] += lambda;
        }
        v_inv.push(vd.try_inverse()?);
    }
    let mut delta_p = vec![Vector6::zeros(); n_free];
    if n_free > 0 {
        let mut s = DMatrix::<f64>::zeros(6 * n_free, 6 * n_free);
        let mut rhs = DVector::<f64>::zeros(6 * n_free);
        for j in 0..n_free {
            let mut uj = b.u[j];
            for k in 0..6 {
                uj[(k, k)] += lambda;
            }
            s.fixed_view_mut::<6, 6>(6 * j, 6 * j).copy_from(&uj);
            rhs.fixed_rows_mut::<6>(6 * j).copy_from(&(-b.g_p[j]));
        }
        for (i, blocks) in b.w.iter().enumerate() {
            for &(j, wj) in blocks {
                let y = wj * v_inv[i];
                for &(k, wk) in blocks {
                    let mut view = s.fixed_view_mut::<6, 6>(6 * j, 6 * k);
                    view -= y * wk.transpose();
                }
                let mut rv = rhs.fixed_rows_mut::<6>(6 * j);
                rv += y * b.g_x[i];
            }
        }
        let chol = s.cholesky()?;
        let sol = chol.solve(&rhs);
        for (j, dp) in delta_p.iter_mut().enumerate() {
            *dp = sol.fixed_rows::<6>(6 * j).into_owned();
        }
    }
    let mut delta_x = Vec::with_capacity(n_points);
    for i in 0..n_points {
        let mut rhs = -b.g_x[i];
        for &(j, wj) in &b.w[i] {
            rhs -= wj.transpose() * delta_p[j];
        }
        delta_x.push(v_inv[i] * rhs);
    }
    Some((delta_p, delta_x))
}

/// Jointly refines free poses and all points against the pixel reprojection
/// residuals. See the module docs for the gauge contract; observations with
/// a degenerate face-camera depth at the current state are dropped per
/// iteration, and accepted robust costs are non-increasing.
pub fn bundle_adjust(
    cam: &CubemapCamera,
    poses: &[Se3Pose],
    points: &[Vector3<f64>],
    observations: &[CubemapObservation],
    cfg: &BaConfig,
) -> Result<BaResult, OptimError> {
    if poses.len() > MAX_POSES {
        return Err(OptimError::TooLarge {
            what: "poses",
            got: poses.len(),
            max: MAX_POSES,
        });
    }
    if points.len() > MAX_POINTS {
        return Err(OptimError::TooLarge {
            what: "points",
            got: points.len(),
            max: MAX_POINTS,
        });
    }
    if observations.is_empty() {
        return Err(OptimError::TooFewObservations { got: 0, need: 1 });
    }
    let mut obs_per_point = vec![0usize; points.len()];
    for o in observations {
        if o.pose_id >= poses.len() {
            return Err(OptimError::BadIndex {
                what: "observation pose",
                index: o.pose_id,
                len: poses.len(),
            });
        }
        if o.point_id >= points.len() {
            return Err(OptimError::BadIndex {
                what: "observation point",
                index: o.point_id,
                len: points.len(),
            });
        }
        obs_per_point[o.point_id] += 1;
    }
    if let Some((i, &count)) = obs_per_point.iter().enumerate().find(|(_, &c)| c < 2) {
        return Err(OptimError::PointUnderObserved { point: i, count });
    }

    let mut fixed = cfg.fixed_poses.clone();
    fixed.sort_unstable();
    fixed.dedup();
    for &f in &fixed {
        if f >= poses.len() {
            return Err(OptimError::BadIndex {
                what: "fixed pose",
                index: f,
                len: poses.len(),
            });
        }
    }
    let anchor = match (fixed.len(), cfg.scale_anchor) {
        (0, _) => return Err(OptimError::GaugeUnfixed),
        (1, None) => return Err(OptimError::GaugeUnfixed),
        (_, Some(a)) => {
            if a >= poses.len() {
                return Err(OptimError::BadIndex {
                    what: "scale anchor pose",
                    index: a,
                    len: poses.len(),
                });
            }
            if fixed.contains(&a) {
                return Err(OptimError::GaugeUnfixed);
            }
            let distance = (poses[a].center() - poses[fixed[0]].center()).norm();
            if distance < 1e-9 {
                return Err(OptimError::GaugeUnfixed);
            }
            Some(Anchor {
                pose: a,
                fixed: fixed[0],
                distance,
            })
        }
        (_, None) => None,
    };

    let mut free_slot = vec![None; poses.len()];
    let mut n_free = 0usize;
    for (i, slot) in free_slot.iter_mut().enumerate() {
        if !fixed.contains(&i) {
            *slot = Some(n_free);
            n_free += 1;
        }
    }

    let mut cur_poses = poses.to_vec();
    let mut cur_points = points.to_vec();
    let initial_rms_px = rms_px(cam, &cur_poses, &cur_points, observations);
    let mut lambda = cfg.lambda_init;
    let mut iterations = 0;
    let mut accepted_steps = 0;
    let mut converged = false;
    let mut cost_history = Vec::new();

    'outer: while iterations < cfg.max_iterations && !converged {
        iterations += 1;
        let b = linearize(
            cam,
            &cur_poses,
            &cur_points,
            observations,
            &free_slot,
            n_free,
            cfg.huber_delta,
            anchor.as_ref(),
        );
        let mut cost = b.cost;
        if b.max_gradient < 1e-14 && cost.is_finite() {
            converged = true;
            break;
        }
        loop {
            let Some((delta_p, delta_x)) = solve_damped(&b, n_free, lambda) else {
                lambda *= 10.0;
                if lambda > MAX_LAMBDA {
                    return Err(OptimError::SingularNormalMatrix { lambda });
                }
                continue;
            };
            let step_norm = delta_p
                .iter()
                .map(|d| d.norm_squared())
                .chain(delta_x.iter().map(|d| d.norm_squared()))
                .sum::<f64>()
                .sqrt();
            if step_norm < cfg.step_tol {
                converged = true;
                break 'outer;
            }
            let mut cand_poses = cur_poses.clone();
            for (i, slot) in free_slot.iter().enumerate() {
                if let Some(j) = slot {
                    cand_poses[i] = cur_poses[i].retract(&delta_p[*j]);
                }
            }
            let cand_points: Vec<Vector3<f64>> = cur_points
                .iter()
                .zip(&delta_x)
                .map(|(p, d)| p + d)
                .collect();
            let cand_cost = cost_on(
                cam,
                &cand_poses,
                &cand_points,
                observations,
                &b.active,
                cfg.huber_delta,
                anchor.as_ref(),
            );
            match cand_cost {
                Some(c) if c < cost => {
                    let decrease = cost - c;
                    cur_poses = cand_poses;
                    cur_points = cand_points;
                    cost = c;
                    accepted_steps += 1;
                    cost_history.push(c);
                    lambda = (lambda / 3.0).max(1e-12);
                    if decrease < cfg.cost_tol * (1.0 + cost) {
                        converged = true;
                    }
                    break;
                }
                _ => {
                    lambda *= 10.0;
                    if lambda > MAX_LAMBDA {
                        break 'outer;
                    }
                }
            }
        }
    }

    let final_rms_px = rms_px(cam, &cur_poses, &cur_points, observations);
    Ok(BaResult {
        poses: cur_poses,
        points: cur_points,
        initial_rms_px,
        final_rms_px,
        iterations,
        accepted_steps,
        converged,
        cost_history,
    })
}
