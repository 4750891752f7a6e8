//! Synthetic calibration models with known closed-form geometry.
//!
//! The equal-angle (equidistant) fisheye profile `theta(rho) = k * rho` has
//! the exact back-projection `z(rho) = rho * cot(k * rho)`, which expands to
//! a rapidly converging even power series. Building the polynomial from that
//! series gives a model whose ground-truth mapping is known analytically,
//! independent of the generic polynomial evaluation being exercised — which
//! is what makes it usable as a test oracle, and handy for demos.

use crate::calib::{CalibError, FisheyeIntrinsics};

/// Series coefficients `q_n` of `x * cot(x) = sum q_n * x^(2n)`, computed by
/// dividing the power series of `cos x` by `sin(x) / x` in the variable
/// `y = x^2`.
fn x_cot_x_series(terms: usize) -> Vec<f64> {
    let mut cos_c = vec![0.0; terms];
    let mut sinc_c = vec![0.0; terms];
    for (m, (c, s)) in cos_c.iter_mut().zip(sinc_c.iter_mut()).enumerate() {
        // (-1)^m / (2m)!  and  (-1)^m / (2m+1)!
        let mut fact2m = 1.0;
        for k in 1..=(2 * m) {
            fact2m *= k as f64;
        }
        let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
        *c = sign / fact2m;
        *s = sign / (fact2m * (2 * m + 1) as f64);
    }
    let mut q = vec![0.0; terms];
    for n in 0..terms {
        let mut acc = cos_c[n];
        for j in 0..n {
            acc -= q[j] * sinc_c[n - j];
        }
        q[n] = acc; // sinc_c[0] == 1
    }
    q
}

/// Builds an equal-angle fisheye model: polar angle grows linearly with the
/// pixel radius, reaching `half_fov` radians at radius `rho_at_half_fov`.
///
/// The emitted polynomial uses the calibration-file sign convention (negative
/// constant term), so the standard forward-axis flip path is exercised; for a
/// 180 degree model the constant term is exactly `-2 * R / pi`. The series is
/// carried far enough that the polynomial matches the closed form to full
/// double precision over the image diagonal (requires
/// `half_fov * corner_radius / rho_at_half_fov < pi`).
pub fn equiangular_intrinsics(
    half_fov: f64,
    rho_at_half_fov: f64,
    image_size: (u32, u32),
    center: (f64, f64),
) -> Result<FisheyeIntrinsics, CalibError> {
    assert!(
        half_fov > 0.0 && rho_at_half_fov > 0.0,
        "field of view and radius must be positive"
    );
    let k = half_fov / rho_at_half_fov;
    let q = x_cot_x_series(128);
    // z(rho) = (1/k) * sum q_n (k rho)^(2n)  =>  a_{2n} = -q_n k^(2n-1).
    let mut poly = vec![0.0; 2 * q.len() - 1];
    let mut kpow = 1.0 / k;
    for (n, &qn) in q.iter().enumerate() {
        poly[2 * n] = -qn * kpow;
        kpow *= k * k;
    }
    FisheyeIntrinsics::new(poly, vec![], center, (1.0, 0.0, 0.0), image_size)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn series_matches_direct_cotangent_evaluation() {
        let q = x_cot_x_series(128);
        for &x in &[0.3, 1.0, 1.5707, 2.0, 2.6] {
            let mut acc = 0.0;
            let y = x * x;
            for &c in q.iter().rev() {
                acc = acc * y + c;
            }
            let direct = x / x.tan();
            assert!(
                (acc - direct).abs() < 1e-12 * direct.abs().max(1.0),
                "x={x}: series {acc} vs direct {direct}"
            );
        }
    }
}
