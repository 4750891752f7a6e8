//! Omnidirectional fisheye camera model with a polynomial radial profile.
//!
//! The model follows the common omnidirectional calibration convention: a
//! pixel is mapped through an affine/center correction to sensor coordinates
//! `(x', y')`, and the back-projected ray is `(x', y', f(rho))` with
//! `rho = sqrt(x'^2 + y'^2)` and `f` a polynomial. Calibration files written
//! by that toolchain usually carry a negative leading coefficient, which
//! points the polynomial axis backward; this module standardizes bearings so
//! that the optical axis is always `+z`.

use std::path::Path;

use nalgebra::{Unit, Vector3};
use thiserror::Error;

use super::Bearing;

/// Errors produced by fisheye calibration parsing, validation and mapping.
#[derive(Debug, Error)]
pub enum CalibError {
    #[error("calibration parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("polynomial is empty")]
    EmptyPoly,
    #[error("calibration contains a non-finite value")]
    NonFinite,
    #[error("leading polynomial coefficient is zero; forward axis is undefined")]
    ZeroLeadingCoeff,
    #[error("affine matrix is degenerate (|c - d*e| = {det:.3e})")]
    DegenerateAffine { det: f64 },
    #[error("distortion center ({cx}, {cy}) lies outside the {width}x{height} image")]
    CenterOutsideImage {
        cx: f64,
        cy: f64,
        width: u32,
        height: u32,
    },
    #[error("image size {width}x{height} is too small")]
    ImageTooSmall { width: u32, height: u32 },
    #[error("pixel ({u}, {v}) is outside the image bounds")]
    PixelOutOfBounds { u: f64, v: f64 },
    #[error("bearing at polar angle {theta_deg:.2} deg is outside the calibrated field of view ({fov_deg:.2} deg half-angle)")]
    OutOfFov { theta_deg: f64, fov_deg: f64 },
    #[error("radial inversion did not converge")]
    InversionFailed,
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Intrinsic parameters of a polynomial omnidirectional fisheye camera.
///
/// `center` and all pixel coordinates use image convention `x` = column,
/// `y` = row, both zero-based; the calibration file's row-major center order
/// is swapped on load. Bearings returned by [`FisheyeIntrinsics::cam_to_bearing`]
/// are unit vectors in the body frame (`x` right, `y` down, `z` forward).
#[derive(Debug, Clone)]
pub struct FisheyeIntrinsics {
    /// Forward polynomial coefficients `a_0..a_n` of `f(rho)`.
    pub poly: Vec<f64>,
    /// Optional inverse polynomial (pixel radius as a polynomial in the raw
    /// elevation angle). Empty when the file carries no inverse coefficients;
    /// projection then falls back to Newton inversion of `poly`.
    pub inv_poly: Vec<f64>,
    /// Distortion center `(cx, cy)` in pixels, `x` = column / `y` = row.
    pub center: (f64, f64),
    /// Affine correction `(c, d, e)`; the 2x2 sensor matrix is `[[c, d], [e, 1]]`.
    pub affine: (f64, f64, f64),
    /// Image size `(width, height)` in pixels.
    pub image_size: (u32, u32),
    fov_cache: std::sync::OnceLock<f64>,
}

impl FisheyeIntrinsics {
    /// Builds and validates a model from raw parameters.
    pub fn new(
        poly: Vec<f64>,
        inv_poly: Vec<f64>,
        center: (f64, f64),
        affine: (f64, f64, f64),
        image_size: (u32, u32),
    ) -> Result<Self, CalibError> {
        let intr = Self {
            poly,
            inv_poly,
            center,
            affine,
            image_size,
            fov_cache: std::sync::OnceLock::new(),
        };
        intr.validate()?;
        Ok(intr)
    }

    /// Checks the structural invariants: non-empty finite polynomial with a
    /// non-zero constant term, invertible affine matrix, center strictly
    /// inside the image.
    pub fn validate(&self) -> Result<(), CalibError> {
        if self.poly.is_empty() {
            return Err(CalibError::EmptyPoly);
        }
        let all = self
            .poly
            .iter()
            .chain(self.inv_poly.iter())
            .chain([&self.center.0, &self.center.1])
            .chain([&self.affine.0, &self.affine.1, &self.affine.2]);
        for v in all {
            if !v.is_finite() {
                return Err(CalibError::NonFinite);
            }
        }
        if self.poly[0] == 0.0 {
            return Err(CalibError::ZeroLeadingCoeff);
        }
        let det = self.affine.0 - self.affine.1 * self.affine.2;
        if det.abs() <= 1e-12 {
            return Err(CalibError::DegenerateAffine { det });
        }
        let (w, h) = self.image_size;
        if w < 2 || h < 2 {
            return Err(CalibError::ImageTooSmall {
                width: w,
                height: h,
            });
        }
        let (cx, cy) = self.center;
        if !(cx > 0.0 && cx < f64::from(w - 1) && cy > 0.0 && cy < f64::from(h - 1)) {
            return Err(CalibError::CenterOutsideImage {
                cx,
                cy,
                width: w,
                height: h,
            });
        }
        Ok(())
    }

    /// Sign that maps the raw polynomial axis onto a `+z`-forward bearing:
    /// a negative constant term means the file convention looks along `-z`.
    fn forward_sign(&self) -> f64 {
        if self.poly[0] < 0.0 {
            -1.0
        } else {
            1.0
        }
    }

    /// Evaluates `f(rho)` and its derivative by Horner's rule.
    fn poly_eval(&self, rho: f64) -> (f64, f64) {
        let mut f = 0.0;
        let mut df = 0.0;
        for &a in self.poly.iter().rev() {
            df = df * rho + f;
            f = f * rho + a;
        }
        (f, df)
    }

    /// Radius of the largest centered disc of valid pixels (distance from the
    /// distortion center to the nearest image edge).
    fn inscribed_radius(&self) -> f64 {
        let (w, h) = self.image_size;
        let (cx, cy) = self.center;
        (cx.min(f64::from(w - 1) - cx)).min(cy.min(f64::from(h - 1) - cy))
    }

    /// Half-angle of the calibrated field of view, in radians.
    ///
    /// Scans the polar angle `theta(rho) = atan2(rho, z(rho))` over the
    /// inscribed pixel disc and returns the largest angle reached on the
    /// monotone prefix, so a polynomial that misbehaves near the image border
    /// cannot inflate the usable field of view.
    pub fn max_polar_angle(&self) -> f64 {
        *self.fov_cache.get_or_init(|| {
            let s = self.forward_sign();
            let rho_max = self.inscribed_radius();
            let steps = 2048;
            let mut best: f64 = 0.0;
            let mut prev: f64 = 0.0;
            for i in 1..=steps {
                let rho = rho_max * f64::from(i) / f64::from(steps);
                let (f, _) = self.poly_eval(rho);
                let theta = rho.atan2(s * f);
                if theta < prev {
                    break;
                }
                best = best.max(theta);
                prev = theta;
            }
            best
        })
    }

    /// Lifts a pixel to a unit bearing in the body frame.
    ///
    /// The pixel must lie inside the image bounds. The distortion center maps
    /// exactly onto the forward axis `(0, 0, 1)`.
    pub fn cam_to_bearing(&self, u: f64, v: f64) -> Result<Bearing, CalibError> {
        let (w, h) = self.image_size;
        if !(u.is_finite() && v.is_finite())
            || u < 0.0
            || v < 0.0
            || u > f64::from(w - 1)
            || v > f64::from(h - 1)
        {
            return Err(CalibError::PixelOutOfBounds { u, v });
        }
        let (c, d, e) = self.affine;
        let det = c - d * e;
        let dc = u - self.center.0; // column offset
        let dr = v - self.center.1; // row offset
        let yp = (dr - d * dc) / det;
        let xp = (-e * dr + c * dc) / det;
        let rho = xp.hypot(yp);
        let (f, _) = self.poly_eval(rho);
        let z = self.forward_sign() * f;
        Ok(Unit::new_normalize(Vector3::new(xp, yp, z)))
    }

    /// Projects a unit bearing (body frame, `+z` forward) to real pixel
    /// coordinates.
    ///
    /// Uses the file's inverse polynomial when present, otherwise inverts the
    /// forward polynomial with a bracketed Newton iteration (at most 50
    /// steps, terminating when the radius update drops below 1e-10).
    /// Bearings outside the calibrated field of view are rejected.
    pub fn bearing_to_pixel(&self, b: &Bearing) -> Result<(f64, f64), CalibError> {
        let norm_xy = b.x.hypot(b.y);
        let theta = norm_xy.atan2(b.z);
        let fov = self.max_polar_angle();
        if theta > fov + 1e-12 {
            return Err(CalibError::OutOfFov {
                theta_deg: theta.to_degrees(),
                fov_deg: fov.to_degrees(),
            });
        }
        let rho = if norm_xy < 1e-12 {
            0.0
        } else if !self.inv_poly.is_empty() {
            // File convention: radius as a polynomial in the raw elevation
            // angle atan(z_raw / norm_xy), with z_raw on the file's axis.
            let t = (self.forward_sign() * b.z).atan2(norm_xy);
            let mut r = 0.0;
            for &a in self.inv_poly.iter().rev() {
                r = r * t + a;
            }
            r
        } else {
            self.invert_radial(theta)?
        };
        let (xp, yp) = if norm_xy < 1e-12 {
            (0.0, 0.0)
        } else {
            (rho * b.x / norm_xy, rho * b.y / norm_xy)
        };
        let (c, d, e) = self.affine;
        let u = self.center.0 + e * yp + xp;
        let v = self.center.1 + c * yp + d * xp;
        let (w, h) = self.image_size;
        if u < 0.0 || v < 0.0 || u > f64::from(w - 1) || v > f64::from(h - 1) {
            return Err(CalibError::PixelOutOfBounds { u, v });
        }
        Ok((u, v))
    }

    /// Solves `atan2(rho, z(rho)) = theta` for the pixel radius.
    fn invert_radial(&self, theta: f64) -> Result<f64, CalibError> {
        let s = self.forward_sign();
        let g = |rho: f64| {
            let (f, df) = self.poly_eval(rho);
            let z = s * f;
            let dz = s * df;
            let denom = rho * rho + z * z;
            (rho.atan2(z) - theta, (z - rho * dz) / denom)
        };
        // theta grows monotonically on the valid disc, so the root is
        // bracketed by [0, rho_cap].
        let mut lo = 0.0;
        let mut hi = self.inscribed_radius();
        let (g_hi, _) = g(hi);
        if g_hi < 0.0 {
            // Permit a small overshoot beyond the inscribed disc; the caller
            // still bounds-checks the resulting pixel.
            hi = self.corner_radius();
            let (g_hi2, _) = g(hi);
            if g_hi2 < 0.0 {
                return Err(CalibError::InversionFailed);
            }
        }
        // Small-angle seed: rho ~ |a0| * theta.
        let mut rho = (self.poly[0].abs() * theta).clamp(lo, hi);
        for _ in 0..50 {
            let (val, dval) = g(rho);
            if val < 0.0 {
                lo = rho;
            } else {
                hi = rho;
            }
            let step = if dval.abs() > 1e-14 { -val / dval } else { 0.0 };
            let mut next = rho + step;
            if step == 0.0 || next <= lo || next >= hi {
                next = 0.5 * (lo + hi);
            }
            let delta = (next - rho).abs();
            rho = next;
            if delta < 1e-10 {
                return Ok(rho);
            }
        }
        Err(CalibError::InversionFailed)
    }

    fn corner_radius(&self) -> f64 {
        let (w, h) = self.image_size;
        let (cx, cy) = self.center;
        let dx = cx.max(f64::from(w - 1) - cx);
        let dy = cy.max(f64::from(h - 1) - cy);
        dx.hypot(dy)
    }

    /// Serializes the model back to the calibration text format. The output
    /// reparses to identical fields (shortest round-trip float formatting).
    pub fn to_ocamcalib_string(&self) -> String {
        use std::fmt::Write as _;
        let mut out = String::new();
        out.push_str("#polynomial coefficients for the direct mapping function\n");
        let _ = write!(out, "{}", self.poly.len());
        for a in &self.poly {
            let _ = write!(out, " {a}");
        }
        out.push_str("\n\n#polynomial coefficients for the inverse mapping function\n");
        let _ = write!(out, "{}", self.inv_poly.len());
        for a in &self.inv_poly {
            let _ = write!(out, " {a}");
        }
        out.push_str("\n\n#center: \"row\" and \"column\", starting from 0\n");
        let _ = writeln!(out, "{} {}", self.center.1, self.center.0);
        out.push_str("\n#affine parameters \"c\", \"d\", \"e\"\n");
        let _ = writeln!(out, "{} {} {}", self.affine.0, self.affine.1, self.affine.2);
        out.push_str("\n#image size: \"height\" and \"width\"\n");
        let _ = writeln!(out, "{} {}", self.image_size.1, self.image_size.0);
        out
    }
}

/// One whitespace-separated token with the 1-based line it came from.
struct Tok<'a> {
    line: usize,
    text: &'a str,
}

struct TokStream<'a> {
    toks: Vec<Tok<'a>>,
    pos: usize,
}

impl<'a> TokStream<'a> {
    fn new(text: &'a str) -> Self {
        let mut toks = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("");
            for t in line.split_whitespace() {
                toks.push(Tok {
                    line: i + 1,
                    text: t,
                });
            }
        }
        Self { toks, pos: 0 }
    }

    fn last_line(&self) -> usize {
        self.toks.last().map_or(1, |t| t.line)
    }

    fn next_f64(&mut self, what: &str) -> Result<f64, CalibError> {
        let tok = self.toks.get(self.pos).ok_or_else(|| CalibError::Parse {
            line: self.last_line(),
            msg: format!("unexpected end of file, expected {what}"),
        })?;
        self.pos += 1;
        tok.text.parse::<f64>().map_err(|_| CalibError::Parse {
            line: tok.line,
            msg: format!("expected {what}, found `{}`", tok.text),
        })
    }

    fn next_count(&mut self, what: &str) -> Result<usize, CalibError> {
        let line = self.toks.get(self.pos).map_or(self.last_line(), |t| t.line);
        let v = self.next_f64(what)?;
        if v.fract() != 0.0 || !(0.0..=1e6).contains(&v) {
            return Err(CalibError::Parse {
                line,
                msg: format!("invalid {what}: {v}"),
            });
        }
        Ok(v as usize)
    }

    fn next_u32(&mut self, what: &str) -> Result<u32, CalibError> {
        let line = self.toks.get(self.pos).map_or(self.last_line(), |t| t.line);
        let v = self.next_f64(what)?;
        if v.fract() != 0.0 || !(0.0..=f64::from(u32::MAX)).contains(&v) {
            return Err(CalibError::Parse {
                line,
                msg: format!("invalid {what}: {v}"),
            });
        }
        Ok(v as u32)
    }
}

/// Parses a calibration text file of the omnidirectional toolbox layout:
/// forward coefficient count and coefficients, inverse coefficient count and
/// coefficients (zero allowed), center as `row column`, affine `c d e`, image
/// size as `height width`. `#` starts a comment; whitespace is free-form.
pub fn load_ocamcalib(text: &str) -> Result<FisheyeIntrinsics, CalibError> {
    let mut ts = TokStream::new(text);
    let n = ts.next_count("forward coefficient count")?;
    let mut poly = Vec::with_capacity(n);
    for _ in 0..n {
        poly.push(ts.next_f64("forward coefficient")?);
    }
    let m = ts.next_count("inverse coefficient count")?;
    let mut inv_poly = Vec::with_capacity(m);
    for _ in 0..m {
        inv_poly.push(ts.next_f64("inverse coefficient")?);
    }
    let cy = ts.next_f64("center row")?;
    let cx = ts.next_f64("center column")?;
    let c = ts.next_f64("affine c")?;
    let d = ts.next_f64("affine d")?;
    let e = ts.next_f64("affine e")?;
    let h = ts.next_u32("image height")?;
    let w = ts.next_u32("image width")?;
    if ts.pos != ts.toks.len() {
        let tok = &ts.toks[ts.pos];
        return Err(CalibError::Parse {
            line: tok.line,
            msg: format!("trailing data `{}`", tok.text),
        });
    }
    FisheyeIntrinsics::new(poly, inv_poly, (cx, cy), (c, d, e), (w, h))
}

/// Reads and parses a calibration file from disk.
pub fn load_ocamcalib_file(path: &Path) -> Result<FisheyeIntrinsics, CalibError> {
    let text = std::fs::read_to_string(path)?;
    load_ocamcalib(&text)
}
