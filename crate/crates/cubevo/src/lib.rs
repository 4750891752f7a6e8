//! Fisheye-to-cubemap camera geometry and a synthetic monocular visual
//! odometry pipeline built on it.
//!
//! The toolkit models a fisheye camera as a bundle of virtual pinhole
//! cameras on cube faces, and provides the geometry stack that makes that
//! representation useful end to end:
//!
//! - [`calib`]: polynomial omnidirectional fisheye intrinsics and the
//!   multi-pinhole cubemap camera (face selection, projection, lifting).
//! - [`image`]: minimal 8-bit grayscale image container with PGM I/O.
//! - [`remap`]: fisheye-to-cubemap resampling tables and image remapping.
//! - [`epipolar`]: essential-matrix estimation on bearing vectors with an
//!   adaptive per-point spherical inlier threshold, RANSAC and relative-pose
//!   decomposition.
//! - [`triangulate`]: midpoint triangulation of bearing rays.
//! - [`optim`]: multi-pinhole reprojection residuals with analytic
//!   Jacobians, pose-only refinement and dense bundle adjustment.
//! - [`sim`]: deterministic synthetic scene generation and a batch visual
//!   odometry driver for end-to-end evaluation.
//! - [`eval`]: trajectory alignment (7-DoF), absolute trajectory error and
//!   plain-text trajectory I/O.
//! - [`synth`]: synthetic calibration models with closed-form geometry.

pub mod calib;
pub mod epipolar;
pub mod eval;
pub mod image;
pub mod optim;
pub mod remap;
pub mod sim;
pub mod synth;
pub mod triangulate;

pub use calib::{
    load_ocamcalib, load_ocamcalib_file, Bearing, CalibError, CubemapCamera, FaceId, FacePoint,
    FisheyeIntrinsics,
};
pub use image::GrayImage;
