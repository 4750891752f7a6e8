//! Synthetic renderers: paint a textured plane in front of the camera,
//! either through the fisheye model or through one cube face directly.
//! Rendering the same plane both ways gives an end-to-end check of the
//! remap geometry that is independent of the lookup tables.

use crate::calib::{CubemapCamera, FaceId, FacePoint, FisheyeIntrinsics};
use crate::image::GrayImage;

/// A band-limited checkerboard of the given cell size: cell interiors
/// saturate toward 25 and 230 while the edges blend smoothly, so bilinear
/// resampling error stays small.
pub fn smooth_checker(cell: f64) -> impl Fn(f64, f64) -> f64 {
    move |x: f64, y: f64| {
        let s = (std::f64::consts::PI * x / cell).sin() * (std::f64::consts::PI * y / cell).sin();
        127.5 + 102.5 * (s / 0.0785).tanh()
    }
}

fn shade(value: f64) -> u8 {
    value.clamp(0.0, 255.0).round() as u8
}

/// Renders the plane `z = distance` (in body coordinates, texture
/// parametrized by the plane's x/y) through the fisheye model. Pixels whose
/// rays miss the plane or leave the field of view are black.
pub fn render_fisheye_plane(
    intr: &FisheyeIntrinsics,
    distance: f64,
    tex: impl Fn(f64, f64) -> f64,
) -> GrayImage {
    let (w, h) = intr.image_size;
    let mut img = GrayImage::new(w, h).expect("validated image size");
    for v in 0..h {
        for u in 0..w {
            let Ok(b) = intr.cam_to_bearing(f64::from(u), f64::from(v)) else {
                continue;
            };
            if b.z <= 1e-9 {
                continue;
            }
            let t = distance / b.z;
            img.set(u, v, shade(tex(t * b.x, t * b.y)));
        }
    }
    img
}

/// Renders the same plane through a single cube face's virtual pinhole.
pub fn render_face_plane(
    cam: &CubemapCamera,
    face: FaceId,
    distance: f64,
    tex: impl Fn(f64, f64) -> f64,
) -> GrayImage {
    let s = cam.face_size();
    let mut img = GrayImage::new(s, s).expect("validated face size");
    for v in 0..s {
        for u in 0..s {
            let b = cam.unproject(&FacePoint::new(face, f64::from(u), f64::from(v)));
            if b.z <= 1e-9 {
                continue;
            }
            let t = distance / b.z;
            img.set(u, v, shade(tex(t * b.x, t * b.y)));
        }
    }
    img
}
