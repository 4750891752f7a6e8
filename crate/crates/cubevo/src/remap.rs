//! Fisheye-to-cubemap resampling: precomputed lookup tables, image
//! remapping and a cross-layout composite for inspection.

use thiserror::Error;

use crate::calib::{CalibError, CubemapCamera, FaceId, FacePoint, FisheyeIntrinsics};
use crate::image::{GrayImage, ImageError};

#[derive(Debug, Error)]
pub enum RemapError {
    #[error("remap table face size {table} does not match camera face size {camera}")]
    SizeMismatch { table: u32, camera: u32 },
    #[error("source image is {got_w}x{got_h} but the calibration expects {want_w}x{want_h}")]
    SourceSizeMismatch {
        got_w: u32,
        got_h: u32,
        want_w: u32,
        want_h: u32,
    },
    #[error("face {0:?} is not present in the remap table")]
    MissingFace(FaceId),
    #[error(transparent)]
    Calib(#[from] CalibError),
    #[error(transparent)]
    Image(#[from] ImageError),
}

/// Source-pixel lookup grid for one cube face. `None` marks destinations
/// whose bearing falls outside the fisheye field of view or image.
#[derive(Debug, Clone)]
pub struct FaceTable {
    pub face: FaceId,
    size: u32,
    entries: Vec<Option<(f64, f64)>>,
}

impl FaceTable {
    #[inline]
    pub fn entry(&self, u: u32, v: u32) -> Option<(f64, f64)> {
        self.entries[v as usize * self.size as usize + u as usize]
    }

    pub fn size(&self) -> u32 {
        self.size
    }
}

/// Per-face source coordinate tables for a fisheye-to-cubemap resampling.
#[derive(Debug, Clone)]
pub struct RemapTable {
    face_size: u32,
    faces: Vec<FaceTable>,
}

impl RemapTable {
    pub fn face_size(&self) -> u32 {
        self.face_size
    }

    pub fn faces(&self) -> &[FaceTable] {
        &self.faces
    }

    pub fn face(&self, id: FaceId) -> Option<&FaceTable> {
        self.faces.iter().find(|t| t.face == id)
    }
}

/// Builds the per-face source lookup tables: every destination face pixel is
/// lifted to a bearing and mapped through the fisheye model; failures (out of
/// field of view, outside the source image) become sentinel entries.
pub fn build_remap_table(
    intr: &FisheyeIntrinsics,
    cam: &CubemapCamera,
) -> Result<RemapTable, CalibError> {
    intr.validate()?;
    let s = cam.face_size();
    let mut faces = Vec::with_capacity(cam.active_faces().len());
    for &face in cam.active_faces() {
        let mut entries = Vec::with_capacity((s as usize) * (s as usize));
        for v in 0..s {
            for u in 0..s {
                let fp = FacePoint::new(face, f64::from(u), f64::from(v));
                let b = cam.unproject(&fp);
                entries.push(intr.bearing_to_pixel(&b).ok());
            }
        }
        faces.push(FaceTable {
            face,
            size: s,
            entries,
        });
    }
    Ok(RemapTable {
        face_size: s,
        faces,
    })
}

/// Resamples a fisheye image onto the cube faces using bilinear
/// interpolation; sentinel entries produce black pixels.
pub fn remap_image(
    table: &RemapTable,
    intr: &FisheyeIntrinsics,
    src: &GrayImage,
) -> Result<Vec<(FaceId, GrayImage)>, RemapError> {
    let (w, h) = intr.image_size;
    if src.width() != w || src.height() != h {
        return Err(RemapError::SourceSizeMismatch {
            got_w: src.width(),
            got_h: src.height(),
            want_w: w,
            want_h: h,
        });
    }
    let s = table.face_size();
    let mut out = Vec::with_capacity(table.faces().len());
    for ft in table.faces() {
        let mut img = GrayImage::new(s, s)?;
        for v in 0..s {
            for u in 0..s {
                if let Some((x, y)) = ft.entry(u, v) {
                    let val = src.sample_bilinear(x, y).round().clamp(0.0, 255.0) as u8;
                    img.set(u, v, val);
                }
            }
        }
        out.push((ft.face, img));
    }
    Ok(out)
}

/// Lays out remapped faces as an unfolded cross: up above front, the
/// left/front/right row in the middle, down below front, and back (when
/// present) to the right of right. Missing faces stay black.
pub fn compose_cross(faces: &[(FaceId, GrayImage)], face_size: u32) -> Result<GrayImage, RemapError> {
    let s = face_size;
    let has_back = faces.iter().any(|(f, _)| *f == FaceId::Back);
    let cols = if has_back { 4 } else { 3 };
    let mut canvas = GrayImage::new(cols * s, 3 * s)?;
    let slot = |f: FaceId| -> (u32, u32) {
        match f {
            FaceId::Up => (s, 0),
            FaceId::Left => (0, s),
            FaceId::Front => (s, s),
            FaceId::Right => (2 * s, s),
            FaceId::Back => (3 * s, s),
            FaceId::Down => (s, 2 * s),
        }
    };
    for (f, img) in faces {
        if img.width() != s || img.height() != s {
            return Err(RemapError::SizeMismatch {
                table: img.width(),
                camera: s,
            });
        }
        let (ox, oy) = slot(*f);
        for v in 0..s {
            for u in 0..s {
                canvas.set(ox + u, oy + v, img.get(u, v));
            }
        }
    }
    Ok(canvas)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::equiangular_intrinsics;

    fn intr_190() -> FisheyeIntrinsics {
        equiangular_intrinsics(95f64.to_radians(), 349.5, (700, 700), (349.5, 349.5)).unwrap()
    }

    #[test]
    fn front_center_maps_to_distortion_center() {
        let intr = intr_190();
        let cam = CubemapCamera::with_default_faces(650).unwrap();
        let table = build_remap_table(&intr, &cam).unwrap();
        let front = table.face(FaceId::Front).unwrap();
        // The face principal point is (324.5, 324.5); probe its four integer
        // neighbors and require sub-pixel proximity to the center.
        for (u, v) in [(324u32, 324u32), (325, 324), (324, 325), (325, 325)] {
            let (x, y) = front.entry(u, v).unwrap();
            assert!(
                (x - 349.5).abs() < 1.0 && (y - 349.5).abs() < 1.0,
                "({u},{v}) -> ({x},{y})"
            );
        }
    }

    #[test]
    fn table_agrees_with_direct_mapping() {
        // Double-computation oracle: entries must equal an independently
        // composed unproject + bearing_to_pixel evaluation.
        let intr = intr_190();
        let cam = CubemapCamera::with_default_faces(128).unwrap();
        let table = build_remap_table(&intr, &cam).unwrap();
        for ft in table.faces() {
            for v in (0..128).step_by(17) {
                for u in (0..128).step_by(13) {
                    let fp = FacePoint::new(ft.face, f64::from(u), f64::from(v));
                    let b = cam.unproject(&fp);
                    match (ft.entry(u, v), intr.bearing_to_pixel(&b).ok()) {
                        (Some((x1, y1)), Some((x2, y2))) => {
                            assert!((x1 - x2).abs() < 1e-4 && (y1 - y2).abs() < 1e-4);
                        }
                        (None, None) => {}
                        (a, b) => panic!("entry mismatch at {u},{v}: {a:?} vs {b:?}"),
                    }
                }
            }
        }
    }

    #[test]
    fn left_face_outer_edge_is_outside_a_190_degree_fov() {
        let intr = intr_190();
        let cam = CubemapCamera::with_default_faces(650).unwrap();
        let table = build_remap_table(&intr, &cam).unwrap();
        let left = table.face(FaceId::Left).unwrap();
        // Column 0 of the left face looks backward: polar angle 135 deg at
        // the horizontal midline, beyond the 95 deg half field of view.
        for v in (0..650).step_by(50) {
            assert!(left.entry(0, v).is_none(), "row {v}");
        }
        // The inner edge (adjacent to front, 45 deg) is well inside.
        assert!(left.entry(649, 325).is_some());
    }

    #[test]
    fn remap_produces_faces_and_cross_composite() {
        let intr = equiangular_intrinsics(95f64.to_radians(), 99.5, (200, 200), (99.5, 99.5))
            .unwrap();
        let cam = CubemapCamera::with_default_faces(64).unwrap();
        let table = build_remap_table(&intr, &cam).unwrap();
        let mut src = GrayImage::new(200, 200).unwrap();
        for y in 0..200 {
            for x in 0..200 {
                src.set(x, y, ((x + y) % 251) as u8);
            }
        }
        let faces = remap_image(&table, &intr, &src).unwrap();
        assert_eq!(faces.len(), 5);
        let cross = compose_cross(&faces, 64).unwrap();
        assert_eq!((cross.width(), cross.height()), (192, 192));
        // The front slot carries the front face verbatim.
        let front = &faces.iter().find(|(f, _)| *f == FaceId::Front).unwrap().1;
        assert_eq!(cross.get(64 + 30, 64 + 40), front.get(30, 40));
        let wrong = GrayImage::new(100, 100).unwrap();
        assert!(matches!(
            remap_image(&table, &intr, &wrong),
            Err(RemapError::SourceSizeMismatch { .. })
        ));
    }
}
