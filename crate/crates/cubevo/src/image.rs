//! 8-bit grayscale images with binary PGM (P5) reading and writing.

use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ImageError {
    #[error("pgm parse error: {0}")]
    Parse(String),
    #[error("image dimensions {width}x{height} are invalid or unsupported")]
    BadDimensions { width: u32, height: u32 },
    #[error("pixel buffer has {got} bytes, expected {expected}")]
    BufferSize { got: usize, expected: usize },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Row-major 8-bit grayscale image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    width: u32,
    height: u32,
    data: Vec<u8>,
}

/// Cap on each dimension, primarily to bound allocations when decoding
/// untrusted files.
const MAX_DIM: u32 = 1 << 15;

impl GrayImage {
    pub fn new(width: u32, height: u32) -> Result<Self, ImageError> {
        Self::from_raw(width, height, vec![0; (width as usize) * (height as usize)])
    }

    pub fn from_raw(width: u32, height: u32, data: Vec<u8>) -> Result<Self, ImageError> {
        if width == 0 || height == 0 || width > MAX_DIM || height > MAX_DIM {
            return Err(ImageError::BadDimensions { width, height });
        }
        let expected = (width as usize) * (height as usize);
        if data.len() != expected {
            return Err(ImageError::BufferSize {
                got: data.len(),
                expected,
            });
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> u8 {
        self.data[y as usize * self.width as usize + x as usize]
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, value: u8) {
        self.data[y as usize * self.width as usize + x as usize] = value;
    }

    /// Bilinear sample at a real pixel position, clamping to the border.
    pub fn sample_bilinear(&self, x: f64, y: f64) -> f64 {
        let xm = f64::from(self.width - 1);
        let ym = f64::from(self.height - 1);
        let x = x.clamp(0.0, xm);
        let y = y.clamp(0.0, ym);
        let x0 = x.floor().min(xm - 1.0).max(0.0);
        let y0 = y.floor().min(ym - 1.0).max(0.0);
        let fx = x - x0;
        let fy = y - y0;
        let (x0, y0) = (x0 as u32, y0 as u32);
        let (x1, y1) = (
            (x0 + 1).min(self.width - 1),
            (y0 + 1).min(self.height - 1),
        );
        let v00 = f64::from(self.get(x0, y0));
        let v10 = f64::from(self.get(x1, y0));
        let v01 = f64::from(self.get(x0, y1));
        let v11 = f64::from(self.get(x1, y1));
        v00 * (1.0 - fx) * (1.0 - fy)
            + v10 * fx * (1.0 - fy)
            + v01 * (1.0 - fx) * fy
            + v11 * fx * fy
    }

    /// Decodes a binary PGM (magic `P5`, maxval 255). Header comments with
    /// `#` are accepted anywhere in the header, per the format.
    pub fn decode_pgm(bytes: &[u8]) -> Result<Self, ImageError> {
        fn skip_ws_and_comments(bytes: &[u8], pos: &mut usize) {
            loop {
                while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
                    *pos += 1;
                }
                if *pos < bytes.len() && bytes[*pos] == b'#' {
                    while *pos < bytes.len() && bytes[*pos] != b'\n' {
                        *pos += 1;
                    }
                } else {
                    return;
                }
            }
        }

        fn read_number(bytes: &[u8], pos: &mut usize, what: &str) -> Result<u32, ImageError> {
            skip_ws_and_comments(bytes, pos);
            let start = *pos;
            while *pos < bytes.len() && bytes[*pos].is_ascii_digit() {
                *pos += 1;
            }
            if *pos == start || *pos - start > 9 {
                return Err(ImageError::Parse(format!(
                    "expected {what} at byte {start}"
                )));
            }
            let text = std::str::from_utf8(&bytes[start..*pos]).unwrap();
            Ok(text.parse::<u32>().unwrap())
        }

        if bytes.len() < 2 || &bytes[0..2] != b"P5" {
            return Err(ImageError::Parse("missing P5 magic".into()));
        }
        let mut pos = 2usize;
        let width = read_number(bytes, &mut pos, "width")?;
        let height = read_number(bytes, &mut pos, "height")?;
        let maxval = read_number(bytes, &mut pos, "maxval")?;
        if maxval != 255 {
            return Err(ImageError::Parse(format!(
                "unsupported maxval {maxval}, only 255 is handled"
            )));
        }
        // Exactly one whitespace byte separates the header from the raster.
        if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
            return Err(ImageError::Parse("missing raster separator".into()));
        }
        pos += 1;
        if width == 0 || height == 0 || width > MAX_DIM || height > MAX_DIM {
            return Err(ImageError::BadDimensions { width, height });
        }
        let expected = (width as usize) * (height as usize);
        let raster = &bytes[pos..];
        if raster.len() < expected {
            return Err(ImageError::Parse(format!(
                "raster has {} bytes, expected {expected}",
                raster.len()
            )));
        }
        Self::from_raw(width, height, raster[..expected].to_vec())
    }

    /// Encodes as binary PGM with maxval 255.
    pub fn encode_pgm(&self) -> Vec<u8> {
        let header = format!("P5\n{} {}\n255\n", self.width, self.height);
        let mut out = Vec::with_capacity(header.len() + self.data.len());
        out.extend_from_slice(header.as_bytes());
        out.extend_from_slice(&self.data);
        out
    }

    pub fn load_pgm(path: &Path) -> Result<Self, ImageError> {
        Self::decode_pgm(&std::fs::read(path)?)
    }

    pub fn save_pgm(&self, path: &Path) -> Result<(), ImageError> {
        std::fs::write(path, self.encode_pgm())?;
        Ok(())
    }
}
