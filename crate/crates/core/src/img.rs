//! In-memory image representation and file I/O.
//!
//! Images are row-major, RGB-interleaved `f64` buffers in `[0, 1]`. Files
//! are exchanged as 8-bit PNG/PPM (loading divides by 255) and, for
//! loss-grade precision, as raw little-endian `f32` dumps.

use std::io::{Read, Write};
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ImgError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("could not decode {path}: {msg}")]
    Decode { path: String, msg: String },
    #[error("raw dump {path} holds {got} floats, expected {expected} ({width}x{height}x3)")]
    RawSize {
        path: String,
        got: usize,
        expected: usize,
        width: usize,
        height: usize,
    },
}

fn io_err(path: &Path, source: std::io::Error) -> ImgError {
    ImgError::Io {
        path: path.display().to_string(),
        source,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    /// `(y * width + x) * 3 + channel`.
    pub data: Vec<f64>,
}

impl Image {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![0.0; width * height * 3],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> [f64; 3]) -> Self {
        let mut img = Self::new(width, height);
        for y in 0..height {
            for x in 0..width {
                img.set(x, y, f(x, y));
            }
        }
        img
    }

    pub fn splat_color(width: usize, height: usize, rgb: [f64; 3]) -> Self {
        Self::from_fn(width, height, |_, _| rgb)
    }

    #[inline]
    pub fn idx(&self, x: usize, y: usize) -> usize {
        (y * self.width + x) * 3
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> [f64; 3] {
        let i = self.idx(x, y);
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, rgb: [f64; 3]) {
        let i = self.idx(x, y);
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    pub fn same_size(&self, other: &Image) -> bool {
        self.width == other.width && self.height == other.height
    }

    /// Extracts one channel as a contiguous `y * width + x` plane.
    pub fn channel_plane(&self, ch: usize) -> Vec<f64> {
        debug_assert!(ch < 3);
        self.data.iter().skip(ch).step_by(3).copied().collect()
    }
}

/// Quantizes a unit-interval value to 8 bits, rounding ties to even so the
/// operation is bias-free and platform-independent.
pub fn quantize_u8(v: f64) -> u8 {
    let s = v.clamp(0.0, 1.0) * 255.0;
    let floor = s.floor();
    let frac = s - floor;
    let rounded = if frac > 0.5 {
        floor + 1.0
    } else if frac < 0.5 {
        floor
    } else if (floor as i64) % 2 == 0 {
        floor
    } else {
        floor + 1.0
    };
    rounded as u8
}

pub fn save_png(img: &Image, path: &Path) -> Result<(), ImgError> {
    let mut out = image::RgbImage::new(img.width as u32, img.height as u32);
    for y in 0..img.height {
        for x in 0..img.width {
            let rgb = img.get(x, y);
            out.put_pixel(
                x as u32,
                y as u32,
                image::Rgb([
                    quantize_u8(rgb[0]),
                    quantize_u8(rgb[1]),
                    quantize_u8(rgb[2]),
                ]),
            );
        }
    }
    out.save(path).map_err(|e| ImgError::Decode {
        path: path.display().to_string(),
        msg: e.to_string(),
    })
}

/// Loads an 8-bit PNG or PPM image; values map to `v / 255`.
pub fn load_image(path: &Path) -> Result<Image, ImgError> {
    let decoded = image::ImageReader::open(path)
        .map_err(|e| io_err(path, e))?
        .decode()
        .map_err(|e| ImgError::Decode {
            path: path.display().to_string(),
            msg: e.to_string(),
        })?
        .to_rgb8();
    let (w, h) = (decoded.width() as usize, decoded.height() as usize);
    let mut img = Image::new(w, h);
    for y in 0..h {
        for x in 0..w {
            let p = decoded.get_pixel(x as u32, y as u32);
            img.set(
                x,
                y,
                [
                    p[0] as f64 / 255.0,
                    p[1] as f64 / 255.0,
                    p[2] as f64 / 255.0,
                ],
            );
        }
    }
    Ok(img)
}

/// Writes the raw `f32` dump: little-endian, row-major, RGB interleaved, no
/// header.
pub fn save_f32_raw(img: &Image, path: &Path) -> Result<(), ImgError> {
    let mut buf = Vec::with_capacity(img.data.len() * 4);
    for v in &img.data {
        buf.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    let mut f = std::fs::File::create(path).map_err(|e| io_err(path, e))?;
    f.write_all(&buf).map_err(|e| io_err(path, e))
}

/// Reads a raw `f32` dump written by [`save_f32_raw`]. The dimensions are
/// not stored in the file and must be supplied by the caller.
pub fn load_f32_raw(path: &Path, width: usize, height: usize) -> Result<Image, ImgError> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .map_err(|e| io_err(path, e))?
        .read_to_end(&mut bytes)
        .map_err(|e| io_err(path, e))?;
    let expected = width * height * 3;
    if bytes.len() != expected * 4 {
        return Err(ImgError::RawSize {
            path: path.display().to_string(),
            got: bytes.len() / 4,
            expected,
            width,
            height,
        });
    }
    let data = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    Ok(Image {
        width,
        height,
        data,
    })
}
