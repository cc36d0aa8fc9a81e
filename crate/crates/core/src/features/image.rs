use std::path::Path;

use crate::error::{Error, Result};

/// ITU-R BT.601 luma weights for R, G, B.
pub const LUMA: [f64; 3] = [0.299, 0.587, 0.114];

/// `height × width × channels` image with channel-interleaved pixels in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageBuffer {
    height: usize,
    width: usize,
    channels: usize,
    pixels: Vec<f64>,
}

impl ImageBuffer {
    /// Builds an image, clamping every pixel into `[0, 1]`.
    pub fn new(height: usize, width: usize, channels: usize, mut pixels: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::contract("image dimensions must be positive"));
        }
        if channels != 1 && channels != 3 {
            return Err(Error::contract(format!(
                "images have 1 or 3 channels, got {channels}"
            )));
        }
        if pixels.len() != height * width * channels {
            return Err(Error::contract(format!(
                "{height}x{width}x{channels} image needs {} pixels, got {}",
                height * width * channels,
                pixels.len()
            )));
        }
        for p in &mut pixels {
            *p = if p.is_nan() { 0.0 } else { p.clamp(0.0, 1.0) };
        }
        Ok(ImageBuffer {
            height,
            width,
            channels,
            pixels,
        })
    }

    pub fn from_fn(
        height: usize,
        width: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Result<Self> {
        let mut pixels = Vec::with_capacity(height * width * channels);
        for y in 0..height {
            for x in 0..width {
                for c in 0..channels {
                    pixels.push(f(y, x, c));
                }
            }
        }
        Self::new(height, width, channels, pixels)
    }

    pub fn constant(height: usize, width: usize, channels: usize, value: f64) -> Result<Self> {
        Self::new(height, width, channels, vec![value; height * width * channels])
    }

    /// Reassembles an image from per-channel `height × width` planes.
    pub fn from_planes(height: usize, width: usize, planes: &[Vec<f64>]) -> Result<Self> {
        let channels = planes.len();
        let mut pixels = vec![0.0; height * width * channels];
        for (c, plane) in planes.iter().enumerate() {
            if plane.len() != height * width {
                return Err(Error::contract("plane size does not match image size"));
            }
            for (i, &v) in plane.iter().enumerate() {
                pixels[i * channels + c] = v;
            }
        }
        Self::new(height, width, channels, pixels)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn get(&self, y: usize, x: usize, c: usize) -> f64 {
        self.pixels[(y * self.width + x) * self.channels + c]
    }

    pub fn set(&mut self, y: usize, x: usize, c: usize, value: f64) {
        self.pixels[(y * self.width + x) * self.channels + c] = value.clamp(0.0, 1.0);
    }

    /// Row-major `height × width` copy of channel `c`.
    pub fn plane(&self, c: usize) -> Vec<f64> {
        self.pixels
            .iter()
            .skip(c)
            .step_by(self.channels)
            .copied()
            .collect()
    }

    pub fn planes(&self) -> Vec<Vec<f64>> {
        (0..self.channels).map(|c| self.plane(c)).collect()
    }

    /// Luminance plane; single-channel images are returned as-is.
    pub fn luminance(&self) -> Vec<f64> {
        if self.channels == 1 {
            return self.pixels.clone();
        }
        self.pixels
            .chunks_exact(3)
            .map(|px| LUMA[0] * px[0] + LUMA[1] * px[1] + LUMA[2] * px[2])
            .collect()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> ImageBuffer {
        let pixels = self.pixels.iter().map(|&p| f(p).clamp(0.0, 1.0)).collect();
        ImageBuffer { pixels, ..*self }
    }

    pub fn max_abs_diff(&self, other: &ImageBuffer) -> f64 {
        self.pixels
            .iter()
            .zip(&other.pixels)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

struct Cursor<'b> {
    bytes: &'b [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn err(&self, reason: impl Into<String>) -> Error {
        Error::ImageFormat {
            offset: self.pos,
            reason: reason.into(),
        }
    }

    fn skip_space(&mut self) {
        while self.pos < self.bytes.len() {
            match self.bytes[self.pos] {
                b'#' => {
                    while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                b if b.is_ascii_whitespace() => self.pos += 1,
                _ => break,
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<usize> {
        self.skip_space();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(self.err(format!("expected {what}")));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::ImageFormat {
                offset: start,
                reason: format!("{what} out of range"),
            })
    }
}

/// Decodes binary PPM (`P6`) or PGM (`P5`) bytes with maxval 255.
pub fn decode_pnm(bytes: &[u8]) -> Result<ImageBuffer> {
    let mut cur = Cursor { bytes, pos: 0 };
    let channels = match bytes.get(0..2) {
        Some(b"P6") => 3,
        Some(b"P5") => 1,
        _ => return Err(cur.err("expected magic P6 or P5")),
    };
    cur.pos = 2;
    let width = cur.number("width")?;
    let height = cur.number("height")?;
    let maxval_at = cur.pos;
    let maxval = cur.number("maxval")?;
    if maxval != 255 {
        return Err(Error::ImageFormat {
            offset: maxval_at,
            reason: format!("maxval must be 255, got {maxval}"),
        });
    }
    if width == 0 || height == 0 {
        return Err(cur.err("zero image dimension"));
    }
    match bytes.get(cur.pos) {
        Some(b) if b.is_ascii_whitespace() => cur.pos += 1,
        _ => return Err(cur.err("expected a single whitespace byte before the payload")),
    }
    let need = width * height * channels;
    let payload = &bytes[cur.pos..];
    if payload.len() < need {
        return Err(Error::ImageFormat {
            offset: bytes.len(),
            reason: format!("truncated payload: need {need} bytes, have {}", payload.len()),
        });
    }
    let pixels = payload[..need].iter().map(|&b| f64::from(b) / 255.0).collect();
    ImageBuffer::new(height, width, channels, pixels)
}

/// Encodes as `P6` (3 channels) or `P5` (1 channel), rounding to 8 bits.
pub fn encode_pnm(img: &ImageBuffer) -> Vec<u8> {
    let magic = if img.channels == 3 { "P6" } else { "P5" };
    let mut out = format!("{magic}\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend(img.pixels.iter().map(|&p| (p * 255.0).round().clamp(0.0, 255.0) as u8));
    out
}

pub fn load_ppm(path: impl AsRef<Path>) -> Result<ImageBuffer> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_pnm(&bytes)
}

pub fn save_ppm(img: &ImageBuffer, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_pnm(img)).map_err(|e| Error::io(path, e))
}
