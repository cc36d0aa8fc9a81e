//! Frequency-domain embedding: luminance → bilinear resize to 320×320 →
//! orthonormal DCT → `ln(|c| + ε)` → per-image standardization → area
//! pooling onto a 24×32 grid → 768 values, row-major.
//!
//! Every stage is linear except the log and the standardization, so the
//! whole pipeline is expressed as constant matrices on a [`Tape`]. The same
//! graph serves plain evaluation and pixel-space gradients.

use super::dct::{dct_matrix, transpose};
use super::image::{ImageBuffer, LUMA};
use crate::error::{Error, Result};
use crate::numerics::{Tape, Tensor, Unary, Var};

/// Side of the square working resolution.
pub const FREQ_SIDE: usize = 320;
/// Pooled grid (rows, cols); `24 × 32 = 768`.
pub const FREQ_GRID: (usize, usize) = (24, 32);
/// Guard for the log magnitude and the standard deviation.
pub const FREQ_EPS: f64 = 1e-12;

/// Bilinear interpolation weights (half-pixel centres, edge clamp) as an `out × inp` matrix.
pub fn bilinear_matrix(out: usize, inp: usize) -> Tensor {
    let mut data = vec![0.0; out * inp];
    let ratio = inp as f64 / out as f64;
    for o in 0..out {
        let src = ((o as f64 + 0.5) * ratio - 0.5).clamp(0.0, (inp - 1) as f64);
        let i0 = src.floor() as usize;
        let i1 = (i0 + 1).min(inp - 1);
        let t = src - i0 as f64;
        data[o * inp + i0] += 1.0 - t;
        data[o * inp + i1] += t;
    }
    Tensor::matrix(out, inp, data)
}

/// Exact area-average pooling of `inp` cells onto `out` cells as an `out × inp` matrix.
pub fn area_pool_matrix(out: usize, inp: usize) -> Tensor {
    let mut data = vec![0.0; out * inp];
    let span = inp as f64 / out as f64;
    for o in 0..out {
        let (lo, hi) = (o as f64 * span, (o + 1) as f64 * span);
        for i in lo.floor() as usize..(hi.ceil() as usize).min(inp) {
            let overlap = (hi.min(i as f64 + 1.0) - lo.max(i as f64)).max(0.0);
            data[o * inp + i] = overlap / span;
        }
    }
    Tensor::matrix(out, inp, data)
}

/// Constant matrices of the frequency pipeline for one input size.
pub struct FreqPipeline {
    height: usize,
    width: usize,
    resize_rows: Tensor,
    resize_cols_t: Tensor,
    dct: Tensor,
    dct_t: Tensor,
    pool_rows: Tensor,
    pool_cols_t: Tensor,
}

impl FreqPipeline {
    pub fn new(height: usize, width: usize) -> Self {
        let dct = dct_matrix(FREQ_SIDE);
        FreqPipeline {
            height,
            width,
            resize_rows: bilinear_matrix(FREQ_SIDE, height),
            resize_cols_t: transpose(&bilinear_matrix(FREQ_SIDE, width)),
            dct_t: transpose(&dct),
            dct,
            pool_rows: area_pool_matrix(FREQ_GRID.0, FREQ_SIDE),
            pool_cols_t: transpose(&area_pool_matrix(FREQ_GRID.1, FREQ_SIDE)),
        }
    }

    pub fn for_image(img: &ImageBuffer) -> Self {
        Self::new(img.height(), img.width())
    }

    /// Records the pipeline for per-channel `height × width` planes and
    /// returns the `1 × 768` embedding.
    pub fn record<'a>(&'a self, tape: &mut Tape<'a>, planes: &[Var]) -> Result<Var> {
        let gray = match planes {
            [single] => *single,
            [r, g, b] => {
                let r = tape.affine(*r, LUMA[0], 0.0);
                let g = tape.affine(*g, LUMA[1], 0.0);
                let b = tape.affine(*b, LUMA[2], 0.0);
                let rg = tape.add(r, g)?;
                tape.add(rg, b)?
            }
            _ => return Err(Error::contract("frequency pipeline needs 1 or 3 planes")),
        };
        if tape.value(gray).shape() != [self.height, self.width] {
            return Err(Error::contract(format!(
                "pipeline built for {}x{}, got plane {:?}",
                self.height,
                self.width,
                tape.value(gray).shape()
            )));
        }
        let resize_rows = tape.constant_ref(&self.resize_rows);
        let resize_cols_t = tape.constant_ref(&self.resize_cols_t);
        let dct = tape.constant_ref(&self.dct);
        let dct_t = tape.constant_ref(&self.dct_t);
        let pool_rows = tape.constant_ref(&self.pool_rows);
        let pool_cols_t = tape.constant_ref(&self.pool_cols_t);

        let x = tape.matmul(resize_rows, gray)?;
        let x = tape.matmul(x, resize_cols_t)?;
        let x = tape.matmul(dct, x)?;
        let x = tape.matmul(x, dct_t)?;
        let x = tape.unary(x, Unary::LogAbs(FREQ_EPS));
        let x = tape.standardize(x, FREQ_EPS);
        let x = tape.matmul(pool_rows, x)?;
        let x = tape.matmul(x, pool_cols_t)?;
        tape.reshape(x, &[1, FREQ_GRID.0 * FREQ_GRID.1])
    }

    pub fn embed(&self, img: &ImageBuffer) -> Result<Vec<f64>> {
        let mut tape = Tape::new();
        let planes: Vec<Var> = img
            .planes()
            .into_iter()
            .map(|p| tape.constant(Tensor::matrix(img.height(), img.width(), p)))
            .collect();
        let out = self.record(&mut tape, &planes)?;
        Ok(tape.value(out).data().to_vec())
    }
}

/// 768-dim frequency embedding of an image.
pub fn freq_embed(img: &ImageBuffer) -> Result<Vec<f64>> {
    FreqPipeline::for_image(img).embed(img)
}
