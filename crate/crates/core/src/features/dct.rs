use std::f64::consts::PI;

use super::image::ImageBuffer;
use crate::error::{Error, Result};
use crate::numerics::{matmul, Tensor};

/// Orthonormal type-II DCT basis: row `k` holds `a_k · cos(π(2j+1)k / 2n)`.
pub fn dct_matrix(n: usize) -> Tensor {
    let mut data = vec![0.0; n * n];
    let nf = n as f64;
    for k in 0..n {
        let scale = if k == 0 { (1.0 / nf).sqrt() } else { (2.0 / nf).sqrt() };
        for j in 0..n {
            data[k * n + j] = scale * (PI * (2 * j + 1) as f64 * k as f64 / (2.0 * nf)).cos();
        }
    }
    Tensor::matrix(n, n, data)
}

pub(crate) fn transpose(t: &Tensor) -> Tensor {
    let (r, c) = t.dims2().expect("matrix");
    let mut out = vec![0.0; r * c];
    for i in 0..r {
        for j in 0..c {
            out[j * r + i] = t.data()[i * c + j];
        }
    }
    Tensor::matrix(c, r, out)
}

/// Separable 2-D DCT of a `h × w` matrix: `D_h · X · D_wᵀ`.
pub fn dct2_matrix(x: &Tensor) -> Result<Tensor> {
    let (h, w) = x.dims2()?;
    let rows = matmul(&dct_matrix(h), x)?;
    matmul(&rows, &transpose(&dct_matrix(w)))
}

/// Inverse of [`dct2_matrix`]: `D_hᵀ · C · D_w`.
pub fn idct2_matrix(c: &Tensor) -> Result<Tensor> {
    let (h, w) = c.dims2()?;
    let rows = matmul(&transpose(&dct_matrix(h)), c)?;
    matmul(&rows, &dct_matrix(w))
}

/// Orthonormal 2-D DCT of a single-channel image.
pub fn dct2(img: &ImageBuffer) -> Result<Tensor> {
    if img.channels() != 1 {
        return Err(Error::contract(format!(
            "dct2 needs a single-channel image, got {} channels",
            img.channels()
        )));
    }
    dct2_matrix(&Tensor::matrix(img.height(), img.width(), img.pixels().to_vec()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Direct O(N⁴) double sum.
    fn naive_dct2(x: &[f64], h: usize, w: usize) -> Vec<f64> {
        let a = |k: usize, n: usize| if k == 0 { (1.0 / n as f64).sqrt() } else { (2.0 / n as f64).sqrt() };
        let mut out = vec![0.0; h * w];
        for u in 0..h {
            for v in 0..w {
                let mut acc = 0.0;
                for y in 0..h {
                    for xx in 0..w {
                        acc += x[y * w + xx]
                            * (PI * (2 * y + 1) as f64 * u as f64 / (2 * h) as f64).cos()
                            * (PI * (2 * xx + 1) as f64 * v as f64 / (2 * w) as f64).cos();
                    }
                }
                out[u * w + v] = a(u, h) * a(v, w) * acc;
            }
        }
        out
    }

    #[test]
    fn matches_direct_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for (h, w) in [(8, 8), (5, 7)] {
            let x: Vec<f64> = (0..h * w).map(|_| rng.random()).collect();
            let fast = dct2_matrix(&Tensor::matrix(h, w, x.clone())).unwrap();
            let slow = naive_dct2(&x, h, w);
            let err = fast.data().iter().zip(&slow).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(err < 1e-10, "{h}x{w}: {err}");
        }
    }

    #[test]
    fn constant_image_is_dc_only() {
        let n = 16;
        let c = 0.37;
        let img = ImageBuffer::constant(n, n, 1, c).unwrap();
        let coeffs = dct2(&img).unwrap();
        assert!((coeffs.data()[0] - c * n as f64).abs() < 1e-12);
        assert!(coeffs.data()[1..].iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn zero_image_has_zero_spectrum() {
        let coeffs = dct2(&ImageBuffer::constant(4, 6, 1, 0.0).unwrap()).unwrap();
        assert!(coeffs.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn rejects_colour_images() {
        let img = ImageBuffer::constant(4, 4, 3, 0.5).unwrap();
        assert!(matches!(dct2(&img), Err(Error::Contract(_))));
    }

    #[test]
    fn inverse_and_energy() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let x = Tensor::matrix(12, 9, (0..108).map(|_| rng.random()).collect());
        let c = dct2_matrix(&x).unwrap();
        let back = idct2_matrix(&c).unwrap();
        assert!(x.max_abs_diff(&back) < 1e-9);
        let ex: f64 = x.data().iter().map(|v| v * v).sum();
        let ec: f64 = c.data().iter().map(|v| v * v).sum();
        assert!((ex - ec).abs() < 1e-9);
    }
}
