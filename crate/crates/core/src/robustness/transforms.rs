//! Natural image perturbations. All outputs stay inside `[0, 1]`.

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::features::{dct_matrix, ImageBuffer};
use crate::numerics::{matmul, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PerturbKind {
    GaussianNoise,
    GaussianBlur,
    Jpeg,
    Sharpen,
    Barrel,
    Pincushion,
    ColorJitter,
}

impl PerturbKind {
    pub const ALL: [PerturbKind; 7] = [
        PerturbKind::GaussianNoise,
        PerturbKind::GaussianBlur,
        PerturbKind::Jpeg,
        PerturbKind::Sharpen,
        PerturbKind::Barrel,
        PerturbKind::Pincushion,
        PerturbKind::ColorJitter,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PerturbKind::GaussianNoise => "gaussian_noise",
            PerturbKind::GaussianBlur => "gaussian_blur",
            PerturbKind::Jpeg => "jpeg",
            PerturbKind::Sharpen => "sharpen",
            PerturbKind::Barrel => "barrel",
            PerturbKind::Pincushion => "pincushion",
            PerturbKind::ColorJitter => "color_jitter",
        }
    }

    pub fn default_levels(self) -> Vec<f64> {
        match self {
            PerturbKind::GaussianNoise => vec![0.01, 0.0125, 0.025, 0.05, 0.1],
            PerturbKind::GaussianBlur => vec![0.5, 1.0, 2.0, 3.0, 4.0],
            PerturbKind::Jpeg => vec![10.0, 30.0, 50.0, 70.0, 90.0],
            PerturbKind::Sharpen => vec![0.1, 0.5, 1.0, 1.5, 2.0],
            PerturbKind::Barrel => vec![-0.1, -0.2, -0.3, -0.4, -0.5],
            PerturbKind::Pincushion => vec![0.1, 0.2, 0.3, 0.4, 0.5],
            PerturbKind::ColorJitter => vec![0.75, 1.25, 1.5, 2.0],
        }
    }

    /// Level that leaves every image unchanged.
    pub fn identity_level(self) -> f64 {
        match self {
            PerturbKind::GaussianNoise | PerturbKind::GaussianBlur | PerturbKind::Sharpen => 0.0,
            PerturbKind::Barrel | PerturbKind::Pincushion => 0.0,
            PerturbKind::ColorJitter => 1.0,
            // quality 100 still quantizes with a unit table, so no exact identity exists
            PerturbKind::Jpeg => f64::NAN,
        }
    }

    pub fn validate_level(self, level: f64) -> Result<()> {
        let ok = level.is_finite()
            && match self {
                PerturbKind::GaussianNoise | PerturbKind::GaussianBlur | PerturbKind::Sharpen => level >= 0.0,
                PerturbKind::Jpeg => level.fract() == 0.0 && (1.0..=100.0).contains(&level),
                PerturbKind::Barrel => (-1.0..=0.0).contains(&level),
                PerturbKind::Pincushion => (0.0..=1.0).contains(&level),
                PerturbKind::ColorJitter => level > 0.0,
            };
        if ok {
            Ok(())
        } else {
            Err(Error::config(format!("invalid level {level} for {self}")))
        }
    }
}

impl fmt::Display for PerturbKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PerturbKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase().replace('-', "_");
        let kind = match s.as_str() {
            "gaussian_noise" | "noise" => PerturbKind::GaussianNoise,
            "gaussian_blur" | "blur" => PerturbKind::GaussianBlur,
            "jpeg" => PerturbKind::Jpeg,
            "sharpen" => PerturbKind::Sharpen,
            "barrel" => PerturbKind::Barrel,
            "pincushion" => PerturbKind::Pincushion,
            "color_jitter" | "jitter" => PerturbKind::ColorJitter,
            _ => return Err(Error::config(format!("unknown perturbation kind {s:?}"))),
        };
        Ok(kind)
    }
}

/// A perturbation kind and the intensity levels to sweep.
#[derive(Clone, Debug, PartialEq)]
pub struct PerturbGrid {
    pub kind: PerturbKind,
    pub levels: Vec<f64>,
}

impl PerturbGrid {
    pub fn new(kind: PerturbKind, levels: Vec<f64>) -> Result<Self> {
        if levels.is_empty() {
            return Err(Error::config(format!("{kind} grid has no levels")));
        }
        for &l in &levels {
            kind.validate_level(l)?;
        }
        Ok(PerturbGrid { kind, levels })
    }

    pub fn default_for(kind: PerturbKind) -> Self {
        PerturbGrid {
            kind,
            levels: kind.default_levels(),
        }
    }

    /// Default grids for every kind.
    pub fn defaults() -> Vec<PerturbGrid> {
        PerturbKind::ALL.into_iter().map(Self::default_for).collect()
    }
}

/// Applies `kind` at `level`. Only noise reads `seed`.
pub fn perturb(img: &ImageBuffer, kind: PerturbKind, level: f64, seed: u64) -> Result<ImageBuffer> {
    kind.validate_level(level)?;
    Ok(match kind {
        PerturbKind::GaussianNoise => gaussian_noise(img, level, seed),
        PerturbKind::GaussianBlur => gaussian_blur(img, level),
        PerturbKind::Jpeg => jpeg(img, level as u32),
        PerturbKind::Sharpen => sharpen(img, level),
        PerturbKind::Barrel | PerturbKind::Pincushion => radial_distort(img, level),
        PerturbKind::ColorJitter => color_jitter(img, level),
    })
}

pub fn gaussian_noise(img: &ImageBuffer, sigma: f64, seed: u64) -> ImageBuffer {
    if sigma == 0.0 {
        return img.clone();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, sigma).expect("finite sigma");
    let pixels = img.pixels().iter().map(|&p| p + normal.sample(&mut rng)).collect();
    ImageBuffer::new(img.height(), img.width(), img.channels(), pixels).expect("same size")
}

/// Normalized 1-D Gaussian kernel with radius `⌈3σ⌉`.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as isize;
    let w: Vec<f64> = (-radius..=radius)
        .map(|i| (-((i * i) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = w.iter().sum();
    w.into_iter().map(|x| x / total).collect()
}

/// Separable Gaussian blur with edge-replicate padding.
pub fn gaussian_blur(img: &ImageBuffer, sigma: f64) -> ImageBuffer {
    if sigma == 0.0 {
        return img.clone();
    }
    let kernel = gaussian_kernel(sigma);
    let radius = (kernel.len() / 2) as isize;
    let (h, w) = (img.height() as isize, img.width() as isize);
    let planes: Vec<Vec<f64>> = img
        .planes()
        .into_iter()
        .map(|plane| {
            let at = |p: &[f64], y: isize, x: isize| p[(y.clamp(0, h - 1) * w + x.clamp(0, w - 1)) as usize];
            let mut horiz = vec![0.0; plane.len()];
            for y in 0..h {
                for x in 0..w {
                    horiz[(y * w + x) as usize] =
                        kernel.iter().enumerate().map(|(j, k)| k * at(&plane, y, x + j as isize - radius)).sum();
                }
            }
            let mut out = vec![0.0; plane.len()];
            for y in 0..h {
                for x in 0..w {
                    out[(y * w + x) as usize] =
                        kernel.iter().enumerate().map(|(j, k)| k * at(&horiz, y + j as isize - radius, x)).sum();
                }
            }
            out
        })
        .collect();
    ImageBuffer::from_planes(img.height(), img.width(), &planes).expect("same size")
}

/// Unsharp mask `x + f·(x − blur_{σ=1}(x))`.
pub fn sharpen(img: &ImageBuffer, factor: f64) -> ImageBuffer {
    if factor == 0.0 {
        return img.clone();
    }
    let blurred = gaussian_blur(img, 1.0);
    let pixels = img
        .pixels()
        .iter()
        .zip(blurred.pixels())
        .map(|(&x, &b)| x + factor * (x - b))
        .collect();
    ImageBuffer::new(img.height(), img.width(), img.channels(), pixels).expect("same size")
}

/// Contrast `f·(x − 0.5) + 0.5`, clamped, then brightness `f·x`, clamped.
pub fn color_jitter(img: &ImageBuffer, factor: f64) -> ImageBuffer {
    img.map(|x| (factor * (x - 0.5) + 0.5).clamp(0.0, 1.0) * factor)
}

/// Radial sampling map `x_d = c + (x − c)(1 + κr²)` with `r` normalized to 1
/// at the corners; each output pixel samples the input bilinearly at `x_d`
/// with edge clamping. `κ < 0` gives barrel, `κ > 0` pincushion.
pub fn radial_distort(img: &ImageBuffer, kappa: f64) -> ImageBuffer {
    if kappa == 0.0 {
        return img.clone();
    }
    let (h, w, ch) = (img.height(), img.width(), img.channels());
    let (cy, cx) = ((h - 1) as f64 / 2.0, (w - 1) as f64 / 2.0);
    let corner2 = cy * cy + cx * cx;
    if corner2 == 0.0 {
        return img.clone();
    }
    let sample = |y: f64, x: f64, c: usize| {
        let y = y.clamp(0.0, (h - 1) as f64);
        let x = x.clamp(0.0, (w - 1) as f64);
        let (y0, x0) = (y.floor() as usize, x.floor() as usize);
        let (y1, x1) = ((y0 + 1).min(h - 1), (x0 + 1).min(w - 1));
        let (ty, tx) = (y - y0 as f64, x - x0 as f64);
        let top = img.get(y0, x0, c) * (1.0 - tx) + img.get(y0, x1, c) * tx;
        let bottom = img.get(y1, x0, c) * (1.0 - tx) + img.get(y1, x1, c) * tx;
        top * (1.0 - ty) + bottom * ty
    };
    ImageBuffer::from_fn(h, w, ch, |y, x, c| {
        let (dy, dx) = (y as f64 - cy, x as f64 - cx);
        let scale = 1.0 + kappa * (dy * dy + dx * dx) / corner2;
        sample(cy + dy * scale, cx + dx * scale, c)
    })
    .expect("same size")
}

/// Standard JPEG luminance quantization table (quality 50).
pub const JPEG_LUMA_TABLE: [u32; 64] = [
    16, 11, 10, 16, 24, 40, 51, 61, //
    12, 12, 14, 19, 26, 58, 60, 55, //
    14, 13, 16, 24, 40, 57, 69, 56, //
    14, 17, 22, 29, 51, 87, 80, 62, //
    18, 22, 37, 56, 68, 109, 103, 77, //
    24, 35, 55, 64, 81, 104, 113, 92, //
    49, 64, 78, 87, 103, 121, 120, 101, //
    72, 92, 95, 98, 112, 100, 103, 99,
];

/// Luminance table scaled by the libjpeg quality rule.
pub fn jpeg_quant_table(quality: u32) -> [f64; 64] {
    let q = quality.clamp(1, 100);
    let scale = if q < 50 { 5000 / q } else { 200 - 2 * q };
    JPEG_LUMA_TABLE.map(|t| f64::from(((t * scale + 50) / 100).clamp(1, 255)))
}

/// 8×8 block DCT quantization round trip on every channel, in the
/// 0–255 level-shifted domain. Partial edge blocks are edge-padded.
pub fn jpeg(img: &ImageBuffer, quality: u32) -> ImageBuffer {
    let table = jpeg_quant_table(quality);
    let d = dct_matrix(8);
    let dt = Tensor::matrix(8, 8, (0..64).map(|i| d.data()[(i % 8) * 8 + i / 8]).collect());
    let (h, w) = (img.height(), img.width());
    let planes: Vec<Vec<f64>> = img
        .planes()
        .into_iter()
        .map(|plane| {
            let mut out = plane.clone();
            for by in (0..h).step_by(8) {
                for bx in (0..w).step_by(8) {
                    let block: Vec<f64> = (0..64)
                        .map(|i| {
                            let (y, x) = ((by + i / 8).min(h - 1), (bx + i % 8).min(w - 1));
                            plane[y * w + x] * 255.0 - 128.0
                        })
                        .collect();
                    let block = Tensor::matrix(8, 8, block);
                    let coeffs = matmul(&matmul(&d, &block).expect("8x8"), &dt).expect("8x8");
                    let quantized: Vec<f64> =
                        coeffs.data().iter().zip(&table).map(|(c, q)| (c / q).round() * q).collect();
                    let back = matmul(&matmul(&dt, &Tensor::matrix(8, 8, quantized)).expect("8x8"), &d).expect("8x8");
                    for (i, v) in back.data().iter().enumerate() {
                        let (y, x) = (by + i / 8, bx + i % 8);
                        if y < h && x < w {
                            out[y * w + x] = (v + 128.0) / 255.0;
                        }
                    }
                }
            }
            out
        })
        .collect();
    ImageBuffer::from_planes(h, w, &planes).expect("same size")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic::{random_image, textured_image};
    use proptest::prelude::*;

    #[test]
    fn default_grids_match_the_published_levels() {
        let grids = PerturbGrid::defaults();
        assert_eq!(grids.len(), 7);
        assert_eq!(grids[0].levels, vec![0.01, 0.0125, 0.025, 0.05, 0.1]);
        assert_eq!(grids[6].levels, vec![0.75, 1.25, 1.5, 2.0]);
        for g in grids {
            PerturbGrid::new(g.kind, g.levels).unwrap();
        }
    }

    #[test]
    fn invalid_levels_are_config_errors() {
        let img = random_image(4, 4, 1, 0);
        for (kind, level) in [
            (PerturbKind::Jpeg, 0.0),
            (PerturbKind::Jpeg, 50.5),
            (PerturbKind::GaussianBlur, -1.0),
            (PerturbKind::Barrel, 0.2),
            (PerturbKind::Pincushion, -0.2),
            (PerturbKind::ColorJitter, 0.0),
            (PerturbKind::GaussianNoise, f64::NAN),
        ] {
            assert!(matches!(perturb(&img, kind, level, 0), Err(Error::Config(_))), "{kind} {level}");
        }
        assert!("fisheye".parse::<PerturbKind>().is_err());
        assert_eq!("blur".parse::<PerturbKind>().unwrap(), PerturbKind::GaussianBlur);
    }

    #[test]
    fn identity_levels() {
        let img = textured_image(11, 13, 3, 1);
        for kind in PerturbKind::ALL {
            let level = kind.identity_level();
            if level.is_nan() {
                continue;
            }
            assert_eq!(perturb(&img, kind, level, 9).unwrap(), img, "{kind}");
        }
    }

    #[test]
    fn constant_images_survive_blur_and_sharpen() {
        let img = ImageBuffer::constant(12, 9, 3, 0.42).unwrap();
        for sigma in PerturbKind::GaussianBlur.default_levels() {
            assert!(gaussian_blur(&img, sigma).max_abs_diff(&img) < 1e-12);
        }
        for f in PerturbKind::Sharpen.default_levels() {
            assert!(sharpen(&img, f).max_abs_diff(&img) < 1e-12);
        }
    }

    #[test]
    fn kernel_radius_and_mass() {
        for sigma in [0.5, 1.0, 4.0] {
            let k = gaussian_kernel(sigma);
            assert_eq!(k.len(), 2 * (3.0f64 * sigma).ceil() as usize + 1);
            assert!((k.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn quality_scaling_rule() {
        assert_eq!(jpeg_quant_table(50)[0], 16.0);
        // q=10: S=500 → (16·500+50)/100 = 80
        assert_eq!(jpeg_quant_table(10)[0], 80.0);
        // q=90: S=20 → (16·20+50)/100 = 3
        assert_eq!(jpeg_quant_table(90)[0], 3.0);
        assert!(jpeg_quant_table(100).iter().all(|&q| q == 1.0));
        assert!(jpeg_quant_table(1).iter().all(|&q| q <= 255.0));
    }

    /// 8×8 block assembled from integer multiples of the q=50 table.
    fn quantized_block() -> ImageBuffer {
        let table = jpeg_quant_table(50);
        let mut k = [0.0; 64];
        k[0] = 2.0;
        k[1] = -3.0;
        k[8] = 2.0;
        k[9] = 1.0;
        k[17] = -1.0;
        let coeffs: Vec<f64> = k.iter().zip(&table).map(|(k, q)| k * q).collect();
        let d = dct_matrix(8);
        let dt = Tensor::matrix(8, 8, (0..64).map(|i| d.data()[(i % 8) * 8 + i / 8]).collect());
        let pixels = matmul(&matmul(&dt, &Tensor::matrix(8, 8, coeffs)).unwrap(), &d).unwrap();
        let px: Vec<f64> = pixels.data().iter().map(|v| (v + 128.0) / 255.0).collect();
        assert!(px.iter().all(|p| (0.0..=1.0).contains(p)));
        ImageBuffer::new(8, 8, 1, px).unwrap()
    }

    #[test]
    fn jpeg_is_a_fixed_point_on_quantized_blocks() {
        let img = quantized_block();
        let once = jpeg(&img, 50);
        assert!(once.max_abs_diff(&img) < 1e-12);
        let twice = jpeg(&once, 50);
        assert!(twice.max_abs_diff(&once) < 1e-12);
    }

    #[test]
    fn jpeg_is_idempotent_after_first_pass() {
        // mid-gray texture so no clamping interferes
        let img = textured_image(16, 16, 3, 4).map(|p| 0.3 + 0.4 * p);
        let once = jpeg(&img, 30);
        assert!(once.max_abs_diff(&img) > 1e-3);
        assert!(jpeg(&once, 30).max_abs_diff(&once) < 1e-9);
    }

    #[test]
    fn jpeg_handles_partial_blocks() {
        let img = random_image(10, 13, 1, 5);
        let out = jpeg(&img, 70);
        assert_eq!((out.height(), out.width()), (10, 13));
    }

    #[test]
    fn noise_is_seeded() {
        let img = random_image(6, 6, 3, 2);
        let a = gaussian_noise(&img, 0.05, 7);
        assert_eq!(a, gaussian_noise(&img, 0.05, 7));
        assert_ne!(a, gaussian_noise(&img, 0.05, 8));
    }

    #[test]
    fn radial_distortion_fixes_the_centre_and_moves_edges() {
        let img = textured_image(9, 9, 1, 3);
        let out = radial_distort(&img, 0.5);
        assert_eq!(out.get(4, 4, 0), img.get(4, 4, 0));
        // corners sample from outside, so they clamp to the corner pixel
        assert_eq!(out.get(0, 0, 0), img.get(0, 0, 0));
        let barrel = radial_distort(&img, -0.5);
        // corner samples (4 − 4·0.5) = 2
        assert!((barrel.get(0, 0, 0) - img.get(2, 2, 0)).abs() < 1e-12);
    }

    #[test]
    fn jitter_closed_form() {
        let img = ImageBuffer::new(1, 3, 1, vec![0.2, 0.5, 0.9]).unwrap();
        let out = color_jitter(&img, 1.5);
        let expect = [0.05 * 1.5, 0.75, 1.0];
        for (a, b) in out.pixels().iter().zip(expect) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]
        #[test]
        fn outputs_stay_in_unit_range(seed in any::<u64>(), kind_idx in 0usize..7, level_idx in 0usize..4) {
            let kind = PerturbKind::ALL[kind_idx];
            let level = kind.default_levels()[level_idx];
            let img = random_image(11, 10, 3, seed);
            let out = perturb(&img, kind, level, seed).unwrap();
            prop_assert!(out.pixels().iter().all(|p| (0.0..=1.0).contains(p)));
        }
    }
}
