//! Frequency-path saliency: `p = max_k ‖v_k‖`, `G = |∂p/∂X|` through the
//! native frequency pipeline (visual and text inputs held fixed), and
//! `S = mean_c G`.

use std::path::Path;

use crate::capsnet::{CapsModel, ModalityInputs};
use crate::error::{Error, Result};
use crate::features::{FreqPipeline, ImageBuffer, Label};
use crate::numerics::{Tape, Tensor};
use crate::robustness::{image_forward, interleave_planes};

#[derive(Clone, Debug, PartialEq)]
pub struct SaliencyMap {
    pub height: usize,
    pub width: usize,
    /// Raw channel-mean gradient magnitudes, row-major.
    pub values: Vec<f64>,
    pub image_id: String,
    pub label: Label,
    pub confidence: f64,
    /// Set when every gradient was exactly zero.
    pub all_zero: bool,
}

impl SaliencyMap {
    pub fn get(&self, y: usize, x: usize) -> f64 {
        self.values[y * self.width + x]
    }

    /// Pixel with the largest saliency (first on ties).
    pub fn argmax(&self) -> (usize, usize) {
        let mut best = 0;
        for (i, &v) in self.values.iter().enumerate() {
            if v > self.values[best] {
                best = i;
            }
        }
        (best / self.width, best % self.width)
    }

    /// Min-max scaled copy in `[0, 1]`; constant maps scale to zero.
    pub fn normalized(&self) -> Vec<f64> {
        let lo = self.values.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if hi <= lo {
            return vec![0.0; self.values.len()];
        }
        self.values.iter().map(|v| (v - lo) / (hi - lo)).collect()
    }

    /// Normalized map as a grayscale image.
    pub fn to_image(&self) -> ImageBuffer {
        ImageBuffer::new(self.height, self.width, 1, self.normalized()).expect("valid size")
    }

    /// `u32 height | u32 width | height·width f32`, little-endian, unnormalized.
    pub fn raw_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(8 + 4 * self.values.len());
        out.extend_from_slice(&(self.height as u32).to_le_bytes());
        out.extend_from_slice(&(self.width as u32).to_le_bytes());
        for &v in &self.values {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
        out
    }

    pub fn save_pgm(&self, path: impl AsRef<Path>) -> Result<()> {
        crate::features::save_ppm(&self.to_image(), path)
    }

    pub fn save_raw(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.raw_bytes()).map_err(|e| Error::io(path, e))
    }
}

/// Decodes [`SaliencyMap::raw_bytes`] into `(height, width, values)`.
pub fn parse_raw_saliency(bytes: &[u8]) -> Result<(usize, usize, Vec<f32>)> {
    let word = |i: usize| -> Result<usize> {
        let b = bytes.get(i..i + 4).ok_or_else(|| Error::format(None, "truncated saliency header"))?;
        Ok(u32::from_le_bytes(b.try_into().expect("4 bytes")) as usize)
    };
    let (h, w) = (word(0)?, word(4)?);
    if bytes.len() != 8 + 4 * h * w {
        return Err(Error::format(None, "saliency payload length does not match its header"));
    }
    let values = bytes[8..].chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes"))).collect();
    Ok((h, w, values))
}

/// Confidence `p` and its pixel gradient for `img`, with visual and text from `context`.
pub fn confidence_and_gradient(
    model: &CapsModel,
    pipeline: &FreqPipeline,
    img: &ImageBuffer,
    context: &ModalityInputs,
) -> Result<(f64, Vec<f64>, Tensor)> {
    let mut tape = Tape::new();
    let shape = (img.height(), img.width(), img.channels());
    let (planes, v) = image_forward(&mut tape, model, pipeline, context, shape, img.pixels())?;
    let norms = tape.row_norms(v)?;
    let p = tape.max_elem(norms);
    let grads = tape.backward(p)?;
    let g: Vec<&Tensor> = planes.iter().map(|&pl| grads.wrt(pl).expect("trainable plane")).collect();
    Ok((tape.value(p).item(), interleave_planes(&g), tape.value(v).clone()))
}

/// Confidence `p` only.
pub fn confidence(model: &CapsModel, pipeline: &FreqPipeline, img: &ImageBuffer, context: &ModalityInputs) -> Result<f64> {
    let mut inputs = context.clone();
    inputs.vectors[2] = pipeline.embed(img)?;
    let inference = model.infer(&inputs)?;
    Ok(inference.classify()?.1)
}

pub fn saliency(model: &CapsModel, img: &ImageBuffer, context: &ModalityInputs, image_id: &str) -> Result<SaliencyMap> {
    let pipeline = FreqPipeline::for_image(img);
    saliency_with(model, &pipeline, img, context, image_id)
}

/// [`saliency`] with a prebuilt pipeline for the image size.
pub fn saliency_with(
    model: &CapsModel,
    pipeline: &FreqPipeline,
    img: &ImageBuffer,
    context: &ModalityInputs,
    image_id: &str,
) -> Result<SaliencyMap> {
    let (p, g, v) = confidence_and_gradient(model, pipeline, img, context)?;
    let (label, _) = crate::capsnet::classify(&v)?;
    let c = img.channels();
    let values: Vec<f64> = g.chunks_exact(c).map(|px| px.iter().map(|x| x.abs()).sum::<f64>() / c as f64).collect();
    let all_zero = values.iter().all(|&v| v == 0.0);
    Ok(SaliencyMap {
        height: img.height(),
        width: img.width(),
        values,
        image_id: image_id.to_string(),
        label,
        confidence: p,
        all_zero,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::capsnet::{Modality, ModalityMask, ModelConfig};
    use crate::synthetic::textured_image;

    fn model(mask: ModalityMask) -> CapsModel {
        let cfg = ModelConfig {
            capsules_per_modality: 2,
            capsule_dim: 2,
            class_dim: 3,
            modality_mask: mask,
            ..Default::default()
        };
        CapsModel::init(cfg, 21).unwrap()
    }

    fn context() -> ModalityInputs {
        ModalityInputs::new(vec![0.02; 768], vec![-0.01; 768], vec![0.0; 768])
    }

    #[test]
    fn model_blind_to_pixels_gives_zero_map() {
        let m = model(ModalityMask::ALL.without(Modality::Frequency));
        let s = saliency(&m, &textured_image(10, 10, 3, 1), &context(), "a").unwrap();
        assert!(s.all_zero);
        assert!(s.values.iter().all(|&v| v == 0.0));
        assert!(s.normalized().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn grayscale_map_is_absolute_gradient() {
        let m = model(ModalityMask::ALL);
        let img = textured_image(9, 11, 1, 2);
        let pipeline = FreqPipeline::for_image(&img);
        let (p, g, _) = confidence_and_gradient(&m, &pipeline, &img, &context()).unwrap();
        let s = saliency(&m, &img, &context(), "g").unwrap();
        assert_eq!(s.values, g.iter().map(|x| x.abs()).collect::<Vec<_>>());
        assert_eq!(s.confidence, p);
        assert!(!s.all_zero);
        assert!(s.values.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn gradient_matches_finite_differences() {
        // At the working resolution no resize happens; upsampled inputs leave
        // DCT coefficients at rounding level where the log is too curved for
        // small-step differences.
        let m = model(ModalityMask::ALL);
        let img = textured_image(320, 320, 1, 3);
        let pipeline = FreqPipeline::for_image(&img);
        let (_, g, _) = confidence_and_gradient(&m, &pipeline, &img, &context()).unwrap();
        let h = 1e-6;
        for idx in [0, 1000, 3000, 70_001] {
            let mut plus = img.pixels().to_vec();
            let mut minus = plus.clone();
            plus[idx] += h;
            minus[idx] -= h;
            let f = |px: Vec<f64>| confidence(&m, &pipeline, &ImageBuffer::new(320, 320, 1, px).unwrap(), &context()).unwrap();
            let fd = (f(plus) - f(minus)) / (2.0 * h);
            assert!((fd - g[idx]).abs() <= 1e-3 * g[idx].abs().max(1e-2), "{idx}: {fd} vs {}", g[idx]);
        }
    }

    #[test]
    fn deterministic_and_exportable() {
        let m = model(ModalityMask::ALL);
        let img = textured_image(6, 7, 3, 4);
        let a = saliency(&m, &img, &context(), "x").unwrap();
        assert_eq!(a, saliency(&m, &img, &context(), "x").unwrap());
        let norm = a.normalized();
        assert!(norm.iter().all(|v| (0.0..=1.0).contains(v)));
        assert_eq!(norm.iter().copied().fold(0.0, f64::max), 1.0);
        let (h, w, raw) = parse_raw_saliency(&a.raw_bytes()).unwrap();
        assert_eq!((h, w), (6, 7));
        assert!(raw.iter().zip(&a.values).all(|(r, v)| *r == *v as f32));
        let (y, x) = a.argmax();
        assert_eq!(a.get(y, x), a.values.iter().copied().fold(0.0, f64::max));
    }
}
