//! White-box sign-gradient attacks that raise the margin loss of the true
//! label, either on the embedding vectors or on image pixels through the
//! frequency pipeline.

use std::fmt;
use std::str::FromStr;

use crate::capsnet::{margin_loss_on_tape, CapsModel, MarginLossConfig, Modality, ModalityInputs};
use crate::error::{Error, Result};
use crate::features::{FreqPipeline, ImageBuffer, Label};
use crate::numerics::{Tape, Tensor, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AttackSpace {
    /// All three concatenated modality vectors.
    Embedding,
    /// Image pixels, differentiated through the frequency branch.
    ImageFrequency,
}

impl fmt::Display for AttackSpace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AttackSpace::Embedding => "embedding",
            AttackSpace::ImageFrequency => "image-frequency",
        })
    }
}

impl FromStr for AttackSpace {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('_', "-").as_str() {
            "embedding" => Ok(AttackSpace::Embedding),
            "image-frequency" | "image" => Ok(AttackSpace::ImageFrequency),
            other => Err(Error::config(format!("unknown attack space {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AttackConfig {
    /// FGSM magnitude `η`.
    pub eta: f64,
    /// PGD ball radius `ε`.
    pub epsilon: f64,
    /// PGD step `γ`.
    pub step: f64,
    /// PGD iterations `t`.
    pub iters: usize,
    pub space: AttackSpace,
}

impl Default for AttackConfig {
    fn default() -> Self {
        AttackConfig {
            eta: 0.005,
            epsilon: 0.005,
            step: 0.008,
            iters: 10,
            space: AttackSpace::Embedding,
        }
    }
}

impl AttackConfig {
    /// Zero magnitudes are accepted as degenerate probes.
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("eta", self.eta), ("epsilon", self.epsilon), ("step", self.step)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::config(format!("{name} must be a non-negative number, got {v}")));
            }
        }
        if self.iters == 0 {
            return Err(Error::config("iters must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AttackOutcome<T> {
    pub adversarial: T,
    /// Set when a gradient of exactly zero stopped the attack.
    pub zero_gradient: bool,
    /// Loss at the returned point.
    pub loss: f64,
}

fn sign(g: f64) -> f64 {
    if g > 0.0 {
        1.0
    } else if g < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Something an attack can differentiate: loss and gradient at a flat point.
pub trait AttackTarget {
    fn loss_grad(&self, x: &[f64]) -> Result<(f64, Vec<f64>)>;
    /// Whether iterates are clamped to `[0, 1]`.
    fn pixel_space(&self) -> bool;
}

/// `x + η·sign(∇L)`, clamped to `[0, 1]` in pixel space.
pub fn fgsm_flat(target: &impl AttackTarget, x: &[f64], eta: f64) -> Result<AttackOutcome<Vec<f64>>> {
    let (loss, g) = target.loss_grad(x)?;
    if g.iter().all(|&v| v == 0.0) {
        return Ok(AttackOutcome { adversarial: x.to_vec(), zero_gradient: true, loss });
    }
    let mut adv: Vec<f64> = x.iter().zip(&g).map(|(x, g)| x + eta * sign(*g)).collect();
    if target.pixel_space() {
        adv.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
    }
    let loss = target.loss_grad(&adv)?.0;
    Ok(AttackOutcome { adversarial: adv, zero_gradient: false, loss })
}

/// `t` steps of `x ← Proj_{B_ε(x₀)}(x + γ·sign(∇L))`, clamped to `[0, 1]` in pixel space.
pub fn pgd_flat(target: &impl AttackTarget, x0: &[f64], cfg: &AttackConfig) -> Result<AttackOutcome<Vec<f64>>> {
    let mut x = x0.to_vec();
    let mut zero_gradient = false;
    let mut loss = f64::NAN;
    for _ in 0..cfg.iters {
        let (l, g) = target.loss_grad(&x)?;
        loss = l;
        if g.iter().all(|&v| v == 0.0) {
            zero_gradient = true;
            break;
        }
        for ((xi, &x0i), gi) in x.iter_mut().zip(x0).zip(&g) {
            let stepped = *xi + cfg.step * sign(*gi);
            *xi = stepped.clamp(x0i - cfg.epsilon, x0i + cfg.epsilon);
            if target.pixel_space() {
                *xi = xi.clamp(0.0, 1.0);
            }
        }
    }
    if !zero_gradient {
        loss = target.loss_grad(&x)?.0;
    }
    Ok(AttackOutcome { adversarial: x, zero_gradient, loss })
}

/// Margin loss as a function of the concatenated `[visual | text | freq]` vector.
pub struct EmbeddingTarget<'m> {
    pub model: &'m CapsModel,
    pub label: Label,
    pub margin: MarginLossConfig,
}

impl AttackTarget for EmbeddingTarget<'_> {
    fn loss_grad(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        let inputs = ModalityInputs::split(x, self.model.config().embed_dim)?;
        let mut tape = Tape::new();
        let bound = self.model.bind(&mut tape, false);
        let xs = self.model.input_vars(&mut tape, &inputs, true)?;
        let fwd = self.model.forward(&mut tape, &bound, xs)?;
        let loss = margin_loss_on_tape(&mut tape, fwd.output(), self.label.index(), &self.margin)?;
        let grads = tape.backward(loss)?;
        let mut flat = Vec::with_capacity(x.len());
        for v in xs {
            flat.extend_from_slice(grads.wrt(v).expect("trainable input").data());
        }
        Ok((tape.value(loss).item(), flat))
    }

    fn pixel_space(&self) -> bool {
        false
    }
}

/// Margin loss as a function of interleaved image pixels. The visual and
/// text vectors come from `context` and stay fixed; the frequency vector is
/// recomputed from the pixels.
pub struct ImageTarget<'m> {
    pub model: &'m CapsModel,
    pub pipeline: &'m FreqPipeline,
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub context: &'m ModalityInputs,
    pub label: Label,
    pub margin: MarginLossConfig,
}

/// Records pixels → frequency embedding → model on `tape`. Pixels are
/// interleaved `h × w × c`; each channel plane becomes a trainable leaf.
/// `context` supplies the fixed visual and text vectors. Returns the plane
/// leaves and the class capsules.
pub fn image_forward<'t>(
    tape: &mut Tape<'t>,
    model: &'t CapsModel,
    pipeline: &'t FreqPipeline,
    context: &ModalityInputs,
    shape: (usize, usize, usize),
    pixels: &[f64],
) -> Result<(Vec<Var>, Var)> {
    let (h, w, c) = shape;
    if pixels.len() != h * w * c {
        return Err(Error::contract("pixel count does not match the image shape"));
    }
    let planes: Vec<Var> = (0..c)
        .map(|ch| {
            let plane = pixels.iter().skip(ch).step_by(c).copied().collect();
            tape.param(Tensor::matrix(h, w, plane))
        })
        .collect();
    let freq = pipeline.record(tape, &planes)?;
    let bound = model.bind(tape, false);
    let mut xs = model.input_vars(tape, context, false)?;
    xs[Modality::Frequency.index()] = freq;
    let fwd = model.forward(tape, &bound, xs)?;
    Ok((planes, fwd.output()))
}

/// Gathers per-plane gradients back into interleaved pixel order.
pub fn interleave_planes(planes: &[&Tensor]) -> Vec<f64> {
    let c = planes.len();
    let n = planes.first().map_or(0, |p| p.len());
    let mut out = vec![0.0; n * c];
    for (ch, g) in planes.iter().enumerate() {
        for (i, v) in g.data().iter().enumerate() {
            out[i * c + ch] = *v;
        }
    }
    out
}

impl AttackTarget for ImageTarget<'_> {
    fn loss_grad(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        let mut tape = Tape::new();
        let shape = (self.height, self.width, self.channels);
        let (planes, v) = image_forward(&mut tape, self.model, self.pipeline, self.context, shape, x)?;
        let loss = margin_loss_on_tape(&mut tape, v, self.label.index(), &self.margin)?;
        let grads = tape.backward(loss)?;
        let g: Vec<&Tensor> = planes.iter().map(|&p| grads.wrt(p).expect("trainable plane")).collect();
        Ok((tape.value(loss).item(), interleave_planes(&g)))
    }

    fn pixel_space(&self) -> bool {
        true
    }
}

/// FGSM on one record's embeddings.
pub fn fgsm_embedding(
    model: &CapsModel,
    inputs: &ModalityInputs,
    label: Label,
    eta: f64,
    margin: &MarginLossConfig,
) -> Result<AttackOutcome<ModalityInputs>> {
    let target = EmbeddingTarget { model, label, margin: *margin };
    let out = fgsm_flat(&target, &inputs.concat(), eta)?;
    wrap_embedding(out, model)
}

/// PGD on one record's embeddings.
pub fn pgd_embedding(
    model: &CapsModel,
    inputs: &ModalityInputs,
    label: Label,
    cfg: &AttackConfig,
    margin: &MarginLossConfig,
) -> Result<AttackOutcome<ModalityInputs>> {
    cfg.validate()?;
    let target = EmbeddingTarget { model, label, margin: *margin };
    let out = pgd_flat(&target, &inputs.concat(), cfg)?;
    wrap_embedding(out, model)
}

fn wrap_embedding(out: AttackOutcome<Vec<f64>>, model: &CapsModel) -> Result<AttackOutcome<ModalityInputs>> {
    Ok(AttackOutcome {
        adversarial: ModalityInputs::split(&out.adversarial, model.config().embed_dim)?,
        zero_gradient: out.zero_gradient,
        loss: out.loss,
    })
}

/// Image-space attack through the frequency branch; `context` supplies the
/// fixed visual and text vectors. Runs PGD when `pgd` is set, otherwise FGSM with `cfg.eta`.
pub fn attack_image(
    model: &CapsModel,
    img: &ImageBuffer,
    context: &ModalityInputs,
    label: Label,
    cfg: &AttackConfig,
    pgd: bool,
    margin: &MarginLossConfig,
) -> Result<AttackOutcome<ImageBuffer>> {
    cfg.validate()?;
    let pipeline = FreqPipeline::for_image(img);
    let target = ImageTarget {
        model,
        pipeline: &pipeline,
        height: img.height(),
        width: img.width(),
        channels: img.channels(),
        context,
        label,
        margin: *margin,
    };
    let out = if pgd {
        pgd_flat(&target, img.pixels(), cfg)?
    } else {
        fgsm_flat(&target, img.pixels(), cfg.eta)?
    };
    Ok(AttackOutcome {
        adversarial: ImageBuffer::new(img.height(), img.width(), img.channels(), out.adversarial)?,
        zero_gradient: out.zero_gradient,
        loss: out.loss,
    })
}

/// Largest absolute coordinate difference.
pub fn linf_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::capsnet::ModelConfig;
    use crate::synthetic::textured_image;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// `L = Σ w·x` with a fixed gradient `w`.
    struct Linear(Vec<f64>, bool);

    impl AttackTarget for Linear {
        fn loss_grad(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
            Ok((x.iter().zip(&self.0).map(|(a, b)| a * b).sum(), self.0.clone()))
        }
        fn pixel_space(&self) -> bool {
            self.1
        }
    }

    #[test]
    fn fgsm_with_positive_gradient_adds_eta() {
        let x = vec![0.1, -0.4, 2.0];
        let out = fgsm_flat(&Linear(vec![1.0, 3.0, 0.5], false), &x, 0.005).unwrap();
        for (a, b) in out.adversarial.iter().zip(&x) {
            assert_eq!(*a, b + 0.005);
        }
        assert!(!out.zero_gradient);
    }

    #[test]
    fn zero_magnitudes_are_identity() {
        let x = vec![0.3, 0.6];
        let t = Linear(vec![1.0, -1.0], true);
        assert_eq!(fgsm_flat(&t, &x, 0.0).unwrap().adversarial, x);
        let cfg = AttackConfig { epsilon: 0.0, iters: 7, ..Default::default() };
        assert_eq!(pgd_flat(&t, &x, &cfg).unwrap().adversarial, x);
    }

    #[test]
    fn projection_binds_when_step_exceeds_ball() {
        let x = vec![0.25, 0.5];
        let cfg = AttackConfig { epsilon: 0.005, step: 0.008, iters: 1, ..Default::default() };
        let out = pgd_flat(&Linear(vec![2.0, 2.0], false), &x, &cfg).unwrap();
        assert_eq!(out.adversarial, vec![0.25 + 0.005, 0.5 + 0.005]);
    }

    #[test]
    fn zero_gradient_is_flagged() {
        let x = vec![0.5; 4];
        let t = Linear(vec![0.0; 4], false);
        let out = fgsm_flat(&t, &x, 0.1).unwrap();
        assert!(out.zero_gradient);
        assert_eq!(out.adversarial, x);
        assert!(pgd_flat(&t, &x, &AttackConfig::default()).unwrap().zero_gradient);
    }

    #[test]
    fn pixel_attacks_clamp_to_unit_range() {
        let x = vec![0.999, 0.001];
        let out = fgsm_flat(&Linear(vec![1.0, -1.0], true), &x, 0.01).unwrap();
        assert_eq!(out.adversarial, vec![1.0, 0.0]);
    }

    fn small_model() -> CapsModel {
        let cfg = ModelConfig {
            embed_dim: 10,
            capsules_per_modality: 2,
            capsule_dim: 3,
            class_dim: 4,
            ..Default::default()
        };
        CapsModel::init(cfg, 3).unwrap()
    }

    #[test]
    fn embedding_gradient_matches_finite_differences() {
        let model = small_model();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x: Vec<f64> = (0..30).map(|_| rng.random_range(-1.0..1.0)).collect();
        let t = EmbeddingTarget { model: &model, label: Label::Fake, margin: MarginLossConfig::default() };
        let (_, g) = t.loss_grad(&x).unwrap();
        let h = 1e-6;
        for i in 0..30 {
            let (mut p, mut m) = (x.clone(), x.clone());
            p[i] += h;
            m[i] -= h;
            let fd = (t.loss_grad(&p).unwrap().0 - t.loss_grad(&m).unwrap().0) / (2.0 * h);
            assert!((fd - g[i]).abs() < 1e-6 * g[i].abs().max(1e-3), "{i}: {fd} vs {}", g[i]);
        }
    }

    #[test]
    fn fgsm_equals_single_step_pgd_on_embeddings() {
        let model = small_model();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut v = || (0..10).map(|_| rng.random_range(-1.0..1.0)).collect::<Vec<f64>>();
        let inputs = ModalityInputs::new(v(), v(), v());
        let margin = MarginLossConfig::default();
        let f = fgsm_embedding(&model, &inputs, Label::Real, 0.005, &margin).unwrap();
        let cfg = AttackConfig { step: 0.005, iters: 1, ..Default::default() };
        let p = pgd_embedding(&model, &inputs, Label::Real, &cfg, &margin).unwrap();
        assert!(linf_distance(&f.adversarial.concat(), &p.adversarial.concat()) <= 1e-12);
        assert!(linf_distance(&f.adversarial.concat(), &inputs.concat()) <= 0.005 + 1e-12);
    }

    #[test]
    fn image_attack_stays_in_ball_and_range() {
        let cfg = ModelConfig {
            capsules_per_modality: 2,
            capsule_dim: 2,
            class_dim: 3,
            ..Default::default()
        };
        let model = CapsModel::init(cfg, 4).unwrap();
        let context = ModalityInputs::new(vec![0.01; 768], vec![-0.02; 768], vec![0.0; 768]);
        let img = textured_image(12, 12, 3, 5);
        let acfg = AttackConfig { space: AttackSpace::ImageFrequency, iters: 2, ..Default::default() };
        let out = attack_image(&model, &img, &context, Label::Fake, &acfg, true, &MarginLossConfig::default()).unwrap();
        assert!(!out.zero_gradient);
        assert!(out.adversarial.max_abs_diff(&img) <= acfg.epsilon + 1e-12);
        assert!(out.adversarial.max_abs_diff(&img) > 0.0);
    }
}
