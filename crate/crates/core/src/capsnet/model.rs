use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::{MarginLossConfig, Modality, ModalityMask, ModelConfig};
use super::loss::{classify, margin_loss_on_tape};
use super::routing::{route_on_tape, RoutingTrace, RoutingVars};
use crate::error::{Error, Result};
use crate::features::{EmbeddingRecord, Label};
use crate::numerics::{Tape, Tensor, Var};

/// One record's modality vectors in `f64`, ordered visual, text, frequency.
#[derive(Clone, Debug, PartialEq)]
pub struct ModalityInputs {
    pub vectors: [Vec<f64>; 3],
}

impl ModalityInputs {
    pub fn new(visual: Vec<f64>, text: Vec<f64>, freq: Vec<f64>) -> Self {
        ModalityInputs {
            vectors: [visual, text, freq],
        }
    }

    pub fn from_record(rec: &EmbeddingRecord) -> Self {
        let widen = |v: &[f32]| v.iter().map(|&x| f64::from(x)).collect();
        Self::new(widen(&rec.visual), widen(&rec.text), widen(&rec.freq))
    }

    pub fn get(&self, m: Modality) -> &[f64] {
        &self.vectors[m.index()]
    }

    pub fn get_mut(&mut self, m: Modality) -> &mut Vec<f64> {
        &mut self.vectors[m.index()]
    }

    /// All three vectors back to back.
    pub fn concat(&self) -> Vec<f64> {
        self.vectors.concat()
    }

    /// Inverse of [`ModalityInputs::concat`].
    pub fn split(flat: &[f64], dim: usize) -> Result<Self> {
        if flat.len() != 3 * dim {
            return Err(Error::contract(format!("expected {} values, got {}", 3 * dim, flat.len())));
        }
        Ok(Self::new(
            flat[..dim].to_vec(),
            flat[dim..2 * dim].to_vec(),
            flat[2 * dim..].to_vec(),
        ))
    }

    /// Narrows back to `f32` under `id` and `label`.
    pub fn to_record(&self, id: impl Into<String>, label: Label) -> EmbeddingRecord {
        let narrow = |v: &[f64]| v.iter().map(|&x| x as f32).collect();
        EmbeddingRecord {
            id: id.into(),
            label,
            visual: narrow(&self.vectors[0]),
            text: narrow(&self.vectors[1]),
            freq: narrow(&self.vectors[2]),
        }
    }
}

/// Parameter leaves of a model on one tape.
#[derive(Clone, Copy, Debug)]
pub struct BoundModel {
    pub encoders: [Var; 3],
    pub route: Var,
}

/// Forward pass recorded on a tape.
#[derive(Clone, Debug)]
pub struct Forward {
    /// Stacked input capsules `3N × d_i`.
    pub capsules: Var,
    pub routing: RoutingVars,
}

impl Forward {
    pub fn output(&self) -> Var {
        self.routing.output()
    }
}

/// Result of a plain forward pass.
#[derive(Clone, Debug)]
pub struct Inference {
    pub capsules: Tensor,
    pub trace: RoutingTrace,
}

impl Inference {
    pub fn class_capsules(&self) -> &Tensor {
        self.trace.output()
    }

    pub fn classify(&self) -> Result<(Label, f64)> {
        classify(self.class_capsules())
    }
}

/// Gradients laid out like the model parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamGrads {
    pub encoders: [Tensor; 3],
    pub route: Tensor,
}

impl ParamGrads {
    pub fn zeros_like(model: &CapsModel) -> Self {
        ParamGrads {
            encoders: model.encoders.clone().map(|t| Tensor::zeros(t.shape())),
            route: Tensor::zeros(model.route.shape()),
        }
    }

    pub fn tensors(&self) -> [&Tensor; 4] {
        let [v, t, f] = &self.encoders;
        [v, t, f, &self.route]
    }

    pub fn tensors_mut(&mut self) -> [&mut Tensor; 4] {
        let [v, t, f] = &mut self.encoders;
        [v, t, f, &mut self.route]
    }

    /// `self += other`, elementwise.
    pub fn add_assign(&mut self, other: &ParamGrads) {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            a.data_mut().iter_mut().zip(b.data()).for_each(|(x, y)| *x += y);
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for t in self.tensors_mut() {
            t.data_mut().iter_mut().for_each(|x| *x *= factor);
        }
    }
}

/// Learnable parameters and shape of the multimodal capsule network.
#[derive(Clone, Debug, PartialEq)]
pub struct CapsModel {
    config: ModelConfig,
    /// Bias-free `d × N·d_i` maps for visual, text and frequency.
    encoders: [Tensor; 3],
    /// `3N × K × d_i × d_k` per-pair transforms.
    route: Tensor,
}

fn glorot(rng: &mut ChaCha8Rng, shape: &[usize], fan_in: usize, fan_out: usize) -> Tensor {
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-bound..bound)).collect()).expect("shape")
}

impl CapsModel {
    /// Glorot-uniform initialization from `seed`.
    pub fn init(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (d, w) = (config.embed_dim, config.encoder_width());
        let encoders = [(); 3].map(|_| glorot(&mut rng, &[d, w], d, w));
        let route = glorot(&mut rng, &config.route_shape(), config.capsule_dim, config.class_dim);
        Ok(CapsModel { config, encoders, route })
    }

    pub fn from_parts(config: ModelConfig, encoders: [Tensor; 3], route: Tensor) -> Result<Self> {
        config.validate()?;
        let enc_shape = [config.embed_dim, config.encoder_width()];
        for (m, e) in Modality::ALL.iter().zip(&encoders) {
            if e.shape() != enc_shape {
                return Err(Error::contract(format!(
                    "{m} encoder has shape {:?}, expected {enc_shape:?}",
                    e.shape()
                )));
            }
        }
        if route.shape() != config.route_shape() {
            return Err(Error::contract(format!(
                "routing tensor has shape {:?}, expected {:?}",
                route.shape(),
                config.route_shape()
            )));
        }
        let model = CapsModel { config, encoders, route };
        if !model.params().iter().all(|t| t.all_finite()) {
            return Err(Error::contract("parameters must be finite"));
        }
        Ok(model)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn set_modality_mask(&mut self, mask: ModalityMask) -> Result<()> {
        let config = ModelConfig { modality_mask: mask, ..self.config };
        config.validate()?;
        self.config = config;
        Ok(())
    }

    pub fn encoder(&self, m: Modality) -> &Tensor {
        &self.encoders[m.index()]
    }

    pub fn encoder_mut(&mut self, m: Modality) -> &mut Tensor {
        &mut self.encoders[m.index()]
    }

    pub fn route_weights(&self) -> &Tensor {
        &self.route
    }

    pub fn route_weights_mut(&mut self) -> &mut Tensor {
        &mut self.route
    }

    /// Encoders (visual, text, frequency) then the routing tensor.
    pub fn params(&self) -> [&Tensor; 4] {
        let [v, t, f] = &self.encoders;
        [v, t, f, &self.route]
    }

    pub fn params_mut(&mut self) -> [&mut Tensor; 4] {
        let [v, t, f] = &mut self.encoders;
        [v, t, f, &mut self.route]
    }

    pub fn into_parts(self) -> (ModelConfig, [Tensor; 3], Tensor) {
        (self.config, self.encoders, self.route)
    }

    /// Borrows the parameters onto `tape`, as trainable leaves or constants.
    pub fn bind<'a>(&'a self, tape: &mut Tape<'a>, trainable: bool) -> BoundModel {
        let mut leaf = |t: &'a Tensor| if trainable { tape.param_ref(t) } else { tape.constant_ref(t) };
        let [v, t, f] = &self.encoders;
        BoundModel {
            encoders: [leaf(v), leaf(t), leaf(f)],
            route: leaf(&self.route),
        }
    }

    /// Checks dimensions and puts the inputs on `tape` as `1 × d` rows.
    pub fn input_vars(&self, tape: &mut Tape<'_>, inputs: &ModalityInputs, trainable: bool) -> Result<[Var; 3]> {
        self.check_inputs(inputs)?;
        let d = self.config.embed_dim;
        Ok(inputs.vectors.clone().map(|v| {
            let t = Tensor::matrix(1, d, v);
            if trainable {
                tape.param(t)
            } else {
                tape.constant(t)
            }
        }))
    }

    fn check_inputs(&self, inputs: &ModalityInputs) -> Result<()> {
        for m in Modality::ALL {
            let len = inputs.get(m).len();
            if len != self.config.embed_dim {
                return Err(Error::contract(format!(
                    "{m} embedding has dim {len}, model expects {}",
                    self.config.embed_dim
                )));
            }
        }
        Ok(())
    }

    /// Records encode → route. `inputs` are `1 × d` rows; masked modalities
    /// contribute all-zero capsules and their inputs are not read.
    fn encode_on_tape(&self, tape: &mut Tape<'_>, bound: &BoundModel, inputs: [Var; 3]) -> Result<Var> {
        let cfg = &self.config;
        let shape = [cfg.capsules_per_modality, cfg.capsule_dim];
        let mut parts = Vec::with_capacity(3);
        for m in Modality::ALL {
            let i = m.index();
            parts.push(if cfg.modality_mask.contains(m) {
                let x = tape.matmul(inputs[i], bound.encoders[i])?;
                tape.reshape(x, &shape)?
            } else {
                tape.constant(Tensor::zeros(&shape))
            });
        }
        tape.concat_rows(&parts)
    }

    /// Records encode → route. `inputs` are `1 × d` rows; masked modalities
    /// contribute all-zero capsules and their inputs are not read.
    pub fn forward(&self, tape: &mut Tape<'_>, bound: &BoundModel, inputs: [Var; 3]) -> Result<Forward> {
        let capsules = self.encode_on_tape(tape, bound, inputs)?;
        let cfg = &self.config;
        let routing = route_on_tape(tape, capsules, bound.route, cfg.routing_iters, cfg.detach_couplings)?;
        Ok(Forward { capsules, routing })
    }

    /// Stacked input capsules `C_multi` (`3N × d_i`).
    pub fn encode_capsules(&self, inputs: &ModalityInputs) -> Result<Tensor> {
        let mut tape = Tape::new();
        let bound = self.bind(&mut tape, false);
        let xs = self.input_vars(&mut tape, inputs, false)?;
        let c = self.encode_on_tape(&mut tape, &bound, xs)?;
        Ok(tape.value(c).clone())
    }

    pub fn infer(&self, inputs: &ModalityInputs) -> Result<Inference> {
        let mut tape = Tape::new();
        let bound = self.bind(&mut tape, false);
        let xs = self.input_vars(&mut tape, inputs, false)?;
        let fwd = self.forward(&mut tape, &bound, xs)?;
        Ok(Inference {
            capsules: tape.value(fwd.capsules).clone(),
            trace: fwd.routing.trace(&tape),
        })
    }

    pub fn predict(&self, rec: &EmbeddingRecord) -> Result<(Label, f64)> {
        self.infer(&ModalityInputs::from_record(rec))?.classify()
    }

    /// Margin loss of one example and its gradient for every parameter.
    pub fn loss_and_grads(&self, inputs: &ModalityInputs, label: Label, margin: &MarginLossConfig) -> Result<(f64, ParamGrads)> {
        let mut tape = Tape::new();
        let bound = self.bind(&mut tape, true);
        let xs = self.input_vars(&mut tape, inputs, false)?;
        let fwd = self.forward(&mut tape, &bound, xs)?;
        let loss = margin_loss_on_tape(&mut tape, fwd.output(), label.index(), margin)?;
        let value = tape.value(loss).item();
        let mut grads = tape.backward(loss)?;
        let mut take = |v: Var| grads.take(v).expect("trainable leaf");
        let [v, t, f] = bound.encoders;
        let encoders = [take(v), take(t), take(f)];
        let route = take(bound.route);
        Ok((value, ParamGrads { encoders, route }))
    }

    pub fn loss(&self, inputs: &ModalityInputs, label: Label, margin: &MarginLossConfig) -> Result<f64> {
        let inference = self.infer(inputs)?;
        super::loss::margin_loss(inference.class_capsules(), label.index(), margin)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::matmul;

    fn small_config() -> ModelConfig {
        ModelConfig {
            embed_dim: 12,
            capsules_per_modality: 3,
            capsule_dim: 2,
            classes: 2,
            class_dim: 4,
            routing_iters: 3,
            ..Default::default()
        }
    }

    fn random_inputs(seed: u64, d: usize) -> ModalityInputs {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut v = || (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        ModalityInputs::new(v(), v(), v())
    }

    #[test]
    fn zero_embeddings_give_zero_capsules() {
        let model = CapsModel::init(ModelConfig::default(), 1).unwrap();
        let zeros = ModalityInputs::new(vec![0.0; 768], vec![0.0; 768], vec![0.0; 768]);
        let c = model.encode_capsules(&zeros).unwrap();
        assert_eq!(c.shape(), &[192, 8]);
        assert!(c.data().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn basis_probe_through_identity_encoder() {
        let cfg = ModelConfig::default();
        let mut eye = vec![0.0; 768 * 512];
        for i in 0..512 {
            eye[i * 512 + i] = 1.0;
        }
        let enc = Tensor::matrix(768, 512, eye);
        let model = CapsModel::from_parts(cfg, [enc.clone(), enc.clone(), enc], Tensor::zeros(&cfg.route_shape())).unwrap();
        let mut e1 = vec![0.0; 768];
        e1[0] = 1.0;
        let inputs = ModalityInputs::new(e1, vec![0.0; 768], vec![0.0; 768]);
        let c = model.encode_capsules(&inputs).unwrap();
        assert_eq!(c.data()[0], 1.0);
        assert_eq!(c.data().iter().filter(|&&x| x != 0.0).count(), 1);
    }

    #[test]
    fn capsules_match_matvec_oracle() {
        let model = CapsModel::init(ModelConfig::default(), 2).unwrap();
        let inputs = random_inputs(3, 768);
        let c = model.encode_capsules(&inputs).unwrap();
        for m in Modality::ALL {
            let x = inputs.get(m);
            let w = model.encoder(m);
            for col in 0..512 {
                let expect: f64 = (0..768).map(|r| x[r] * w.data()[r * 512 + col]).sum();
                let (cap, slot) = (m.index() * 64 + col / 8, col % 8);
                assert!((c.row(cap)[slot] - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn masking_zeroes_only_that_modality() {
        let mut model = CapsModel::init(small_config(), 4).unwrap();
        let inputs = random_inputs(5, 12);
        let full = model.encode_capsules(&inputs).unwrap();
        for m in Modality::ALL {
            model.set_modality_mask(ModalityMask::ALL.without(m)).unwrap();
            let masked = model.encode_capsules(&inputs).unwrap();
            for row in 0..9 {
                if model.config().rows_of(m).contains(&row) {
                    assert!(masked.row(row).iter().all(|&x| x == 0.0));
                } else {
                    assert_eq!(masked.row(row), full.row(row));
                }
            }
        }
        assert!(model.set_modality_mask(ModalityMask::NONE).is_err());
    }

    #[test]
    fn rejects_wrong_input_dims() {
        let model = CapsModel::init(small_config(), 6).unwrap();
        let mut inputs = random_inputs(7, 12);
        inputs.get_mut(Modality::Text).pop();
        assert!(matches!(model.infer(&inputs), Err(Error::Contract(_))));
    }

    #[test]
    fn init_is_seeded_and_bounded() {
        let cfg = small_config();
        let a = CapsModel::init(cfg, 9).unwrap();
        assert_eq!(a, CapsModel::init(cfg, 9).unwrap());
        assert_ne!(a, CapsModel::init(cfg, 10).unwrap());
        let bound = (6.0f64 / (12 + 6) as f64).sqrt();
        assert!(a.encoder(Modality::Visual).data().iter().all(|x| x.abs() <= bound));
    }

    #[test]
    fn gradients_match_finite_differences() {
        let model = CapsModel::init(small_config(), 11).unwrap();
        let inputs = random_inputs(12, 12);
        let margin = MarginLossConfig::default();
        for label in [Label::Real, Label::Fake] {
            let (loss, grads) = model.loss_and_grads(&inputs, label, &margin).unwrap();
            assert!(loss > 0.0);
            let h = 1e-5;
            for (p, g) in grads.tensors().into_iter().enumerate() {
                for idx in 0..g.len() {
                    let mut plus = model.clone();
                    plus.params_mut()[p].data_mut()[idx] += h;
                    let mut minus = model.clone();
                    minus.params_mut()[p].data_mut()[idx] -= h;
                    let fd = (plus.loss(&inputs, label, &margin).unwrap() - minus.loss(&inputs, label, &margin).unwrap()) / (2.0 * h);
                    let a = g.data()[idx];
                    let rel = (a - fd).abs() / a.abs().max(fd.abs()).max(1e-6);
                    assert!(rel < 1e-6, "param {p}[{idx}]: {a} vs {fd}");
                }
            }
        }
    }

    #[test]
    fn route_uses_stacked_capsules() {
        let model = CapsModel::init(small_config(), 13).unwrap();
        let inputs = random_inputs(14, 12);
        let inf = model.infer(&inputs).unwrap();
        let direct = super::super::routing::route(&inf.capsules, model.route_weights(), 3).unwrap();
        assert_eq!(direct, inf.trace);
        // visual capsule block equals x · W_V
        let x = Tensor::matrix(1, 12, inputs.get(Modality::Visual).to_vec());
        let proj = matmul(&x, model.encoder(Modality::Visual)).unwrap();
        assert_eq!(&inf.capsules.data()[..6], proj.data());
    }

    #[test]
    fn inputs_concat_split_round_trip() {
        let inputs = random_inputs(15, 12);
        assert_eq!(ModalityInputs::split(&inputs.concat(), 12).unwrap(), inputs);
    }
}
