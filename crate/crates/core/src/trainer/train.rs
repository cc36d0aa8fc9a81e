use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::adamw::{AdamW, AdamWConfig};
use super::metrics::MetricsReport;
use crate::capsnet::{CapsModel, MarginLossConfig, ModalityInputs, ModelConfig, ParamGrads};
use crate::error::{Error, Result};
use crate::features::{EmbeddingDataset, Label};

/// Records whose gradients are computed together before being summed in order.
const GRAD_CHUNK: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub early_stop_patience: usize,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub seed: u64,
    pub margin: MarginLossConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-4,
            batch_size: 64,
            max_epochs: 30,
            early_stop_patience: 5,
            weight_decay: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            seed: 0,
            margin: MarginLossConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("learning_rate", self.learning_rate),
            ("weight_decay", self.weight_decay),
            ("beta1", self.beta1),
            ("beta2", self.beta2),
            ("adam_eps", self.adam_eps),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(format!("{name} must be positive, got {v}")));
            }
        }
        if self.beta1 >= 1.0 || self.beta2 >= 1.0 {
            return Err(Error::config("beta1 and beta2 must be below 1"));
        }
        if self.batch_size == 0 || self.max_epochs == 0 || self.early_stop_patience == 0 {
            return Err(Error::config("batch_size, max_epochs and early_stop_patience must be positive"));
        }
        if self.early_stop_patience > self.max_epochs {
            return Err(Error::config("early_stop_patience exceeds max_epochs"));
        }
        self.margin.validate()
    }

    pub fn adamw(&self) -> AdamWConfig {
        AdamWConfig {
            learning_rate: self.learning_rate,
            weight_decay: self.weight_decay,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.adam_eps,
        }
    }
}

/// One row of the training history.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean of the per-batch mean losses.
    pub loss: f64,
    /// Validation accuracy in percent.
    pub val_acc: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct History {
    pub epochs: Vec<EpochRecord>,
    /// Epoch whose parameters were kept.
    pub best_epoch: usize,
}

impl History {
    pub const CSV_HEADER: &'static str = "epoch,loss,val_acc";

    pub fn best(&self) -> &EpochRecord {
        &self.epochs[self.best_epoch - 1]
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("{}\n", Self::CSV_HEADER);
        for e in &self.epochs {
            out.push_str(&format!("{},{:.6},{:.6}\n", e.epoch, e.loss, e.val_acc));
        }
        out
    }
}

/// Mean loss over `indices` and the summed-then-averaged gradient.
/// Deterministic: chunk results are added in index order.
pub fn batch_gradient(
    model: &CapsModel,
    inputs: &[(ModalityInputs, Label)],
    indices: &[usize],
    margin: &MarginLossConfig,
) -> Result<(f64, ParamGrads)> {
    let mut total = ParamGrads::zeros_like(model);
    let mut loss = 0.0;
    for chunk in indices.chunks(GRAD_CHUNK) {
        let parts: Vec<(f64, ParamGrads)> = chunk
            .par_iter()
            .map(|&i| model.loss_and_grads(&inputs[i].0, inputs[i].1, margin))
            .collect::<Result<_>>()?;
        for (l, g) in &parts {
            loss += l;
            total.add_assign(g);
        }
    }
    let n = indices.len() as f64;
    total.scale(1.0 / n);
    Ok((loss / n, total))
}

fn prepare(ds: &EmbeddingDataset, what: &str) -> Result<Vec<(ModalityInputs, Label)>> {
    if ds.is_empty() {
        return Err(Error::contract(format!("{what} dataset is empty")));
    }
    Ok(ds.iter().map(|r| (ModalityInputs::from_record(r), r.label)).collect())
}

/// Predicted label and confidence for every record, in order.
pub fn predict_all(model: &CapsModel, ds: &EmbeddingDataset) -> Result<Vec<(Label, f64)>> {
    ds.records.par_iter().map(|r| model.predict(r)).collect()
}

/// Classifies every record; fake is the positive class.
pub fn evaluate(model: &CapsModel, ds: &EmbeddingDataset) -> Result<MetricsReport> {
    let preds = predict_all(model, ds)?;
    Ok(MetricsReport::from_pairs(ds.iter().zip(preds).map(|(r, (p, _))| (r.label, p))))
}

fn accuracy(model: &CapsModel, val: &[(ModalityInputs, Label)]) -> Result<f64> {
    let preds: Vec<Label> = val
        .par_iter()
        .map(|(x, _)| Ok(model.infer(x)?.classify()?.0))
        .collect::<Result<_>>()?;
    let correct = preds.iter().zip(val).filter(|(p, (_, y))| *p == y).count();
    Ok(100.0 * correct as f64 / val.len() as f64)
}

/// Trains from a fresh `seed`-initialized model; see [`train_from`].
pub fn train(
    train_set: &EmbeddingDataset,
    val_set: &EmbeddingDataset,
    model_cfg: &ModelConfig,
    cfg: &TrainConfig,
) -> Result<(CapsModel, History)> {
    let model = CapsModel::init(*model_cfg, cfg.seed)?;
    train_from(model, train_set, val_set, cfg, |_| {})
}

/// Mini-batch AdamW on the margin loss with early stopping on validation
/// accuracy. Returns the parameters of the best epoch (earliest on ties)
/// and the per-epoch history; `on_epoch` sees each row as it is produced.
pub fn train_from(
    mut model: CapsModel,
    train_set: &EmbeddingDataset,
    val_set: &EmbeddingDataset,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<(CapsModel, History)> {
    cfg.validate()?;
    let train_inputs = prepare(train_set, "training")?;
    let val_inputs = prepare(val_set, "validation")?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);
    let mut opt = AdamW::new(cfg.adamw(), model.params());
    let mut order: Vec<usize> = (0..train_inputs.len()).collect();
    let mut epochs = Vec::new();
    let mut best: Option<(f64, usize, CapsModel)> = None;
    let mut stale = 0;

    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut batch_losses = Vec::new();
        for batch in order.chunks(cfg.batch_size) {
            let (loss, grads) = batch_gradient(&model, &train_inputs, batch, &cfg.margin)?;
            opt.step(model.params_mut(), grads.tensors())?;
            batch_losses.push(loss);
        }
        let record = EpochRecord {
            epoch,
            loss: batch_losses.iter().sum::<f64>() / batch_losses.len() as f64,
            val_acc: accuracy(&model, &val_inputs)?,
        };
        on_epoch(&record);
        epochs.push(record);

        if best.as_ref().is_none_or(|(acc, _, _)| record.val_acc > *acc) {
            best = Some((record.val_acc, epoch, model.clone()));
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.early_stop_patience {
                break;
            }
        }
    }
    let (_, best_epoch, best_model) = best.expect("at least one epoch");
    Ok((best_model, History { epochs, best_epoch }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::capsnet::ModalityMask;
    use crate::features::EmbeddingRecord;
    use crate::synthetic::TwoClusters;

    fn small() -> ModelConfig {
        ModelConfig {
            embed_dim: 6,
            capsules_per_modality: 3,
            capsule_dim: 2,
            classes: 2,
            class_dim: 4,
            routing_iters: 3,
            modality_mask: ModalityMask::ALL,
            detach_couplings: false,
        }
    }

    fn record(id: &str, label: Label, offset: f32) -> EmbeddingRecord {
        let v = |k: f32| (0..6).map(|i| ((i as f32 + k) * 0.7).sin() + offset).collect();
        EmbeddingRecord { id: id.into(), label, visual: v(0.0), text: v(1.0), freq: v(2.0) }
    }

    #[test]
    fn memorizes_a_repeated_record() {
        let rec = record("a", Label::Fake, 0.3);
        let ds = EmbeddingDataset::new(vec![rec.clone(); 8]);
        let cfg = TrainConfig { learning_rate: 1e-2, batch_size: 8, max_epochs: 300, early_stop_patience: 300, ..Default::default() };
        let model = CapsModel::init(small(), 3).unwrap();
        let mut last = f64::INFINITY;
        let (_, hist) = train_from(model, &ds, &ds, &cfg, |e| last = e.loss).unwrap();
        assert!(last < 1e-3, "final loss {last}");
        assert_eq!(hist.best().val_acc, 100.0);
    }

    #[test]
    fn fixed_seed_gives_identical_histories() {
        let c = TwoClusters::new(6, 0.5, 2.0, 1);
        let (tr, va) = (c.sample(40, 2, "t"), c.sample(20, 3, "v"));
        let cfg = TrainConfig { learning_rate: 1e-2, batch_size: 8, max_epochs: 6, seed: 9, ..Default::default() };
        let a = train(&tr, &va, &small(), &cfg).unwrap();
        let b = train(&tr, &va, &small(), &cfg).unwrap();
        assert_eq!(a.1.to_csv(), b.1.to_csv());
        assert_eq!(a.0, b.0);
    }

    #[test]
    fn kept_model_is_the_best_epoch() {
        let c = TwoClusters::new(6, 1.0, 1.0, 4);
        let (tr, va) = (c.sample(40, 5, "t"), c.sample(30, 6, "v"));
        let cfg = TrainConfig { learning_rate: 5e-2, batch_size: 4, max_epochs: 12, early_stop_patience: 3, seed: 2, ..Default::default() };
        let (model, hist) = train(&tr, &va, &small(), &cfg).unwrap();
        let max = hist.epochs.iter().map(|e| e.val_acc).fold(f64::MIN, f64::max);
        assert_eq!(hist.best().val_acc, max);
        let first = hist.epochs.iter().position(|e| e.val_acc == max).unwrap();
        assert_eq!(hist.best_epoch, first + 1);
        assert_eq!(evaluate(&model, &va).unwrap().accuracy, max);
        assert!(hist.epochs.len() - hist.best_epoch <= cfg.early_stop_patience);
    }

    #[test]
    fn empty_dataset_is_a_contract_error() {
        let ds = EmbeddingDataset::new(vec![record("a", Label::Real, 0.0)]);
        let empty = EmbeddingDataset::new(vec![]);
        let cfg = TrainConfig::default();
        assert!(matches!(train(&empty, &ds, &small(), &cfg), Err(Error::Contract(_))));
        assert!(matches!(train(&ds, &empty, &small(), &cfg), Err(Error::Contract(_))));
        let bad = TrainConfig { batch_size: 0, ..cfg };
        assert!(matches!(train(&ds, &ds, &small(), &bad), Err(Error::Config(_))));
    }
}
