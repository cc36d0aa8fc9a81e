//! Trains one model per modality combination and compares test recall,
//! mirroring the ablation protocol on synthetic data.

use capsfake::capsnet::{Modality, ModalityMask, ModelConfig};
use capsfake::synthetic::TwoClusters;
use capsfake::trainer::{evaluate, train, TrainConfig};

fn main() -> capsfake::Result<()> {
    let clusters = TwoClusters::new(768, 0.0025, 2.0, 7);
    let (tr, va, te) = (clusters.sample(200, 1, "train"), clusters.sample(100, 2, "val"), clusters.sample(100, 3, "test"));
    let cfg = TrainConfig { seed: 42, early_stop_patience: 2, ..Default::default() };

    let mut masks = vec![ModalityMask::ALL];
    masks.extend(Modality::ALL.map(|m| ModalityMask::ALL.without(m)));
    masks.extend(Modality::ALL.map(ModalityMask::only));
    println!("{:<24} {:>8} {:>8}", "modalities", "recall", "f1");
    for mask in masks {
        let model_cfg = ModelConfig { modality_mask: mask, ..Default::default() };
        let (model, _) = train(&tr, &va, &model_cfg, &cfg)?;
        let m = evaluate(&model, &te)?;
        println!("{:<24} {:>8.2} {:>8.2}", mask.to_string(), m.recall, m.f1);
    }
    Ok(())
}
