//! FGSM and PGD against a model trained on synthetic embeddings, across
//! attack budgets. Recall is measured on the fake records only.

use capsfake::capsnet::{MarginLossConfig, ModalityInputs, ModelConfig};
use capsfake::features::{EmbeddingDataset, Label};
use capsfake::robustness::{fgsm_embedding, linf_distance, pgd_embedding, AttackConfig};
use capsfake::synthetic::TwoClusters;
use capsfake::trainer::{evaluate, train, TrainConfig};

fn main() -> capsfake::Result<()> {
    let clusters = TwoClusters::new(768, 0.0025, 2.0, 7);
    let (tr, va) = (clusters.sample(200, 1, "train"), clusters.sample(100, 2, "val"));
    let fakes = EmbeddingDataset::new(
        clusters.sample(100, 3, "test").records.into_iter().filter(|r| r.label == Label::Fake).collect(),
    );
    let cfg = TrainConfig { seed: 42, early_stop_patience: 2, ..Default::default() };
    let (model, _) = train(&tr, &va, &ModelConfig::default(), &cfg)?;
    let margin = MarginLossConfig::default();
    println!("clean recall {:.2}", evaluate(&model, &fakes)?.recall);

    println!("{:>8} {:>12} {:>12} {:>10}", "budget", "fgsm recall", "pgd recall", "pgd linf");
    for budget in [0.0005, 0.001, 0.0025, 0.005] {
        let attack = AttackConfig { eta: budget, epsilon: budget, ..Default::default() };
        let mut fgsm_set = Vec::new();
        let mut pgd_set = Vec::new();
        let mut dist = 0.0f64;
        for r in fakes.iter() {
            let x = ModalityInputs::from_record(r);
            let f = fgsm_embedding(&model, &x, r.label, attack.eta, &margin)?;
            let p = pgd_embedding(&model, &x, r.label, &attack, &margin)?;
            dist = dist.max(linf_distance(&x.concat(), &p.adversarial.concat()));
            fgsm_set.push(f.adversarial.to_record(r.id.clone(), r.label));
            pgd_set.push(p.adversarial.to_record(r.id.clone(), r.label));
        }
        let f = evaluate(&model, &EmbeddingDataset::new(fgsm_set))?.recall;
        let p = evaluate(&model, &EmbeddingDataset::new(pgd_set))?.recall;
        println!("{budget:>8} {f:>12.2} {p:>12.2} {dist:>10.6}");
    }
    Ok(())
}
