//! Follows one record through the three routing iterations: how the
//! coupling mass of each modality moves between the two class capsules.

use capsfake::capsnet::{capsule_norms, CapsModel, Modality, ModalityInputs, ModelConfig};
use capsfake::synthetic::TwoClusters;

fn main() -> capsfake::Result<()> {
    let cfg = ModelConfig::default();
    let model = CapsModel::init(cfg, 1)?;
    let record = &TwoClusters::new(768, 0.05, 2.0, 3).sample(1, 4, "r").records[0];
    let inference = model.infer(&ModalityInputs::from_record(record))?;
    let trace = &inference.trace;

    for r in 0..trace.iterations() {
        let alpha = &trace.couplings[r];
        print!("iter {}:", r + 1);
        for m in Modality::ALL {
            let rows = cfg.rows_of(m);
            let n = rows.len() as f64;
            let to_fake: f64 = rows.map(|i| alpha.row(i)[1]).sum::<f64>() / n;
            print!("  {m} mean α_fake {to_fake:.4}");
        }
        let norms = capsule_norms(&trace.class_capsules[r]);
        println!("  |v_real| {:.4} |v_fake| {:.4}", norms[0], norms[1]);
    }

    // logits accumulate agreements exactly
    let last = trace.iterations();
    let mut rebuilt = trace.logits[0].clone();
    for a in &trace.agreements {
        for (x, d) in rebuilt.data_mut().iter_mut().zip(a.data()) {
            *x += d;
        }
    }
    assert_eq!(&rebuilt, &trace.logits[last]);

    let (label, p) = inference.classify()?;
    println!("prediction {label} with confidence {p:.4} (true {})", record.label);
    Ok(())
}
