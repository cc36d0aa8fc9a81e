//! Trains the default model on seeded two-cluster embeddings and reports
//! test metrics. Pass a directory to keep the datasets and checkpoint:
//!
//!     cargo run --release --example train_synthetic -- out/

use std::path::PathBuf;

use capsfake::capsnet::{save_checkpoint, CapsModel, ModelConfig};
use capsfake::features::write_emb1;
use capsfake::synthetic::TwoClusters;
use capsfake::trainer::{evaluate, train_from, TrainConfig};

fn main() -> capsfake::Result<()> {
    let out_dir = std::env::args().nth(1).map(PathBuf::from);

    // class means sit 2σ apart along a random sign direction
    let clusters = TwoClusters::new(768, 0.0025, 2.0, 7);
    let train = clusters.sample(600, 1, "train");
    let val = clusters.sample(200, 2, "val");
    let test = clusters.sample(200, 3, "test");

    let cfg = TrainConfig { seed: 42, ..Default::default() };
    let model = CapsModel::init(ModelConfig::default(), cfg.seed)?;
    println!("{} parameters", model.config().parameter_count());
    let (model, history) = train_from(model, &train, &val, &cfg, |e| {
        println!("epoch {:>2}  loss {:.6}  val_acc {:.2}", e.epoch, e.loss, e.val_acc);
    })?;
    println!("kept epoch {}\n", history.best_epoch);
    println!("{}", evaluate(&model, &test)?);

    if let Some(dir) = out_dir {
        std::fs::create_dir_all(&dir).map_err(|e| capsfake::Error::Io { path: dir.clone(), source: e })?;
        write_emb1(&train, dir.join("train.emb1"))?;
        write_emb1(&val, dir.join("val.emb1"))?;
        write_emb1(&test, dir.join("test.emb1"))?;
        save_checkpoint(&model, dir.join("model.cps"))?;
        println!("wrote datasets and model.cps to {}", dir.display());
    }
    Ok(())
}
