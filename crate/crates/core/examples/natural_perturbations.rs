//! Frequency-only robustness sweep: each test image is perturbed, its
//! frequency embedding recomputed, and the visual/text vectors kept.

use capsfake::capsnet::ModelConfig;
use capsfake::features::freq_embed;
use capsfake::robustness::{frequency_sweep, perturb, PerturbGrid, PerturbKind, SweepItem};
use capsfake::synthetic::{textured_image, TwoClusters};
use capsfake::trainer::{train, TrainConfig};

fn main() -> capsfake::Result<()> {
    // Images are random textures, so the frequency branch carries no class
    // signal here; the point is the plumbing and the table layout.
    let clusters = TwoClusters::new(768, 0.0025, 2.0, 7);
    let (tr, va, te) = (clusters.sample(120, 1, "train"), clusters.sample(60, 2, "val"), clusters.sample(16, 3, "test"));
    let cfg = TrainConfig { seed: 1, max_epochs: 3, early_stop_patience: 1, ..Default::default() };
    let (model, _) = train(&tr, &va, &ModelConfig::default(), &cfg)?;

    let items: Vec<SweepItem> = te
        .records
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let image = textured_image(48, 64, 3, i as u64);
            let mut record = r.clone();
            record.freq = freq_embed(&image).unwrap().iter().map(|&x| x as f32).collect();
            SweepItem { image, record }
        })
        .collect();

    let sample = &items[0].image;
    for kind in PerturbKind::ALL {
        let level = kind.default_levels()[2];
        let out = perturb(sample, kind, level, 0)?;
        println!("{kind:>15} level {level:>5}: max pixel change {:.4}", out.max_abs_diff(sample));
    }
    println!();

    let grids = [PerturbGrid::default_for(PerturbKind::Jpeg), PerturbGrid::default_for(PerturbKind::GaussianBlur)];
    print!("{}", frequency_sweep(&model, &items, &grids, 0)?.to_csv());
    Ok(())
}
