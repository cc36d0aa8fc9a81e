//! Writes a small self-contained workspace for trying the command line:
//! train/val/test EMB1 files, one PPM per test record, and a run config.
//!
//!     cargo run --release --example synthetic_workspace -- demo/

use std::path::PathBuf;

use capsfake::features::{freq_embed, save_ppm, write_emb1, Label};
use capsfake::robustness::gaussian_blur;
use capsfake::synthetic::{textured_image, TwoClusters};

const CONFIG: &str = r#"seed = 42

[train]
max_epochs = 10
early_stop_patience = 3

[paths]
train = "train.emb1"
val = "val.emb1"
test = "test.emb1"
checkpoint = "model.cps"
history = "history.csv"
"#;

fn main() -> capsfake::Result<()> {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "demo".into()));
    let io = |e| capsfake::Error::Io { path: dir.clone(), source: e };
    std::fs::create_dir_all(dir.join("images")).map_err(io)?;

    // Every record gets a texture image; fake ones are blurred, which leaves a
    // spectral trace in the frequency vector. Only test images are saved.
    let clusters = TwoClusters::new(768, 0.0025, 2.0, 7);
    let splits = [("train", 200, 1), ("val", 100, 2), ("test", 20, 3)];
    for (s, (name, n, seed)) in splits.into_iter().enumerate() {
        let mut ds = clusters.sample(n, seed, name);
        for (i, r) in ds.records.iter_mut().enumerate() {
            let mut img = textured_image(64, 64, 3, (s * 1000 + i) as u64);
            if r.label == Label::Fake {
                img = gaussian_blur(&img, 0.8);
            }
            r.freq = freq_embed(&img)?.iter().map(|&x| x as f32).collect();
            if name == "test" {
                save_ppm(&img, dir.join("images").join(format!("{}.ppm", r.id)))?;
            }
        }
        write_emb1(&ds, dir.join(format!("{name}.emb1")))?;
    }
    std::fs::write(dir.join("run.toml"), CONFIG).map_err(io)?;
    println!("workspace ready in {}", dir.display());
    Ok(())
}
