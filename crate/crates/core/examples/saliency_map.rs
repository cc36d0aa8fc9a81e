//! Frequency-path saliency of one image, written as a PGM heatmap.
//!
//!     cargo run --release --example saliency_map -- saliency.pgm

use capsfake::analysis::saliency;
use capsfake::capsnet::{CapsModel, Modality, ModalityInputs, ModalityMask, ModelConfig};
use capsfake::synthetic::{textured_image, TwoClusters};

fn main() -> capsfake::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "saliency.pgm".into());
    let model = CapsModel::init(ModelConfig::default(), 2)?;
    let record = &TwoClusters::new(768, 0.05, 2.0, 3).sample(1, 4, "r").records[0];
    let context = ModalityInputs::from_record(record);
    let img = textured_image(64, 64, 3, 9);

    let map = saliency(&model, &img, &context, &record.id)?;
    let (y, x) = map.argmax();
    println!("label {} confidence {:.4}", map.label, map.confidence);
    println!("max saliency {:.3e} at ({y}, {x})", map.get(y, x));
    map.save_pgm(&out)?;
    println!("wrote {out}");

    // without the frequency branch no pixel can matter
    let mut blind = model.clone();
    blind.set_modality_mask(ModalityMask::ALL.without(Modality::Frequency))?;
    let flat = saliency(&blind, &img, &context, &record.id)?;
    println!("frequency masked: all_zero = {}", flat.all_zero);
    Ok(())
}
