//! Frequency branch on a synthetic image: luminance, resize to 320×320,
//! 2-D DCT, log magnitude, standardization, pooling to 768 values.

use capsfake::features::{decode_pnm, encode_pnm, freq_embed, FREQ_GRID};
use capsfake::synthetic::textured_image;

fn main() -> capsfake::Result<()> {
    let img = textured_image(96, 128, 3, 5);
    let v = freq_embed(&img)?;
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / v.len() as f64;
    println!("{} values on a {}x{} grid, mean {mean:.2e}, std {:.6}", v.len(), FREQ_GRID.0, FREQ_GRID.1, var.sqrt());
    println!("first cells (low frequencies): {:.4?}", &v[..6]);

    // 8-bit PPM round trip quantizes pixels; the embedding barely moves
    let back = decode_pnm(&encode_pnm(&img))?;
    let w = freq_embed(&back)?;
    let drift = v.iter().zip(&w).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    println!("max change after 8-bit quantization: {drift:.4}");
    Ok(())
}
