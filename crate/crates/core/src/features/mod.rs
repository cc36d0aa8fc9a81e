//! Image I/O, DCT, the frequency embedding and the EMB1 embedding container.

mod dct;
mod emb1;
mod freq;
mod image;

pub use dct::{dct2, dct2_matrix, dct_matrix, idct2_matrix};
pub use emb1::{
    read_emb1, write_emb1, EmbeddingDataset, EmbeddingRecord, Label, EMB1_HEADER_LEN, EMB1_MAGIC,
    EMB1_VERSION, EMBED_DIM,
};
pub use freq::{area_pool_matrix, bilinear_matrix, freq_embed, FreqPipeline, FREQ_EPS, FREQ_GRID, FREQ_SIDE};
pub use image::{decode_pnm, encode_pnm, load_ppm, save_ppm, ImageBuffer, LUMA};
