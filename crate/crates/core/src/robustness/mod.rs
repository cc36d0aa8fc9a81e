//! Natural perturbations, FGSM/PGD attacks and robustness sweeps.

mod attacks;
mod sweep;
mod transforms;

pub use attacks::{
    attack_image, fgsm_embedding, fgsm_flat, image_forward, interleave_planes, linf_distance, pgd_embedding, pgd_flat, AttackConfig, AttackOutcome,
    AttackSpace, AttackTarget, EmbeddingTarget, ImageTarget,
};
pub use sweep::{frequency_sweep, full_pipeline_sweep, reextracted_file_name, SweepItem, SweepRow, SweepTable};
pub use transforms::{
    color_jitter, gaussian_blur, gaussian_kernel, gaussian_noise, jpeg, jpeg_quant_table, perturb, radial_distort,
    sharpen, PerturbGrid, PerturbKind, JPEG_LUMA_TABLE,
};
