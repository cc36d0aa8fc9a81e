use super::config::MarginLossConfig;
use crate::error::{Error, Result};
use crate::features::Label;
use crate::numerics::{l2_norm, Tape, Tensor, Unary, Var};

/// Norm of every class capsule (rows of `v`).
pub fn capsule_norms(v: &Tensor) -> Vec<f64> {
    (0..v.shape()[0]).map(|k| l2_norm(v.row(k))).collect()
}

/// `Σ_k y_k·max(0, ν−n_k)² + λ·(1−y_k)·max(0, n_k−μ)²` for capsule norms `n`.
pub fn margin_loss_from_norms(norms: &[f64], target: usize, cfg: &MarginLossConfig) -> f64 {
    norms
        .iter()
        .enumerate()
        .map(|(k, &n)| {
            if k == target {
                (cfg.pos_margin - n).max(0.0).powi(2)
            } else {
                cfg.neg_weight * (n - cfg.neg_margin).max(0.0).powi(2)
            }
        })
        .sum()
}

pub fn margin_loss(v: &Tensor, target: usize, cfg: &MarginLossConfig) -> Result<f64> {
    check_target(v.shape()[0], target)?;
    Ok(margin_loss_from_norms(&capsule_norms(v), target, cfg))
}

fn check_target(classes: usize, target: usize) -> Result<()> {
    if target >= classes {
        return Err(Error::contract(format!("target class {target} out of {classes}")));
    }
    Ok(())
}

/// Margin loss recorded on a tape for class capsules `v` (`K × d_k`).
pub fn margin_loss_on_tape(tape: &mut Tape<'_>, v: Var, target: usize, cfg: &MarginLossConfig) -> Result<Var> {
    let (k, _) = tape.value(v).dims2()?;
    check_target(k, target)?;
    let norms = tape.row_norms(v)?;

    let pos = tape.affine(norms, -1.0, cfg.pos_margin);
    let pos = tape.unary(pos, Unary::Relu);
    let pos = tape.unary(pos, Unary::Square);
    let neg = tape.affine(norms, 1.0, -cfg.neg_margin);
    let neg = tape.unary(neg, Unary::Relu);
    let neg = tape.unary(neg, Unary::Square);

    let one_hot: Vec<f64> = (0..k).map(|j| if j == target { 1.0 } else { 0.0 }).collect();
    let rest: Vec<f64> = one_hot.iter().map(|y| cfg.neg_weight * (1.0 - y)).collect();
    let y = tape.constant(Tensor::vector(one_hot));
    let not_y = tape.constant(Tensor::vector(rest));
    let pos = tape.mul(pos, y)?;
    let neg = tape.mul(neg, not_y)?;
    let terms = tape.add(pos, neg)?;
    Ok(tape.sum(terms))
}

/// Index of the longest norm (ties go to the lowest index) and that norm.
pub fn classify_norms(norms: &[f64]) -> (usize, f64) {
    let mut best = 0;
    for (k, &n) in norms.iter().enumerate() {
        if n > norms[best] {
            best = k;
        }
    }
    (best, norms[best])
}

/// Real/fake decision from two class capsules; ties go to real. Returns the winning norm as confidence.
pub fn classify(v: &Tensor) -> Result<(Label, f64)> {
    if v.shape().len() != 2 || v.shape()[0] != 2 {
        return Err(Error::contract(format!("classify needs 2 class capsules, got shape {:?}", v.shape())));
    }
    let (k, p) = classify_norms(&capsule_norms(v));
    let label = if k == 0 { Label::Real } else { Label::Fake };
    Ok((label, p))
}
