//! Metric tables over perturbation grids.

use std::collections::HashMap;

use rayon::prelude::*;

use super::transforms::{perturb, PerturbGrid, PerturbKind};
use crate::capsnet::{CapsModel, ModalityInputs};
use crate::error::{Error, Result};
use crate::features::{EmbeddingDataset, EmbeddingRecord, FreqPipeline, ImageBuffer};
use crate::trainer::{evaluate, MetricsReport};

/// One image with the record holding its visual/text embeddings and label.
#[derive(Clone, Debug)]
pub struct SweepItem {
    pub image: ImageBuffer,
    pub record: EmbeddingRecord,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub kind: PerturbKind,
    /// `None` marks the uniform mean over the kind's levels.
    pub level: Option<f64>,
    pub metrics: MetricsReport,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
}

impl SweepTable {
    pub const CSV_HEADER: &'static str = "kind,level,precision,recall,f1,accuracy";

    /// Appends the per-level rows of one kind followed by their uniform mean.
    fn push_kind(&mut self, kind: PerturbKind, per_level: Vec<(f64, MetricsReport)>) {
        let n = per_level.len() as f64;
        let mut mean = MetricsReport::default();
        for (level, m) in per_level {
            mean.precision += m.precision / n;
            mean.recall += m.recall / n;
            mean.f1 += m.f1 / n;
            mean.accuracy += m.accuracy / n;
            self.rows.push(SweepRow { kind, level: Some(level), metrics: m });
        }
        self.rows.push(SweepRow { kind, level: None, metrics: mean });
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("{}\n", Self::CSV_HEADER);
        for r in &self.rows {
            let level = r.level.map_or_else(|| "mean".to_string(), |l| format!("{l:.6}"));
            let m = &r.metrics;
            out.push_str(&format!(
                "{},{},{:.6},{:.6},{:.6},{:.6}\n",
                r.kind, level, m.precision, m.recall, m.f1, m.accuracy
            ));
        }
        out
    }

    pub fn level_rows(&self, kind: PerturbKind) -> impl Iterator<Item = &SweepRow> {
        self.rows.iter().filter(move |r| r.kind == kind && r.level.is_some())
    }

    pub fn mean_row(&self, kind: PerturbKind) -> Option<&SweepRow> {
        self.rows.iter().find(|r| r.kind == kind && r.level.is_none())
    }
}

/// Perturbs each image, recomputes only its frequency embedding and keeps
/// the record's visual and text vectors. Item `i` uses noise seed `seed + i`.
pub fn frequency_sweep(model: &CapsModel, items: &[SweepItem], grids: &[PerturbGrid], seed: u64) -> Result<SweepTable> {
    let mut pipelines: HashMap<(usize, usize), FreqPipeline> = HashMap::new();
    for it in items {
        let key = (it.image.height(), it.image.width());
        pipelines.entry(key).or_insert_with(|| FreqPipeline::new(key.0, key.1));
    }
    let mut table = SweepTable::default();
    for grid in grids {
        let mut per_level = Vec::with_capacity(grid.levels.len());
        for &level in &grid.levels {
            grid.kind.validate_level(level)?;
            let records: Vec<EmbeddingRecord> = items
                .par_iter()
                .enumerate()
                .map(|(i, it)| {
                    let img = perturb(&it.image, grid.kind, level, seed.wrapping_add(i as u64))?;
                    let pipeline = &pipelines[&(img.height(), img.width())];
                    let mut inputs = ModalityInputs::from_record(&it.record);
                    inputs.vectors[2] = pipeline.embed(&img)?;
                    Ok(inputs.to_record(it.record.id.clone(), it.record.label))
                })
                .collect::<Result<_>>()?;
            per_level.push((level, evaluate(model, &EmbeddingDataset::new(records))?));
        }
        table.push_kind(grid.kind, per_level);
    }
    Ok(table)
}

/// Evaluates externally re-extracted datasets, one per `(kind, level)`.
/// A missing dataset is a capability error: the visual and text encoders
/// are not available in-process.
pub fn full_pipeline_sweep(
    model: &CapsModel,
    grids: &[PerturbGrid],
    mut lookup: impl FnMut(PerturbKind, f64) -> Result<Option<EmbeddingDataset>>,
) -> Result<SweepTable> {
    let mut table = SweepTable::default();
    for grid in grids {
        let mut per_level = Vec::with_capacity(grid.levels.len());
        for &level in &grid.levels {
            let ds = lookup(grid.kind, level)?.ok_or_else(|| {
                Error::Capability(format!(
                    "full-pipeline sweep needs re-extracted embeddings for {} at level {level}",
                    grid.kind
                ))
            })?;
            per_level.push((level, evaluate(model, &ds)?));
        }
        table.push_kind(grid.kind, per_level);
    }
    Ok(table)
}

/// File name the full-pipeline sweep expects for one grid point.
pub fn reextracted_file_name(kind: PerturbKind, level: f64) -> String {
    format!("{kind}_{level}.emb1")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::capsnet::ModelConfig;
    use crate::features::{freq_embed, Label};
    use crate::synthetic::textured_image;

    fn model() -> CapsModel {
        let cfg = ModelConfig {
            capsules_per_modality: 2,
            capsule_dim: 2,
            class_dim: 3,
            ..Default::default()
        };
        CapsModel::init(cfg, 8).unwrap()
    }

    fn items(n: usize) -> Vec<SweepItem> {
        (0..n)
            .map(|i| {
                let image = textured_image(12, 10, 3, i as u64);
                let freq = freq_embed(&image).unwrap();
                let label = if i % 2 == 0 { Label::Fake } else { Label::Real };
                let inputs = ModalityInputs::new(vec![0.01 * i as f64; 768], vec![-0.01; 768], freq);
                SweepItem { image, record: inputs.to_record(format!("img{i}"), label) }
            })
            .collect()
    }

    #[test]
    fn identity_levels_reproduce_clean_evaluation() {
        let model = model();
        let items = items(6);
        let clean = evaluate(&model, &EmbeddingDataset::new(items.iter().map(|i| i.record.clone()).collect())).unwrap();
        let grids: Vec<PerturbGrid> = PerturbKind::ALL
            .into_iter()
            .filter(|k| !k.identity_level().is_nan())
            .map(|k| PerturbGrid::new(k, vec![k.identity_level()]).unwrap())
            .collect();
        let table = frequency_sweep(&model, &items, &grids, 0).unwrap();
        for row in &table.rows {
            assert_eq!(row.metrics.f1, clean.f1);
            assert_eq!(row.metrics.accuracy, clean.accuracy);
        }
    }

    #[test]
    fn table_has_one_row_per_level_plus_mean() {
        let grids = vec![PerturbGrid::default_for(PerturbKind::GaussianBlur), PerturbGrid::default_for(PerturbKind::ColorJitter)];
        let table = frequency_sweep(&model(), &items(2), &grids, 1).unwrap();
        assert_eq!(table.rows.len(), 5 + 1 + 4 + 1);
        let csv = table.to_csv();
        assert!(csv.starts_with("kind,level,precision,recall,f1,accuracy\n"));
        assert!(csv.contains("gaussian_blur,0.500000,"));
        assert!(csv.contains("color_jitter,mean,"));
        let mean = table.mean_row(PerturbKind::GaussianBlur).unwrap().metrics.f1;
        let direct: f64 = table.level_rows(PerturbKind::GaussianBlur).map(|r| r.metrics.f1).sum::<f64>() / 5.0;
        assert!((mean - direct).abs() < 1e-9);
    }

    #[test]
    fn missing_reextraction_is_a_capability_error() {
        let grids = vec![PerturbGrid::default_for(PerturbKind::Jpeg)];
        let err = full_pipeline_sweep(&model(), &grids, |_, _| Ok(None)).unwrap_err();
        assert!(matches!(err, Error::Capability(_)));
        assert_eq!(reextracted_file_name(PerturbKind::Jpeg, 50.0), "jpeg_50.emb1");
    }
}
