//! TOML run configuration. Every key is optional and falls back to the
//! library default; unknown keys are rejected.
//!
//! ```toml
//! seed = 42
//!
//! [model]
//! embed_dim = 768
//! capsules_per_modality = 64
//! capsule_dim = 8
//! classes = 2
//! class_dim = 64
//! routing_iters = 3
//! modality_mask = "visual,text,frequency"
//! detach_couplings = false
//!
//! [train]
//! learning_rate = 1e-4
//! batch_size = 64
//! max_epochs = 30
//! early_stop_patience = 5
//! weight_decay = 0.01
//! beta1 = 0.9
//! beta2 = 0.999
//! adam_eps = 1e-8
//!
//! [margin]
//! pos_margin = 0.9
//! neg_margin = 0.1
//! neg_weight = 0.5
//!
//! [attack]
//! eta = 0.005
//! epsilon = 0.005
//! step = 0.008
//! iters = 10
//! space = "embedding"
//!
//! # levels per perturbation kind; kinds left out keep their defaults
//! [perturb]
//! jpeg = [10, 30, 50, 70, 90]
//!
//! [paths]
//! train = "train.emb1"
//! val = "val.emb1"
//! test = "test.emb1"
//! checkpoint = "model.cps"
//! history = "history.csv"
//! reextracted_dir = "reextracted"
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::capsnet::{MarginLossConfig, ModelConfig};
use crate::error::{Error, Result};
use crate::robustness::{AttackConfig, PerturbGrid, PerturbKind};
use crate::trainer::TrainConfig;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelSection {
    embed_dim: Option<usize>,
    capsules_per_modality: Option<usize>,
    capsule_dim: Option<usize>,
    classes: Option<usize>,
    class_dim: Option<usize>,
    routing_iters: Option<usize>,
    modality_mask: Option<String>,
    detach_couplings: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct TrainSection {
    learning_rate: Option<f64>,
    batch_size: Option<usize>,
    max_epochs: Option<usize>,
    early_stop_patience: Option<usize>,
    weight_decay: Option<f64>,
    beta1: Option<f64>,
    beta2: Option<f64>,
    adam_eps: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct MarginSection {
    pos_margin: Option<f64>,
    neg_margin: Option<f64>,
    neg_weight: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct AttackSection {
    eta: Option<f64>,
    epsilon: Option<f64>,
    step: Option<f64>,
    iters: Option<usize>,
    space: Option<String>,
}

/// File locations used when the matching command-line argument is absent.
#[derive(Clone, Debug, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Paths {
    pub train: Option<PathBuf>,
    pub val: Option<PathBuf>,
    pub test: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub history: Option<PathBuf>,
    pub reextracted_dir: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RunFile {
    seed: Option<u64>,
    #[serde(default)]
    model: ModelSection,
    #[serde(default)]
    train: TrainSection,
    #[serde(default)]
    margin: MarginSection,
    #[serde(default)]
    attack: AttackSection,
    #[serde(default)]
    perturb: BTreeMap<String, Vec<f64>>,
    #[serde(default)]
    paths: Paths,
}

/// Resolved configuration for one command.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub model: ModelConfig,
    /// `train.seed` and `train.margin` mirror `seed` and `margin`.
    pub train: TrainConfig,
    pub margin: MarginLossConfig,
    pub attack: AttackConfig,
    /// One grid per kind, in [`PerturbKind::ALL`] order.
    pub grids: Vec<PerturbGrid>,
    pub paths: Paths,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            margin: MarginLossConfig::default(),
            attack: AttackConfig::default(),
            grids: PerturbGrid::defaults(),
            paths: Paths::default(),
        }
    }
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let file: RunFile = toml::from_str(text).map_err(|e| Error::config(e.message().to_string()))?;
        let mut cfg = RunConfig::default();
        set(&mut cfg.seed, file.seed);

        let (m, s) = (&mut cfg.model, file.model);
        set(&mut m.embed_dim, s.embed_dim);
        set(&mut m.capsules_per_modality, s.capsules_per_modality);
        set(&mut m.capsule_dim, s.capsule_dim);
        set(&mut m.classes, s.classes);
        set(&mut m.class_dim, s.class_dim);
        set(&mut m.routing_iters, s.routing_iters);
        set(&mut m.detach_couplings, s.detach_couplings);
        if let Some(mask) = s.modality_mask {
            m.modality_mask = mask.parse()?;
        }

        let (t, s) = (&mut cfg.train, file.train);
        set(&mut t.learning_rate, s.learning_rate);
        set(&mut t.batch_size, s.batch_size);
        set(&mut t.max_epochs, s.max_epochs);
        set(&mut t.early_stop_patience, s.early_stop_patience);
        set(&mut t.weight_decay, s.weight_decay);
        set(&mut t.beta1, s.beta1);
        set(&mut t.beta2, s.beta2);
        set(&mut t.adam_eps, s.adam_eps);

        let (g, s) = (&mut cfg.margin, file.margin);
        set(&mut g.pos_margin, s.pos_margin);
        set(&mut g.neg_margin, s.neg_margin);
        set(&mut g.neg_weight, s.neg_weight);

        let (a, s) = (&mut cfg.attack, file.attack);
        set(&mut a.eta, s.eta);
        set(&mut a.epsilon, s.epsilon);
        set(&mut a.step, s.step);
        set(&mut a.iters, s.iters);
        if let Some(space) = s.space {
            a.space = space.parse()?;
        }

        for (name, levels) in file.perturb {
            let kind: PerturbKind = name.parse()?;
            let grid = PerturbGrid::new(kind, levels)?;
            let slot = cfg.grids.iter_mut().find(|g| g.kind == kind).expect("every kind has a grid");
            *slot = grid;
        }
        cfg.paths = file.paths;
        let seed = cfg.seed;
        cfg.with_seed(seed)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(msg) => Error::config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    /// Sets the seed everywhere it is used and validates the result.
    pub fn with_seed(mut self, seed: u64) -> Result<Self> {
        self.seed = seed;
        self.train.seed = seed;
        self.train.margin = self.margin;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.train.validate()?;
        self.margin.validate()?;
        self.attack.validate()
    }

    pub fn grid(&self, kind: PerturbKind) -> &PerturbGrid {
        self.grids.iter().find(|g| g.kind == kind).expect("every kind has a grid")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::capsnet::ModalityMask;
    use crate::robustness::AttackSpace;

    #[test]
    fn empty_file_gives_defaults() {
        assert_eq!(RunConfig::from_toml_str("").unwrap(), RunConfig::default());
    }

    #[test]
    fn documented_example_parses() {
        let doc: String = include_str!("config.rs")
            .lines()
            .take_while(|l| l.starts_with("//!"))
            .skip_while(|l| !l.contains("```toml"))
            .skip(1)
            .take_while(|l| !l.contains("```"))
            .map(|l| l.trim_start_matches("//!").trim_start())
            .collect::<Vec<_>>()
            .join("\n");
        let cfg = RunConfig::from_toml_str(&doc).unwrap();
        assert_eq!(cfg.seed, 42);
        assert_eq!(cfg.train.seed, 42);
        assert_eq!(cfg.model, ModelConfig::default());
        assert_eq!(cfg.attack, AttackConfig::default());
        assert_eq!(cfg.grids, PerturbGrid::defaults());
        assert_eq!(cfg.paths.checkpoint.as_deref(), Some(Path::new("model.cps")));
    }

    #[test]
    fn overrides_apply() {
        let cfg = RunConfig::from_toml_str(
            "seed = 3\n[model]\nmodality_mask = \"visual,text\"\n[margin]\nneg_weight = 0.25\n\
             [attack]\nspace = \"image-frequency\"\n[perturb]\nblur = [1.0]\n",
        )
        .unwrap();
        assert_eq!(cfg.model.modality_mask, "visual,text".parse::<ModalityMask>().unwrap());
        assert_eq!(cfg.train.margin.neg_weight, 0.25);
        assert_eq!(cfg.attack.space, AttackSpace::ImageFrequency);
        assert_eq!(cfg.grid(PerturbKind::GaussianBlur).levels, vec![1.0]);
        assert_eq!(cfg.grid(PerturbKind::Jpeg), &PerturbGrid::default_for(PerturbKind::Jpeg));
    }

    #[test]
    fn rejects_bad_input() {
        let bad = [
            "sed = 1",
            "[model]\nwidth = 3",
            "[model]\nmodality_mask = \"none\"",
            "[train]\nbatch_size = 0",
            "[perturb]\njpeg = [0.5]",
            "[perturb]\nswirl = [1.0]",
            "[attack]\neta = -1.0",
            "seed = \"x\"",
            "[model",
        ];
        for text in bad {
            assert!(matches!(RunConfig::from_toml_str(text), Err(Error::Config(_))), "{text}");
        }
    }
}
