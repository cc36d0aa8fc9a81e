use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::features::EMBED_DIM;

/// Input modality, in capsule stacking order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Modality {
    Visual,
    Text,
    Frequency,
}

impl Modality {
    pub const ALL: [Modality; 3] = [Modality::Visual, Modality::Text, Modality::Frequency];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Modality::Visual => "visual",
            Modality::Text => "text",
            Modality::Frequency => "frequency",
        }
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Modality {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "visual" | "v" => Ok(Modality::Visual),
            "text" | "t" => Ok(Modality::Text),
            "frequency" | "freq" | "f" => Ok(Modality::Frequency),
            other => Err(Error::config(format!("unknown modality {other:?}"))),
        }
    }
}

/// Subset of enabled modalities. May be empty as a value; [`ModelConfig::validate`] rejects that.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ModalityMask(u8);

impl ModalityMask {
    pub const ALL: ModalityMask = ModalityMask(0b111);
    pub const NONE: ModalityMask = ModalityMask(0);

    pub fn from_bits(bits: u8) -> Result<Self> {
        if bits & !0b111 != 0 {
            return Err(Error::config(format!("modality mask bits {bits:#b} out of range")));
        }
        Ok(ModalityMask(bits))
    }

    pub fn bits(self) -> u8 {
        self.0
    }

    pub fn only(m: Modality) -> Self {
        ModalityMask(1 << m.index())
    }

    pub fn with(self, m: Modality) -> Self {
        ModalityMask(self.0 | 1 << m.index())
    }

    pub fn without(self, m: Modality) -> Self {
        ModalityMask(self.0 & !(1 << m.index()))
    }

    pub fn contains(self, m: Modality) -> bool {
        self.0 & (1 << m.index()) != 0
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn enabled(self) -> impl Iterator<Item = Modality> {
        Modality::ALL.into_iter().filter(move |m| self.contains(*m))
    }
}

impl Default for ModalityMask {
    fn default() -> Self {
        ModalityMask::ALL
    }
}

impl fmt::Display for ModalityMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<_> = self.enabled().map(Modality::name).collect();
        if names.is_empty() {
            f.write_str("none")
        } else {
            f.write_str(&names.join(","))
        }
    }
}

/// Parses comma-separated modality names, e.g. `visual,text,frequency`.
/// `none` and the empty string give the empty mask.
impl FromStr for ModalityMask {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.is_empty() || s.eq_ignore_ascii_case("none") {
            return Ok(ModalityMask::NONE);
        }
        s.split(',')
            .map(str::parse::<Modality>)
            .try_fold(ModalityMask::NONE, |mask, m| Ok(mask.with(m?)))
    }
}

/// Shape hyperparameters of the capsule model.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ModelConfig {
    /// Per-modality embedding width `d`.
    pub embed_dim: usize,
    /// Capsules per modality `N`.
    pub capsules_per_modality: usize,
    /// Input capsule dimension `d_i`.
    pub capsule_dim: usize,
    /// Class capsules `K`.
    pub classes: usize,
    /// Class capsule dimension `d_k`.
    pub class_dim: usize,
    /// Routing iterations `R`.
    pub routing_iters: usize,
    pub modality_mask: ModalityMask,
    /// Stop gradients through the coupling coefficients.
    pub detach_couplings: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            embed_dim: EMBED_DIM,
            capsules_per_modality: 64,
            capsule_dim: 8,
            classes: 2,
            class_dim: 64,
            routing_iters: 3,
            modality_mask: ModalityMask::ALL,
            detach_couplings: false,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("embed_dim", self.embed_dim),
            ("capsules_per_modality", self.capsules_per_modality),
            ("capsule_dim", self.capsule_dim),
            ("class_dim", self.class_dim),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::config(format!("{name} must be positive")));
            }
        }
        if self.routing_iters < 1 {
            return Err(Error::config("routing_iters must be at least 1"));
        }
        if self.classes < 2 {
            return Err(Error::config("classes must be at least 2"));
        }
        if self.modality_mask.is_empty() {
            return Err(Error::config("modality mask enables no modality"));
        }
        Ok(())
    }

    /// Total input capsules `3N`.
    pub fn input_capsules(&self) -> usize {
        3 * self.capsules_per_modality
    }

    /// Encoder output width `N · d_i`.
    pub fn encoder_width(&self) -> usize {
        self.capsules_per_modality * self.capsule_dim
    }

    /// Rows of the stacked capsule matrix owned by `m`.
    pub fn rows_of(&self, m: Modality) -> std::ops::Range<usize> {
        let n = self.capsules_per_modality;
        m.index() * n..(m.index() + 1) * n
    }

    pub fn route_shape(&self) -> [usize; 4] {
        [self.input_capsules(), self.classes, self.capsule_dim, self.class_dim]
    }

    pub fn parameter_count(&self) -> usize {
        3 * self.embed_dim * self.encoder_width() + self.route_shape().iter().product::<usize>()
    }
}

/// Margins of the capsule loss: `ν` for the true class, `μ` for the others,
/// `λ` down-weights the other classes.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MarginLossConfig {
    pub pos_margin: f64,
    pub neg_margin: f64,
    pub neg_weight: f64,
}

impl Default for MarginLossConfig {
    fn default() -> Self {
        MarginLossConfig {
            pos_margin: 0.9,
            neg_margin: 0.1,
            neg_weight: 0.5,
        }
    }
}

impl MarginLossConfig {
    pub fn validate(&self) -> Result<()> {
        let (nu, mu) = (self.pos_margin, self.neg_margin);
        if !(0.0 <= mu && mu < nu && nu <= 1.0) {
            return Err(Error::config(format!("margins need 0 <= mu < nu <= 1, got mu={mu} nu={nu}")));
        }
        if !(self.neg_weight > 0.0) {
            return Err(Error::config("neg_weight must be positive"));
        }
        Ok(())
    }
}
