use std::fmt;

use crate::features::Label;

/// Confusion counts with fake as the positive class, and the derived
/// percentages. Any 0/0 ratio is 0.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct MetricsReport {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub accuracy: f64,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl MetricsReport {
    pub const CSV_HEADER: &'static str = "tp,fp,fn,tn,precision,recall,f1,accuracy";

    pub fn from_counts(tp: usize, fp: usize, fn_: usize, tn: usize) -> Self {
        let p = ratio(tp, tp + fp);
        let r = ratio(tp, tp + fn_);
        let f1 = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
        MetricsReport {
            tp,
            fp,
            fn_,
            tn,
            precision: 100.0 * p,
            recall: 100.0 * r,
            f1: 100.0 * f1,
            accuracy: 100.0 * ratio(tp + tn, tp + fp + fn_ + tn),
        }
    }

    /// Tallies `(truth, prediction)` pairs.
    pub fn from_pairs(pairs: impl IntoIterator<Item = (Label, Label)>) -> Self {
        let (mut tp, mut fp, mut fn_, mut tn) = (0, 0, 0, 0);
        for pair in pairs {
            match pair {
                (Label::Fake, Label::Fake) => tp += 1,
                (Label::Real, Label::Fake) => fp += 1,
                (Label::Fake, Label::Real) => fn_ += 1,
                (Label::Real, Label::Real) => tn += 1,
            }
        }
        Self::from_counts(tp, fp, fn_, tn)
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{:.6},{:.6},{:.6},{:.6}",
            self.tp, self.fp, self.fn_, self.tn, self.precision, self.recall, self.f1, self.accuracy
        )
    }
}

impl fmt::Display for MetricsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "records   {}", self.total())?;
        writeln!(f, "confusion tp={} fp={} fn={} tn={}", self.tp, self.fp, self.fn_, self.tn)?;
        writeln!(f, "precision {:6.2}%", self.precision)?;
        writeln!(f, "recall    {:6.2}%", self.recall)?;
        writeln!(f, "f1        {:6.2}%", self.f1)?;
        write!(f, "accuracy  {:6.2}%", self.accuracy)
    }
}
