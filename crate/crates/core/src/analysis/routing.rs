//! Coupling-coefficient histograms, per-capsule routing rows and capsule exports.

use std::fmt::Write as _;

use rayon::prelude::*;

use crate::capsnet::{classify_norms, capsule_norms, CapsModel, Modality, ModalityInputs, RoutingTrace};
use crate::error::{Error, Result};
use crate::features::EmbeddingDataset;

/// Which coupling column a histogram counts.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CouplingClass {
    /// The class capsule the record is assigned to.
    Predicted,
    Fixed(usize),
}

/// Bin of `alpha` among `bins` equal bins over `[0, 1]`; 1.0 falls in the last.
pub fn bin_index(alpha: f64, bins: usize) -> usize {
    ((alpha * bins as f64).floor().max(0.0) as usize).min(bins - 1)
}

#[derive(Clone, Debug, PartialEq)]
pub struct RoutingHistogram {
    pub bins: usize,
    /// Counts per modality, visual, text, frequency.
    pub counts: [Vec<u64>; 3],
}

impl RoutingHistogram {
    pub const CSV_HEADER: &'static str = "modality,bin_lo,bin_hi,count";

    pub fn new(bins: usize) -> Result<Self> {
        if bins == 0 {
            return Err(Error::config("histogram needs at least one bin"));
        }
        Ok(RoutingHistogram { bins, counts: [(); 3].map(|_| vec![0; bins]) })
    }

    pub fn edges(&self, bin: usize) -> (f64, f64) {
        (bin as f64 / self.bins as f64, (bin + 1) as f64 / self.bins as f64)
    }

    pub fn total(&self, m: Modality) -> u64 {
        self.counts[m.index()].iter().sum()
    }

    /// Adds the final-iteration couplings of one trace.
    pub fn add_trace(&mut self, trace: &RoutingTrace, rows_per_modality: usize, class: CouplingClass) -> Result<()> {
        let alpha = trace.final_couplings();
        let k = match class {
            CouplingClass::Predicted => classify_norms(&capsule_norms(trace.output())).0,
            CouplingClass::Fixed(k) => k,
        };
        let (rows, classes) = alpha.dims2()?;
        if k >= classes || rows != 3 * rows_per_modality {
            return Err(Error::contract(format!("coupling matrix {rows}x{classes} does not fit class {k}")));
        }
        for i in 0..rows {
            let m = i / rows_per_modality;
            self.counts[m][bin_index(alpha.row(i)[k], self.bins)] += 1;
        }
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("{}\n", Self::CSV_HEADER);
        for m in Modality::ALL {
            for (b, c) in self.counts[m.index()].iter().enumerate() {
                let (lo, hi) = self.edges(b);
                writeln!(out, "{m},{lo:.6},{hi:.6},{c}").expect("string write");
            }
        }
        out
    }
}

fn traces(model: &CapsModel, ds: &EmbeddingDataset) -> Result<Vec<RoutingTrace>> {
    ds.records
        .par_iter()
        .map(|r| Ok(model.infer(&ModalityInputs::from_record(r))?.trace))
        .collect()
}

/// Final-iteration coupling histogram per source modality.
pub fn routing_histogram(model: &CapsModel, ds: &EmbeddingDataset, bins: usize, class: CouplingClass) -> Result<RoutingHistogram> {
    let mut hist = RoutingHistogram::new(bins)?;
    let n = model.config().capsules_per_modality;
    for trace in traces(model, ds)? {
        hist.add_trace(&trace, n, class)?;
    }
    Ok(hist)
}

/// One row per input capsule and record: final-iteration couplings to every class.
pub fn coupling_rows_csv(model: &CapsModel, ds: &EmbeddingDataset) -> Result<String> {
    let cfg = model.config();
    let mut out = String::from("record_id,input_capsule,modality");
    for k in 0..cfg.classes {
        write!(out, ",alpha_{k}").expect("string write");
    }
    out.push('\n');
    for (rec, trace) in ds.iter().zip(traces(model, ds)?) {
        let alpha = trace.final_couplings();
        for i in 0..cfg.input_capsules() {
            let m = Modality::ALL[i / cfg.capsules_per_modality];
            write!(out, "{},{i},{m}", rec.id).expect("string write");
            for a in alpha.row(i) {
                write!(out, ",{a:.6}").expect("string write");
            }
            out.push('\n');
        }
    }
    Ok(out)
}

/// Predictions `Û` (iteration −1, once per record) and class capsules per
/// iteration (input capsule −1), one vector per row. Values are written as
/// shortest round-trip `f32` decimals.
pub fn export_capsules_csv(model: &CapsModel, ds: &EmbeddingDataset) -> Result<String> {
    let cfg = model.config();
    let mut out = String::from("record_id,iteration,input_capsule,class");
    for j in 0..cfg.class_dim {
        write!(out, ",x{j}").expect("string write");
    }
    out.push('\n');
    let push_row = |out: &mut String, id: &str, iter: i64, cap: i64, class: usize, v: &[f64]| {
        write!(out, "{id},{iter},{cap},{class}").expect("string write");
        for &x in v {
            write!(out, ",{}", x as f32).expect("string write");
        }
        out.push('\n');
    };
    for (rec, trace) in ds.iter().zip(traces(model, ds)?) {
        let dk = cfg.class_dim;
        for i in 0..cfg.input_capsules() {
            for k in 0..cfg.classes {
                let off = (i * cfg.classes + k) * dk;
                push_row(&mut out, &rec.id, -1, i as i64, k, &trace.votes.data()[off..off + dk]);
            }
        }
        for (r, v) in trace.class_capsules.iter().enumerate() {
            for k in 0..cfg.classes {
                push_row(&mut out, &rec.id, r as i64, -1, k, v.row(k));
            }
        }
    }
    Ok(out)
}

/// One parsed row of [`export_capsules_csv`].
#[derive(Clone, Debug, PartialEq)]
pub struct CapsuleRow {
    pub record_id: String,
    pub iteration: i64,
    pub input_capsule: i64,
    pub class: usize,
    pub values: Vec<f32>,
}

pub fn parse_capsule_csv(text: &str) -> Result<Vec<CapsuleRow>> {
    let mut lines = text.lines();
    lines.next().ok_or_else(|| Error::format(None, "missing header"))?;
    lines
        .enumerate()
        .map(|(n, line)| {
            let bad = || Error::format(Some(n), "malformed capsule row");
            let mut f = line.split(',');
            let record_id = f.next().ok_or_else(bad)?.to_string();
            let iteration = f.next().and_then(|s| s.parse().ok()).ok_or_else(bad)?;
            let input_capsule = f.next().and_then(|s| s.parse().ok()).ok_or_else(bad)?;
            let class = f.next().and_then(|s| s.parse().ok()).ok_or_else(bad)?;
            let values = f.map(|s| s.parse::<f32>().map_err(|_| bad())).collect::<Result<_>>()?;
            Ok(CapsuleRow { record_id, iteration, input_capsule, class, values })
        })
        .collect()
}
