//! Saliency maps, coupling histograms and capsule exports.

mod routing;
mod saliency;

pub use routing::{
    bin_index, coupling_rows_csv, export_capsules_csv, parse_capsule_csv, routing_histogram, CapsuleRow,
    CouplingClass, RoutingHistogram,
};
pub use saliency::{confidence, confidence_and_gradient, parse_raw_saliency, saliency, saliency_with, SaliencyMap};
