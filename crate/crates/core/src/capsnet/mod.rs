//! Multimodal capsule network: per-modality encoders, dynamic routing to
//! class capsules, margin loss and checkpoints.

mod checkpoint;
mod config;
mod loss;
mod model;
mod routing;

pub use checkpoint::{
    checkpoint_from_bytes, checkpoint_to_bytes, load_checkpoint, save_checkpoint, CPS1_MAGIC, CPS1_VERSION,
};
pub use config::{MarginLossConfig, Modality, ModalityMask, ModelConfig};
pub use loss::{capsule_norms, classify, classify_norms, margin_loss, margin_loss_from_norms, margin_loss_on_tape};
pub use model::{BoundModel, CapsModel, Forward, Inference, ModalityInputs, ParamGrads};
pub use routing::{route, route_on_tape, squash, RoutingTrace, RoutingVars};
