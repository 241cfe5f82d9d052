//! Minimal deterministic layer engine: forward pass, exact gradients and SGD.

pub mod arch;
mod layer;
mod loss;
mod network;
pub mod serialize;
mod train;

pub use arch::{Architecture, LayerSpec};
pub use layer::{Layer, Padding};
pub use loss::{Batch, LossKind, OutputLoss, TargetLoss, Targets};
pub use network::{Gradients, Network, ParamInfo, ParamRole};
pub use train::{train, TrainConfig};

pub(crate) use train::epoch_order;
