//! Neural side of the gesture generator: a candle model conditioned on
//! speech and user controls, differentiable style statistics, the FGD
//! feature extractor, training and checkpoints.

pub mod checkpoint;
pub mod error;
pub mod extractor;
pub mod layers;
pub mod model;
pub mod style;
pub mod train;

pub use checkpoint::Checkpoint;
pub use error::{NnError, Result};
pub use model::{GeneratorModel, ModelConfig};
pub use train::{train, TrainConfig};
