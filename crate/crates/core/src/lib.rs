//! Self-supervised pre-training of graph encoders with redundancy-reduction
//! objectives, plus the linear-evaluation protocol used to score them.

pub mod augment;
pub mod encoder;
pub mod error;
pub mod eval;
pub mod graph;
pub mod losses;
pub mod rng;
pub mod tensor;
pub mod trainer;
pub mod tudataset;

pub use error::{Error, Result};
pub use encoder::{init_params, Checkpoint, EncoderConfig, ModelParams};
pub use graph::{batch_graphs, Dataset, Graph, GraphBatch, Violation};
pub use tensor::{Tape, Tensor, Var};
pub use losses::{CovarianceMode, LossKind, LossParams};
pub use eval::{EvalReport, ProbeConfig};
pub use trainer::{pretrain, TrainConfig, TrainResult};
