//! Two-stage training: reconstruction-only initialization, then the full
//! adversarial objective.

pub mod checkpoint;
pub mod data;
pub mod log;
pub mod trainer;

pub use checkpoint::{read_checkpoint, save_checkpoint, Checkpoint, CheckpointKind, CheckpointMeta};
pub use data::{Batch, ClipStore};
pub use trainer::{RunSummary, Trainer};
