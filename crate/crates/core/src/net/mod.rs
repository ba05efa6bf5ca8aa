//! The 2D classifier backbone: tensors, a small CNN with manual gradients,
//! Adam with a step schedule, training and accuracy metrics.

mod checkpoint;
mod optim;
mod tensor;
mod tinynet;
mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint, write_loss_csv, CheckpointManifest};
pub use optim::{adam_update, lr_at, AdamState};
pub use tensor::Tensor;
pub use tinynet::{
    argmax, softmax_cross_entropy, ForwardCache, LossGrad, Param, TinyNet, MIN_INPUT_SIDE, WIDTH,
};
pub use train::{evaluate, train, Dataset, Evaluation, TrainConfig, TrainOutcome};
