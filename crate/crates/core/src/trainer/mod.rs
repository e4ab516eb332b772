//! Classifier, objective, optimizer and training loop.

mod loss;
mod optim;
mod params;
mod train;

pub use loss::{
    loss_id, loss_id_grad, loss_ood, loss_ood_grad, total_loss, LossBatch, LossBreakdown, LossWeights,
};
pub use optim::AdamW;
pub use params::{Activation, Checkpoint, ForwardTrace, ModelParams};
pub use train::{
    predict, score_inputs, train, write_history, EpochRecord, Mode, TrainConfig, TrainData, TrainOutcome,
    TrainStats,
};
