//! L1 training of the upsampler with Adam, checkpointing and fine-tuning.

mod adam;
mod config;
mod trainer;

pub use adam::{Adam, ADAM_EPSILON};
pub use config::TrainConfig;
pub use trainer::{
    epoch_checkpoint_name, finetune, l1_loss, train, Trainer, BEST_CHECKPOINT, FINAL_CHECKPOINT, LOG_COLUMNS,
    LOG_FILE,
};

#[cfg(test)]
mod tests;
