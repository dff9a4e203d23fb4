//! Training and evaluation harness.

pub mod adam;
pub mod augment;
pub mod batch;
pub mod config;
pub mod data;
pub mod eval;
pub mod gradcheck;
pub mod mix;
pub mod run;

pub use adam::Adam;
pub use augment::{augment, AugmentParams, TrainWindow};
pub use batch::{window_loss, SequenceBatch};
pub use config::{fingerprint, AugmentConfig, EarlyStop, MixConfig, MixRatio, RotationAug, TrainConfig};
pub use eval::{evaluate, evaluate_params, predict_trajectory, predict_windows, save_prediction, CapProtocol, EvalOutcome, FramePrediction};
pub use gradcheck::{check_loss_gradient, GradProbe};
pub use mix::{mix_sampler, SampleRef};
pub use run::{train, EpochRecord, StepRecord, StopReason, TrainOutcome};

#[cfg(test)]
mod tests;
