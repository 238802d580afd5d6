//! Score model: a small convolutional encoder-decoder trained with the
//! AR-DAE objective.

pub mod adamw;
pub mod checkpoint;
pub mod layers;
pub mod loss;
pub mod network;
mod real;
pub mod train;

pub use adamw::{AdamState, AdamW};
pub use checkpoint::{decode_network, encode_network, load_network, save_network};
pub use layers::Activation;
pub use loss::{ardae_loss, ardae_loss_with_noise, draw_noise, LossGrad, LossOptions, NoiseDraw};
pub use network::{Precision, ScoreNetwork, Topology};
pub use real::Real;
pub use train::{train, train_with, AnnealingSchedule, LrSchedule, TrainConfig, TrainReport};
