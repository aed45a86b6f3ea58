//! One-dimensional CNN gait classifier.
//!
//! Architecture: `conv_layers` strided valid convolutions (SELU after each),
//! flatten, alpha dropout, a SELU dense layer, alpha dropout, and a softmax
//! output layer. Everything runs in `f64` on the CPU; forward pass,
//! backpropagation and Adam are implemented here directly.

mod adam;
mod checkpoint;
mod layers;
mod linalg;
mod network;
mod params;
mod train;

pub use adam::{adam_step, AdamState};
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
pub use layers::{
    alpha_dropout, conv1d_forward, conv_output_len, selu, selu_derivative, softmax, DropoutMask,
    SELU_ALPHA, SELU_LAMBDA,
};
pub use network::{
    forward, last_conv_logit_gradient, logits_from_last_conv, loss_and_gradients, predict,
    DropoutMode, ForwardCache, Prediction,
};
pub use params::{ConvLayer, Dense, ModelConfig, ModelParams};
pub use train::{
    init_params, stratified_split, train, train_with_progress, EpochMetrics, TrainConfig,
    TrainOutcome,
};

/// Random generator used for initialization, shuffling and dropout.
pub type ModelRng = rand_chacha::ChaCha8Rng;
