//! Small differentiable-network engine: tensors, layers with exact
//! backpropagation, Adam, WGAN and regressor training, checkpoints.

mod adam;
mod checkpoint;
mod layers;
mod network;
mod regress;
mod tensor;
mod wgan;

pub use adam::Adam;
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, FORMAT_VERSION, MAGIC};
pub use layers::{Layer, LayerSpec};
pub use network::{Architecture, Network};
pub use regress::{
    evaluate_r_squared, predict_normalized, predict_props, r_squared, train_cnn, CnnConfig, LossRow, Normalizer, Split,
    TrainedRegressor,
};
pub use tensor::Tensor;
pub use wgan::{
    critic_loss, generate, generate_soft, latent_input, train_wgan, wasserstein_tail_slope, Role, Wgan, WganConfig,
    WganTraceRow, LATENT_DIM, LATENT_MAX,
};
