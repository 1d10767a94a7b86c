//! Physics-informed graph-network forecaster: graph-convolution model,
//! three-term loss with a material-balance residual, and Adam training with
//! clipping, early stopping, and seed ensembles.

mod loss;
mod model;
mod train;

pub use loss::{
    loss_at, loss_gradient, physics_residual, time_derivative_at, time_derivative_gradient,
    total_loss, LossConfig, MIN_PRODUCTIVITY,
};
pub use model::{
    forward_scaled, gcn_forward, normalized_adjacency, predict, Activation, AdjacencySource,
    ForwardOutput, GcnLayer, ModelConfig, PiGnnModel, Prediction, ScaledInputs,
    POSITIVITY_FLOOR, SCALED_INPUT_BAND,
};
pub use train::{
    average_connectivity, ensemble_predict, load_run, save_run, train, train_ensemble, Ensemble,
    EpochRecord, TrainConfig, TrainReport,
};
