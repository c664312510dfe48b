//! Convolutional and fully-connected networks trained with minibatch SGD,
//! momentum and inverted dropout, plus softmax-head removal for feature
//! extraction.

mod arch;
mod layers;
mod network;

pub use arch::{
    build_architecture, ArchitectureSpec, InputShape, LayerSpec, MomentumKind, DROPOUT_RATE, FILTER_COUNT,
    FILTER_SIZE, HIDDEN_UNITS, IMAGE_LEARNING_RATE, MOMENTUM, NUMERIC_LEARNING_RATE,
};
pub use layers::{categorical_cross_entropy, conv2d_forward, conv2d_preactivation, maxpool_forward, softmax};
pub use network::{
    continue_training, extract_dataset, extract_features, sgd_momentum_step, train, train_with_history,
    Activations, DropoutMasks, FeatureExtractor, Gradients, LayerParams, Mode, TrainConfig, TrainedNetwork,
    BATCH_SIZE,
};

#[cfg(test)]
mod tests;
