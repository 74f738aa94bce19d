//! Recognition network: two per-frame linear layers, a GRU whose final hidden state
//! summarises the window, and a two-layer linear head. Everything runs in f64 with
//! hand-written backpropagation through time.

pub mod adam;
pub mod gradcheck;
pub mod io;
pub mod loss;
pub mod model;
pub mod train;

use ndarray::{Array1, ArrayView2};
use thiserror::Error;

use crate::features::Encoding;

pub use adam::{adam_step, AdamState};
pub use loss::{argmax, cross_entropy, softmax};
pub use model::{batch_loss_grad, ForwardCache, Gru, Linear, ModelConfig, Network};
pub use train::{
    accuracy, predict, predict_all, train, train_split, EpochStats, Sample, Split, TrainOptions,
    TrainReport,
};

#[derive(Debug, Error)]
pub enum NnError {
    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: String, got: String },
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("non-finite gradient")]
    NonFiniteGradient,
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("inconsistent window shapes: {0}")]
    InconsistentShapes(String),
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
    #[error("weights were trained for {expected} features, not {got}")]
    EncodingMismatch { expected: Encoding, got: Encoding },
    #[error("weight file: {0}")]
    WeightFile(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Trained weights together with their configuration, feature encoding and optimizer state.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub config: ModelConfig,
    pub encoding: Encoding,
    pub network: Network,
    pub adam: AdamState,
}

impl ModelParams {
    pub fn init(config: ModelConfig, encoding: Encoding) -> Result<Self, NnError> {
        let network = Network::init(&config)?;
        let adam = AdamState::new(&network);
        Ok(ModelParams {
            config,
            encoding,
            network,
            adam,
        })
    }

    pub fn forward(&self, window: ArrayView2<f64>) -> Result<Array1<f64>, NnError> {
        self.network.forward(window)
    }

    pub fn adam_step(&mut self, grads: &Network, lr: f64) -> Result<(), NnError> {
        adam_step(&mut self.network, &mut self.adam, grads, lr)
    }

    pub fn expect_encoding(&self, encoding: Encoding) -> Result<(), NnError> {
        if self.encoding != encoding {
            return Err(NnError::EncodingMismatch {
                expected: self.encoding,
                got: encoding,
            });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    fn tiny(seed: u64) -> ModelConfig {
        ModelConfig {
            input_dim: 3,
            hidden_dims: [6, 5],
            gru_hidden: 4,
            head_dim: 4,
            output_dim: 3,
            seed,
        }
    }

    #[test]
    fn zero_gradient_leaves_weights_and_decays_moments() {
        let mut params = ModelParams::init(tiny(1), Encoding::Angle).unwrap();
        let grads = params.network.zeros_like();
        let mut g1 = grads.clone();
        g1.out.bias.fill(0.5);
        params.adam_step(&g1, 1e-3).unwrap();
        let before = params.network.clone();
        let m_before = params.adam.m.out.bias[0];
        params.adam_step(&grads, 1e-3).unwrap();
        // momentum still moves out.bias; everything with zero history stays put
        assert_eq!(params.network.fc1, before.fc1);
        assert_eq!(params.network.gru, before.gru);
        assert!((params.adam.m.out.bias[0] - 0.9 * m_before).abs() < 1e-18);
        assert_eq!(params.adam.step, 2);
    }

    #[test]
    fn constant_gradient_steps_approach_lr() {
        let mut params = ModelParams::init(tiny(2), Encoding::Angle).unwrap();
        let mut g = params.network.zeros_like();
        g.fc1.weight.fill(0.37);
        let lr = 1e-3;
        let mut last = 0.0;
        for _ in 0..2000 {
            let before = params.network.fc1.weight[[0, 0]];
            params.adam_step(&g, lr).unwrap();
            last = before - params.network.fc1.weight[[0, 0]];
        }
        // with bias correction every step is lr·g/(|g|+ε); the limit is lr
        assert!((last - lr).abs() < 1e-9, "{last}");
    }

    #[test]
    fn nan_gradient_is_rejected() {
        let mut params = ModelParams::init(tiny(3), Encoding::Angle).unwrap();
        let mut g = params.network.zeros_like();
        g.gru.w_hidden[[1, 1]] = f64::NAN;
        let before = params.clone();
        assert!(matches!(
            params.adam_step(&g, 1e-3),
            Err(NnError::NonFiniteGradient)
        ));
        assert_eq!(params, before);
    }

    #[test]
    fn parameters_stay_finite_on_random_data() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let mut params = ModelParams::init(tiny(4), Encoding::Angle).unwrap();
        for step in 0..10_000 {
            let window = Array2::from_shape_fn((4, 3), |_| rng.random_range(-3.0..3.0));
            let mut g = params.network.zeros_like();
            params
                .network
                .loss_and_grad(window.view(), step % 3, &mut g)
                .unwrap();
            params.adam_step(&g, 1e-2).unwrap();
        }
        assert!(params.network.is_finite());
        assert!(params.adam.m.is_finite() && params.adam.v.is_finite());
    }

    #[test]
    fn single_sample_overfits() {
        let config = ModelConfig {
            hidden_dims: [32, 32],
            gru_hidden: 16,
            head_dim: 16,
            ..tiny(5)
        };
        let mut params = ModelParams::init(config, Encoding::Angle).unwrap();
        let window = Array2::from_shape_fn((5, 3), |(t, j)| ((t + 2 * j) % 4) as f64 * 0.25);
        let mut loss = f64::INFINITY;
        for _ in 0..500 {
            let mut g = params.network.zeros_like();
            loss = params
                .network
                .loss_and_grad(window.view(), 1, &mut g)
                .unwrap();
            if loss < 1e-3 {
                break;
            }
            params.adam_step(&g, 1e-2).unwrap();
        }
        assert!(loss < 1e-3, "loss {loss}");
    }

    #[test]
    fn encoding_guard() {
        let params = ModelParams::init(tiny(6), Encoding::Coordinate).unwrap();
        assert!(params.expect_encoding(Encoding::Coordinate).is_ok());
        assert!(matches!(
            params.expect_encoding(Encoding::Angle),
            Err(NnError::EncodingMismatch { .. })
        ));
    }
}
