//! Steering model, sign generator and discriminator.

mod gan;
mod params;
mod steering;
mod train;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tensor::{TensorError, Var};

pub use gan::{Discriminator, DiscriminatorArch, Generator, GeneratorArch};
pub use params::ParamSet;
pub use steering::{window_indices, ConvLayerSpec, SteeringArch, SteeringModel};
pub use train::{evaluate_mse, train_steering, LossKind, TrainConfig, TrainOutcome};

#[derive(Debug, Error)]
pub enum NetsError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("training diverged at epoch {epoch}: {msg}")]
    Diverged { epoch: usize, msg: String, last_good: Box<SteeringModel> },
    #[error("io error on {path}: {msg}")]
    Io { path: String, msg: String },
}

pub type Result<T, E = NetsError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Activation {
    Relu,
    LeakyRelu { slope: f64 },
    Tanh,
}

impl Default for Activation {
    fn default() -> Self {
        Activation::LeakyRelu { slope: 0.1 }
    }
}

impl Activation {
    pub fn apply<'t>(&self, x: Var<'t>) -> Var<'t> {
        match *self {
            Activation::Relu => x.relu(),
            Activation::LeakyRelu { slope } => x.leaky_relu(slope),
            Activation::Tanh => x.tanh(),
        }
    }

    /// Gain used for weight initialization.
    fn gain(&self) -> f64 {
        match *self {
            Activation::Relu => 2f64.sqrt(),
            Activation::LeakyRelu { slope } => (2.0 / (1.0 + slope * slope)).sqrt(),
            Activation::Tanh => 5.0 / 3.0,
        }
    }
}
