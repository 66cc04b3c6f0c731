//! Dense-network substrate: matrices, layers with backpropagation, Adam,
//! EMA, seeded randomness and a finite-difference gradient oracle.

pub mod adam;
pub mod ema;
pub mod embed;
pub mod gradcheck;
pub mod linalg;
pub mod matrix;
pub mod net;
pub mod rng;

pub use adam::AdamState;
pub use ema::EmaShadow;
pub use embed::sinusoidal_embed;
pub use gradcheck::{check_parameters, gradient_check, GradCheckReport, HalfSquaredNorm, LossFn, MseLoss};
pub use matrix::Matrix;
pub use net::{Activation, Affine, DenseNet, Grads, Layer, LayerNorm, Mode, Parameterized};
pub use rng::SeededRng;
