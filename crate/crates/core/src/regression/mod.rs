//! Vanilla regressor, feature extraction, augmented head training and the
//! end-to-end pipeline.

pub mod head;
pub mod model;

pub use head::{retrain_head, train_head_augmented, HeadConfig, HeadTrace, MixSchedule};
pub use model::{extract_features, train_vanilla, RegressionTrace, RegressorConfig, RegressorModel};
