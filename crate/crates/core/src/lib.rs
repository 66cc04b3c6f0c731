#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod numeric;

pub use error::{Error, Result};
pub mod analytics;
pub mod data;
pub mod diffusion;
pub mod evaluation;
pub mod generation;
pub mod pipeline;
pub mod regression;
