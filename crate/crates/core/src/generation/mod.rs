//! Priority-driven allocation of the synthetic budget and Mahalanobis
//! quality gating of generated features.

pub mod augment;
pub mod gate;
pub mod priority;

pub use augment::{fit_gate_for_model, generate_augmentation, Augmentation, GenerateConfig, GenerationReport};
pub use gate::{fit_gate, gate_filter, nearest_rank, BinGate, GateConfig, GateOutcome, QualityGate};
pub use priority::{
    allocate_budget, priority_scores, track_errors, AllocationMode, AllocationPlan, BinErrors, PriorityState,
};
