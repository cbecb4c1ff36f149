//! Defenses against unlearnable data: the greedy transform search, the
//! orthogonal projection attack and PGD adversarial training.

mod adversarial;
mod mix;
mod opa;
mod search;

pub use adversarial::{adversarial_train, AdvTrainConfig};
pub use mix::mix_experiment;
pub use opa::{opa_break, train_probe, OpaConfig, OpaOutcome};
pub use search::{
    generate_learnable, search_with, BreakReport, BreakerConfig, Evaluator, IterationRecord, Scored,
    SearchOutcome, TrainingEvaluator,
};
