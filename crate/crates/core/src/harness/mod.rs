//! Desk-scale distillation experiment.
//!
//! A toy teacher learns temporal-relation QA over synthetic narratives; a
//! smaller student learns to list a narrative's events in chronological
//! order (the timeline task), optionally distilled from the teacher with
//! NST, PKT, and CRD. [`run_experiment_matrix`] compares the conditions
//! over several seeds.

pub mod corpus;
pub mod eval;
pub mod experiment;
pub mod model;
pub mod tokens;
pub mod train;

use thiserror::Error;

pub use corpus::{gen_corpus, gen_synthetic_corpus, CorpusSpec, RelationMix, SyntheticNarrative};
pub use eval::{eval_ordering, eval_relation_accuracy, kendall_tau, sign_test, OrderingEval, SignTest};
pub use experiment::{
    run_experiment_matrix, train_student, train_teacher, Condition, ExperimentReport,
    HarnessData, MatrixConfig, ModelShape, RunResult, StudentTask, TeacherReport, Comparison,
};
pub use model::{Architecture, ToyModel};
pub use train::{train, KdMethod, KdSettings, TrainConfig, TrainLog};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("teacher {model_id} did not pass the gate: accuracy {accuracy:.3} < majority baseline {baseline:.3} + {margin:.2}")]
    DidNotConverge {
        model_id: String,
        accuracy: f64,
        baseline: f64,
        margin: f64,
    },
    #[error("configuration mismatch: {0}")]
    ConfigMismatch(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("training of {model_id} diverged at step {step}")]
    Diverged { model_id: String, step: usize },
    #[error(transparent)]
    Loss(#[from] crate::losses::KdError),
    #[error(transparent)]
    Matrix(#[from] crate::matrix::MatrixError),
    #[error(transparent)]
    Repr(#[from] crate::repr::ReprError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}
