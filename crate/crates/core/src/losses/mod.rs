//! Distillation objectives with closed-form gradients.
//!
//! * [`pkt_loss`]: KL divergence between teacher and student conditional
//!   affinity distributions over the rows (positions) of their logits.
//! * [`nst_mmd2`]: squared maximum mean discrepancy between the neuron
//!   activation columns of two hidden layers, Gaussian kernel.
//! * [`crd_loss`]: contrastive critic loss with one positive per `N`
//!   negatives.
//! * [`combined_loss`]: weighted sum of a language-modeling term and any of
//!   the above, with gradients grouped by the tensor they apply to.
//!
//! Every gradient is taken with respect to the *student* input and is
//! checked against central finite differences in the tests.

mod combined;
mod crd;
mod gradcheck;
mod kernels;
mod nst;
mod pkt;

use thiserror::Error;

pub use combined::{combined_loss, CombinedLoss, LossTerm, LossWeights, TermKind};
pub use crd::{crd_critic, crd_loss, CrdBatch, Projection};
pub use gradcheck::{check_gradient, GradCheckReport};
pub use kernels::{cosine_affinity, gaussian_kernel, KernelSpec};
pub use nst::{nst_mmd2, NST_NORM_EPS};
pub use pkt::{conditional_probs, pkt_loss, PROB_FLOOR};

use crate::matrix::RealMatrix;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KdError {
    #[error("zero vector ({0})")]
    ZeroVector(String),
    #[error("column {0} has no off-diagonal affinity mass")]
    DegenerateColumn(usize),
    #[error("row count mismatch: {0} vs {1}")]
    RowCountMismatch(usize, usize),
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("need at least {need} rows, got {got}")]
    TooFewRows { need: usize, got: usize },
    #[error("non-finite loss value")]
    NonFinite,
    #[error("invalid kernel: {0}")]
    InvalidKernel(String),
    #[error("invalid CRD batch: {0}")]
    InvalidBatch(String),
    #[error("weight for {0} is positive but no term was provided")]
    MissingTerm(String),
    #[error("term {0} provided twice")]
    DuplicateTerm(String),
    #[error("invalid loss weights: {0}")]
    InvalidWeights(String),
}

/// A loss value and its gradient with respect to the student-side input.
#[derive(Debug, Clone, PartialEq)]
pub struct LossValue {
    pub value: f64,
    pub grad: RealMatrix,
}
