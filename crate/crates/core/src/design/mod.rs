//! Candidate sets, designs and the quantities computed from them.

mod candidates;
pub mod io;
mod model;
mod weights;

pub use candidates::{CandidateSet, RegressorSource, CHUNK_ROWS};
pub use model::{
    d_criterion, efficiency, info_matrix, info_matrix_dense, standardize, variance_function,
    ModelSummary, VarianceEvaluator,
};
pub use weights::{Design, DesignKind, SUPPORT_FLOOR, WEIGHT_SUM_TOL};
