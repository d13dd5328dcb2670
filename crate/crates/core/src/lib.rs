//! Nearest neighbor search under the k-robust distance, where the `k` worst
//! coordinates of each difference vector are ignored.

pub mod base_ann;
pub mod budgeted_index;
pub mod codec;
pub mod ds_lsh;
pub mod error;
pub mod eval;
pub mod norms;
pub mod projections;
pub mod rng;
pub mod robust_index;

pub use base_ann::{AnnBackend, AnnBackendSpec, BackendKind, LshParams, WeightedRows};
pub use budgeted_index::{
    admissible_distance_approx, admissible_distance_exact, build_budgeted_index, query_budgeted,
    trunc_weighted, BudgetedAnswer, BudgetedConfig, BudgetedIndex, CostVector,
};
pub use ds_lsh::{
    build_ds_lsh, collision_probability, density_parameter, query_ds_lsh, BitMatrix, DsLshAnswer,
    DsLshConfig, DsLshIndex, Outcome,
};
pub use error::{Error, Result};
pub use norms::{robust_distance, robust_nn_bruteforce, tail, Dataset, NormParams, Point};
pub use projections::{Projection, SamplingConfig};
pub use robust_index::{
    build_robust_index, query_robust, RobustAnswer, RobustIndex, RobustIndexConfig, RobustMode,
};
