//! Adam with a stagnation-triggered stochastic gradient shuffle (SADAM), peer
//! first-order optimizers, the deep matrix fitting benchmark problem and the
//! numerical checks and statistics used to compare them.

// negated comparisons also reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod deep_mf;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod optim;
pub mod rng;
pub mod shuffle;

pub use error::{Error, Result};
pub use linalg::{DenseMatrix, Interval1D};
pub use optim::{run_optimizer, Method, OptimizerConfig, OptimizerTrace, Problem};
pub use rng::RandomSource;
