//! Empirical checks on operator behaviour and the statistics used to
//! summarize benchmark runs.

mod contraction;
mod covering;
mod icc;
mod rate;
mod timing;

pub use contraction::{contraction_ratio, ContractionEstimate};
pub use covering::{covering_experiment, interval_sequence, CoveringConfig, CoveringResult, DoubleWell, Quadratic1D, ScalarObjective};
pub use icc::{icc, IccResult};
pub use rate::{fit_rate, fit_rate_values, RateFit};
pub use timing::{timing_summary, TimingSummary};
