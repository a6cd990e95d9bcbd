//! File formats, benchmark orchestration and the self-check suite.

pub mod bench;
pub mod config;
pub mod csv_io;
pub mod verify;

pub use bench::{run_benchmark, RunReport};
pub use config::{BenchConfig, CohortSpec};
pub use csv_io::{load_matrix_csv, parse_matrix_csv, write_matrix_csv, write_trace_csv};
pub use verify::{run_verify, run_verify_with, VerifyOptions, VerifyReport};
