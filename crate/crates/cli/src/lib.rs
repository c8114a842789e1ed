//! Experiment runner for the cosparse ADMM solver: one JSON config in, a
//! directory of JSON/CSV artifacts out.

pub mod config;
pub mod error;
pub mod pipeline;
pub mod sweep;

pub use config::{CertifySpec, ExperimentConfig, SolverSpec};
pub use error::{CliError, CliResult};
pub use pipeline::{certify_dir, execute, run, validate_frame_file, RunOutput, RunSummary};
pub use sweep::{sweep, SweepRow, SweepSpec};

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    pub const STRUCTURAL: i32 = 1;
    pub const CERTIFICATES_FAILED: i32 = 2;
}
