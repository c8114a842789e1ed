//! ADMM for the analysis-LASSO problem
//!
//! ```text
//! min_x ‖Dx‖₁ + (α/2)‖y − Mx‖²
//! ```
//!
//! with a Parseval frame `D`, together with a certifier that replays solver
//! traces and checks the convergence inequalities of the method numerically.
//!
//! Every numeric type is generic over [`Real`] (`f32` or `f64`); the aliases
//! at the crate root fix `f64`.
//!
//! ```
//! use cosparse_admm::{generate_instance, solve, InstanceSpec, SolverConfig};
//!
//! let spec = InstanceSpec { d: 8, m: 6, k: 2, ell: 5, alpha: Some(100.0), noise_sigma: 0.0 };
//! let inst = generate_instance::<f64>(&spec, 3).unwrap();
//! let trace = solve(&inst, &SolverConfig::default()).unwrap();
//! assert!(trace.converged);
//! ```

pub mod certify;
pub mod error;
pub mod frame;
pub mod linalg;
pub mod problem;
pub mod rng;
pub mod scalar;
pub mod solver;
pub mod vi;

pub use certify::{
    certify_all, certify_with_reference, CertificationReport, CertifyConfig, CheckOutcome, CheckStatus, HForm,
    HMetric, Tolerances,
};
pub use error::{Error, Result};
pub use frame::{build_concatenated_bases_frame, build_identity_frame, validate_frame, Construction, FrameReport, TightFrame};
pub use linalg::Matrix;
pub use problem::{generate_cosparse_signal, generate_instance, InstanceSpec, ProblemInstance};
pub use scalar::Real;
pub use solver::{
    reference_solution, solve, solve_mutated, AdmmIterate, Mutation, ReferenceConfig, SolverConfig, SolverTrace,
};
pub use vi::{kkt_residuals, KktResiduals, ViPoint};

pub type Frame = TightFrame<f64>;
pub type Instance = ProblemInstance<f64>;
pub type Config = SolverConfig<f64>;
pub type Trace = SolverTrace<f64>;
pub type Iterate = AdmmIterate<f64>;
pub type Point = ViPoint<f64>;
pub type Report = CertificationReport<f64>;
