use std::path::{Path, PathBuf};

use cosparse_admm::{CertifyConfig, Instance, InstanceSpec, SolverConfig, Tolerances};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSpec {
    #[serde(default = "one")]
    pub beta: f64,
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    #[serde(default)]
    pub min_iters: usize,
    #[serde(default = "default_tol")]
    pub primal_tol: f64,
    #[serde(default = "default_tol")]
    pub dual_tol: f64,
    #[serde(default = "one_usize")]
    pub record_every: usize,
    /// Start from `λ⁰ = D·αMᵀ(Mx⁰ − y)` instead of `λ⁰ = 0`.
    #[serde(default)]
    pub consistent_init: bool,
}

impl Default for SolverSpec {
    fn default() -> Self {
        Self {
            beta: 1.0,
            max_iters: default_max_iters(),
            min_iters: 0,
            primal_tol: default_tol(),
            dual_tol: default_tol(),
            record_every: 1,
            consistent_init: false,
        }
    }
}

impl SolverSpec {
    pub fn to_config(&self, instance: &Instance) -> SolverConfig<f64> {
        let cfg = SolverConfig {
            beta: self.beta,
            max_iters: self.max_iters,
            min_iters: self.min_iters,
            primal_tol: self.primal_tol,
            dual_tol: self.dual_tol,
            record_every: self.record_every,
            x0: None,
            lambda0: None,
        };
        if self.consistent_init {
            cfg.with_stationary_multiplier(instance)
        } else {
            cfg
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CertifySpec {
    #[serde(default = "default_t_list")]
    pub t_list: Vec<usize>,
    #[serde(default = "default_probes")]
    pub probe_count: usize,
    #[serde(default = "default_probes")]
    pub lemma1_probes: usize,
    #[serde(default = "default_probes")]
    pub lemma2_probes: usize,
    #[serde(default = "default_skew_pairs")]
    pub skew_pairs: usize,
    #[serde(default)]
    pub tolerances: Option<Tolerances<f64>>,
}

impl Default for CertifySpec {
    fn default() -> Self {
        Self {
            t_list: default_t_list(),
            probe_count: default_probes(),
            lemma1_probes: default_probes(),
            lemma2_probes: default_probes(),
            skew_pairs: default_skew_pairs(),
            tolerances: None,
        }
    }
}

impl CertifySpec {
    pub fn to_config(&self, seed: u64) -> CertifyConfig<f64> {
        CertifyConfig {
            t_list: self.t_list.clone(),
            probe_count: self.probe_count,
            lemma1_probes: self.lemma1_probes,
            lemma2_probes: self.lemma2_probes,
            skew_pairs: self.skew_pairs,
            seed,
            tolerances: self.tolerances.clone().unwrap_or_default(),
            ..CertifyConfig::default()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub master_seed: u64,
    pub instance: InstanceSpec<f64>,
    #[serde(default)]
    pub solver: SolverSpec,
    #[serde(default)]
    pub certify: CertifySpec,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub emit_full_iterates: bool,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let cfg: Self = serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> CliResult<()> {
        let i = &self.instance;
        if i.d == 0 || i.m == 0 || i.k == 0 {
            return Err(CliError::Config(format!("instance needs d, m, k >= 1: {}", self.instance_json())));
        }
        if let Some(a) = i.alpha {
            if !(a > 0.0) || !a.is_finite() {
                return Err(CliError::Config(format!("alpha must be > 0, got {a}")));
            }
        }
        if !(i.noise_sigma >= 0.0) {
            return Err(CliError::Config("noise_sigma must be >= 0".into()));
        }
        let s = &self.solver;
        if !(s.beta > 0.0) || !(s.primal_tol > 0.0) || !(s.dual_tol > 0.0) {
            return Err(CliError::Config("beta and solver tolerances must be > 0".into()));
        }
        if s.max_iters == 0 {
            return Err(CliError::Config("max_iters must be >= 1".into()));
        }
        if s.record_every != 1 {
            return Err(CliError::Config(
                "certification replays every iteration; solver.record_every must be 1".into(),
            ));
        }
        Ok(())
    }

    /// Instance spec as JSON, for error messages.
    pub fn instance_json(&self) -> String {
        serde_json::to_string(&self.instance).unwrap_or_default()
    }
}

fn one() -> f64 {
    1.0
}

fn one_usize() -> usize {
    1
}

fn default_max_iters() -> usize {
    100_000
}

fn default_tol() -> f64 {
    1e-8
}

fn default_t_list() -> Vec<usize> {
    vec![10, 100, 1000]
}

fn default_probes() -> usize {
    20
}

fn default_skew_pairs() -> usize {
    200
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_fills_defaults() {
        let cfg: ExperimentConfig = serde_json::from_str(
            r#"{"master_seed": 3, "instance": {"d": 8, "m": 6, "k": 2, "ell": 7, "alpha": 100.0},
                "output_dir": "out"}"#,
        )
        .unwrap();
        assert_eq!(cfg.solver, SolverSpec::default());
        assert_eq!(cfg.certify.t_list, vec![10, 100, 1000]);
        assert_eq!(cfg.instance.noise_sigma, 0.0);
        cfg.validate().unwrap();
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let r: Result<ExperimentConfig, _> = serde_json::from_str(
            r#"{"master_seed": 3, "instance": {"d": 8, "m": 6, "k": 2, "ell": 7}, "output_dir": "o", "bogus": 1}"#,
        );
        assert!(r.is_err());
    }

    #[test]
    fn stride_other_than_one_is_a_config_error() {
        let mut cfg: ExperimentConfig = serde_json::from_str(
            r#"{"master_seed": 0, "instance": {"d": 4, "m": 3, "k": 2, "ell": 2}, "output_dir": "o"}"#,
        )
        .unwrap();
        cfg.solver.record_every = 5;
        assert!(matches!(cfg.validate(), Err(CliError::Config(_))));
    }
}
