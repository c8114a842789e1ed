//! Parameter sweeps: a base config plus a grid of dotted-path overrides, or an
//! explicit config list. Runs execute in parallel, each in its own
//! `run_NNN` directory; `sweep.csv` aggregates one row per run.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::config::ExperimentConfig;
use crate::error::{CliError, CliResult};
use crate::pipeline::{run, RunSummary};

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub output_dir: PathBuf,
    #[serde(default)]
    pub base: Option<Value>,
    /// Dotted path (e.g. `solver.beta`) to the values it takes.
    #[serde(default)]
    pub grid: BTreeMap<String, Vec<Value>>,
    #[serde(default)]
    pub configs: Vec<Value>,
}

impl SweepSpec {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    /// Expands the grid (cartesian product in key order) or the config list.
    /// Each config's `output_dir` is replaced by `output_dir/run_NNN`.
    pub fn expand(&self) -> CliResult<Vec<Value>> {
        let mut out = if !self.configs.is_empty() {
            if self.base.is_some() || !self.grid.is_empty() {
                return Err(CliError::Usage("give either `configs` or `base` + `grid`, not both".into()));
            }
            self.configs.clone()
        } else {
            let base = self
                .base
                .clone()
                .ok_or_else(|| CliError::Usage("sweep needs `configs` or `base` + `grid`".into()))?;
            if self.grid.is_empty() || self.grid.values().any(Vec::is_empty) {
                return Err(CliError::Usage("sweep grid is empty".into()));
            }
            let mut acc = vec![base];
            for (key, values) in &self.grid {
                let mut next = Vec::with_capacity(acc.len() * values.len());
                for cfg in &acc {
                    for v in values {
                        let mut c = cfg.clone();
                        set_path(&mut c, key, v.clone())?;
                        next.push(c);
                    }
                }
                acc = next;
            }
            acc
        };
        for (i, c) in out.iter_mut().enumerate() {
            let dir = self.output_dir.join(format!("run_{i:03}"));
            set_path(c, "output_dir", Value::String(dir.to_string_lossy().into_owned()))?;
        }
        Ok(out)
    }
}

fn set_path(root: &mut Value, path: &str, value: Value) -> CliResult<()> {
    let mut cur = root;
    let parts: Vec<&str> = path.split('.').collect();
    for (i, p) in parts.iter().enumerate() {
        let obj = cur
            .as_object_mut()
            .ok_or_else(|| CliError::Usage(format!("`{path}`: `{p}` is not inside an object")))?;
        if i + 1 == parts.len() {
            obj.insert((*p).to_string(), value);
            return Ok(());
        }
        cur = obj
            .entry((*p).to_string())
            .or_insert_with(|| Value::Object(Default::default()));
    }
    Ok(())
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepRow {
    pub run: usize,
    pub config: Option<ExperimentConfig>,
    pub result: Result<RunSummary, String>,
}

/// Runs every expanded config. Individual failures are recorded in their row.
pub fn sweep(spec: &SweepSpec) -> CliResult<Vec<SweepRow>> {
    let configs = spec.expand()?;
    std::fs::create_dir_all(&spec.output_dir).map_err(|e| CliError::io(&spec.output_dir, e))?;
    let rows: Vec<SweepRow> = configs
        .into_par_iter()
        .enumerate()
        .map(|(i, v)| match serde_json::from_value::<ExperimentConfig>(v) {
            Ok(cfg) => {
                let result = run(&cfg).map_err(|e| e.to_string());
                SweepRow {
                    run: i,
                    config: Some(cfg),
                    result,
                }
            }
            Err(e) => SweepRow {
                run: i,
                config: None,
                result: Err(format!("invalid configuration: {e}")),
            },
        })
        .collect();
    write_sweep_csv(&spec.output_dir.join("sweep.csv"), &rows)?;
    Ok(rows)
}

const COLUMNS: [&str; 21] = [
    "run",
    "status",
    "error",
    "master_seed",
    "d",
    "m",
    "k",
    "ell",
    "alpha",
    "noise_sigma",
    "beta",
    "consistent_init",
    "fingerprint",
    "converged",
    "iters_run",
    "final_primal_residual",
    "final_dual_residual",
    "recovery_error",
    "overall_pass",
    "worst_margin",
    "duration_seconds",
];

pub fn write_sweep_csv(path: &Path, rows: &[SweepRow]) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(COLUMNS)?;
    for r in rows {
        let mut rec: Vec<String> = vec![r.run.to_string()];
        match &r.result {
            Ok(_) => rec.extend(["ok".into(), String::new()]),
            Err(e) => rec.extend(["error".into(), e.clone()]),
        }
        match &r.config {
            Some(c) => {
                let i = &c.instance;
                rec.extend([
                    c.master_seed.to_string(),
                    i.d.to_string(),
                    i.m.to_string(),
                    i.k.to_string(),
                    i.ell.to_string(),
                    i.alpha.map(|a| a.to_string()).unwrap_or_default(),
                    i.noise_sigma.to_string(),
                    c.solver.beta.to_string(),
                    c.solver.consistent_init.to_string(),
                ]);
            }
            None => rec.extend(std::iter::repeat_n(String::new(), 9)),
        }
        match &r.result {
            Ok(s) => rec.extend([
                s.fingerprint.clone(),
                s.converged.to_string(),
                s.iters_run.to_string(),
                format!("{:e}", s.final_primal_residual),
                format!("{:e}", s.final_dual_residual),
                s.recovery_error.map(|e| format!("{e:e}")).unwrap_or_default(),
                s.overall_pass.to_string(),
                format!("{:e}", s.worst_margin),
                format!("{:.3}", s.duration_seconds),
            ]),
            Err(_) => rec.extend(std::iter::repeat_n(String::new(), 9)),
        }
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| CliError::io(path, e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn grid_expands_as_cartesian_product() {
        let spec = SweepSpec {
            output_dir: "out".into(),
            base: Some(json!({"master_seed": 0, "instance": {"d": 4, "m": 3, "k": 2, "ell": 2}, "output_dir": "x"})),
            grid: BTreeMap::from([
                ("solver.beta".to_string(), vec![json!(0.1), json!(1.0), json!(10.0)]),
                ("master_seed".to_string(), vec![json!(1), json!(2)]),
            ]),
            configs: vec![],
        };
        let cfgs = spec.expand().unwrap();
        assert_eq!(cfgs.len(), 6);
        assert_eq!(cfgs[0]["master_seed"], json!(1));
        assert_eq!(cfgs[0]["solver"]["beta"], json!(0.1));
        assert_eq!(cfgs[5]["output_dir"], json!(Path::new("out").join("run_005").to_string_lossy()));
    }

    #[test]
    fn empty_grid_is_a_usage_error() {
        let base = Some(json!({}));
        for grid in [BTreeMap::new(), BTreeMap::from([("solver.beta".to_string(), vec![])])] {
            let spec = SweepSpec { output_dir: "o".into(), base: base.clone(), grid, configs: vec![] };
            assert!(matches!(spec.expand(), Err(CliError::Usage(_))));
        }
        let spec = SweepSpec { output_dir: "o".into(), base: None, grid: BTreeMap::new(), configs: vec![] };
        assert!(matches!(spec.expand(), Err(CliError::Usage(_))));
    }
}
