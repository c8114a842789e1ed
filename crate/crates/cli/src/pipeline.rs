//! generate → solve → reference → certify, and the run-directory artifacts.
//!
//! A run directory holds
//!
//! | file            | content                                                     |
//! |-----------------|-------------------------------------------------------------|
//! | `config.json`   | the experiment config as run                                |
//! | `instance.json` | the generated instance                                      |
//! | `trace.csv`     | `k, primal_residual, dual_residual, objective, h_dist_to_ref` |
//! | `trace.json`    | solver config, convergence flag and final iterate            |
//! | `report.json`   | certification report                                        |
//! | `margins.csv`   | `k, margin_thm1, margin_lemma3, eq45, h_dist`                  |
//! | `summary.json`  | [`RunSummary`]                                              |
//! | `iterates.json` | full trace, only with `emit_full_iterates`                  |
//!
//! CSV files start with a `# schema: …` comment line.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::time::Instant;

use cosparse_admm::linalg::{norm2, sub};
use cosparse_admm::{
    certify_all, generate_instance, solve, validate_frame, CheckStatus, FrameReport, Instance, Iterate, Matrix, Report,
    SolverConfig, Trace,
};
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::error::{CliError, CliResult};

pub const TRACE_CSV_SCHEMA: &str = "cosparse-admm/trace-csv/v1";
pub const MARGINS_CSV_SCHEMA: &str = "cosparse-admm/margins-csv/v1";
pub const TRACE_SIDECAR_SCHEMA: &str = "cosparse-admm/trace/v1";
pub const SUMMARY_SCHEMA: &str = "cosparse-admm/summary/v1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub schema: String,
    pub fingerprint: String,
    pub master_seed: u64,
    pub converged: bool,
    pub iters_run: usize,
    pub final_primal_residual: f64,
    pub final_dual_residual: f64,
    pub final_objective: f64,
    /// `‖x_final − x_true‖ / ‖x_true‖` for planted instances.
    pub recovery_error: Option<f64>,
    pub overall_pass: bool,
    pub worst_margin: f64,
    /// Per-check worst `margin / scale`.
    pub check_margins: BTreeMap<String, Option<f64>>,
    pub failed_checks: Vec<String>,
    pub skipped_checks: Vec<String>,
    pub duration_seconds: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TraceSidecar {
    pub schema: String,
    pub instance_ref: String,
    pub config: SolverConfig<f64>,
    pub converged: bool,
    pub iters_run: usize,
    pub final_iterate: Iterate,
}

/// Everything a run produces, before it is written out.
pub struct RunOutput {
    pub instance: Instance,
    pub trace: Trace,
    pub report: Report,
    pub summary: RunSummary,
}

/// Runs the pipeline without touching the file system.
pub fn execute(config: &ExperimentConfig) -> CliResult<RunOutput> {
    config.validate()?;
    let started = Instant::now();
    let instance = generate_instance(&config.instance, config.master_seed)
        .map_err(|e| CliError::core(format!("instance spec {}", config.instance_json()), e))?;
    let fingerprint = instance
        .fingerprint()
        .map_err(|e| CliError::core("fingerprint", e))?;
    let solver_cfg = config.solver.to_config(&instance);
    let mut trace = solve(&instance, &solver_cfg).map_err(|e| CliError::core("solve", e))?;
    trace.instance_ref = fingerprint.clone();
    let report = certify_all(&trace, &instance, &config.certify.to_config(config.master_seed))
        .map_err(|e| CliError::core("certify", e))?;
    let summary = summarize(config.master_seed, &fingerprint, &instance, &trace, &report, started);
    Ok(RunOutput {
        instance,
        trace,
        report,
        summary,
    })
}

fn summarize(seed: u64, fingerprint: &str, instance: &Instance, trace: &Trace, report: &Report, started: Instant) -> RunSummary {
    let last = trace.final_iterate();
    let recovery_error = instance.ground_truth().and_then(|xt| {
        let n = norm2(xt);
        (n > 0.0).then(|| norm2(&sub(&last.omega.x, xt)) / n)
    });
    RunSummary {
        schema: SUMMARY_SCHEMA.to_string(),
        fingerprint: fingerprint.to_string(),
        master_seed: seed,
        converged: trace.converged,
        iters_run: trace.iters_run,
        final_primal_residual: *trace.primal_residuals.last().unwrap_or(&0.0),
        final_dual_residual: *trace.dual_residuals.last().unwrap_or(&0.0),
        final_objective: *trace.objective_values.last().unwrap_or(&0.0),
        recovery_error,
        overall_pass: report.overall_pass,
        worst_margin: report.worst_margin,
        check_margins: report.checks.iter().map(|c| (c.name.clone(), c.worst_margin)).collect(),
        failed_checks: report.failed_checks().into_iter().map(String::from).collect(),
        skipped_checks: report
            .checks
            .iter()
            .filter(|c| c.status == CheckStatus::Skipped)
            .map(|c| c.name.clone())
            .collect(),
        duration_seconds: started.elapsed().as_secs_f64(),
    }
}

/// Runs the pipeline and writes the run directory.
pub fn run(config: &ExperimentConfig) -> CliResult<RunSummary> {
    let out = execute(config)?;
    write_run_dir(config, &out)?;
    Ok(out.summary)
}

pub fn write_run_dir(config: &ExperimentConfig, out: &RunOutput) -> CliResult<()> {
    let dir = &config.output_dir;
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    write_json(&dir.join("config.json"), config)?;
    let inst_json = out
        .instance
        .to_json()
        .map_err(|e| CliError::core("serialize instance", e))?;
    write_text(&dir.join("instance.json"), &inst_json)?;
    write_trace_csv(&dir.join("trace.csv"), &out.trace, &out.report)?;
    write_json(
        &dir.join("trace.json"),
        &TraceSidecar {
            schema: TRACE_SIDECAR_SCHEMA.to_string(),
            instance_ref: out.trace.instance_ref.clone(),
            config: out.trace.config.clone(),
            converged: out.trace.converged,
            iters_run: out.trace.iters_run,
            final_iterate: out.trace.final_iterate().clone(),
        },
    )?;
    write_json(&dir.join("report.json"), &out.report)?;
    write_margins_csv(&dir.join("margins.csv"), &out.report)?;
    write_json(&dir.join("summary.json"), &out.summary)?;
    if config.emit_full_iterates {
        write_json(&dir.join("iterates.json"), &out.trace)?;
    }
    Ok(())
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

pub fn write_json<S: Serialize>(path: &Path, value: &S) -> CliResult<()> {
    write_text(path, &serde_json::to_string_pretty(value)?)
}

fn csv_writer(path: &Path, schema: &str) -> CliResult<csv::Writer<fs::File>> {
    let mut file = fs::File::create(path).map_err(|e| CliError::io(path, e))?;
    std::io::Write::write_all(&mut file, format!("# schema: {schema}\n").as_bytes())
        .map_err(|e| CliError::io(path, e))?;
    Ok(csv::Writer::from_writer(file))
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:e}")).unwrap_or_default()
}

pub fn write_trace_csv(path: &Path, trace: &Trace, report: &Report) -> CliResult<()> {
    let mut w = csv_writer(path, TRACE_CSV_SCHEMA)?;
    w.write_record(["k", "primal_residual", "dual_residual", "objective", "h_dist_to_ref"])?;
    let h = report.h_distances();
    for k in 0..=trace.iters_run {
        w.write_record([
            k.to_string(),
            format!("{:e}", trace.primal_residuals[k]),
            format!("{:e}", trace.dual_residuals[k]),
            format!("{:e}", trace.objective_values[k]),
            opt(h.as_ref().map(|h| h[k])),
        ])?;
    }
    w.flush().map_err(|e| CliError::io(path, e))?;
    Ok(())
}

pub fn write_margins_csv(path: &Path, report: &Report) -> CliResult<()> {
    let mut w = csv_writer(path, MARGINS_CSV_SCHEMA)?;
    w.write_record(["k", "margin_thm1", "margin_lemma3", "eq45", "h_dist"])?;
    for (k, l3) in report.lemma3.iter().enumerate() {
        let c = report.contraction.get(k);
        w.write_record([
            k.to_string(),
            opt(c.map(|c| c.margin)),
            format!("{:e}", l3.margin42),
            format!("{:e}", l3.value45),
            opt(c.map(|c| c.dist_k.sqrt())),
        ])?;
    }
    w.flush().map_err(|e| CliError::io(path, e))?;
    Ok(())
}

/// Re-certifies a run directory. Uses `iterates.json` when present, otherwise
/// replays the solve from `config.json` and `instance.json`.
pub fn certify_dir(dir: &Path) -> CliResult<(Report, bool)> {
    let config = ExperimentConfig::load(&dir.join("config.json"))?;
    let path = dir.join("instance.json");
    let text = fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
    let instance = Instance::from_json(&text).map_err(|e| CliError::core(path.display().to_string(), e))?;
    let iterates = dir.join("iterates.json");
    let (trace, replayed) = if iterates.exists() {
        let text = fs::read_to_string(&iterates).map_err(|e| CliError::io(&iterates, e))?;
        (serde_json::from_str::<Trace>(&text)?, false)
    } else {
        let cfg = config.solver.to_config(&instance);
        (solve(&instance, &cfg).map_err(|e| CliError::core("replay solve", e))?, true)
    };
    let report = certify_all(&trace, &instance, &config.certify.to_config(config.master_seed))
        .map_err(|e| CliError::core("certify", e))?;
    Ok((report, replayed))
}

#[derive(Deserialize)]
#[serde(untagged)]
enum FrameInput {
    Instance(cosparse_admm::problem::InstanceDoc<f64>),
    Frame(cosparse_admm::frame::FrameDoc<f64>),
    Rows(Vec<Vec<f64>>),
}

/// Frame report for a frame document, an instance document, or a bare
/// row-major array of rows.
pub fn validate_frame_file(path: &Path, tol: f64) -> CliResult<FrameReport<f64>> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let input: FrameInput = serde_json::from_str(&text)
        .map_err(|e| CliError::Format(format!("{}: not a frame, instance or matrix document: {e}", path.display())))?;
    let rows = match input {
        FrameInput::Instance(doc) => doc.frame.entries,
        FrameInput::Frame(doc) => doc.entries,
        FrameInput::Rows(rows) => rows,
    };
    let m = Matrix::from_rows(&rows).map_err(|e| CliError::core(path.display().to_string(), e))?;
    validate_frame(&m, tol).map_err(|e| CliError::core(path.display().to_string(), e))
}
