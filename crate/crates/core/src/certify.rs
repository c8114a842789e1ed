//! Replays a stride-1 [`SolverTrace`] and evaluates the convergence
//! inequalities of the ADMM scheme numerically.
//!
//! Notation: `ω^k = (z^k, x^k, λ^k)`, `v^k = (λ^k, x^k)`, and
//! `‖v‖_H² = (1/β)‖λ‖² + β‖x‖²` (reduced form, valid when `DᵀD = I`) or
//! `(1/β)‖λ‖² + β‖Dx‖²` (full form).
//!
//! | check        | inequality per step `k → k+1`                                                   |
//! |--------------|---------------------------------------------------------------------------------|
//! | lemma1       | `θ(u) − θ(u^{k+1}) + (ω − ω^{k+1})ᵀF(ω) ≥ β(z − z^{k+1})ᵀ(Dx^k − Dx^{k+1}) + (1/β)(λ − λ^{k+1})ᵀ(λ^k − λ^{k+1})` |
//! | lemma2       | the right side above equals a telescoping sum of squared distances (identity)  |
//! | lemma3       | `β‖Dx^k − z^{k+1}‖² ≥ β‖Dx^k − Dx^{k+1}‖² + (1/β)‖λ^k − λ^{k+1}‖²`              |
//! | contraction  | `‖v^{k+1} − v*‖_H² ≤ ‖v^k − v*‖_H² − ‖v^k − v^{k+1}‖_H²`                          |
//! | summability  | `Σ_k ‖v^k − v^{k+1}‖_H² ≤ ‖v^{k₀} − v*‖_H²`                                      |
//! | ergodic      | `θ(ū_t) − θ(u) + (ω̄_t − ω)ᵀF(ω) ≤ [(1/β)‖λ⁰ − λ‖² + β‖Dx⁰ − z‖²] / (2(t+1))`       |
//!
//! Lemma 3 (and through it the contraction and summability bounds) uses the
//! x-stationarity `Dᵀλ^k = αMᵀ(Mx^k − y)` of the *previous* x-step. That holds
//! for every `k ≥ 1`, but at `k = 0` only when the start was chosen
//! consistently (see [`crate::solver::SolverConfig::with_stationary_multiplier`]).
//! Records at `k = 0` of an inconsistent start are kept and flagged
//! `in_hypothesis = false`; they do not affect `overall_pass`.
//!
//! Suprema over `ω` are approximated by seeded probes on spheres around the
//! relevant point.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::TightFrame;
use crate::linalg::{dist_sq, dot, norm_inf, norm_sq, sub};
use crate::problem::ProblemInstance;
use crate::rng::{self, SeededRng};
use crate::scalar::Real;
use crate::solver::{reference_solution, AdmmIterate, ReferenceConfig, SolverTrace};
use crate::vi::{f_apply, kkt_residuals, skew_defect, theta, KktResiduals, ViPoint};

pub const REPORT_SCHEMA: &str = "cosparse-admm/report/v1";

/// `max_gram_deviation` at or below which the reduced H form is used.
pub const TIGHT_FRAME_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HForm {
    /// `(1/β)‖λ‖² + β‖x‖²`
    Reduced,
    /// `(1/β)‖λ‖² + β‖Dx‖²`
    Full,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct HMetric<T> {
    pub beta: T,
    pub form: HForm,
}

impl<T: Real> HMetric<T> {
    pub fn for_frame(frame: &TightFrame<T>, beta: T) -> Self {
        let form = if frame.report().max_gram_deviation <= T::lit(TIGHT_FRAME_TOL) {
            HForm::Reduced
        } else {
            HForm::Full
        };
        Self { beta, form }
    }

    pub fn dist_sq(&self, frame: &TightFrame<T>, l1: &[T], x1: &[T], l2: &[T], x2: &[T]) -> T {
        match self.form {
            HForm::Reduced => h_norm_sq(l1, x1, l2, x2, self.beta),
            HForm::Full => {
                let dd = frame.apply(&sub(x1, x2));
                dist_sq(l1, l2) / self.beta + self.beta * norm_sq(&dd)
            }
        }
    }
}

/// `(1/β)‖λ₁ − λ₂‖² + β‖x₁ − x₂‖²`
pub fn h_norm_sq<T: Real>(l1: &[T], x1: &[T], l2: &[T], x2: &[T], beta: T) -> T {
    dist_sq(l1, l2) / beta + beta * dist_sq(x1, x2)
}

/// Allowance model: a record passes when `margin ≥ −(abs + rel·scale)` where
/// `scale = 1 + magnitude of the dominant terms`. Each check has its own `rel`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct Tolerances<T> {
    pub abs: T,
    pub lemma1_rel: T,
    pub identity_rel: T,
    pub lemma3_rel: T,
    pub contraction_rel: T,
    /// Absolute slack on `‖v^{k+1} − v*‖_H² ≤ ‖v^k − v*‖_H²`.
    pub monotone_abs: T,
    pub summability_rel: T,
    pub ergodic_rel: T,
    pub skew_rel: T,
    /// Relative slack on `Dx^{k+1} − z^{k+1} = (λ^k − λ^{k+1})/β`; no `abs` term.
    pub multiplier_rel: T,
}

impl<T: Real> Default for Tolerances<T> {
    fn default() -> Self {
        Self {
            abs: T::lit(1e-10),
            lemma1_rel: T::lit(1e-7),
            identity_rel: T::lit(1e-8),
            lemma3_rel: T::lit(1e-8),
            contraction_rel: T::lit(1e-7),
            monotone_abs: T::lit(1e-9),
            summability_rel: T::lit(1e-6),
            ergodic_rel: T::lit(1e-7),
            skew_rel: T::lit(1e-10),
            multiplier_rel: T::lit(1e-12),
        }
    }
}

impl<T: Real> Tolerances<T> {
    fn allowance(&self, rel: T, scale: T) -> T {
        self.abs + rel * scale
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct CertifyConfig<T> {
    /// Horizons for the ergodic bound. Horizons longer than the trace allows
    /// are skipped with a note.
    pub t_list: Vec<usize>,
    /// Random probes for the ergodic bound (in addition to `ω*`).
    pub probe_count: usize,
    pub lemma1_probes: usize,
    /// Random probes for the identity check at each sampled k.
    pub lemma2_probes: usize,
    pub skew_pairs: usize,
    pub probe_radii: Vec<T>,
    pub seed: u64,
    pub tolerances: Tolerances<T>,
    pub reference_tol: T,
    pub reference_max_iters: usize,
    /// KKT bound a reference must meet before it is used as `ω*`.
    pub reference_kkt_tol: T,
    pub zero_tol: T,
    /// Bound on `‖αMᵀ(Mx⁰ − y) − Dᵀλ⁰‖∞ / (1 + ‖αMᵀ(Mx⁰ − y)‖∞)` for the
    /// start to count as consistent.
    pub consistency_tol: T,
}

impl<T: Real> Default for CertifyConfig<T> {
    fn default() -> Self {
        Self {
            t_list: vec![10, 100, 1000],
            probe_count: 20,
            lemma1_probes: 20,
            lemma2_probes: 20,
            skew_pairs: 200,
            probe_radii: vec![T::lit(0.1), T::one(), T::lit(10.0)],
            seed: 0,
            tolerances: Tolerances::default(),
            reference_tol: T::lit(1e-12),
            reference_max_iters: 2_000_000,
            reference_kkt_tol: T::lit(1e-8),
            zero_tol: T::lit(1e-9),
            consistency_tol: T::lit(1e-9),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct ContractionRecord<T> {
    pub k: usize,
    /// `‖v^k − v*‖_H²`
    pub dist_k: T,
    /// `‖v^{k+1} − v*‖_H²`
    pub dist_next: T,
    /// `‖v^k − v^{k+1}‖_H²`
    pub step: T,
    /// `dist_k − dist_next − step`
    pub margin: T,
    pub allowance: T,
    pub monotone: bool,
    pub in_hypothesis: bool,
}

impl<T: Real> ContractionRecord<T> {
    pub fn pass(&self) -> bool {
        self.margin >= -self.allowance && self.monotone
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct Lemma3Record<T> {
    pub k: usize,
    /// `β‖Dx^k − z^{k+1}‖²`
    pub lhs42: T,
    /// `β‖Dx^k − Dx^{k+1}‖² + (1/β)‖λ^k − λ^{k+1}‖²`
    pub rhs42: T,
    pub margin42: T,
    /// `(λ^k − λ^{k+1})ᵀ(Dx^k − Dx^{k+1})`
    pub value45: T,
    /// `|margin42 − 2·value45|`
    pub identity_defect: T,
    pub scale: T,
    pub in_hypothesis: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct Lemma2Record<T> {
    pub k: usize,
    pub probe: String,
    pub lhs: T,
    pub rhs: T,
    pub defect: T,
    pub scale: T,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct Lemma1Record<T> {
    pub k: usize,
    pub radius: T,
    pub lhs: T,
    pub rhs: T,
    pub slack: T,
    pub scale: T,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct SummabilityRecord<T> {
    /// First step included in the sum.
    pub start_k: usize,
    pub lhs_partial: T,
    /// `‖v^{start_k} − v*‖_H²`
    pub rhs: T,
    /// Smallest `rhs − prefix_sum` over all prefixes.
    pub worst_prefix_margin: T,
    pub allowance: T,
    /// Largest step in the last quarter is below the largest in the first quarter.
    pub tail_decay: bool,
    pub in_hypothesis: bool,
}

impl<T: Real> SummabilityRecord<T> {
    pub fn pass(&self) -> bool {
        self.worst_prefix_margin >= -self.allowance
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct ErgodicRecord<T> {
    pub t: usize,
    pub probe: String,
    /// `θ(ū_t) − θ(u) + (ω̄_t − ω)ᵀF(ω)`
    pub gap_lhs: T,
    pub bound_rhs: T,
    /// `(1/β)‖λ⁰ − λ‖² + β‖Dx⁰ − z‖²`
    pub initial_quantity: T,
    /// `gap_lhs·2(t+1)/initial_quantity`; absent when the initial quantity is 0.
    pub ratio: Option<T>,
    pub scale: T,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct SkewRecord<T> {
    pub pairs: usize,
    /// `max defect / (1 + ‖ω − ω̄‖²)`
    pub max_normalized_defect: T,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckStatus {
    Pass,
    Fail,
    Skipped,
    /// Evaluated, but the hypotheses of the underlying result do not hold.
    OutOfScope,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct CheckOutcome<T> {
    pub name: String,
    pub status: CheckStatus,
    pub records: usize,
    pub violations: usize,
    /// Smallest `margin / scale` among in-hypothesis records; negative values
    /// are relative violations.
    pub worst_margin: Option<T>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct ReferenceInfo<T> {
    pub k: usize,
    pub omega: ViPoint<T>,
    pub kkt: KktResiduals<T>,
    pub certified: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct CertificationReport<T> {
    pub schema: String,
    pub beta: T,
    pub iters_run: usize,
    pub h_metric: HMetric<T>,
    pub initial_consistent: bool,
    pub initial_stationarity_residual: T,
    pub reference: Option<ReferenceInfo<T>>,
    pub contraction: Vec<ContractionRecord<T>>,
    pub lemma3: Vec<Lemma3Record<T>>,
    pub lemma2: Vec<Lemma2Record<T>>,
    pub lemma1: Vec<Lemma1Record<T>>,
    pub summability: Option<SummabilityRecord<T>>,
    /// Sum from `k = 0` when the start is inconsistent; informational.
    pub summability_from_zero: Option<SummabilityRecord<T>>,
    pub ergodic: Vec<ErgodicRecord<T>>,
    /// `max_t |bound_rhs(t)·(t+1) − bound_rhs(t₀)·(t₀+1)| / bound_rhs(t₀)·(t₀+1)` per probe.
    pub ergodic_scaling_defect: T,
    pub skew: SkewRecord<T>,
    /// `max_k ‖Dx^{k+1} − z^{k+1} − (λ^k − λ^{k+1})/β‖∞ / scale`
    pub multiplier_link_defect: T,
    pub checks: Vec<CheckOutcome<T>>,
    pub overall_pass: bool,
    pub worst_margin: T,
    pub tolerances: Tolerances<T>,
    pub notes: Vec<String>,
    pub skipped: Vec<String>,
}

impl<T: Real> CertificationReport<T> {
    pub fn check(&self, name: &str) -> Option<&CheckOutcome<T>> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn failed_checks(&self) -> Vec<&str> {
        self.checks
            .iter()
            .filter(|c| c.status == CheckStatus::Fail)
            .map(|c| c.name.as_str())
            .collect()
    }

    /// `‖v^k − v*‖_H` for `k = 0..=iters_run`, when a reference was certified.
    pub fn h_distances(&self) -> Option<Vec<T>> {
        if self.contraction.is_empty() {
            return None;
        }
        let mut out: Vec<T> = self.contraction.iter().map(|r| r.dist_k.sqrt()).collect();
        out.push(self.contraction.last()?.dist_next.sqrt());
        Some(out)
    }
}

fn require_stride_one<T: Real>(trace: &SolverTrace<T>) -> Result<()> {
    if !trace.is_stride_one() {
        return Err(Error::InsufficientTrace(format!(
            "certificates need every iterate; trace has {} of {} (record_every = {})",
            trace.iterates.len(),
            trace.iters_run + 1,
            trace.config.record_every
        )));
    }
    if trace.iters_run == 0 {
        return Err(Error::InsufficientTrace("trace has no iterations".into()));
    }
    Ok(())
}

/// `‖αMᵀ(Mx⁰ − y) − Dᵀλ⁰‖∞ / (1 + ‖αMᵀ(Mx⁰ − y)‖∞)`
pub fn initial_stationarity_residual<T: Real>(instance: &ProblemInstance<T>, omega0: &ViPoint<T>) -> T {
    let g = instance.fidelity_gradient(&omega0.x);
    let r = norm_inf(&sub(&g, &instance.frame().apply_t(&omega0.lambda)));
    r / (T::one() + norm_inf(&g))
}

fn is_consistent_start<T: Real>(instance: &ProblemInstance<T>, trace: &SolverTrace<T>, tol: T) -> bool {
    initial_stationarity_residual(instance, &trace.iterates[0].omega) <= tol
}

fn dx_all<T: Real>(instance: &ProblemInstance<T>, trace: &SolverTrace<T>) -> Vec<Vec<T>> {
    trace
        .iterates
        .iter()
        .map(|it| instance.frame().apply(&it.omega.x))
        .collect()
}

fn probe_terms<T: Real>(
    w: &ViPoint<T>,
    dxk: &[T],
    dxk1: &[T],
    next: &ViPoint<T>,
    lambda_k: &[T],
    beta: T,
) -> (T, T) {
    let a = beta * dot(&sub(&w.z, &next.z), &sub(dxk, dxk1));
    let b = dot(&sub(&w.lambda, &next.lambda), &sub(lambda_k, &next.lambda)) / beta;
    (a, b)
}

/// Both sides of the identity
///
/// `β(z − z^{k+1})ᵀ(Dx^k − Dx^{k+1}) + (1/β)(λ − λ^{k+1})ᵀ(λ^k − λ^{k+1})
///   = (1/2β)(‖λ^{k+1} − λ‖² − ‖λ^k − λ‖²) + (β/2)(‖Dx^{k+1} − z‖² − ‖Dx^k − z‖²)
///     + (β/2)‖Dx^k − z^{k+1}‖²`
///
/// at every `k` for one probe `ω`.
pub fn check_lemma2_identity<T: Real>(
    trace: &SolverTrace<T>,
    instance: &ProblemInstance<T>,
    probe: &ViPoint<T>,
    label: &str,
) -> Result<Vec<Lemma2Record<T>>> {
    require_stride_one(trace)?;
    let dx = dx_all(instance, trace);
    Ok((0..trace.iters_run)
        .map(|k| lemma2_at(trace, &dx, k, probe, label))
        .collect())
}

fn lemma2_at<T: Real>(
    trace: &SolverTrace<T>,
    dx: &[Vec<T>],
    k: usize,
    w: &ViPoint<T>,
    label: &str,
) -> Lemma2Record<T> {
    let beta = trace.beta();
    let cur = &trace.iterates[k].omega;
    let next = &trace.iterates[k + 1].omega;
    let (a, b) = probe_terms(w, &dx[k], &dx[k + 1], next, &cur.lambda, beta);
    let lhs = a + b;
    let h = T::half();
    let terms = [
        -h / beta * dist_sq(&cur.lambda, &w.lambda),
        -h * beta * dist_sq(&dx[k], &w.z),
        h / beta * dist_sq(&next.lambda, &w.lambda),
        h * beta * dist_sq(&dx[k + 1], &w.z),
        h * beta * dist_sq(&dx[k], &next.z),
    ];
    let rhs = terms.iter().fold(T::zero(), |s, &t| s + t);
    let scale = T::one() + a.abs() + b.abs() + terms.iter().fold(T::zero(), |s, t| s + t.abs());
    Lemma2Record {
        k,
        probe: label.to_string(),
        lhs,
        rhs,
        defect: (lhs - rhs).abs(),
        scale,
    }
}

/// Per-step quantities of the sufficient-decrease inequality and its
/// cross-term form. `in_hypothesis` is false at `k = 0` unless the start is
/// consistent.
pub fn check_lemma3<T: Real>(
    trace: &SolverTrace<T>,
    instance: &ProblemInstance<T>,
    consistency_tol: T,
) -> Result<Vec<Lemma3Record<T>>> {
    require_stride_one(trace)?;
    let beta = trace.beta();
    let consistent = is_consistent_start(instance, trace, consistency_tol);
    let dx = dx_all(instance, trace);
    Ok((0..trace.iters_run)
        .map(|k| {
            let cur = &trace.iterates[k].omega;
            let next = &trace.iterates[k + 1].omega;
            let lhs42 = beta * dist_sq(&dx[k], &next.z);
            let ddx = dist_sq(&dx[k], &dx[k + 1]);
            let dl = dist_sq(&cur.lambda, &next.lambda);
            let rhs42 = beta * ddx + dl / beta;
            let margin42 = lhs42 - rhs42;
            let value45 = dot(&sub(&cur.lambda, &next.lambda), &sub(&dx[k], &dx[k + 1]));
            Lemma3Record {
                k,
                lhs42,
                rhs42,
                margin42,
                value45,
                identity_defect: (margin42 - T::two() * value45).abs(),
                scale: T::one() + lhs42 + rhs42,
                in_hypothesis: k >= 1 || consistent,
            }
        })
        .collect())
}

/// H-norm contraction toward `v* = (λ*, x*)` at every step.
pub fn check_contraction<T: Real>(
    trace: &SolverTrace<T>,
    instance: &ProblemInstance<T>,
    metric: &HMetric<T>,
    v_star: &ViPoint<T>,
    tolerances: &Tolerances<T>,
    consistency_tol: T,
) -> Result<Vec<ContractionRecord<T>>> {
    require_stride_one(trace)?;
    let consistent = is_consistent_start(instance, trace, consistency_tol);
    let frame = instance.frame();
    let dist = |w: &ViPoint<T>| metric.dist_sq(frame, &w.lambda, &w.x, &v_star.lambda, &v_star.x);
    let its = &trace.iterates;
    let scale = T::one() + dist(&its[0].omega);
    let allowance = tolerances.contraction_rel * scale;
    let mut dk = dist(&its[0].omega);
    Ok((0..trace.iters_run)
        .map(|k| {
            let cur = &its[k].omega;
            let next = &its[k + 1].omega;
            let dn = dist(next);
            let step = metric.dist_sq(frame, &cur.lambda, &cur.x, &next.lambda, &next.x);
            let rec = ContractionRecord {
                k,
                dist_k: dk,
                dist_next: dn,
                step,
                margin: dk - dn - step,
                allowance,
                monotone: dn.sqrt() <= dk.sqrt() + tolerances.monotone_abs,
                in_hypothesis: k >= 1 || consistent,
            };
            dk = dn;
            rec
        })
        .collect())
}

/// Prefix sums of `‖v^k − v^{k+1}‖_H²` from `start_k` against `‖v^{start_k} − v*‖_H²`.
pub fn check_summability<T: Real>(
    trace: &SolverTrace<T>,
    instance: &ProblemInstance<T>,
    metric: &HMetric<T>,
    v_star: &ViPoint<T>,
    start_k: usize,
    tolerances: &Tolerances<T>,
) -> Result<SummabilityRecord<T>> {
    require_stride_one(trace)?;
    if start_k >= trace.iters_run {
        return Err(Error::InsufficientTrace(format!(
            "summability from k={start_k} needs more than {} iterations",
            trace.iters_run
        )));
    }
    let frame = instance.frame();
    let its = &trace.iterates;
    let v0 = &its[start_k].omega;
    let rhs = metric.dist_sq(frame, &v0.lambda, &v0.x, &v_star.lambda, &v_star.x);
    let steps: Vec<T> = (start_k..trace.iters_run)
        .map(|k| {
            let (a, b) = (&its[k].omega, &its[k + 1].omega);
            metric.dist_sq(frame, &a.lambda, &a.x, &b.lambda, &b.x)
        })
        .collect();
    let mut partial = T::zero();
    let mut worst = rhs;
    for &s in &steps {
        partial = partial + s;
        worst = worst.min(rhs - partial);
    }
    let q = (steps.len() / 4).max(1);
    let head = steps[..q].iter().fold(T::zero(), |m, &s| m.max(s));
    let tail = steps[steps.len() - q..].iter().fold(T::zero(), |m, &s| m.max(s));
    Ok(SummabilityRecord {
        start_k,
        lhs_partial: partial,
        rhs,
        worst_prefix_margin: worst,
        allowance: tolerances.summability_rel * (T::one() + rhs),
        tail_decay: tail < head || head == T::zero(),
        in_hypothesis: true,
    })
}

/// `ω̄_t = (1/(t+1)) Σ_{k=0}^{t} ω^{k+1}`
pub fn ergodic_average<T: Real>(trace: &SolverTrace<T>, t: usize) -> Result<ViPoint<T>> {
    require_stride_one(trace)?;
    if t + 1 > trace.iters_run {
        return Err(Error::InsufficientTrace(format!(
            "ergodic average at t={t} needs iterates 1..={}, trace has {}",
            t + 1,
            trace.iters_run
        )));
    }
    let first = &trace.iterates[1].omega;
    let mut acc = ViPoint::zeros(first.z.len(), first.x.len());
    for it in &trace.iterates[1..=t + 1] {
        add_into(&mut acc.z, &it.omega.z);
        add_into(&mut acc.x, &it.omega.x);
        add_into(&mut acc.lambda, &it.omega.lambda);
    }
    let inv = T::one() / T::from_usize(t + 1).expect("t representable");
    for v in acc.z.iter_mut().chain(acc.x.iter_mut()).chain(acc.lambda.iter_mut()) {
        *v = *v * inv;
    }
    Ok(acc)
}

fn add_into<T: Real>(acc: &mut [T], v: &[T]) {
    for (a, &b) in acc.iter_mut().zip(v) {
        *a = *a + b;
    }
}

/// `(1/β)‖λ⁰ − λ‖² + β‖Dx⁰ − z‖²` for probe `ω`.
pub fn ergodic_initial_quantity<T: Real>(
    trace: &SolverTrace<T>,
    instance: &ProblemInstance<T>,
    probe: &ViPoint<T>,
) -> T {
    let beta = trace.beta();
    let w0 = &trace.iterates[0].omega;
    dist_sq(&w0.lambda, &probe.lambda) / beta + beta * dist_sq(&instance.frame().apply(&w0.x), &probe.z)
}

pub fn check_ergodic_rate<T: Real>(
    trace: &SolverTrace<T>,
    instance: &ProblemInstance<T>,
    probe: &ViPoint<T>,
    label: &str,
    t_list: &[usize],
) -> Result<Vec<ErgodicRecord<T>>> {
    let q0 = ergodic_initial_quantity(trace, instance, probe);
    let f_probe = f_apply(instance, probe);
    let theta_probe = theta(instance, &probe.z, &probe.x);
    t_list
        .iter()
        .map(|&t| {
            let avg = ergodic_average(trace, t)?;
            let th = theta(instance, &avg.z, &avg.x);
            let cross = avg.sub(probe).dot(&f_probe);
            let gap_lhs = th - theta_probe + cross;
            let t1 = T::from_usize(t + 1).expect("t representable");
            let bound_rhs = q0 / (T::two() * t1);
            Ok(ErgodicRecord {
                t,
                probe: label.to_string(),
                gap_lhs,
                bound_rhs,
                initial_quantity: q0,
                ratio: (q0 > T::zero()).then(|| gap_lhs * T::two() * t1 / q0),
                scale: T::one() + th.abs() + theta_probe.abs() + cross.abs(),
            })
        })
        .collect()
}

/// Uniform probe on the sphere of `radius` around `center` in `(z, x, λ)` space.
pub fn sphere_probe<T: Real>(rng: &mut SeededRng, center: &ViPoint<T>, radius: T) -> ViPoint<T> {
    let p = rng::on_sphere(rng, &center.stacked(), radius);
    let (n, d) = (center.z.len(), center.x.len());
    ViPoint::new(p[..n].to_vec(), p[n..n + d].to_vec(), p[n + d..].to_vec())
}

/// `{0, 1, 2, 4, 8, …} ∪ {last}` restricted to `0..=last`.
pub fn sampled_steps(last: usize) -> Vec<usize> {
    let mut ks = vec![0];
    let mut k = 1;
    while k <= last {
        ks.push(k);
        k *= 2;
    }
    if *ks.last().expect("non-empty") != last {
        ks.push(last);
    }
    ks
}

/// Probe-based check of the per-step VI at the sampled steps: `probes_per_k`
/// sphere probes around `ω^{k+1}`, plus steps of each radius along every
/// `z`-coordinate in both directions.
pub fn check_lemma1<T: Real>(
    trace: &SolverTrace<T>,
    instance: &ProblemInstance<T>,
    probes_per_k: usize,
    radii: &[T],
    rng: &mut SeededRng,
) -> Result<Vec<Lemma1Record<T>>> {
    require_stride_one(trace)?;
    if radii.is_empty() {
        return Err(Error::InvalidConfig("probe_radii must be non-empty".into()));
    }
    let beta = trace.beta();
    let frame = instance.frame();
    let mut out = Vec::new();
    for k in sampled_steps(trace.iters_run - 1) {
        let cur = &trace.iterates[k].omega;
        let next = &trace.iterates[k + 1].omega;
        let (dxk, dxk1) = (frame.apply(&cur.x), frame.apply(&next.x));
        let theta_next = theta(instance, &next.z, &next.x);
        let mut probes = Vec::with_capacity(probes_per_k + 2 * next.z.len() * radii.len());
        for i in 0..probes_per_k {
            let radius = radii[i % radii.len()];
            probes.push((radius, sphere_probe(rng, next, radius)));
        }
        for &radius in radii {
            for j in 0..next.z.len() {
                for step in [radius, -radius] {
                    let mut w = next.clone();
                    w.z[j] = w.z[j] + step;
                    probes.push((radius, w));
                }
            }
        }
        for (radius, w) in probes {
            let th = theta(instance, &w.z, &w.x);
            let cross = w.sub(next).dot(&f_apply(instance, &w));
            let lhs = th - theta_next + cross;
            let (a, b) = probe_terms(&w, &dxk, &dxk1, next, &cur.lambda, beta);
            let rhs = a + b;
            out.push(Lemma1Record {
                k,
                radius,
                lhs,
                rhs,
                slack: lhs - rhs,
                scale: T::one() + th.abs() + theta_next.abs() + cross.abs() + a.abs() + b.abs(),
            });
        }
    }
    Ok(out)
}

/// Skew defects of `F` on random pairs drawn on spheres about the origin.
pub fn check_skew<T: Real>(
    instance: &ProblemInstance<T>,
    pairs: usize,
    radii: &[T],
    rng: &mut SeededRng,
) -> SkewRecord<T> {
    let origin = ViPoint::zeros(instance.n(), instance.d());
    let mut worst = T::zero();
    for i in 0..pairs {
        let r = radii.get(i % radii.len().max(1)).copied().unwrap_or(T::one());
        let a = sphere_probe(rng, &origin, r);
        let b = sphere_probe(rng, &origin, r);
        let gap = a.sub(&b);
        let d = skew_defect(instance, &a, &b) / (T::one() + gap.dot(&gap));
        worst = worst.max(d);
    }
    SkewRecord {
        pairs,
        max_normalized_defect: worst,
    }
}

/// `max_k ‖Dx^{k+1} − z^{k+1} − (λ^k − λ^{k+1})/β‖∞ / scale_k`.
pub fn multiplier_link_defect<T: Real>(trace: &SolverTrace<T>, instance: &ProblemInstance<T>) -> Result<T> {
    require_stride_one(trace)?;
    let beta = trace.beta();
    let mut worst = T::zero();
    for k in 0..trace.iters_run {
        let cur = &trace.iterates[k].omega;
        let next = &trace.iterates[k + 1].omega;
        let dx = instance.frame().apply(&next.x);
        let lhs = sub(&dx, &next.z);
        let rhs: Vec<T> = cur.lambda.iter().zip(&next.lambda).map(|(&a, &b)| (a - b) / beta).collect();
        let scale = T::one() + norm_inf(&dx) + norm_inf(&next.z) + norm_inf(&cur.lambda) / beta;
        worst = worst.max(norm_inf(&sub(&lhs, &rhs)) / scale);
    }
    Ok(worst)
}

struct Tally<T> {
    records: usize,
    violations: usize,
    worst: Option<T>,
}

impl<T: Real> Tally<T> {
    fn new() -> Self {
        Self {
            records: 0,
            violations: 0,
            worst: None,
        }
    }

    fn add(&mut self, margin: T, allowance: T, scale: T) {
        self.records += 1;
        if !(margin >= -allowance) {
            self.violations += 1;
        }
        let m = margin / scale;
        self.worst = Some(match self.worst {
            Some(w) if !(m < w) => w,
            _ => m,
        });
    }

    fn outcome(self, name: &str, status_if_ran: Option<CheckStatus>, note: Option<String>) -> CheckOutcome<T> {
        let status = status_if_ran.unwrap_or(if self.violations == 0 {
            CheckStatus::Pass
        } else {
            CheckStatus::Fail
        });
        CheckOutcome {
            name: name.to_string(),
            status,
            records: self.records,
            violations: self.violations,
            worst_margin: self.worst,
            note,
        }
    }
}

/// Computes a high-accuracy reference, then certifies the trace against it.
pub fn certify_all<T: Real>(
    trace: &SolverTrace<T>,
    instance: &ProblemInstance<T>,
    config: &CertifyConfig<T>,
) -> Result<CertificationReport<T>> {
    let cfg = ReferenceConfig {
        beta: trace.beta(),
        tol: config.reference_tol,
        max_iters: config.reference_max_iters,
    };
    match reference_solution(instance, &cfg) {
        Ok(r) => certify_with_reference(trace, instance, config, Some(&r)),
        Err(Error::ReferenceUnavailable(msg)) => {
            let mut rep = certify_with_reference(trace, instance, config, None)?;
            rep.notes.push(format!("reference run: {msg}"));
            Ok(rep)
        }
        Err(e) => Err(e),
    }
}

/// Certifies `trace` using `reference` as the candidate `ω*`. The reference
/// is used only if its KKT residuals are within `reference_kkt_tol`;
/// otherwise every check that needs `ω*` is reported as skipped.
pub fn certify_with_reference<T: Real>(
    trace: &SolverTrace<T>,
    instance: &ProblemInstance<T>,
    config: &CertifyConfig<T>,
    reference: Option<&AdmmIterate<T>>,
) -> Result<CertificationReport<T>> {
    require_stride_one(trace)?;
    let tol = &config.tolerances;
    let beta = trace.beta();
    let metric = HMetric::for_frame(instance.frame(), beta);
    let mut rng = rng::seeded(rng::sub_seed(config.seed, rng::stream::PROBES));
    let mut notes = Vec::new();
    let mut skipped = Vec::new();
    let mut checks = Vec::new();

    let init_res = initial_stationarity_residual(instance, &trace.iterates[0].omega);
    let consistent = init_res <= config.consistency_tol;
    if !consistent {
        notes.push(format!(
            "start is not x-stationary (relative residual {init_res:.3e}); k=0 records of lemma3, \
             contraction and summability are outside the hypothesis and excluded"
        ));
    }
    if metric.form == HForm::Full {
        notes.push("non-tight frame: full H metric used, contraction out of theorem scope".into());
    }
    notes.push("suprema over ω are approximated by seeded sphere probes".into());

    let reference = match reference {
        Some(r) => {
            let kkt = kkt_residuals(instance, &r.omega, config.zero_tol)?;
            let certified = kkt.within(config.reference_kkt_tol);
            if !certified {
                notes.push(format!(
                    "reference KKT residual {:.3e} exceeds {:.1e}",
                    kkt.max(),
                    config.reference_kkt_tol
                ));
            }
            Some(ReferenceInfo {
                k: r.k,
                omega: r.omega.clone(),
                kkt,
                certified,
            })
        }
        None => None,
    };
    let star = reference.as_ref().filter(|r| r.certified).map(|r| &r.omega);

    // lemma 1
    let lemma1 = check_lemma1(trace, instance, config.lemma1_probes, &config.probe_radii, &mut rng)?;
    let mut t = Tally::new();
    for r in &lemma1 {
        t.add(r.slack, tol.allowance(tol.lemma1_rel, r.scale), r.scale);
    }
    checks.push(t.outcome("lemma1", None, None));

    // lemma 2 identity: every k against ω* (or the final iterate) and ω^{k+1};
    // random probes at the sampled steps
    let dx = dx_all(instance, trace);
    let anchor = star.unwrap_or(&trace.final_iterate().omega);
    let mut lemma2 = Vec::new();
    for k in 0..trace.iters_run {
        lemma2.push(lemma2_at(trace, &dx, k, anchor, "anchor"));
        lemma2.push(lemma2_at(trace, &dx, k, &trace.iterates[k + 1].omega, "next"));
    }
    for k in sampled_steps(trace.iters_run - 1) {
        for i in 0..config.lemma2_probes {
            let r = config.probe_radii[i % config.probe_radii.len()];
            let w = sphere_probe(&mut rng, &trace.iterates[k + 1].omega, r);
            lemma2.push(lemma2_at(trace, &dx, k, &w, &format!("sphere{i}")));
        }
    }
    let mut t = Tally::new();
    for r in &lemma2 {
        t.add(-r.defect, tol.allowance(tol.identity_rel, r.scale), r.scale);
    }
    checks.push(t.outcome("lemma2_identity", None, None));

    // lemma 3 and the cross-term identity
    let lemma3 = check_lemma3(trace, instance, config.consistency_tol)?;
    let mut t42 = Tally::new();
    let mut t45 = Tally::new();
    let mut t46 = Tally::new();
    for r in lemma3.iter().filter(|r| r.in_hypothesis) {
        let allow = tol.allowance(tol.lemma3_rel, r.scale);
        t42.add(r.margin42, allow, r.scale);
        t45.add(r.value45, allow, r.scale);
    }
    for r in &lemma3 {
        t46.add(-r.identity_defect, tol.allowance(tol.identity_rel, r.scale), r.scale);
    }
    checks.push(t42.outcome("lemma3", None, None));
    checks.push(t45.outcome("lemma3_cross_term", None, None));
    checks.push(t46.outcome("lemma3_identity", None, None));

    // contraction and summability
    let mut contraction = Vec::new();
    let mut summability = None;
    let mut summability_from_zero = None;
    let scope = (metric.form == HForm::Full).then_some(CheckStatus::OutOfScope);
    if let Some(vs) = star {
        contraction = check_contraction(trace, instance, &metric, vs, tol, config.consistency_tol)?;
        let mut t = Tally::new();
        let mut mono = Tally::new();
        for r in contraction.iter().filter(|r| r.in_hypothesis) {
            t.add(r.margin, r.allowance, r.allowance / tol.contraction_rel);
            mono.add(
                r.dist_k.sqrt() - r.dist_next.sqrt(),
                tol.monotone_abs,
                T::one(),
            );
        }
        checks.push(t.outcome("contraction", scope, None));
        checks.push(mono.outcome("h_distance_monotone", scope, None));

        let start = if consistent { 0 } else { 1 };
        let mut t = Tally::new();
        if start < trace.iters_run {
            let rec = check_summability(trace, instance, &metric, vs, start, tol)?;
            t.add(rec.worst_prefix_margin, rec.allowance, T::one() + rec.rhs);
            summability = Some(rec);
        }
        checks.push(t.outcome("summability", scope, None));
        if !consistent {
            let mut rec = check_summability(trace, instance, &metric, vs, 0, tol)?;
            rec.in_hypothesis = false;
            summability_from_zero = Some(rec);
        }
    } else {
        let why = match &reference {
            None => "no reference solution",
            Some(_) => "reference failed KKT certification",
        };
        for name in ["contraction", "h_distance_monotone", "summability"] {
            skipped.push(format!("{name}: {why}"));
            checks.push(Tally::new().outcome(name, Some(CheckStatus::Skipped), Some(why.to_string())));
        }
    }

    // ergodic rate
    let max_t = trace.iters_run - 1;
    let t_list: Vec<usize> = config.t_list.iter().copied().filter(|&t| t <= max_t).collect();
    for &t in config.t_list.iter().filter(|&&t| t > max_t) {
        skipped.push(format!("ergodic t={t}: trace has {} iterations", trace.iters_run));
    }
    let center = star.unwrap_or(&trace.final_iterate().omega).clone();
    let mut ergodic = Vec::new();
    let mut scaling_defect = T::zero();
    if !t_list.is_empty() {
        let mut probes = vec![(if star.is_some() { "reference" } else { "final" }.to_string(), center.clone())];
        for i in 0..config.probe_count {
            let r = config.probe_radii[i % config.probe_radii.len()];
            probes.push((format!("sphere{i}"), sphere_probe(&mut rng, &center, r)));
        }
        for (label, p) in &probes {
            let recs = check_ergodic_rate(trace, instance, p, label, &t_list)?;
            let base = recs[0].bound_rhs * T::from_usize(recs[0].t + 1).expect("t representable");
            if base > T::zero() {
                for r in &recs {
                    let v = r.bound_rhs * T::from_usize(r.t + 1).expect("t representable");
                    scaling_defect = scaling_defect.max((v - base).abs() / base);
                }
            }
            ergodic.extend(recs);
        }
    }
    let mut t = Tally::new();
    for r in &ergodic {
        t.add(r.bound_rhs - r.gap_lhs, tol.allowance(tol.ergodic_rel, r.scale), r.scale);
    }
    checks.push(t.outcome(
        "ergodic",
        t_list.is_empty().then_some(CheckStatus::Skipped),
        None,
    ));

    // skew and multiplier link
    let skew = check_skew(instance, config.skew_pairs, &config.probe_radii, &mut rng);
    let mut t = Tally::new();
    t.add(-skew.max_normalized_defect, tol.skew_rel, T::one());
    checks.push(t.outcome("skew", None, None));

    let link = multiplier_link_defect(trace, instance)?;
    let mut t = Tally::new();
    t.add(-link, tol.multiplier_rel, T::one());
    checks.push(t.outcome("multiplier_link", None, None));

    let overall_pass = checks
        .iter()
        .all(|c| c.status != CheckStatus::Fail);
    let worst_margin = checks
        .iter()
        .filter(|c| matches!(c.status, CheckStatus::Pass | CheckStatus::Fail))
        .filter_map(|c| c.worst_margin)
        .fold(T::infinity(), T::min);

    Ok(CertificationReport {
        schema: REPORT_SCHEMA.to_string(),
        beta,
        iters_run: trace.iters_run,
        h_metric: metric,
        initial_consistent: consistent,
        initial_stationarity_residual: init_res,
        reference,
        contraction,
        lemma3,
        lemma2,
        lemma1,
        summability,
        summability_from_zero,
        ergodic,
        ergodic_scaling_defect: scaling_defect,
        skew,
        multiplier_link_defect: link,
        checks,
        overall_pass,
        worst_margin: if worst_margin.is_finite() { worst_margin } else { T::zero() },
        tolerances: tol.clone(),
        notes,
        skipped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Matrix;
    use crate::solver::{solve, SolverConfig};

    fn scalar(y: f64) -> ProblemInstance<f64> {
        ProblemInstance::new(Matrix::identity(1), vec![y], TightFrame::identity(1).unwrap(), 1.0).unwrap()
    }

    fn scalar_trace(y: f64, iters: usize) -> SolverTrace<f64> {
        solve(&scalar(y), &SolverConfig::default().fixed_iterations(iters)).unwrap()
    }

    #[test]
    fn h_norm_examples() {
        assert_eq!(h_norm_sq(&[1.0], &[2.0], &[1.0], &[2.0], 1.0), 0.0);
        assert_eq!(h_norm_sq(&[3.0], &[4.0], &[0.0], &[0.0], 1.0), 25.0);
        assert_eq!(h_norm_sq(&[3.0], &[4.0], &[0.0], &[0.0], 4.0), 66.25);
    }

    #[test]
    fn sampled_steps_are_powers_of_two_plus_last() {
        assert_eq!(sampled_steps(0), vec![0]);
        assert_eq!(sampled_steps(1), vec![0, 1]);
        assert_eq!(sampled_steps(10), vec![0, 1, 2, 4, 8, 10]);
        assert_eq!(sampled_steps(8), vec![0, 1, 2, 4, 8]);
    }

    #[test]
    fn scalar_lemma3_first_step() {
        // z¹ = 0, x¹ = 5, λ¹ = −5 from the origin
        let tr = scalar_trace(10.0, 3);
        let recs = check_lemma3(&tr, &scalar(10.0), 1e-9).unwrap();
        assert_eq!(recs[0].lhs42, 0.0);
        assert!((recs[0].rhs42 - 50.0).abs() < 1e-12);
        assert!((recs[0].value45 + 25.0).abs() < 1e-12);
        assert!(!recs[0].in_hypothesis);
        assert!(recs[1].in_hypothesis);
    }

    #[test]
    fn stride_is_enforced() {
        let inst = scalar(10.0);
        let cfg = SolverConfig { record_every: 2, ..SolverConfig::default().fixed_iterations(4) };
        let tr = solve(&inst, &cfg).unwrap();
        assert!(matches!(check_lemma3(&tr, &inst, 1e-9), Err(Error::InsufficientTrace(_))));
        assert!(matches!(ergodic_average(&tr, 1), Err(Error::InsufficientTrace(_))));
    }

    #[test]
    fn ergodic_average_small_cases() {
        let tr = scalar_trace(10.0, 5);
        let a = ergodic_average(&tr, 0).unwrap();
        assert_eq!(a, tr.iterates[1].omega);
        let b = ergodic_average(&tr, 1).unwrap();
        assert_eq!(b.x[0], (tr.iterates[1].omega.x[0] + tr.iterates[2].omega.x[0]) / 2.0);
        assert!(ergodic_average(&tr, 5).is_err());
    }

    #[test]
    fn stationary_trace_certifies_with_zero_margins() {
        let inst = scalar(10.0);
        let star = ViPoint::new(vec![9.0], vec![9.0], vec![-1.0]);
        let cfg = SolverConfig::default()
            .fixed_iterations(20)
            .with_start(Some(star.x.clone()), Some(star.lambda.clone()));
        let tr = solve(&inst, &cfg).unwrap();
        assert!(tr.iterates.iter().all(|it| it.omega == star));
        let cc = CertifyConfig { t_list: vec![10], ..CertifyConfig::default() };
        let rep = certify_with_reference(&tr, &inst, &cc, Some(&AdmmIterate { k: 0, omega: star })).unwrap();
        assert!(rep.overall_pass, "{:?}", rep.failed_checks());
        assert!(rep.initial_consistent);
        assert!(rep.contraction.iter().all(|r| r.margin == 0.0 && r.dist_k == 0.0));
        assert!(rep.lemma3.iter().all(|r| r.margin42 == 0.0 && r.value45 == 0.0));
        let e = rep.ergodic.iter().find(|r| r.probe == "reference").unwrap();
        assert!(e.gap_lhs <= 0.0 && e.bound_rhs == 0.0);
    }

    #[test]
    fn scalar_run_passes_everything() {
        let inst = scalar(10.0);
        let tr = scalar_trace(10.0, 1001);
        let rep = certify_all(&tr, &inst, &CertifyConfig::default()).unwrap();
        assert!(rep.overall_pass, "{:?}", rep.failed_checks());
        assert!(!rep.initial_consistent);
        assert_eq!(rep.ergodic.len(), 3 * 21);
        assert!(rep.ergodic_scaling_defect < 1e-12);
    }

    #[test]
    fn multiplier_sign_mutation_fails() {
        let inst = scalar(10.0);
        let cfg = SolverConfig::default().fixed_iterations(50);
        let tr = crate::solver::solve_mutated(&inst, &cfg, crate::solver::Mutation::MultiplierSign).unwrap();
        let cc = CertifyConfig { t_list: vec![10], ..CertifyConfig::default() };
        let rep = certify_all(&tr, &inst, &cc).unwrap();
        assert!(!rep.overall_pass);
        assert!(rep.failed_checks().contains(&"multiplier_link"));
    }

    #[test]
    fn axis_probes_flag_a_doubled_threshold() {
        let inst = scalar(10.0);
        let cfg = SolverConfig::default().fixed_iterations(20);
        let mut rng = rng::seeded(0);
        let clean = check_lemma1(&scalar_trace(10.0, 20), &inst, 0, &[0.1], &mut rng).unwrap();
        assert_eq!(clean.len(), 2 * sampled_steps(19).len());
        assert!(clean.iter().all(|r| r.slack >= -1e-12));
        let tr = crate::solver::solve_mutated(&inst, &cfg, crate::solver::Mutation::Threshold).unwrap();
        let bad = check_lemma1(&tr, &inst, 0, &[0.1], &mut rng).unwrap();
        assert!(bad.iter().any(|r| r.slack < -0.05), "{bad:?}");
    }

    #[test]
    fn report_serializes() {
        let inst = scalar(10.0);
        let tr = scalar_trace(10.0, 30);
        let cc = CertifyConfig { t_list: vec![10], ..CertifyConfig::default() };
        let rep = certify_all(&tr, &inst, &cc).unwrap();
        let s = serde_json::to_string(&rep).unwrap();
        let back: CertificationReport<f64> = serde_json::from_str(&s).unwrap();
        assert_eq!(back.overall_pass, rep.overall_pass);
        assert_eq!(back.h_distances().unwrap().len(), 31);
    }
}
