//! ADMM on the split analysis-LASSO problem.
//!
//! With `L_β(z, x, λ) = ‖z‖₁ + (α/2)‖y − Mx‖² − λᵀ(Dx − z) + (β/2)‖Dx − z‖²`
//! each iteration performs, in this order,
//!
//! ```text
//! z⁺ = argmin_z L_β(z, x, λ)   = shrink(Dx − λ/β, 1/β)
//! x⁺ = argmin_x L_β(z⁺, x, λ)  : (αMᵀM + βDᵀD) x⁺ = αMᵀy + Dᵀ(λ + βz⁺)
//! λ⁺ = λ − β(Dx⁺ − z⁺)
//! ```
//!
//! The update order matters: the certificates in [`crate::certify`] compare
//! `Dx^k` against `z^{k+1}`, which only has the right sign structure when z
//! is updated before x. The initial `z⁰` is not used by the scheme; traces
//! store `z⁰ = Dx⁰`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{all_finite, dist_sq, norm1, norm2, Cholesky, Matrix};
use crate::problem::ProblemInstance;
use crate::scalar::Real;
use crate::vi::ViPoint;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct SolverConfig<T> {
    /// Penalty β > 0.
    pub beta: T,
    pub max_iters: usize,
    /// Convergence is not tested before this many iterations. Lets
    /// certification runs record a fixed-length trace.
    #[serde(default)]
    pub min_iters: usize,
    /// Bound on `‖Dx^k − z^k‖₂`.
    pub primal_tol: T,
    /// Bound on `β‖Dᵀ(z^k − z^{k−1})‖₂`.
    pub dual_tol: T,
    /// Keep every `record_every`-th iterate (plus the first and last).
    pub record_every: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<T>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda0: Option<Vec<T>>,
}

impl<T: Real> Default for SolverConfig<T> {
    fn default() -> Self {
        Self {
            beta: T::one(),
            max_iters: 100_000,
            min_iters: 0,
            primal_tol: T::lit(1e-8),
            dual_tol: T::lit(1e-8),
            record_every: 1,
            x0: None,
            lambda0: None,
        }
    }
}

impl<T: Real> SolverConfig<T> {
    pub fn with_beta(mut self, beta: T) -> Self {
        self.beta = beta;
        self
    }

    pub fn with_tolerances(mut self, primal: T, dual: T) -> Self {
        self.primal_tol = primal;
        self.dual_tol = dual;
        self
    }

    pub fn with_max_iters(mut self, max_iters: usize) -> Self {
        self.max_iters = max_iters;
        self
    }

    /// Runs exactly `iters` iterations regardless of residuals.
    pub fn fixed_iterations(mut self, iters: usize) -> Self {
        self.max_iters = iters;
        self.min_iters = iters;
        self
    }

    pub fn with_start(mut self, x0: Option<Vec<T>>, lambda0: Option<Vec<T>>) -> Self {
        self.x0 = x0;
        self.lambda0 = lambda0;
        self
    }

    /// Sets `λ⁰ = D·αMᵀ(Mx⁰ − y)`, which satisfies the x-stationarity
    /// relation `Dᵀλ⁰ = ∇θ₂(x⁰)` when `DᵀD = I`. With this start every
    /// iteration, including the first, satisfies the hypotheses of the
    /// iterate-pair inequalities checked by the certifier.
    pub fn with_stationary_multiplier(mut self, instance: &ProblemInstance<T>) -> Self {
        let x0 = self.x0.clone().unwrap_or_else(|| vec![T::zero(); instance.d()]);
        self.lambda0 = Some(stationary_multiplier(instance, &x0));
        self
    }

    pub fn validate(&self, instance: &ProblemInstance<T>) -> Result<()> {
        if !(self.beta > T::zero()) || !self.beta.is_finite() {
            return Err(Error::InvalidConfig(format!("beta must be > 0, got {}", self.beta)));
        }
        if !(self.primal_tol > T::zero()) || !(self.dual_tol > T::zero()) {
            return Err(Error::InvalidConfig("stopping tolerances must be > 0".into()));
        }
        if self.record_every == 0 {
            return Err(Error::InvalidConfig("record_every must be >= 1".into()));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidConfig("max_iters must be >= 1".into()));
        }
        if let Some(x0) = &self.x0 {
            if x0.len() != instance.d() || !all_finite(x0) {
                return Err(Error::InvalidConfig(format!(
                    "x0 must be a finite vector of length {}",
                    instance.d()
                )));
            }
        }
        if let Some(l0) = &self.lambda0 {
            if l0.len() != instance.n() || !all_finite(l0) {
                return Err(Error::InvalidConfig(format!(
                    "lambda0 must be a finite vector of length {}",
                    instance.n()
                )));
            }
        }
        Ok(())
    }
}

/// `λ = D ∇θ₂(x)`; see [`SolverConfig::with_stationary_multiplier`].
pub fn stationary_multiplier<T: Real>(instance: &ProblemInstance<T>, x: &[T]) -> Vec<T> {
    instance.frame().apply(&instance.fidelity_gradient(x))
}

/// One iterate `ω^k = (z^k, x^k, λ^k)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct AdmmIterate<T> {
    pub k: usize,
    #[serde(flatten)]
    pub omega: ViPoint<T>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct SolverTrace<T> {
    /// Caller-chosen label, typically the instance fingerprint.
    pub instance_ref: String,
    pub config: SolverConfig<T>,
    /// Recorded iterates, always including `k = 0` and the final one.
    pub iterates: Vec<AdmmIterate<T>>,
    /// Per iteration `k = 0..=iters_run`: `‖Dx^k − z^k‖₂`.
    pub primal_residuals: Vec<T>,
    /// Per iteration: `β‖Dᵀ(z^k − z^{k−1})‖₂` (0 at k = 0).
    pub dual_residuals: Vec<T>,
    /// Per iteration: `‖z^k‖₁ + (α/2)‖y − Mx^k‖²`.
    pub objective_values: Vec<T>,
    /// Per step `k → k+1`: relative residual `‖Ax − b‖/(1 + ‖b‖)` of the
    /// x-subproblem linear system.
    pub linear_residuals: Vec<T>,
    pub converged: bool,
    pub iters_run: usize,
}

impl<T: Real> SolverTrace<T> {
    /// True when every iteration `0..=iters_run` is present in order.
    pub fn is_stride_one(&self) -> bool {
        self.iterates.len() == self.iters_run + 1
            && self.iterates.iter().enumerate().all(|(i, it)| it.k == i)
    }

    pub fn final_iterate(&self) -> &AdmmIterate<T> {
        self.iterates.last().expect("trace always holds the initial iterate")
    }

    pub fn beta(&self) -> T {
        self.config.beta
    }
}

/// Componentwise `sign(v)·max(|v| − τ, 0)`. `|v| = τ` maps to 0.
pub fn soft_threshold<T: Real>(v: &[T], tau: T) -> Vec<T> {
    v.iter().map(|&vj| shrink(vj, tau)).collect()
}

#[inline]
fn shrink<T: Real>(v: T, tau: T) -> T {
    if v > tau {
        v - tau
    } else if v < -tau {
        v + tau
    } else {
        T::zero()
    }
}

/// `shrink(Dx − λ/β, 1/β)`
pub fn z_update<T: Real>(x: &[T], lambda: &[T], instance: &ProblemInstance<T>, beta: T) -> Vec<T> {
    let dx = instance.frame().apply(x);
    let v: Vec<T> = dx.iter().zip(lambda).map(|(&a, &l)| a - l / beta).collect();
    soft_threshold(&v, T::one() / beta)
}

/// Factorization of `αMᵀM + βDᵀD` for one `(instance, β)` pair.
#[derive(Clone, Debug)]
pub struct NormalCache<T> {
    system: Matrix<T>,
    chol: Cholesky<T>,
    /// `αMᵀy`
    data_rhs: Vec<T>,
    beta: T,
}

impl<T: Real> NormalCache<T> {
    pub fn new(instance: &ProblemInstance<T>, beta: T) -> Result<Self> {
        let a = instance.alpha();
        let m = instance.measurement();
        let system = m
            .gram()
            .scaled(a)
            .add(&instance.frame().matrix().gram().scaled(beta));
        let chol = Cholesky::factor(&system).map_err(|e| {
            Error::Numeric(format!(
                "x-subproblem matrix αMᵀM + βDᵀD is not positive definite \
                 (α={a}, β={beta}, frame lower bound {}): {e}",
                instance.frame().frame_lower()
            ))
        })?;
        let data_rhs: Vec<T> = m.tr_mul_vec(instance.y()).into_iter().map(|v| v * a).collect();
        Ok(Self {
            system,
            chol,
            data_rhs,
            beta,
        })
    }

    pub fn system(&self) -> &Matrix<T> {
        &self.system
    }

    pub fn beta(&self) -> T {
        self.beta
    }
}

/// Solution of the x-subproblem and the relative residual of its linear system.
#[derive(Clone, Debug)]
pub struct XStep<T> {
    pub x: Vec<T>,
    pub rhs: Vec<T>,
    pub relative_residual: T,
}

/// Minimizer of `(α/2)‖y − Mx‖² − λᵀDx + (β/2)‖Dx − z‖²`.
pub fn x_update<T: Real>(
    z: &[T],
    lambda: &[T],
    instance: &ProblemInstance<T>,
    cache: &NormalCache<T>,
) -> XStep<T> {
    x_update_signed(z, lambda, T::one(), instance, cache)
}

fn x_update_signed<T: Real>(
    z: &[T],
    lambda: &[T],
    lambda_sign: T,
    instance: &ProblemInstance<T>,
    cache: &NormalCache<T>,
) -> XStep<T> {
    let beta = cache.beta;
    let w: Vec<T> = lambda
        .iter()
        .zip(z)
        .map(|(&l, &zj)| lambda_sign * l + beta * zj)
        .collect();
    let mut rhs = instance.frame().apply_t(&w);
    for (r, &c) in rhs.iter_mut().zip(&cache.data_rhs) {
        *r = *r + c;
    }
    let x = cache.chol.solve(&rhs);
    let ax = cache.system.mul_vec(&x);
    let res = norm2(&crate::linalg::sub(&ax, &rhs));
    XStep {
        relative_residual: res / (T::one() + norm2(&rhs)),
        x,
        rhs,
    }
}

/// `λ − β(Dx⁺ − z⁺)`
pub fn multiplier_update<T: Real>(
    lambda: &[T],
    x_new: &[T],
    z_new: &[T],
    beta: T,
    instance: &ProblemInstance<T>,
) -> Vec<T> {
    let dx = instance.frame().apply(x_new);
    lambda
        .iter()
        .zip(dx.iter().zip(z_new))
        .map(|(&l, (&a, &zj))| l - beta * (a - zj))
        .collect()
}

/// Deliberate corruptions of one update, used to check that the certifier
/// notices broken iterations.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mutation {
    None,
    /// z-update shrinks by `2/β` instead of `1/β`.
    Threshold,
    /// x-update uses `Dᵀ(−λ + βz)` on the right-hand side.
    RhsSign,
    /// `λ⁺ = λ + β(Dx⁺ − z⁺)`.
    MultiplierSign,
}

struct Stepper<'a, T: Real> {
    instance: &'a ProblemInstance<T>,
    cache: NormalCache<T>,
    beta: T,
    mutation: Mutation,
    z: Vec<T>,
    x: Vec<T>,
    lambda: Vec<T>,
}

struct StepInfo<T> {
    primal: T,
    dual: T,
    linear_residual: T,
}

impl<'a, T: Real> Stepper<'a, T> {
    fn new(instance: &'a ProblemInstance<T>, config: &SolverConfig<T>, mutation: Mutation) -> Result<Self> {
        config.validate(instance)?;
        let cache = NormalCache::new(instance, config.beta)?;
        let x = config.x0.clone().unwrap_or_else(|| vec![T::zero(); instance.d()]);
        let lambda = config
            .lambda0
            .clone()
            .unwrap_or_else(|| vec![T::zero(); instance.n()]);
        let z = instance.frame().apply(&x);
        Ok(Self {
            instance,
            cache,
            beta: config.beta,
            mutation,
            z,
            x,
            lambda,
        })
    }

    fn omega(&self) -> ViPoint<T> {
        ViPoint::new(self.z.clone(), self.x.clone(), self.lambda.clone())
    }

    /// Advances from iterate `k` to `k + 1`.
    fn step(&mut self, k: usize) -> Result<StepInfo<T>> {
        let beta = self.beta;
        let tau_scale = if self.mutation == Mutation::Threshold { T::two() } else { T::one() };
        let dx = self.instance.frame().apply(&self.x);
        let v: Vec<T> = dx.iter().zip(&self.lambda).map(|(&a, &l)| a - l / beta).collect();
        let z_new = soft_threshold(&v, tau_scale / beta);

        let sign = if self.mutation == Mutation::RhsSign { -T::one() } else { T::one() };
        let xs = x_update_signed(&z_new, &self.lambda, sign, self.instance, &self.cache);

        let dx_new = self.instance.frame().apply(&xs.x);
        let mult_sign = if self.mutation == Mutation::MultiplierSign { -T::one() } else { T::one() };
        let lambda_new: Vec<T> = self
            .lambda
            .iter()
            .zip(dx_new.iter().zip(&z_new))
            .map(|(&l, (&a, &zj))| l - mult_sign * beta * (a - zj))
            .collect();

        let next = k + 1;
        if !all_finite(&z_new) {
            return Err(Error::Divergence { k: next, field: "z" });
        }
        if !all_finite(&xs.x) {
            return Err(Error::Divergence { k: next, field: "x" });
        }
        if !all_finite(&lambda_new) {
            return Err(Error::Divergence { k: next, field: "lambda" });
        }

        let primal = dist_sq(&dx_new, &z_new).sqrt();
        let dz = crate::linalg::sub(&z_new, &self.z);
        let dual = beta * norm2(&self.instance.frame().apply_t(&dz));
        self.z = z_new;
        self.x = xs.x;
        self.lambda = lambda_new;
        Ok(StepInfo {
            primal,
            dual,
            linear_residual: xs.relative_residual,
        })
    }
}

/// `θ(z, x) = ‖z‖₁ + (α/2)‖y − Mx‖²`
fn objective<T: Real>(instance: &ProblemInstance<T>, z: &[T], x: &[T]) -> T {
    norm1(z) + instance.fidelity(x)
}

/// Runs ADMM until both residuals fall below their tolerances (tested from
/// `min_iters` on) or `max_iters` is reached.
pub fn solve<T: Real>(instance: &ProblemInstance<T>, config: &SolverConfig<T>) -> Result<SolverTrace<T>> {
    solve_mutated(instance, config, Mutation::None)
}

/// [`solve`] with one update deliberately corrupted.
pub fn solve_mutated<T: Real>(
    instance: &ProblemInstance<T>,
    config: &SolverConfig<T>,
    mutation: Mutation,
) -> Result<SolverTrace<T>> {
    let mut st = Stepper::new(instance, config, mutation)?;
    let mut trace = SolverTrace {
        instance_ref: String::new(),
        config: config.clone(),
        iterates: vec![AdmmIterate { k: 0, omega: st.omega() }],
        primal_residuals: vec![T::zero()],
        dual_residuals: vec![T::zero()],
        objective_values: vec![objective(instance, &st.z, &st.x)],
        linear_residuals: Vec::new(),
        converged: false,
        iters_run: 0,
    };
    for k in 0..config.max_iters {
        let info = st.step(k)?;
        let next = k + 1;
        trace.primal_residuals.push(info.primal);
        trace.dual_residuals.push(info.dual);
        trace.linear_residuals.push(info.linear_residual);
        trace.objective_values.push(objective(instance, &st.z, &st.x));
        trace.iters_run = next;
        let done = next >= config.min_iters
            && info.primal <= config.primal_tol
            && info.dual <= config.dual_tol;
        if done {
            trace.converged = true;
        }
        if done || next == config.max_iters || next % config.record_every == 0 {
            trace.iterates.push(AdmmIterate { k: next, omega: st.omega() });
        }
        if done {
            break;
        }
    }
    Ok(trace)
}

/// Tolerances and budget for [`reference_solution`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct ReferenceConfig<T> {
    pub beta: T,
    pub tol: T,
    pub max_iters: usize,
}

impl<T: Real> ReferenceConfig<T> {
    pub fn for_beta(beta: T) -> Self {
        Self {
            beta,
            tol: T::lit(1e-12),
            max_iters: 2_000_000,
        }
    }
}

/// Final iterate of a high-accuracy run from the origin. Callers should
/// certify it with [`crate::vi::kkt_residuals`] before treating it as a
/// saddle point.
pub fn reference_solution<T: Real>(
    instance: &ProblemInstance<T>,
    config: &ReferenceConfig<T>,
) -> Result<AdmmIterate<T>> {
    let solver_cfg = SolverConfig {
        beta: config.beta,
        max_iters: config.max_iters,
        min_iters: 0,
        primal_tol: config.tol,
        dual_tol: config.tol,
        record_every: usize::MAX,
        x0: None,
        lambda0: None,
    };
    let mut st = Stepper::new(instance, &solver_cfg, Mutation::None)?;
    for k in 0..config.max_iters {
        let info = st.step(k)?;
        if info.primal <= config.tol && info.dual <= config.tol {
            return Ok(AdmmIterate { k: k + 1, omega: st.omega() });
        }
    }
    Err(Error::ReferenceUnavailable(format!(
        "no convergence to {} within {} iterations",
        config.tol, config.max_iters
    )))
}
