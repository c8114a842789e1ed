//! Variational-inequality view of the split problem.
//!
//! With `u = (z, x)`, `ω = (z, x, λ)`,
//! `θ(u) = ‖z‖₁ + (α/2)‖y − Mx‖²` and the affine map
//! `F(ω) = (λ, −Dᵀλ, Dx − z)`, a point `ω*` is a saddle point of the
//! Lagrangian iff `θ(u) − θ(u*) + (ω − ω*)ᵀF(ω*) ≥ 0` for all `ω`.
//! `F` is skew: `(ω₁ − ω₂)ᵀ(F(ω₁) − F(ω₂)) = 0`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dot, norm1, norm_inf, sub};
use crate::problem::ProblemInstance;
use crate::scalar::Real;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct ViPoint<T> {
    pub z: Vec<T>,
    pub x: Vec<T>,
    pub lambda: Vec<T>,
}

impl<T: Real> ViPoint<T> {
    pub fn new(z: Vec<T>, x: Vec<T>, lambda: Vec<T>) -> Self {
        Self { z, x, lambda }
    }

    pub fn zeros(n: usize, d: usize) -> Self {
        Self::new(vec![T::zero(); n], vec![T::zero(); d], vec![T::zero(); n])
    }

    /// Concatenation `(z, x, λ)`.
    pub fn stacked(&self) -> Vec<T> {
        let mut v = Vec::with_capacity(2 * self.z.len() + self.x.len());
        v.extend_from_slice(&self.z);
        v.extend_from_slice(&self.x);
        v.extend_from_slice(&self.lambda);
        v
    }

    pub fn sub(&self, other: &Self) -> Self {
        Self::new(sub(&self.z, &other.z), sub(&self.x, &other.x), sub(&self.lambda, &other.lambda))
    }

    pub fn dot(&self, other: &Self) -> T {
        dot(&self.z, &other.z) + dot(&self.x, &other.x) + dot(&self.lambda, &other.lambda)
    }

    pub fn is_finite(&self) -> bool {
        self.stacked().iter().all(|v| v.is_finite())
    }

    fn check_dims(&self, instance: &ProblemInstance<T>) -> Result<()> {
        let (n, d) = (instance.n(), instance.d());
        if self.z.len() != n || self.x.len() != d || self.lambda.len() != n {
            return Err(Error::InvalidDimension(format!(
                "point has (|z|, |x|, |λ|) = ({}, {}, {}), instance expects ({n}, {d}, {n})",
                self.z.len(),
                self.x.len(),
                self.lambda.len()
            )));
        }
        Ok(())
    }
}

/// `θ(z, x) = ‖z‖₁ + (α/2)‖y − Mx‖²`
pub fn theta<T: Real>(instance: &ProblemInstance<T>, z: &[T], x: &[T]) -> T {
    norm1(z) + instance.fidelity(x)
}

/// `F(ω) = (λ, −Dᵀλ, Dx − z)`
pub fn f_apply<T: Real>(instance: &ProblemInstance<T>, w: &ViPoint<T>) -> ViPoint<T> {
    let dtl = instance.frame().apply_t(&w.lambda);
    let dx = instance.frame().apply(&w.x);
    ViPoint::new(
        w.lambda.clone(),
        dtl.into_iter().map(|v| -v).collect(),
        sub(&dx, &w.z),
    )
}

/// `|(ω₁ − ω₂)ᵀ(F(ω₁) − F(ω₂))|`, zero up to rounding.
pub fn skew_defect<T: Real>(instance: &ProblemInstance<T>, w1: &ViPoint<T>, w2: &ViPoint<T>) -> T {
    let dw = w1.sub(w2);
    let df = f_apply(instance, w1).sub(&f_apply(instance, w2));
    dw.dot(&df).abs()
}

/// Optimality residuals of a candidate saddle point, all in the ∞-norm.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct KktResiduals<T> {
    /// Distance of `−λ` from `∂‖z‖₁`: `|λ_j + sign(z_j)|` on the support,
    /// `max(0, |λ_j| − 1)` off it.
    pub subgradient: T,
    /// `‖αMᵀ(Mx − y) − Dᵀλ‖∞`
    pub stationarity: T,
    /// `‖Dx − z‖∞`
    pub feasibility: T,
    /// `|z_j| ≤ zero_tol` counts as off-support.
    pub zero_tol: T,
}

impl<T: Real> KktResiduals<T> {
    pub fn max(&self) -> T {
        self.subgradient.max(self.stationarity).max(self.feasibility)
    }

    pub fn within(&self, tol: T) -> bool {
        self.max() <= tol
    }
}

pub fn kkt_residuals<T: Real>(instance: &ProblemInstance<T>, w: &ViPoint<T>, zero_tol: T) -> Result<KktResiduals<T>> {
    w.check_dims(instance)?;
    let subgradient = w
        .z
        .iter()
        .zip(&w.lambda)
        .map(|(&z, &l)| {
            if z.abs() > zero_tol {
                (l + z.signum()).abs()
            } else {
                (l.abs() - T::one()).max(T::zero())
            }
        })
        .fold(T::zero(), T::max);
    let g = instance.fidelity_gradient(&w.x);
    let stationarity = norm_inf(&sub(&g, &instance.frame().apply_t(&w.lambda)));
    let feasibility = norm_inf(&sub(&instance.frame().apply(&w.x), &w.z));
    Ok(KktResiduals {
        subgradient,
        stationarity,
        feasibility,
        zero_tol,
    })
}

/// The gap term at a probe `ω_p` relative to a candidate `ω_c`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct GapProbe<T> {
    /// `θ(u_p) − θ(u_c) + (ω_p − ω_c)ᵀF(ω_p)`
    pub value: T,
    /// Same expression with `F(ω_c)`; equal to `value` because `F` is skew.
    pub value_at_candidate: T,
    pub theta_diff: T,
}

impl<T: Real> GapProbe<T> {
    pub fn form_mismatch(&self) -> T {
        (self.value - self.value_at_candidate).abs()
    }
}

pub fn vi_gap_probe<T: Real>(
    instance: &ProblemInstance<T>,
    candidate: &ViPoint<T>,
    probe: &ViPoint<T>,
) -> Result<GapProbe<T>> {
    candidate.check_dims(instance)?;
    probe.check_dims(instance)?;
    let theta_diff = theta(instance, &probe.z, &probe.x) - theta(instance, &candidate.z, &candidate.x);
    let dw = probe.sub(candidate);
    let value = theta_diff + dw.dot(&f_apply(instance, probe));
    let value_at_candidate = theta_diff + dw.dot(&f_apply(instance, candidate));
    Ok(GapProbe {
        value,
        value_at_candidate,
        theta_diff,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frame::TightFrame;
    use crate::linalg::Matrix;
    use crate::problem::{generate_instance, InstanceSpec};
    use crate::rng::{normal_vec, seeded};

    fn scalar() -> ProblemInstance<f64> {
        ProblemInstance::new(Matrix::identity(1), vec![10.0], TightFrame::identity(1).unwrap(), 1.0).unwrap()
    }

    fn random_point(rng: &mut crate::rng::SeededRng, n: usize, d: usize) -> ViPoint<f64> {
        ViPoint::new(normal_vec(rng, n), normal_vec(rng, d), normal_vec(rng, n))
    }

    #[test]
    fn scalar_saddle_point_is_kkt() {
        let inst = scalar();
        let w = ViPoint::new(vec![9.0], vec![9.0], vec![-1.0]);
        let r = kkt_residuals(&inst, &w, 1e-12).unwrap();
        assert!(r.within(1e-14), "{r:?}");
        let off = ViPoint::new(vec![9.0], vec![9.0], vec![-0.5]);
        assert!(kkt_residuals(&inst, &off, 1e-12).unwrap().subgradient > 0.4);
    }

    #[test]
    fn off_support_subgradient_is_interval_distance() {
        let inst = scalar();
        let w = ViPoint::new(vec![0.0], vec![0.0], vec![0.5]);
        assert_eq!(kkt_residuals(&inst, &w, 1e-12).unwrap().subgradient, 0.0);
        let w = ViPoint::new(vec![0.0], vec![0.0], vec![-1.25]);
        assert_eq!(kkt_residuals(&inst, &w, 1e-12).unwrap().subgradient, 0.25);
    }

    #[test]
    fn f_is_skew_on_random_pairs() {
        let spec = InstanceSpec { d: 6, m: 4, k: 3, ell: 4, alpha: Some(10.0), noise_sigma: 0.0 };
        let inst = generate_instance::<f64>(&spec, 3).unwrap();
        let mut rng = seeded(0);
        for _ in 0..50 {
            let a = random_point(&mut rng, inst.n(), inst.d());
            let b = random_point(&mut rng, inst.n(), inst.d());
            let scale = 1.0 + a.dot(&a) + b.dot(&b);
            assert!(skew_defect(&inst, &a, &b) <= 1e-12 * scale);
        }
    }

    #[test]
    fn gap_forms_agree_and_vanish_at_candidate() {
        let inst = scalar();
        let c = ViPoint::new(vec![9.0], vec![9.0], vec![-1.0]);
        let g = vi_gap_probe(&inst, &c, &c).unwrap();
        assert_eq!(g.value, 0.0);
        let mut rng = seeded(4);
        for _ in 0..100 {
            let p = random_point(&mut rng, 1, 1);
            let g = vi_gap_probe(&inst, &c, &p).unwrap();
            assert!(g.form_mismatch() <= 1e-9);
            assert!(g.value >= -1e-12, "saddle point violated: {g:?}");
        }
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let inst = scalar();
        let bad = ViPoint::zeros(2, 1);
        assert!(matches!(kkt_residuals(&inst, &bad, 1e-9), Err(Error::InvalidDimension(_))));
        assert!(vi_gap_probe(&inst, &bad, &ViPoint::zeros(1, 1)).is_err());
    }
}
