//! Analysis-LASSO instances
//!
//! ```text
//! minimize  ‖D x‖₁ + (α/2)‖y − M x‖²
//! ```
//!
//! solved in the split form `min ‖z‖₁ + (α/2)‖y − Mx‖²  s.t.  Dx − z = 0`,
//! plus cosparsity/cosupport measurement and a seeded generator of planted
//! cosparse recovery problems. Row indices are 0-based.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::frame::{FrameDoc, TightFrame};
use crate::linalg::{axpy, dot, jacobi_svd, norm2, norm_inf, norm_sq, scale, Matrix};
use crate::rng::{self, stream};
use crate::scalar::Real;

/// Default threshold below which an analysis coefficient counts as zero.
pub const DEFAULT_COSUPPORT_TOL: f64 = 1e-9;

/// Subset redraws before declaring a cosparsity infeasible.
pub const MAX_COSUPPORT_RETRIES: usize = 32;

/// Singular values at or below this fraction of the largest span the null space.
pub const NULL_SPACE_REL_TOL: f64 = 1e-10;

pub const INSTANCE_SCHEMA: &str = "cosparse-admm/instance/v1";

#[derive(Clone, Debug, PartialEq)]
pub struct ProblemInstance<T> {
    measurement: Matrix<T>,
    y: Vec<T>,
    frame: TightFrame<T>,
    alpha: T,
    ground_truth: Option<Vec<T>>,
    planted_cosupport: Option<Vec<usize>>,
}

impl<T: Real> ProblemInstance<T> {
    pub fn new(measurement: Matrix<T>, y: Vec<T>, frame: TightFrame<T>, alpha: T) -> Result<Self> {
        if measurement.cols() != frame.d() {
            return Err(Error::InvalidDimension(format!(
                "M is {}x{} but D has d={}",
                measurement.rows(),
                measurement.cols(),
                frame.d()
            )));
        }
        if measurement.rows() == 0 {
            return Err(Error::InvalidDimension("M needs at least one row".into()));
        }
        if y.len() != measurement.rows() {
            return Err(Error::InvalidDimension(format!(
                "y has length {} but M has {} rows",
                y.len(),
                measurement.rows()
            )));
        }
        if !(alpha > T::zero()) || !alpha.is_finite() {
            return Err(Error::InvalidInput(format!("alpha must be positive, got {alpha}")));
        }
        if !measurement.is_finite() || y.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("M or y has non-finite entries".into()));
        }
        Ok(Self {
            measurement,
            y,
            frame,
            alpha,
            ground_truth: None,
            planted_cosupport: None,
        })
    }

    /// Attaches the planted signal and cosupport, checking
    /// `‖D_Λ x‖_∞ <= max(1e-9, 64·ε)`.
    pub fn with_ground_truth(mut self, x_true: Vec<T>, cosupport: Option<Vec<usize>>) -> Result<Self> {
        if x_true.len() != self.d() {
            return Err(Error::InvalidDimension(format!(
                "ground truth has length {}, expected {}",
                x_true.len(),
                self.d()
            )));
        }
        if let Some(lambda) = &cosupport {
            if lambda.iter().any(|&j| j >= self.n()) {
                return Err(Error::InvalidInput("cosupport index out of range".into()));
            }
            let dx = self.frame.apply(&x_true);
            let worst = lambda.iter().fold(T::zero(), |acc, &j| acc.max(dx[j].abs()));
            let tol = T::lit(DEFAULT_COSUPPORT_TOL).max(T::lit(64.0) * T::epsilon());
            if worst > tol {
                return Err(Error::InvalidInput(format!(
                    "planted cosupport is violated: ‖D_Λ x‖_∞ = {worst}"
                )));
            }
        }
        self.ground_truth = Some(x_true);
        self.planted_cosupport = cosupport;
        Ok(self)
    }

    #[inline]
    pub fn m(&self) -> usize {
        self.measurement.rows()
    }

    #[inline]
    pub fn d(&self) -> usize {
        self.frame.d()
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.frame.n()
    }

    pub fn measurement(&self) -> &Matrix<T> {
        &self.measurement
    }

    pub fn y(&self) -> &[T] {
        &self.y
    }

    pub fn frame(&self) -> &TightFrame<T> {
        &self.frame
    }

    pub fn alpha(&self) -> T {
        self.alpha
    }

    pub fn ground_truth(&self) -> Option<&[T]> {
        self.ground_truth.as_deref()
    }

    pub fn planted_cosupport(&self) -> Option<&[usize]> {
        self.planted_cosupport.as_deref()
    }

    /// `∇θ₂(x) = α Mᵀ(M x − y)`
    pub fn fidelity_gradient(&self, x: &[T]) -> Vec<T> {
        let mut r = self.measurement.mul_vec(x);
        for (ri, &yi) in r.iter_mut().zip(&self.y) {
            *ri = *ri - yi;
        }
        scale(&self.measurement.tr_mul_vec(&r), self.alpha)
    }

    /// `(α/2)‖y − M x‖²`
    pub fn fidelity(&self, x: &[T]) -> T {
        let mx = self.measurement.mul_vec(x);
        let r: T = mx
            .iter()
            .zip(&self.y)
            .map(|(&a, &b)| (b - a) * (b - a))
            .sum();
        self.alpha * T::half() * r
    }

    pub fn to_doc(&self) -> InstanceDoc<T> {
        InstanceDoc {
            schema: INSTANCE_SCHEMA.to_string(),
            m: self.m(),
            d: self.d(),
            n: self.n(),
            alpha: self.alpha,
            measurement: self.measurement.to_rows(),
            y: self.y.clone(),
            frame: self.frame.to_doc(),
            ground_truth: self.ground_truth.clone(),
            planted_cosupport: self.planted_cosupport.clone(),
        }
    }

    pub fn from_doc(doc: &InstanceDoc<T>) -> Result<Self> {
        if doc.schema != INSTANCE_SCHEMA {
            return Err(Error::Serialization(format!(
                "unsupported instance schema {:?}, expected {INSTANCE_SCHEMA:?}",
                doc.schema
            )));
        }
        let frame = TightFrame::from_doc(&doc.frame)?;
        let m = Matrix::from_rows(&doc.measurement)?;
        if (m.rows(), frame.d(), frame.n()) != (doc.m, doc.d, doc.n) {
            return Err(Error::InvalidDimension(
                "instance document dimensions disagree with its matrices".into(),
            ));
        }
        let inst = Self::new(m, doc.y.clone(), frame, doc.alpha)?;
        match &doc.ground_truth {
            Some(x) => inst.with_ground_truth(x.clone(), doc.planted_cosupport.clone()),
            None => Ok(inst),
        }
    }

    /// Pretty JSON of [`InstanceDoc`]; deterministic for a given instance.
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_doc())?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let doc: InstanceDoc<T> = serde_json::from_str(s)?;
        Self::from_doc(&doc)
    }

    /// Hex SHA-256 of [`Self::to_json`].
    pub fn fingerprint(&self) -> Result<String> {
        let digest = Sha256::digest(self.to_json()?.as_bytes());
        Ok(hex::encode(digest))
    }
}

/// JSON fixture form of an instance; matrices are arrays of rows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct InstanceDoc<T> {
    pub schema: String,
    pub m: usize,
    pub d: usize,
    pub n: usize,
    pub alpha: T,
    pub measurement: Vec<Vec<T>>,
    pub y: Vec<T>,
    pub frame: FrameDoc<T>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ground_truth: Option<Vec<T>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub planted_cosupport: Option<Vec<usize>>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CosupportResult<T> {
    /// Sorted row indices `j` with `|(Dx)_j| <= tol`.
    pub indices: Vec<usize>,
    pub cosparsity: usize,
    pub tol: T,
}

fn check_signal<T: Real>(frame: &TightFrame<T>, x: &[T], tol: T) -> Result<()> {
    if x.len() != frame.d() {
        return Err(Error::InvalidInput(format!(
            "signal has length {}, operator expects {}",
            x.len(),
            frame.d()
        )));
    }
    if !(tol >= T::zero()) {
        return Err(Error::InvalidInput(format!("tolerance must be >= 0, got {tol}")));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("signal has non-finite entries".into()));
    }
    Ok(())
}

/// Number of analysis coefficients with `|(Dx)_j| <= tol`.
pub fn cosparsity<T: Real>(frame: &TightFrame<T>, x: &[T], tol: T) -> Result<usize> {
    Ok(cosupport(frame, x, tol)?.cosparsity)
}

pub fn cosupport<T: Real>(frame: &TightFrame<T>, x: &[T], tol: T) -> Result<CosupportResult<T>> {
    check_signal(frame, x, tol)?;
    let indices: Vec<usize> = frame
        .apply(x)
        .iter()
        .enumerate()
        .filter(|(_, v)| v.abs() <= tol)
        .map(|(j, _)| j)
        .collect();
    Ok(CosupportResult {
        cosparsity: indices.len(),
        indices,
        tol,
    })
}

/// Unit-norm signal orthogonal to the rows `cosupport` of `D`: the seeded
/// normal vector projected onto the null space of `D_Λ`. Returns `None`
/// when `D_Λ` has full column rank.
pub fn cosparse_signal_on<T: Real>(
    frame: &TightFrame<T>,
    cosupport: &[usize],
    rng: &mut rng::SeededRng,
) -> Result<Option<Vec<T>>> {
    let d = frame.d();
    if cosupport.iter().any(|&j| j >= frame.n()) {
        return Err(Error::InvalidInput("cosupport index out of range".into()));
    }
    let g: Vec<T> = rng::normal_vec(rng, d);
    if cosupport.is_empty() {
        let nrm = norm2(&g);
        return Ok((nrm > T::zero()).then(|| scale(&g, T::one() / nrm)));
    }
    let sub = frame.matrix().select_rows(cosupport);
    let basis = jacobi_svd(&sub).null_space(T::lit(NULL_SPACE_REL_TOL));
    if basis.is_empty() {
        return Ok(None);
    }
    let project = |v: &[T]| {
        let mut out = vec![T::zero(); d];
        for b in &basis {
            axpy(dot(b, v), b, &mut out);
        }
        out
    };
    let x = project(&g);
    let nrm = norm2(&x);
    if !(nrm > T::zero()) {
        return Ok(None);
    }
    // second projection pass keeps ‖D_Λ x‖ at roundoff level
    let x = project(&scale(&x, T::one() / nrm));
    let x = scale(&x, T::one() / norm2(&x));
    Ok(Some(x))
}

/// Draws a uniform random cosupport of size `ell` and a unit-norm signal
/// vanishing on it. Redraws the subset up to [`MAX_COSUPPORT_RETRIES`] times
/// while `D_Λ` has full column rank.
pub fn generate_cosparse_signal<T: Real>(
    frame: &TightFrame<T>,
    ell: usize,
    seed: u64,
) -> Result<(Vec<T>, Vec<usize>)> {
    let n = frame.n();
    if ell > n {
        return Err(Error::InfeasibleCosupport {
            ell,
            n,
            d: frame.d(),
            retries: 0,
        });
    }
    let mut rng = rng::seeded(seed);
    for _ in 0..MAX_COSUPPORT_RETRIES {
        let lambda = rng::subset(&mut rng, n, ell);
        if let Some(x) = cosparse_signal_on(frame, &lambda, &mut rng)? {
            return Ok((x, lambda));
        }
    }
    Err(Error::InfeasibleCosupport {
        ell,
        n,
        d: frame.d(),
        retries: MAX_COSUPPORT_RETRIES,
    })
}

/// Parameters of a planted recovery problem.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct InstanceSpec<T> {
    pub d: usize,
    pub m: usize,
    /// Number of concatenated orthonormal bases; `n = k·d`.
    pub k: usize,
    pub ell: usize,
    /// Data-fidelity weight; `None` picks [`default_alpha`].
    #[serde(default)]
    pub alpha: Option<T>,
    #[serde(default)]
    pub noise_sigma: T,
}

/// `α = 100·m/‖y‖²`, or 100 when `y = 0`.
pub fn default_alpha<T: Real>(m: usize, y: &[T]) -> T {
    let ny = norm_sq(y);
    if ny > T::zero() {
        T::lit(100.0 * m as f64) / ny
    } else {
        T::lit(100.0)
    }
}

/// Builds a planted instance from an explicit measurement matrix:
/// `y = M x_true + noise_sigma·w`, `w` standard normal from `noise_seed`.
pub fn planted_instance<T: Real>(
    measurement: Matrix<T>,
    frame: TightFrame<T>,
    x_true: Vec<T>,
    cosupport: Vec<usize>,
    alpha: Option<T>,
    noise_sigma: T,
    noise_seed: u64,
) -> Result<ProblemInstance<T>> {
    if !(noise_sigma >= T::zero()) {
        return Err(Error::InvalidInput(format!("noise_sigma must be >= 0, got {noise_sigma}")));
    }
    if measurement.cols() != x_true.len() {
        return Err(Error::InvalidDimension("M and x_true disagree on d".into()));
    }
    let mut y = measurement.mul_vec(&x_true);
    if noise_sigma > T::zero() {
        let w: Vec<T> = rng::normal_vec(&mut rng::seeded(noise_seed), y.len());
        axpy(noise_sigma, &w, &mut y);
    }
    let alpha = alpha.unwrap_or_else(|| default_alpha(measurement.rows(), &y));
    ProblemInstance::new(measurement, y, frame, alpha)?.with_ground_truth(x_true, Some(cosupport))
}

/// Seeded planted instance. Sub-seeds: frame `sub_seed(seed, FRAME)`,
/// signal `SIGNAL`, measurement `MEASUREMENT`, noise `NOISE`
/// (see [`crate::rng::stream`]).
pub fn generate_instance<T: Real>(spec: &InstanceSpec<T>, seed: u64) -> Result<ProblemInstance<T>> {
    if spec.m == 0 {
        return Err(Error::InvalidDimension("m must be >= 1".into()));
    }
    let frame = TightFrame::concatenated_bases(spec.d, spec.k, rng::sub_seed(seed, stream::FRAME))?;
    let (x_true, cosupport) =
        generate_cosparse_signal(&frame, spec.ell, rng::sub_seed(seed, stream::SIGNAL))?;
    let scale_m = T::one() / T::lit(spec.m as f64).sqrt();
    let measurement = rng::normal_matrix::<T>(
        &mut rng::seeded(rng::sub_seed(seed, stream::MEASUREMENT)),
        spec.m,
        spec.d,
    )
    .scaled(scale_m);
    planted_instance(
        measurement,
        frame,
        x_true,
        cosupport,
        spec.alpha,
        spec.noise_sigma,
        rng::sub_seed(seed, stream::NOISE),
    )
}

/// `‖D_Λ x‖_∞`
pub fn cosupport_residual<T: Real>(frame: &TightFrame<T>, x: &[T], cosupport: &[usize]) -> T {
    let dx = frame.apply(x);
    norm_inf(&cosupport.iter().map(|&j| dx[j]).collect::<Vec<_>>())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frame::build_concatenated_bases_frame;
    use crate::linalg::max_abs_diff;

    #[test]
    fn cosparsity_basics() {
        let id = TightFrame::<f64>::identity(3).unwrap();
        assert_eq!(cosparsity(&id, &[0.0, 0.0, 0.0], 0.0).unwrap(), 3);
        assert_eq!(cosparsity(&id, &[1.0, 0.0, 0.0], 0.0).unwrap(), 2);
        let c = cosupport(&id, &[1.0, 0.0, 0.0], 0.0).unwrap();
        assert_eq!(c.indices, vec![1, 2]);
        let c = cosupport(&id, &[0.0; 3], 0.0).unwrap();
        assert_eq!(c.indices, vec![0, 1, 2]);
        assert!(cosparsity(&id, &[1.0, 0.0], 0.0).is_err());
        assert!(cosparsity(&id, &[1.0, 0.0, 0.0], -1.0).is_err());
    }

    #[test]
    fn coordinate_cosupport_gives_exact_zeros() {
        let id = TightFrame::<f64>::identity(6).unwrap();
        let lambda = vec![0, 1, 2];
        let x = cosparse_signal_on(&id, &lambda, &mut rng::seeded(1))
            .unwrap()
            .unwrap();
        assert_eq!(&x[..3], &[0.0, 0.0, 0.0]);
        assert!((norm2(&x) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn empty_cosupport_gives_normalized_random_vector() {
        let f = build_concatenated_bases_frame::<f64>(5, 2, 3).unwrap();
        let (x, lambda) = generate_cosparse_signal(&f, 0, 17).unwrap();
        assert!(lambda.is_empty());
        assert!((norm2(&x) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn planted_signal_on_concatenated_frame() {
        let f = build_concatenated_bases_frame::<f64>(8, 2, 0).unwrap();
        let (x, lambda) = generate_cosparse_signal(&f, 6, 11).unwrap();
        assert_eq!(lambda.len(), 6);
        // independent check: explicit residual of the planted rows
        assert!(cosupport_residual(&f, &x, &lambda) <= 1e-9);
        assert!(cosparsity(&f, &x, 1e-9).unwrap() >= 6);
        assert!((norm2(&x) - 1.0).abs() <= 1e-12);
        let c = cosupport(&f, &x, 1e-9).unwrap();
        assert!(lambda.iter().all(|j| c.indices.contains(j)));
    }

    #[test]
    fn full_rank_cosupport_is_infeasible() {
        // any 12 rows of a generic 16x8 frame span R^8
        let f = build_concatenated_bases_frame::<f64>(8, 2, 5).unwrap();
        let err = generate_cosparse_signal(&f, 12, 3).unwrap_err();
        assert_eq!(
            err,
            Error::InfeasibleCosupport { ell: 12, n: 16, d: 8, retries: MAX_COSUPPORT_RETRIES }
        );
        assert!(matches!(
            generate_cosparse_signal(&f, 17, 3),
            Err(Error::InfeasibleCosupport { .. })
        ));
    }

    #[test]
    fn identity_measurement_reproduces_signal() {
        let f = build_concatenated_bases_frame::<f64>(4, 2, 2).unwrap();
        let (x, lambda) = generate_cosparse_signal(&f, 2, 8).unwrap();
        let inst =
            planted_instance(Matrix::identity(4), f, x.clone(), lambda, Some(1.0), 0.0, 0).unwrap();
        assert_eq!(inst.y(), x.as_slice());
    }

    #[test]
    fn generator_is_deterministic_and_consistent() {
        let spec = InstanceSpec { d: 8, m: 6, k: 2, ell: 7, alpha: None, noise_sigma: 0.0 };
        let a = generate_instance::<f64>(&spec, 3).unwrap();
        let b = generate_instance::<f64>(&spec, 3).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.fingerprint().unwrap(), b.fingerprint().unwrap());
        let x = a.ground_truth().unwrap();
        let mx = a.measurement().mul_vec(x);
        assert_eq!(max_abs_diff(&mx, a.y()), 0.0);
        assert!(cosupport(a.frame(), x, 1e-9).unwrap().cosparsity >= 7);
        assert_eq!((a.m(), a.d(), a.n()), (6, 8, 16));

        let c = generate_instance::<f64>(&spec, 4).unwrap();
        assert_ne!(a.fingerprint().unwrap(), c.fingerprint().unwrap());
    }

    #[test]
    fn generator_propagates_infeasibility() {
        let spec = InstanceSpec { d: 8, m: 6, k: 2, ell: 10, alpha: Some(1.0), noise_sigma: 0.0 };
        assert!(matches!(
            generate_instance::<f64>(&spec, 3),
            Err(Error::InfeasibleCosupport { .. })
        ));
    }

    #[test]
    fn noise_is_applied() {
        let spec = InstanceSpec { d: 6, m: 4, k: 2, ell: 3, alpha: Some(5.0), noise_sigma: 0.1 };
        let inst = generate_instance::<f64>(&spec, 1).unwrap();
        let mx = inst.measurement().mul_vec(inst.ground_truth().unwrap());
        assert!(max_abs_diff(&mx, inst.y()) > 0.0);
        assert_eq!(inst.alpha(), 5.0);
    }

    #[test]
    fn instance_json_roundtrip() {
        let spec = InstanceSpec { d: 5, m: 4, k: 3, ell: 2, alpha: Some(10.0), noise_sigma: 0.0 };
        let inst = generate_instance::<f64>(&spec, 21).unwrap();
        let back = ProblemInstance::<f64>::from_json(&inst.to_json().unwrap()).unwrap();
        assert_eq!(back, inst);
    }

    #[test]
    fn instance_rejects_bad_shapes() {
        let f = TightFrame::<f64>::identity(3).unwrap();
        assert!(ProblemInstance::new(Matrix::zeros(2, 4), vec![0.0; 2], f.clone(), 1.0).is_err());
        assert!(ProblemInstance::new(Matrix::zeros(2, 3), vec![0.0; 3], f.clone(), 1.0).is_err());
        assert!(ProblemInstance::new(Matrix::zeros(2, 3), vec![0.0; 2], f, 0.0).is_err());
    }
}
