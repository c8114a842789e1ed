//! Analysis operators `D` (n x d, n >= d) and their frame bounds.
//!
//! The solver's contraction metric assumes a Parseval frame, `DᵀD = I`. The
//! constructions here produce such frames with uniform row norm, and
//! [`validate_frame`] measures any operator independently through a
//! symmetric eigensolve of `DᵀD`. Tightness and row-norm uniformity are
//! reported separately and never folded into one flag.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{norm2, orthonormal_factor, symmetric_eigenvalues, Matrix};
use crate::rng;
use crate::scalar::Real;

/// Default validator tolerance.
pub const DEFAULT_FRAME_TOL: f64 = 1e-9;

/// Bound on `‖DᵀD − I‖_max` that built-in constructions must meet (f64).
pub const CONSTRUCTION_TOL: f64 = 1e-10;

pub const FRAME_SCHEMA: &str = "cosparse-admm/frame/v1";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Construction {
    Identity,
    /// `(1/√k)[Q₁; …; Q_k]` with `Q₁ = I` and seeded orthogonal `Q₂..Q_k`.
    ConcatenatedBases { k: usize, seed: u64 },
    External,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct FrameReport<T> {
    pub lower_bound: T,
    pub upper_bound: T,
    pub is_tight: bool,
    pub is_uniform_row_norm: bool,
    /// `‖DᵀD − I‖_max`
    pub max_gram_deviation: T,
    /// max row norm − min row norm
    pub row_norm_spread: T,
    pub tol: T,
}

/// Measures the frame bounds of `d` as the extreme eigenvalues of `DᵀD`.
pub fn validate_frame<T: Real>(d: &Matrix<T>, tol: T) -> Result<FrameReport<T>> {
    let (n, dim) = (d.rows(), d.cols());
    if dim == 0 || n < dim {
        return Err(Error::InvalidDimension(format!(
            "analysis operator must have n >= d >= 1, got {n}x{dim}"
        )));
    }
    if !(tol > T::zero()) {
        return Err(Error::InvalidInput(format!("validator tolerance must be > 0, got {tol}")));
    }
    if !d.is_finite() {
        return Err(Error::InvalidInput("analysis operator has non-finite entries".into()));
    }
    let gram = d.gram();
    let ev = symmetric_eigenvalues(&gram)?;
    let lower_bound = ev[0].max(T::zero());
    let upper_bound = ev[dim - 1].max(lower_bound);
    let max_gram_deviation = gram.max_abs_diff(&Matrix::identity(dim));
    let norms: Vec<T> = (0..n).map(|i| norm2(d.row(i))).collect();
    let (lo, hi) = norms
        .iter()
        .fold((T::infinity(), T::zero()), |(lo, hi), &r| (lo.min(r), hi.max(r)));
    let row_norm_spread = hi - lo;
    Ok(FrameReport {
        lower_bound,
        upper_bound,
        is_tight: upper_bound - lower_bound <= tol,
        is_uniform_row_norm: row_norm_spread <= tol,
        max_gram_deviation,
        row_norm_spread,
        tol,
    })
}

/// Analysis operator with measured frame metadata. Immutable after
/// construction.
#[derive(Clone, Debug, PartialEq)]
pub struct TightFrame<T> {
    entries: Matrix<T>,
    construction: Construction,
    report: FrameReport<T>,
}

impl<T: Real> TightFrame<T> {
    /// `D = I_d`.
    pub fn identity(d: usize) -> Result<Self> {
        if d == 0 {
            return Err(Error::InvalidDimension("frame dimension must be >= 1".into()));
        }
        Self::from_parts(Matrix::identity(d), Construction::Identity)
    }

    /// `D = (1/√k)[Q₁; Q₂; …; Q_k]`, `Q₁ = I`, each further `Qᵢ` the
    /// sign-fixed orthogonal QR factor of a seeded standard-normal `d x d`
    /// matrix. All bases come from one stream seeded by `seed`.
    pub fn concatenated_bases(d: usize, k: usize, seed: u64) -> Result<Self> {
        if d == 0 || k == 0 {
            return Err(Error::InvalidDimension(format!(
                "concatenated frame needs d >= 1 and k >= 1, got d={d}, k={k}"
            )));
        }
        let mut rng = rng::seeded(seed);
        let mut blocks = Vec::with_capacity(k);
        blocks.push(Matrix::identity(d));
        for _ in 1..k {
            let g = rng::normal_matrix::<T>(&mut rng, d, d);
            blocks.push(orthonormal_factor(&g)?);
        }
        Self::from_orthogonal_blocks(&blocks, Construction::ConcatenatedBases { k, seed })
    }

    /// Stacks caller-supplied orthogonal `d x d` blocks scaled by `1/√k`.
    /// Exposed so tests can pin the bases (e.g. all identity).
    pub fn from_orthogonal_blocks(blocks: &[Matrix<T>], construction: Construction) -> Result<Self> {
        let k = blocks.len();
        if k == 0 {
            return Err(Error::InvalidDimension("need at least one basis block".into()));
        }
        let d = blocks[0].rows();
        if blocks.iter().any(|b| b.rows() != d || b.cols() != d) {
            return Err(Error::InvalidDimension("basis blocks must all be d x d".into()));
        }
        let s = T::one() / T::lit(k as f64).sqrt();
        let scaled: Vec<Matrix<T>> = blocks.iter().map(|b| b.scaled(s)).collect();
        Self::from_parts(Matrix::vstack(&scaled)?, construction)
    }

    /// Wraps an arbitrary operator. Frame bounds are measured, not assumed.
    pub fn external(entries: Matrix<T>) -> Result<Self> {
        Self::from_parts(entries, Construction::External)
    }

    /// Validates `entries` and, for built-in constructions, enforces the
    /// Parseval invariant.
    pub fn from_parts(entries: Matrix<T>, construction: Construction) -> Result<Self> {
        let report = validate_frame(&entries, T::lit(DEFAULT_FRAME_TOL))?;
        if construction != Construction::External {
            let tol = construction_tol::<T>(entries.cols());
            if report.max_gram_deviation > tol {
                return Err(Error::Numeric(format!(
                    "{construction:?} frame violates DᵀD = I: max deviation {}",
                    report.max_gram_deviation
                )));
            }
            if let Construction::ConcatenatedBases { k, .. } = construction {
                if entries.rows() != k * entries.cols() {
                    return Err(Error::InvalidDimension(format!(
                        "concatenated frame with k={k} must have {} rows, got {}",
                        k * entries.cols(),
                        entries.rows()
                    )));
                }
            }
        }
        Ok(Self {
            entries,
            construction,
            report,
        })
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.entries.rows()
    }

    #[inline]
    pub fn d(&self) -> usize {
        self.entries.cols()
    }

    pub fn matrix(&self) -> &Matrix<T> {
        &self.entries
    }

    pub fn construction(&self) -> &Construction {
        &self.construction
    }

    /// Report measured at construction with [`DEFAULT_FRAME_TOL`].
    pub fn report(&self) -> &FrameReport<T> {
        &self.report
    }

    pub fn frame_lower(&self) -> T {
        self.report.lower_bound
    }

    pub fn frame_upper(&self) -> T {
        self.report.upper_bound
    }

    /// Common row norm, when rows are uniform.
    pub fn row_norm(&self) -> Option<T> {
        self.report
            .is_uniform_row_norm
            .then(|| norm2(self.entries.row(0)))
    }

    /// Whether `‖DᵀD − I‖_max <= tol`.
    pub fn is_parseval(&self, tol: T) -> bool {
        self.report.max_gram_deviation <= tol
    }

    /// `D x`
    #[inline]
    pub fn apply(&self, x: &[T]) -> Vec<T> {
        self.entries.mul_vec(x)
    }

    /// `Dᵀ v`
    #[inline]
    pub fn apply_t(&self, v: &[T]) -> Vec<T> {
        self.entries.tr_mul_vec(v)
    }

    pub fn to_doc(&self) -> FrameDoc<T> {
        FrameDoc {
            schema: FRAME_SCHEMA.to_string(),
            n: self.n(),
            d: self.d(),
            entries: self.entries.to_rows(),
            construction: self.construction.clone(),
        }
    }

    pub fn from_doc(doc: &FrameDoc<T>) -> Result<Self> {
        if doc.schema != FRAME_SCHEMA {
            return Err(Error::Serialization(format!(
                "unsupported frame schema {:?}, expected {FRAME_SCHEMA:?}",
                doc.schema
            )));
        }
        let entries = Matrix::from_rows(&doc.entries)?;
        if entries.rows() != doc.n || entries.cols() != doc.d {
            return Err(Error::InvalidDimension(format!(
                "frame document declares {}x{} but entries are {}x{}",
                doc.n,
                doc.d,
                entries.rows(),
                entries.cols()
            )));
        }
        Self::from_parts(entries, doc.construction.clone())
    }
}

fn construction_tol<T: Real>(d: usize) -> T {
    T::lit(CONSTRUCTION_TOL).max(T::lit(64.0 * d as f64) * T::epsilon())
}

/// JSON fixture form of a frame: `{schema, n, d, entries (rows), construction}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct FrameDoc<T> {
    pub schema: String,
    pub n: usize,
    pub d: usize,
    pub entries: Vec<Vec<T>>,
    pub construction: Construction,
}

/// `D = I_d`.
pub fn build_identity_frame<T: Real>(d: usize) -> Result<TightFrame<T>> {
    TightFrame::identity(d)
}

pub fn build_concatenated_bases_frame<T: Real>(d: usize, k: usize, seed: u64) -> Result<TightFrame<T>> {
    TightFrame::concatenated_bases(d, k, seed)
}
