//! Small dense linear algebra: a row-major matrix, vector helpers, and the
//! handful of factorizations the solver needs (Cholesky, Householder QR,
//! Jacobi symmetric eigensolve, one-sided Jacobi SVD).
//!
//! Everything here targets desk-scale problems (dimensions in the tens), so
//! the algorithms favour accuracy and determinism over asymptotic speed.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Dense row-major matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Real> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    /// Builds a matrix from a flat row-major buffer.
    pub fn from_row_major(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::InvalidDimension(format!(
                "row-major buffer has {} entries, expected {rows}x{cols}",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().position(|r| r.len() != cols) {
            return Err(Error::InvalidDimension(format!(
                "row {bad} has {} entries, expected {cols}",
                rows[bad].len()
            )));
        }
        let data = rows.iter().flatten().copied().collect();
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn to_rows(&self) -> Vec<Vec<T>> {
        (0..self.rows).map(|i| self.row(i).to_vec()).collect()
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<T> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// `A v`
    pub fn mul_vec(&self, v: &[T]) -> Vec<T> {
        assert_eq!(v.len(), self.cols, "mul_vec dimension mismatch");
        (0..self.rows).map(|i| dot(self.row(i), v)).collect()
    }

    /// `Aᵀ v`
    pub fn tr_mul_vec(&self, v: &[T]) -> Vec<T> {
        assert_eq!(v.len(), self.rows, "tr_mul_vec dimension mismatch");
        let mut out = vec![T::zero(); self.cols];
        for (i, &vi) in v.iter().enumerate() {
            for (o, &a) in out.iter_mut().zip(self.row(i)) {
                *o = *o + a * vi;
            }
        }
        out
    }

    pub fn matmul(&self, other: &Matrix<T>) -> Matrix<T> {
        assert_eq!(self.cols, other.rows, "matmul dimension mismatch");
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == T::zero() {
                    continue;
                }
                for j in 0..other.cols {
                    out[(i, j)] = out[(i, j)] + a * other[(k, j)];
                }
            }
        }
        out
    }

    pub fn transpose(&self) -> Matrix<T> {
        Matrix::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    /// `AᵀA`, symmetrized exactly.
    pub fn gram(&self) -> Matrix<T> {
        let mut g = Matrix::zeros(self.cols, self.cols);
        for r in 0..self.rows {
            let row = self.row(r);
            for i in 0..self.cols {
                for j in i..self.cols {
                    g[(i, j)] = g[(i, j)] + row[i] * row[j];
                }
            }
        }
        for i in 0..self.cols {
            for j in 0..i {
                g[(i, j)] = g[(j, i)];
            }
        }
        g
    }

    pub fn scaled(&self, s: T) -> Matrix<T> {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| v * s).collect(),
        }
    }

    pub fn add(&self, other: &Matrix<T>) -> Matrix<T> {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| a + b).collect(),
        }
    }

    pub fn select_rows(&self, idx: &[usize]) -> Matrix<T> {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Matrix {
            rows: idx.len(),
            cols: self.cols,
            data,
        }
    }

    /// Vertical concatenation.
    pub fn vstack(blocks: &[Matrix<T>]) -> Result<Matrix<T>> {
        let cols = blocks.first().map_or(0, |b| b.cols);
        if blocks.iter().any(|b| b.cols != cols) {
            return Err(Error::InvalidDimension("vstack blocks differ in width".into()));
        }
        let rows = blocks.iter().map(|b| b.rows).sum();
        let data = blocks.iter().flat_map(|b| b.data.iter().copied()).collect();
        Ok(Matrix { rows, cols, data })
    }

    /// Largest absolute entry of `self - other`.
    pub fn max_abs_diff(&self, other: &Matrix<T>) -> T {
        max_abs_diff(&self.data, &other.data)
    }
}

impl<T> std::ops::Index<(usize, usize)> for Matrix<T> {
    type Output = T;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.cols + j]
    }
}

impl<T> std::ops::IndexMut<(usize, usize)> for Matrix<T> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.cols + j]
    }
}

// ---------------------------------------------------------------------------
// vector helpers

#[inline]
pub fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

#[inline]
pub fn norm_sq<T: Real>(a: &[T]) -> T {
    dot(a, a)
}

#[inline]
pub fn norm2<T: Real>(a: &[T]) -> T {
    norm_sq(a).sqrt()
}

pub fn norm1<T: Real>(a: &[T]) -> T {
    a.iter().fold(T::zero(), |acc, v| acc + v.abs())
}

pub fn norm_inf<T: Real>(a: &[T]) -> T {
    a.iter().fold(T::zero(), |acc, v| acc.max(v.abs()))
}

pub fn sub<T: Real>(a: &[T], b: &[T]) -> Vec<T> {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(&x, &y)| x - y).collect()
}

pub fn add<T: Real>(a: &[T], b: &[T]) -> Vec<T> {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(&x, &y)| x + y).collect()
}

pub fn scale<T: Real>(a: &[T], s: T) -> Vec<T> {
    a.iter().map(|&x| x * s).collect()
}

/// `y += s * x`
pub fn axpy<T: Real>(s: T, x: &[T], y: &mut [T]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi = *yi + s * xi;
    }
}

/// `‖a − b‖²`
pub fn dist_sq<T: Real>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| {
        let d = x - y;
        acc + d * d
    })
}

pub fn max_abs_diff<T: Real>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .fold(T::zero(), |acc, (&x, &y)| acc.max((x - y).abs()))
}

pub fn all_finite<T: Real>(a: &[T]) -> bool {
    a.iter().all(|v| v.is_finite())
}

// ---------------------------------------------------------------------------
// Cholesky

/// Lower-triangular Cholesky factor `A = L Lᵀ` of a symmetric positive
/// definite matrix.
#[derive(Clone, Debug)]
pub struct Cholesky<T> {
    l: Matrix<T>,
}

impl<T: Real> Cholesky<T> {
    pub fn factor(a: &Matrix<T>) -> Result<Self> {
        let n = a.rows();
        if a.cols() != n {
            return Err(Error::InvalidDimension(format!(
                "cholesky needs a square matrix, got {}x{}",
                a.rows(),
                a.cols()
            )));
        }
        let mut l = Matrix::zeros(n, n);
        for j in 0..n {
            let mut diag = a[(j, j)];
            for k in 0..j {
                diag = diag - l[(j, k)] * l[(j, k)];
            }
            if !(diag > T::zero()) || !diag.is_finite() {
                return Err(Error::Numeric(format!(
                    "matrix is not positive definite: pivot {j} is {diag}"
                )));
            }
            let ljj = diag.sqrt();
            l[(j, j)] = ljj;
            for i in (j + 1)..n {
                let mut s = a[(i, j)];
                for k in 0..j {
                    s = s - l[(i, k)] * l[(j, k)];
                }
                l[(i, j)] = s / ljj;
            }
        }
        Ok(Self { l })
    }

    pub fn dim(&self) -> usize {
        self.l.rows()
    }

    pub fn factor_l(&self) -> &Matrix<T> {
        &self.l
    }

    /// Solves `A x = b` by forward and back substitution.
    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let n = self.dim();
        assert_eq!(b.len(), n, "cholesky solve dimension mismatch");
        let l = &self.l;
        let mut y = b.to_vec();
        for i in 0..n {
            let mut s = y[i];
            for k in 0..i {
                s = s - l[(i, k)] * y[k];
            }
            y[i] = s / l[(i, i)];
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in (i + 1)..n {
                s = s - l[(k, i)] * y[k];
            }
            y[i] = s / l[(i, i)];
        }
        y
    }
}

// ---------------------------------------------------------------------------
// QR

/// Orthogonal factor of the Householder QR of a square matrix, with columns
/// sign-fixed so that `R` has a nonnegative diagonal. For a full-rank input
/// this `Q` is unique, which keeps seeded constructions reproducible.
pub fn orthonormal_factor<T: Real>(a: &Matrix<T>) -> Result<Matrix<T>> {
    let n = a.rows();
    if a.cols() != n || n == 0 {
        return Err(Error::InvalidDimension(format!(
            "orthonormal_factor needs a nonempty square matrix, got {}x{}",
            a.rows(),
            a.cols()
        )));
    }
    let mut r = a.clone();
    let mut reflectors: Vec<Vec<T>> = Vec::with_capacity(n);
    let mut signs = vec![T::one(); n];
    for j in 0..n {
        let x: Vec<T> = (j..n).map(|i| r[(i, j)]).collect();
        let xnorm = norm2(&x);
        if xnorm == T::zero() {
            reflectors.push(vec![T::zero(); n - j]);
            continue;
        }
        let alpha = if x[0] >= T::zero() { -xnorm } else { xnorm };
        let mut v = x;
        v[0] = v[0] - alpha;
        let vnorm = norm2(&v);
        if vnorm > T::zero() {
            for vi in &mut v {
                *vi = *vi / vnorm;
            }
            for c in j..n {
                let mut s = T::zero();
                for (k, &vk) in v.iter().enumerate() {
                    s = s + vk * r[(j + k, c)];
                }
                for (k, &vk) in v.iter().enumerate() {
                    r[(j + k, c)] = r[(j + k, c)] - T::two() * vk * s;
                }
            }
        }
        // R[j][j] == alpha now.
        if r[(j, j)] < T::zero() {
            signs[j] = -T::one();
        }
        reflectors.push(v);
    }
    // Q = H_0 H_1 ... H_{n-1}, applied to the identity from the right-most reflector.
    let mut q = Matrix::identity(n);
    for j in (0..n).rev() {
        let v = &reflectors[j];
        if v.iter().all(|&vk| vk == T::zero()) {
            continue;
        }
        for c in 0..n {
            let mut s = T::zero();
            for (k, &vk) in v.iter().enumerate() {
                s = s + vk * q[(j + k, c)];
            }
            for (k, &vk) in v.iter().enumerate() {
                q[(j + k, c)] = q[(j + k, c)] - T::two() * vk * s;
            }
        }
    }
    for (c, &s) in signs.iter().enumerate() {
        if s < T::zero() {
            for i in 0..n {
                q[(i, c)] = -q[(i, c)];
            }
        }
    }
    Ok(q)
}

// ---------------------------------------------------------------------------
// Jacobi eigensolve

/// Eigenvalues of a symmetric matrix, ascending, by cyclic Jacobi rotations.
pub fn symmetric_eigenvalues<T: Real>(a: &Matrix<T>) -> Result<Vec<T>> {
    let n = a.rows();
    if a.cols() != n {
        return Err(Error::InvalidDimension("eigensolve needs a square matrix".into()));
    }
    let mut m = a.clone();
    let eps = T::epsilon();
    for _sweep in 0..100 {
        let mut off = T::zero();
        let mut diag = T::zero();
        for i in 0..n {
            diag = diag + m[(i, i)] * m[(i, i)];
            for j in (i + 1)..n {
                off = off + m[(i, j)] * m[(i, j)];
            }
        }
        if off == T::zero() || off.sqrt() <= eps * T::lit(1e-3) * diag.sqrt() {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[(p, q)];
                if apq == T::zero() {
                    continue;
                }
                let theta = (m[(q, q)] - m[(p, p)]) / (T::two() * apq);
                let t = theta.signum() / (theta.abs() + (T::one() + theta * theta).sqrt());
                let c = T::one() / (T::one() + t * t).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[(k, p)];
                    let mkq = m[(k, q)];
                    m[(k, p)] = c * mkp - s * mkq;
                    m[(k, q)] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[(p, k)];
                    let mqk = m[(q, k)];
                    m[(p, k)] = c * mpk - s * mqk;
                    m[(q, k)] = s * mpk + c * mqk;
                }
                m[(p, q)] = T::zero();
                m[(q, p)] = T::zero();
            }
        }
    }
    let mut ev: Vec<T> = (0..n).map(|i| m[(i, i)]).collect();
    ev.sort_by(|a, b| a.partial_cmp(b).expect("finite eigenvalues"));
    Ok(ev)
}

// ---------------------------------------------------------------------------
// SVD

/// Singular values and right singular vectors of an `r x c` matrix.
#[derive(Clone, Debug)]
pub struct RightSvd<T> {
    /// One value per column of the input, not sorted.
    pub singular_values: Vec<T>,
    /// `c x c` orthogonal matrix; column `j` pairs with `singular_values[j]`.
    pub v: Matrix<T>,
}

impl<T: Real> RightSvd<T> {
    /// Orthonormal basis of the numerical null space: right singular vectors
    /// whose singular value is at most `rel_tol` times the largest one.
    pub fn null_space(&self, rel_tol: T) -> Vec<Vec<T>> {
        let smax = self
            .singular_values
            .iter()
            .fold(T::zero(), |acc, &s| acc.max(s));
        let cut = rel_tol * smax;
        self.singular_values
            .iter()
            .enumerate()
            .filter(|(_, &s)| s <= cut)
            .map(|(j, _)| self.v.column(j))
            .collect()
    }
}

/// One-sided (Hestenes) Jacobi SVD. Orthogonalizes the columns of `a` by
/// plane rotations; the accumulated rotations are the right singular vectors.
pub fn jacobi_svd<T: Real>(a: &Matrix<T>) -> RightSvd<T> {
    let (r, c) = (a.rows(), a.cols());
    let mut u = a.clone();
    let mut v = Matrix::identity(c);
    let eps = T::epsilon();
    for _sweep in 0..80 {
        let mut rotated = false;
        for p in 0..c {
            for q in (p + 1)..c {
                let (mut alpha, mut beta, mut gamma) = (T::zero(), T::zero(), T::zero());
                for i in 0..r {
                    let up = u[(i, p)];
                    let uq = u[(i, q)];
                    alpha = alpha + up * up;
                    beta = beta + uq * uq;
                    gamma = gamma + up * uq;
                }
                if gamma == T::zero() || gamma.abs() <= eps * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (T::two() * gamma);
                let t = zeta.signum() / (zeta.abs() + (T::one() + zeta * zeta).sqrt());
                let cs = T::one() / (T::one() + t * t).sqrt();
                let sn = cs * t;
                for i in 0..r {
                    let up = u[(i, p)];
                    let uq = u[(i, q)];
                    u[(i, p)] = cs * up - sn * uq;
                    u[(i, q)] = sn * up + cs * uq;
                }
                for i in 0..c {
                    let vp = v[(i, p)];
                    let vq = v[(i, q)];
                    v[(i, p)] = cs * vp - sn * vq;
                    v[(i, q)] = sn * vp + cs * vq;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let singular_values = (0..c).map(|j| norm2(&u.column(j))).collect();
    RightSvd { singular_values, v }
}
