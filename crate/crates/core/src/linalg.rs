//! Dense matrices and vectors in double precision, plus the three matrix
//! norms consumed by the capacity measures: spectral, Frobenius and (2,1).

use std::ops::{Deref, DerefMut, Index};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

/// Owned dense vector. Dereferences to `[f64]`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DenseVector(Vec<f64>);

impl DenseVector {
    pub fn new(entries: Vec<f64>) -> Result<Self> {
        if entries.iter().any(|v| !v.is_finite()) {
            return invalid("vector has non-finite entries");
        }
        Ok(Self(entries))
    }

    pub fn zeros(dim: usize) -> Self {
        Self(vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl From<Vec<f64>> for DenseVector {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

impl Deref for DenseVector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for DenseVector {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn l2_norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

impl DenseMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return invalid(format!(
                "matrix data has {} entries, expected {rows}x{cols}",
                data.len()
            ));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return invalid("matrix has non-finite entries");
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_diag(diag: &[f64]) -> Self {
        let n = diag.len();
        let mut m = Self::zeros(n, n);
        for (i, d) in diag.iter().enumerate() {
            m.data[i * n + i] = *d;
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return invalid("ragged rows");
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    /// Entries drawn i.i.d. uniform on `[-bound, bound]`.
    pub fn random_uniform<R: Rng + ?Sized>(rows: usize, cols: usize, bound: f64, rng: &mut R) -> Self {
        let data = (0..rows * cols)
            .map(|_| if bound > 0.0 { rng.gen_range(-bound..=bound) } else { 0.0 })
            .collect();
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// `self * x`. Panics on shape mismatch.
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols, "matvec shape mismatch");
        (0..self.rows).map(|r| dot(self.row(r), x)).collect()
    }

    /// `selfᵀ * y`. Panics on shape mismatch.
    pub fn matvec_transpose(&self, y: &[f64]) -> Vec<f64> {
        assert_eq!(y.len(), self.rows, "matvec_transpose shape mismatch");
        let mut out = vec![0.0; self.cols];
        for (r, yr) in y.iter().enumerate() {
            if *yr == 0.0 {
                continue;
            }
            for (o, a) in out.iter_mut().zip(self.row(r)) {
                *o += yr * a;
            }
        }
        out
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                t.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        t
    }

    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if self.cols != other.rows {
            return invalid(format!(
                "matmul shape mismatch: {:?} x {:?}",
                self.shape(),
                other.shape()
            ));
        }
        let mut out = Self::zeros(self.rows, other.cols);
        for r in 0..self.rows {
            for k in 0..self.cols {
                let a = self.data[r * self.cols + k];
                if a == 0.0 {
                    continue;
                }
                let orow = other.row(k);
                let dst = &mut out.data[r * other.cols..(r + 1) * other.cols];
                for (d, b) in dst.iter_mut().zip(orow) {
                    *d += a * b;
                }
            }
        }
        Ok(out)
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * c).collect(),
        }
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        if self.shape() != other.shape() {
            return invalid("sub shape mismatch");
        }
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
        })
    }

    /// `self += alpha * other`.
    pub fn add_scaled(&mut self, alpha: f64, other: &Self) {
        assert_eq!(self.shape(), other.shape(), "add_scaled shape mismatch");
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += alpha * b;
        }
    }

    /// `self += alpha * u vᵀ`.
    pub fn add_outer(&mut self, alpha: f64, u: &[f64], v: &[f64]) {
        assert_eq!(u.len(), self.rows);
        assert_eq!(v.len(), self.cols);
        for (r, ur) in u.iter().enumerate() {
            let s = alpha * ur;
            if s == 0.0 {
                continue;
            }
            let dst = &mut self.data[r * self.cols..(r + 1) * self.cols];
            for (d, vc) in dst.iter_mut().zip(v) {
                *d += s * vc;
            }
        }
    }
}

impl Index<(usize, usize)> for DenseMatrix {
    type Output = f64;
    fn index(&self, (r, c): (usize, usize)) -> &f64 {
        &self.data[r * self.cols + c]
    }
}

/// Largest singular value by power iteration on `MᵀM`.
///
/// The start vector is fixed (deterministic), and iteration stops once the
/// eigen-residual `‖MᵀMv − λv‖` falls below `tol·λ`; the Rayleigh quotient
/// error is then second order in the residual, so the returned value is well
/// inside `tol` relative accuracy.
pub fn spectral_norm(m: &DenseMatrix, tol: f64, max_iter: usize) -> Result<f64> {
    if !m.is_finite() {
        return invalid("spectral_norm: non-finite entries");
    }
    if !(tol > 0.0) {
        return invalid("spectral_norm: tol must be positive");
    }
    let n = m.cols();
    let peak = m.as_slice().iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if n == 0 || m.rows() == 0 || peak == 0.0 {
        return Ok(0.0);
    }
    // Work on M / max|m_ij| so squared entries neither overflow nor underflow.
    let scaled = m.scaled(1.0 / peak);
    let m = &scaled;
    // Fixed, non-symmetric start vector so no coordinate subspace is favored.
    let mut v: Vec<f64> = (0..n).map(|i| 1.0 + 0.5 * ((i as f64) * 0.7548776662).sin()).collect();
    normalize(&mut v);

    let mut lambda = 0.0;
    for iter in 0..max_iter {
        let mv = m.matvec(&v);
        let w = m.matvec_transpose(&mv);
        lambda = dot(&v, &w);
        if lambda <= 0.0 {
            // Start vector orthogonal to the row space; perturb deterministically.
            for (i, vi) in v.iter_mut().enumerate() {
                *vi += ((i + iter + 1) as f64).cos();
            }
            normalize(&mut v);
            continue;
        }
        let residual = w
            .iter()
            .zip(&v)
            .map(|(wi, vi)| (wi - lambda * vi).powi(2))
            .sum::<f64>()
            .sqrt();
        if residual <= tol * lambda {
            return Ok(lambda.sqrt() * peak);
        }
        v = w;
        normalize(&mut v);
    }
    Err(Error::Convergence {
        last_estimate: lambda.max(0.0).sqrt() * peak,
        iterations: max_iter,
    })
}

fn normalize(v: &mut [f64]) {
    let n = l2_norm(v);
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
}

pub fn frobenius_norm(m: &DenseMatrix) -> f64 {
    m.as_slice().iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Sum over columns of each column's ℓ2 norm.
pub fn norm21(m: &DenseMatrix) -> f64 {
    (0..m.cols())
        .map(|c| (0..m.rows()).map(|r| m.get(r, c).powi(2)).sum::<f64>().sqrt())
        .sum()
}

/// `norm21(mᵀ)`, i.e. the sum of row norms of `m`.
pub fn norm21_of_transpose(m: &DenseMatrix) -> f64 {
    (0..m.rows()).map(|r| l2_norm(m.row(r))).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn spectral_of_simple_matrices() {
        let s = spectral_norm(&DenseMatrix::identity(3), 1e-12, 1000).unwrap();
        assert!((s - 1.0).abs() < 1e-12);
        let s = spectral_norm(&DenseMatrix::from_diag(&[3.0, 4.0]), 1e-12, 1000).unwrap();
        assert!((s - 4.0).abs() < 1e-10);
        assert_eq!(spectral_norm(&DenseMatrix::zeros(3, 2), 1e-9, 10).unwrap(), 0.0);
    }

    #[test]
    fn spectral_rejects_non_finite_and_reports_non_convergence() {
        let m = DenseMatrix {
            rows: 1,
            cols: 2,
            data: vec![1.0, f64::NAN],
        };
        assert!(matches!(spectral_norm(&m, 1e-9, 10), Err(Error::InvalidInput(_))));
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = DenseMatrix::random_uniform(6, 6, 1.0, &mut rng);
        match spectral_norm(&m, 1e-15, 1) {
            Err(Error::Convergence { last_estimate, iterations }) => {
                assert_eq!(iterations, 1);
                assert!(last_estimate > 0.0);
            }
            other => panic!("expected convergence error, got {other:?}"),
        }
    }

    #[test]
    fn frobenius_and_norm21() {
        assert_eq!(frobenius_norm(&DenseMatrix::zeros(2, 3)), 0.0);
        assert!((frobenius_norm(&DenseMatrix::from_diag(&[3.0, 4.0])) - 5.0).abs() < 1e-15);
        let m = DenseMatrix::from_rows(&[vec![3.0, 4.0], vec![0.0, 0.0]]).unwrap();
        assert_eq!(norm21(&m), 7.0);
        assert_eq!(norm21_of_transpose(&m), 5.0);
        assert_eq!(norm21(&DenseMatrix::identity(5)), 5.0);
    }

    #[test]
    fn shape_checks() {
        assert!(DenseMatrix::new(2, 2, vec![1.0; 3]).is_err());
        assert!(DenseMatrix::from_rows(&[vec![1.0], vec![1.0, 2.0]]).is_err());
        let a = DenseMatrix::zeros(2, 3);
        assert!(a.matmul(&a).is_err());
    }
}
