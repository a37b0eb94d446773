//! Small dense matrix support for the operator library and the instance
//! generators.
//!
//! Problems here are desk scale (dimensions in the tens), so a plain
//! row-major matrix with Gaussian elimination and Gram-Schmidt covers
//! everything: resolvents of affine operators, exact solution oracles,
//! and random matrices assembled from orthogonal factors with prescribed
//! spectra so that declared constants are exact by construction.

use crate::space::Vector;
use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum LinalgError {
    #[error("matrix is singular to working precision")]
    Singular,
    #[error("ragged or empty row set")]
    BadShape,
}

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self, LinalgError> {
        let nrows = rows.len();
        let ncols = rows.first().map(Vec::len).unwrap_or(0);
        if nrows == 0 || ncols == 0 || rows.iter().any(|r| r.len() != ncols) {
            return Err(LinalgError::BadShape);
        }
        Ok(Matrix {
            rows: nrows,
            cols: ncols,
            data: rows.into_iter().flatten().collect(),
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        self.data[i * self.cols + j] = value;
    }

    pub fn matvec(&self, x: &Vector) -> Vector {
        assert_eq!(self.cols, x.dim(), "matvec: dimension mismatch");
        let xs = x.as_slice();
        let mut out = vec![0.0; self.rows];
        for i in 0..self.rows {
            let row = &self.data[i * self.cols..(i + 1) * self.cols];
            out[i] = row.iter().zip(xs).map(|(a, b)| a * b).sum();
        }
        Vector::new(out).expect("matvec produced non-finite values")
    }

    /// `A^T x` without materializing the transpose.
    pub fn matvec_t(&self, x: &Vector) -> Vector {
        assert_eq!(self.rows, x.dim(), "matvec_t: dimension mismatch");
        let xs = x.as_slice();
        let mut out = vec![0.0; self.cols];
        for (i, &xi) in xs.iter().enumerate() {
            let row = &self.data[i * self.cols..(i + 1) * self.cols];
            for (o, a) in out.iter_mut().zip(row) {
                *o += a * xi;
            }
        }
        Vector::new(out).expect("matvec_t produced non-finite values")
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.set(j, i, self.get(i, j));
            }
        }
        t
    }

    pub fn matmul(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.cols, other.rows, "matmul: dimension mismatch");
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let aik = self.get(i, k);
                if aik == 0.0 {
                    continue;
                }
                for j in 0..other.cols {
                    out.set(i, j, out.get(i, j) + aik * other.get(k, j));
                }
            }
        }
        out
    }

    /// Scales column `j` by `factors[j]`.
    pub fn scale_cols(&self, factors: &[f64]) -> Matrix {
        assert_eq!(self.cols, factors.len());
        let mut out = self.clone();
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.set(i, j, self.get(i, j) * factors[j]);
            }
        }
        out
    }

    /// Scales every entry by `factor`.
    pub fn scale_all(&self, factor: f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|x| x * factor).collect(),
        }
    }

    pub fn add_scaled_identity(&self, c: f64) -> Matrix {
        assert_eq!(self.rows, self.cols);
        let mut out = self.clone();
        for i in 0..self.rows {
            out.set(i, i, out.get(i, i) + c);
        }
        out
    }

    pub fn symmetric_part(&self) -> Matrix {
        assert_eq!(self.rows, self.cols);
        let mut out = Matrix::zeros(self.rows, self.cols);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.set(i, j, 0.5 * (self.get(i, j) + self.get(j, i)));
            }
        }
        out
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        if self.rows != self.cols {
            return false;
        }
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                let a = self.get(i, j);
                let b = self.get(j, i);
                if (a - b).abs() > tol * (1.0 + a.abs().max(b.abs())) {
                    return false;
                }
            }
        }
        true
    }

    /// Probabilistic positive-semidefiniteness probe on random directions.
    /// Deterministic for a fixed matrix; adequate for validating inputs
    /// that are PSD by construction.
    pub fn psd_probe(&self, samples: usize) -> bool {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0x9d5_0f2);
        for _ in 0..samples {
            let x = gaussian_vector(self.cols, &mut rng);
            let quad = x.dot(&self.matvec(&x));
            if quad < -1e-10 * (1.0 + x.norm_sq()) {
                return false;
            }
        }
        true
    }

    /// Solves `A x = b` by Gaussian elimination with partial pivoting.
    pub fn solve(&self, b: &Vector) -> Result<Vector, LinalgError> {
        lu_factor(self)?.solve(b)
    }

    /// Power-iteration estimate of the largest singular value. A lower
    /// bound that converges to the true value; used by tests to confirm
    /// prescribed spectra.
    pub fn spectral_norm_estimate(&self, iters: usize, seed: u64) -> f64 {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut x = gaussian_vector(self.cols, &mut rng);
        let mut estimate = 0.0;
        for _ in 0..iters {
            let ax = self.matvec(&x);
            let back = self.matvec_t(&ax);
            let norm = back.norm();
            if norm == 0.0 {
                return 0.0;
            }
            estimate = ax.norm() / x.norm();
            x = back.scale(1.0 / norm);
        }
        estimate
    }
}

/// LU decomposition with partial pivoting, reusable across solves.
#[derive(Debug, Clone)]
pub struct LuFactors {
    n: usize,
    lu: Vec<f64>,
    perm: Vec<usize>,
}

/// Factors a square matrix as `P A = L U`.
pub fn lu_factor(m: &Matrix) -> Result<LuFactors, LinalgError> {
    assert_eq!(m.rows, m.cols, "lu_factor: matrix must be square");
    let n = m.rows;
    let mut lu = m.data.clone();
    let mut perm: Vec<usize> = (0..n).collect();
    for col in 0..n {
        let pivot_row = (col..n)
            .max_by(|&r, &s| lu[r * n + col].abs().total_cmp(&lu[s * n + col].abs()))
            .unwrap();
        if lu[pivot_row * n + col].abs() < 1e-300 {
            return Err(LinalgError::Singular);
        }
        if pivot_row != col {
            for j in 0..n {
                lu.swap(col * n + j, pivot_row * n + j);
            }
            perm.swap(col, pivot_row);
        }
        let pivot = lu[col * n + col];
        for row in (col + 1)..n {
            let factor = lu[row * n + col] / pivot;
            lu[row * n + col] = factor;
            if factor == 0.0 {
                continue;
            }
            for j in (col + 1)..n {
                lu[row * n + j] -= factor * lu[col * n + j];
            }
        }
    }
    Ok(LuFactors { n, lu, perm })
}

impl LuFactors {
    pub fn solve(&self, b: &Vector) -> Result<Vector, LinalgError> {
        assert_eq!(self.n, b.dim(), "solve: dimension mismatch");
        let n = self.n;
        let bs = b.as_slice();
        let mut x: Vec<f64> = self.perm.iter().map(|&i| bs[i]).collect();
        for col in 0..n {
            for row in (col + 1)..n {
                let factor = self.lu[row * n + col];
                if factor != 0.0 {
                    x[row] -= factor * x[col];
                }
            }
        }
        for col in (0..n).rev() {
            let mut value = x[col];
            for j in (col + 1)..n {
                value -= self.lu[col * n + j] * x[j];
            }
            x[col] = value / self.lu[col * n + col];
            if !x[col].is_finite() {
                return Err(LinalgError::Singular);
            }
        }
        Vector::new(x).map_err(|_| LinalgError::Singular)
    }
}

pub fn gaussian_vector<R: Rng>(dim: usize, rng: &mut R) -> Vector {
    let entries: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
    Vector::new(entries).expect("Gaussian sample produced non-finite values")
}

/// Matrix with orthonormal columns obtained by twice-iterated Gram-Schmidt
/// on a Gaussian sample; requires `rows >= cols`.
pub fn orthonormal_columns<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> Matrix {
    assert!(rows >= cols, "need rows >= cols for orthonormal columns");
    let mut columns: Vec<Vec<f64>> = Vec::with_capacity(cols);
    while columns.len() < cols {
        let mut v: Vec<f64> = (0..rows).map(|_| rng.sample(StandardNormal)).collect();
        for _pass in 0..2 {
            for q in &columns {
                let proj: f64 = q.iter().zip(&v).map(|(a, b)| a * b).sum();
                for (vi, qi) in v.iter_mut().zip(q) {
                    *vi -= proj * qi;
                }
            }
        }
        let norm: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm < 1e-8 {
            continue;
        }
        for vi in v.iter_mut() {
            *vi /= norm;
        }
        columns.push(v);
    }
    let mut m = Matrix::zeros(rows, cols);
    for (j, col) in columns.iter().enumerate() {
        for (i, &value) in col.iter().enumerate() {
            m.set(i, j, value);
        }
    }
    m
}

pub fn random_orthogonal<R: Rng>(dim: usize, rng: &mut R) -> Matrix {
    orthonormal_columns(dim, dim, rng)
}

/// `Q diag(eigs) Q^T`: symmetric with exactly the prescribed spectrum.
pub fn symmetric_with_spectrum(q: &Matrix, eigs: &[f64]) -> Matrix {
    assert_eq!(q.rows(), q.cols());
    assert_eq!(q.cols(), eigs.len());
    q.scale_cols(eigs).matmul(&q.transpose())
}

/// Real normal matrix `Q B Q^T` where `B` is block diagonal with 2x2
/// rotation-scaling blocks `[[re, -im], [im, re]]` (trailing 1x1 block
/// `re` when the dimension is odd). Eigenvalues are `re_j ± i·im_j`, so
/// the operator norm is `max sqrt(re^2 + im^2)` and the symmetric part
/// has spectrum `{re_j}`, both exact by construction.
pub fn normal_from_conjugate_pairs(q: &Matrix, re: &[f64], im: &[f64]) -> Matrix {
    let dim = q.rows();
    assert_eq!(q.rows(), q.cols());
    assert_eq!(re.len(), dim.div_ceil(2));
    assert_eq!(im.len(), dim / 2);
    let mut b = Matrix::zeros(dim, dim);
    for k in 0..dim / 2 {
        b.set(2 * k, 2 * k, re[k]);
        b.set(2 * k + 1, 2 * k + 1, re[k]);
        b.set(2 * k, 2 * k + 1, -im[k]);
        b.set(2 * k + 1, 2 * k, im[k]);
    }
    if dim % 2 == 1 {
        b.set(dim - 1, dim - 1, re[dim / 2]);
    }
    q.matmul(&b).matmul(&q.transpose())
}
