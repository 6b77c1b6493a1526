//! Dense real linear algebra.
//!
//! Matrices are row-major `f64` buffers. Products go through a packed GEMM
//! kernel split into fixed row chunks (see [`crate::par`]); SVD and real Schur
//! decompositions are delegated to nalgebra.

use std::ops::{Index, IndexMut};

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{dim_err, Error, Result};
use crate::par;

/// Rows per work unit in [`matmul`]. Fixed so results never depend on the
/// thread count.
const MATMUL_ROW_CHUNK: usize = 64;

/// Taylor order used by the scaling-and-squaring exponential.
pub const EXPM_TAYLOR_ORDER: usize = 18;

/// Scaled norm bound for the Taylor stage of [`expm`].
const EXPM_SCALED_NORM: f64 = 0.5;

/// Default relative singular-value cutoff for [`pinv`].
pub const DEFAULT_RANK_TOL: f64 = 1e-12;

/// Orthogonality tolerance accepted by [`eig_orthogonal`].
pub const ORTHOGONALITY_TOL: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(dim_err(
                "Matrix::new",
                format!("{rows}x{cols} needs {} entries, got {}", rows * cols, data.len()),
            ));
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

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    /// Stacks equally long rows.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(dim_err(
                    "Matrix::from_rows",
                    format!("row {i} has length {}, expected {cols}", r.len()),
                ));
            }
            data.extend_from_slice(r);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn column_vector(v: &[f64]) -> Self {
        Self {
            rows: v.len(),
            cols: 1,
            data: v.to_vec(),
        }
    }

    pub fn row_vector(v: &[f64]) -> Self {
        Self {
            rows: 1,
            cols: v.len(),
            data: v.to_vec(),
        }
    }

    pub fn scalar(x: f64) -> Self {
        Self {
            rows: 1,
            cols: 1,
            data: vec![x],
        }
    }

    pub fn diag(values: &[f64]) -> Self {
        let n = values.len();
        let mut m = Self::zeros(n, n);
        for (i, v) in values.iter().enumerate() {
            m.data[i * n + i] = *v;
        }
        m
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
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    /// Value of a 1x1 matrix (or the first entry).
    pub fn as_scalar(&self) -> f64 {
        self.data[0]
    }

    /// Copies rows `start..end`.
    pub fn slice_rows(&self, start: usize, end: usize) -> Matrix {
        Matrix {
            rows: end - start,
            cols: self.cols,
            data: self.data[start * self.cols..end * self.cols].to_vec(),
        }
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        t
    }

    pub fn add(&self, other: &Matrix) -> Result<Matrix> {
        self.zip_with(other, "add", |a, b| a + b)
    }

    pub fn sub(&self, other: &Matrix) -> Result<Matrix> {
        self.zip_with(other, "sub", |a, b| a - b)
    }

    pub fn hadamard(&self, other: &Matrix) -> Result<Matrix> {
        self.zip_with(other, "hadamard", |a, b| a * b)
    }

    pub fn scale(&self, s: f64) -> Matrix {
        self.map(|x| x * s)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    /// `self += s * other`, shapes must agree.
    pub fn axpy(&mut self, s: f64, other: &Matrix) {
        debug_assert_eq!(self.shape(), other.shape());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += s * b;
        }
    }

    fn zip_with(&self, other: &Matrix, op: &'static str, f: impl Fn(f64, f64) -> f64) -> Result<Matrix> {
        if self.shape() != other.shape() {
            return Err(dim_err(
                op,
                format!("{:?} vs {:?}", self.shape(), other.shape()),
            ));
        }
        Ok(Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn sum_squares(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.sum_squares().sqrt()
    }

    /// Induced 1-norm (max absolute column sum).
    pub fn norm_1(&self) -> f64 {
        let mut sums = vec![0.0; self.cols];
        for i in 0..self.rows {
            for (s, x) in sums.iter_mut().zip(self.row(i)) {
                *s += x.abs();
            }
        }
        sums.into_iter().fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn trace(&self) -> f64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    /// `||A A^T - I||_F`.
    pub fn orthogonality_defect(&self) -> f64 {
        let g = matmul_nt(self, self);
        let mut s = 0.0;
        for i in 0..g.rows {
            for j in 0..g.cols {
                let d = g[(i, j)] - if i == j { 1.0 } else { 0.0 };
                s += d * d;
            }
        }
        s.sqrt()
    }

    pub fn determinant(&self) -> f64 {
        to_nalgebra(self).determinant()
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(self.cols, x.len());
        (0..self.rows)
            .map(|i| self.row(i).iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

/// Raw GEMM: `c = a * b` where `a` is described by its strides.
///
/// Work is split into row chunks of [`MATMUL_ROW_CHUNK`]; each chunk calls the
/// packed kernel independently.
#[allow(clippy::too_many_arguments)]
fn gemm_into(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    a_row_stride: isize,
    a_col_stride: isize,
    b: &[f64],
    b_row_stride: isize,
    b_col_stride: isize,
    c: &mut [f64],
) {
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        c.iter_mut().for_each(|x| *x = 0.0);
        return;
    }
    par::for_each_chunk_mut(c, MATMUL_ROW_CHUNK * n, |chunk, c_rows| {
        let row0 = chunk * MATMUL_ROW_CHUNK;
        let rows = c_rows.len() / n;
        let a_off = row0 as isize * a_row_stride;
        // SAFETY: every index touched by the kernel lies inside `a`, `b` and
        // `c_rows`, whose extents follow from (rows, k, n) and the strides.
        unsafe {
            matrixmultiply::dgemm(
                rows,
                k,
                n,
                1.0,
                a.as_ptr().offset(a_off),
                a_row_stride,
                a_col_stride,
                b.as_ptr(),
                b_row_stride,
                b_col_stride,
                0.0,
                c_rows.as_mut_ptr(),
                n as isize,
                1,
            );
        }
    });
}

/// Matrix product `a * b`.
pub fn matmul(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.cols != b.rows {
        return Err(dim_err(
            "matmul",
            format!("{:?} * {:?}", a.shape(), b.shape()),
        ));
    }
    Ok(mm(a, b))
}

/// Unchecked product for internal callers that already validated shapes.
pub(crate) fn mm(a: &Matrix, b: &Matrix) -> Matrix {
    debug_assert_eq!(a.cols, b.rows);
    let mut c = Matrix::zeros(a.rows, b.cols);
    gemm_into(
        a.rows,
        a.cols,
        b.cols,
        &a.data,
        a.cols as isize,
        1,
        &b.data,
        b.cols as isize,
        1,
        &mut c.data,
    );
    c
}

/// `a * b^T` without materializing the transpose.
pub(crate) fn matmul_nt(a: &Matrix, b: &Matrix) -> Matrix {
    debug_assert_eq!(a.cols, b.cols);
    let mut c = Matrix::zeros(a.rows, b.rows);
    gemm_into(
        a.rows,
        a.cols,
        b.rows,
        &a.data,
        a.cols as isize,
        1,
        &b.data,
        1,
        b.cols as isize,
        &mut c.data,
    );
    c
}

/// `a^T * b` without materializing the transpose.
pub(crate) fn matmul_tn(a: &Matrix, b: &Matrix) -> Matrix {
    debug_assert_eq!(a.rows, b.rows);
    let mut c = Matrix::zeros(a.cols, b.cols);
    gemm_into(
        a.cols,
        a.rows,
        b.cols,
        &a.data,
        1,
        a.cols as isize,
        &b.data,
        b.cols as isize,
        1,
        &mut c.data,
    );
    c
}

/// Kronecker product; entry `(i*p2 + k, j*q2 + l)` equals `a[i,j] * b[k,l]`.
pub fn kron(a: &Matrix, b: &Matrix) -> Matrix {
    let (p1, q1) = a.shape();
    let (p2, q2) = b.shape();
    let cols = q1 * q2;
    let mut out = Matrix::zeros(p1 * p2, cols);
    for i in 0..p1 {
        for k in 0..p2 {
            let row = &mut out.data[(i * p2 + k) * cols..(i * p2 + k + 1) * cols];
            for j in 0..q1 {
                let aij = a[(i, j)];
                let dst = &mut row[j * q2..(j + 1) * q2];
                for (d, bkl) in dst.iter_mut().zip(b.row(k)) {
                    *d = aij * bkl;
                }
            }
        }
    }
    out
}

pub(crate) fn to_nalgebra(m: &Matrix) -> DMatrix<f64> {
    DMatrix::from_row_slice(m.rows, m.cols, &m.data)
}

pub(crate) fn from_nalgebra(m: &DMatrix<f64>) -> Matrix {
    Matrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

/// Moore-Penrose pseudo-inverse via SVD, discarding singular values below
/// `rank_tol * sigma_max`.
pub fn pinv(x: &Matrix, rank_tol: f64) -> Result<Matrix> {
    if x.rows == 0 || x.cols == 0 {
        return Err(dim_err("pinv", "empty matrix"));
    }
    let svd = to_nalgebra(x).svd(true, true);
    let (u, v_t) = match (svd.u, svd.v_t) {
        (Some(u), Some(v_t)) => (u, v_t),
        _ => return Err(Error::Eigen("SVD did not produce singular vectors".into())),
    };
    let sigma = svd.singular_values;
    let smax = sigma.iter().fold(0.0f64, |m, s| m.max(*s));
    let cutoff = rank_tol * smax;
    // X+ = V diag(1/s) U^T
    let r = sigma.len();
    let mut out = Matrix::zeros(x.cols, x.rows);
    for t in 0..r {
        let s = sigma[t];
        if s <= cutoff || s == 0.0 {
            continue;
        }
        let inv = 1.0 / s;
        for i in 0..x.cols {
            let vi = v_t[(t, i)] * inv;
            if vi == 0.0 {
                continue;
            }
            let row = out.row_mut(i);
            for (j, o) in row.iter_mut().enumerate() {
                *o += vi * u[(j, t)];
            }
        }
    }
    Ok(out)
}

/// Intermediate values of the scaling-and-squaring exponential, kept so the
/// reverse pass can differentiate through the exact computation.
#[derive(Clone, Debug)]
pub(crate) struct ExpmTrace {
    pub squarings: u32,
    /// `A / 2^s`.
    pub scaled: Matrix,
    /// Horner accumulator before each step (step `k = N, N-1, ..., 1`).
    pub horner_inputs: Vec<Matrix>,
    /// Matrix before each squaring.
    pub square_inputs: Vec<Matrix>,
}

fn squarings_for(a: &Matrix) -> u32 {
    let norm = a.norm_1();
    let mut s = 0u32;
    while norm / 2f64.powi(s as i32) > EXPM_SCALED_NORM {
        s += 1;
    }
    s
}

/// Matrix exponential by scaling and squaring with a fixed-order Taylor stage.
pub fn expm(a: &Matrix) -> Result<Matrix> {
    if !a.is_square() {
        return Err(dim_err("expm", format!("non-square {:?}", a.shape())));
    }
    Ok(expm_impl(a, None))
}

pub(crate) fn expm_traced(a: &Matrix) -> (Matrix, ExpmTrace) {
    let mut trace = ExpmTrace {
        squarings: 0,
        scaled: Matrix::zeros(0, 0),
        horner_inputs: Vec::with_capacity(EXPM_TAYLOR_ORDER),
        square_inputs: Vec::new(),
    };
    let k = expm_impl(a, Some(&mut trace));
    (k, trace)
}

fn expm_impl(a: &Matrix, mut trace: Option<&mut ExpmTrace>) -> Matrix {
    let n = a.rows;
    let s = squarings_for(a);
    let b = a.scale(1.0 / 2f64.powi(s as i32));
    // Horner: P <- I + B P / k for k = N..1.
    let mut p = Matrix::identity(n);
    for k in (1..=EXPM_TAYLOR_ORDER).rev() {
        let mut next = mm(&b, &p);
        next.data.iter_mut().for_each(|x| *x /= k as f64);
        for i in 0..n {
            next.data[i * n + i] += 1.0;
        }
        if let Some(t) = trace.as_deref_mut() {
            t.horner_inputs.push(p);
        }
        p = next;
    }
    for _ in 0..s {
        let sq = mm(&p, &p);
        if let Some(t) = trace.as_deref_mut() {
            t.square_inputs.push(p);
        }
        p = sq;
    }
    if let Some(t) = trace {
        t.squarings = s;
        t.scaled = b;
    }
    p
}

/// One eigenpair; `vector` has unit Euclidean norm.
#[derive(Clone, Debug, PartialEq)]
pub struct EigenPair {
    pub value: Complex64,
    pub vector: Vec<Complex64>,
}

impl EigenPair {
    pub fn is_real(&self) -> bool {
        self.value.im == 0.0
    }

    /// Real part of the eigenvector.
    pub fn real_vector(&self) -> Vec<f64> {
        self.vector.iter().map(|z| z.re).collect()
    }
}

fn normalize_complex(v: &mut [Complex64]) {
    let n = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|z| *z /= n);
    }
}

/// Full eigendecomposition of an orthogonal matrix.
///
/// Uses the real Schur form `K = Q T Q^T`, which for a normal matrix is block
/// diagonal: 1x1 blocks carry the real eigenvalues (+1/-1) and 2x2 blocks carry
/// conjugate pairs on the unit circle.
pub fn eig_orthogonal(k: &Matrix) -> Result<Vec<EigenPair>> {
    if !k.is_square() {
        return Err(dim_err("eig_orthogonal", format!("non-square {:?}", k.shape())));
    }
    let deviation = k.orthogonality_defect();
    if !(deviation < ORTHOGONALITY_TOL) {
        return Err(Error::NotOrthogonal {
            deviation,
            tolerance: ORTHOGONALITY_TOL,
        });
    }
    let n = k.rows;
    let schur = nalgebra::linalg::Schur::try_new(to_nalgebra(k), f64::EPSILON, 10_000)
        .ok_or_else(|| Error::Eigen("real Schur iteration did not converge".into()))?;
    let (q, t) = schur.unpack();
    let col = |j: usize| -> Vec<f64> { (0..n).map(|i| q[(i, j)]).collect() };
    let real_pair = |value: f64, v: Vec<f64>| EigenPair {
        value: Complex64::new(value, 0.0),
        vector: v.into_iter().map(|x| Complex64::new(x, 0.0)).collect(),
    };

    let mut pairs = Vec::with_capacity(n);
    let mut i = 0;
    while i < n {
        let split = i + 1 == n || t[(i + 1, i)].abs() <= f64::EPSILON * 4.0;
        if split {
            pairs.push(real_pair(t[(i, i)], col(i)));
            i += 1;
            continue;
        }
        let (a, b, c, d) = (t[(i, i)], t[(i, i + 1)], t[(i + 1, i)], t[(i + 1, i + 1)]);
        let half_tr = 0.5 * (a + d);
        let disc = 0.25 * (a - d) * (a - d) + b * c;
        let (qi, qj) = (col(i), col(i + 1));
        if disc >= 0.0 {
            // Unsplit block with real spectrum.
            for mu in [half_tr + disc.sqrt(), half_tr - disc.sqrt()] {
                let (v0, v1) = if b.abs() >= c.abs() && b != 0.0 {
                    (b, mu - a)
                } else if c != 0.0 {
                    (mu - d, c)
                } else {
                    (1.0, 0.0)
                };
                let norm = (v0 * v0 + v1 * v1).sqrt();
                let v: Vec<f64> = qi
                    .iter()
                    .zip(&qj)
                    .map(|(x, y)| (v0 * x + v1 * y) / norm)
                    .collect();
                pairs.push(real_pair(mu, v));
            }
        } else {
            let omega = (-disc).sqrt();
            let lambda = Complex64::new(half_tr, omega);
            let (v0, v1) = if b.abs() >= c.abs() {
                (Complex64::new(b, 0.0), lambda - a)
            } else {
                (lambda - d, Complex64::new(c, 0.0))
            };
            let mut v: Vec<Complex64> = qi.iter().zip(&qj).map(|(x, y)| v0 * x + v1 * y).collect();
            normalize_complex(&mut v);
            let conj: Vec<Complex64> = v.iter().map(|z| z.conj()).collect();
            pairs.push(EigenPair { value: lambda, vector: v });
            pairs.push(EigenPair {
                value: lambda.conj(),
                vector: conj,
            });
        }
        i += 2;
    }
    for p in &pairs {
        let modulus = p.value.norm();
        if (modulus - 1.0).abs() >= ORTHOGONALITY_TOL {
            return Err(Error::Eigen(format!(
                "eigenvalue {} has modulus {modulus}, expected 1",
                p.value
            )));
        }
    }
    Ok(pairs)
}

/// Eigenvalues of a general square matrix.
pub fn eigenvalues(k: &Matrix) -> Result<Vec<Complex64>> {
    if !k.is_square() {
        return Err(dim_err("eigenvalues", format!("non-square {:?}", k.shape())));
    }
    let schur = nalgebra::linalg::Schur::try_new(to_nalgebra(k), f64::EPSILON, 10_000)
        .ok_or_else(|| Error::Eigen("real Schur iteration did not converge".into()))?;
    Ok(schur.complex_eigenvalues().iter().copied().collect())
}

/// Largest eigenvalue modulus.
pub fn spectral_radius(k: &Matrix) -> Result<f64> {
    Ok(eigenvalues(k)?.iter().fold(0.0, |m, z| m.max(z.norm())))
}

/// Orthonormal basis for the column space of a tall matrix (thin QR).
pub fn orthonormal_columns(a: &Matrix) -> Matrix {
    let qr = to_nalgebra(a).qr();
    from_nalgebra(&qr.q())
}
