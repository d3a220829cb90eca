//! Small dense and sparse linear algebra kernels.
//!
//! Only what the pipeline needs: a column-major dense matrix, a CSC sparse
//! matrix with the two products used by randomized SVD, Householder QR, and a
//! one-sided Jacobi SVD.

use std::fmt;

/// Dense column-major matrix.
#[derive(Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Matrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            let row: Vec<String> = (0..self.cols).map(|j| format!("{:.6}", self[(i, j)])).collect();
            writeln!(f, "  {}", row.join(", "))?;
        }
        write!(f, "]")
    }
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    /// Builds a matrix from row slices. Panics if rows are ragged.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, |x| x.as_ref().len());
        let mut m = Self::zeros(r, c);
        for (i, row) in rows.iter().enumerate() {
            let row = row.as_ref();
            assert_eq!(row.len(), c, "ragged rows");
            for (j, v) in row.iter().enumerate() {
                m[(i, j)] = *v;
            }
        }
        m
    }

    /// Builds a matrix from column vectors. Panics if columns are ragged.
    pub fn from_columns<C: AsRef<[f64]>>(columns: &[C]) -> Self {
        let c = columns.len();
        let r = columns.first().map_or(0, |x| x.as_ref().len());
        let mut data = Vec::with_capacity(r * c);
        for col in columns {
            assert_eq!(col.as_ref().len(), r, "ragged columns");
            data.extend_from_slice(col.as_ref());
        }
        Self { rows: r, cols: c, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn column(&self, j: usize) -> &[f64] {
        &self.data[j * self.rows..(j + 1) * self.rows]
    }

    pub fn column_mut(&mut self, j: usize) -> &mut [f64] {
        &mut self.data[j * self.rows..(j + 1) * self.rows]
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        (0..self.cols).map(|j| self[(i, j)]).collect()
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for j in 0..self.cols {
            for i in 0..self.rows {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn matmul(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.cols, other.rows, "matmul dimension mismatch");
        let mut out = Matrix::zeros(self.rows, other.cols);
        for j in 0..other.cols {
            let oc = other.column(j);
            let dst = &mut out.data[j * self.rows..(j + 1) * self.rows];
            for (k, &b) in oc.iter().enumerate() {
                if b == 0.0 {
                    continue;
                }
                for (d, a) in dst.iter_mut().zip(self.column(k)) {
                    *d += a * b;
                }
            }
        }
        out
    }

    /// `selfᵀ · other` without materializing the transpose.
    pub fn tr_matmul(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.rows, other.rows, "tr_matmul dimension mismatch");
        let mut out = Matrix::zeros(self.cols, other.cols);
        for j in 0..other.cols {
            for i in 0..self.cols {
                out[(i, j)] = dot(self.column(i), other.column(j));
            }
        }
        out
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Keeps only the first `n` columns.
    pub fn truncate_columns(&mut self, n: usize) {
        assert!(n <= self.cols);
        self.data.truncate(n * self.rows);
        self.cols = n;
    }

    pub fn sub(&self, other: &Matrix) -> Matrix {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
        }
    }
}

impl std::ops::Index<(usize, usize)> for Matrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[j * self.rows + i]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[j * self.rows + i]
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Compressed sparse column matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CscMatrix {
    rows: usize,
    cols: usize,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CscMatrix {
    /// Builds from per-column `(row, value)` entries. Rows within a column
    /// are sorted; explicit zeros are dropped.
    pub fn from_columns(rows: usize, columns: Vec<Vec<(usize, f64)>>) -> Self {
        let cols = columns.len();
        let mut col_ptr = Vec::with_capacity(cols + 1);
        let mut row_idx = Vec::new();
        let mut values = Vec::new();
        col_ptr.push(0);
        for mut col in columns {
            col.sort_by_key(|&(r, _)| r);
            for (r, v) in col {
                assert!(r < rows, "row index out of bounds");
                if v != 0.0 {
                    row_idx.push(r);
                    values.push(v);
                }
            }
            col_ptr.push(row_idx.len());
        }
        Self { rows, cols, col_ptr, row_idx, values }
    }

    pub fn from_dense(m: &Matrix) -> Self {
        let columns = (0..m.cols())
            .map(|j| m.column(j).iter().copied().enumerate().filter(|(_, v)| *v != 0.0).collect())
            .collect();
        Self::from_columns(m.rows(), columns)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Nonzero `(row, value)` pairs of column `j`.
    pub fn column(&self, j: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.col_ptr[j]..self.col_ptr[j + 1];
        self.row_idx[span.clone()].iter().copied().zip(self.values[span].iter().copied())
    }

    /// Value at `(i, j)`, zero when not stored.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let span = self.col_ptr[j]..self.col_ptr[j + 1];
        match self.row_idx[span.clone()].binary_search(&i) {
            Ok(k) => self.values[span.start + k],
            Err(_) => 0.0,
        }
    }

    /// Iterates `(row, col, value)` over stored entries, column-major.
    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.cols).flat_map(move |j| self.column(j).map(move |(i, v)| (i, j, v)))
    }

    pub fn to_dense(&self) -> Matrix {
        let mut m = Matrix::zeros(self.rows, self.cols);
        for (i, j, v) in self.triplets() {
            m[(i, j)] = v;
        }
        m
    }

    /// `self · b` for dense `b`.
    pub fn mul_dense(&self, b: &Matrix) -> Matrix {
        assert_eq!(self.cols, b.rows(), "sparse mul dimension mismatch");
        let mut out = Matrix::zeros(self.rows, b.cols());
        for k in 0..b.cols() {
            let bc = b.column(k);
            let dst = out.column_mut(k);
            for (j, &bj) in bc.iter().enumerate() {
                if bj == 0.0 {
                    continue;
                }
                for p in self.col_ptr[j]..self.col_ptr[j + 1] {
                    dst[self.row_idx[p]] += self.values[p] * bj;
                }
            }
        }
        out
    }

    /// `selfᵀ · b` for dense `b`.
    pub fn tr_mul_dense(&self, b: &Matrix) -> Matrix {
        assert_eq!(self.rows, b.rows(), "sparse tr_mul dimension mismatch");
        let mut out = Matrix::zeros(self.cols, b.cols());
        for k in 0..b.cols() {
            let bc = b.column(k);
            for j in 0..self.cols {
                let mut acc = 0.0;
                for p in self.col_ptr[j]..self.col_ptr[j + 1] {
                    acc += self.values[p] * bc[self.row_idx[p]];
                }
                out[(j, k)] = acc;
            }
        }
        out
    }

    /// Returns a copy with columns reordered so that new column `c` is old
    /// column `order[c]`.
    pub fn select_columns(&self, order: &[usize]) -> CscMatrix {
        let columns = order.iter().map(|&j| self.column(j).collect()).collect();
        CscMatrix::from_columns(self.rows, columns)
    }
}

/// Householder QR factorization of a tall matrix (`rows >= cols`).
///
/// Reflectors are stored below the diagonal, `R` on and above it.
#[derive(Debug, Clone)]
pub struct HouseholderQr {
    qr: Matrix,
    tau: Vec<f64>,
}

impl HouseholderQr {
    pub fn new(mut a: Matrix) -> Self {
        let (m, n) = (a.rows(), a.cols());
        assert!(m >= n, "HouseholderQr needs rows >= cols");
        let mut tau = vec![0.0; n];
        for k in 0..n {
            let col = &mut a.column_mut(k)[k..];
            let alpha = norm(col);
            if alpha == 0.0 {
                continue;
            }
            let x0 = col[0];
            let beta = if x0 > 0.0 { -alpha } else { alpha };
            // v = x - beta e1, normalized so v[0] = 1
            let v0 = x0 - beta;
            for x in col[1..].iter_mut() {
                *x /= v0;
            }
            col[0] = beta;
            tau[k] = (beta - x0) / beta;
            for j in k + 1..n {
                let s = {
                    let (vk, cj) = (a.column(k), a.column(j));
                    let mut s = cj[k];
                    for i in k + 1..m {
                        s += vk[i] * cj[i];
                    }
                    s * tau[k]
                };
                let vk: Vec<f64> = a.column(k)[k + 1..].to_vec();
                let cj = a.column_mut(j);
                cj[k] -= s;
                for (i, v) in vk.iter().enumerate() {
                    cj[k + 1 + i] -= s * v;
                }
            }
        }
        Self { qr: a, tau }
    }

    pub fn rows(&self) -> usize {
        self.qr.rows()
    }

    pub fn cols(&self) -> usize {
        self.qr.cols()
    }

    /// Diagonal of `R`.
    pub fn r_diagonal(&self) -> Vec<f64> {
        (0..self.cols()).map(|k| self.qr[(k, k)]).collect()
    }

    /// Upper-triangular `R` (cols × cols).
    pub fn r(&self) -> Matrix {
        let n = self.cols();
        let mut r = Matrix::zeros(n, n);
        for j in 0..n {
            for i in 0..=j {
                r[(i, j)] = self.qr[(i, j)];
            }
        }
        r
    }

    /// Overwrites `b` with `Qᵀ b`.
    pub fn apply_qt(&self, b: &mut [f64]) {
        assert_eq!(b.len(), self.rows());
        for k in 0..self.cols() {
            if self.tau[k] == 0.0 {
                continue;
            }
            let v = self.qr.column(k);
            let mut s = b[k];
            for i in k + 1..b.len() {
                s += v[i] * b[i];
            }
            s *= self.tau[k];
            b[k] -= s;
            for i in k + 1..b.len() {
                b[i] -= s * v[i];
            }
        }
    }

    /// Overwrites `b` with `Q b` (full `Q`).
    pub fn apply_q(&self, b: &mut [f64]) {
        assert_eq!(b.len(), self.rows());
        for k in (0..self.cols()).rev() {
            if self.tau[k] == 0.0 {
                continue;
            }
            let v = self.qr.column(k);
            let mut s = b[k];
            for i in k + 1..b.len() {
                s += v[i] * b[i];
            }
            s *= self.tau[k];
            b[k] -= s;
            for i in k + 1..b.len() {
                b[i] -= s * v[i];
            }
        }
    }

    /// The first `cols` columns of `Q`.
    pub fn thin_q(&self) -> Matrix {
        let (m, n) = (self.rows(), self.cols());
        let mut q = Matrix::zeros(m, n);
        for j in 0..n {
            let col = q.column_mut(j);
            col[j] = 1.0;
            self.apply_q(col);
        }
        q
    }

    /// Solves `R x = b` using the leading `cols` entries of `b`.
    pub fn solve_r(&self, b: &[f64]) -> Vec<f64> {
        let n = self.cols();
        let mut x = b[..n].to_vec();
        for i in (0..n).rev() {
            let mut s = x[i];
            for j in i + 1..n {
                s -= self.qr[(i, j)] * x[j];
            }
            x[i] = s / self.qr[(i, i)];
        }
        x
    }

    /// `(RᵀR)⁻¹ = R⁻¹ R⁻ᵀ`, the unscaled coefficient covariance.
    pub fn inverse_gram(&self) -> Matrix {
        let n = self.cols();
        // R⁻¹ by back-substitution on identity columns.
        let mut rinv = Matrix::zeros(n, n);
        for j in 0..n {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            let x = self.solve_r(&e);
            rinv.column_mut(j).copy_from_slice(&x);
        }
        rinv.matmul(&rinv.transpose())
    }
}

/// Orthonormal basis of the column span of a tall matrix (thin Householder `Q`).
pub fn orthonormalize(a: &Matrix) -> Matrix {
    HouseholderQr::new(a.clone()).thin_q()
}

/// Thin singular value decomposition `A = U diag(s) Vᵀ`.
#[derive(Debug, Clone)]
pub struct Svd {
    /// `rows × r` with orthonormal columns.
    pub u: Matrix,
    /// Descending, nonnegative, length `r = min(rows, cols)`.
    pub singular_values: Vec<f64>,
    /// `cols × r` with orthonormal columns.
    pub v: Matrix,
}

/// One-sided Jacobi SVD. Dense and exact to working precision; intended for
/// matrices up to a few hundred columns.
pub fn jacobi_svd(a: &Matrix) -> Svd {
    if a.rows() < a.cols() {
        let t = jacobi_svd(&a.transpose());
        return Svd { u: t.v, singular_values: t.singular_values, v: t.u };
    }
    let (m, n) = (a.rows(), a.cols());
    let mut w = a.clone();
    let mut v = Matrix::identity(n);
    const MAX_SWEEPS: usize = 80;
    let eps = f64::EPSILON;
    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let alpha = dot(w.column(p), w.column(p));
                let beta = dot(w.column(q), w.column(q));
                let gamma = dot(w.column(p), w.column(q));
                if gamma == 0.0 || gamma.abs() <= eps * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate_columns(&mut w, p, q, c, s);
                rotate_columns(&mut v, p, q, c, s);
            }
        }
        if !rotated {
            break;
        }
    }
    let mut order: Vec<(f64, usize)> = (0..n).map(|j| (norm(w.column(j)), j)).collect();
    // Stable descending sort keeps equal values in column order.
    order.sort_by(|a, b| b.0.total_cmp(&a.0));

    let mut u = Matrix::zeros(m, n);
    let mut vs = Matrix::zeros(n, n);
    let mut s = Vec::with_capacity(n);
    let mut missing = Vec::new();
    for (dst, &(sigma, src)) in order.iter().enumerate() {
        s.push(sigma);
        vs.column_mut(dst).copy_from_slice(v.column(src));
        if sigma > 0.0 {
            for (o, x) in u.column_mut(dst).iter_mut().zip(w.column(src)) {
                *o = x / sigma;
            }
        } else {
            missing.push(dst);
        }
    }
    complete_orthonormal_columns(&mut u, &missing);
    Svd { u, singular_values: s, v: vs }
}

fn rotate_columns(m: &mut Matrix, p: usize, q: usize, c: f64, s: f64) {
    let rows = m.rows();
    for i in 0..rows {
        let (xp, xq) = (m[(i, p)], m[(i, q)]);
        m[(i, p)] = c * xp - s * xq;
        m[(i, q)] = s * xp + c * xq;
    }
}

/// Fills the listed (zero) columns with unit vectors orthogonal to every
/// other column, via Gram-Schmidt on the standard basis.
fn complete_orthonormal_columns(u: &mut Matrix, missing: &[usize]) {
    let m = u.rows();
    let mut candidate = 0;
    for &dst in missing {
        while candidate < m {
            let mut e = vec![0.0; m];
            e[candidate] = 1.0;
            candidate += 1;
            for _ in 0..2 {
                for j in 0..u.cols() {
                    if j == dst {
                        continue;
                    }
                    let proj = dot(&e, u.column(j));
                    for (x, y) in e.iter_mut().zip(u.column(j)) {
                        *x -= proj * y;
                    }
                }
            }
            let nrm = norm(&e);
            if nrm > 0.5 {
                for (o, x) in u.column_mut(dst).iter_mut().zip(&e) {
                    *o = x / nrm;
                }
                break;
            }
        }
    }
}
