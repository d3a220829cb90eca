//! Latent semantic indexing: truncated SVD of the term-document matrix.
//!
//! `A ≈ U_j Σ_j V_jᵀ`; document `d` is represented by column `d` of `V_jᵀ`,
//! then scaled to unit length so Euclidean distance between documents orders
//! pairs the same way cosine similarity does.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::linalg::{jacobi_svd, norm, orthonormalize, CscMatrix, Matrix};
use crate::text::TermDocumentMatrix;

#[derive(Debug, Error, PartialEq)]
pub enum LsiError {
    #[error("rank j = {j} outside 1..={max}")]
    DimensionOutOfRange { j: usize, max: usize },
    #[error("truncated SVD did not converge in {iterations} iterations (last relative change {change:e})")]
    Convergence { iterations: usize, change: f64 },
}

/// How the top singular triplets are computed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SvdMethod {
    /// Dense one-sided Jacobi on the full matrix.
    Dense,
    /// Randomized subspace iteration on the sparse matrix.
    Randomized { oversample: usize, max_iter: usize, tol: f64, seed: u64 },
    /// Dense when `min(m, n) <= 200`, randomized otherwise.
    Auto,
}

impl SvdMethod {
    pub const DENSE_LIMIT: usize = 200;

    pub fn randomized() -> Self {
        SvdMethod::Randomized { oversample: 10, max_iter: 200, tol: 1e-12, seed: 0x5eed }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LsiModel {
    singular_values: Vec<f64>,
    term_basis: Matrix,
    doc_projection: Matrix,
}

impl LsiModel {
    pub fn j(&self) -> usize {
        self.singular_values.len()
    }

    pub fn singular_values(&self) -> &[f64] {
        &self.singular_values
    }

    /// `m × j`, orthonormal columns.
    pub fn term_basis(&self) -> &Matrix {
        &self.term_basis
    }

    /// `j × n`, the leading rows of `Vᵀ` (unscaled).
    pub fn doc_projection(&self) -> &Matrix {
        &self.doc_projection
    }

    /// One unit-length `j`-vector per document. A document whose projection
    /// is exactly zero stays the zero vector.
    pub fn project_documents(&self) -> Vec<Vec<f64>> {
        (0..self.doc_projection.cols())
            .map(|d| {
                let mut v = self.doc_projection.column(d).to_vec();
                let n = norm(&v);
                if n > 0.0 {
                    v.iter_mut().for_each(|x| *x /= n);
                }
                v
            })
            .collect()
    }

    /// `U_j Σ_j V_jᵀ` as a dense matrix.
    pub fn reconstruct(&self) -> Matrix {
        let mut us = self.term_basis.clone();
        for (k, s) in self.singular_values.iter().enumerate() {
            us.column_mut(k).iter_mut().for_each(|x| *x *= s);
        }
        us.matmul(&self.doc_projection)
    }

    /// Frobenius norm of `A - U_j Σ_j V_jᵀ`.
    pub fn reconstruction_error(&self, a: &CscMatrix) -> f64 {
        a.to_dense().sub(&self.reconstruct()).frobenius_norm()
    }
}

/// Fits a rank-`j` model with [`SvdMethod::Auto`].
pub fn fit_lsi(a: &TermDocumentMatrix, j: usize) -> Result<LsiModel, LsiError> {
    fit_lsi_with(a.weights(), j, SvdMethod::Auto)
}

pub fn fit_lsi_with(a: &CscMatrix, j: usize, method: SvdMethod) -> Result<LsiModel, LsiError> {
    let max = a.rows().min(a.cols());
    if j == 0 || j > max {
        return Err(LsiError::DimensionOutOfRange { j, max });
    }
    let method = match method {
        SvdMethod::Auto if max <= SvdMethod::DENSE_LIMIT => SvdMethod::Dense,
        SvdMethod::Auto => SvdMethod::randomized(),
        m => m,
    };
    let (mut u, s, mut v) = match method {
        SvdMethod::Dense => {
            let svd = jacobi_svd(&a.to_dense());
            (svd.u, svd.singular_values, svd.v)
        }
        SvdMethod::Randomized { oversample, max_iter, tol, seed } => {
            randomized_svd(a, j, oversample, max_iter, tol, seed)?
        }
        SvdMethod::Auto => unreachable!(),
    };
    u.truncate_columns(j);
    v.truncate_columns(j);
    let singular_values = s[..j].to_vec();
    fix_signs(&mut u, &mut v);
    Ok(LsiModel { singular_values, term_basis: u, doc_projection: v.transpose() })
}

/// Flips each singular pair so the largest-magnitude entry of the left
/// vector is positive (first such entry on ties).
fn fix_signs(u: &mut Matrix, v: &mut Matrix) {
    for k in 0..u.cols() {
        let col = u.column(k);
        let mut best = 0;
        for (i, x) in col.iter().enumerate() {
            if x.abs() > col[best].abs() {
                best = i;
            }
        }
        if col[best] < 0.0 {
            u.column_mut(k).iter_mut().for_each(|x| *x = -*x);
            v.column_mut(k).iter_mut().for_each(|x| *x = -*x);
        }
    }
}

/// Subspace iteration with Rayleigh-Ritz extraction. Returns `(U, s, V)`
/// with `l = min(j + oversample, m, n)` columns.
fn randomized_svd(
    a: &CscMatrix,
    j: usize,
    oversample: usize,
    max_iter: usize,
    tol: f64,
    seed: u64,
) -> Result<(Matrix, Vec<f64>, Matrix), LsiError> {
    let (m, n) = (a.rows(), a.cols());
    let l = (j + oversample).min(m).min(n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut omega = Matrix::zeros(n, l);
    for c in 0..l {
        for x in omega.column_mut(c) {
            *x = StandardNormal.sample(&mut rng);
        }
    }
    let mut q = orthonormalize(&a.mul_dense(&omega));
    let mut previous: Option<Vec<f64>> = None;
    let mut change = f64::INFINITY;
    for _ in 0..max_iter.max(1) {
        // B = Qᵀ A = Zᵀ with Z = Aᵀ Q; SVD of Z gives B's triplets swapped.
        let z = a.tr_mul_dense(&q);
        let svd = jacobi_svd(&z);
        let top = &svd.singular_values[..j];
        let exact = l == m.min(n);
        if let Some(prev) = &previous {
            let scale = top[0].max(f64::MIN_POSITIVE);
            change = top.iter().zip(prev).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max) / scale;
        }
        if exact || change <= tol {
            let u = q.matmul(&svd.v);
            return Ok((u, svd.singular_values, svd.u));
        }
        previous = Some(top.to_vec());
        q = orthonormalize(&a.mul_dense(&orthonormalize(&z)));
    }
    Err(LsiError::Convergence { iterations: max_iter, change })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sparse(rows: &[&[f64]]) -> CscMatrix {
        CscMatrix::from_dense(&Matrix::from_rows(rows))
    }

    #[test]
    fn identity_two_by_two() {
        let a = sparse(&[&[1.0, 0.0], &[0.0, 1.0]]);
        let model = fit_lsi_with(&a, 2, SvdMethod::Dense).unwrap();
        assert_eq!(model.singular_values(), &[1.0, 1.0]);
        assert!(model.reconstruction_error(&a) < 1e-15);
        let docs = model.project_documents();
        assert!((norm(&docs[0]) - 1.0).abs() < 1e-15);
        assert!(crate::linalg::dot(&docs[0], &docs[1]).abs() < 1e-15);
    }

    #[test]
    fn rank_one_outer_product() {
        let u = [0.6, 0.8, 0.0];
        let v = [0.0, 1.0 / 2f64.sqrt(), 1.0 / 2f64.sqrt()];
        let rows: Vec<Vec<f64>> = u.iter().map(|a| v.iter().map(|b| a * b).collect()).collect();
        let a = CscMatrix::from_dense(&Matrix::from_rows(&rows));
        for method in [SvdMethod::Dense, SvdMethod::randomized()] {
            let model = fit_lsi_with(&a, 1, method).unwrap();
            assert!((model.singular_values()[0] - 1.0).abs() < 1e-14);
            assert!(model.reconstruction_error(&a) < 1e-14);
            // sign convention: largest-magnitude entry of U is positive
            assert!(model.term_basis()[(1, 0)] > 0.0);
        }
    }

    #[test]
    fn rank_out_of_range() {
        let a = sparse(&[&[1.0, 0.0, 2.0], &[0.0, 1.0, 0.0]]);
        assert_eq!(fit_lsi_with(&a, 0, SvdMethod::Auto), Err(LsiError::DimensionOutOfRange { j: 0, max: 2 }));
        assert_eq!(fit_lsi_with(&a, 3, SvdMethod::Auto), Err(LsiError::DimensionOutOfRange { j: 3, max: 2 }));
    }

    #[test]
    fn duplicate_documents_project_identically() {
        let a = sparse(&[&[1.0, 0.0, 1.0, 0.3], &[2.0, 1.0, 2.0, 0.0], &[0.0, 3.0, 0.0, 1.0]]);
        let model = fit_lsi_with(&a, 2, SvdMethod::Dense).unwrap();
        let docs = model.project_documents();
        assert_eq!(docs[0], docs[2]);
    }

    #[test]
    fn randomized_converges_on_large_sparse_matrix() {
        // 300 x 250 block-structured matrix with decaying spectrum.
        let mut cols = Vec::new();
        for d in 0..250usize {
            let mut col = Vec::new();
            let block = d % 5;
            for t in 0..60 {
                let term = block * 60 + t;
                let w = 1.0 / (1.0 + block as f64) + ((d * 7 + t * 13) % 11) as f64 * 0.01;
                if (d + t) % 3 != 0 {
                    col.push((term, w));
                }
            }
            cols.push(col);
        }
        let a = CscMatrix::from_columns(300, cols);
        let fast = fit_lsi_with(&a, 4, SvdMethod::randomized()).unwrap();
        let dense = fit_lsi_with(&a, 4, SvdMethod::Dense).unwrap();
        for (x, y) in fast.singular_values().iter().zip(dense.singular_values()) {
            assert!((x - y).abs() < 1e-8 * y.max(1.0), "{x} vs {y}");
        }
    }
}
