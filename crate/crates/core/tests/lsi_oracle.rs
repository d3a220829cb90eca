use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use redfactor::fixture::planted_topic_corpus;
use redfactor::linalg::{dot, CscMatrix, Matrix};
use redfactor::lsi::{fit_lsi, fit_lsi_with, SvdMethod};
use redfactor::text::{NgramRange, StopWords, Vectorizer};

fn to_nalgebra(a: &CscMatrix) -> DMatrix<f64> {
    let d = a.to_dense();
    DMatrix::from_fn(a.rows(), a.cols(), |i, j| d[(i, j)])
}

fn oracle_singular_values(a: &CscMatrix) -> Vec<f64> {
    let m = to_nalgebra(a);
    let mut ev: Vec<f64> = (m.transpose() * &m).symmetric_eigen().eigenvalues.iter().map(|e| e.max(0.0).sqrt()).collect();
    ev.sort_by(|a, b| b.partial_cmp(a).unwrap());
    ev
}

#[test]
fn tfidf_spectrum_matches_eigen_oracle() {
    let (docs, _) = planted_topic_corpus(3, 60, 10, "abc", 9);
    let bodies: Vec<&str> = docs.iter().map(|(_, b)| b.as_str()).collect();
    let v = Vectorizer::new(StopWords::english(), NgramRange::new(1, 1).unwrap(), 2).unwrap();
    let (_, tdm) = v.fit_transform(&bodies).unwrap();
    let oracle = oracle_singular_values(tdm.weights());
    let model = fit_lsi(&tdm, 5).unwrap();
    for (s, o) in model.singular_values().iter().zip(&oracle) {
        assert!((s - o).abs() < 1e-9, "{s} vs {o}");
    }
    for d in model.project_documents() {
        assert!((dot(&d, &d) - 1.0).abs() < 1e-12);
    }
}

#[test]
fn term_basis_is_orthonormal_with_positive_largest_entries() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let rows: Vec<Vec<f64>> = (0..15).map(|_| (0..9).map(|_| rng.gen_range(0.0..1.0)).collect()).collect();
    let a = CscMatrix::from_dense(&Matrix::from_rows(&rows));
    let model = fit_lsi_with(&a, 4, SvdMethod::Dense).unwrap();
    let u = model.term_basis();
    for i in 0..4 {
        for j in 0..4 {
            let want = if i == j { 1.0 } else { 0.0 };
            assert!((dot(u.column(i), u.column(j)) - want).abs() < 1e-10);
        }
        let col = u.column(i);
        let big = col.iter().copied().fold(0.0f64, |m, x| if x.abs() > m.abs() { x } else { m });
        assert!(big > 0.0);
    }
}

#[test]
fn randomized_agrees_with_dense_on_a_low_rank_matrix() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    // rank 3 plus tiny noise, 240 x 230 so the automatic choice is randomized
    let left: Vec<Vec<f64>> = (0..240).map(|_| (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
    let right: Vec<Vec<f64>> = (0..3).map(|_| (0..230).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
    let rows: Vec<Vec<f64>> = left
        .iter()
        .map(|l| (0..230).map(|j| (0..3).map(|k| l[k] * right[k][j]).sum::<f64>() + 1e-6 * rng.gen_range(-1.0..1.0)).collect())
        .collect();
    let a = CscMatrix::from_dense(&Matrix::from_rows(&rows));
    let dense = fit_lsi_with(&a, 3, SvdMethod::Dense).unwrap();
    let auto = fit_lsi_with(&a, 3, SvdMethod::Auto).unwrap();
    for (d, r) in dense.singular_values().iter().zip(auto.singular_values()) {
        assert!((d - r).abs() / d < 1e-8, "{d} vs {r}");
    }
    let (pd, pa) = (dense.project_documents(), auto.project_documents());
    for (x, y) in pd.iter().zip(&pa) {
        assert!((dot(x, y) - 1.0).abs() < 1e-6);
    }
}
