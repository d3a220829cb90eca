//! k-means clustering of LSI document vectors, silhouette scoring, and the
//! `(j, k)` grid search that picks a stock's comment classes.

use std::collections::{BTreeMap, HashSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lsi::{fit_lsi_with, LsiError, SvdMethod};
use crate::text::{TermDocumentMatrix, TextError, Vectorizer};

#[derive(Debug, Error)]
pub enum ClusterError {
    #[error("k must be at least 1")]
    InvalidK,
    #[error("cannot form {k} clusters from {distinct} distinct points")]
    Infeasible { k: usize, distinct: usize },
    #[error("points have inconsistent dimensions")]
    DimensionMismatch,
    #[error("assignments length {assignments} does not match {points} points")]
    LengthMismatch { points: usize, assignments: usize },
    #[error("silhouette needs at least two clusters")]
    SingleCluster,
    #[error("cluster {0} has no members")]
    EmptyCluster(usize),
    #[error("insufficient data: {have} documents, need at least {need}")]
    InsufficientData { have: usize, need: usize },
    #[error("grid search has an empty j or k range")]
    EmptyGrid,
    #[error("no (j, k) cell produced a valid clustering")]
    NoFeasibleCell,
    #[error(transparent)]
    Text(#[from] TextError),
    #[error(transparent)]
    Lsi(#[from] LsiError),
}

/// A fitted partition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSolution {
    pub k: usize,
    /// Cluster index per point, in `0..k`. Labels are numbered in order of
    /// first appearance.
    pub assignments: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    /// Sum of squared Euclidean distances to the assigned centroid.
    pub inertia: f64,
    /// Mean silhouette; `None` when `k == 1`.
    pub avg_silhouette: Option<f64>,
    pub seed: u64,
    /// Lloyd iterations used by the winning restart.
    pub iterations: usize,
}

impl ClusterSolution {
    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &a in &self.assignments {
            sizes[a] += 1;
        }
        sizes
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct KMeansConfig {
    pub restarts: usize,
    pub max_iter: usize,
}

impl Default for KMeansConfig {
    fn default() -> Self {
        Self { restarts: 10, max_iter: 300 }
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    sq_dist(a, b).sqrt()
}

/// SplitMix64 finalizer, used to derive independent seeds.
pub(crate) fn mix_seed(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn check_points(points: &[Vec<f64>]) -> Result<usize, ClusterError> {
    let dim = points.first().map_or(0, Vec::len);
    if points.iter().any(|p| p.len() != dim) {
        return Err(ClusterError::DimensionMismatch);
    }
    Ok(dim)
}

fn distinct_count(points: &[Vec<f64>]) -> usize {
    let key = |p: &Vec<f64>| -> Vec<u64> { p.iter().map(|x| (x + 0.0).to_bits()).collect() };
    points.iter().map(key).collect::<HashSet<_>>().len()
}

/// Index of the nearest centroid; ties go to the lowest index.
fn nearest(point: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, centroid) in centroids.iter().enumerate() {
        let d = sq_dist(point, centroid);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn inertia_of(points: &[Vec<f64>], centroids: &[Vec<f64>], assignments: &[usize]) -> f64 {
    points.iter().zip(assignments).map(|(p, &a)| sq_dist(p, &centroids[a])).sum()
}

fn kmeans_plus_plus(points: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = points.len();
    let mut centroids = vec![points[rng.gen_range(0..n)].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.gen::<f64>() * total;
            let mut acc = 0.0;
            let mut chosen = None;
            for (i, &w) in d2.iter().enumerate() {
                acc += w;
                if acc > target && w > 0.0 {
                    chosen = Some(i);
                    break;
                }
            }
            // Rounding can leave the target past the last positive weight.
            chosen.unwrap_or_else(|| d2.iter().rposition(|&w| w > 0.0).expect("positive weight"))
        } else {
            rng.gen_range(0..n)
        };
        centroids.push(points[pick].clone());
        let c = centroids.last().expect("just pushed");
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(sq_dist(p, c));
        }
    }
    centroids
}

/// Moves each empty cluster's centroid onto the point farthest from its own
/// centroid, taking that point from a cluster with at least two members.
fn repair_empty_clusters(points: &[Vec<f64>], centroids: &mut [Vec<f64>], assignments: &mut [usize]) -> bool {
    let k = centroids.len();
    let mut repaired = false;
    loop {
        let mut sizes = vec![0usize; k];
        for &a in assignments.iter() {
            sizes[a] += 1;
        }
        let Some(empty) = sizes.iter().position(|&s| s == 0) else { break };
        let mut far = None;
        let mut far_d = -1.0;
        for (i, p) in points.iter().enumerate() {
            if sizes[assignments[i]] < 2 {
                continue;
            }
            let d = sq_dist(p, &centroids[assignments[i]]);
            if d > far_d {
                far_d = d;
                far = Some(i);
            }
        }
        let i = far.expect("k <= distinct points guarantees a donor");
        centroids[empty] = points[i].clone();
        assignments[i] = empty;
        repaired = true;
    }
    repaired
}

fn recompute_centroids(points: &[Vec<f64>], assignments: &[usize], centroids: &mut [Vec<f64>]) {
    let dim = points[0].len();
    let k = centroids.len();
    let mut sums = vec![vec![0.0; dim]; k];
    let mut counts = vec![0usize; k];
    for (p, &a) in points.iter().zip(assignments) {
        counts[a] += 1;
        for (s, x) in sums[a].iter_mut().zip(p) {
            *s += x;
        }
    }
    for c in 0..k {
        if counts[c] > 0 {
            centroids[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
        }
    }
}

/// One seeded Lloyd run. Returns `(assignments, centroids, inertia trace)`;
/// the trace holds the inertia after every assignment step.
pub(crate) fn lloyd(
    points: &[Vec<f64>],
    k: usize,
    seed: u64,
    max_iter: usize,
) -> (Vec<usize>, Vec<Vec<f64>>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = kmeans_plus_plus(points, k, &mut rng);
    let mut assignments = vec![usize::MAX; points.len()];
    let mut trace = Vec::new();
    for _ in 0..max_iter.max(1) {
        let mut changed = false;
        for (p, a) in points.iter().zip(assignments.iter_mut()) {
            let (c, _) = nearest(p, &centroids);
            if *a != c {
                *a = c;
                changed = true;
            }
        }
        changed |= repair_empty_clusters(points, &mut centroids, &mut assignments);
        trace.push(inertia_of(points, &centroids, &assignments));
        if !changed {
            break;
        }
        recompute_centroids(points, &assignments, &mut centroids);
    }
    recompute_centroids(points, &assignments, &mut centroids);
    (assignments, centroids, trace)
}

/// Relabels clusters in order of first appearance.
fn canonicalize(assignments: &mut [usize], centroids: &mut Vec<Vec<f64>>) {
    let k = centroids.len();
    let mut map = vec![usize::MAX; k];
    let mut next = 0;
    for a in assignments.iter() {
        if map[*a] == usize::MAX {
            map[*a] = next;
            next += 1;
        }
    }
    for m in map.iter_mut().filter(|m| **m == usize::MAX) {
        *m = next;
        next += 1;
    }
    for a in assignments.iter_mut() {
        *a = map[*a];
    }
    let mut reordered = vec![Vec::new(); k];
    for (old, c) in centroids.drain(..).enumerate() {
        reordered[map[old]] = c;
    }
    *centroids = reordered;
}

/// Best-of-`restarts` k-means with k-means++ seeding.
///
/// Restart `r` is seeded from `(seed, r)`; the lowest-inertia restart wins,
/// ties going to the earliest restart, so the result does not depend on how
/// restarts are scheduled across threads.
pub fn kmeans(points: &[Vec<f64>], k: usize, seed: u64, config: KMeansConfig) -> Result<ClusterSolution, ClusterError> {
    if k == 0 {
        return Err(ClusterError::InvalidK);
    }
    check_points(points)?;
    let distinct = distinct_count(points);
    if k > distinct {
        return Err(ClusterError::Infeasible { k, distinct });
    }
    let runs: Vec<(Vec<usize>, Vec<Vec<f64>>, f64, usize)> = (0..config.restarts.max(1) as u64)
        .into_par_iter()
        .map(|r| {
            let (a, c, trace) = lloyd(points, k, mix_seed(seed ^ mix_seed(r)), config.max_iter);
            let inertia = inertia_of(points, &c, &a);
            (a, c, inertia, trace.len())
        })
        .collect();
    let mut best = 0;
    for (i, run) in runs.iter().enumerate() {
        if run.2 < runs[best].2 {
            best = i;
        }
    }
    let (mut assignments, mut centroids, inertia, iterations) = runs.into_iter().nth(best).expect("restarts >= 1");
    canonicalize(&mut assignments, &mut centroids);
    let avg_silhouette = if k >= 2 { Some(silhouette(points, &assignments)?) } else { None };
    Ok(ClusterSolution { k, assignments, centroids, inertia, avg_silhouette, seed, iterations })
}

/// Per-point silhouette values `(b - a) / max(a, b)`.
///
/// `a` is the mean distance to the other members of the point's cluster,
/// `b` the smallest mean distance to another cluster. Members of singleton
/// clusters, and points with `a = b = 0`, score 0.
pub fn silhouette_samples(points: &[Vec<f64>], assignments: &[usize]) -> Result<Vec<f64>, ClusterError> {
    if points.len() != assignments.len() {
        return Err(ClusterError::LengthMismatch { points: points.len(), assignments: assignments.len() });
    }
    check_points(points)?;
    let k = assignments.iter().max().map_or(0, |m| m + 1);
    if k < 2 {
        return Err(ClusterError::SingleCluster);
    }
    let mut sizes = vec![0usize; k];
    for &a in assignments {
        sizes[a] += 1;
    }
    if let Some(empty) = sizes.iter().position(|&s| s == 0) {
        return Err(ClusterError::EmptyCluster(empty));
    }
    Ok((0..points.len())
        .into_par_iter()
        .map(|i| {
            let own = assignments[i];
            if sizes[own] == 1 {
                return 0.0;
            }
            let mut sums = vec![0.0; k];
            for (j, p) in points.iter().enumerate() {
                if j != i {
                    sums[assignments[j]] += dist(&points[i], p);
                }
            }
            let a = sums[own] / (sizes[own] - 1) as f64;
            let b = (0..k).filter(|&c| c != own).map(|c| sums[c] / sizes[c] as f64).fold(f64::INFINITY, f64::min);
            let denom = a.max(b);
            if denom == 0.0 {
                0.0
            } else {
                (b - a) / denom
            }
        })
        .collect())
}

/// Mean silhouette over all points.
pub fn silhouette(points: &[Vec<f64>], assignments: &[usize]) -> Result<f64, ClusterError> {
    let s = silhouette_samples(points, assignments)?;
    Ok(s.iter().sum::<f64>() / s.len() as f64)
}

/// Adjusted Rand index between two labelings of the same points.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> f64 {
    assert_eq!(a.len(), b.len());
    let n = a.len() as f64;
    let c2 = |x: f64| x * (x - 1.0) / 2.0;
    let mut table: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    let mut rows: BTreeMap<usize, f64> = BTreeMap::new();
    let mut cols: BTreeMap<usize, f64> = BTreeMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *table.entry((x, y)).or_default() += 1.0;
        *rows.entry(x).or_default() += 1.0;
        *cols.entry(y).or_default() += 1.0;
    }
    let index: f64 = table.values().map(|&v| c2(v)).sum();
    let sum_a: f64 = rows.values().map(|&v| c2(v)).sum();
    let sum_b: f64 = cols.values().map(|&v| c2(v)).sum();
    let expected = sum_a * sum_b / c2(n);
    let max = 0.5 * (sum_a + sum_b);
    if max == expected {
        return 1.0;
    }
    (index - expected) / (max - expected)
}

/// Search space and seeds for [`grid_search`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    pub j_values: Vec<usize>,
    pub k_values: Vec<usize>,
    pub seed: u64,
    #[serde(flatten)]
    pub kmeans: KMeansConfig,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self { j_values: (2..=10).collect(), k_values: (2..=8).collect(), seed: 0, kmeans: KMeansConfig::default() }
    }
}

/// One evaluated `(j, k)` pair. `avg_silhouette` is `None` when the cell
/// failed; `error` then says why.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub j: usize,
    pub k: usize,
    pub avg_silhouette: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridSearchResult {
    /// Cells ordered by `(j, k)`.
    pub cells: Vec<GridCell>,
    pub best_j: usize,
    pub best_k: usize,
    pub best: ClusterSolution,
}

impl GridSearchResult {
    /// `j,k,avg_silhouette` CSV; failed cells have an empty silhouette.
    pub fn silhouette_csv(&self) -> String {
        let mut out = String::from("j,k,avg_silhouette\n");
        for c in &self.cells {
            let s = c.avg_silhouette.map(|s| format!("{s:?}")).unwrap_or_default();
            out.push_str(&format!("{},{},{}\n", c.j, c.k, s));
        }
        out
    }
}

fn cell_seed(seed: u64, j: usize, k: usize) -> u64 {
    mix_seed(seed ^ mix_seed(((j as u64) << 32) | k as u64))
}

/// Fits LSI once per `j`, clusters for every `k`, and returns the full
/// silhouette table with its argmax. Ties prefer smaller `k`, then smaller
/// `j`. Failed cells are recorded and skipped.
pub fn grid_search(tfidf: &TermDocumentMatrix, config: &GridConfig) -> Result<GridSearchResult, ClusterError> {
    grid_search_with(tfidf, config, SvdMethod::Auto)
}

pub fn grid_search_with(
    tfidf: &TermDocumentMatrix,
    config: &GridConfig,
    svd: SvdMethod,
) -> Result<GridSearchResult, ClusterError> {
    if config.j_values.is_empty() || config.k_values.is_empty() {
        return Err(ClusterError::EmptyGrid);
    }
    let mut js = config.j_values.clone();
    js.sort_unstable();
    js.dedup();
    let mut ks = config.k_values.clone();
    ks.sort_unstable();
    ks.dedup();

    let per_j: Vec<Vec<(GridCell, Option<ClusterSolution>)>> = js
        .par_iter()
        .map(|&j| {
            let points = match fit_lsi_with(tfidf.weights(), j, svd) {
                Ok(model) => model.project_documents(),
                Err(e) => {
                    return ks
                        .iter()
                        .map(|&k| (GridCell { j, k, avg_silhouette: None, error: Some(e.to_string()) }, None))
                        .collect();
                }
            };
            ks.par_iter()
                .map(|&k| {
                    let outcome = kmeans(&points, k, cell_seed(config.seed, j, k), config.kmeans);
                    match outcome {
                        Ok(sol) => match sol.avg_silhouette {
                            Some(s) => (GridCell { j, k, avg_silhouette: Some(s), error: None }, Some(sol)),
                            None => (
                                GridCell { j, k, avg_silhouette: None, error: Some("single cluster".into()) },
                                None,
                            ),
                        },
                        Err(e) => (GridCell { j, k, avg_silhouette: None, error: Some(e.to_string()) }, None),
                    }
                })
                .collect()
        })
        .collect();

    let mut cells = Vec::new();
    let mut best: Option<(f64, usize, usize, ClusterSolution)> = None;
    for (cell, sol) in per_j.into_iter().flatten() {
        if let (Some(s), Some(sol)) = (cell.avg_silhouette, sol) {
            let better = match &best {
                None => true,
                Some((bs, bj, bk, _)) => s > *bs || (s == *bs && (cell.k, cell.j) < (*bk, *bj)),
            };
            if better && s.is_finite() {
                best = Some((s, cell.j, cell.k, sol));
            }
        }
        cells.push(cell);
    }
    let (_, best_j, best_k, best) = best.ok_or(ClusterError::NoFeasibleCell)?;
    Ok(GridSearchResult { cells, best_j, best_k, best })
}

/// Class labels for one stock's comments.
#[derive(Debug, Clone, PartialEq)]
pub struct Classification {
    /// `(comment id, class)` in input order.
    pub assignments: Vec<(String, usize)>,
    pub grid: GridSearchResult,
    pub vocabulary_size: usize,
}

impl Classification {
    pub fn k(&self) -> usize {
        self.grid.best_k
    }

    /// `comment_id,class` CSV.
    pub fn assignments_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["comment_id", "class"]).expect("in-memory csv");
        for (id, c) in &self.assignments {
            w.write_record([id.as_str(), &c.to_string()]).expect("in-memory csv");
        }
        String::from_utf8(w.into_inner().expect("in-memory csv")).expect("utf8 csv")
    }
}

/// Vectorize → LSI → grid search over one stock's `(id, body)` comments.
pub fn classify_corpus<S: AsRef<str> + Sync>(
    comments: &[(String, S)],
    vectorizer: &Vectorizer,
    config: &GridConfig,
) -> Result<Classification, ClusterError> {
    let need = config.k_values.iter().copied().min().unwrap_or(2).max(2);
    if comments.len() < need {
        return Err(ClusterError::InsufficientData { have: comments.len(), need });
    }
    let bodies: Vec<&str> = comments.iter().map(|(_, b)| b.as_ref()).collect();
    let (vocab, tfidf) = vectorizer.fit_transform(&bodies)?;
    let tfidf = tfidf.with_doc_ids(comments.iter().map(|(id, _)| id.clone()).collect());
    let grid = grid_search(&tfidf, config)?;
    let assignments =
        comments.iter().zip(&grid.best.assignments).map(|((id, _), &c)| (id.clone(), c)).collect();
    Ok(Classification { assignments, grid, vocabulary_size: vocab.len() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn pts(xs: &[f64]) -> Vec<Vec<f64>> {
        xs.iter().map(|&x| vec![x]).collect()
    }

    #[test]
    fn two_obvious_groups() {
        let p = pts(&[0.0, 0.1, 10.0, 10.1]);
        let sol = kmeans(&p, 2, 1, KMeansConfig::default()).unwrap();
        assert_eq!(sol.assignments, vec![0, 0, 1, 1]);
        assert!((sol.centroids[0][0] - 0.05).abs() < 1e-12);
        assert!((sol.centroids[1][0] - 10.05).abs() < 1e-12);
        assert!((sol.inertia - 0.01).abs() < 1e-12);
    }

    #[test]
    fn single_cluster_is_the_mean() {
        let p = vec![vec![1.0, 2.0], vec![3.0, 0.0], vec![2.0, 4.0]];
        let sol = kmeans(&p, 1, 9, KMeansConfig::default()).unwrap();
        assert_eq!(sol.centroids[0], vec![2.0, 2.0]);
        // total variance × n: (1+0+1) + (0+4+4)
        assert!((sol.inertia - 10.0).abs() < 1e-12);
        assert_eq!(sol.avg_silhouette, None);
    }

    #[test]
    fn k_equal_n_has_zero_inertia() {
        let p = pts(&[0.0, 1.0, 5.0, 7.5]);
        let sol = kmeans(&p, 4, 3, KMeansConfig::default()).unwrap();
        assert_eq!(sol.inertia, 0.0);
        assert_eq!(sol.cluster_sizes(), vec![1; 4]);
    }

    #[test]
    fn infeasible_k() {
        let p = pts(&[1.0, 1.0, 2.0]);
        assert!(matches!(kmeans(&p, 3, 0, KMeansConfig::default()), Err(ClusterError::Infeasible { k: 3, distinct: 2 })));
        assert!(matches!(kmeans(&p, 0, 0, KMeansConfig::default()), Err(ClusterError::InvalidK)));
    }

    #[test]
    fn silhouette_examples() {
        let p = pts(&[0.0, 0.01, 100.0, 100.01]);
        let s = silhouette(&p, &[0, 0, 1, 1]).unwrap();
        assert!(s > 0.99);
        let same = pts(&[3.0, 3.0, 3.0, 3.0]);
        assert_eq!(silhouette(&same, &[0, 1, 0, 1]).unwrap(), 0.0);
        assert!(matches!(silhouette(&p, &[0, 0, 0, 0]), Err(ClusterError::SingleCluster)));
        assert!(matches!(silhouette(&p, &[0, 0, 2, 2]), Err(ClusterError::EmptyCluster(1))));
    }

    #[test]
    fn silhouette_singletons_score_zero() {
        let p = pts(&[0.0, 1.0, 2.0]);
        let s = silhouette_samples(&p, &[0, 1, 1]).unwrap();
        assert_eq!(s[0], 0.0);
    }

    #[test]
    fn silhouette_hand_computed() {
        // points 0, 1 | 4 ; a(0)=1, b(0)=4 -> 0.75 ; a(1)=1, b(1)=3 -> 2/3 ; singleton -> 0
        let p = pts(&[0.0, 1.0, 4.0]);
        let s = silhouette_samples(&p, &[0, 0, 1]).unwrap();
        assert!((s[0] - 0.75).abs() < 1e-15);
        assert!((s[1] - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn lloyd_inertia_never_increases() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for trial in 0..20 {
            let p: Vec<Vec<f64>> = (0..60).map(|_| vec![rng.gen::<f64>(), rng.gen::<f64>(), rng.gen::<f64>()]).collect();
            let (_, _, trace) = lloyd(&p, 2 + trial % 5, trial as u64, 300);
            for w in trace.windows(2) {
                assert!(w[1] <= w[0] + 1e-12, "inertia rose: {trace:?}");
            }
        }
    }

    #[test]
    fn repair_handles_duplicate_heavy_data() {
        // Many duplicates make empty clusters likely after seeding.
        let mut p = vec![vec![0.0]; 20];
        p.extend(vec![vec![1.0]; 2]);
        p.push(vec![5.0]);
        let sol = kmeans(&p, 3, 11, KMeansConfig { restarts: 5, max_iter: 300 }).unwrap();
        assert!(sol.cluster_sizes().iter().all(|&s| s > 0));
        assert_eq!(sol.inertia, 0.0);
    }

    #[test]
    fn ari_bounds() {
        assert_eq!(adjusted_rand_index(&[0, 0, 1, 1], &[1, 1, 0, 0]), 1.0);
        assert!(adjusted_rand_index(&[0, 0, 1, 1], &[0, 1, 0, 1]) < 0.0);
    }

    fn same_partition(a: &[usize], b: &[usize]) -> bool {
        adjusted_rand_index(a, b) == 1.0
    }

    proptest! {
        #[test]
        fn kmeans_is_permutation_invariant(
            xs in prop::collection::vec((0.0f64..1.0, 0.0f64..1.0), 8..25),
            shift in 1usize..7,
        ) {
            // three well separated blobs keep the optimum unique
            let p: Vec<Vec<f64>> = xs.iter().enumerate()
                .map(|(i, (x, y))| vec![x * 0.1 + 10.0 * (i % 3) as f64, y * 0.1])
                .collect();
            let n = p.len();
            let perm: Vec<usize> = (0..n).map(|i| (i * shift + 1) % n).collect();
            prop_assume!({ let mut s = perm.clone(); s.sort(); s.dedup(); s.len() == n });
            let q: Vec<Vec<f64>> = perm.iter().map(|&i| p[i].clone()).collect();
            let a = kmeans(&p, 3, 5, KMeansConfig::default()).unwrap();
            let b = kmeans(&q, 3, 5, KMeansConfig::default()).unwrap();
            let a_permuted: Vec<usize> = perm.iter().map(|&i| a.assignments[i]).collect();
            prop_assert!(same_partition(&a_permuted, &b.assignments));
            prop_assert!((a.inertia - b.inertia).abs() < 1e-9);
        }

        #[test]
        fn silhouette_is_bounded(
            xs in prop::collection::vec(-5.0f64..5.0, 4..30),
            labels in prop::collection::vec(0usize..3, 30),
        ) {
            let p = pts(&xs);
            let mut a: Vec<usize> = labels[..xs.len()].to_vec();
            a[0] = 0; a[1] = 1; a[2] = 2;
            let s = silhouette(&p, &a).unwrap();
            prop_assert!((-1.0..=1.0).contains(&s));
        }
    }

    #[test]
    fn fixed_seed_is_bit_identical_across_pools() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p: Vec<Vec<f64>> = (0..200).map(|_| vec![rng.gen::<f64>(), rng.gen::<f64>()]).collect();
        let a = kmeans(&p, 4, 77, KMeansConfig::default()).unwrap();
        let single = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let b = single.install(|| kmeans(&p, 4, 77, KMeansConfig::default()).unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn grid_single_cell() {
        let bodies = ["alpha beta gamma", "alpha beta delta", "zeta eta theta", "zeta eta iota", "kappa lambda mu", "kappa lambda nu"];
        let v = Vectorizer::new(crate::text::StopWords::none(), crate::text::NgramRange::new(1, 1).unwrap(), 1).unwrap();
        let (_, m) = v.fit_transform(&bodies).unwrap();
        let cfg = GridConfig { j_values: vec![4], k_values: vec![4], seed: 1, kmeans: KMeansConfig::default() };
        let g = grid_search(&m, &cfg).unwrap();
        assert_eq!(g.cells.len(), 1);
        assert_eq!((g.best_j, g.best_k), (4, 4));
        assert!(g.silhouette_csv().starts_with("j,k,avg_silhouette\n4,4,"));
    }

    #[test]
    fn grid_records_failed_cells() {
        let bodies = ["a b", "a c", "d e", "d f"];
        let v = Vectorizer::new(crate::text::StopWords::none(), crate::text::NgramRange::new(1, 1).unwrap(), 1).unwrap();
        let (_, m) = v.fit_transform(&bodies).unwrap();
        let cfg = GridConfig { j_values: vec![2, 50], k_values: vec![2, 9], seed: 1, kmeans: KMeansConfig::default() };
        let g = grid_search(&m, &cfg).unwrap();
        assert_eq!(g.cells.len(), 4);
        assert_eq!(g.cells.iter().filter(|c| c.avg_silhouette.is_some()).count(), 1);
        assert_eq!((g.best_j, g.best_k), (2, 2));
    }

    #[test]
    fn classify_gives_every_comment_one_class_and_duplicates_agree() {
        let texts = [
            "tsla moon rocket launch", "tsla moon rocket boost", "tsla moon rocket launch",
            "tsla puts crash dump", "tsla puts crash drop", "tsla puts crash dump",
        ];
        let comments: Vec<(String, &str)> = texts.iter().enumerate().map(|(i, t)| (format!("c{i}"), *t)).collect();
        let cfg = GridConfig { j_values: vec![2, 3], k_values: vec![2, 3], seed: 4, kmeans: KMeansConfig::default() };
        let v = Vectorizer::new(crate::text::StopWords::english(), crate::text::NgramRange::new(1, 2).unwrap(), 1).unwrap();
        let c = classify_corpus(&comments, &v, &cfg).unwrap();
        assert_eq!(c.assignments.len(), 6);
        assert_eq!(c.assignments[0].1, c.assignments[2].1);
        assert_eq!(c.assignments[3].1, c.assignments[5].1);
        assert_ne!(c.assignments[0].1, c.assignments[3].1);
        assert!(c.assignments_csv().starts_with("comment_id,class\nc0,"));

        let few: Vec<(String, &str)> = vec![("x".into(), "tsla")];
        assert!(matches!(classify_corpus(&few, &v, &cfg), Err(ClusterError::InsufficientData { .. })));
    }
}
