//! K-Means++ clustering of sentence or dialogue vectors, plus a 2-D PCA
//! projection for inspecting the fitted clusters.

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::Dialogue;
use crate::embeddings::{embed_text, WordEmbeddingTable};
use crate::error::{Error, Result};

pub const CLUSTER_MODEL_VERSION: u32 = 1;

/// Index of a cluster; doubles as the agent's discrete action.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ActionId(pub usize);

impl std::fmt::Display for ActionId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        self.0.fmt(f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub max_iters: usize,
    /// Stop once the largest centroid displacement drops below this.
    pub tol: f64,
    /// Independent seedings; the run with the lowest inertia is kept.
    pub n_init: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            max_iters: 100,
            tol: 1e-6,
            n_init: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterModel {
    pub version: u32,
    pub k: usize,
    pub dim: usize,
    pub centroids: Vec<Vec<f64>>,
    #[serde(default)]
    pub inertia: f64,
}

impl ClusterModel {
    pub fn from_centroids(centroids: Vec<Vec<f64>>) -> Result<Self> {
        let k = centroids.len();
        if k == 0 {
            return Err(Error::invalid("cluster model needs at least one centroid"));
        }
        let dim = centroids[0].len();
        for c in &centroids {
            if c.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    actual: c.len(),
                });
            }
            if c.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("centroid".into()));
            }
        }
        Ok(Self {
            version: CLUSTER_MODEL_VERSION,
            k,
            dim,
            centroids,
            inertia: 0.0,
        })
    }

    /// Nearest centroid; ties go to the lowest index.
    pub fn assign(&self, x: &[f64]) -> Result<ActionId> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: x.len(),
            });
        }
        Ok(ActionId(nearest(&self.centroids, x).0))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self)?;
        fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let model: ClusterModel = serde_json::from_str(&text)?;
        if model.version != CLUSTER_MODEL_VERSION {
            return Err(Error::Format(format!(
                "unsupported cluster model version {}",
                model.version
            )));
        }
        if model.k != model.centroids.len() || model.centroids.iter().any(|c| c.len() != model.dim) {
            return Err(Error::Format("cluster model shape disagrees with k/dim".into()));
        }
        Ok(model)
    }
}

pub fn euclidean(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            actual: y.len(),
        });
    }
    Ok(squared_distance(x, y).sqrt())
}

fn squared_distance(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// (index, squared distance) of the closest centroid, lowest index on ties.
fn nearest(centroids: &[Vec<f64>], x: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, c) in centroids.iter().enumerate() {
        let d = squared_distance(c, x);
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

fn check_points(points: &[Vec<f64>], k: usize) -> Result<usize> {
    if k == 0 {
        return Err(Error::invalid("k must be at least 1"));
    }
    if k > points.len() {
        return Err(Error::invalid(format!(
            "k = {k} exceeds the number of points ({})",
            points.len()
        )));
    }
    let dim = points[0].len();
    if let Some(p) = points.iter().find(|p| p.len() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            actual: p.len(),
        });
    }
    Ok(dim)
}

/// K-Means++ seeding: the first centroid is uniform over the points, each
/// later one is drawn with probability proportional to its squared distance
/// to the closest centroid chosen so far.
pub fn kmeanspp_seed<R: Rng + ?Sized>(points: &[Vec<f64>], k: usize, rng: &mut R) -> Result<Vec<Vec<f64>>> {
    check_points(points, k)?;
    let n = points.len();
    let mut centroids = Vec::with_capacity(k);
    centroids.push(points[rng.gen_range(0..n)].clone());
    let mut d2: Vec<f64> = points.iter().map(|p| squared_distance(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let idx = if total > 0.0 {
            let target = rng.gen::<f64>() * total;
            let mut acc = 0.0;
            let mut chosen = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                acc += w;
                if target < acc {
                    chosen = i;
                    break;
                }
            }
            chosen
        } else {
            // every point coincides with a centroid already
            rng.gen_range(0..n)
        };
        let c = points[idx].clone();
        for (slot, p) in d2.iter_mut().zip(points) {
            *slot = slot.min(squared_distance(p, &c));
        }
        centroids.push(c);
    }
    Ok(centroids)
}

/// Result of a Lloyd run, including the inertia seen at each iteration.
#[derive(Debug, Clone)]
pub struct FitTrace {
    pub model: ClusterModel,
    pub assignments: Vec<usize>,
    pub inertia_per_iter: Vec<f64>,
    pub iterations: usize,
}

pub fn fit<R: Rng + ?Sized>(points: &[Vec<f64>], k: usize, rng: &mut R, opts: FitOptions) -> Result<ClusterModel> {
    fit_with_trace(points, k, rng, opts).map(|t| t.model)
}

/// K-Means++ seeding followed by Lloyd iterations, repeated `n_init`
/// times; returns the lowest-inertia run (earliest on ties).
pub fn fit_with_trace<R: Rng + ?Sized>(
    points: &[Vec<f64>],
    k: usize,
    rng: &mut R,
    opts: FitOptions,
) -> Result<FitTrace> {
    check_points(points, k)?;
    let mut best: Option<FitTrace> = None;
    for _ in 0..opts.n_init.max(1) {
        let run = lloyd(points, k, rng, opts)?;
        if best.as_ref().map_or(true, |b| run.model.inertia < b.model.inertia) {
            best = Some(run);
        }
    }
    Ok(best.expect("at least one run"))
}

fn lloyd<R: Rng + ?Sized>(points: &[Vec<f64>], k: usize, rng: &mut R, opts: FitOptions) -> Result<FitTrace> {
    let dim = check_points(points, k)?;
    let mut centroids = kmeanspp_seed(points, k, rng)?;
    let n = points.len();
    let mut assignments = vec![0usize; n];
    let mut dists = vec![0.0f64; n];
    let mut trace = Vec::new();
    let mut iterations = 0;

    for _ in 0..opts.max_iters {
        iterations += 1;
        let mut inertia = 0.0;
        for (i, p) in points.iter().enumerate() {
            let (c, d) = nearest(&centroids, p);
            assignments[i] = c;
            dists[i] = d;
            inertia += d;
        }
        trace.push(inertia);

        let mut counts = vec![0usize; k];
        for &a in &assignments {
            counts[a] += 1;
        }
        // Reseed empty clusters at the point farthest from its centroid.
        for j in 0..k {
            if counts[j] > 0 {
                continue;
            }
            let far = (0..n)
                .filter(|&i| counts[assignments[i]] > 1)
                .max_by(|&a, &b| dists[a].total_cmp(&dists[b]).then(b.cmp(&a)));
            if let Some(i) = far {
                counts[assignments[i]] -= 1;
                counts[j] = 1;
                assignments[i] = j;
                dists[i] = 0.0;
                centroids[j] = points[i].clone();
            }
        }

        let mut sums = vec![vec![0.0; dim]; k];
        for (p, &a) in points.iter().zip(&assignments) {
            for (s, v) in sums[a].iter_mut().zip(p) {
                *s += v;
            }
        }
        let mut shift = 0.0f64;
        for j in 0..k {
            if counts[j] == 0 {
                continue;
            }
            let inv = 1.0 / counts[j] as f64;
            let new: Vec<f64> = sums[j].iter().map(|s| s * inv).collect();
            shift = shift.max(squared_distance(&new, &centroids[j]).sqrt());
            centroids[j] = new;
        }
        if shift < opts.tol {
            break;
        }
    }

    let mut inertia = 0.0;
    for (i, p) in points.iter().enumerate() {
        let (c, d) = nearest(&centroids, p);
        assignments[i] = c;
        inertia += d;
    }
    let mut model = ClusterModel::from_centroids(centroids)?;
    model.inertia = inertia;
    Ok(FitTrace {
        model,
        assignments,
        inertia_per_iter: trace,
        iterations,
    })
}

/// Mean of the sentence vectors of every turn in the dialogue.
pub fn dialogue_vector(d: &Dialogue, table: &WordEmbeddingTable) -> Result<Vec<f64>> {
    if d.turns.is_empty() {
        return Err(Error::invalid(format!("dialogue {} has no turns", d.id)));
    }
    let mut acc = vec![0.0; table.dim()];
    for t in &d.turns {
        for (a, v) in acc.iter_mut().zip(embed_text(&t.text, table).values) {
            *a += v;
        }
    }
    let n = d.turns.len() as f64;
    acc.iter_mut().for_each(|a| *a /= n);
    Ok(acc)
}

/// Projects mean-centred points onto the top `out_dim` principal axes of
/// the sample covariance. Each axis is signed so its first non-negligible
/// component is positive.
pub fn pca_project(points: &[Vec<f64>], out_dim: usize) -> Result<Vec<Vec<f64>>> {
    let n = points.len();
    if n < 2 {
        return Err(Error::invalid("pca needs at least two points"));
    }
    let dim = points[0].len();
    if out_dim == 0 || out_dim > dim {
        return Err(Error::invalid(format!("out_dim {out_dim} must be in 1..={dim}")));
    }
    if let Some(p) = points.iter().find(|p| p.len() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            actual: p.len(),
        });
    }
    let mut mean = vec![0.0; dim];
    for p in points {
        for (m, v) in mean.iter_mut().zip(p) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let centred = DMatrix::from_fn(n, dim, |i, j| points[i][j] - mean[j]);
    let cov = centred.transpose() * &centred / (n as f64 - 1.0);
    let eig = SymmetricEigen::new(cov);

    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let mut axes = Vec::with_capacity(out_dim);
    for &j in order.iter().take(out_dim) {
        let mut axis: Vec<f64> = eig.eigenvectors.column(j).iter().copied().collect();
        if let Some(first) = axis.iter().copied().find(|v| v.abs() > 1e-12) {
            if first < 0.0 {
                axis.iter_mut().for_each(|v| *v = -*v);
            }
        }
        axes.push(axis);
    }
    Ok((0..n)
        .map(|i| {
            axes.iter()
                .map(|axis| (0..dim).map(|j| centred[(i, j)] * axis[j]).sum())
                .collect()
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn pts(v: &[f64]) -> Vec<Vec<f64>> {
        v.iter().map(|&x| vec![x]).collect()
    }

    #[test]
    fn euclidean_basics() {
        assert_eq!(euclidean(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap(), 0.0);
        assert_eq!(euclidean(&[0.0, 0.0], &[3.0, 4.0]).unwrap(), 5.0);
        assert!(euclidean(&[0.0], &[0.0, 1.0]).is_err());
    }

    proptest! {
        #[test]
        fn euclidean_symmetric(x in prop::collection::vec(-1e3f64..1e3, 4), y in prop::collection::vec(-1e3f64..1e3, 4)) {
            let direct: f64 = x.iter().zip(&y).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            prop_assert_eq!(euclidean(&x, &y).unwrap(), euclidean(&y, &x).unwrap());
            prop_assert!((euclidean(&x, &y).unwrap() - direct).abs() <= 1e-9 * (1.0 + direct));
        }
    }

    #[test]
    fn seeding_edge_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = vec![vec![0.0, 1.0], vec![5.0, 5.0], vec![-3.0, 2.0]];
        let mut got = kmeanspp_seed(&p, 3, &mut rng).unwrap();
        got.sort_by(|a, b| a[0].total_cmp(&b[0]));
        let mut want = p.clone();
        want.sort_by(|a, b| a[0].total_cmp(&b[0]));
        assert_eq!(got, want);

        let one = kmeanspp_seed(&p, 1, &mut rng).unwrap();
        assert!(p.contains(&one[0]));
        assert!(kmeanspp_seed(&p, 4, &mut rng).is_err());
        assert!(kmeanspp_seed(&p, 0, &mut rng).is_err());
    }

    #[test]
    fn seeding_follows_d2_law() {
        // first centroid 0 (prob 2/3): second must be 100 (all mass there).
        // first centroid 100 (prob 1/3): second is one of the two zeros.
        let p = pts(&[0.0, 0.0, 100.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let trials = 10_000;
        let mut first_zero = 0;
        for _ in 0..trials {
            let c = kmeanspp_seed(&p, 2, &mut rng).unwrap();
            if c[0][0] == 0.0 {
                first_zero += 1;
                assert_eq!(c[1][0], 100.0);
            } else {
                assert_eq!(c[1][0], 0.0);
            }
        }
        let freq = first_zero as f64 / trials as f64;
        assert!((freq - 2.0 / 3.0).abs() < 0.02, "{freq}");
    }

    #[test]
    fn fit_two_blobs() {
        let p = pts(&[0.0, 0.1, 10.0, 10.1]);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = fit(&p, 2, &mut rng, FitOptions::default()).unwrap();
        let mut c: Vec<f64> = m.centroids.iter().map(|c| c[0]).collect();
        c.sort_by(f64::total_cmp);
        assert!((c[0] - 0.05).abs() < 1e-12 && (c[1] - 10.05).abs() < 1e-12);
        assert!((m.inertia - 0.01).abs() < 1e-12, "{}", m.inertia);
    }

    #[test]
    fn fit_k_equals_n_and_identical_points() {
        let p = pts(&[1.0, 4.0, 9.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = fit(&p, 3, &mut rng, FitOptions::default()).unwrap();
        assert_eq!(m.inertia, 0.0);

        let same = pts(&[2.0, 2.0, 2.0, 2.0]);
        let m = fit(&same, 2, &mut rng, FitOptions::default()).unwrap();
        assert_eq!(m.k, 2);
        assert_eq!(m.inertia, 0.0);
    }

    #[test]
    fn empty_cluster_is_repaired() {
        // seeds chosen manually via a model built by fit on a layout with an outlier
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let p = pts(&[0.0, 0.0, 0.0, 1.0, 50.0]);
        for _ in 0..50 {
            let t = fit_with_trace(&p, 3, &mut rng, FitOptions::default()).unwrap();
            let mut counts = vec![0; 3];
            t.assignments.iter().for_each(|&a| counts[a] += 1);
            assert!(counts.iter().all(|&c| c > 0), "{counts:?}");
        }
    }

    #[test]
    fn fit_is_reproducible_and_consistent() {
        let mut gen = ChaCha8Rng::seed_from_u64(5);
        let p: Vec<Vec<f64>> = (0..200).map(|_| vec![gen.gen_range(-5.0..5.0), gen.gen_range(-5.0..5.0)]).collect();
        let a = fit_with_trace(&p, 6, &mut ChaCha8Rng::seed_from_u64(9), FitOptions::default()).unwrap();
        let b = fit_with_trace(&p, 6, &mut ChaCha8Rng::seed_from_u64(9), FitOptions::default()).unwrap();
        assert_eq!(a.model, b.model);
        for w in a.inertia_per_iter.windows(2) {
            assert!(w[1] <= w[0] + 1e-9 * w[0].abs());
        }
        for (x, &asg) in p.iter().zip(&a.assignments) {
            assert_eq!(a.model.assign(x).unwrap().0, asg);
            assert_eq!(a.model.assign(x).unwrap().0, asg);
        }
    }

    #[test]
    fn assign_rules() {
        let m = ClusterModel::from_centroids(vec![vec![0.0], vec![10.0]]).unwrap();
        assert_eq!(m.assign(&[1.0]).unwrap(), ActionId(0));
        assert_eq!(m.assign(&[5.0]).unwrap(), ActionId(0));
        assert_eq!(m.assign(&[9.0]).unwrap(), ActionId(1));
        assert!(m.assign(&[1.0, 2.0]).is_err());

        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let cents: Vec<Vec<f64>> = (0..8).map(|_| vec![rng.gen_range(-1.0..1.0); 3]).collect();
        let m = ClusterModel::from_centroids(cents.clone()).unwrap();
        for _ in 0..200 {
            let x: Vec<f64> = (0..3).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let mut best = 0;
            for i in 1..cents.len() {
                if euclidean(&cents[i], &x).unwrap() < euclidean(&cents[best], &x).unwrap() {
                    best = i;
                }
            }
            assert_eq!(m.assign(&x).unwrap().0, best);
        }
    }

    #[test]
    fn model_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        let mut m = ClusterModel::from_centroids(vec![vec![0.5, -1.0], vec![3.0, 0.1]]).unwrap();
        m.inertia = 1.25;
        m.save(&path).unwrap();
        assert_eq!(ClusterModel::load(&path).unwrap(), m);
        let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
        for key in ["version", "k", "dim", "centroids"] {
            assert!(json.get(key).is_some(), "{key}");
        }
    }

    #[test]
    fn pca_rank_one_and_rotation() {
        let line: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64, i as f64]).collect();
        let proj = pca_project(&line, 2).unwrap();
        assert!(proj.iter().all(|p| p[1].abs() < 1e-9));

        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let p: Vec<Vec<f64>> = (0..30).map(|_| vec![rng.gen_range(-3.0..3.0), rng.gen_range(-1.0..1.0)]).collect();
        let q = pca_project(&p, 2).unwrap();
        for i in 0..p.len() {
            for j in 0..p.len() {
                let a = euclidean(&p[i], &p[j]).unwrap();
                let b = euclidean(&q[i], &q[j]).unwrap();
                assert!((a - b).abs() < 1e-9);
            }
        }

        let same = vec![vec![1.0, 2.0, 3.0]; 5];
        assert!(pca_project(&same, 2).unwrap().iter().flatten().all(|v| v.abs() < 1e-12));
        assert!(pca_project(&same[..1], 2).is_err());
    }
}
