//! Lloyd's k-means with k-means++ seeding and best-of-`n_init` restarts.

use std::collections::HashSet;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::ClusterError;
use crate::embedding::tfidf::SparseVector;
use crate::embedding::Vector;

/// Points addressable by index, dense or sparse.
pub trait PointSet: Sync {
    fn len(&self) -> usize;
    fn dim(&self) -> usize;
    /// Adds point `i` into a dense accumulator.
    fn add_to(&self, i: usize, acc: &mut [f64]);
    /// Squared Euclidean distance from point `i` to a dense centroid whose
    /// squared norm is `c_sq`.
    fn sq_dist(&self, i: usize, c: &[f64], c_sq: f64) -> f64;
    /// Exact bit pattern of point `i`, used to count distinct points.
    fn key(&self, i: usize) -> Vec<u32>;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Row-major dense points.
pub struct DenseRows<'a> {
    data: &'a [f32],
    dim: usize,
}

impl<'a> DenseRows<'a> {
    pub fn new(data: &'a [f32], dim: usize) -> Result<Self, ClusterError> {
        if dim == 0 || data.len() % dim != 0 {
            return Err(ClusterError::DimensionMismatch);
        }
        Ok(Self { data, dim })
    }

    fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }
}

fn dense_sq_dist(x: &[f32], c: &[f64]) -> f64 {
    x.iter()
        .zip(c)
        .map(|(&a, &b)| {
            let d = a as f64 - b;
            d * d
        })
        .sum()
}

impl PointSet for DenseRows<'_> {
    fn len(&self) -> usize {
        self.data.len() / self.dim
    }
    fn dim(&self) -> usize {
        self.dim
    }
    fn add_to(&self, i: usize, acc: &mut [f64]) {
        for (a, &x) in acc.iter_mut().zip(self.row(i)) {
            *a += x as f64;
        }
    }
    fn sq_dist(&self, i: usize, c: &[f64], _c_sq: f64) -> f64 {
        dense_sq_dist(self.row(i), c)
    }
    fn key(&self, i: usize) -> Vec<u32> {
        self.row(i).iter().map(|x| x.to_bits()).collect()
    }
}

/// A slice of [`Vector`]s; all must share one dimension.
pub struct VectorRows<'a> {
    rows: &'a [Vector],
    dim: usize,
}

impl<'a> VectorRows<'a> {
    pub fn new(rows: &'a [Vector]) -> Result<Self, ClusterError> {
        let dim = rows.first().map(Vector::dim).ok_or(ClusterError::NoPoints)?;
        if rows.iter().any(|r| r.dim() != dim) {
            return Err(ClusterError::DimensionMismatch);
        }
        Ok(Self { rows, dim })
    }
}

impl PointSet for VectorRows<'_> {
    fn len(&self) -> usize {
        self.rows.len()
    }
    fn dim(&self) -> usize {
        self.dim
    }
    fn add_to(&self, i: usize, acc: &mut [f64]) {
        for (a, &x) in acc.iter_mut().zip(self.rows[i].as_slice()) {
            *a += x as f64;
        }
    }
    fn sq_dist(&self, i: usize, c: &[f64], _c_sq: f64) -> f64 {
        dense_sq_dist(self.rows[i].as_slice(), c)
    }
    fn key(&self, i: usize) -> Vec<u32> {
        self.rows[i].as_slice().iter().map(|x| x.to_bits()).collect()
    }
}

/// Sparse rows in a space of `dim` columns.
pub struct SparseRows<'a> {
    rows: &'a [SparseVector],
    dim: usize,
    sq_norms: Vec<f64>,
}

impl<'a> SparseRows<'a> {
    pub fn new(rows: &'a [SparseVector], dim: usize) -> Result<Self, ClusterError> {
        if rows.iter().any(|r| r.indices.iter().any(|&c| c as usize >= dim)) {
            return Err(ClusterError::DimensionMismatch);
        }
        let sq_norms = rows
            .iter()
            .map(|r| r.values.iter().map(|&v| (v as f64).powi(2)).sum())
            .collect();
        Ok(Self {
            rows,
            dim,
            sq_norms,
        })
    }
}

impl PointSet for SparseRows<'_> {
    fn len(&self) -> usize {
        self.rows.len()
    }
    fn dim(&self) -> usize {
        self.dim
    }
    fn add_to(&self, i: usize, acc: &mut [f64]) {
        for (c, v) in self.rows[i].iter() {
            acc[c as usize] += v as f64;
        }
    }
    fn sq_dist(&self, i: usize, c: &[f64], c_sq: f64) -> f64 {
        let dot: f64 = self.rows[i].iter().map(|(j, v)| v as f64 * c[j as usize]).sum();
        (self.sq_norms[i] - 2.0 * dot + c_sq).max(0.0)
    }
    fn key(&self, i: usize) -> Vec<u32> {
        self.rows[i]
            .iter()
            .flat_map(|(c, v)| [c, v.to_bits()])
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KMeansConfig {
    pub k: usize,
    pub max_iters: usize,
    /// Stop when the relative inertia improvement falls below this.
    pub tol: f64,
    pub seed: u64,
    pub n_init: usize,
}

impl KMeansConfig {
    pub fn new(k: usize, seed: u64) -> Self {
        Self {
            k,
            max_iters: 100,
            tol: 1e-4,
            seed,
            n_init: 10,
        }
    }

    fn validate(&self, n: usize) -> Result<(), ClusterError> {
        let bad = |m: &str| Err(ClusterError::InvalidConfig(m.to_string()));
        if self.k == 0 {
            return bad("k must be positive");
        }
        if self.k > n {
            return Err(ClusterError::TooFewPoints { k: self.k, n });
        }
        if !(self.tol > 0.0) {
            return bad("tol must be positive");
        }
        if self.max_iters == 0 || self.n_init == 0 {
            return bad("max_iters and n_init must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterModel {
    pub centroids: Vec<Vec<f32>>,
    pub assignments: Vec<u32>,
    pub inertia: f64,
    pub sizes: Vec<usize>,
    /// Inertia after every assignment step of the returned run, ending with
    /// the value for the final centroids.
    #[serde(default)]
    pub history: Vec<f64>,
}

impl ClusterModel {
    pub fn k(&self) -> usize {
        self.centroids.len()
    }

    /// Point indices per cluster, in ascending order.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.k()];
        for (i, &c) in self.assignments.iter().enumerate() {
            out[c as usize].push(i);
        }
        out
    }
}

struct Run {
    centroids: Vec<Vec<f64>>,
    assignments: Vec<u32>,
    inertia: f64,
    history: Vec<f64>,
}

pub fn count_distinct<P: PointSet + ?Sized>(points: &P) -> usize {
    (0..points.len()).map(|i| points.key(i)).collect::<HashSet<_>>().len()
}

/// Clusters `points` into `cfg.k` non-empty clusters.
pub fn kmeans<P: PointSet + ?Sized>(points: &P, cfg: &KMeansConfig) -> Result<ClusterModel, ClusterError> {
    let n = points.len();
    if n == 0 {
        return Err(ClusterError::NoPoints);
    }
    cfg.validate(n)?;
    let distinct = count_distinct(points);
    if cfg.k > distinct {
        return Err(ClusterError::TooFewDistinct { k: cfg.k, distinct });
    }
    let mut master = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut best: Option<Run> = None;
    for _ in 0..cfg.n_init {
        let mut rng = ChaCha8Rng::seed_from_u64(master.next_u64());
        let run = lloyd(points, cfg, &mut rng)?;
        if best.as_ref().is_none_or(|b| run.inertia < b.inertia) {
            best = Some(run);
        }
    }
    let run = best.expect("n_init >= 1");
    let mut sizes = vec![0usize; cfg.k];
    for &a in &run.assignments {
        sizes[a as usize] += 1;
    }
    debug_assert!(sizes.iter().all(|&s| s > 0));
    Ok(ClusterModel {
        centroids: run
            .centroids
            .iter()
            .map(|c| c.iter().map(|&x| x as f32).collect())
            .collect(),
        assignments: run.assignments,
        inertia: run.inertia,
        sizes,
        history: run.history,
    })
}

fn sq_norm(c: &[f64]) -> f64 {
    c.iter().map(|x| x * x).sum()
}

fn seed_plus_plus<P: PointSet + ?Sized>(
    points: &P,
    k: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Vec<f64>>, ClusterError> {
    let n = points.len();
    let dim = points.dim();
    let point = |i: usize| {
        let mut c = vec![0.0; dim];
        points.add_to(i, &mut c);
        c
    };
    let mut centroids = vec![point(rng.random_range(0..n))];
    let first_sq = sq_norm(&centroids[0]);
    let mut d2: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| points.sq_dist(i, &centroids[0], first_sq))
        .collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        if !(total > 0.0) {
            return Err(ClusterError::TooFewDistinct {
                k,
                distinct: centroids.len(),
            });
        }
        let target = rng.random::<f64>() * total;
        let mut acc = 0.0;
        let mut pick = None;
        for (i, &d) in d2.iter().enumerate() {
            if d <= 0.0 {
                continue;
            }
            acc += d;
            pick = Some(i);
            if acc > target {
                break;
            }
        }
        let c = point(pick.expect("total > 0"));
        let c_sq = sq_norm(&c);
        d2.par_iter_mut().enumerate().for_each(|(i, d)| {
            let nd = points.sq_dist(i, &c, c_sq);
            if nd < *d {
                *d = nd;
            }
        });
        centroids.push(c);
    }
    Ok(centroids)
}

fn assign<P: PointSet + ?Sized>(points: &P, centroids: &[Vec<f64>]) -> Vec<(u32, f64)> {
    let norms: Vec<f64> = centroids.iter().map(|c| sq_norm(c)).collect();
    (0..points.len())
        .into_par_iter()
        .map(|i| {
            let mut best = (0u32, f64::INFINITY);
            for (j, c) in centroids.iter().enumerate() {
                let d = points.sq_dist(i, c, norms[j]);
                if d < best.1 {
                    best = (j as u32, d);
                }
            }
            best
        })
        .collect()
}

/// Gives every empty cluster the point farthest from its own centroid
/// (taken from clusters with more than one member).
fn repair_empty<P: PointSet + ?Sized>(
    points: &P,
    centroids: &mut [Vec<f64>],
    labels: &mut [(u32, f64)],
) -> Result<(), ClusterError> {
    let k = centroids.len();
    loop {
        let mut sizes = vec![0usize; k];
        for &(a, _) in labels.iter() {
            sizes[a as usize] += 1;
        }
        let Some(empty) = sizes.iter().position(|&s| s == 0) else {
            return Ok(());
        };
        let donor = labels
            .iter()
            .enumerate()
            .filter(|(_, (a, d))| sizes[*a as usize] > 1 && *d > 0.0)
            .fold(None::<(usize, f64)>, |best, (i, &(_, d))| match best {
                Some((_, bd)) if bd >= d => best,
                _ => Some((i, d)),
            })
            .map(|(i, _)| i)
            .ok_or(ClusterError::Degenerate)?;
        let mut c = vec![0.0; points.dim()];
        points.add_to(donor, &mut c);
        centroids[empty] = c;
        labels[donor] = (empty as u32, 0.0);
    }
}

fn update<P: PointSet + ?Sized>(points: &P, labels: &[(u32, f64)], k: usize) -> Vec<Vec<f64>> {
    let mut sums = vec![vec![0.0; points.dim()]; k];
    let mut counts = vec![0usize; k];
    for (i, &(a, _)) in labels.iter().enumerate() {
        points.add_to(i, &mut sums[a as usize]);
        counts[a as usize] += 1;
    }
    for (s, &n) in sums.iter_mut().zip(&counts) {
        debug_assert!(n > 0);
        let inv = 1.0 / n as f64;
        for x in s.iter_mut() {
            *x *= inv;
        }
    }
    sums
}

fn own_inertia<P: PointSet + ?Sized>(points: &P, centroids: &[Vec<f64>], labels: &[(u32, f64)]) -> Vec<(u32, f64)> {
    let norms: Vec<f64> = centroids.iter().map(|c| sq_norm(c)).collect();
    labels
        .par_iter()
        .enumerate()
        .map(|(i, &(a, _))| (a, points.sq_dist(i, &centroids[a as usize], norms[a as usize])))
        .collect()
}

fn total(labels: &[(u32, f64)]) -> f64 {
    labels.iter().map(|&(_, d)| d).sum()
}

fn lloyd<P: PointSet + ?Sized>(
    points: &P,
    cfg: &KMeansConfig,
    rng: &mut ChaCha8Rng,
) -> Result<Run, ClusterError> {
    let mut centroids = seed_plus_plus(points, cfg.k, rng)?;
    let mut history = Vec::new();
    let mut labels;
    let mut iter = 0;
    loop {
        labels = assign(points, &centroids);
        repair_empty(points, &mut centroids, &mut labels)?;
        let inertia = total(&labels);
        let prev = history.last().copied();
        history.push(inertia);
        iter += 1;
        let converged = match prev {
            Some(p) => p <= 0.0 || (p - inertia) / p < cfg.tol,
            None => inertia == 0.0,
        };
        if converged || iter >= cfg.max_iters {
            break;
        }
        centroids = update(points, &labels, cfg.k);
    }
    centroids = update(points, &labels, cfg.k);
    labels = own_inertia(points, &centroids, &labels);
    let inertia = total(&labels);
    history.push(inertia);
    Ok(Run {
        centroids,
        assignments: labels.iter().map(|&(a, _)| a).collect(),
        inertia,
        history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(n: usize) -> Vec<f32> {
        (0..n).flat_map(|i| [i as f32, (i * i) as f32 * 0.5]).collect()
    }

    #[test]
    fn distinct_points_each_get_a_cluster() {
        let data = grid(6);
        let pts = DenseRows::new(&data, 2).unwrap();
        let m = kmeans(&pts, &KMeansConfig::new(6, 7)).unwrap();
        assert_eq!(m.inertia, 0.0);
        assert_eq!(m.sizes, vec![1; 6]);
        let mut seen: Vec<u32> = m.assignments.clone();
        seen.sort();
        seen.dedup();
        assert_eq!(seen.len(), 6);
    }

    #[test]
    fn too_few_distinct_points() {
        let data = vec![1.0, 1.0, 1.0, 1.0, 2.0, 2.0];
        let pts = DenseRows::new(&data, 2).unwrap();
        assert!(matches!(
            kmeans(&pts, &KMeansConfig::new(3, 0)),
            Err(ClusterError::TooFewDistinct { k: 3, distinct: 2 })
        ));
        assert!(matches!(
            kmeans(&pts, &KMeansConfig::new(4, 0)),
            Err(ClusterError::TooFewPoints { .. })
        ));
    }

    #[test]
    fn invalid_config() {
        let data = grid(4);
        let pts = DenseRows::new(&data, 2).unwrap();
        let mut cfg = KMeansConfig::new(2, 0);
        cfg.tol = 0.0;
        assert!(matches!(kmeans(&pts, &cfg), Err(ClusterError::InvalidConfig(_))));
        assert!(DenseRows::new(&data, 3).is_err());
    }

    #[test]
    fn same_seed_is_bit_reproducible() {
        let data: Vec<f32> = (0..300).map(|i| ((i * 37 % 101) as f32).sin()).collect();
        let pts = DenseRows::new(&data, 3).unwrap();
        let a = kmeans(&pts, &KMeansConfig::new(5, 11)).unwrap();
        let b = kmeans(&pts, &KMeansConfig::new(5, 11)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.inertia.to_bits(), b.inertia.to_bits());
    }

    #[test]
    fn sparse_matches_dense() {
        let dense: Vec<f32> = vec![1.0, 0.0, 0.0, 0.9, 0.1, 0.0, 0.0, 0.0, 1.0, 0.0, 0.1, 0.9];
        let sparse: Vec<SparseVector> = dense
            .chunks(3)
            .map(|r| {
                let mut s = SparseVector::default();
                for (j, &v) in r.iter().enumerate() {
                    if v != 0.0 {
                        s.indices.push(j as u32);
                        s.values.push(v);
                    }
                }
                s
            })
            .collect();
        let d = kmeans(&DenseRows::new(&dense, 3).unwrap(), &KMeansConfig::new(2, 3)).unwrap();
        let s = kmeans(&SparseRows::new(&sparse, 3).unwrap(), &KMeansConfig::new(2, 3)).unwrap();
        assert_eq!(d.assignments, s.assignments);
        assert!((d.inertia - s.inertia).abs() < 1e-9);
    }

    #[test]
    fn inertia_equals_sum_of_own_centroid_distances() {
        let data: Vec<f32> = (0..400).map(|i| ((i * 7919 % 613) as f32) / 613.0).collect();
        let pts = DenseRows::new(&data, 4).unwrap();
        let m = kmeans(&pts, &KMeansConfig::new(6, 5)).unwrap();
        let mut sum = 0.0;
        for (i, &a) in m.assignments.iter().enumerate() {
            let c: Vec<f64> = m.centroids[a as usize].iter().map(|&x| x as f64).collect();
            sum += pts.sq_dist(i, &c, 0.0);
        }
        assert!((sum - m.inertia).abs() <= 1e-6 * m.inertia.max(1.0));
        assert!(m.history.windows(2).all(|w| w[1] <= w[0] + 1e-12 * w[0].abs()));
    }
}
