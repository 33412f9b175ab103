//! K-means: Lloyd iterations from seeded greedy k-means++ starts, polished with
//! Hartigan single-point transfers, best of several restarts.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::Clustering;
use crate::error::{Error, Result};
use crate::tensor::FaceMatrix;

pub const DEFAULT_MAX_ITER: usize = 300;

/// Independent k-means++ restarts per fit; the lowest inertia is kept.
pub const DEFAULT_N_INIT: usize = 10;

// below this many distance evaluations the assignment step stays serial
const PAR_THRESHOLD: usize = 1 << 15;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KMeans {
    pub k: usize,
    pub seed: u64,
    pub max_iter: usize,
    pub n_init: usize,
}

/// Result of a K-means run with its per-iteration objective trace.
#[derive(Debug, Clone)]
pub struct KMeansFit {
    pub clustering: Clustering,
    /// `k x cols` cluster means of the returned assignment, row-major.
    pub centroids: Vec<f64>,
    /// Objective after each update step of the kept restart.
    pub history: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

impl KMeans {
    pub fn new(k: usize, seed: u64) -> Self {
        Self {
            k,
            seed,
            max_iter: DEFAULT_MAX_ITER,
            n_init: DEFAULT_N_INIT,
        }
    }

    pub fn n_init(mut self, n_init: usize) -> Self {
        self.n_init = n_init;
        self
    }

    pub fn max_iter(mut self, max_iter: usize) -> Self {
        self.max_iter = max_iter;
        self
    }

    pub fn fit(&self, points: &FaceMatrix) -> Result<KMeansFit> {
        let n = points.rows();
        let d = points.cols();
        let k = self.k;
        if n == 0 || d == 0 {
            return Err(Error::Parameter("k-means on an empty matrix".into()));
        }
        if k == 0 || k > n {
            return Err(Error::Parameter(format!("k = {k} with {n} points")));
        }
        if self.max_iter == 0 {
            return Err(Error::Parameter("max_iter must be at least 1".into()));
        }
        if self.n_init == 0 {
            return Err(Error::Parameter("n_init must be at least 1".into()));
        }

        // one stream drives every restart, so the whole fit is a function of the seed
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut best: Option<KMeansFit> = None;
        for _ in 0..self.n_init {
            let fit = self.lloyd(points, &mut rng)?;
            let better = best.as_ref().is_none_or(|b| {
                fit.clustering.inertia().unwrap() < b.clustering.inertia().unwrap()
            });
            if better {
                best = Some(fit);
            }
        }
        Ok(best.expect("n_init >= 1"))
    }

    fn lloyd(&self, points: &FaceMatrix, rng: &mut ChaCha8Rng) -> Result<KMeansFit> {
        let k = self.k;
        let mut centroids = plus_plus_init(points, k, rng);
        let mut labels: Vec<usize> = Vec::new();
        let mut history = Vec::new();
        let mut converged = false;
        let mut iterations = 0;

        while iterations < self.max_iter {
            iterations += 1;
            let (next, mut dists) = assign(points, &centroids, k, &labels);
            if next == labels {
                // Lloyd fixed point; single-point transfers may still lower the objective
                if !transfer_pass(points, &mut labels, &mut centroids, k) {
                    converged = true;
                    break;
                }
            } else {
                labels = next;
                repair_empty(&mut labels, &mut dists, k);
            }
            centroids = cluster_means(points, &labels, k);
            history.push(objective(points, &labels, &centroids));
        }
        if !converged {
            // make the returned labels consistent with the final centroids
            let (next, mut dists) = assign(points, &centroids, k, &labels);
            if next != labels {
                labels = next;
                repair_empty(&mut labels, &mut dists, k);
                centroids = cluster_means(points, &labels, k);
            }
        }
        let inertia = objective(points, &labels, &centroids);
        let clustering = Clustering::new(labels, k)?.with_inertia(inertia);
        Ok(KMeansFit {
            clustering,
            centroids,
            history,
            iterations,
            converged,
        })
    }
}

/// Seeded K-means; identical arguments give identical output.
pub fn kmeans(points: &FaceMatrix, k: usize, seed: u64, max_iter: usize) -> Result<Clustering> {
    KMeans::new(k, seed)
        .max_iter(max_iter)
        .fit(points)
        .map(|fit| fit.clustering)
}

#[inline]
fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Greedy k-means++: each new center is the best of `2 + ln k` D²-weighted draws,
/// judged by the potential it leaves.
fn plus_plus_init(points: &FaceMatrix, k: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let n = points.rows();
    let d = points.cols();
    let trials = 2 + (k as f64).ln() as usize;
    let dists_to = |c: usize| -> Vec<f64> {
        (0..n)
            .map(|i| sq_dist(points.row(i), points.row(c)))
            .collect()
    };
    let mut chosen = Vec::with_capacity(k);
    chosen.push(rng.gen_range(0..n));
    let mut nearest = dists_to(chosen[0]);
    while chosen.len() < k {
        let total: f64 = nearest.iter().sum();
        if total <= 0.0 {
            // every point coincides with a center; take unused indices in order
            chosen.push((0..n).find(|i| !chosen.contains(i)).unwrap());
            continue;
        }
        let mut best: Option<(f64, usize, Vec<f64>)> = None;
        for _ in 0..trials {
            let cand = sample_weighted(&nearest, total, rng);
            let merged: Vec<f64> = dists_to(cand)
                .iter()
                .zip(&nearest)
                .map(|(a, b)| a.min(*b))
                .collect();
            let potential: f64 = merged.iter().sum();
            if best.as_ref().is_none_or(|(p, _, _)| potential < *p) {
                best = Some((potential, cand, merged));
            }
        }
        let (_, pick, merged) = best.unwrap();
        chosen.push(pick);
        nearest = merged;
    }
    let mut centroids = Vec::with_capacity(k * d);
    for &c in &chosen {
        centroids.extend_from_slice(points.row(c));
    }
    centroids
}

/// Index drawn with probability proportional to `weights[i]`; never a zero weight.
fn sample_weighted(weights: &[f64], total: f64, rng: &mut ChaCha8Rng) -> usize {
    let target = rng.gen::<f64>() * total;
    let mut acc = 0.0;
    for (i, &w) in weights.iter().enumerate() {
        acc += w;
        if w > 0.0 && acc > target {
            return i;
        }
    }
    // rounding can leave target beyond the final partial sum
    weights.iter().rposition(|&w| w > 0.0).unwrap()
}

/// Nearest-centroid assignment. A point keeps its current label when that label is
/// among the nearest; otherwise the lowest-index nearest centroid wins.
fn assign(
    points: &FaceMatrix,
    centroids: &[f64],
    k: usize,
    current: &[usize],
) -> (Vec<usize>, Vec<f64>) {
    let d = points.cols();
    let nearest = |i: usize| -> (usize, f64) {
        let row = points.row(i);
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for c in 0..k {
            let dist = sq_dist(row, &centroids[c * d..(c + 1) * d]);
            if dist < best_d {
                best = c;
                best_d = dist;
            }
        }
        if let Some(&cur) = current.get(i) {
            let cur_d = sq_dist(row, &centroids[cur * d..(cur + 1) * d]);
            if cur_d <= best_d {
                return (cur, cur_d);
            }
        }
        (best, best_d)
    };
    let pairs: Vec<(usize, f64)> = if points.rows() * k * d >= PAR_THRESHOLD {
        (0..points.rows()).into_par_iter().map(nearest).collect()
    } else {
        (0..points.rows()).map(nearest).collect()
    };
    pairs.into_iter().unzip()
}

/// One sweep of Hartigan's single-point transfers: moves a point to another cluster
/// whenever that lowers the objective once both means are updated. Returns
/// whether anything moved. Stable points of this pass are also Lloyd fixed points.
fn transfer_pass(
    points: &FaceMatrix,
    labels: &mut [usize],
    centroids: &mut [f64],
    k: usize,
) -> bool {
    let d = points.cols();
    let mut sizes = vec![0usize; k];
    for &l in labels.iter() {
        sizes[l] += 1;
    }
    let mut moved = false;
    for (i, label) in labels.iter_mut().enumerate() {
        let a = *label;
        let na = sizes[a];
        if na == 1 {
            continue;
        }
        let row = points.row(i);
        let leave = na as f64 / (na - 1) as f64 * sq_dist(row, &centroids[a * d..(a + 1) * d]);
        let mut best: Option<(usize, f64)> = None;
        for b in (0..k).filter(|&b| b != a) {
            let nb = sizes[b] as f64;
            let join = nb / (nb + 1.0) * sq_dist(row, &centroids[b * d..(b + 1) * d]);
            if best.is_none_or(|(_, c)| join < c) {
                best = Some((b, join));
            }
        }
        let Some((b, join)) = best else { continue };
        // relative margin keeps rounding from cycling a point back and forth
        if join >= leave * (1.0 - 1e-12) {
            continue;
        }
        let (fa, fb) = (na as f64, sizes[b] as f64);
        for (j, &x) in row.iter().enumerate() {
            centroids[a * d + j] = (fa * centroids[a * d + j] - x) / (fa - 1.0);
            centroids[b * d + j] = (fb * centroids[b * d + j] + x) / (fb + 1.0);
        }
        sizes[a] -= 1;
        sizes[b] += 1;
        *label = b;
        moved = true;
    }
    moved
}

/// Gives every empty cluster the point farthest from its centroid, taken from a
/// cluster that can spare it.
fn repair_empty(labels: &mut [usize], dists: &mut [f64], k: usize) {
    let mut sizes = vec![0usize; k];
    for &l in labels.iter() {
        sizes[l] += 1;
    }
    for c in 0..k {
        if sizes[c] > 0 {
            continue;
        }
        let mut far: Option<usize> = None;
        for i in 0..labels.len() {
            if sizes[labels[i]] > 1 && far.is_none_or(|f| dists[i] > dists[f]) {
                far = Some(i);
            }
        }
        // k <= n guarantees a donor exists
        let p = far.expect("a cluster with more than one point");
        sizes[labels[p]] -= 1;
        labels[p] = c;
        sizes[c] = 1;
        dists[p] = 0.0;
    }
}

fn cluster_means(points: &FaceMatrix, labels: &[usize], k: usize) -> Vec<f64> {
    let d = points.cols();
    let mut sums = vec![0.0; k * d];
    let mut counts = vec![0usize; k];
    for (i, &l) in labels.iter().enumerate() {
        counts[l] += 1;
        for (s, &v) in sums[l * d..(l + 1) * d].iter_mut().zip(points.row(i)) {
            *s += v;
        }
    }
    for c in 0..k {
        let inv = 1.0 / counts[c] as f64;
        sums[c * d..(c + 1) * d].iter_mut().for_each(|s| *s *= inv);
    }
    sums
}

fn objective(points: &FaceMatrix, labels: &[usize], centroids: &[f64]) -> f64 {
    let d = points.cols();
    labels
        .iter()
        .enumerate()
        .map(|(i, &l)| sq_dist(points.row(i), &centroids[l * d..(l + 1) * d]))
        .sum()
}
