//! Unnormalized graph Laplacians, the eigen-gap heuristic, and spectral clustering.

use nalgebra::DMatrix;

use super::kmeans::{kmeans, DEFAULT_MAX_ITER};
use super::Clustering;
use crate::error::{Error, Result};
use crate::tensor::FaceMatrix;

/// Symmetric nonnegative edge weights with a zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct AffinityMatrix {
    n: usize,
    w: Vec<f64>,
}

impl AffinityMatrix {
    pub fn new(n: usize, w: Vec<f64>) -> Result<Self> {
        if n == 0 {
            return Err(Error::Parameter("affinity matrix of zero nodes".into()));
        }
        if w.len() != n * n {
            return Err(Error::Shape(format!(
                "{n}x{n} affinity given {} entries",
                w.len()
            )));
        }
        for i in 0..n {
            if w[i * n + i] != 0.0 {
                return Err(Error::Numeric(format!("nonzero diagonal at node {i}")));
            }
            for j in 0..n {
                let v = w[i * n + j];
                if !v.is_finite() || v < 0.0 {
                    return Err(Error::Numeric(format!("weight w[{i}][{j}] = {v}")));
                }
                if v != w[j * n + i] {
                    return Err(Error::Numeric(format!("w[{i}][{j}] != w[{j}][{i}]")));
                }
            }
        }
        Ok(Self { n, w })
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            w: vec![0.0; n * n],
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.w[i * self.n + j]
    }

    pub fn weights(&self) -> &[f64] {
        &self.w
    }
}

/// A dense symmetric matrix in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricMatrix {
    n: usize,
    data: Vec<f64>,
}

/// Eigenpairs sorted by ascending eigenvalue.
#[derive(Debug, Clone)]
pub struct SymmetricEigen {
    pub values: Vec<f64>,
    /// Column `j` (row-major `n x n`) is the unit eigenvector of `values[j]`.
    pub vectors: Vec<f64>,
}

impl SymmetricMatrix {
    pub fn new(n: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n * n {
            return Err(Error::Shape(format!(
                "{n}x{n} matrix given {} entries",
                data.len()
            )));
        }
        for i in 0..n {
            for j in 0..i {
                if data[i * n + j] != data[j * n + i] {
                    return Err(Error::Numeric(format!(
                        "matrix not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        Ok(Self { n, data })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn eigen(&self) -> Result<SymmetricEigen> {
        let n = self.n;
        let m = DMatrix::from_row_slice(n, n, &self.data);
        let eig = m
            .try_symmetric_eigen(1e-14, 10_000)
            .ok_or_else(|| Error::Numeric("symmetric eigensolver did not converge".into()))?;
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| {
            eig.eigenvalues[a]
                .partial_cmp(&eig.eigenvalues[b])
                .expect("finite eigenvalues")
                .then(a.cmp(&b))
        });
        let values = order.iter().map(|&j| eig.eigenvalues[j]).collect();
        let mut vectors = vec![0.0; n * n];
        for (col, &j) in order.iter().enumerate() {
            for i in 0..n {
                vectors[i * n + col] = eig.eigenvectors[(i, j)];
            }
        }
        Ok(SymmetricEigen { values, vectors })
    }
}

/// `L = D - W` with `D` the diagonal degree matrix.
pub fn graph_laplacian(aff: &AffinityMatrix) -> SymmetricMatrix {
    let n = aff.n;
    let mut data = vec![0.0; n * n];
    for i in 0..n {
        let mut degree = 0.0;
        for j in 0..n {
            let w = aff.get(i, j);
            degree += w;
            data[i * n + j] = -w;
        }
        data[i * n + i] = degree;
    }
    // -w is exactly symmetric because w is
    SymmetricMatrix { n, data }
}

/// The `k` in `[k_min, k_max]` maximizing `lambda_{k+1} - lambda_k` (1-based,
/// ascending). Gaps within `1e-9 * max(1, lambda_max)` of the largest count as
/// ties and go to the smaller `k`.
pub fn eigen_gap_k(laplacian: &SymmetricMatrix, k_min: usize, k_max: usize) -> Result<usize> {
    check_gap_range(laplacian.n(), k_min, k_max)?;
    let eig = laplacian.eigen()?;
    eigen_gap_k_from_values(&eig.values, k_min, k_max)
}

/// [`eigen_gap_k`] on an already sorted spectrum.
pub fn eigen_gap_k_from_values(values: &[f64], k_min: usize, k_max: usize) -> Result<usize> {
    check_gap_range(values.len(), k_min, k_max)?;
    let gaps: Vec<f64> = (k_min..=k_max).map(|k| values[k] - values[k - 1]).collect();
    let best = gaps.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let scale = values.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let tol = 1e-9 * scale;
    let offset = gaps
        .iter()
        .position(|&g| g >= best - tol)
        .expect("nonempty gap range");
    Ok(k_min + offset)
}

fn check_gap_range(n: usize, k_min: usize, k_max: usize) -> Result<()> {
    if k_min < 1 || k_min > k_max || k_max >= n {
        return Err(Error::Parameter(format!(
            "eigen-gap range [{k_min}, {k_max}] invalid for {n} nodes"
        )));
    }
    Ok(())
}

/// Rows of the `k` lowest Laplacian eigenvectors, one row per node.
pub fn spectral_embedding(aff: &AffinityMatrix, k: usize) -> Result<FaceMatrix> {
    let n = aff.n();
    if k == 0 || k > n {
        return Err(Error::Parameter(format!(
            "spectral embedding of dimension {k} for {n} nodes"
        )));
    }
    let eig = graph_laplacian(aff).eigen()?;
    let mut rows = Vec::with_capacity(n * k);
    for i in 0..n {
        rows.extend_from_slice(&eig.vectors[i * n..i * n + k]);
    }
    FaceMatrix::from_rows(n, k, rows)
}

/// K-means (seeded) on the rows of the `k` lowest eigenvectors of `L = D - W`.
pub fn spectral_cluster(aff: &AffinityMatrix, k: usize, seed: u64) -> Result<Clustering> {
    let n = aff.n();
    if k == 0 || k > n {
        return Err(Error::Parameter(format!("k = {k} for {n} nodes")));
    }
    if k == 1 {
        return Clustering::new(vec![0; n], 1);
    }
    let embedding = spectral_embedding(aff, k)?;
    let labels = kmeans(&embedding, k, seed, DEFAULT_MAX_ITER)?
        .labels()
        .to_vec();
    Clustering::new(labels, k)
}

/// Ratio-cut value `1/2 * sum_j W(I_j) / |I_j|` of a labeling, where `W(I)` is the
/// total weight leaving component `I`.
pub fn ratio_cut(aff: &AffinityMatrix, labels: &[usize]) -> Result<f64> {
    let n = aff.n();
    if labels.len() != n {
        return Err(Error::Shape(format!(
            "{} labels for {n} nodes",
            labels.len()
        )));
    }
    let k = labels.iter().max().map_or(0, |m| m + 1);
    let mut leaving = vec![0.0; k];
    let mut sizes = vec![0usize; k];
    for i in 0..n {
        sizes[labels[i]] += 1;
        for j in 0..n {
            if labels[i] != labels[j] {
                leaving[labels[i]] += aff.get(i, j);
            }
        }
    }
    Ok(0.5
        * leaving
            .iter()
            .zip(&sizes)
            .filter(|(_, &s)| s > 0)
            .map(|(w, &s)| w / s as f64)
            .sum::<f64>())
}
