//! Partitions of face cells: K-means (Lloyd) over face vectors and spectral
//! clustering of weighted graphs.

mod kmeans;
mod spectral;

pub use kmeans::{kmeans, KMeans, KMeansFit, DEFAULT_MAX_ITER, DEFAULT_N_INIT};
pub use spectral::{
    eigen_gap_k, eigen_gap_k_from_values, graph_laplacian, ratio_cut, spectral_cluster,
    spectral_embedding, AffinityMatrix, SymmetricEigen, SymmetricMatrix,
};

use std::collections::HashMap;

use crate::error::{Error, Result};

/// Label value used for masked (excluded) cells in a [`LabelGrid`].
pub const MASKED: i32 = -1;

/// An assignment of `k` nonempty clusters to a list of points.
#[derive(Debug, Clone, PartialEq)]
pub struct Clustering {
    labels: Vec<usize>,
    k: usize,
    inertia: Option<f64>,
}

impl Clustering {
    /// Validates that every label lies in `0..k` and every cluster is used.
    pub fn new(labels: Vec<usize>, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::Parameter("a clustering needs k >= 1".into()));
        }
        let mut used = vec![false; k];
        for &l in &labels {
            if l >= k {
                return Err(Error::Parameter(format!("label {l} outside 0..{k}")));
            }
            used[l] = true;
        }
        if let Some(empty) = used.iter().position(|u| !u) {
            return Err(Error::Parameter(format!("cluster {empty} of {k} is empty")));
        }
        Ok(Self {
            labels,
            k,
            inertia: None,
        })
    }

    /// Renumbers arbitrary integer labels to `0..k` in order of first appearance.
    pub fn from_raw<T: Copy + Eq + std::hash::Hash>(raw: &[T]) -> Result<Self> {
        if raw.is_empty() {
            return Err(Error::Parameter(
                "cannot build a clustering of zero points".into(),
            ));
        }
        let mut ids: HashMap<T, usize> = HashMap::new();
        let labels = raw
            .iter()
            .map(|v| {
                let next = ids.len();
                *ids.entry(*v).or_insert(next)
            })
            .collect();
        Ok(Self {
            labels,
            k: ids.len(),
            inertia: None,
        })
    }

    pub(crate) fn with_inertia(mut self, inertia: f64) -> Self {
        self.inertia = Some(inertia);
        self
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// K-means objective at this assignment; `None` for spectral results.
    pub fn inertia(&self) -> Option<f64> {
        self.inertia
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &l in &self.labels {
            sizes[l] += 1;
        }
        sizes
    }
}

/// A 2-D grid of integer labels in row-major order; [`MASKED`] marks excluded cells.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelGrid {
    rows: usize,
    cols: usize,
    labels: Vec<i32>,
}

impl LabelGrid {
    pub fn new(dims: (usize, usize), labels: Vec<i32>) -> Result<Self> {
        if dims.0 * dims.1 != labels.len() {
            return Err(Error::Shape(format!(
                "{}x{} grid given {} labels",
                dims.0,
                dims.1,
                labels.len()
            )));
        }
        Ok(Self {
            rows: dims.0,
            cols: dims.1,
            labels,
        })
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn get(&self, r: usize, c: usize) -> i32 {
        self.labels[r * self.cols + c]
    }

    pub fn labels(&self) -> &[i32] {
        &self.labels
    }

    pub fn valid_mask(&self) -> Vec<bool> {
        self.labels.iter().map(|&l| l != MASKED).collect()
    }

    /// The clustering over unmasked cells, in row-major order.
    pub fn to_clustering(&self) -> Result<Clustering> {
        let valid: Vec<i32> = self
            .labels
            .iter()
            .copied()
            .filter(|&l| l != MASKED)
            .collect();
        Clustering::from_raw(&valid)
    }
}
