//! Mutual-information ensemble reduction.
//!
//! The ensemble of coarse-grain clusterings becomes a complete graph weighted by
//! pairwise NMI. The graph is ratio-cut by spectral clustering (eigen-gap chooses
//! K), and each component contributes the member with the highest average NMI to
//! the rest of its component.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::cgc::ResolutionPoint;
use crate::clustering::{
    eigen_gap_k_from_values, graph_laplacian, spectral_cluster, AffinityMatrix, Clustering,
};
use crate::error::{Error, Result};
use crate::info::nmi;

/// Largest K the eigen-gap search considers.
pub const MAX_AUTO_K: usize = 8;

/// Complete graph over resolution points with NMI edge weights.
#[derive(Debug, Clone, PartialEq)]
pub struct NmiGraph {
    pub nodes: Vec<ResolutionPoint>,
    pub weights: AffinityMatrix,
}

impl NmiGraph {
    pub fn n(&self) -> usize {
        self.nodes.len()
    }

    pub fn weight(&self, p: usize, q: usize) -> f64 {
        self.weights.get(p, q)
    }
}

pub fn build_nmi_graph(ensemble: &BTreeMap<ResolutionPoint, Clustering>) -> Result<NmiGraph> {
    let n = ensemble.len();
    if n < 2 {
        return Err(Error::Parameter(format!(
            "an NMI graph needs at least 2 clusterings, got {n}"
        )));
    }
    let nodes: Vec<ResolutionPoint> = ensemble.keys().copied().collect();
    let members: Vec<&Clustering> = ensemble.values().collect();
    let len = members[0].len();
    if let Some((p, bad)) = nodes.iter().zip(&members).find(|(_, c)| c.len() != len) {
        return Err(Error::Shape(format!(
            "clustering at {p} covers {} cells, expected {len}",
            bad.len()
        )));
    }
    let pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|p| (p + 1..n).map(move |q| (p, q)))
        .collect();
    let values = pairs
        .par_iter()
        .map(|&(p, q)| nmi(members[p], members[q]))
        .collect::<Result<Vec<f64>>>()?;
    let mut w = vec![0.0; n * n];
    for (&(p, q), &v) in pairs.iter().zip(&values) {
        w[p * n + q] = v;
        w[q * n + p] = v;
    }
    Ok(NmiGraph {
        nodes,
        weights: AffinityMatrix::new(n, w)?,
    })
}

/// Components of the cut graph as node indices.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphCut {
    pub k: usize,
    /// Each component sorted ascending; components ordered by their first node.
    pub components: Vec<Vec<usize>>,
    /// Ascending Laplacian spectrum of the weight matrix.
    pub spectrum: Vec<f64>,
}

impl GraphCut {
    pub fn labels(&self, n: usize) -> Vec<usize> {
        let mut labels = vec![0; n];
        for (c, comp) in self.components.iter().enumerate() {
            for &v in comp {
                labels[v] = c;
            }
        }
        labels
    }
}

/// Spectral ratio cut of the NMI graph.
///
/// Without `k_override`, K is the eigen-gap choice over `[2, min(n - 1, 8)]`; a
/// two-node graph is always split in two.
pub fn cut_graph(g: &NmiGraph, k_override: Option<usize>, seed: u64) -> Result<GraphCut> {
    let n = g.n();
    if n < 2 {
        return Err(Error::Parameter(
            "cutting a graph needs at least 2 nodes".into(),
        ));
    }
    let spectrum = graph_laplacian(&g.weights).eigen()?.values;
    let k = match k_override {
        Some(k) if k == 0 || k > n => {
            return Err(Error::Parameter(format!("k = {k} for {n} nodes")));
        }
        Some(k) => k,
        None if n == 2 => 2,
        None => eigen_gap_k_from_values(&spectrum, 2, (n - 1).min(MAX_AUTO_K))?,
    };
    let clustering = spectral_cluster(&g.weights, k, seed)?;
    let mut components: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (v, &l) in clustering.labels().iter().enumerate() {
        components[l].push(v);
    }
    components.sort_by_key(|c| c[0]);
    Ok(GraphCut {
        k,
        components,
        spectrum,
    })
}

fn check_partition(n: usize, components: &[Vec<usize>]) -> Result<()> {
    let mut seen = vec![false; n];
    for comp in components {
        if comp.is_empty() {
            return Err(Error::Parameter("empty component in partition".into()));
        }
        for &v in comp {
            if v >= n || seen[v] {
                return Err(Error::Parameter(format!(
                    "node {v} is out of range or repeated"
                )));
            }
            seen[v] = true;
        }
    }
    if let Some(missing) = seen.iter().position(|s| !s) {
        return Err(Error::Parameter(format!(
            "node {missing} is in no component"
        )));
    }
    Ok(())
}

/// Average NMI of each node to the other members of its component, indexed by
/// node. Singleton components score 1.0.
pub fn component_scores(g: &NmiGraph, components: &[Vec<usize>]) -> Result<Vec<f64>> {
    check_partition(g.n(), components)?;
    let mut scores = vec![0.0; g.n()];
    for comp in components {
        if comp.len() == 1 {
            scores[comp[0]] = 1.0;
            continue;
        }
        for &p in comp {
            let total: f64 = comp
                .iter()
                .filter(|&&q| q != p)
                .map(|&q| g.weight(p, q))
                .sum();
            scores[p] = total / (comp.len() - 1) as f64;
        }
    }
    Ok(scores)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Representative {
    pub component: usize,
    pub resolution: ResolutionPoint,
    pub clustering: Clustering,
    pub score: f64,
}

/// MIER output: the cut components and one representative per component.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedEnsemble {
    pub components: Vec<Vec<ResolutionPoint>>,
    pub representatives: Vec<Representative>,
}

impl ReducedEnsemble {
    pub fn len(&self) -> usize {
        self.representatives.len()
    }

    pub fn is_empty(&self) -> bool {
        self.representatives.is_empty()
    }
}

/// Picks the highest-scoring node of every component; exact ties are broken by a
/// uniform draw from a generator seeded with `tie_seed`.
pub fn select_representatives(
    g: &NmiGraph,
    components: &[Vec<usize>],
    scores: &[f64],
    ensemble: &BTreeMap<ResolutionPoint, Clustering>,
    tie_seed: u64,
) -> Result<ReducedEnsemble> {
    check_partition(g.n(), components)?;
    if scores.len() != g.n() {
        return Err(Error::Shape(format!(
            "{} scores for {} nodes",
            scores.len(),
            g.n()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(tie_seed);
    let mut representatives = Vec::with_capacity(components.len());
    for (c, comp) in components.iter().enumerate() {
        let best = comp
            .iter()
            .map(|&v| scores[v])
            .fold(f64::NEG_INFINITY, f64::max);
        let argmax: Vec<usize> = comp
            .iter()
            .copied()
            .filter(|&v| scores[v] == best)
            .collect();
        let chosen = if argmax.len() == 1 {
            argmax[0]
        } else {
            argmax[rng.gen_range(0..argmax.len())]
        };
        let resolution = g.nodes[chosen];
        let clustering = ensemble
            .get(&resolution)
            .ok_or_else(|| Error::Parameter(format!("no clustering for {resolution}")))?
            .clone();
        representatives.push(Representative {
            component: c,
            resolution,
            clustering,
            score: best,
        });
    }
    Ok(ReducedEnsemble {
        components: components
            .iter()
            .map(|comp| comp.iter().map(|&v| g.nodes[v]).collect())
            .collect(),
        representatives,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct MierOptions {
    pub k_override: Option<usize>,
    pub cut_seed: u64,
    pub tie_seed: u64,
}

/// Everything MIER computed, for reporting.
#[derive(Debug, Clone, PartialEq)]
pub struct MierResult {
    pub graph: NmiGraph,
    pub cut: GraphCut,
    /// Average within-component NMI, indexed like `graph.nodes`.
    pub scores: Vec<f64>,
    pub reduced: ReducedEnsemble,
}

impl MierResult {
    pub fn score_map(&self) -> BTreeMap<ResolutionPoint, f64> {
        self.graph
            .nodes
            .iter()
            .copied()
            .zip(self.scores.iter().copied())
            .collect()
    }
}

/// Graph, cut, scores and representatives in sequence. A single-clustering
/// ensemble is its own reduced ensemble.
pub fn mier(
    ensemble: &BTreeMap<ResolutionPoint, Clustering>,
    opts: &MierOptions,
) -> Result<MierResult> {
    let (graph, cut) = match ensemble.len() {
        0 => return Err(Error::Parameter("empty ensemble".into())),
        1 => {
            let graph = NmiGraph {
                nodes: ensemble.keys().copied().collect(),
                weights: AffinityMatrix::zeros(1),
            };
            let cut = GraphCut {
                k: 1,
                components: vec![vec![0]],
                spectrum: vec![0.0],
            };
            (graph, cut)
        }
        _ => {
            let graph = build_nmi_graph(ensemble)?;
            let cut = cut_graph(&graph, opts.k_override, opts.cut_seed)?;
            (graph, cut)
        }
    };
    let scores = component_scores(&graph, &cut.components)?;
    let reduced =
        select_representatives(&graph, &cut.components, &scores, ensemble, opts.tie_seed)?;
    Ok(MierResult {
        graph,
        cut,
        scores,
        reduced,
    })
}
