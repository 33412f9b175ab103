//! Synthetic gridded tensors with known biome regions.
//!
//! Regions are grown from seeded centers by a priority flood over the 4-neighbour
//! grid, ordered by distance to the growing region's center. The result is close
//! to a Voronoi partition but every region is 4-connected by construction.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::f64::consts::TAU;

use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::clustering::LabelGrid;
use crate::error::{Error, Result};
use crate::tensor::DenseTensor;

/// Amplitude of the seasonal sinusoid; biome mean levels are spaced 1.0 apart.
pub const SIGNAL_AMPLITUDE: f64 = 1.0;

pub const DEFAULT_SEASONAL_PERIOD: usize = 12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    /// (lat, lon, time, variable)
    pub dims: [usize; 4],
    pub n_biomes: usize,
    pub seed: u64,
    pub noise_sigma: f64,
    #[serde(default = "default_period")]
    pub seasonal_period: usize,
}

fn default_period() -> usize {
    DEFAULT_SEASONAL_PERIOD
}

impl SynthSpec {
    pub fn new(dims: [usize; 4], n_biomes: usize, seed: u64, noise_sigma: f64) -> Self {
        Self {
            dims,
            n_biomes,
            seed,
            noise_sigma,
            seasonal_period: DEFAULT_SEASONAL_PERIOD,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dims.contains(&0) {
            return Err(Error::Parameter(format!("zero extent in {:?}", self.dims)));
        }
        let cells = self.dims[0] * self.dims[1];
        if self.n_biomes == 0 || self.n_biomes > cells {
            return Err(Error::Parameter(format!(
                "{} biomes on {cells} grid cells",
                self.n_biomes
            )));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::Parameter(format!(
                "noise_sigma = {}",
                self.noise_sigma
            )));
        }
        if self.seasonal_period == 0 {
            return Err(Error::Parameter("seasonal_period must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, PartialEq)]
struct Frontier {
    dist: f64,
    region: usize,
    cell: usize,
}

impl Eq for Frontier {}

impl Ord for Frontier {
    // min-heap on (dist, region, cell)
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .dist
            .total_cmp(&self.dist)
            .then(other.region.cmp(&self.region))
            .then(other.cell.cmp(&self.cell))
    }
}

impl PartialOrd for Frontier {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

fn grow_regions(rows: usize, cols: usize, n: usize, rng: &mut ChaCha8Rng) -> Vec<i32> {
    let centers: Vec<usize> = index::sample(rng, rows * cols, n).into_vec();
    let mut labels = vec![-1i32; rows * cols];
    let mut heap = BinaryHeap::new();
    for (region, &cell) in centers.iter().enumerate() {
        heap.push(Frontier {
            dist: 0.0,
            region,
            cell,
        });
    }
    while let Some(Frontier { region, cell, .. }) = heap.pop() {
        if labels[cell] >= 0 {
            continue;
        }
        labels[cell] = region as i32;
        let (r, c) = (cell / cols, cell % cols);
        let (cr, cc) = (centers[region] / cols, centers[region] % cols);
        let neighbours = [
            (r > 0).then(|| cell - cols),
            (r + 1 < rows).then(|| cell + cols),
            (c > 0).then(|| cell - 1),
            (c + 1 < cols).then(|| cell + 1),
        ];
        for next in neighbours.into_iter().flatten() {
            if labels[next] < 0 {
                let dr = (next / cols) as f64 - cr as f64;
                let dc = (next % cols) as f64 - cc as f64;
                heap.push(Frontier {
                    dist: dr.hypot(dc),
                    region,
                    cell: next,
                });
            }
        }
    }
    labels
}

/// Generates the tensor (lat, lon, time, variable) and its ground-truth biome grid.
pub fn generate(spec: &SynthSpec) -> Result<(DenseTensor, LabelGrid)> {
    spec.validate()?;
    let [n1, n2, n3, n4] = spec.dims;
    let nb = spec.n_biomes;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let regions = grow_regions(n1, n2, nb, &mut rng);

    // per variable, biomes take a shuffled set of evenly spaced levels
    let mut means = vec![0.0; nb * n4];
    for v in 0..n4 {
        let mut levels: Vec<usize> = (0..nb).collect();
        levels.shuffle(&mut rng);
        for (b, level) in levels.into_iter().enumerate() {
            means[b * n4 + v] = level as f64;
        }
    }
    let phases: Vec<f64> = (0..nb * n4).map(|_| rng.gen_range(0.0..TAU)).collect();
    let omega = TAU / spec.seasonal_period as f64;

    let mut data = Vec::with_capacity(n1 * n2 * n3 * n4);
    for &region in &regions {
        let b = region as usize;
        for t in 0..n3 {
            for v in 0..n4 {
                let signal = means[b * n4 + v]
                    + SIGNAL_AMPLITUDE * (omega * t as f64 + phases[b * n4 + v]).sin();
                let noise = if spec.noise_sigma > 0.0 {
                    spec.noise_sigma * rng.sample::<f64, _>(StandardNormal)
                } else {
                    0.0
                };
                data.push(signal + noise);
            }
        }
    }
    let names = ["lat", "lon", "time", "variable"]
        .map(String::from)
        .to_vec();
    let tensor = DenseTensor::new(spec.dims.to_vec(), data, names)?;
    Ok((tensor, LabelGrid::new((n1, n2), regions)?))
}
