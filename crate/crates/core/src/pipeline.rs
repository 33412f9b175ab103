//! Run configuration and the full sweep: CGC over a resolution lattice for each
//! K, then MIER and the adjacent-scale statistics, written as an artifact tree:
//!
//! ```text
//! manifest.txt
//! k{K}/labels/res_{l1}_{l2}_{l3}.csv
//! k{K}/nmi_edges.csv
//! k{K}/adjacent.csv
//! k{K}/mier.txt
//! stats/adjacent_pairs.csv
//! stats/bins.csv
//! ```
//!
//! Every byte depends only on the input file, the configuration and the seeds;
//! the thread count is deliberately kept out of the manifest.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::cgc::{cgc_sweep, lattice, CgcConfig, ResolutionPoint};
use crate::clustering::{Clustering, DEFAULT_MAX_ITER};
use crate::error::{Error, Result};
use crate::io::{edges_csv, labels_csv, write_file, Manifest};
use crate::mier::{mier, MierOptions, MierResult};
use crate::report::{
    adjacent_stats, k_dir, labels_path, write_stats_tree, AdjacentStats, SweepEnsembles,
};
use crate::wavelet::WaveletFamily;

/// Inclusive level range, written `a..b` (or `a` for a single level).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RangeRepr", into = "String")]
pub struct LevelRange {
    pub start: u32,
    pub end: u32,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum RangeRepr {
    Text(String),
    Single(u32),
    Pair([u32; 2]),
}

impl TryFrom<RangeRepr> for LevelRange {
    type Error = Error;

    fn try_from(r: RangeRepr) -> Result<Self> {
        match r {
            RangeRepr::Text(s) => s.parse(),
            RangeRepr::Single(v) => Ok(Self::new(v, v)?),
            RangeRepr::Pair([a, b]) => Self::new(a, b),
        }
    }
}

impl From<LevelRange> for String {
    fn from(r: LevelRange) -> String {
        r.to_string()
    }
}

impl LevelRange {
    pub fn new(start: u32, end: u32) -> Result<Self> {
        if start > end {
            return Err(Error::Config(format!("empty level range {start}..{end}")));
        }
        Ok(Self { start, end })
    }

    pub fn levels(&self) -> std::ops::RangeInclusive<u32> {
        self.start..=self.end
    }
}

impl FromStr for LevelRange {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let num = |t: &str| {
            t.trim()
                .parse::<u32>()
                .map_err(|_| Error::Config(format!("bad level range {s:?}, expected a..b")))
        };
        match s.split_once("..") {
            Some((a, b)) => Self::new(num(a)?, num(b.trim_start_matches('='))?),
            None => {
                let v = num(s)?;
                Self::new(v, v)
            }
        }
    }
}

impl fmt::Display for LevelRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}..{}", self.start, self.end)
    }
}

fn default_spatial() -> LevelRange {
    LevelRange { start: 1, end: 4 }
}

fn default_temporal() -> LevelRange {
    LevelRange { start: 1, end: 6 }
}

fn default_wavelets() -> [WaveletFamily; 3] {
    [WaveletFamily::Haar, WaveletFamily::Haar, WaveletFamily::Db2]
}

fn default_true() -> bool {
    true
}

fn default_max_iter() -> usize {
    DEFAULT_MAX_ITER
}

/// Sweep configuration, usually read from TOML:
///
/// ```toml
/// input = "data.cgct"
/// output = "sweep"
/// levels_spatial = "1..4"
/// levels_temporal = "1..6"
/// k = 10            # or k_range = [4, 20]
/// seed = 7
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub input: PathBuf,
    pub output: PathBuf,
    #[serde(default = "default_spatial")]
    pub levels_spatial: LevelRange,
    #[serde(default = "default_temporal")]
    pub levels_temporal: LevelRange,
    /// Families for (lat, lon, time).
    #[serde(default = "default_wavelets")]
    pub wavelets: [WaveletFamily; 3],
    #[serde(default)]
    pub k: Option<usize>,
    /// Inclusive.
    #[serde(default)]
    pub k_range: Option<[usize; 2]>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_true")]
    pub standardize: bool,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default)]
    pub variables: Option<Vec<usize>>,
    /// Worker threads; defaults to available parallelism capped at the lattice size.
    #[serde(default)]
    pub threads: Option<usize>,
    /// Fixes the number of MIER components instead of the eigen-gap choice.
    #[serde(default)]
    pub mier_k: Option<usize>,
}

impl RunConfig {
    pub fn new(input: impl Into<PathBuf>, output: impl Into<PathBuf>) -> Self {
        Self {
            input: input.into(),
            output: output.into(),
            levels_spatial: default_spatial(),
            levels_temporal: default_temporal(),
            wavelets: default_wavelets(),
            k: None,
            k_range: None,
            seed: 0,
            standardize: true,
            max_iter: DEFAULT_MAX_ITER,
            variables: None,
            threads: None,
            mier_k: None,
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml(&text)?;
        // relative paths in a config file are relative to the file
        if let Some(dir) = path.parent() {
            if cfg.input.is_relative() {
                cfg.input = dir.join(&cfg.input);
            }
            if cfg.output.is_relative() {
                cfg.output = dir.join(&cfg.output);
            }
        }
        Ok(cfg)
    }

    /// The K values to sweep, ascending.
    pub fn ks(&self) -> Result<Vec<usize>> {
        let ks: Vec<usize> = match (self.k, self.k_range) {
            (Some(_), Some(_)) => return Err(Error::Config("set k or k_range, not both".into())),
            (Some(k), None) => vec![k],
            (None, Some([a, b])) => (a..=b).collect(),
            (None, None) => return Err(Error::Config("missing k or k_range".into())),
        };
        if ks.is_empty() || ks.contains(&0) {
            return Err(Error::Config(format!("invalid k selection {ks:?}")));
        }
        Ok(ks)
    }

    pub fn lattice(&self) -> Vec<ResolutionPoint> {
        lattice(self.levels_spatial.levels(), self.levels_temporal.levels())
    }

    pub fn validate(&self) -> Result<()> {
        self.ks()?;
        if self.threads == Some(0) {
            return Err(Error::Config("threads must be at least 1".into()));
        }
        if self.max_iter == 0 {
            return Err(Error::Config("max_iter must be at least 1".into()));
        }
        Ok(())
    }

    fn cgc_config(&self, k: usize) -> CgcConfig {
        CgcConfig {
            variables: self.variables.clone(),
            families: self.wavelets,
            k,
            seed: self.seed,
            max_iter: self.max_iter,
            standardize: self.standardize,
        }
    }

    /// Threads actually used: requested or available, capped at the lattice size.
    pub fn worker_threads(&self) -> usize {
        let wanted = self
            .threads
            .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
        wanted.min(self.lattice().len()).max(1)
    }
}

/// MIER seeds for one K, derived from the base seed so reruns repeat exactly.
pub fn mier_options(base_seed: u64, k: usize, k_override: Option<usize>) -> MierOptions {
    let cut = ResolutionPoint::new(0, 0, 0).derive_seed(base_seed ^ (k as u64).rotate_left(32));
    MierOptions {
        k_override,
        cut_seed: cut,
        tie_seed: cut.rotate_left(17) ^ 0x5851_F42D_4C95_7F2D,
    }
}

#[derive(Debug)]
pub struct KRun {
    pub k: usize,
    pub failures: BTreeMap<ResolutionPoint, Error>,
    pub mier: Option<MierResult>,
}

#[derive(Debug)]
pub struct RunSummary {
    pub points: usize,
    pub runs: Vec<KRun>,
    pub stats: AdjacentStats,
    pub threads: usize,
}

impl RunSummary {
    pub fn failed(&self) -> usize {
        self.runs.iter().map(|r| r.failures.len()).sum()
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

fn join<T: ToString>(items: impl IntoIterator<Item = T>, sep: &str) -> String {
    items
        .into_iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join(sep)
}

fn mier_manifest(
    k: usize,
    opts: &MierOptions,
    m: &MierResult,
    adjacent_avg: Option<f64>,
) -> Manifest {
    let mut out = Manifest::new();
    out.push("k", k)
        .push("nodes", m.graph.n())
        .push("cut_seed", opts.cut_seed)
        .push("tie_seed", opts.tie_seed)
        .push(
            "k_override",
            opts.k_override.map_or("none".into(), |v| v.to_string()),
        )
        .push("components", m.cut.k)
        .push("spectrum", join(&m.cut.spectrum, ","));
    for (c, comp) in m.reduced.components.iter().enumerate() {
        out.push(
            format!("component.{c}"),
            join(comp.iter().map(|r| r.tag()), " "),
        );
    }
    for rep in &m.reduced.representatives {
        out.push(
            format!("representative.{}", rep.component),
            rep.resolution.tag(),
        );
        out.push(format!("score.{}", rep.component), rep.score);
    }
    if let Some(avg) = adjacent_avg {
        out.push("adjacent_avg_nmi", avg);
    }
    out
}

/// Runs the complete sweep on a dedicated pool of [`RunConfig::worker_threads`]
/// threads. Fails only on configuration/input errors or when every point fails.
pub fn run_pipeline(cfg: &RunConfig) -> Result<RunSummary> {
    cfg.validate()?;
    let threads = cfg.worker_threads();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    pool.install(|| run_in_pool(cfg, threads))
}

fn run_in_pool(cfg: &RunConfig, threads: usize) -> Result<RunSummary> {
    let ks = cfg.ks()?;
    let points = cfg.lattice();
    let input_bytes = fs::read(&cfg.input).map_err(|e| Error::io(&cfg.input, e))?;
    let file = crate::io::TensorFile::from_bytes(&input_bytes)?;
    let root = cfg.output.as_path();
    fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;

    let mut ensembles = SweepEnsembles::new();
    let mut runs = Vec::new();
    for &k in &ks {
        let results = cgc_sweep(
            &file.tensor,
            file.mask.as_deref(),
            &points,
            &cfg.cgc_config(k),
        );
        let mut failures = BTreeMap::new();
        let mut ensemble: BTreeMap<ResolutionPoint, Clustering> = BTreeMap::new();
        for (res, outcome) in results {
            match outcome.and_then(|o| Ok((o.grid.to_clustering()?, o.grid))) {
                Ok((clustering, grid)) => {
                    write_file(&labels_path(root, k, res), &labels_csv(&grid))?;
                    ensemble.insert(res, clustering);
                }
                Err(e) => {
                    failures.insert(res, e);
                }
            }
        }
        if !ensemble.is_empty() {
            ensembles.insert(k, ensemble);
        }
        runs.push(KRun {
            k,
            failures,
            mier: None,
        });
    }
    if ensembles.is_empty() {
        let first = runs.iter().flat_map(|r| r.failures.iter()).next();
        let detail = first.map_or(String::new(), |(res, e)| format!(" (first: {res}: {e})"));
        return Err(Error::Parameter(format!(
            "every resolution point failed{detail}"
        )));
    }

    let (stats, _) = adjacent_stats(&ensembles);
    write_stats_tree(root, &stats)?;

    for run in &mut runs {
        let Some(ensemble) = ensembles.get(&run.k) else {
            continue;
        };
        let dir = k_dir(root, run.k);
        let opts = mier_options(cfg.seed, run.k, cfg.mier_k);
        let result = mier(ensemble, &opts)?;
        if result.graph.n() >= 2 {
            write_file(&dir.join("nmi_edges.csv"), &edges_csv(&result.graph))?;
        }
        let adjacent_avg = stats
            .per_k
            .get(&run.k)
            .filter(|p| !p.is_empty())
            .map(|pairs| pairs.iter().map(|p| p.nmi).sum::<f64>() / pairs.len() as f64);
        mier_manifest(run.k, &opts, &result, adjacent_avg).write(dir.join("mier.txt"))?;
        run.mier = Some(result);
    }

    let mut m = Manifest::new();
    m.push("tool", env!("CARGO_PKG_NAME"))
        .push("version", env!("CARGO_PKG_VERSION"))
        .push("input", cfg.input.display())
        .push("input_bytes", input_bytes.len())
        .push("input_fnv1a64", format!("{:016x}", fnv1a(&input_bytes)))
        .push("tensor_dims", join(file.tensor.dims(), "x"))
        .push("mask", file.mask.is_some())
        .push("seed", cfg.seed)
        .push("k", join(&ks, ","))
        .push("levels_spatial", cfg.levels_spatial)
        .push("levels_temporal", cfg.levels_temporal)
        .push("wavelets", join(cfg.wavelets.iter().map(|w| w.name()), ","))
        .push("standardize", cfg.standardize)
        .push("max_iter", cfg.max_iter)
        .push(
            "variables",
            cfg.variables
                .as_ref()
                .map_or("all".into(), |v| join(v, ",")),
        )
        .push(
            "mier_k",
            cfg.mier_k.map_or("auto".into(), |v| v.to_string()),
        )
        .push("points", points.len());
    for res in &points {
        m.push(format!("seed.{}", res.tag()), res.derive_seed(cfg.seed));
    }
    for run in &runs {
        for (res, e) in &run.failures {
            m.push(format!("failed.k{}.{}", run.k, res.tag()), e);
        }
    }
    let failed: usize = runs.iter().map(|r| r.failures.len()).sum();
    m.push("points_ok", points.len() * ks.len() - failed)
        .push("points_failed", failed);
    m.write(root.join("manifest.txt"))?;

    Ok(RunSummary {
        points: points.len(),
        runs,
        stats,
        threads,
    })
}
