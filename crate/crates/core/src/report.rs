//! Adjacent-scale NMI statistics over a sweep, and re-aggregation from a sweep
//! directory on disk.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use crate::cgc::{adjacent_nmi_report, AdjacentPair, ResolutionPoint, ScaleAxis};
use crate::clustering::Clustering;
use crate::error::{Error, Result};
use crate::io::{adjacent_csv, read_labels, write_file, write_stats, StatsRow};

/// Clusterings of one sweep, keyed by K and then by resolution point.
pub type SweepEnsembles = BTreeMap<usize, BTreeMap<ResolutionPoint, Clustering>>;

#[derive(Debug, Clone, PartialEq)]
pub struct AdjacentStats {
    /// Adjacent NMI pairs for every K whose ensemble forms a full grid.
    pub per_k: BTreeMap<usize, Vec<AdjacentPair>>,
    /// `{min, avg, max}` over K for each adjacent pair.
    pub pairs: Vec<StatsRow>,
    /// One row per consecutive spatial level pair, one per consecutive temporal
    /// level pair, then `all`.
    pub bins: Vec<StatsRow>,
}

impl AdjacentStats {
    pub fn spatial_bins(&self) -> usize {
        self.bins
            .iter()
            .filter(|r| r.pair.starts_with("spatial_"))
            .count()
    }

    pub fn temporal_bins(&self) -> usize {
        self.bins
            .iter()
            .filter(|r| r.pair.starts_with("temporal_"))
            .count()
    }
}

fn bin_name(p: &AdjacentPair) -> String {
    match p.axis {
        ScaleAxis::Spatial => format!("spatial_{}-{}", p.from.spatial.0, p.to.spatial.0),
        ScaleAxis::Temporal => format!("temporal_{}-{}", p.from.temporal, p.to.temporal),
    }
}

/// Aggregates adjacent-scale NMI over all K. A K whose ensemble is not a full
/// grid (failed points) is skipped and reported in the error list.
pub fn adjacent_stats(ensembles: &SweepEnsembles) -> (AdjacentStats, Vec<(usize, Error)>) {
    let mut per_k = BTreeMap::new();
    let mut skipped = Vec::new();
    for (&k, ensemble) in ensembles {
        match adjacent_nmi_report(ensemble) {
            Ok(pairs) => {
                per_k.insert(k, pairs);
            }
            Err(e) => skipped.push((k, e)),
        }
    }

    let mut by_pair: BTreeMap<(ResolutionPoint, ResolutionPoint), Vec<f64>> = BTreeMap::new();
    let mut by_bin: BTreeMap<(ScaleAxis, u32), (String, Vec<f64>)> = BTreeMap::new();
    let mut all = Vec::new();
    for p in per_k.values().flatten() {
        by_pair.entry((p.from, p.to)).or_default().push(p.nmi);
        let level = match p.axis {
            ScaleAxis::Spatial => p.from.spatial.0,
            ScaleAxis::Temporal => p.from.temporal,
        };
        by_bin
            .entry((p.axis, level))
            .or_insert_with(|| (bin_name(p), Vec::new()))
            .1
            .push(p.nmi);
        all.push(p.nmi);
    }
    let pairs = by_pair
        .iter()
        .filter_map(|((a, b), v)| StatsRow::from_values(format!("{}-{}", a.tag(), b.tag()), v))
        .collect();
    let mut bins: Vec<StatsRow> = by_bin
        .values()
        .filter_map(|(name, v)| StatsRow::from_values(name.clone(), v))
        .collect();
    bins.extend(StatsRow::from_values("all", &all));
    (AdjacentStats { per_k, pairs, bins }, skipped)
}

pub fn k_dir(root: &Path, k: usize) -> PathBuf {
    root.join(format!("k{k}"))
}

pub fn labels_path(root: &Path, k: usize, res: ResolutionPoint) -> PathBuf {
    k_dir(root, k)
        .join("labels")
        .join(format!("res_{}.csv", res.tag()))
}

/// Writes `k{K}/adjacent.csv`, `stats/adjacent_pairs.csv` and `stats/bins.csv`.
pub fn write_stats_tree(root: &Path, stats: &AdjacentStats) -> Result<()> {
    for (&k, pairs) in &stats.per_k {
        write_file(&k_dir(root, k).join("adjacent.csv"), &adjacent_csv(pairs))?;
    }
    write_stats(root.join("stats").join("adjacent_pairs.csv"), &stats.pairs)?;
    write_stats(root.join("stats").join("bins.csv"), &stats.bins)
}

fn parse_tag(name: &str) -> Option<ResolutionPoint> {
    let tag = name.strip_prefix("res_")?.strip_suffix(".csv")?;
    let levels: Vec<u32> = tag
        .split('_')
        .map(|s| s.parse().ok())
        .collect::<Option<_>>()?;
    match levels[..] {
        [a, b, c] => Some(ResolutionPoint::new(a, b, c)),
        _ => None,
    }
}

fn sorted_entries(dir: &Path) -> Result<Vec<(String, PathBuf)>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        out.push((
            entry.file_name().to_string_lossy().into_owned(),
            entry.path(),
        ));
    }
    out.sort();
    Ok(out)
}

/// Reads every `k{K}/labels/res_{l1}_{l2}_{l3}.csv` under a sweep directory.
pub fn load_sweep(root: &Path) -> Result<SweepEnsembles> {
    let mut out = SweepEnsembles::new();
    for (name, path) in sorted_entries(root)? {
        let Some(k) = name.strip_prefix('k').and_then(|s| s.parse::<usize>().ok()) else {
            continue;
        };
        let labels = path.join("labels");
        if !labels.is_dir() {
            continue;
        }
        let mut ensemble = BTreeMap::new();
        for (file, path) in sorted_entries(&labels)? {
            if let Some(res) = parse_tag(&file) {
                ensemble.insert(res, read_labels(&path)?.to_clustering()?);
            }
        }
        if !ensemble.is_empty() {
            out.insert(k, ensemble);
        }
    }
    if out.is_empty() {
        return Err(Error::Format(format!(
            "no label files under {}",
            root.display()
        )));
    }
    Ok(out)
}

/// Recomputes and rewrites the statistics of an existing sweep directory.
pub fn report(root: &Path) -> Result<AdjacentStats> {
    let ensembles = load_sweep(root)?;
    let (stats, skipped) = adjacent_stats(&ensembles);
    if stats.per_k.is_empty() {
        let (k, e) = skipped.into_iter().next().expect("nonempty sweep");
        return Err(Error::Shape(format!("k={k}: {e}")));
    }
    write_stats_tree(root, &stats)?;
    Ok(stats)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cgc::lattice;

    fn ensemble(k_shift: usize) -> BTreeMap<ResolutionPoint, Clustering> {
        lattice(1..=4, 1..=6)
            .into_iter()
            .map(|r| {
                let [a, _, c] = r.levels();
                let labels: Vec<usize> = (0..30)
                    .map(|i| (i / (a as usize + 1) + c as usize * i + k_shift) % 3)
                    .collect();
                (r, Clustering::from_raw(&labels).unwrap())
            })
            .collect()
    }

    #[test]
    fn lattice_bookkeeping() {
        let mut ens = SweepEnsembles::new();
        ens.insert(4, ensemble(0));
        ens.insert(5, ensemble(1));
        let (stats, skipped) = adjacent_stats(&ens);
        assert!(skipped.is_empty());
        assert_eq!(stats.per_k[&4].len(), 38);
        assert_eq!(stats.pairs.len(), 38);
        assert_eq!(stats.spatial_bins(), 3);
        assert_eq!(stats.temporal_bins(), 5);
        assert_eq!(stats.bins.last().unwrap().pair, "all");
        for row in stats.pairs.iter().chain(&stats.bins) {
            assert!(row.min <= row.avg && row.avg <= row.max);
        }
        let first = &stats.pairs[0];
        assert_eq!(first.pair, "1_1_1-1_1_2");
        let nmi_at = |k: usize| {
            stats.per_k[&k]
                .iter()
                .find(|p| p.label() == first.pair)
                .unwrap()
                .nmi
        };
        let values = [nmi_at(4), nmi_at(5)];
        assert_eq!(first.min, values[0].min(values[1]));
    }

    #[test]
    fn incomplete_grid_is_skipped() {
        let mut partial = ensemble(0);
        partial.remove(&ResolutionPoint::new(2, 2, 3));
        let mut ens = SweepEnsembles::new();
        ens.insert(4, partial);
        ens.insert(6, ensemble(2));
        let (stats, skipped) = adjacent_stats(&ens);
        assert_eq!(skipped.len(), 1);
        assert_eq!(skipped[0].0, 4);
        assert_eq!(stats.per_k.keys().copied().collect::<Vec<_>>(), [6]);
    }

    #[test]
    fn tags_parse() {
        assert_eq!(
            parse_tag("res_1_2_3.csv"),
            Some(ResolutionPoint::new(1, 2, 3))
        );
        assert_eq!(parse_tag("res_1_2.csv"), None);
        assert_eq!(parse_tag("other.csv"), None);
    }
}
