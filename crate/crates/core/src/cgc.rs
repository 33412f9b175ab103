//! Coarse-grain clustering: split a 4-way `(lat, lon, time, variable)` tensor by
//! variable, wavelet-coarsen each part, stack the approximation coefficients on
//! the `(lat, lon)` face, cluster, and carry the labels back to the full grid.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::clustering::{Clustering, KMeans, LabelGrid, DEFAULT_MAX_ITER, MASKED};
use crate::error::{Error, Result};
use crate::info::nmi;
use crate::tensor::{stack_and_vectorize, DenseTensor};
use crate::wavelet::{
    coarse_index_map, dwt_separable, upsample_labels, AxisWavelet, WaveletFamily, WaveletSpec,
};

/// Wavelet levels `(l1, l2, l3)` applied to latitude, longitude and time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ResolutionPoint {
    pub spatial: (u32, u32),
    pub temporal: u32,
}

impl ResolutionPoint {
    pub fn new(l1: u32, l2: u32, l3: u32) -> Self {
        Self {
            spatial: (l1, l2),
            temporal: l3,
        }
    }

    pub fn levels(&self) -> [u32; 3] {
        [self.spatial.0, self.spatial.1, self.temporal]
    }

    /// Per-point K-means seed; depends only on the base seed and the levels.
    pub fn derive_seed(&self, base_seed: u64) -> u64 {
        self.levels().iter().fold(splitmix64(base_seed), |acc, &l| {
            splitmix64(acc ^ u64::from(l))
        })
    }

    /// `l1_l2_l3`, used in file names.
    pub fn tag(&self) -> String {
        format!("{}_{}_{}", self.spatial.0, self.spatial.1, self.temporal)
    }
}

impl fmt::Display for ResolutionPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "({},{},{})",
            self.spatial.0, self.spatial.1, self.temporal
        )
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Isotropic lattice `{(i, i, j) : i in spatial, j in temporal}`.
pub fn lattice(
    spatial: std::ops::RangeInclusive<u32>,
    temporal: std::ops::RangeInclusive<u32>,
) -> Vec<ResolutionPoint> {
    spatial
        .flat_map(|i| temporal.clone().map(move |j| ResolutionPoint::new(i, i, j)))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct CgcConfig {
    /// Indices along the variable axis to include; `None` means all.
    pub variables: Option<Vec<usize>>,
    /// Families for latitude, longitude and time.
    pub families: [WaveletFamily; 3],
    pub k: usize,
    pub seed: u64,
    pub max_iter: usize,
    /// Standardize each variable (zero mean, unit variance over valid cells) before the DWT.
    pub standardize: bool,
}

impl CgcConfig {
    pub fn new(k: usize, seed: u64) -> Self {
        Self {
            variables: None,
            families: [WaveletFamily::Haar, WaveletFamily::Haar, WaveletFamily::Db2],
            k,
            seed,
            max_iter: DEFAULT_MAX_ITER,
            standardize: true,
        }
    }

    fn wavelet_spec(&self, res: &ResolutionPoint) -> WaveletSpec {
        let l = res.levels();
        WaveletSpec::new(
            (0..3)
                .map(|a| AxisWavelet::new(self.families[a], l[a]))
                .collect(),
        )
    }
}

/// One CGC result on the full `(N1, N2)` face.
#[derive(Debug, Clone, PartialEq)]
pub struct CgcOutput {
    pub resolution: ResolutionPoint,
    /// Fine-face labels, [`MASKED`] where excluded.
    pub grid: LabelGrid,
    /// The same labels restricted to valid cells, row-major.
    pub clustering: Clustering,
    pub coarse_dims: (usize, usize, usize),
    /// `(rows, cols)` of the clustered coefficient matrix.
    pub matrix_shape: (usize, usize),
    pub seed: u64,
}

pub fn cgc(t: &DenseTensor, res: ResolutionPoint, cfg: &CgcConfig) -> Result<CgcOutput> {
    cgc_masked(t, None, res, cfg)
}

/// [`cgc`] with an optional validity mask over the `N1 x N2` face (`true` = valid).
pub fn cgc_masked(
    t: &DenseTensor,
    mask: Option<&[bool]>,
    res: ResolutionPoint,
    cfg: &CgcConfig,
) -> Result<CgcOutput> {
    if t.ndim() != 4 {
        return Err(Error::Shape(format!(
            "coarse-grain clustering needs a 4-way tensor, got {} axes",
            t.ndim()
        )));
    }
    if cfg.k == 0 {
        return Err(Error::Parameter("k must be at least 1".into()));
    }
    let dims = t.dims();
    let face = (dims[0], dims[1]);
    let variables: Vec<usize> = match &cfg.variables {
        Some(v) if v.is_empty() => {
            return Err(Error::Parameter("variable selection is empty".into()))
        }
        Some(v) => v.clone(),
        None => (0..dims[3]).collect(),
    };
    if let Some(&bad) = variables.iter().find(|&&v| v >= dims[3]) {
        return Err(Error::Parameter(format!(
            "variable index {bad} outside 0..{}",
            dims[3]
        )));
    }
    let valid: Vec<bool> = match mask {
        Some(m) if m.len() != face.0 * face.1 => {
            return Err(Error::Shape(format!(
                "mask of {} cells for a {}x{} face",
                m.len(),
                face.0,
                face.1
            )))
        }
        Some(m) => m.to_vec(),
        None => vec![true; face.0 * face.1],
    };
    let spec = cfg.wavelet_spec(&res);
    let coarse = spec.output_dims(&dims[..3])?;

    // Steps one and two: split by variable, coarsen each part
    let parts = variables
        .iter()
        .map(|&v| {
            let part = prepare_variable(t.slice_axis(3, v)?, &valid, cfg.standardize)?;
            dwt_separable(&part, &spec)
        })
        .collect::<Result<Vec<_>>>()?;

    // Steps three and four: stack on the (lat, lon) face and vectorize
    let matrix = stack_and_vectorize(&parts, (0, 1))?;

    // a coarse cell is clustered only if some valid fine cell inherits its label
    let row_map = coarse_index_map(face.0, spec.per_axis[0])?;
    let col_map = coarse_index_map(face.1, spec.per_axis[1])?;
    let mut participates = vec![false; coarse[0] * coarse[1]];
    for (i, &r) in row_map.iter().enumerate() {
        for (j, &c) in col_map.iter().enumerate() {
            if valid[i * face.1 + j] {
                participates[r * coarse[1] + c] = true;
            }
        }
    }
    let selected = matrix.select_rows(&participates)?;
    if cfg.k > selected.rows() {
        return Err(Error::Parameter(format!(
            "k = {} exceeds the {} coarse cells at {res}",
            cfg.k,
            selected.rows()
        )));
    }

    // Step five: cluster
    let seed = res.derive_seed(cfg.seed);
    let fit = KMeans::new(cfg.k, seed)
        .max_iter(cfg.max_iter)
        .fit(&selected)?;

    // Step six: return labels to the original face
    let mut coarse_labels = vec![MASKED; coarse[0] * coarse[1]];
    let mut fitted = fit.clustering.labels().iter();
    for (slot, _) in coarse_labels
        .iter_mut()
        .zip(&participates)
        .filter(|(_, &p)| p)
    {
        *slot = *fitted.next().expect("one label per participating cell") as i32;
    }
    let coarse_grid = LabelGrid::new((coarse[0], coarse[1]), coarse_labels)?;
    let up = upsample_labels(&coarse_grid, face, [spec.per_axis[0], spec.per_axis[1]])?;
    let fine: Vec<i32> = up
        .labels()
        .iter()
        .zip(&valid)
        .map(|(&l, &ok)| if ok { l } else { MASKED })
        .collect();
    let kept: Vec<usize> = fine
        .iter()
        .filter(|&&l| l != MASKED)
        .map(|&l| l as usize)
        .collect();
    let inertia = fit.clustering.inertia().expect("k-means sets inertia");
    let clustering = Clustering::new(kept, cfg.k)?.with_inertia(inertia);

    Ok(CgcOutput {
        resolution: res,
        grid: LabelGrid::new(face, fine)?,
        clustering,
        coarse_dims: (coarse[0], coarse[1], coarse[2]),
        matrix_shape: (matrix.rows(), matrix.cols()),
        seed,
    })
}

/// Standardizes one `(lat, lon, time)` part over valid cells and zero-fills masked cells.
fn prepare_variable(
    mut part: DenseTensor,
    valid: &[bool],
    standardize: bool,
) -> Result<DenseTensor> {
    let lanes = part.dims()[2];
    let data = part.data_mut();
    let cells = data.chunks_exact(lanes).zip(valid);
    let (mut sum, mut count) = (0.0, 0usize);
    for (lane, _) in cells.clone().filter(|(_, &ok)| ok) {
        sum += lane.iter().sum::<f64>();
        count += lane.len();
    }
    if count == 0 {
        return Err(Error::Parameter("every face cell is masked".into()));
    }
    let mean = sum / count as f64;
    let mut scale = 1.0;
    if standardize {
        let var = cells
            .filter(|(_, &ok)| ok)
            .flat_map(|(lane, _)| lane.iter())
            .map(|v| (v - mean) * (v - mean))
            .sum::<f64>()
            / count as f64;
        if var > 0.0 {
            scale = 1.0 / var.sqrt();
        }
    }
    for (lane, &ok) in data.chunks_exact_mut(lanes).zip(valid) {
        for v in lane.iter_mut() {
            *v = match (ok, standardize) {
                (false, true) => 0.0,
                (false, false) => mean,
                (true, true) => (*v - mean) * scale,
                (true, false) => *v,
            };
        }
    }
    Ok(part)
}

pub type SweepResults = BTreeMap<ResolutionPoint, Result<CgcOutput>>;

/// Runs [`cgc_masked`] at every lattice point in parallel on the current rayon pool.
/// Failures are kept per point.
pub fn cgc_sweep(
    t: &DenseTensor,
    mask: Option<&[bool]>,
    lattice: &[ResolutionPoint],
    cfg: &CgcConfig,
) -> SweepResults {
    lattice
        .par_iter()
        .map(|&res| (res, cgc_masked(t, mask, res, cfg)))
        .collect::<Vec<_>>()
        .into_iter()
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScaleAxis {
    Spatial,
    Temporal,
}

/// NMI between two resolution points one level apart on a single axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdjacentPair {
    pub from: ResolutionPoint,
    pub to: ResolutionPoint,
    pub axis: ScaleAxis,
    pub nmi: f64,
}

impl AdjacentPair {
    /// `l1_l2_l3-m1_m2_m3`.
    pub fn label(&self) -> String {
        format!("{}-{}", self.from.tag(), self.to.tag())
    }
}

/// Splits lattice keys into their spatial and temporal level sets, requiring an
/// isotropic full grid.
pub fn grid_levels<'a, I>(keys: I) -> Result<(Vec<u32>, Vec<u32>)>
where
    I: IntoIterator<Item = &'a ResolutionPoint>,
{
    let keys: BTreeSet<ResolutionPoint> = keys.into_iter().copied().collect();
    if let Some(bad) = keys.iter().find(|k| k.spatial.0 != k.spatial.1) {
        return Err(Error::Shape(format!(
            "resolution {bad} is not spatially isotropic"
        )));
    }
    let spatial: BTreeSet<u32> = keys.iter().map(|k| k.spatial.0).collect();
    let temporal: BTreeSet<u32> = keys.iter().map(|k| k.temporal).collect();
    if spatial.len() * temporal.len() != keys.len() {
        return Err(Error::Shape(format!(
            "{} resolutions do not fill a {}x{} spatial-temporal grid",
            keys.len(),
            spatial.len(),
            temporal.len()
        )));
    }
    Ok((
        spatial.into_iter().collect(),
        temporal.into_iter().collect(),
    ))
}

/// NMI for every pair of resolutions differing by one level in space (same time
/// level) or in time (same spatial level).
pub fn adjacent_nmi_report(
    ensemble: &BTreeMap<ResolutionPoint, Clustering>,
) -> Result<Vec<AdjacentPair>> {
    grid_levels(ensemble.keys())?;
    let mut pairs = Vec::new();
    for (&from, u) in ensemble {
        let (i, j) = (from.spatial.0, from.temporal);
        let neighbours = [
            (ResolutionPoint::new(i + 1, i + 1, j), ScaleAxis::Spatial),
            (ResolutionPoint::new(i, i, j + 1), ScaleAxis::Temporal),
        ];
        for (to, axis) in neighbours {
            if let Some(v) = ensemble.get(&to) {
                pairs.push(AdjacentPair {
                    from,
                    to,
                    axis,
                    nmi: nmi(u, v)?,
                });
            }
        }
    }
    Ok(pairs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clustering::kmeans;

    /// 8x8x8x1 tensor: left half 0.0, right half 1.0 at every time step.
    fn plateaus() -> DenseTensor {
        DenseTensor::from_fn(vec![8, 8, 8, 1], |ix| if ix[1] < 4 { 0.0 } else { 1.0 }).unwrap()
    }

    fn halves_truth(n1: usize, n2: usize) -> Vec<usize> {
        (0..n1 * n2)
            .map(|c| usize::from(c % n2 >= n2 / 2))
            .collect()
    }

    fn same_partition(a: &[usize], b: &[usize]) -> bool {
        let n = a.len();
        n == b.len() && (0..n).all(|i| (0..n).all(|j| (a[i] == a[j]) == (b[i] == b[j])))
    }

    #[test]
    fn plateaus_split_in_halves() {
        let t = plateaus();
        for res in [
            ResolutionPoint::new(1, 1, 1),
            ResolutionPoint::new(0, 0, 0),
            ResolutionPoint::new(2, 2, 1),
        ] {
            let out = cgc(&t, res, &CgcConfig::new(2, 7)).unwrap();
            assert!(
                same_partition(out.clustering.labels(), &halves_truth(8, 8)),
                "{res}"
            );
            assert_eq!(out.grid.dims(), (8, 8));
        }
    }

    #[test]
    fn size_contract() {
        let t = DenseTensor::from_fn(vec![9, 6, 8, 2], |ix| {
            (ix[0] * 3 + ix[1] + ix[2] * ix[3]) as f64
        })
        .unwrap();
        let mut cfg = CgcConfig::new(2, 1);
        cfg.families = [WaveletFamily::Haar; 3];
        let out = cgc(&t, ResolutionPoint::new(1, 2, 2), &cfg).unwrap();
        assert_eq!(out.coarse_dims, (5, 2, 2));
        assert_eq!(out.matrix_shape, (5 * 2, 2 * 2));
        cfg.families[2] = WaveletFamily::Db2;
        let out = cgc(&t, ResolutionPoint::new(1, 2, 2), &cfg).unwrap();
        // db2 length rule on time: 8 -> 5 -> 4
        assert_eq!(out.matrix_shape, (10, 2 * 4));
    }

    #[test]
    fn identity_resolution_is_plain_kmeans() {
        let t = DenseTensor::from_fn(vec![6, 5, 4, 3], |ix| {
            ((ix[0] * 31 + ix[1] * 17 + ix[2] * 7 + ix[3] * 3) % 11) as f64
        })
        .unwrap();
        let mut cfg = CgcConfig::new(4, 99);
        cfg.standardize = false;
        let res = ResolutionPoint::new(0, 0, 0);
        let out = cgc(&t, res, &cfg).unwrap();
        let parts: Vec<_> = (0..3).map(|v| t.slice_axis(3, v).unwrap()).collect();
        let raw = stack_and_vectorize(&parts, (0, 1)).unwrap();
        let direct = kmeans(&raw, 4, res.derive_seed(99), cfg.max_iter).unwrap();
        assert_eq!(out.clustering.labels(), direct.labels());
        assert_eq!(out.clustering.inertia(), direct.inertia());
    }

    #[test]
    fn k_equal_to_coarse_cells_gives_blocks() {
        let t = DenseTensor::from_fn(vec![8, 8, 4, 1], |ix| (ix[0] * 8 + ix[1]) as f64).unwrap();
        let res = ResolutionPoint::new(2, 2, 1);
        let out = cgc(&t, res, &CgcConfig::new(4, 3)).unwrap();
        for i in 0..8 {
            for j in 0..8 {
                assert_eq!(out.grid.get(i, j), out.grid.get(i & !3, j & !3));
            }
        }
        let mut distinct: Vec<i32> = out.grid.labels().to_vec();
        distinct.sort();
        distinct.dedup();
        assert_eq!(distinct, vec![0, 1, 2, 3]);
        assert!(matches!(
            cgc(&t, res, &CgcConfig::new(5, 3)),
            Err(Error::Parameter(_))
        ));
    }

    #[test]
    fn bad_inputs() {
        let t = plateaus();
        let mut cfg = CgcConfig::new(2, 0);
        cfg.variables = Some(vec![1]);
        assert!(matches!(
            cgc(&t, ResolutionPoint::new(1, 1, 1), &cfg),
            Err(Error::Parameter(_))
        ));
        cfg.variables = Some(vec![]);
        assert!(matches!(
            cgc(&t, ResolutionPoint::new(1, 1, 1), &cfg),
            Err(Error::Parameter(_))
        ));
        let cfg = CgcConfig::new(2, 0);
        assert!(matches!(
            cgc(&t, ResolutionPoint::new(4, 4, 1), &cfg),
            Err(Error::Length(_))
        ));
        let three = DenseTensor::from_vec(vec![2, 2, 2], vec![0.0; 8]).unwrap();
        assert!(matches!(
            cgc(&three, ResolutionPoint::new(0, 0, 0), &cfg),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn masked_cells_are_excluded() {
        let t = plateaus();
        let mut mask = vec![true; 64];
        // mask the whole first row and a 2x2 block on the right
        mask[..8].fill(false);
        for (i, j) in [(4, 6), (4, 7), (5, 6), (5, 7)] {
            mask[i * 8 + j] = false;
        }
        let out = cgc_masked(
            &t,
            Some(&mask),
            ResolutionPoint::new(1, 1, 1),
            &CgcConfig::new(2, 5),
        )
        .unwrap();
        for (c, &ok) in mask.iter().enumerate() {
            assert_eq!(out.grid.labels()[c] == MASKED, !ok);
        }
        assert_eq!(out.clustering.len(), 64 - 12);
        let truth: Vec<usize> = halves_truth(8, 8)
            .into_iter()
            .zip(&mask)
            .filter(|(_, &ok)| ok)
            .map(|(l, _)| l)
            .collect();
        assert!(same_partition(out.clustering.labels(), &truth));
    }

    #[test]
    fn seeds_depend_on_levels_only() {
        let a = ResolutionPoint::new(1, 1, 2);
        assert_eq!(
            a.derive_seed(5),
            ResolutionPoint::new(1, 1, 2).derive_seed(5)
        );
        assert_ne!(
            a.derive_seed(5),
            ResolutionPoint::new(1, 1, 3).derive_seed(5)
        );
        assert_ne!(a.derive_seed(5), a.derive_seed(6));
    }

    #[test]
    fn sweep_isolates_failures() {
        let t = plateaus();
        let cfg = CgcConfig::new(2, 11);
        let mut points = lattice(1..=2, 1..=2);
        points.push(ResolutionPoint::new(5, 5, 1));
        let results = cgc_sweep(&t, None, &points, &cfg);
        assert_eq!(results.len(), 5);
        assert_eq!(results.values().filter(|r| r.is_err()).count(), 1);
        for (res, r) in &results {
            if let Ok(out) = r {
                assert_eq!(out, &cgc(&t, *res, &cfg).unwrap());
            }
        }
        let single = cgc_sweep(&t, None, &[ResolutionPoint::new(1, 1, 1)], &cfg);
        assert_eq!(single.len(), 1);
    }

    #[test]
    fn paper_lattice_shape() {
        let l = lattice(1..=4, 1..=6);
        assert_eq!(l.len(), 24);
        assert!(l.iter().all(|r| r.spatial.0 == r.spatial.1));
    }

    fn toy_ensemble(
        spatial: std::ops::RangeInclusive<u32>,
        temporal: std::ops::RangeInclusive<u32>,
    ) -> BTreeMap<ResolutionPoint, Clustering> {
        lattice(spatial, temporal)
            .into_iter()
            .enumerate()
            .map(|(i, r)| {
                (
                    r,
                    Clustering::from_raw(&[0, 1, (i % 2) as u8, 1, 0]).unwrap(),
                )
            })
            .collect()
    }

    #[test]
    fn adjacent_pair_counts() {
        assert_eq!(
            adjacent_nmi_report(&toy_ensemble(1..=4, 1..=6))
                .unwrap()
                .len(),
            38
        );
        assert_eq!(
            adjacent_nmi_report(&toy_ensemble(1..=1, 1..=2))
                .unwrap()
                .len(),
            1
        );
        let pairs = adjacent_nmi_report(&toy_ensemble(1..=2, 3..=4)).unwrap();
        assert_eq!(pairs.len(), 4);
        assert_eq!(
            pairs
                .iter()
                .filter(|p| p.axis == ScaleAxis::Spatial)
                .count(),
            2
        );
        assert!(pairs.iter().all(|p| (0.0..=1.0).contains(&p.nmi)));
    }

    #[test]
    fn adjacent_requires_grid() {
        let mut e = toy_ensemble(1..=2, 1..=2);
        e.remove(&ResolutionPoint::new(2, 2, 2));
        assert!(matches!(adjacent_nmi_report(&e), Err(Error::Shape(_))));
        let mut e = toy_ensemble(1..=1, 1..=2);
        e.insert(
            ResolutionPoint::new(1, 2, 1),
            Clustering::from_raw(&[0, 0, 0, 0, 1]).unwrap(),
        );
        assert!(matches!(adjacent_nmi_report(&e), Err(Error::Shape(_))));
    }
}
