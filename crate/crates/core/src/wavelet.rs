//! Discrete wavelet filter banks (Haar, Daubechies-2) and the separable
//! multi-axis transform used for coarse-graining.
//!
//! Boundary handling is half-point symmetric extension
//! (`x[-1] = x[0]`, `x[n] = x[n-1]`). One analysis step maps a signal of length
//! `n` to `floor((n + taps - 1) / 2)` approximation and detail coefficients, i.e.
//! `ceil(n / 2)` for Haar and `ceil((n + 2) / 2)` for db2. Output sample `o`
//! correlates the filter with the extended signal starting at `2o + 2 - taps`:
//!
//! ```text
//! approx[o] = sum_k lowpass[k]  * x[2o + 2 - taps + k]
//! detail[o] = sum_k highpass[k] * x[2o + 2 - taps + k]
//! ```
//!
//! The same alignment drives [`coarse_index_map`], which sends each fine sample to
//! the coarse sample that weights it most heavily.

use std::f64::consts::{FRAC_1_SQRT_2, SQRT_2};

use serde::{Deserialize, Serialize};

use crate::clustering::LabelGrid;
use crate::error::{Error, Result};
use crate::tensor::DenseTensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WaveletFamily {
    Haar,
    #[serde(alias = "daubechies2")]
    Db2,
}

impl WaveletFamily {
    pub fn name(self) -> &'static str {
        match self {
            WaveletFamily::Haar => "haar",
            WaveletFamily::Db2 => "db2",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        match name.to_ascii_lowercase().as_str() {
            "haar" | "db1" => Ok(WaveletFamily::Haar),
            "db2" | "daubechies2" => Ok(WaveletFamily::Db2),
            other => Err(Error::Parameter(format!(
                "unknown wavelet family '{other}'"
            ))),
        }
    }

    pub fn taps(self) -> usize {
        match self {
            WaveletFamily::Haar => 2,
            WaveletFamily::Db2 => 4,
        }
    }

    /// Decomposition low-pass (scaling) filter.
    pub fn lowpass(self) -> Vec<f64> {
        match self {
            WaveletFamily::Haar => vec![FRAC_1_SQRT_2, FRAC_1_SQRT_2],
            WaveletFamily::Db2 => {
                let s3 = 3f64.sqrt();
                let d = 4.0 * SQRT_2;
                vec![
                    (1.0 + s3) / d,
                    (3.0 + s3) / d,
                    (3.0 - s3) / d,
                    (1.0 - s3) / d,
                ]
            }
        }
    }

    /// Decomposition high-pass filter, the quadrature mirror `g[k] = (-1)^k h[taps-1-k]`.
    pub fn highpass(self) -> Vec<f64> {
        let h = self.lowpass();
        let n = h.len();
        (0..n)
            .map(|k| {
                if k % 2 == 0 {
                    h[n - 1 - k]
                } else {
                    -h[n - 1 - k]
                }
            })
            .collect()
    }

    /// Length of one analysis step's output for an input of length `n`.
    pub fn output_len(self, n: usize) -> usize {
        (n + self.taps() - 1) / 2
    }
}

/// Wavelet family and decomposition depth for one axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AxisWavelet {
    pub family: WaveletFamily,
    pub levels: u32,
}

impl AxisWavelet {
    pub fn new(family: WaveletFamily, levels: u32) -> Self {
        Self { family, levels }
    }

    /// Axis length after `levels` analysis steps.
    pub fn output_len(&self, n: usize) -> usize {
        (0..self.levels).fold(n, |len, _| self.family.output_len(len))
    }

    pub fn check(&self, n: usize) -> Result<()> {
        if self.levels >= usize::BITS || (1usize << self.levels) > n {
            return Err(Error::Length(format!(
                "{} levels of {} exceed axis length {n}",
                self.levels,
                self.family.name()
            )));
        }
        let mut len = n;
        for level in 0..self.levels {
            if len < self.family.taps() {
                return Err(Error::Length(format!(
                    "level {} of {} needs {} samples, have {len}",
                    level + 1,
                    self.family.name(),
                    self.family.taps()
                )));
            }
            len = self.family.output_len(len);
        }
        Ok(())
    }
}

/// One [`AxisWavelet`] per tensor axis.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WaveletSpec {
    pub per_axis: Vec<AxisWavelet>,
}

impl WaveletSpec {
    pub fn new(per_axis: Vec<AxisWavelet>) -> Self {
        Self { per_axis }
    }

    pub fn output_dims(&self, dims: &[usize]) -> Result<Vec<usize>> {
        if dims.len() != self.per_axis.len() {
            return Err(Error::Shape(format!(
                "wavelet spec has {} axes, tensor has {}",
                self.per_axis.len(),
                dims.len()
            )));
        }
        dims.iter()
            .zip(&self.per_axis)
            .map(|(&n, w)| w.check(n).map(|_| w.output_len(n)))
            .collect()
    }
}

#[inline]
fn symmetric_index(i: isize, n: usize) -> usize {
    let period = 2 * n as isize;
    let m = i.rem_euclid(period) as usize;
    if m < n {
        m
    } else {
        2 * n - 1 - m
    }
}

fn analyze(signal: &[f64], filter: &[f64], out: &mut [f64]) {
    let n = signal.len();
    let taps = filter.len() as isize;
    for (o, slot) in out.iter_mut().enumerate() {
        let start = 2 * o as isize + 2 - taps;
        let mut acc = 0.0;
        for (k, &h) in filter.iter().enumerate() {
            let idx = start + k as isize;
            let x = if idx >= 0 && (idx as usize) < n {
                signal[idx as usize]
            } else {
                signal[symmetric_index(idx, n)]
            };
            acc += h * x;
        }
        *slot = acc;
    }
}

fn check_signal(len: usize, family: WaveletFamily) -> Result<()> {
    if len < family.taps() {
        return Err(Error::Length(format!(
            "signal of length {len} is shorter than the {}-tap {} filter",
            family.taps(),
            family.name()
        )));
    }
    Ok(())
}

/// Single-level DWT returning `(approx, detail)`.
pub fn dwt1d(signal: &[f64], family: WaveletFamily) -> Result<(Vec<f64>, Vec<f64>)> {
    check_signal(signal.len(), family)?;
    let m = family.output_len(signal.len());
    let mut approx = vec![0.0; m];
    let mut detail = vec![0.0; m];
    analyze(signal, &family.lowpass(), &mut approx);
    analyze(signal, &family.highpass(), &mut detail);
    Ok((approx, detail))
}

/// Approximation coefficients after `levels` analysis steps; details are dropped.
pub fn dwt1d_multilevel(signal: &[f64], family: WaveletFamily, levels: u32) -> Result<Vec<f64>> {
    AxisWavelet::new(family, levels).check(signal.len())?;
    let lowpass = family.lowpass();
    let mut current = signal.to_vec();
    for _ in 0..levels {
        let mut next = vec![0.0; family.output_len(current.len())];
        analyze(&current, &lowpass, &mut next);
        current = next;
    }
    Ok(current)
}

/// Full multilevel decomposition with details kept.
#[derive(Debug, Clone, PartialEq)]
pub struct Decomposition {
    pub approx: Vec<f64>,
    /// Detail bands, coarsest first.
    pub details: Vec<Vec<f64>>,
}

/// Like [`dwt1d_multilevel`] but retains every detail band; used for inspection and tests.
pub fn wavedec(signal: &[f64], family: WaveletFamily, levels: u32) -> Result<Decomposition> {
    AxisWavelet::new(family, levels).check(signal.len())?;
    let mut approx = signal.to_vec();
    let mut details = Vec::with_capacity(levels as usize);
    for _ in 0..levels {
        let (a, d) = dwt1d(&approx, family)?;
        approx = a;
        details.push(d);
    }
    details.reverse();
    Ok(Decomposition { approx, details })
}

/// Applies [`dwt1d_multilevel`] along every axis in order 0, 1, 2, ...
pub fn dwt_separable(t: &DenseTensor, spec: &WaveletSpec) -> Result<DenseTensor> {
    spec.output_dims(t.dims())?;
    let mut current = t.clone();
    for (axis, w) in spec.per_axis.iter().enumerate() {
        current = dwt_axis(&current, axis, *w)?;
    }
    Ok(current)
}

/// Multilevel approximation along a single axis.
pub fn dwt_axis(t: &DenseTensor, axis: usize, w: AxisWavelet) -> Result<DenseTensor> {
    let n = *t
        .dims()
        .get(axis)
        .ok_or_else(|| Error::Bounds(format!("axis {axis} on a {}-way tensor", t.ndim())))?;
    if w.levels == 0 {
        return Ok(t.clone());
    }
    w.check(n)?;
    let lowpass = w.family.lowpass();
    let out_len = w.output_len(n);
    let mut scratch = Vec::with_capacity(n);
    t.map_lanes(axis, out_len, |lane, out| {
        scratch.clear();
        scratch.extend_from_slice(lane);
        for _ in 0..w.levels {
            let mut next = vec![0.0; w.family.output_len(scratch.len())];
            analyze(&scratch, &lowpass, &mut next);
            scratch = next;
        }
        out.copy_from_slice(&scratch);
        Ok(())
    })
}

/// For each fine sample on an axis of length `n`, the coarse sample after
/// `w.levels` steps whose low-pass filter weights it most (ties to the lower index).
///
/// For Haar this is `i >> levels`.
pub fn coarse_index_map(n: usize, w: AxisWavelet) -> Result<Vec<usize>> {
    w.check(n)?;
    let taps = w.family.taps();
    let weights: Vec<f64> = w.family.lowpass().iter().map(|h| h.abs()).collect();
    let mut map: Vec<usize> = (0..n).collect();
    let mut len = n;
    for _ in 0..w.levels {
        let out_len = w.family.output_len(len);
        let step: Vec<usize> = (0..len)
            .map(|i| {
                let mut best: Option<(usize, f64)> = None;
                // k = i + taps - 2 - 2o must lie in [0, taps)
                let hi = (i + taps - 2) / 2;
                let lo = (i + taps - 2).saturating_sub(taps - 1).div_ceil(2);
                for o in lo..=hi.min(out_len - 1) {
                    let k = i + taps - 2 - 2 * o;
                    if k >= taps {
                        continue;
                    }
                    let weight = weights[k];
                    if best.is_none_or(|(_, bw)| weight > bw) {
                        best = Some((o, weight));
                    }
                }
                best.map(|(o, _)| o)
                    .expect("every fine sample has a covering coarse sample")
            })
            .collect();
        for m in map.iter_mut() {
            *m = step[*m];
        }
        len = out_len;
    }
    Ok(map)
}

/// Propagates labels from a coarse face back to the fine face `fine_dims`.
///
/// Each fine cell takes the label of the coarse cell chosen by [`coarse_index_map`]
/// on both axes; for Haar this is block replication over `2^l1 x 2^l2` blocks.
pub fn upsample_labels(
    coarse: &LabelGrid,
    fine_dims: (usize, usize),
    spatial: [AxisWavelet; 2],
) -> Result<LabelGrid> {
    let expected = (
        spatial[0].output_len(fine_dims.0),
        spatial[1].output_len(fine_dims.1),
    );
    if coarse.dims() != expected {
        return Err(Error::Shape(format!(
            "coarse grid {:?} does not match {:?} reduced by levels ({}, {}), expected {:?}",
            coarse.dims(),
            fine_dims,
            spatial[0].levels,
            spatial[1].levels,
            expected
        )));
    }
    let rows = coarse_index_map(fine_dims.0, spatial[0])?;
    let cols = coarse_index_map(fine_dims.1, spatial[1])?;
    let mut labels = Vec::with_capacity(fine_dims.0 * fine_dims.1);
    for &r in &rows {
        for &c in &cols {
            labels.push(coarse.get(r, c));
        }
    }
    LabelGrid::new(fine_dims, labels)
}
