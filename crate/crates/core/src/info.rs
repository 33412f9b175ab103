//! Contingency tables, entropies and (normalized) mutual information between
//! clusterings. All logarithms are natural, so raw quantities are in nats.

use crate::clustering::Clustering;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Marginal {
    Rows,
    Cols,
}

/// Joint counts `n_ij = |U_i ∩ V_j|` with their marginals.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContingencyTable {
    n: usize,
    rows: usize,
    cols: usize,
    counts: Vec<usize>,
    row_sums: Vec<usize>,
    col_sums: Vec<usize>,
}

impl ContingencyTable {
    /// Builds the table from raw label slices, touching each point once.
    pub fn from_labels(u: &[usize], v: &[usize]) -> Result<Self> {
        if u.len() != v.len() {
            return Err(Error::Shape(format!(
                "label vectors of length {} and {}",
                u.len(),
                v.len()
            )));
        }
        let rows = u.iter().max().map_or(0, |m| m + 1);
        let cols = v.iter().max().map_or(0, |m| m + 1);
        let mut counts = vec![0usize; rows * cols];
        let mut row_sums = vec![0usize; rows];
        let mut col_sums = vec![0usize; cols];
        for (&a, &b) in u.iter().zip(v) {
            counts[a * cols + b] += 1;
            row_sums[a] += 1;
            col_sums[b] += 1;
        }
        Ok(Self {
            n: u.len(),
            rows,
            cols,
            counts,
            row_sums,
            col_sums,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn count(&self, i: usize, j: usize) -> usize {
        self.counts[i * self.cols + j]
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn row_sums(&self) -> &[usize] {
        &self.row_sums
    }

    pub fn col_sums(&self) -> &[usize] {
        &self.col_sums
    }
}

pub fn contingency(u: &Clustering, v: &Clustering) -> Result<ContingencyTable> {
    ContingencyTable::from_labels(u.labels(), v.labels())
}

/// Sums in ascending order so the result does not depend on label order.
fn ordered_sum(mut terms: Vec<f64>) -> f64 {
    terms.sort_by(f64::total_cmp);
    terms.into_iter().sum()
}

fn marginal_entropy(sizes: &[usize], n: usize) -> f64 {
    let n = n as f64;
    let terms = sizes
        .iter()
        .filter(|&&a| a > 0)
        .map(|&a| {
            let p = a as f64 / n;
            p * p.ln()
        })
        .collect();
    -ordered_sum(terms)
}

/// Entropy of the row or column marginal.
pub fn entropy(ct: &ContingencyTable, which: Marginal) -> f64 {
    if ct.n == 0 {
        return 0.0;
    }
    let h = match which {
        Marginal::Rows => marginal_entropy(&ct.row_sums, ct.n),
        Marginal::Cols => marginal_entropy(&ct.col_sums, ct.n),
    };
    // -0.0 for a single cluster
    h.max(0.0)
}

/// Conditional entropy `H(rows | cols)`.
pub fn conditional_entropy(ct: &ContingencyTable) -> f64 {
    let n = ct.n as f64;
    let mut h = 0.0;
    for i in 0..ct.rows {
        for j in 0..ct.cols {
            let nij = ct.count(i, j);
            if nij > 0 {
                h -= nij as f64 / n * (nij as f64 / ct.col_sums[j] as f64).ln();
            }
        }
    }
    h.max(0.0)
}

/// `I(U, V) = sum_ij (n_ij / n) ln(n n_ij / (a_i b_j))`, with `0 ln 0 = 0`.
///
/// Clamped at zero against rounding; the exact value is nonnegative.
pub fn mutual_information(ct: &ContingencyTable) -> f64 {
    if ct.n == 0 {
        return 0.0;
    }
    let n = ct.n as f64;
    let mut terms = Vec::new();
    for i in 0..ct.rows {
        let a = ct.row_sums[i] as f64;
        for j in 0..ct.cols {
            let nij = ct.count(i, j);
            if nij > 0 {
                let nij = nij as f64;
                terms.push(nij / n * (n * nij / (a * ct.col_sums[j] as f64)).ln());
            }
        }
    }
    ordered_sum(terms).max(0.0)
}

/// Normalized mutual information `2 I / (H(U) + H(V))` in `[0, 1]`.
///
/// Identical partitions (up to relabeling) give exactly 1, which also settles the
/// 0/0 case of two single-cluster labelings.
pub fn nmi(u: &Clustering, v: &Clustering) -> Result<f64> {
    nmi_labels(u.labels(), v.labels())
}

pub fn nmi_labels(u: &[usize], v: &[usize]) -> Result<f64> {
    let ct = ContingencyTable::from_labels(u, v)?;
    Ok(nmi_from_table(&ct))
}

pub fn nmi_from_table(ct: &ContingencyTable) -> f64 {
    let hu = entropy(ct, Marginal::Rows);
    let hv = entropy(ct, Marginal::Cols);
    if same_partition(ct) {
        return 1.0;
    }
    let denom = hu + hv;
    if denom == 0.0 {
        return 0.0;
    }
    let mi = mutual_information(ct);
    (2.0 * mi / denom).clamp(0.0, 1.0)
}

fn same_partition(ct: &ContingencyTable) -> bool {
    // every nonempty row meets exactly one nonempty column and vice versa
    let nonzero = ct.counts.iter().filter(|&&c| c > 0).count();
    let rows = ct.row_sums.iter().filter(|&&c| c > 0).count();
    let cols = ct.col_sums.iter().filter(|&&c| c > 0).count();
    nonzero == rows && nonzero == cols
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::LN_2;

    fn cl(labels: &[usize]) -> Clustering {
        Clustering::from_raw(labels).unwrap()
    }

    #[test]
    fn contingency_examples() {
        let ct = contingency(&cl(&[0, 0, 1, 1]), &cl(&[0, 0, 1, 1])).unwrap();
        assert_eq!(ct.counts(), &[2, 0, 0, 2]);
        let ct = contingency(&cl(&[0, 0, 1, 1]), &cl(&[0, 1, 0, 1])).unwrap();
        assert_eq!(ct.counts(), &[1, 1, 1, 1]);
        let ct = contingency(&cl(&[0, 0, 0, 0]), &cl(&[0, 1, 2, 3])).unwrap();
        assert_eq!(ct.shape(), (1, 4));
        assert_eq!(ct.counts(), &[1, 1, 1, 1]);
        assert_eq!(ct.row_sums(), &[4]);
        assert_eq!(ct.col_sums(), &[1, 1, 1, 1]);
        assert!(matches!(
            ContingencyTable::from_labels(&[0, 1], &[0]),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    #[allow(clippy::approx_constant)]
    fn entropy_examples() {
        let single = ContingencyTable::from_labels(&[0; 4], &[0; 4]).unwrap();
        assert_eq!(entropy(&single, Marginal::Rows), 0.0);
        let halves = ContingencyTable::from_labels(&[0, 0, 1, 1], &[0, 1, 2, 3]).unwrap();
        assert!((entropy(&halves, Marginal::Rows) - LN_2).abs() < 1e-15);
        assert!((entropy(&halves, Marginal::Rows) - 0.693147).abs() < 1e-6);
        assert!((entropy(&halves, Marginal::Cols) - 4f64.ln()).abs() < 1e-15);
        assert!((entropy(&halves, Marginal::Cols) - 1.386294).abs() < 1e-6);
    }

    #[test]
    fn mutual_information_examples() {
        let diag = ContingencyTable::from_labels(&[0, 0, 1, 1], &[0, 0, 1, 1]).unwrap();
        assert!((mutual_information(&diag) - LN_2).abs() < 1e-15);
        let indep = ContingencyTable::from_labels(&[0, 0, 1, 1], &[0, 1, 0, 1]).unwrap();
        assert_eq!(mutual_information(&indep), 0.0);
        let row = ContingencyTable::from_labels(&[0; 4], &[0, 1, 2, 3]).unwrap();
        assert_eq!(mutual_information(&row), 0.0);
    }

    #[test]
    fn mi_is_entropy_minus_conditional() {
        let ct =
            ContingencyTable::from_labels(&[0, 0, 1, 1, 2, 2, 2], &[0, 1, 1, 1, 0, 2, 2]).unwrap();
        let lhs = mutual_information(&ct);
        let rhs = entropy(&ct, Marginal::Rows) - conditional_entropy(&ct);
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn nmi_examples() {
        assert_eq!(nmi(&cl(&[0, 1, 1, 2]), &cl(&[5, 3, 3, 1])).unwrap(), 1.0);
        assert_eq!(nmi(&cl(&[0, 0, 1, 1]), &cl(&[0, 1, 0, 1])).unwrap(), 0.0);

        // counts [[2,0],[1,1]]: hand evaluation of the three closed forms
        let n = 4.0f64;
        let i_uv = 2.0 / n * (n * 2.0 / (2.0 * 3.0)).ln()
            + 1.0 / n * (n * 1.0 / (2.0 * 3.0)).ln()
            + 1.0 / n * (n * 1.0 / (2.0 * 1.0)).ln();
        let h_u = LN_2;
        let h_v = -(0.75f64 * 0.75f64.ln() + 0.25 * 0.25f64.ln());
        let oracle = 2.0 * i_uv / (h_u + h_v);
        let got = nmi(&cl(&[0, 0, 1, 1]), &cl(&[0, 0, 0, 1])).unwrap();
        assert!((got - oracle).abs() < 1e-15);
        // pinned regression value (also matches scikit-learn arithmetic-mean NMI)
        assert!((got - 0.343_711_018_485_450_8).abs() < 1e-12, "{got}");
    }

    #[test]
    fn nmi_degenerate_single_clusters() {
        assert_eq!(nmi_labels(&[0, 0, 0], &[4, 4, 4]).unwrap(), 1.0);
        // single cluster against a split: entropies sum positive, I = 0
        assert_eq!(nmi_labels(&[0, 0, 0], &[0, 1, 0]).unwrap(), 0.0);
    }
}
