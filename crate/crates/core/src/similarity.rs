//! Correlation kernels, condensed pairwise-similarity vectors and the
//! second-order isomorphism between a model and human judgments.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, ArrayView2};
use rayon::prelude::*;

use crate::error::{Error, Result};

/// A correlation value plus whether it was forced to zero because one input
/// had no variance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Corr {
    pub value: f64,
    pub degenerate: bool,
}

impl Corr {
    fn ok(value: f64) -> Self {
        Corr {
            value: value.clamp(-1.0, 1.0),
            degenerate: false,
        }
    }

    fn degenerate() -> Self {
        Corr {
            value: 0.0,
            degenerate: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Metric {
    Spearman,
    Pearson,
    Cosine,
}

impl FromStr for Metric {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "spearman" => Ok(Metric::Spearman),
            "pearson" => Ok(Metric::Pearson),
            "cosine" => Ok(Metric::Cosine),
            other => Err(format!("unknown metric {other:?}")),
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Metric::Spearman => "spearman",
            Metric::Pearson => "pearson",
            Metric::Cosine => "cosine",
        })
    }
}

/// Index of pair `(i, j)`, `i < j < n`, in the row-major strict upper triangle.
pub fn condensed_index(i: usize, j: usize, n: usize) -> Result<usize> {
    if i >= j || j >= n {
        return Err(Error::Order { i, j, n });
    }
    Ok(i * n - i * (i + 1) / 2 + (j - i - 1))
}

/// Number of unordered pairs among `n` items.
pub fn pair_count(n: usize) -> usize {
    n * n.saturating_sub(1) / 2
}

/// Iterates `(i, j)` pairs in condensed order.
pub fn pairs(n: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..n).flat_map(move |i| ((i + 1)..n).map(move |j| (i, j)))
}

/// Strict upper triangle of a symmetric pairwise matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CondensedSimVector {
    n: usize,
    values: Vec<f64>,
}

impl CondensedSimVector {
    pub fn new(n: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != pair_count(n) {
            return Err(Error::shape("condensed vector", &[pair_count(n)], &[values.len()]));
        }
        Ok(CondensedSimVector { n, values })
    }

    pub fn from_square(m: &Array2<f64>) -> Self {
        let n = m.nrows();
        let values = pairs(n).map(|(i, j)| m[[i, j]]).collect();
        CondensedSimVector { n, values }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, i: usize, j: usize) -> Result<f64> {
        Ok(self.values[condensed_index(i, j, self.n)?])
    }
}

/// Selection of condensed entries, e.g. a cross-validation training split.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairMask {
    selected: Vec<bool>,
}

impl PairMask {
    pub fn new(selected: Vec<bool>) -> Result<Self> {
        let count = selected.iter().filter(|s| **s).count();
        if count < 3 {
            return Err(Error::MaskTooSmall { selected: count });
        }
        Ok(PairMask { selected })
    }

    pub fn all(len: usize) -> Result<Self> {
        Self::new(vec![true; len])
    }

    /// Mask selecting exactly `indices`.
    pub fn from_indices(len: usize, indices: &[usize]) -> Result<Self> {
        let mut selected = vec![false; len];
        for &i in indices {
            if i >= len {
                return Err(Error::InvalidMask(format!("index {i} outside 0..{len}")));
            }
            selected[i] = true;
        }
        Self::new(selected)
    }

    pub fn selected(&self) -> &[bool] {
        &self.selected
    }

    pub fn len(&self) -> usize {
        self.selected.len()
    }

    pub fn is_empty(&self) -> bool {
        self.selected.is_empty()
    }

    pub fn count(&self) -> usize {
        self.selected.iter().filter(|s| **s).count()
    }

    /// Values at the selected positions, in order.
    pub fn gather(&self, values: &[f64]) -> Vec<f64> {
        values
            .iter()
            .zip(&self.selected)
            .filter_map(|(v, s)| s.then_some(*v))
            .collect()
    }
}

fn check_lengths(x: &[f64], y: &[f64]) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::shape("correlation inputs", &[x.len()], &[y.len()]));
    }
    Ok(())
}

/// Fractional ranks (1-based); tied values share the mean of their ranks.
pub fn average_ranks(x: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && x[order[end]] == x[order[start]] {
            end += 1;
        }
        // ranks start+1 ..= end share their mean
        let rank = (start + end + 1) as f64 / 2.0;
        for &idx in &order[start..end] {
            ranks[idx] = rank;
        }
        start = end;
    }
    ranks
}

fn centered(x: &[f64]) -> (Vec<f64>, f64) {
    let mean = x.iter().sum::<f64>() / x.len() as f64;
    let d: Vec<f64> = x.iter().map(|v| v - mean).collect();
    let ss = d.iter().map(|v| v * v).sum::<f64>();
    (d, ss)
}

fn pearson_unchecked(x: &[f64], y: &[f64]) -> Corr {
    let (dx, sx) = centered(x);
    let (dy, sy) = centered(y);
    if sx == 0.0 || sy == 0.0 {
        return Corr::degenerate();
    }
    let sxy: f64 = dx.iter().zip(&dy).map(|(a, b)| a * b).sum();
    Corr::ok(sxy / (sx * sy).sqrt())
}

pub fn pearson(x: &[f64], y: &[f64]) -> Result<Corr> {
    check_lengths(x, y)?;
    if x.len() < 2 {
        return Err(Error::InvalidArgument("pearson needs at least 2 values".into()));
    }
    Ok(pearson_unchecked(x, y))
}

/// Pearson correlation of average ranks.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<Corr> {
    check_lengths(x, y)?;
    if x.len() < 3 {
        return Err(Error::InvalidArgument("spearman needs at least 3 values".into()));
    }
    Ok(pearson_unchecked(&average_ranks(x), &average_ranks(y)))
}

pub fn cosine(x: &[f64], y: &[f64]) -> Result<f64> {
    check_lengths(x, y)?;
    let nx = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    let ny = y.iter().map(|v| v * v).sum::<f64>().sqrt();
    if nx == 0.0 || ny == 0.0 {
        return Err(Error::ZeroVector);
    }
    let dot: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    Ok((dot / (nx * ny)).clamp(-1.0, 1.0))
}

/// Row-wise statistics reused across every pair a row takes part in.
struct Prepared {
    rows: Vec<Vec<f64>>,
    norms: Vec<f64>,
}

impl Prepared {
    fn new(e: ArrayView2<'_, f64>, metric: Metric) -> Self {
        let rows: Vec<Vec<f64>> = e
            .rows()
            .into_iter()
            .map(|r| {
                let r: Vec<f64> = r.iter().copied().collect();
                match metric {
                    Metric::Spearman => centered(&average_ranks(&r)).0,
                    Metric::Pearson => centered(&r).0,
                    Metric::Cosine => r,
                }
            })
            .collect();
        let norms = rows
            .iter()
            .map(|r| r.iter().map(|v| v * v).sum::<f64>().sqrt())
            .collect();
        Prepared { rows, norms }
    }

    fn pair(&self, i: usize, j: usize, metric: Metric) -> Result<f64> {
        let (ni, nj) = (self.norms[i], self.norms[j]);
        if ni == 0.0 || nj == 0.0 {
            return match metric {
                Metric::Cosine => Err(Error::Pair {
                    i,
                    j,
                    source: Box::new(Error::ZeroVector),
                }),
                _ => Ok(0.0),
            };
        }
        let dot: f64 = self.rows[i].iter().zip(&self.rows[j]).map(|(a, b)| a * b).sum();
        Ok((dot / (ni * nj)).clamp(-1.0, 1.0))
    }
}

/// Similarity of every row pair of an `[n × d]` embedding matrix.
///
/// Constant rows give 0 under the correlation metrics; an all-zero row is an
/// error under cosine. Output is identical for any rayon pool size.
pub fn pairwise_similarity(e: ArrayView2<'_, f64>, metric: Metric) -> Result<CondensedSimVector> {
    let (n, d) = e.dim();
    if n < 2 || d < 2 {
        return Err(Error::shape("embedding matrix (need n ≥ 2, d ≥ 2)", &[2, 2], &[n, d]));
    }
    let prep = Prepared::new(e, metric);
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| ((i + 1)..n).map(|j| prep.pair(i, j, metric)).collect::<Result<Vec<_>>>())
        .collect::<Result<_>>()?;
    Ok(CondensedSimVector {
        n,
        values: rows.concat(),
    })
}

/// Similarity of one row against every row of `others` (skipping `skip`).
pub(crate) fn row_similarities(
    row: &[f64],
    others: ArrayView2<'_, f64>,
    skip: usize,
    metric: Metric,
) -> Result<Vec<f64>> {
    others
        .rows()
        .into_iter()
        .enumerate()
        .filter(|(u, _)| *u != skip)
        .map(|(u, other)| {
            let other: Vec<f64> = other.iter().copied().collect();
            let v = match metric {
                Metric::Spearman => spearman(row, &other)?.value,
                Metric::Pearson => pearson(row, &other)?.value,
                Metric::Cosine => cosine(row, &other).map_err(|e| Error::Pair {
                    i: skip.min(u),
                    j: skip.max(u),
                    source: Box::new(e),
                })?,
            };
            Ok(v)
        })
        .collect()
}

/// Second-order isomorphism: Spearman between model and human condensed
/// vectors, restricted to `mask` when given.
pub fn soi(zu: &CondensedSimVector, hu: &CondensedSimVector, mask: Option<&PairMask>) -> Result<Corr> {
    soi_values(zu.values(), hu.values(), mask)
}

pub(crate) fn soi_values(z: &[f64], h: &[f64], mask: Option<&PairMask>) -> Result<Corr> {
    check_lengths(z, h)?;
    match mask {
        None => {
            if z.len() < 3 {
                return Err(Error::MaskTooSmall { selected: z.len() });
            }
            spearman(z, h)
        }
        Some(m) => {
            if m.len() != z.len() {
                return Err(Error::shape("pair mask", &[z.len()], &[m.len()]));
            }
            let count = m.count();
            if count < 3 {
                return Err(Error::MaskTooSmall { selected: count });
            }
            spearman(&m.gather(z), &m.gather(h))
        }
    }
}

/// Shannon entropy in nats; the input is renormalized when its sum is within
/// 1e-5 of one.
pub fn entropy(p: &[f64]) -> Result<f64> {
    if let Some(v) = p.iter().find(|v| **v < 0.0 || !v.is_finite()) {
        return Err(Error::Domain(format!("probability {v} is negative or not finite")));
    }
    let sum: f64 = p.iter().sum();
    if (sum - 1.0).abs() > 1e-5 {
        return Err(Error::Domain(format!("probabilities sum to {sum}")));
    }
    Ok(-p
        .iter()
        .filter(|v| **v > 0.0)
        .map(|v| {
            let q = v / sum;
            q * q.ln()
        })
        .sum::<f64>())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    #[test]
    fn condensed_index_corners() {
        assert_eq!(condensed_index(0, 1, 4).unwrap(), 0);
        assert_eq!(condensed_index(2, 3, 4).unwrap(), 5);
        assert!(matches!(condensed_index(2, 2, 4), Err(Error::Order { .. })));
        assert!(matches!(condensed_index(3, 1, 4), Err(Error::Order { .. })));
    }

    #[test]
    fn condensed_index_is_a_bijection() {
        let n = 10;
        let mut seen = vec![false; pair_count(n)];
        for i in 0..n {
            for j in (i + 1)..n {
                let k = condensed_index(i, j, n).unwrap();
                assert!(!seen[k]);
                seen[k] = true;
            }
        }
        assert!(seen.iter().all(|s| *s));
        assert_eq!(seen.len(), 45);
    }

    #[test]
    fn average_ranks_split_ties() {
        assert_eq!(average_ranks(&[1.0, 2.0, 2.0, 4.0]), vec![1.0, 2.5, 2.5, 4.0]);
        assert_eq!(average_ranks(&[3.0, 3.0, 3.0]), vec![2.0, 2.0, 2.0]);
    }

    #[test]
    fn spearman_reference_cases() {
        let x = [1.0, 2.0, 3.0, 5.0];
        assert_eq!(spearman(&x, &x).unwrap().value, 1.0);
        let rev = [4.0, 3.0, 2.0, 1.0];
        assert_abs_diff_eq!(spearman(&x, &rev).unwrap().value, -1.0, epsilon = 1e-15);
        let c = spearman(&x, &[2.0; 4]).unwrap();
        assert!(c.degenerate);
        assert_eq!(c.value, 0.0);
        assert!(spearman(&x, &[1.0]).is_err());
    }

    #[test]
    fn pearson_reference_cases() {
        let y = [0.3, -1.0, 2.5, 7.0];
        let x: Vec<f64> = y.iter().map(|v| 2.0 * v + 3.0).collect();
        assert_abs_diff_eq!(pearson(&x, &y).unwrap().value, 1.0, epsilon = 1e-15);
        assert_eq!(pearson(&[1.0, 0.0], &[0.0, 1.0]).unwrap().value, -1.0);
    }

    #[test]
    fn cosine_reference_cases() {
        assert_abs_diff_eq!(cosine(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]).unwrap(), 0.9746318461970762, epsilon = 1e-15);
        assert_eq!(cosine(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert!(matches!(cosine(&[0.0, 0.0], &[1.0, 1.0]), Err(Error::ZeroVector)));
    }

    #[test]
    fn identical_rows_have_similarity_one() {
        let e = array![[1.0, 2.0, 3.0], [1.0, 2.0, 3.0], [0.0, 5.0, 1.0]];
        for metric in [Metric::Spearman, Metric::Pearson, Metric::Cosine] {
            let z = pairwise_similarity(e.view(), metric).unwrap();
            assert_abs_diff_eq!(z.get(0, 1).unwrap(), 1.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn zero_row_is_annotated_under_cosine() {
        let e = array![[1.0, 2.0], [0.0, 0.0], [3.0, 1.0]];
        match pairwise_similarity(e.view(), Metric::Cosine) {
            Err(Error::Pair { i: 0, j: 1, source }) => assert!(matches!(*source, Error::ZeroVector)),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn soi_masks() {
        let z = CondensedSimVector::new(3, vec![0.1, 0.5, 0.9]).unwrap();
        assert_eq!(soi(&z, &z, None).unwrap().value, 1.0);
        let h = CondensedSimVector::new(4, vec![3.0, 1.0, 2.0, 8.0, 9.0, 10.0]).unwrap();
        let z4 = CondensedSimVector::new(4, vec![0.0, 5.0, 1.0, 2.0, 3.0, 4.0]).unwrap();
        let m = PairMask::from_indices(6, &[3, 4, 5]).unwrap();
        assert_eq!(soi(&z4, &h, Some(&m)).unwrap().value, 1.0);
        assert!(matches!(PairMask::from_indices(6, &[0, 1]), Err(Error::MaskTooSmall { selected: 2 })));
        let all = PairMask::all(6).unwrap();
        assert_eq!(soi(&z4, &h, Some(&all)).unwrap(), soi(&z4, &h, None).unwrap());
    }

    #[test]
    fn entropy_reference_cases() {
        assert_eq!(entropy(&[0.0, 1.0, 0.0]).unwrap(), 0.0);
        assert_abs_diff_eq!(entropy(&[0.25; 4]).unwrap(), 4f64.ln(), epsilon = 1e-15);
        // -(0.5 ln 0.5 + 2 · 0.25 ln 0.25) = 1.5 ln 2
        assert_abs_diff_eq!(entropy(&[0.5, 0.25, 0.25]).unwrap(), 1.0397207708399179, epsilon = 1e-15);
        assert!(matches!(entropy(&[1.2, -0.2]), Err(Error::Domain(_))));
    }
}
