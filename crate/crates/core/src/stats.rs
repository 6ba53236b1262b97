//! Significance tests and dispersion summaries used in reporting.

use ndarray::{Array2, ArrayView2, Axis};

use crate::error::{Error, Result};
use crate::special::{kolmogorov_sf, student_t_two_sided};

/// Paired two-tailed t-test on `a − b`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TTest {
    pub t: f64,
    pub p_value: f64,
    pub df: usize,
    pub mean_diff: f64,
    /// Differences had zero variance; `t` is 0 (all equal) or ±∞.
    pub zero_variance: bool,
}

pub fn paired_t(a: &[f64], b: &[f64]) -> Result<TTest> {
    if a.len() != b.len() {
        return Err(Error::shape("paired samples", &[a.len()], &[b.len()]));
    }
    let n = a.len();
    if n < 2 {
        return Err(Error::InvalidArgument("paired t-test needs at least 2 pairs".into()));
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let mean = d.iter().sum::<f64>() / n as f64;
    let ss: f64 = d.iter().map(|v| (v - mean) * (v - mean)).sum();
    let df = n - 1;
    if ss == 0.0 {
        let (t, p) = if mean == 0.0 {
            (0.0, 1.0)
        } else {
            (mean.signum() * f64::INFINITY, 0.0)
        };
        return Ok(TTest {
            t,
            p_value: p,
            df,
            mean_diff: mean,
            zero_variance: true,
        });
    }
    let se = (ss / df as f64).sqrt() / (n as f64).sqrt();
    let t = mean / se;
    Ok(TTest {
        t,
        p_value: student_t_two_sided(t, df as f64),
        df,
        mean_diff: mean,
        zero_variance: false,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
    pub n1: usize,
    pub n2: usize,
}

/// Two-sample two-sided Kolmogorov–Smirnov test.
///
/// `D` is exact; the p-value uses the asymptotic Kolmogorov distribution at
/// `λ = (√nₑ + 0.12 + 0.11/√nₑ)·D` with `nₑ = n₁n₂/(n₁+n₂)`.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<KsResult> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptySample);
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(Error::Domain("KS samples must be finite".into()));
    }
    let mut xs = a.to_vec();
    let mut ys = b.to_vec();
    xs.sort_by(f64::total_cmp);
    ys.sort_by(f64::total_cmp);
    let (n1, n2) = (xs.len(), ys.len());
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < n1 && j < n2 {
        let v = xs[i].min(ys[j]);
        while i < n1 && xs[i] == v {
            i += 1;
        }
        while j < n2 && ys[j] == v {
            j += 1;
        }
        d = d.max((i as f64 / n1 as f64 - j as f64 / n2 as f64).abs());
    }
    let en = (n1 as f64 * n2 as f64 / (n1 + n2) as f64).sqrt();
    let p = kolmogorov_sf((en + 0.12 + 0.11 / en) * d);
    Ok(KsResult {
        statistic: d,
        p_value: p,
        n1,
        n2,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MadAxis {
    /// One value per column (feature).
    PerFeature,
    /// One value per row (image).
    PerImage,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MadSummary {
    pub axis: MadAxis,
    pub values: Vec<f64>,
}

fn mean_abs_dev(x: impl Iterator<Item = f64> + Clone) -> f64 {
    let n = x.clone().count() as f64;
    let mean = x.clone().sum::<f64>() / n;
    x.map(|v| (v - mean).abs()).sum::<f64>() / n
}

/// Mean absolute deviation from the mean along rows or columns.
pub fn mad(m: ArrayView2<'_, f64>, axis: MadAxis) -> Result<MadSummary> {
    let (rows, cols) = m.dim();
    let lane_axis = match axis {
        MadAxis::PerFeature => Axis(1),
        MadAxis::PerImage => Axis(0),
    };
    let lane_len = match axis {
        MadAxis::PerFeature => rows,
        MadAxis::PerImage => cols,
    };
    if lane_len == 0 {
        return Err(Error::shape("mad input", &[1, 1], &[rows, cols]));
    }
    let values = m
        .axis_iter(lane_axis)
        .map(|lane| mean_abs_dev(lane.iter().copied()))
        .collect();
    Ok(MadSummary { axis, values })
}

/// Per-condition standard errors after removing between-subject variance:
/// each row is shifted by `grand mean − row mean` before the usual
/// `sd / √n` is taken per column.
pub fn loftus_masson_se(m: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
    let (rows, cols) = m.dim();
    if rows < 2 || cols < 2 {
        return Err(Error::shape("subjects × conditions (need ≥ 2 × 2)", &[2, 2], &[rows, cols]));
    }
    let normalized = normalize_subjects(m);
    Ok(normalized
        .axis_iter(Axis(1))
        .map(|col| {
            let mean = col.sum() / rows as f64;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (rows - 1) as f64;
            (var / rows as f64).sqrt()
        })
        .collect())
}

/// `x − row mean + grand mean`.
pub fn normalize_subjects(m: ArrayView2<'_, f64>) -> Array2<f64> {
    let grand = m.mean().unwrap_or(0.0);
    let mut out = m.to_owned();
    for mut row in out.rows_mut() {
        let shift = grand - row.mean().unwrap_or(0.0);
        row.mapv_inplace(|v| v + shift);
    }
    out
}

/// Equal-width histogram over shared edges.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

/// Bins both samples over common equal-width edges spanning their union.
pub fn paired_histograms(a: &[f64], b: &[f64], bins: usize) -> (Histogram, Histogram) {
    let bins = bins.max(1);
    let all = a.iter().chain(b);
    let (mut lo, mut hi) = all.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(*v), hi.max(*v)));
    if !lo.is_finite() {
        lo = 0.0;
        hi = 1.0;
    } else if lo == hi {
        lo -= 0.5;
        hi += 0.5;
    }
    let width = (hi - lo) / bins as f64;
    let edges: Vec<f64> = (0..=bins).map(|i| lo + width * i as f64).collect();
    let count = |xs: &[f64]| {
        let mut c = vec![0; bins];
        for v in xs {
            let idx = (((v - lo) / width) as usize).min(bins - 1);
            c[idx] += 1;
        }
        c
    };
    (
        Histogram {
            edges: edges.clone(),
            counts: count(a),
        },
        Histogram {
            edges,
            counts: count(b),
        },
    )
}

/// One panel of the AIS distribution comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct HistogramPanel {
    pub name: &'static str,
    pub values_a: Vec<f64>,
    pub values_b: Vec<f64>,
    pub hist_a: Histogram,
    pub hist_b: Histogram,
    pub ks: KsResult,
    /// Entries dropped from each side (non-positive means on the log panel).
    pub excluded: (usize, usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct AisHistograms {
    pub log_feature_means: HistogramPanel,
    pub feature_mad: HistogramPanel,
    pub image_mad: HistogramPanel,
}

/// Compares two `[n × K]` image-level AIS matrices: log10 per-feature means
/// (positive means only), per-feature MAD and per-image MAD, each with a KS test.
pub fn ais_histograms(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>, bins: usize) -> Result<AisHistograms> {
    if a.dim() != b.dim() {
        return Err(Error::shape("AIS matrices", a.shape(), b.shape()));
    }
    if a.nrows() == 0 || a.ncols() == 0 {
        return Err(Error::EmptySample);
    }
    let log_means = |m: ArrayView2<'_, f64>| {
        let means = m.mean_axis(Axis(0)).expect("non-empty");
        let kept: Vec<f64> = means.iter().filter(|v| **v > 0.0).map(|v| v.log10()).collect();
        let dropped = means.len() - kept.len();
        (kept, dropped)
    };
    let panel = |name, va: Vec<f64>, vb: Vec<f64>, excluded| -> Result<HistogramPanel> {
        let ks = ks_two_sample(&va, &vb)?;
        let (hist_a, hist_b) = paired_histograms(&va, &vb, bins);
        Ok(HistogramPanel {
            name,
            values_a: va,
            values_b: vb,
            hist_a,
            hist_b,
            ks,
            excluded,
        })
    };
    let (la, xa) = log_means(a);
    let (lb, xb) = log_means(b);
    Ok(AisHistograms {
        log_feature_means: panel("log10_feature_mean", la, lb, (xa, xb))?,
        feature_mad: panel(
            "feature_mad",
            mad(a, MadAxis::PerFeature)?.values,
            mad(b, MadAxis::PerFeature)?.values,
            (0, 0),
        )?,
        image_mad: panel(
            "image_mad",
            mad(a, MadAxis::PerImage)?.values,
            mad(b, MadAxis::PerImage)?.values,
            (0, 0),
        )?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    #[test]
    fn identical_pairs_have_zero_variance() {
        let r = paired_t(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap();
        assert!(r.zero_variance);
        assert_eq!((r.t, r.p_value), (0.0, 1.0));
    }

    #[test]
    fn constant_shift_is_infinitely_significant() {
        let r = paired_t(&[2.0, 3.0, 4.0], &[1.0, 2.0, 3.0]).unwrap();
        assert!(r.zero_variance);
        assert_eq!((r.t, r.p_value), (f64::INFINITY, 0.0));
    }

    #[test]
    fn small_paired_example() {
        // d = [1, 1, 1, 2]: mean 1.25, sd 0.5, se 0.25 → t = 5 with 3 df
        let r = paired_t(&[1.0, 1.0, 1.0, 2.0], &[0.0; 4]).unwrap();
        assert_abs_diff_eq!(r.t, 5.0, epsilon = 1e-12);
        assert_eq!(r.df, 3);
        // A&S 26.7.3 closed form for odd df: 1 − (2/π)(θ + sinθ cosθ), θ = atan(t/√3)
        let th = (5.0f64 / 3f64.sqrt()).atan();
        let expect = 1.0 - 2.0 / std::f64::consts::PI * (th + th.sin() * th.cos());
        assert_abs_diff_eq!(r.p_value, expect, epsilon = 1e-12);
        assert_abs_diff_eq!(r.p_value, 0.015392, epsilon = 1e-5);
    }

    #[test]
    fn ks_reference_cases() {
        let same = ks_two_sample(&[1.0, 2.0, 3.0], &[3.0, 1.0, 2.0]).unwrap();
        assert_eq!((same.statistic, same.p_value), (0.0, 1.0));
        let apart = ks_two_sample(&[0.0, 0.0], &[1.0, 1.0]).unwrap();
        assert_eq!(apart.statistic, 1.0);
        assert!(matches!(ks_two_sample(&[], &[1.0]), Err(Error::EmptySample)));
    }

    #[test]
    fn mad_reference_cases() {
        let m = array![[0.0, 5.0], [2.0, 5.0]];
        assert_eq!(mad(m.view(), MadAxis::PerFeature).unwrap().values, vec![1.0, 0.0]);
        assert_eq!(mad(m.view(), MadAxis::PerImage).unwrap().values, vec![2.5, 1.5]);
    }

    #[test]
    fn loftus_masson_hand_example() {
        // row means 1.5 and 4, grand mean 2.75 → [[2.25, 3.25], [1.75, 3.75]]
        let m = array![[1.0, 2.0], [3.0, 5.0]];
        assert_eq!(normalize_subjects(m.view()), array![[2.25, 3.25], [1.75, 3.75]]);
        let se = loftus_masson_se(m.view()).unwrap();
        // column sd = √0.125, se = sd/√2 = 0.25
        assert_abs_diff_eq!(se[0], 0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(se[1], 0.25, epsilon = 1e-15);
    }

    #[test]
    fn loftus_masson_removes_row_offsets() {
        let m = array![[1.0, 4.0, 2.0], [11.0, 14.0, 12.0], [-3.0, 0.0, -2.0]];
        for se in loftus_masson_se(m.view()).unwrap() {
            assert_abs_diff_eq!(se, 0.0, epsilon = 1e-14);
        }
        let shifted = &m + 7.5;
        let a = loftus_masson_se(m.view()).unwrap();
        let b = loftus_masson_se(shifted.view()).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_abs_diff_eq!(x, y, epsilon = 1e-13);
        }
    }

    #[test]
    fn histograms_share_edges() {
        let (a, b) = paired_histograms(&[0.0, 0.5, 1.0], &[0.25, 2.0], 4);
        assert_eq!(a.edges, b.edges);
        assert_eq!(a.edges, vec![0.0, 0.5, 1.0, 1.5, 2.0]);
        assert_eq!(a.counts, vec![1, 1, 1, 0]);
        assert_eq!(b.counts, vec![1, 0, 0, 1]);
    }

    #[test]
    fn identical_ais_matrices_give_unit_p_values() {
        let m = array![[0.1, -0.2, 0.3], [0.2, 0.1, 0.05], [0.0, 0.4, 0.1]];
        let h = ais_histograms(m.view(), m.view(), 30).unwrap();
        for p in [&h.log_feature_means, &h.feature_mad, &h.image_mad] {
            assert_eq!(p.ks.p_value, 1.0);
        }
    }
}
