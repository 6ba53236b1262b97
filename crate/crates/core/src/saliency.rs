//! Percentile binarization, precision-recall curves and relative risk between
//! AIS heatmaps and external saliency maps.

use std::fmt;

use ndarray::{Array2, ArrayView2, Zip};

use crate::error::{Error, Result};

pub const TARGET_PERCENTILES: [f64; 4] = [60.0, 70.0, 80.0, 90.0];
pub const RR_LEVELS: [f64; 3] = [5.0, 10.0, 15.0];

/// Predictor thresholds 1, 3, …, 99.
pub fn predictor_percentiles() -> impl Iterator<Item = f64> {
    (0..50).map(|i| (1 + 2 * i) as f64)
}

/// Linear-interpolation percentile of `values` (`p` in `[0, 100]`).
pub fn percentile(values: &[f64], p: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::EmptySample);
    }
    if !(0.0..=100.0).contains(&p) {
        return Err(Error::InvalidArgument(format!("percentile {p} outside [0, 100]")));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(percentile_sorted(&sorted, p))
}

fn percentile_sorted(sorted: &[f64], p: f64) -> f64 {
    let pos = p / 100.0 * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, PartialEq)]
pub struct BinaryMask {
    pub pixels: Array2<bool>,
    pub source_percentile: f64,
    pub threshold: f64,
}

impl BinaryMask {
    pub fn count(&self) -> usize {
        self.pixels.iter().filter(|p| **p).count()
    }
}

/// Sorted copy of a map, validated once and reused across thresholds.
struct SortedMap<'a> {
    map: ArrayView2<'a, f64>,
    sorted: Vec<f64>,
}

impl<'a> SortedMap<'a> {
    fn new(map: ArrayView2<'a, f64>) -> Result<Self> {
        if map.is_empty() {
            return Err(Error::EmptySample);
        }
        if map.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("map contains non-finite values".into()));
        }
        let mut sorted: Vec<f64> = map.iter().copied().collect();
        sorted.sort_by(f64::total_cmp);
        if sorted[0] == sorted[sorted.len() - 1] {
            return Err(Error::DegenerateMap);
        }
        Ok(SortedMap { map, sorted })
    }

    fn binarize(&self, p: f64) -> Result<BinaryMask> {
        if !(p > 0.0 && p < 100.0) {
            return Err(Error::InvalidArgument(format!("percentile {p} outside (0, 100)")));
        }
        let threshold = percentile_sorted(&self.sorted, p);
        Ok(BinaryMask {
            pixels: self.map.mapv(|v| v > threshold),
            source_percentile: p,
            threshold,
        })
    }
}

/// Pixels strictly above the map's `p`-th percentile.
pub fn binarize(map: ArrayView2<'_, f64>, p: f64) -> Result<BinaryMask> {
    SortedMap::new(map)?.binarize(p)
}

fn check_dims(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::shape("saliency map", a.shape(), b.shape()));
    }
    Ok(())
}

fn intersection(a: &Array2<bool>, b: &Array2<bool>) -> usize {
    let mut n = 0;
    Zip::from(a).and(b).for_each(|x, y| n += (*x && *y) as usize);
    n
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrPoint {
    pub predictor_percentile: f64,
    pub precision: f64,
    pub recall: f64,
    /// No predictor pixels; precision is reported as 1.
    pub empty_predictor: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrCurve {
    pub target_percentile: f64,
    pub points: Vec<PrPoint>,
    /// Pixels in the AIS target mask.
    pub target_count: usize,
}

/// The AIS map at `target_percentile` is the target; the saliency map
/// thresholded at 1, 3, …, 99 is the predictor.
pub fn pr_curve(ais_map: ArrayView2<'_, f64>, sal_map: ArrayView2<'_, f64>, target_percentile: f64) -> Result<PrCurve> {
    let predictors: Vec<f64> = predictor_percentiles().collect();
    pr_points(ais_map, sal_map, target_percentile, &predictors)
}

/// Precision and recall at arbitrary predictor percentiles.
pub fn pr_points(
    ais_map: ArrayView2<'_, f64>,
    sal_map: ArrayView2<'_, f64>,
    target_percentile: f64,
    predictors: &[f64],
) -> Result<PrCurve> {
    check_dims(ais_map, sal_map)?;
    let target = binarize(ais_map, target_percentile)?;
    let a = target.count();
    let sal = SortedMap::new(sal_map)?;
    let points = predictors
        .iter()
        .map(|&p| {
            let pred = sal.binarize(p)?;
            let s = pred.count();
            let hit = intersection(&pred.pixels, &target.pixels);
            Ok(PrPoint {
                predictor_percentile: p,
                precision: if s == 0 { 1.0 } else { hit as f64 / s as f64 },
                recall: if a == 0 { 0.0 } else { hit as f64 / a as f64 },
                empty_predictor: s == 0,
            })
        })
        .collect::<Result<_>>()?;
    Ok(PrCurve {
        target_percentile,
        points,
        target_count: a,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RrFlag {
    Finite,
    /// `P(CR | ¬Sal) = 0` while `P(CR | Sal) > 0`.
    Infinite,
    /// Both conditional probabilities are zero, or `Sal` is empty.
    Undefined,
}

impl fmt::Display for RrFlag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RrFlag::Finite => "finite",
            RrFlag::Infinite => "inf",
            RrFlag::Undefined => "nan",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RrEntry {
    pub q: f64,
    pub value: f64,
    pub flag: RrFlag,
    /// `|Sal ∩ CR|`
    pub sal_cr: usize,
    pub sal: usize,
    /// `|¬Sal ∩ CR|`
    pub not_sal_cr: usize,
    pub not_sal: usize,
}

impl RrEntry {
    /// `P(CR | Sal) / P(CR | ¬Sal)` from the counts, via one exact
    /// cross-multiplication.
    pub fn from_counts(q: f64, sal_cr: usize, sal: usize, not_sal_cr: usize, not_sal: usize) -> Self {
        let num = sal_cr as u128 * not_sal as u128;
        let den = sal as u128 * not_sal_cr as u128;
        let (value, flag) = if sal == 0 || not_sal == 0 || (sal_cr == 0 && not_sal_cr == 0) {
            (f64::NAN, RrFlag::Undefined)
        } else if not_sal_cr == 0 {
            (f64::INFINITY, RrFlag::Infinite)
        } else {
            (num as f64 / den as f64, RrFlag::Finite)
        };
        RrEntry {
            q,
            value,
            flag,
            sal_cr,
            sal,
            not_sal_cr,
            not_sal,
        }
    }

    pub fn total(&self) -> usize {
        self.sal + self.not_sal
    }
}

/// Relative risk with both maps cut at their top `q` percent.
pub fn relative_risk(ais_map: ArrayView2<'_, f64>, sal_map: ArrayView2<'_, f64>, q: f64) -> Result<RrEntry> {
    check_dims(ais_map, sal_map)?;
    let cr = binarize(ais_map, 100.0 - q)?;
    let sal = binarize(sal_map, 100.0 - q)?;
    Ok(rr_from_masks(q, &cr.pixels, &sal.pixels))
}

pub fn rr_from_masks(q: f64, cr: &Array2<bool>, sal: &Array2<bool>) -> RrEntry {
    let (mut a, mut b, mut c, mut d) = (0, 0, 0, 0);
    Zip::from(cr).and(sal).for_each(|&x, &s| {
        if s {
            b += 1;
            a += x as usize;
        } else {
            d += 1;
            c += x as usize;
        }
    });
    RrEntry::from_counts(q, a, b, c, d)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RrResult {
    pub image_id: String,
    pub entries: Vec<RrEntry>,
}

pub fn rr_levels(image_id: &str, ais_map: ArrayView2<'_, f64>, sal_map: ArrayView2<'_, f64>, levels: &[f64]) -> Result<RrResult> {
    Ok(RrResult {
        image_id: image_id.to_string(),
        entries: levels
            .iter()
            .map(|q| relative_risk(ais_map, sal_map, *q))
            .collect::<Result<_>>()?,
    })
}

/// Mean and standard deviation over finite values, with the number of
/// infinite or undefined entries left out.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RrSummary {
    pub q: f64,
    pub mean: f64,
    pub sd: f64,
    pub n_finite: usize,
    pub n_infinite: usize,
    pub n_undefined: usize,
}

pub fn summarize_rr(results: &[RrResult], level: usize) -> RrSummary {
    let entries: Vec<&RrEntry> = results.iter().map(|r| &r.entries[level]).collect();
    let finite: Vec<f64> = entries.iter().filter(|e| e.flag == RrFlag::Finite).map(|e| e.value).collect();
    let n = finite.len();
    let mean = if n == 0 { f64::NAN } else { finite.iter().sum::<f64>() / n as f64 };
    let sd = if n < 2 {
        f64::NAN
    } else {
        (finite.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    };
    RrSummary {
        q: entries.first().map_or(f64::NAN, |e| e.q),
        mean,
        sd,
        n_finite: n,
        n_infinite: entries.iter().filter(|e| e.flag == RrFlag::Infinite).count(),
        n_undefined: entries.iter().filter(|e| e.flag == RrFlag::Undefined).count(),
    }
}
