//! Alignment importance scores, greedy subset selection and the pairwise
//! cross-validation protocol.
//!
//! The importance of feature map `k` is the drop in second-order isomorphism
//! when `k` is removed:
//!
//! ```text
//! AIS_k = ρ(Z_u, H_u) − ρ(Z_u^(¬k), H_u)
//! ```
//!
//! where `Z_u` is built with the baseline metric from the full model and
//! `Z_u^(¬k)` with the variant metric from the model missing channel `k`.

use std::fmt;

use log::warn;
use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::io::HumanJudgmentMatrix;
use crate::masking::MaskedForward;
use crate::similarity::{
    pairwise_similarity, row_similarities, soi, soi_values, spearman, CondensedSimVector, Corr, Metric,
    PairMask,
};
use crate::stats::{paired_t, TTest};

/// Metrics used for the full-model similarities and for masked variants.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MetricConfig {
    pub baseline: Metric,
    pub variant: Metric,
}

impl Default for MetricConfig {
    fn default() -> Self {
        MetricConfig {
            baseline: Metric::Spearman,
            variant: Metric::Cosine,
        }
    }
}

impl MetricConfig {
    /// Cosine for both stages.
    pub fn consistent() -> Self {
        MetricConfig {
            baseline: Metric::Cosine,
            variant: Metric::Cosine,
        }
    }
}

impl fmt::Display for MetricConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.baseline, self.variant)
    }
}

/// Pairwise similarity where an all-zero row under cosine collapses the
/// whole vector instead of failing.
fn similarity_or_collapse(e: &Array2<f64>, metric: Metric) -> Result<Option<CondensedSimVector>> {
    match pairwise_similarity(e.view(), metric) {
        Ok(z) => Ok(Some(z)),
        Err(Error::Pair { source, .. }) if matches!(*source, Error::ZeroVector) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Dataset-level scores, one per feature map.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetAis {
    pub values: Vec<f64>,
    pub baseline_rho: f64,
    pub baseline_degenerate: bool,
    pub perturbed_rho: Vec<f64>,
    /// The perturbed 2OI was forced to 0 (collapsed embeddings or constant
    /// similarities).
    pub degenerate: Vec<bool>,
    pub metric_config: MetricConfig,
}

/// Full-model and single-exclusion similarity vectors. They do not depend on
/// which pairs are later used for scoring, so cross-validation folds share
/// one cache.
#[derive(Debug, Clone)]
pub struct AblationCache {
    baseline_z: CondensedSimVector,
    variant_z: Vec<Option<CondensedSimVector>>,
    metric_config: MetricConfig,
}

impl AblationCache {
    pub fn build(fwd: &MaskedForward<'_>, metric_config: MetricConfig) -> Result<Self> {
        let baseline_z = pairwise_similarity(fwd.full_embedding().view(), metric_config.baseline)?;
        let variant_z = fwd
            .map_exclusions(|_, e| similarity_or_collapse(e, metric_config.variant))?
            .into_iter()
            .collect::<Result<Vec<_>>>()?;
        Ok(AblationCache {
            baseline_z,
            variant_z,
            metric_config,
        })
    }

    pub fn baseline_z(&self) -> &CondensedSimVector {
        &self.baseline_z
    }

    /// `None` when removing channel `k` left an all-zero embedding row.
    pub fn variant_z(&self, k: usize) -> Option<&CondensedSimVector> {
        self.variant_z[k].as_ref()
    }

    pub fn n_channels(&self) -> usize {
        self.variant_z.len()
    }

    pub fn scores(&self, hu: &CondensedSimVector, mask: Option<&PairMask>) -> Result<DatasetAis> {
        if hu.n() != self.baseline_z.n() {
            return Err(Error::shape("judgments", &[self.baseline_z.n()], &[hu.n()]));
        }
        let base = soi(&self.baseline_z, hu, mask)?;
        let perturbed: Vec<Corr> = self
            .variant_z
            .iter()
            .map(|z| match z {
                Some(z) => soi(z, hu, mask),
                None => Ok(Corr {
                    value: 0.0,
                    degenerate: true,
                }),
            })
            .collect::<Result<_>>()?;
        Ok(DatasetAis {
            values: perturbed.iter().map(|p| base.value - p.value).collect(),
            baseline_rho: base.value,
            baseline_degenerate: base.degenerate,
            perturbed_rho: perturbed.iter().map(|p| p.value).collect(),
            degenerate: perturbed.iter().map(|p| p.degenerate).collect(),
            metric_config: self.metric_config,
        })
    }
}

/// Dataset-level scores over the pairs selected by `mask` (all when `None`).
pub fn dataset_ais(
    fwd: &MaskedForward<'_>,
    hu: &CondensedSimVector,
    metric_config: MetricConfig,
    mask: Option<&PairMask>,
) -> Result<DatasetAis> {
    AblationCache::build(fwd, metric_config)?.scores(hu, mask)
}

/// Scores of every feature map for one target image.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageAisRow {
    pub image: usize,
    pub baseline_rho: f64,
    pub baseline_degenerate: bool,
    pub perturbed_rho: Vec<f64>,
    pub values: Vec<f64>,
    pub degenerate: Vec<bool>,
}

/// Image-level scores: only the target image is re-embedded with channel `k`
/// removed; its `n − 1` similarities to the unmasked images are compared with
/// the matching human judgments.
pub fn image_ais(
    fwd: &MaskedForward<'_>,
    h: &HumanJudgmentMatrix,
    t: usize,
    metric_config: MetricConfig,
) -> Result<ImageAisRow> {
    let full = fwd.full_embedding();
    let n = full.nrows();
    if h.n() != n {
        return Err(Error::shape("judgments", &[n, n], h.values().shape()));
    }
    if n < 4 {
        return Err(Error::InvalidArgument(
            "image-level scores need at least 4 images (3 comparisons)".into(),
        ));
    }
    let human: Vec<f64> = (0..n).filter(|u| *u != t).map(|u| h.values()[[t, u]]).collect();
    let target: Vec<f64> = full.row(t).to_vec();
    let base_sims = row_similarities(&target, full.view(), t, metric_config.baseline)?;
    let base = spearman(&base_sims, &human)?;

    let block = fwd.single_image_block(t)?;
    let perturbed: Vec<Corr> = block
        .outer_iter()
        .map(|row| {
            let row = row.to_vec();
            match row_similarities(&row, full.view(), t, metric_config.variant) {
                Ok(sims) => spearman(&sims, &human),
                Err(Error::Pair { source, .. }) if matches!(*source, Error::ZeroVector) => Ok(Corr {
                    value: 0.0,
                    degenerate: true,
                }),
                Err(e) => Err(e),
            }
        })
        .collect::<Result<_>>()?;
    Ok(ImageAisRow {
        image: t,
        baseline_rho: base.value,
        baseline_degenerate: base.degenerate,
        values: perturbed.iter().map(|p| base.value - p.value).collect(),
        perturbed_rho: perturbed.iter().map(|p| p.value).collect(),
        degenerate: perturbed.iter().map(|p| p.degenerate).collect(),
    })
}

/// Image-level scores for every image, as an `[n × K]` table.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageAis {
    pub rows: Vec<ImageAisRow>,
    pub metric_config: MetricConfig,
}

impl ImageAis {
    pub fn matrix(&self) -> Array2<f64> {
        let k = self.rows.first().map_or(0, |r| r.values.len());
        let mut m = Array2::zeros((self.rows.len(), k));
        for (t, row) in self.rows.iter().enumerate() {
            for (c, v) in row.values.iter().enumerate() {
                m[[t, c]] = *v;
            }
        }
        m
    }

    pub fn baselines(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.baseline_rho).collect()
    }
}

pub fn image_ais_all(
    fwd: &MaskedForward<'_>,
    h: &HumanJudgmentMatrix,
    metric_config: MetricConfig,
) -> Result<ImageAis> {
    let n = fwd.full_embedding().nrows();
    let rows = (0..n)
        .into_par_iter()
        .map(|t| image_ais(fwd, h, t, metric_config))
        .collect::<Result<Vec<_>>>()?;
    Ok(ImageAis { rows, metric_config })
}

/// Feature indices by descending score; equal scores keep ascending index.
pub fn rank_features(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionResult {
    pub ranked_features: Vec<usize>,
    /// 2OI of the top-`m+1` retained set, for `m = 0..K`.
    pub curve: Vec<f64>,
    pub curve_degenerate: Vec<bool>,
    /// Shortest prefix of `ranked_features` reaching the curve maximum.
    pub s_star: Vec<usize>,
    pub s_star_size: usize,
}

impl SelectionResult {
    pub fn best_rho(&self) -> f64 {
        self.curve[self.s_star_size - 1]
    }

    /// Train 2OI with every feature retained.
    pub fn full_rho(&self) -> f64 {
        *self.curve.last().expect("non-empty curve")
    }
}

fn greedy_inner(
    ais: &DatasetAis,
    fwd: &MaskedForward<'_>,
    hu: &CondensedSimVector,
    train_mask: Option<&PairMask>,
    metric_config: MetricConfig,
) -> Result<(SelectionResult, Option<CondensedSimVector>)> {
    let k = fwd.network().n_channels();
    if ais.values.len() != k {
        return Err(Error::shape("AIS vector", &[k], &[ais.values.len()]));
    }
    let ranked = rank_features(&ais.values);
    let mut curve = Vec::with_capacity(k);
    let mut flags = Vec::with_capacity(k);
    let mut best: Option<(usize, f64, Option<CondensedSimVector>)> = None;
    for (m, e) in fwd.retained_prefixes(&ranked)?.enumerate() {
        let z = similarity_or_collapse(&e, metric_config.variant)?;
        let rho = match &z {
            Some(z) => soi(z, hu, train_mask)?,
            None => Corr {
                value: 0.0,
                degenerate: true,
            },
        };
        curve.push(rho.value);
        flags.push(rho.degenerate);
        // degenerate prefixes are only eligible if nothing else is
        let better = match &best {
            None => true,
            Some((bm, bv, _)) => {
                let best_degenerate = flags[*bm];
                (best_degenerate && !rho.degenerate) || (best_degenerate == rho.degenerate && rho.value > *bv)
            }
        };
        if better {
            best = Some((m, rho.value, z));
        }
    }
    let (m, _, z) = best.expect("at least one feature map");
    Ok((
        SelectionResult {
            s_star: ranked[..=m].to_vec(),
            s_star_size: m + 1,
            ranked_features: ranked,
            curve,
            curve_degenerate: flags,
        },
        z,
    ))
}

/// Adds feature maps in descending score order and keeps the prefix whose
/// variant-metric 2OI on `train_mask` is highest.
pub fn greedy_select(
    ais: &DatasetAis,
    fwd: &MaskedForward<'_>,
    hu: &CondensedSimVector,
    train_mask: Option<&PairMask>,
    metric_config: MetricConfig,
) -> Result<SelectionResult> {
    greedy_inner(ais, fwd, hu, train_mask, metric_config).map(|(s, _)| s)
}

/// Seed for the shuffles; repeat `r` draws from ChaCha8 stream `r`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RngConfig {
    pub seed: u64,
}

impl RngConfig {
    pub fn stream(&self, stream: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(stream);
        rng
    }
}

/// Shuffles `0..len` with the repeat's stream and cuts it into `folds`
/// contiguous, near-equal test folds.
pub fn fold_partition(len: usize, folds: usize, rng: &RngConfig, repeat: usize) -> Vec<Vec<usize>> {
    let mut idx: Vec<usize> = (0..len).collect();
    idx.shuffle(&mut rng.stream(repeat as u64));
    (0..folds)
        .map(|f| {
            let mut fold = idx[f * len / folds..(f + 1) * len / folds].to_vec();
            fold.sort_unstable();
            fold
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct FoldRecord {
    pub repeat: usize,
    pub fold: usize,
    /// Test 2OI of the full model (baseline metric).
    pub full_test: f64,
    /// Test 2OI of the retained set (variant metric).
    pub retained_test: f64,
    pub s_star_size: usize,
    pub train_full: f64,
    pub train_retained: f64,
    /// Why the fold produced no values, if it was skipped.
    pub skipped: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvReport {
    pub metric_config: MetricConfig,
    pub seed: u64,
    pub repeats: usize,
    pub folds: usize,
    pub records: Vec<FoldRecord>,
    /// Paired test of retained vs full test 2OI; `None` with fewer than two
    /// usable folds.
    pub t_test: Option<TTest>,
    pub mean_full: f64,
    pub mean_retained: f64,
    pub mean_size: f64,
}

impl CvReport {
    pub fn used(&self) -> impl Iterator<Item = &FoldRecord> {
        self.records.iter().filter(|r| r.skipped.is_none())
    }

    pub fn skipped_count(&self) -> usize {
        self.records.len() - self.used().count()
    }

    /// Per-fold table followed by `#`-prefixed summary lines. Floats use the
    /// shortest round-trip representation, so equal reports give equal bytes.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from(
            "repeat\tfold\tfull_test\tretained_test\ts_star_size\ttrain_full\ttrain_retained\tskipped\n",
        );
        for r in &self.records {
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
                r.repeat,
                r.fold,
                r.full_test,
                r.retained_test,
                r.s_star_size,
                r.train_full,
                r.train_retained,
                r.skipped.as_deref().unwrap_or("-")
            ));
        }
        out.push_str(&format!("# metrics\t{}\n", self.metric_config));
        out.push_str(&format!("# seed\t{}\n# repeats\t{}\n# folds\t{}\n", self.seed, self.repeats, self.folds));
        out.push_str(&format!("# skipped\t{}\n", self.skipped_count()));
        out.push_str(&format!(
            "# mean_full\t{}\n# mean_retained\t{}\n# mean_size\t{}\n",
            self.mean_full, self.mean_retained, self.mean_size
        ));
        match &self.t_test {
            Some(t) => out.push_str(&format!(
                "# t\t{}\n# df\t{}\n# p_value\t{}\n# zero_variance\t{}\n",
                t.t, t.df, t.p_value, t.zero_variance
            )),
            None => out.push_str("# t\t-\n"),
        }
        out
    }
}

pub const DEFAULT_REPEATS: usize = 8;
pub const DEFAULT_FOLDS: usize = 5;

fn is_constant(values: &[f64]) -> bool {
    values.windows(2).all(|w| w[0] == w[1])
}

fn run_fold(
    cache: &AblationCache,
    fwd: &MaskedForward<'_>,
    hu: &CondensedSimVector,
    test: &[usize],
    repeat: usize,
    fold: usize,
) -> Result<FoldRecord> {
    let p = hu.len();
    let skip = |reason: String| {
        warn!("repeat {repeat} fold {fold} skipped: {reason}");
        Ok(FoldRecord {
            repeat,
            fold,
            full_test: f64::NAN,
            retained_test: f64::NAN,
            s_star_size: 0,
            train_full: f64::NAN,
            train_retained: f64::NAN,
            skipped: Some(reason),
        })
    };
    let mut in_test = vec![false; p];
    for &i in test {
        in_test[i] = true;
    }
    let train_idx: Vec<usize> = (0..p).filter(|i| !in_test[*i]).collect();
    if test.len() < 3 || train_idx.len() < 3 {
        return skip(format!("split has {} test / {} train entries", test.len(), train_idx.len()));
    }
    let test_mask = PairMask::from_indices(p, test)?;
    let train_mask = PairMask::from_indices(p, &train_idx)?;
    if is_constant(&test_mask.gather(hu.values())) || is_constant(&train_mask.gather(hu.values())) {
        return skip("constant human judgments within the split".into());
    }

    let ais = cache.scores(hu, Some(&train_mask))?;
    let (sel, z_star) = greedy_inner(&ais, fwd, hu, Some(&train_mask), cache.metric_config)?;
    let full_test = soi_values(cache.baseline_z().values(), hu.values(), Some(&test_mask))?.value;
    let retained_test = match &z_star {
        Some(z) => soi(z, hu, Some(&test_mask))?.value,
        None => 0.0,
    };
    Ok(FoldRecord {
        repeat,
        fold,
        full_test,
        retained_test,
        s_star_size: sel.s_star_size,
        train_full: sel.full_rho(),
        train_retained: sel.best_rho(),
        skipped: None,
    })
}

/// Repeated k-fold cross-validation over the condensed judgment entries.
///
/// For every fold the scores and the greedy selection use training pairs
/// only; both the full model and the retained set are then scored on the
/// held-out pairs.
pub fn crossval(
    fwd: &MaskedForward<'_>,
    hu: &CondensedSimVector,
    metric_config: MetricConfig,
    rng: RngConfig,
    repeats: usize,
    folds: usize,
) -> Result<CvReport> {
    let p = hu.len();
    if p < 10 {
        return Err(Error::InvalidArgument(format!(
            "cross-validation needs at least 10 judgment pairs, got {p}"
        )));
    }
    if folds < 2 || repeats == 0 {
        return Err(Error::InvalidArgument("need ≥ 2 folds and ≥ 1 repeat".into()));
    }
    let cache = AblationCache::build(fwd, metric_config)?;
    let jobs: Vec<(usize, usize, Vec<usize>)> = (0..repeats)
        .flat_map(|r| {
            fold_partition(p, folds, &rng, r)
                .into_iter()
                .enumerate()
                .map(move |(f, test)| (r, f, test))
        })
        .collect();
    let records = jobs
        .par_iter()
        .map(|(r, f, test)| run_fold(&cache, fwd, hu, test, *r, *f))
        .collect::<Result<Vec<_>>>()?;

    let used: Vec<&FoldRecord> = records.iter().filter(|r| r.skipped.is_none()).collect();
    let full: Vec<f64> = used.iter().map(|r| r.full_test).collect();
    let retained: Vec<f64> = used.iter().map(|r| r.retained_test).collect();
    let mean = |v: &[f64]| if v.is_empty() { f64::NAN } else { v.iter().sum::<f64>() / v.len() as f64 };
    let sizes: Vec<f64> = used.iter().map(|r| r.s_star_size as f64).collect();
    let t_test = if used.len() >= 2 {
        Some(paired_t(&retained, &full)?)
    } else {
        None
    };
    Ok(CvReport {
        metric_config,
        seed: rng.seed,
        repeats,
        folds,
        t_test,
        mean_full: mean(&full),
        mean_retained: mean(&retained),
        mean_size: mean(&sizes),
        records,
    })
}
