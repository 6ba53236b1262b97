//! Propagation of (possibly masked) deepest-layer feature maps to the
//! embedding layer.
//!
//! [`Network::embed`] is the direct route: zero the masked channels of the raw
//! activation volume, pool, flatten and run the affine chain from scratch.
//! [`MaskedForward`] caches the pooled features and the first-stage
//! pre-activations of the unmasked model, so removing (or adding) a channel
//! only costs that channel's column block of `W1` plus the second stage. The
//! two routes must agree to within rounding.

use std::collections::BTreeSet;

use ndarray::{s, Array1, Array2, Array3, ArrayView3, Axis, Zip};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::io::{ActivationBundle, ArchitectureMode, Layout, PoolSpec, WeightBundle};

/// Which point of the last affine stage is taken as the embedding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Penultimate {
    #[default]
    PostRectifier,
    PreRectifier,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MaskSpec {
    None,
    /// Zero channel `k` in every image.
    ExcludeOne(usize),
    /// Zero every channel outside the set.
    RetainSet(BTreeSet<usize>),
    /// Zero `channel` in `image` only.
    SingleImage { image: usize, channel: usize },
}

impl MaskSpec {
    pub fn retain(channels: impl IntoIterator<Item = usize>) -> Self {
        MaskSpec::RetainSet(channels.into_iter().collect())
    }

    fn validate(&self, n: usize, k: usize) -> Result<()> {
        let check = |c: usize| {
            if c < k {
                Ok(())
            } else {
                Err(Error::InvalidMask(format!("channel {c} outside 0..{k}")))
            }
        };
        match self {
            MaskSpec::None => Ok(()),
            MaskSpec::ExcludeOne(c) => {
                check(*c)?;
                if k == 1 {
                    return Err(Error::EmptyMask);
                }
                Ok(())
            }
            MaskSpec::RetainSet(set) => {
                if set.is_empty() {
                    return Err(Error::EmptyMask);
                }
                set.iter().try_for_each(|c| check(*c))
            }
            MaskSpec::SingleImage { image, channel } => {
                check(*channel)?;
                if *image >= n {
                    return Err(Error::InvalidMask(format!("image {image} outside 0..{n}")));
                }
                if k == 1 {
                    return Err(Error::EmptyMask);
                }
                Ok(())
            }
        }
    }

    /// Whether `channel` of `image` is zeroed.
    fn masks(&self, image: usize, channel: usize) -> bool {
        match self {
            MaskSpec::None => false,
            MaskSpec::ExcludeOne(c) => *c == channel,
            MaskSpec::RetainSet(set) => !set.contains(&channel),
            MaskSpec::SingleImage { image: t, channel: c } => *t == image && *c == channel,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    pub values: Array2<f64>,
    pub provenance: MaskSpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepScope {
    AllImages,
    SingleImage(usize),
}

/// One element of a masked sweep.
#[derive(Debug, Clone, PartialEq)]
pub enum SweepItem {
    /// All images with channel `k` removed.
    Matrix(Array2<f64>),
    /// Only the target image's embedding with channel `k` removed.
    Row(Array1<f64>),
}

#[inline]
fn relu(v: f64) -> f64 {
    v.max(0.0)
}

/// Max-pool each channel of a `[K × H × W]` volume (floor mode, no padding).
pub fn max_pool(volume: ArrayView3<'_, f64>, pool: PoolSpec) -> Array3<f64> {
    let (k, h, w) = volume.dim();
    let (hp, wp) = (pool.output_len(h), pool.output_len(w));
    let mut out = Array3::zeros((k, hp, wp));
    for c in 0..k {
        for r in 0..hp {
            for q in 0..wp {
                let (r0, q0) = (r * pool.stride, q * pool.stride);
                let window = volume.slice(s![c, r0..r0 + pool.window, q0..q0 + pool.window]);
                out[[c, r, q]] = window.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            }
        }
    }
    out
}

/// Flattens `[K × H × W]` according to `layout`.
pub fn flatten(volume: &Array3<f64>, layout: Layout) -> Vec<f64> {
    let (k, h, w) = volume.dim();
    let mut out = vec![0.0; k * h * w];
    for ((c, r, q), v) in volume.indexed_iter() {
        out[layout.flat_index(c, r, q, [k, h, w])] = *v;
    }
    out
}

/// Spatial mean of every channel.
pub fn channel_means(volume: ArrayView3<'_, f64>) -> Vec<f64> {
    let (_, h, w) = volume.dim();
    let area = (h * w) as f64;
    volume
        .outer_iter()
        .map(|ch| ch.iter().sum::<f64>() / area)
        .collect()
}

#[derive(Debug, Clone, Copy)]
enum Head<'a> {
    FcChain {
        weights: &'a WeightBundle,
        penultimate: Penultimate,
    },
    GlobalPool,
}

/// Activations plus the head that maps them to embeddings.
#[derive(Debug, Clone, Copy)]
pub struct Network<'a> {
    acts: &'a ActivationBundle,
    head: Head<'a>,
}

impl<'a> Network<'a> {
    pub fn new(
        acts: &'a ActivationBundle,
        weights: Option<&'a WeightBundle>,
        mode: ArchitectureMode,
    ) -> Result<Self> {
        let head = match (mode, weights) {
            (ArchitectureMode::FcChain, Some(w)) => {
                let (h, wd) = acts.map_dims();
                let expected = acts.n_channels() * w.pool.output_len(h) * w.pool.output_len(wd);
                if w.input_dim() != expected {
                    return Err(Error::shape(
                        "W1 columns vs pooled, flattened activations",
                        &[w.hidden_dim(), expected],
                        &[w.hidden_dim(), w.input_dim()],
                    ));
                }
                Head::FcChain {
                    weights: w,
                    penultimate: Penultimate::default(),
                }
            }
            (ArchitectureMode::FcChain, None) => {
                return Err(Error::MissingArtifact(crate::io::ArtifactRole::Weights))
            }
            (ArchitectureMode::GlobalPool, None) => Head::GlobalPool,
            (ArchitectureMode::GlobalPool, Some(_)) => {
                return Err(Error::InvalidArgument(
                    "global-pool mode takes no weight bundle".into(),
                ))
            }
        };
        if acts.n_channels() == 0 {
            return Err(Error::EmptyMask);
        }
        Ok(Network { acts, head })
    }

    pub fn with_penultimate(mut self, p: Penultimate) -> Self {
        if let Head::FcChain { penultimate, .. } = &mut self.head {
            *penultimate = p;
        }
        self
    }

    pub fn activations(&self) -> &'a ActivationBundle {
        self.acts
    }

    pub fn mode(&self) -> ArchitectureMode {
        match self.head {
            Head::FcChain { .. } => ArchitectureMode::FcChain,
            Head::GlobalPool => ArchitectureMode::GlobalPool,
        }
    }

    pub fn n_images(&self) -> usize {
        self.acts.n_images()
    }

    pub fn n_channels(&self) -> usize {
        self.acts.n_channels()
    }

    pub fn embedding_dim(&self) -> usize {
        match self.head {
            Head::FcChain { weights, .. } => weights.embedding_dim(),
            Head::GlobalPool => self.n_channels(),
        }
    }

    fn finish(&self, mut hidden: Array1<f64>) -> Array1<f64> {
        let Head::FcChain { weights, penultimate } = self.head else {
            unreachable!("only the fc chain has a second stage")
        };
        hidden.mapv_inplace(relu);
        let mut e = weights.w2.dot(&hidden) + &weights.b2;
        if penultimate == Penultimate::PostRectifier {
            e.mapv_inplace(relu);
        }
        e
    }

    /// Embedding of a single image after zeroing the channels `mask` selects
    /// for it, computed from the raw activation volume.
    fn embed_image(&self, t: usize, mask: &MaskSpec) -> Array1<f64> {
        let mut volume = self.acts.image(t).to_owned();
        for (c, mut ch) in volume.outer_iter_mut().enumerate() {
            if mask.masks(t, c) {
                ch.fill(0.0);
            }
        }
        match self.head {
            Head::GlobalPool => Array1::from(channel_means(volume.view())),
            Head::FcChain { weights, .. } => {
                let pooled = max_pool(volume.view(), weights.pool);
                let x = Array1::from(flatten(&pooled, self.acts.layout()));
                let hidden = weights.w1.dot(&x) + &weights.b1;
                self.finish(hidden)
            }
        }
    }

    /// Direct (uncached) masked forward pass.
    pub fn embed(&self, mask: &MaskSpec) -> Result<EmbeddingMatrix> {
        mask.validate(self.n_images(), self.n_channels())?;
        let (n, d) = (self.n_images(), self.embedding_dim());
        let rows: Vec<Array1<f64>> = (0..n)
            .into_par_iter()
            .map(|t| self.embed_image(t, mask))
            .collect();
        let mut values = Array2::zeros((n, d));
        for (t, row) in rows.into_iter().enumerate() {
            values.row_mut(t).assign(&row);
        }
        Ok(EmbeddingMatrix {
            values,
            provenance: mask.clone(),
        })
    }

    /// Builds the cache used by the incremental routes.
    pub fn prepare(&self) -> MaskedForward<'a> {
        MaskedForward::new(*self)
    }
}

/// Direct masked forward pass; see [`Network::embed`].
pub fn embed(
    acts: &ActivationBundle,
    weights: Option<&WeightBundle>,
    mode: ArchitectureMode,
    mask: &MaskSpec,
) -> Result<EmbeddingMatrix> {
    Network::new(acts, weights, mode)?.embed(mask)
}

/// Cached pooled features and first-stage pre-activations.
#[derive(Debug, Clone)]
pub struct MaskedForward<'a> {
    net: Network<'a>,
    /// `[n × F]` pooled flattened features (fc chain) or `[n × K]` means.
    features: Array2<f64>,
    /// Feature columns belonging to each channel.
    channel_cols: Vec<Vec<usize>>,
    /// `[n × d1]` unmasked `W1·x + b1` (fc chain only).
    base_hidden: Option<Array2<f64>>,
    full: Array2<f64>,
}

impl<'a> MaskedForward<'a> {
    fn new(net: Network<'a>) -> Self {
        let acts = net.acts;
        let (n, k) = (acts.n_images(), acts.n_channels());
        match net.head {
            Head::GlobalPool => {
                let mut features = Array2::zeros((n, k));
                for t in 0..n {
                    features.row_mut(t).assign(&Array1::from(channel_means(acts.image(t))));
                }
                let full = features.clone();
                MaskedForward {
                    net,
                    features,
                    channel_cols: (0..k).map(|c| vec![c]).collect(),
                    base_hidden: None,
                    full,
                }
            }
            Head::FcChain { weights, .. } => {
                let (h, w) = acts.map_dims();
                let (hp, wp) = (weights.pool.output_len(h), weights.pool.output_len(w));
                let layout = acts.layout();
                let rows: Vec<Vec<f64>> = (0..n)
                    .into_par_iter()
                    .map(|t| flatten(&max_pool(acts.image(t), weights.pool), layout))
                    .collect();
                let mut features = Array2::zeros((n, k * hp * wp));
                for (t, r) in rows.into_iter().enumerate() {
                    features.row_mut(t).assign(&Array1::from(r));
                }
                let channel_cols = (0..k)
                    .map(|c| {
                        let mut cols: Vec<usize> = (0..hp)
                            .flat_map(|r| (0..wp).map(move |q| (r, q)))
                            .map(|(r, q)| layout.flat_index(c, r, q, [k, hp, wp]))
                            .collect();
                        cols.sort_unstable();
                        cols
                    })
                    .collect();
                let base_hidden = features.dot(&weights.w1.t()) + &weights.b1;
                let mut this = MaskedForward {
                    net,
                    features,
                    channel_cols,
                    base_hidden: Some(base_hidden),
                    full: Array2::zeros((0, 0)),
                };
                this.full = this.second_stage(this.base_hidden.clone().expect("fc chain"));
                this
            }
        }
    }

    pub fn network(&self) -> &Network<'a> {
        &self.net
    }

    /// Unmasked embeddings.
    pub fn full_embedding(&self) -> &Array2<f64> {
        &self.full
    }

    fn weights(&self) -> &'a WeightBundle {
        match self.net.head {
            Head::FcChain { weights, .. } => weights,
            Head::GlobalPool => unreachable!("global-pool has no weights"),
        }
    }

    fn second_stage(&self, mut hidden: Array2<f64>) -> Array2<f64> {
        let Head::FcChain { weights, penultimate } = self.net.head else {
            unreachable!("only the fc chain has a second stage")
        };
        hidden.mapv_inplace(relu);
        let mut e = hidden.dot(&weights.w2.t()) + &weights.b2;
        if penultimate == Penultimate::PostRectifier {
            e.mapv_inplace(relu);
        }
        e
    }

    /// `[rows × d1]` first-stage contribution of channel `k` for the given images.
    fn contribution(&self, k: usize, images: &[usize]) -> Array2<f64> {
        let cols = &self.channel_cols[k];
        let w1k = self.weights().w1.select(Axis(1), cols);
        let xk = self.features.select(Axis(0), images).select(Axis(1), cols);
        xk.dot(&w1k.t())
    }

    fn check_channel(&self, k: usize) -> Result<()> {
        let kk = self.net.n_channels();
        if k >= kk {
            return Err(Error::InvalidMask(format!("channel {k} outside 0..{kk}")));
        }
        if kk == 1 {
            return Err(Error::EmptyMask);
        }
        Ok(())
    }

    /// Embeddings of every image with channel `k` removed.
    pub fn exclude_one(&self, k: usize) -> Result<Array2<f64>> {
        self.check_channel(k)?;
        match self.net.head {
            Head::GlobalPool => {
                let mut e = self.features.clone();
                e.column_mut(k).fill(0.0);
                Ok(e)
            }
            Head::FcChain { .. } => {
                let all: Vec<usize> = (0..self.net.n_images()).collect();
                let hidden = self.base_hidden.as_ref().expect("fc chain") - &self.contribution(k, &all);
                Ok(self.second_stage(hidden))
            }
        }
    }

    /// `[K × d]`: row `k` is image `t` embedded with channel `k` removed.
    pub fn single_image_block(&self, t: usize) -> Result<Array2<f64>> {
        let (n, kk) = (self.net.n_images(), self.net.n_channels());
        if t >= n {
            return Err(Error::InvalidMask(format!("image {t} outside 0..{n}")));
        }
        if kk == 1 {
            return Err(Error::EmptyMask);
        }
        match self.net.head {
            Head::GlobalPool => {
                let mut block = Array2::zeros((kk, kk));
                for k in 0..kk {
                    let mut row = block.row_mut(k);
                    row.assign(&self.features.row(t));
                    row[k] = 0.0;
                }
                Ok(block)
            }
            Head::FcChain { .. } => {
                let base = self.base_hidden.as_ref().expect("fc chain").row(t);
                let mut hidden = Array2::zeros((kk, base.len()));
                for k in 0..kk {
                    let delta = self.contribution(k, &[t]);
                    Zip::from(hidden.row_mut(k))
                        .and(&base)
                        .and(delta.row(0))
                        .for_each(|h, &b, &d| *h = b - d);
                }
                Ok(self.second_stage(hidden))
            }
        }
    }

    /// Lazily yields `(k, item)` for `k = 0..K` in ascending order.
    pub fn sweep(&self, scope: SweepScope) -> Result<Box<dyn Iterator<Item = (usize, SweepItem)> + '_>> {
        let kk = self.net.n_channels();
        if kk == 1 {
            return Err(Error::EmptyMask);
        }
        match scope {
            SweepScope::AllImages => Ok(Box::new((0..kk).map(move |k| {
                let e = self.exclude_one(k).expect("channel index in range");
                (k, SweepItem::Matrix(e))
            }))),
            SweepScope::SingleImage(t) => {
                let block = self.single_image_block(t)?;
                Ok(Box::new(
                    block
                        .outer_iter()
                        .map(|r| r.to_owned())
                        .enumerate()
                        .map(|(k, r)| (k, SweepItem::Row(r)))
                        .collect::<Vec<_>>()
                        .into_iter(),
                ))
            }
        }
    }

    /// Applies `f` to every `exclude_one(k)` embedding in parallel; results
    /// come back in ascending `k` regardless of scheduling.
    pub fn map_exclusions<T, F>(&self, f: F) -> Result<Vec<T>>
    where
        T: Send,
        F: Fn(usize, &Array2<f64>) -> T + Sync,
    {
        let kk = self.net.n_channels();
        if kk == 1 {
            return Err(Error::EmptyMask);
        }
        (0..kk)
            .into_par_iter()
            .map(|k| self.exclude_one(k).map(|e| f(k, &e)))
            .collect()
    }

    /// Embeddings for the growing retained sets `order[..1]`, `order[..2]`, …
    pub fn retained_prefixes<'s>(
        &'s self,
        order: &'s [usize],
    ) -> Result<impl Iterator<Item = Array2<f64>> + 's> {
        let kk = self.net.n_channels();
        let mut seen = vec![false; kk];
        for &k in order {
            if k >= kk || std::mem::replace(&mut seen[k], true) {
                return Err(Error::InvalidMask(format!("bad or repeated channel {k} in order")));
            }
        }
        let n = self.net.n_images();
        let all: Vec<usize> = (0..n).collect();
        let mut acc = match self.net.head {
            Head::GlobalPool => Array2::zeros((n, kk)),
            Head::FcChain { weights, .. } => {
                let mut h = Array2::zeros((n, weights.hidden_dim()));
                h += &weights.b1;
                h
            }
        };
        Ok(order.iter().map(move |&k| match self.net.head {
            Head::GlobalPool => {
                acc.column_mut(k).assign(&self.features.column(k));
                acc.clone()
            }
            Head::FcChain { .. } => {
                acc += &self.contribution(k, &all);
                self.second_stage(acc.clone())
            }
        }))
    }
}
