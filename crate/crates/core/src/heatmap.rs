//! AIS heatmaps: rectified, sum-normalized image-level scores weight the
//! bilinearly upsampled feature maps of one image.

use ndarray::{Array2, ArrayView2, ArrayView3};

use crate::error::{Error, Result};
use crate::io::PoolSpec;
use crate::masking::max_pool;
use crate::similarity::{entropy, pearson, Corr};

#[derive(Debug, Clone, PartialEq)]
pub struct Heatmap {
    pub values: Array2<f64>,
    pub weights_used: Vec<f64>,
    pub image_id: String,
}

impl Heatmap {
    pub fn dims(&self) -> (usize, usize) {
        self.values.dim()
    }
}

/// Which feature maps are upsampled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MapSource {
    /// The stored activations as they are.
    #[default]
    PrePool,
    /// After the head's max-pool.
    PostPool(PoolSpec),
}

/// `w_k = max(ais_k, 0) / Σ_j max(ais_j, 0)`.
pub fn ais_weights(ais_row: &[f64]) -> Result<Vec<f64>> {
    if ais_row.is_empty() {
        return Err(Error::InvalidArgument("empty AIS row".into()));
    }
    if ais_row.iter().any(|v| v.is_nan()) {
        return Err(Error::Domain("AIS row contains NaN".into()));
    }
    let rect: Vec<f64> = ais_row.iter().map(|v| v.max(0.0)).collect();
    let total: f64 = rect.iter().sum();
    if total <= 0.0 {
        return Err(Error::NoPositiveAis);
    }
    Ok(rect.iter().map(|v| v / total).collect())
}

/// Source sample positions for one axis: `(lower, upper, fraction)`.
fn axis_taps(input: usize, output: usize) -> Vec<(usize, usize, f64)> {
    let scale = input as f64 / output as f64;
    (0..output)
        .map(|i| {
            let src = ((i as f64 + 0.5) * scale - 0.5).clamp(0.0, (input - 1) as f64);
            let lo = src.floor() as usize;
            let hi = (lo + 1).min(input - 1);
            (lo, hi, src - lo as f64)
        })
        .collect()
}

fn lerp(a: f64, b: f64, f: f64) -> f64 {
    // exact when a == b
    a + f * (b - a)
}

/// Bilinear resize with half-pixel centers, clamped at the borders.
pub fn upsample(map: ArrayView2<'_, f64>, out: (usize, usize)) -> Result<Array2<f64>> {
    let (h, w) = map.dim();
    if h == 0 || w == 0 || out.0 == 0 || out.1 == 0 {
        return Err(Error::shape("upsample input/output", &[1, 1], &[h.min(out.0), w.min(out.1)]));
    }
    let rows = axis_taps(h, out.0);
    let cols = axis_taps(w, out.1);
    Ok(Array2::from_shape_fn(out, |(i, j)| {
        let (r0, r1, fr) = rows[i];
        let (c0, c1, fc) = cols[j];
        let top = lerp(map[[r0, c0]], map[[r0, c1]], fc);
        let bottom = lerp(map[[r1, c0]], map[[r1, c1]], fc);
        lerp(top, bottom, fr)
    }))
}

/// `Σ_k w_k · up(map_k)`, clamped per pixel to the range of the contributing
/// upsampled maps.
pub fn compose(acts: ArrayView3<'_, f64>, weights: &[f64], out: (usize, usize)) -> Result<Array2<f64>> {
    let k = acts.shape()[0];
    if weights.len() != k {
        return Err(Error::shape("heatmap weights", &[k], &[weights.len()]));
    }
    let mut acc = Array2::<f64>::zeros(out);
    let mut lo = Array2::from_elem(out, f64::INFINITY);
    let mut hi = Array2::from_elem(out, f64::NEG_INFINITY);
    for (c, &w) in weights.iter().enumerate() {
        if w == 0.0 {
            continue;
        }
        let up = upsample(acts.index_axis(ndarray::Axis(0), c), out)?;
        ndarray::Zip::from(&mut acc)
            .and(&mut lo)
            .and(&mut hi)
            .and(&up)
            .for_each(|a, l, h, &u| {
                *a += w * u;
                *l = l.min(u);
                *h = h.max(u);
            });
    }
    if lo.iter().any(|v| v.is_infinite()) {
        return Err(Error::NoPositiveAis);
    }
    ndarray::Zip::from(&mut acc)
        .and(&lo)
        .and(&hi)
        .for_each(|a, &l, &h| *a = a.clamp(l, h));
    Ok(acc)
}

/// Heatmap of one image from its `[K × H_f × W_f]` maps and AIS row.
pub fn heatmap_for_image(
    acts: ArrayView3<'_, f64>,
    ais_row: &[f64],
    out_size: usize,
    source: MapSource,
    image_id: impl Into<String>,
) -> Result<Heatmap> {
    let weights = ais_weights(ais_row)?;
    let values = match source {
        MapSource::PrePool => compose(acts, &weights, (out_size, out_size))?,
        MapSource::PostPool(pool) => {
            let pooled = max_pool(acts, pool);
            compose(pooled.view(), &weights, (out_size, out_size))?
        }
    };
    Ok(Heatmap {
        values,
        weights_used: weights,
        image_id: image_id.into(),
    })
}

/// Pearson correlation of two heatmaps' pixels.
pub fn match_score(a: &Heatmap, b: &Heatmap) -> Result<Corr> {
    if a.dims() != b.dims() {
        let (ha, wa) = a.dims();
        let (hb, wb) = b.dims();
        return Err(Error::shape("heatmap pair", &[ha, wa], &[hb, wb]));
    }
    let x: Vec<f64> = a.values.iter().copied().collect();
    let y: Vec<f64> = b.values.iter().copied().collect();
    pearson(&x, &y)
}

/// The larger of the two prediction entropies (nats).
pub fn max_entropy(probs_a: &[f64], probs_b: &[f64]) -> Result<f64> {
    Ok(entropy(probs_a)?.max(entropy(probs_b)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::{array, Array3};

    #[test]
    fn weights_examples() {
        assert_eq!(ais_weights(&[0.2, -0.1, 0.2]).unwrap(), vec![0.5, 0.0, 0.5]);
        assert_eq!(ais_weights(&[-1.0, 0.3, 0.0]).unwrap(), vec![0.0, 1.0, 0.0]);
        assert!(matches!(ais_weights(&[-0.1, 0.0]), Err(Error::NoPositiveAis)));
    }

    #[test]
    fn bilinear_matches_hand_evaluation() {
        let up = upsample(array![[0.0, 1.0], [1.0, 0.0]].view(), (4, 4)).unwrap();
        // sample positions clamp to 0, 0.25, 0.75, 1 on both axes
        let t = [0.0, 0.25, 0.75, 1.0];
        for i in 0..4 {
            for j in 0..4 {
                let (y, x) = (t[i], t[j]);
                let expect = (1.0 - y) * x + y * (1.0 - x);
                assert_abs_diff_eq!(up[[i, j]], expect, epsilon = 1e-15);
            }
        }
        assert_eq!(up[[0, 0]], 0.0);
        assert_eq!(up[[0, 3]], 1.0);
        assert_eq!(up[[1, 1]], 0.375);
    }

    #[test]
    fn constant_channel_stays_constant() {
        let c = Array2::from_elem((3, 5), 0.1);
        let up = upsample(c.view(), (7, 11)).unwrap();
        assert!(up.iter().all(|v| *v == 0.1));
    }

    #[test]
    fn one_hot_and_identical_channels() {
        let mut acts = Array3::zeros((3, 2, 2));
        acts.index_axis_mut(ndarray::Axis(0), 1).assign(&array![[0.3, 1.7], [2.0, 0.0]]);
        let hm = compose(acts.view(), &[0.0, 1.0, 0.0], (6, 6)).unwrap();
        let up = upsample(acts.index_axis(ndarray::Axis(0), 1), (6, 6)).unwrap();
        assert_eq!(hm, up);

        let same = Array3::from_shape_fn((3, 2, 2), |(_, i, j)| (i * 2 + j) as f64 * 0.7);
        let hm = compose(same.view(), &[1.0 / 3.0; 3], (5, 5)).unwrap();
        assert_eq!(hm, upsample(same.index_axis(ndarray::Axis(0), 0), (5, 5)).unwrap());
    }

    #[test]
    fn match_and_entropy() {
        let a = Heatmap {
            values: array![[0.0, 1.0], [2.0, 5.0]],
            weights_used: vec![1.0],
            image_id: "a".into(),
        };
        let mut b = a.clone();
        b.values.mapv_inplace(|v| 1.0 - v);
        assert_abs_diff_eq!(match_score(&a, &a).unwrap().value, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(match_score(&a, &b).unwrap().value, -1.0, epsilon = 1e-12);
        let flat = Heatmap {
            values: Array2::from_elem((2, 2), 0.5),
            ..a.clone()
        };
        assert!(match_score(&a, &flat).unwrap().degenerate);

        assert_eq!(max_entropy(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert_abs_diff_eq!(max_entropy(&[1.0, 0.0, 0.0, 0.0], &[0.25; 4]).unwrap(), 4f64.ln(), epsilon = 1e-12);
    }
}
