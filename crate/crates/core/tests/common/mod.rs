//! Independent reference implementations shared by the integration tests.
//! Nothing here calls into the numerical code under test.
#![allow(dead_code)]

use std::f64::consts::PI;
use std::path::PathBuf;

use ais_core::io::{ActivationBundle, ArchitectureMode, Layout, WeightBundle};
use ndarray::Array2;

pub fn fixture(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(rel)
}

/// Ranks by counting: `1 + #smaller + (#equal − 1) / 2`.
pub fn ranks(x: &[f64]) -> Vec<f64> {
    x.iter()
        .map(|v| {
            let less = x.iter().filter(|u| *u < v).count() as f64;
            let eq = x.iter().filter(|u| *u == v).count() as f64;
            1.0 + less + (eq - 1.0) / 2.0
        })
        .collect()
}

/// Covariance formula: `(Σxy − Σx Σy / n) / sqrt(...)`.
pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (sx, sy) = (x.iter().sum::<f64>(), y.iter().sum::<f64>());
    let (mx, my) = (sx / n, sy / n);
    let cov: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    if vx == 0.0 || vy == 0.0 {
        return 0.0;
    }
    cov / (vx * vy).sqrt()
}

pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    pearson(&ranks(x), &ranks(y))
}

pub fn cosine(x: &[f64], y: &[f64]) -> f64 {
    let dot: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    let nx: f64 = x.iter().map(|a| a * a).sum::<f64>().sqrt();
    let ny: f64 = y.iter().map(|b| b * b).sum::<f64>().sqrt();
    dot / (nx * ny)
}

pub fn similarity(kind: &str, x: &[f64], y: &[f64]) -> f64 {
    match kind {
        "spearman" => spearman(x, y),
        "pearson" => pearson(x, y),
        "cosine" => cosine(x, y),
        other => panic!("unknown metric {other}"),
    }
}

/// Upper triangle, row by row.
pub fn condensed(e: &Array2<f64>, kind: &str) -> Vec<f64> {
    let n = e.nrows();
    let mut out = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            let a: Vec<f64> = e.row(i).to_vec();
            let b: Vec<f64> = e.row(j).to_vec();
            out.push(similarity(kind, &a, &b));
        }
    }
    out
}

pub fn condensed_square(h: &Array2<f64>) -> Vec<f64> {
    let n = h.nrows();
    let mut out = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            out.push(h[[i, j]]);
        }
    }
    out
}

/// Embedding of every image from scratch; `zero(t, c)` says whether channel
/// `c` of image `t` is removed.
pub fn naive_embed(
    acts: &ActivationBundle,
    weights: Option<&WeightBundle>,
    mode: ArchitectureMode,
    zero: impl Fn(usize, usize) -> bool,
) -> Array2<f64> {
    let data = acts.data();
    let (n, k, h, w) = data.dim();
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|t| match mode {
            ArchitectureMode::GlobalPool => (0..k)
                .map(|c| {
                    if zero(t, c) {
                        return 0.0;
                    }
                    let mut s = 0.0;
                    for r in 0..h {
                        for q in 0..w {
                            s += data[[t, c, r, q]];
                        }
                    }
                    s / (h * w) as f64
                })
                .collect(),
            ArchitectureMode::FcChain => {
                let wb = weights.expect("fc chain needs weights");
                let (win, st) = (wb.pool.window, wb.pool.stride);
                let hp = if h < win { 0 } else { (h - win) / st + 1 };
                let wp = if w < win { 0 } else { (w - win) / st + 1 };
                let mut x = vec![0.0; k * hp * wp];
                for c in 0..k {
                    for i in 0..hp {
                        for j in 0..wp {
                            let mut m = f64::NEG_INFINITY;
                            for di in 0..win {
                                for dj in 0..win {
                                    let v = if zero(t, c) { 0.0 } else { data[[t, c, i * st + di, j * st + dj]] };
                                    m = m.max(v);
                                }
                            }
                            let idx = match acts.layout() {
                                Layout::ChannelMajor => (c * hp + i) * wp + j,
                                Layout::SpatialMajor => (i * wp + j) * k + c,
                            };
                            x[idx] = m;
                        }
                    }
                }
                let d1 = wb.w1.nrows();
                let mut a1 = vec![0.0; d1];
                for (o, a) in a1.iter_mut().enumerate() {
                    let mut s = wb.b1[o];
                    for (i, xi) in x.iter().enumerate() {
                        s += wb.w1[[o, i]] * xi;
                    }
                    *a = s.max(0.0);
                }
                (0..wb.w2.nrows())
                    .map(|o| {
                        let mut s = wb.b2[o];
                        for (i, ai) in a1.iter().enumerate() {
                            s += wb.w2[[o, i]] * ai;
                        }
                        s.max(0.0)
                    })
                    .collect()
            }
        })
        .collect();
    let d = rows[0].len();
    Array2::from_shape_fn((n, d), |(t, j)| rows[t][j])
}

/// Dataset AIS recomputed from scratch for every channel.
pub fn naive_dataset_ais(
    acts: &ActivationBundle,
    weights: Option<&WeightBundle>,
    mode: ArchitectureMode,
    h: &Array2<f64>,
    baseline: &str,
    variant: &str,
) -> (f64, Vec<f64>) {
    let hu = condensed_square(h);
    let full = naive_embed(acts, weights, mode, |_, _| false);
    let base = spearman(&condensed(&full, baseline), &hu);
    let k = acts.data().dim().1;
    let ais = (0..k)
        .map(|c| {
            let e = naive_embed(acts, weights, mode, |_, cc| cc == c);
            base - spearman(&condensed(&e, variant), &hu)
        })
        .collect();
    (base, ais)
}

/// Two distinct entries so close that rank ties depend on rounding.
pub fn has_near_tie(v: &[f64]) -> bool {
    v.iter().enumerate().any(|(i, a)| {
        v[i + 1..]
            .iter()
            .any(|b| (a - b).abs() < 1e-9 * a.abs().max(b.abs()).max(1.0))
    })
}

pub fn mean_abs_dev(x: &[f64]) -> f64 {
    let m = x.iter().sum::<f64>() / x.len() as f64;
    x.iter().map(|v| (v - m).abs()).sum::<f64>() / x.len() as f64
}

/// `D` from ECDFs evaluated at every pooled sample point.
pub fn ks_statistic(a: &[f64], b: &[f64]) -> f64 {
    let ecdf = |s: &[f64], x: f64| s.iter().filter(|v| **v <= x).count() as f64 / s.len() as f64;
    a.iter()
        .chain(b)
        .map(|x| (ecdf(a, *x) - ecdf(b, *x)).abs())
        .fold(0.0, f64::max)
}

/// `Q(λ) = 2 Σ (−1)^(j−1) exp(−2 j² λ²)`, summed until the terms vanish.
pub fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    let mut s = 0.0;
    for j in 1..200_000u64 {
        let term = (-2.0 * (j * j) as f64 * lambda * lambda).exp();
        s += if j % 2 == 1 { term } else { -term };
        if term < 1e-300 {
            break;
        }
    }
    (2.0 * s).clamp(0.0, 1.0)
}

pub fn ks_p(a: &[f64], b: &[f64]) -> f64 {
    let d = ks_statistic(a, b);
    let en = (a.len() * b.len()) as f64 / (a.len() + b.len()) as f64;
    let en = en.sqrt();
    kolmogorov_q((en + 0.12 + 0.11 / en) * d)
}

/// Two-sided Student-t tail via the finite trigonometric series for integer
/// degrees of freedom.
pub fn t_two_sided(t: f64, df: usize) -> f64 {
    let theta = (t.abs() / (df as f64).sqrt()).atan();
    let (s, c) = theta.sin_cos();
    // A(t | ν) = P(|T| < t)
    let a = if df % 2 == 1 {
        let mut sum = 0.0;
        if df > 1 {
            let mut term = c;
            sum = term;
            let mut k = 3;
            while k < df {
                term *= (k - 1) as f64 / k as f64 * c * c;
                sum += term;
                k += 2;
            }
        }
        2.0 / PI * (theta + s * sum)
    } else {
        let mut term = 1.0;
        let mut sum = 1.0;
        let mut k = 2;
        while k < df {
            term *= (k - 1) as f64 / k as f64 * c * c;
            sum += term;
            k += 2;
        }
        s * sum
    };
    (1.0 - a).max(0.0)
}

pub fn paired_t(a: &[f64], b: &[f64]) -> (f64, f64) {
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let n = d.len() as f64;
    let m = d.iter().sum::<f64>() / n;
    let sd = (d.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let t = m / (sd / n.sqrt());
    (t, t_two_sided(t, d.len() - 1))
}

/// Bilinear sample of `map` at fractional source coordinates, clamped.
pub fn bilinear_at(map: &Array2<f64>, y: f64, x: f64) -> f64 {
    let (h, w) = map.dim();
    let y = y.clamp(0.0, (h - 1) as f64);
    let x = x.clamp(0.0, (w - 1) as f64);
    let (y0, x0) = (y.floor() as usize, x.floor() as usize);
    let (y1, x1) = ((y0 + 1).min(h - 1), (x0 + 1).min(w - 1));
    let (fy, fx) = (y - y0 as f64, x - x0 as f64);
    map[[y0, x0]] * (1.0 - fy) * (1.0 - fx)
        + map[[y0, x1]] * (1.0 - fy) * fx
        + map[[y1, x0]] * fy * (1.0 - fx)
        + map[[y1, x1]] * fy * fx
}

/// Percentile by sorting and interpolating between neighbouring order statistics.
pub fn percentile(values: &[f64], p: f64) -> f64 {
    let mut s = values.to_vec();
    s.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let pos = p / 100.0 * (s.len() - 1) as f64;
    let i = pos as usize;
    if i + 1 >= s.len() {
        return s[s.len() - 1];
    }
    s[i] * (1.0 - (pos - i as f64)) + s[i + 1] * (pos - i as f64)
}
