mod common;

use ais_core::io::{ActivationBundle, ArchitectureMode, Layout, PoolSpec};
use ais_core::masking::{MaskSpec, MaskedForward, Network, SweepItem, SweepScope};
use ais_core::selection::{dataset_ais, image_ais, MetricConfig};
use ais_core::similarity::{self, pairwise_similarity, Metric};
use ais_core::stats::{self, MadAxis};
use ais_core::synthetic::{random_activations, random_judgments, random_weights};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn sample(rng: &mut ChaCha8Rng, len: usize, ties: bool) -> Vec<f64> {
    (0..len)
        .map(|_| {
            if ties {
                rng.random_range(0..5) as f64
            } else {
                rng.random::<f64>() * 4.0 - 2.0
            }
        })
        .collect()
}

#[test]
fn correlations_match_reference_over_random_vectors() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for case in 0..1500 {
        let len = rng.random_range(3..40);
        let ties = case % 3 == 0;
        let x = sample(&mut rng, len, ties);
        let y = sample(&mut rng, len, ties);
        let s = similarity::spearman(&x, &y).unwrap().value;
        assert!((s - common::spearman(&x, &y)).abs() <= 1e-9, "spearman case {case}");
        let p = similarity::pearson(&x, &y).unwrap().value;
        assert!((p - common::pearson(&x, &y)).abs() <= 1e-9, "pearson case {case}");
        if x.iter().any(|v| *v != 0.0) && y.iter().any(|v| *v != 0.0) {
            let c = similarity::cosine(&x, &y).unwrap();
            assert!((c - common::cosine(&x, &y)).abs() <= 1e-9, "cosine case {case}");
        }
    }
}

#[test]
fn spearman_ties_example() {
    let (x, y) = ([1.0, 2.0, 2.0, 4.0], [3.0, 1.0, 4.0, 4.0]);
    let got = similarity::spearman(&x, &y).unwrap().value;
    assert!((got - common::spearman(&x, &y)).abs() <= 1e-12);
}

#[test]
fn pairwise_matrix_matches_reference() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..50 {
        let n = rng.random_range(3..9);
        let d = rng.random_range(2..12);
        let e = Array2::from_shape_fn((n, d), |_| rng.random::<f64>() + 0.01);
        for (metric, name) in [(Metric::Spearman, "spearman"), (Metric::Pearson, "pearson"), (Metric::Cosine, "cosine")] {
            let z = pairwise_similarity(e.view(), metric).unwrap();
            for (a, b) in z.values().iter().zip(common::condensed(&e, name)) {
                assert!((a - b).abs() <= 1e-12);
            }
        }
    }
}

#[test]
fn ks_matches_reference() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for case in 0..1000 {
        let (n1, n2) = (rng.random_range(1..60), rng.random_range(1..60));
        let ties = case % 4 == 0;
        let a = sample(&mut rng, n1, ties);
        let shift = rng.random::<f64>();
        let b: Vec<f64> = sample(&mut rng, n2, ties).iter().map(|v| v + shift).collect();
        let ks = stats::ks_two_sample(&a, &b).unwrap();
        assert!((ks.statistic - common::ks_statistic(&a, &b)).abs() <= 1e-12, "D case {case}");
        assert!((ks.p_value - common::ks_p(&a, &b)).abs() <= 1e-6, "p case {case}");
    }
}

#[test]
fn paired_t_matches_reference() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for case in 0..1000 {
        let n = rng.random_range(2..50);
        let a = sample(&mut rng, n, false);
        let shift = rng.random::<f64>() - 0.5;
        let b: Vec<f64> = a.iter().map(|v| v + shift + 0.3 * (rng.random::<f64>() - 0.5)).collect();
        let got = stats::paired_t(&a, &b).unwrap();
        let (t, p) = common::paired_t(&a, &b);
        assert!((got.t - t).abs() <= 1e-9 * t.abs().max(1.0), "t case {case}");
        assert!((got.p_value - p).abs() <= 1e-9, "p case {case}: {} vs {p}", got.p_value);
    }
}

#[test]
fn mad_matches_reference() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..1000 {
        let (r, c) = (rng.random_range(1..12), rng.random_range(1..12));
        let m = Array2::from_shape_fn((r, c), |_| rng.random::<f64>() * 2.0 - 1.0);
        let per_feature = stats::mad(m.view(), MadAxis::PerFeature).unwrap();
        for (j, v) in per_feature.values.iter().enumerate() {
            assert!((v - common::mean_abs_dev(&m.column(j).to_vec())).abs() <= 1e-9);
        }
        let per_image = stats::mad(m.view(), MadAxis::PerImage).unwrap();
        for (i, v) in per_image.values.iter().enumerate() {
            assert!((v - common::mean_abs_dev(&m.row(i).to_vec())).abs() <= 1e-9);
        }
    }
}

struct Instance {
    acts: ActivationBundle,
    weights: Option<ais_core::io::WeightBundle>,
    mode: ArchitectureMode,
}

fn random_instance(rng: &mut ChaCha8Rng, mode: ArchitectureMode) -> Instance {
    let n = rng.random_range(3..7);
    let k = rng.random_range(2..7);
    let (h, w) = (rng.random_range(2..6), rng.random_range(2..6));
    let layout = if rng.random::<bool>() { Layout::ChannelMajor } else { Layout::SpatialMajor };
    let acts = ActivationBundle::new(random_activations(rng, (n, k, h, w), 0.4), layout).unwrap();
    let weights = match mode {
        ArchitectureMode::FcChain => {
            let window = rng.random_range(1..3.min(h.min(w)) + 1);
            let pool = PoolSpec { window, stride: rng.random_range(1..3) };
            let (d1, d2) = (rng.random_range(3..10), rng.random_range(2..8));
            Some(random_weights(rng, k, (h, w), pool, d1, d2).unwrap())
        }
        ArchitectureMode::GlobalPool => None,
    };
    Instance { acts, weights, mode }
}

fn close(a: &Array2<f64>, b: &Array2<f64>, tol: f64) -> bool {
    a.dim() == b.dim() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
}

/// Every cached route against per-mask recomputation from scratch.
fn check_masking(inst: &Instance) {
    let net = Network::new(&inst.acts, inst.weights.as_ref(), inst.mode).unwrap();
    let fwd: MaskedForward<'_> = net.prepare();
    let (n, k) = (inst.acts.n_images(), inst.acts.n_channels());
    let naive = |f: &dyn Fn(usize, usize) -> bool| common::naive_embed(&inst.acts, inst.weights.as_ref(), inst.mode, f);

    assert!(close(fwd.full_embedding(), &naive(&|_, _| false), 1e-6));
    assert!(close(&net.embed(&MaskSpec::None).unwrap().values, &naive(&|_, _| false), 1e-6));
    for (c, item) in fwd.sweep(SweepScope::AllImages).unwrap() {
        let SweepItem::Matrix(e) = item else { panic!("matrix expected") };
        assert!(close(&e, &naive(&|_, cc| cc == c), 1e-6));
        assert!(close(&net.embed(&MaskSpec::ExcludeOne(c)).unwrap().values, &e, 1e-6));
    }
    let t = n / 2;
    for (c, item) in fwd.sweep(SweepScope::SingleImage(t)).unwrap() {
        let SweepItem::Row(r) = item else { panic!("row expected") };
        let reference = naive(&|tt, cc| tt == t && cc == c);
        assert!(r.iter().zip(reference.row(t)).all(|(x, y)| (x - y).abs() <= 1e-6));
        let direct = net.embed(&MaskSpec::SingleImage { image: t, channel: c }).unwrap().values;
        assert!(close(&direct, &reference, 1e-6));
    }
    let order: Vec<usize> = (0..k).rev().collect();
    for (m, e) in fwd.retained_prefixes(&order).unwrap().enumerate() {
        let kept = &order[..=m];
        assert!(close(&e, &naive(&|_, cc| !kept.contains(&cc)), 1e-6));
    }
}

#[test]
fn masking_routes_match_recomputation() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for i in 0..200 {
        let mode = if i % 2 == 0 { ArchitectureMode::FcChain } else { ArchitectureMode::GlobalPool };
        check_masking(&random_instance(&mut rng, mode));
    }
}

#[test]
fn dataset_ais_matches_recomputation() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut checked = 0;
    // 3 images, 4 channels, both heads
    for mode in [ArchitectureMode::FcChain, ArchitectureMode::GlobalPool] {
        for _ in 0..20 {
            let acts = ActivationBundle::new(random_activations(&mut rng, (3, 4, 4, 4), 0.3), Layout::ChannelMajor).unwrap();
            let weights = match mode {
                ArchitectureMode::FcChain => Some(random_weights(&mut rng, 4, (4, 4), PoolSpec::default(), 6, 5).unwrap()),
                ArchitectureMode::GlobalPool => None,
            };
            let h = random_judgments(&mut rng, 3).unwrap();
            let net = Network::new(&acts, weights.as_ref(), mode).unwrap();
            let fwd = net.prepare();
            for (cfg, b, v) in [
                (MetricConfig::default(), "spearman", "cosine"),
                (MetricConfig::consistent(), "cosine", "cosine"),
            ] {
                let Ok(ais) = dataset_ais(&fwd, &h.condensed(), cfg, None) else {
                    continue; // an all-zero embedding row has no cosine
                };
                let (base, reference) = common::naive_dataset_ais(&acts, weights.as_ref(), mode, h.values(), b, v);
                if ais.degenerate.iter().any(|d| *d) {
                    continue;
                }
                assert!((ais.baseline_rho - base).abs() <= 1e-9);
                for (c, (a, r)) in ais.values.iter().zip(&reference).enumerate() {
                    let e = common::naive_embed(&acts, weights.as_ref(), mode, |_, cc| cc == c);
                    if common::has_near_tie(&common::condensed(&e, v)) {
                        continue;
                    }
                    checked += 1;
                    assert!((a - r).abs() <= 1e-9, "{a} vs {r}");
                }
            }
        }
    }
    assert!(checked > 100, "only {checked} comparisons");
}

#[test]
fn image_ais_matches_recomputation() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut checked = 0;
    for _ in 0..20 {
        let (n, k) = (6, 5);
        let acts = ActivationBundle::new(random_activations(&mut rng, (n, k, 4, 4), 0.3), Layout::ChannelMajor).unwrap();
        let weights = random_weights(&mut rng, k, (4, 4), PoolSpec::default(), 8, 6).unwrap();
        let h = random_judgments(&mut rng, n).unwrap();
        let net = Network::new(&acts, Some(&weights), ArchitectureMode::FcChain).unwrap();
        let fwd = net.prepare();
        let full = common::naive_embed(&acts, Some(&weights), ArchitectureMode::FcChain, |_, _| false);
        for t in 0..n {
            let Ok(row) = image_ais(&fwd, &h, t, MetricConfig::default()) else { continue };
            let human: Vec<f64> = (0..n).filter(|u| *u != t).map(|u| h.values()[[t, u]]).collect();
            let sims = |e: &Array2<f64>, kind: &str| -> Vec<f64> {
                (0..n)
                    .filter(|u| *u != t)
                    .map(|u| common::similarity(kind, &e.row(t).to_vec(), &full.row(u).to_vec()))
                    .collect()
            };
            let base = common::spearman(&sims(&full, "spearman"), &human);
            assert!((row.baseline_rho - base).abs() <= 1e-9);
            for c in 0..k {
                if row.degenerate[c] {
                    continue;
                }
                let e = common::naive_embed(&acts, Some(&weights), ArchitectureMode::FcChain, |tt, cc| tt == t && cc == c);
                let variant = sims(&e, "cosine");
                if common::has_near_tie(&variant) {
                    continue;
                }
                checked += 1;
                let expect = base - common::spearman(&variant, &human);
                assert!((row.values[c] - expect).abs() <= 1e-9);
            }
        }
    }
    assert!(checked > 100, "only {checked} comparisons");
}
