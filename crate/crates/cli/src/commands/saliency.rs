use ais_core::render::overlay_contours;
use ais_core::saliency::{pr_curve, summarize_rr, RrResult, RR_LEVELS, TARGET_PERCENTILES};
use ais_core::Error;
use log::warn;
use ndarray::Axis;

use super::heatmap::heatmaps;
use super::{fmt_f, load, select_images, underlay};
use crate::output::{CliError, CliResult, OutDir, Table};
use crate::settings::Settings;

pub fn run(s: &Settings, out: &OutDir) -> CliResult<()> {
    let ds = load(s.manifest()?)?;
    let cfg = s.metric_config()?;
    let sal = ds.saliency()?;
    let (_, h, w) = sal.dim();
    let mut images = select_images(&ds, s.images.as_deref())?;
    // aggregation order is by image id
    images.sort_by(|a, b| ds.manifest.image_ids[*a].cmp(&ds.manifest.image_ids[*b]));
    let (maps, _) = heatmaps(&ds, cfg, &images, (h, w), s)?;

    let overlays = out.subdir("overlays")?;
    let mut pr = Table::new(&["image_id", "target", "predictor", "precision", "recall", "empty_predictor"]);
    let mut rr = Table::new(&["image_id", "q", "rr", "flag", "sal_cr", "sal", "not_sal_cr", "not_sal"]);
    let mut skipped = Table::new(&["image_id", "reason"]);
    // [target][predictor] sums of precision and recall
    let mut sums = vec![vec![(0.0, 0.0); 50]; TARGET_PERCENTILES.len()];
    let mut rr_results = Vec::new();
    for (&i, hm) in images.iter().zip(&maps) {
        let id = &ds.manifest.image_ids[i];
        let sal_map = sal.index_axis(Axis(0), i);
        let result = hm.as_ref().map_err(|e| (e.kind(), e.to_string())).and_then(|hm| {
            let compare = || -> Result<_, Error> {
                let curves = TARGET_PERCENTILES
                    .iter()
                    .map(|&t| pr_curve(hm.values.view(), sal_map, t))
                    .collect::<Result<Vec<_>, Error>>()?;
                let path = overlays.join(format!("{id}.png"));
                let entries = overlay_contours(hm.values.view(), sal_map, underlay(&ds, i, (h, w)), &RR_LEVELS, path)?;
                Ok((curves, entries))
            };
            compare().map_err(|e| (e.kind(), e.to_string()))
        });
        let (curves, entries) = match result {
            Ok(v) => v,
            Err((kind, msg)) => {
                warn!("{id}: skipped ({msg})");
                skipped.row(&[id.clone(), kind.into()]);
                continue;
            }
        };
        for (ti, c) in curves.iter().enumerate() {
            for (pi, p) in c.points.iter().enumerate() {
                pr.row(&[
                    id.clone(),
                    fmt_f(c.target_percentile),
                    fmt_f(p.predictor_percentile),
                    fmt_f(p.precision),
                    fmt_f(p.recall),
                    p.empty_predictor.to_string(),
                ]);
                sums[ti][pi].0 += p.precision;
                sums[ti][pi].1 += p.recall;
            }
        }
        for e in &entries {
            rr.row(&[
                id.clone(),
                fmt_f(e.q),
                fmt_f(e.value),
                e.flag.to_string(),
                e.sal_cr.to_string(),
                e.sal.to_string(),
                e.not_sal_cr.to_string(),
                e.not_sal.to_string(),
            ]);
        }
        rr_results.push(RrResult {
            image_id: id.clone(),
            entries,
        });
    }
    if rr_results.is_empty() {
        return Err(CliError::Degenerate("no image could be compared".into()));
    }

    let n = rr_results.len() as f64;
    let mut mean = Table::new(&["target", "predictor", "mean_precision", "mean_recall"]);
    let predictors: Vec<f64> = ais_core::saliency::predictor_percentiles().collect();
    for (ti, t) in TARGET_PERCENTILES.iter().enumerate() {
        for (pi, p) in predictors.iter().enumerate() {
            let (sp, sr) = sums[ti][pi];
            mean.row(&[fmt_f(*t), fmt_f(*p), fmt_f(sp / n), fmt_f(sr / n)]);
        }
    }
    mean.meta("images", rr_results.len());

    let mut summary = Table::new(&["q", "mean", "sd", "n_finite", "n_infinite", "n_undefined"]);
    let category = ds.manifest.category.clone();
    let mut header = vec!["category".to_string()];
    let mut cells = vec![category.clone()];
    for (l, q) in RR_LEVELS.iter().enumerate() {
        let sm = summarize_rr(&rr_results, l);
        summary.row(&[
            fmt_f(*q),
            fmt_f(sm.mean),
            fmt_f(sm.sd),
            sm.n_finite.to_string(),
            sm.n_infinite.to_string(),
            sm.n_undefined.to_string(),
        ]);
        header.push(format!("{q}% vs {q}%"));
        let excluded = sm.n_infinite + sm.n_undefined;
        cells.push(format!("{:.2} ({:.2}) [{excluded} excluded]", sm.mean, sm.sd));
    }
    summary.meta("category", &category);
    summary.meta("metrics", cfg);
    let mut table1 = Table::new(&header.iter().map(String::as_str).collect::<Vec<_>>());
    table1.row(&cells);

    out.text("pr.tsv", &pr.finish())?;
    out.text("pr_mean.tsv", &mean.finish())?;
    out.text("rr.tsv", &rr.finish())?;
    out.text("rr_summary.tsv", &summary.finish())?;
    out.text("rr_table.tsv", &table1.finish())?;
    out.text("skipped.tsv", &skipped.finish())?;
    Ok(())
}
