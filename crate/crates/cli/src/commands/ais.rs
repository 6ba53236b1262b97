use ais_core::io::Tensor;
use ais_core::selection::{self, rank_features};

use super::{fmt_f, load, network};
use crate::output::{CliResult, OutDir, Table};
use crate::settings::Settings;

pub fn dataset_ais(s: &Settings, out: &OutDir) -> CliResult<()> {
    let ds = load(s.manifest()?)?;
    let net = network(&ds)?;
    let fwd = net.prepare();
    let cfg = s.metric_config()?;
    let ais = selection::dataset_ais(&fwd, &ds.judgments()?.condensed(), cfg, None)?;

    let ranked = rank_features(&ais.values);
    let mut rank = vec![0; ranked.len()];
    for (r, &k) in ranked.iter().enumerate() {
        rank[k] = r + 1;
    }
    let mut t = Table::new(&["channel", "ais", "perturbed_rho", "degenerate", "rank"]);
    for (k, r) in rank.iter().enumerate() {
        t.row(&[
            k.to_string(),
            fmt_f(ais.values[k]),
            fmt_f(ais.perturbed_rho[k]),
            ais.degenerate[k].to_string(),
            r.to_string(),
        ]);
    }
    t.meta("dataset", &ds.manifest.dataset_name);
    t.meta("category", &ds.manifest.category);
    t.meta("metrics", cfg);
    t.meta("baseline_rho", ais.baseline_rho);
    t.meta("baseline_degenerate", ais.baseline_degenerate);
    out.text("dataset_ais.tsv", &t.finish())?;
    out.tensor("dataset_ais.npy", &Tensor::new(vec![ais.values.len()], ais.values.clone())?)?;
    if s.dump_embeddings == Some(true) {
        out.tensor("embeddings.npy", &Tensor::from_array(fwd.full_embedding()))?;
    }
    Ok(())
}

pub fn image_ais(s: &Settings, out: &OutDir) -> CliResult<()> {
    let ds = load(s.manifest()?)?;
    let net = network(&ds)?;
    let fwd = net.prepare();
    let cfg = s.metric_config()?;
    let ia = selection::image_ais_all(&fwd, ds.judgments()?, cfg)?;

    let mut t = Table::new(&["image_id", "baseline_rho", "baseline_degenerate", "n_degenerate", "n_positive", "top_channel"]);
    for row in &ia.rows {
        t.row(&[
            ds.manifest.image_ids[row.image].clone(),
            fmt_f(row.baseline_rho),
            row.baseline_degenerate.to_string(),
            row.degenerate.iter().filter(|d| **d).count().to_string(),
            row.values.iter().filter(|v| **v > 0.0).count().to_string(),
            rank_features(&row.values)[0].to_string(),
        ]);
    }
    t.meta("dataset", &ds.manifest.dataset_name);
    t.meta("category", &ds.manifest.category);
    t.meta("metrics", cfg);
    out.text("image_ais.tsv", &t.finish())?;
    out.tensor("image_ais.npy", &Tensor::from_array(&ia.matrix()))?;
    Ok(())
}

pub fn select(s: &Settings, out: &OutDir) -> CliResult<()> {
    let ds = load(s.manifest()?)?;
    let net = network(&ds)?;
    let fwd = net.prepare();
    let cfg = s.metric_config()?;
    let hu = ds.judgments()?.condensed();
    let ais = selection::dataset_ais(&fwd, &hu, cfg, None)?;
    let sel = selection::greedy_select(&ais, &fwd, &hu, None, cfg)?;

    let mut t = Table::new(&["size", "added_channel", "ais", "soi", "degenerate"]);
    for (m, &k) in sel.ranked_features.iter().enumerate() {
        t.row(&[
            (m + 1).to_string(),
            k.to_string(),
            fmt_f(ais.values[k]),
            fmt_f(sel.curve[m]),
            sel.curve_degenerate[m].to_string(),
        ]);
    }
    t.meta("category", &ds.manifest.category);
    t.meta("metrics", cfg);
    t.meta("s_star_size", sel.s_star_size);
    t.meta("s_star", sel.s_star.iter().map(|k| k.to_string()).collect::<Vec<_>>().join(","));
    t.meta("best_rho", sel.best_rho());
    t.meta("full_rho", sel.full_rho());
    out.text("selection.tsv", &t.finish())?;
    out.tensor("selection_curve.npy", &Tensor::new(vec![sel.curve.len()], sel.curve.clone())?)?;
    Ok(())
}
