use ais_core::heatmap::{match_score, max_entropy, Heatmap};
use ais_core::io::{Dataset, Tensor};
use ais_core::render::{render_heatmap, Colormap};
use ais_core::selection::{image_ais_all, MetricConfig};
use ais_core::similarity::pearson;
use ais_core::Error;
use log::warn;
use rayon::prelude::*;

use super::{fmt_f, heatmap_at, load, network, select_images, underlay};
use crate::output::{CliError, CliResult, OutDir, Table};
use crate::settings::Settings;

/// One heatmap per selected image, `Err` where none exists.
pub type Maps = Vec<Result<Heatmap, Error>>;

/// Heatmaps of the selected images and the full image-level score matrix.
pub fn heatmaps(
    ds: &Dataset,
    cfg: MetricConfig,
    images: &[usize],
    out: (usize, usize),
    s: &Settings,
) -> CliResult<(Maps, ndarray::Array2<f64>)> {
    let net = network(ds)?;
    let fwd = net.prepare();
    let ia = image_ais_all(&fwd, ds.judgments()?, cfg)?;
    let source = s.map_source(ds.manifest.pool)?;
    let maps = images
        .par_iter()
        .map(|&t| heatmap_at(ds, t, &ia.rows[t].values, out, source))
        .collect();
    Ok((maps, ia.matrix()))
}

fn render_all(
    ds: &Dataset,
    images: &[usize],
    maps: &[Result<Heatmap, Error>],
    dir: &std::path::Path,
    cmap: Colormap,
) -> CliResult<Table> {
    let mut t = Table::new(&["image_id", "status", "n_weighted"]);
    for (&i, hm) in images.iter().zip(maps) {
        let id = &ds.manifest.image_ids[i];
        match hm {
            Ok(hm) => {
                let ul = underlay(ds, i, hm.dims());
                render_heatmap(hm, ul, cmap, dir.join(format!("{id}.png")))?;
                let n = hm.weights_used.iter().filter(|w| **w > 0.0).count();
                t.row(&[id.clone(), "ok".into(), n.to_string()]);
            }
            Err(e) => {
                warn!("{id}: no heatmap ({e})");
                t.row(&[id.clone(), e.kind().into(), "0".into()]);
            }
        }
    }
    Ok(t)
}

pub fn run(s: &Settings, out: &OutDir) -> CliResult<()> {
    let ds = load(s.manifest()?)?;
    let cfg = s.metric_config()?;
    let cmap = s.colormap()?;
    let images = select_images(&ds, s.images.as_deref())?;
    let size = s.size.unwrap_or(ds.manifest.image_render_size);
    if size == 0 {
        return Err(CliError::Input("size must be positive".into()));
    }

    let (maps, matrix) = heatmaps(&ds, cfg, &images, (size, size), s)?;
    if maps.iter().all(|m| m.is_err()) {
        return Err(CliError::Degenerate("no selected image has a positive score".into()));
    }
    let mut table = render_all(&ds, &images, &maps, &out.subdir("heatmaps")?, cmap)?;
    table.meta("metrics", cfg);
    table.meta("size", size);
    table.meta("upsampling", "bilinear, half-pixel centers, edge clamp");
    out.text("heatmaps.tsv", &table.finish())?;
    out.tensor("image_ais.npy", &Tensor::from_array(&matrix))?;

    if s.both_models != Some(true) {
        return Ok(());
    }
    let path_b = s
        .manifest_b
        .as_deref()
        .ok_or_else(|| CliError::Input("--both-models needs --manifest-b".into()))?;
    let ds_b = load(path_b)?;
    if ds_b.manifest.image_ids != ds.manifest.image_ids {
        return Err(CliError::Input("the two manifests list different images".into()));
    }
    let (maps_b, matrix_b) = heatmaps(&ds_b, cfg, &images, (size, size), s)?;
    let mut table_b = render_all(&ds_b, &images, &maps_b, &out.subdir("heatmaps_b")?, cmap)?;
    table_b.meta("metrics", cfg);
    out.text("heatmaps_b.tsv", &table_b.finish())?;
    out.tensor("image_ais_b.npy", &Tensor::from_array(&matrix_b))?;

    let probs = match (ds.class_probs(), ds_b.class_probs()) {
        (Ok(pa), Ok(pb)) => Some((pa, pb)),
        _ => None,
    };
    let mut t = Table::new(&["image_id", "match", "max_entropy"]);
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for ((&i, ha), hb) in images.iter().zip(&maps).zip(&maps_b) {
        let (Ok(ha), Ok(hb)) = (ha, hb) else {
            continue;
        };
        let m = match_score(ha, hb)?;
        let ent = match probs {
            Some((pa, pb)) => Some(max_entropy(pa.row(i), pb.row(i))?),
            None => None,
        };
        if let Some(e) = ent {
            if !m.degenerate {
                xs.push(m.value);
                ys.push(e);
            }
        }
        t.row(&[
            ds.manifest.image_ids[i].clone(),
            if m.degenerate { "nan".into() } else { fmt_f(m.value) },
            ent.map(fmt_f).unwrap_or_else(|| "-".into()),
        ]);
    }
    if xs.len() >= 3 {
        let r = pearson(&xs, &ys)?;
        t.meta("match_entropy_correlation", if r.degenerate { "nan".to_string() } else { fmt_f(r.value) });
    }
    t.meta("n_pairs", xs.len());
    out.text("match.tsv", &t.finish())?;
    Ok(())
}
