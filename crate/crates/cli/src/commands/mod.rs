pub mod ais;
pub mod crossval;
pub mod heatmap;
pub mod report;
pub mod saliency;
pub mod stats;

use std::path::Path;

use ais_core::heatmap::{ais_weights, compose, Heatmap, MapSource};
use ais_core::io::{load_dataset, Dataset};
use ais_core::masking::{max_pool, Network};
use ais_core::Error;
use log::info;

use crate::output::{CliError, CliResult};

pub fn load(path: &Path) -> CliResult<Dataset> {
    info!("loading {}", path.display());
    Ok(load_dataset(path)?)
}

pub fn network(ds: &Dataset) -> CliResult<Network<'_>> {
    Ok(Network::new(&ds.activations, ds.weights.as_ref(), ds.manifest.architecture_mode)?)
}

/// Indices of the requested image ids, in manifest order; all when `None`.
pub fn select_images(ds: &Dataset, ids: Option<&[String]>) -> CliResult<Vec<usize>> {
    let all = &ds.manifest.image_ids;
    let Some(ids) = ids else {
        return Ok((0..all.len()).collect());
    };
    let mut idx = Vec::with_capacity(ids.len());
    for id in ids {
        match all.iter().position(|a| a == id) {
            Some(i) => idx.push(i),
            None => return Err(CliError::Input(format!("unknown image id {id:?}"))),
        }
    }
    idx.sort_unstable();
    idx.dedup();
    Ok(idx)
}

/// Heatmap of image `t` at `(h, w)` pixels, or why none exists.
pub fn heatmap_at(
    ds: &Dataset,
    t: usize,
    ais_row: &[f64],
    out: (usize, usize),
    source: MapSource,
) -> Result<Heatmap, Error> {
    let weights = ais_weights(ais_row)?;
    let acts = ds.activations.image(t);
    let values = match source {
        MapSource::PrePool => compose(acts, &weights, out)?,
        MapSource::PostPool(pool) => compose(max_pool(acts, pool).view(), &weights, out)?,
    };
    Ok(Heatmap {
        values,
        weights_used: weights,
        image_id: ds.manifest.image_ids[t].clone(),
    })
}

/// Underlay of image `t` when the dataset ships images of matching size.
pub fn underlay(ds: &Dataset, t: usize, dims: (usize, usize)) -> Option<ndarray::ArrayView3<'_, f64>> {
    let images = ds.images.as_ref()?;
    let u = images.index_axis(ndarray::Axis(0), t);
    (u.dim().0 == dims.0 && u.dim().1 == dims.1).then_some(u)
}

pub fn fmt_f(v: f64) -> String {
    format!("{v}")
}
