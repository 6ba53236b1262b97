use ais_core::io::Tensor;
use ais_core::selection::{self, RngConfig};
use ais_core::stats::loftus_masson_se;
use ndarray::Array2;

use super::{fmt_f, load, network};
use crate::output::{CliError, CliResult, OutDir, Table};
use crate::settings::Settings;

pub fn run(s: &Settings, out: &OutDir) -> CliResult<()> {
    let ds = load(s.manifest()?)?;
    let net = network(&ds)?;
    let fwd = net.prepare();
    let cfg = s.metric_config()?;
    let hu = ds.judgments()?.condensed();
    let report = selection::crossval(&fwd, &hu, cfg, RngConfig { seed: s.seed() }, s.repeats(), s.folds())?;

    let used: Vec<_> = report.used().collect();
    if used.is_empty() {
        return Err(CliError::Degenerate(format!("all {} folds were skipped", report.records.len())));
    }
    out.text("crossval.tsv", &report.to_tsv())?;

    let cols = 7;
    let mut flat = Vec::with_capacity(report.records.len() * cols);
    for r in &report.records {
        flat.extend([
            r.repeat as f64,
            r.fold as f64,
            r.full_test,
            r.retained_test,
            r.s_star_size as f64,
            r.train_full,
            r.train_retained,
        ]);
    }
    out.tensor("crossval.npy", &Tensor::new(vec![report.records.len(), cols], flat)?)?;

    // folds are the subjects, full/retained the two conditions
    let paired = Array2::from_shape_fn((used.len(), 2), |(i, c)| {
        if c == 0 {
            used[i].full_test
        } else {
            used[i].retained_test
        }
    });
    let se = if used.len() >= 2 {
        loftus_masson_se(paired.view())?
    } else {
        vec![f64::NAN; 2]
    };
    let mut bars = Table::new(&["category", "condition", "mean", "adjusted_se", "n_folds"]);
    let category = &ds.manifest.category;
    bars.row(&[category.clone(), "full".into(), fmt_f(report.mean_full), fmt_f(se[0]), used.len().to_string()]);
    bars.row(&[
        category.clone(),
        "retained".into(),
        fmt_f(report.mean_retained),
        fmt_f(se[1]),
        used.len().to_string(),
    ]);
    bars.meta("metrics", cfg);
    if let Some(t) = &report.t_test {
        bars.meta("t", t.t);
        bars.meta("df", t.df);
        bars.meta("p_value", t.p_value);
    }
    out.text("bars.tsv", &bars.finish())?;
    Ok(())
}
