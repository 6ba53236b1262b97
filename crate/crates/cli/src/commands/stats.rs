use std::path::Path;

use ais_core::io::{read_tensor, Tensor};
use ais_core::stats::{ais_histograms, HistogramPanel};
use ndarray::Array2;

use super::fmt_f;
use crate::output::{CliError, CliResult, OutDir, Table};
use crate::settings::Settings;

fn matrix(path: Option<&Path>, flag: &str) -> CliResult<Array2<f64>> {
    let path = path.ok_or_else(|| CliError::Input(format!("--{flag} is required")))?;
    Ok(read_tensor(path)?.into_array2(flag)?)
}

fn write_panel(out: &OutDir, p: &HistogramPanel) -> CliResult<()> {
    let mut t = Table::new(&["bin_lo", "bin_hi", "count_a", "count_b"]);
    for (b, w) in p.hist_a.edges.windows(2).enumerate() {
        t.row(&[fmt_f(w[0]), fmt_f(w[1]), p.hist_a.counts[b].to_string(), p.hist_b.counts[b].to_string()]);
    }
    out.text(&format!("hist_{}.tsv", p.name), &t.finish())?;
    for (side, v) in [("a", &p.values_a), ("b", &p.values_b)] {
        out.tensor(&format!("{}_{side}.npy", p.name), &Tensor::new(vec![v.len()], v.clone())?)?;
    }
    Ok(())
}

pub fn run(s: &Settings, out: &OutDir) -> CliResult<()> {
    let a = matrix(s.ais_a.as_deref(), "ais-a")?;
    let b = matrix(s.ais_b.as_deref(), "ais-b")?;
    let h = ais_histograms(a.view(), b.view(), s.bins())?;

    let mut t = Table::new(&["panel", "ks_d", "p_value", "n_a", "n_b", "excluded_a", "excluded_b"]);
    for p in [&h.log_feature_means, &h.feature_mad, &h.image_mad] {
        t.row(&[
            p.name.into(),
            fmt_f(p.ks.statistic),
            fmt_f(p.ks.p_value),
            p.values_a.len().to_string(),
            p.values_b.len().to_string(),
            p.excluded.0.to_string(),
            p.excluded.1.to_string(),
        ]);
        write_panel(out, p)?;
    }
    t.meta("bins", s.bins());
    t.meta("ks_p", "asymptotic");
    out.text("stats.tsv", &t.finish())?;
    Ok(())
}
