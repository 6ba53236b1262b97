use std::fmt::Write as _;
use std::fs;

use crate::output::{read_meta, CliError, CliResult, OutDir};
use crate::settings::Settings;

/// Tables whose trailer lines are summarized, in report order.
const SOURCES: [(&str, &str); 7] = [
    ("dataset_ais.tsv", "dataset-level scores"),
    ("image_ais.tsv", "image-level scores"),
    ("selection.tsv", "greedy selection"),
    ("crossval.tsv", "cross-validation"),
    ("match.tsv", "cross-model heatmaps"),
    ("rr_summary.tsv", "relative risk"),
    ("stats.tsv", "distribution tests"),
];

pub fn run(s: &Settings, out: &OutDir) -> CliResult<()> {
    let inputs = s
        .inputs
        .as_deref()
        .ok_or_else(|| CliError::Input("report needs at least one output directory".into()))?;
    let mut text = String::new();
    let mut bars = String::new();
    for dir in inputs {
        let mut found = false;
        writeln!(text, "== {}", dir.display()).unwrap();
        for (file, title) in SOURCES {
            let path = dir.join(file);
            let Ok(body) = fs::read_to_string(&path) else {
                continue;
            };
            found = true;
            writeln!(text, "[{title}] {file}").unwrap();
            let meta = read_meta(&body);
            if meta.is_empty() {
                let rows = body.lines().filter(|l| !l.starts_with('#')).count().saturating_sub(1);
                writeln!(text, "  rows\t{rows}").unwrap();
            }
            for (k, v) in meta {
                writeln!(text, "  {k}\t{v}").unwrap();
            }
        }
        if let Ok(body) = fs::read_to_string(dir.join("bars.tsv")) {
            found = true;
            let mut lines = body.lines().filter(|l| !l.starts_with('#'));
            let header = lines.next().unwrap_or_default();
            if bars.is_empty() {
                bars = format!("{header}\n");
            }
            for l in lines {
                bars.push_str(l);
                bars.push('\n');
            }
        }
        if !found {
            return Err(CliError::Input(format!("{} holds no known result files", dir.display())));
        }
        text.push('\n');
    }
    out.text("report.txt", &text)?;
    if !bars.is_empty() {
        out.text("bars.tsv", &bars)?;
    }
    print!("{text}");
    Ok(())
}
