use std::path::{Path, PathBuf};

use ais_core::heatmap::MapSource;
use ais_core::render::Colormap;
use ais_core::selection::{MetricConfig, DEFAULT_FOLDS, DEFAULT_REPEATS};
use serde::{Deserialize, Serialize};

use crate::output::{CliError, CliResult};

pub const DEFAULT_SEED: u64 = 0;
pub const DEFAULT_BINS: usize = 30;

/// Every tunable of a run. Command-line flags fill it first; keys present in
/// the `--config` file then replace them.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Settings {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub command: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub manifest: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub manifest_b: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub baseline_metric: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub variant_metric: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub repeats: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub folds: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub images: Option<Vec<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub map_source: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub colormap: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub size: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub both_models: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dump_embeddings: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ais_a: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ais_b: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bins: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub inputs: Option<Vec<PathBuf>>,
    /// Results do not depend on it, so it stays out of the snapshot.
    #[serde(skip_serializing)]
    pub workers: Option<usize>,
}

macro_rules! overlay_fields {
    ($dst:ident, $src:ident; $($f:ident),*) => {
        $(if $src.$f.is_some() { $dst.$f = $src.$f; })*
    };
}

impl Settings {
    pub fn from_toml_file(path: &Path) -> CliResult<Settings> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        toml::from_str(&text).map_err(|e| CliError::Input(format!("config {}: {e}", path.display())))
    }

    /// Keys set in `file` win.
    pub fn overlay(&mut self, file: Settings) {
        let this = self;
        overlay_fields!(this, file; manifest, manifest_b, baseline_metric, variant_metric, seed, repeats,
            folds, images, map_source, colormap, size, both_models, dump_embeddings, ais_a, ais_b, bins,
            inputs, workers);
    }

    pub fn manifest(&self) -> CliResult<&Path> {
        self.manifest.as_deref().ok_or_else(|| CliError::Input("--manifest is required".into()))
    }

    pub fn metric_config(&self) -> CliResult<MetricConfig> {
        let d = MetricConfig::default();
        let parse = |v: &Option<String>, default| match v {
            Some(s) => s.parse().map_err(CliError::Input),
            None => Ok(default),
        };
        Ok(MetricConfig {
            baseline: parse(&self.baseline_metric, d.baseline)?,
            variant: parse(&self.variant_metric, d.variant)?,
        })
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(DEFAULT_SEED)
    }

    pub fn repeats(&self) -> usize {
        self.repeats.unwrap_or(DEFAULT_REPEATS)
    }

    pub fn folds(&self) -> usize {
        self.folds.unwrap_or(DEFAULT_FOLDS)
    }

    pub fn bins(&self) -> usize {
        self.bins.unwrap_or(DEFAULT_BINS)
    }

    pub fn colormap(&self) -> CliResult<Colormap> {
        match &self.colormap {
            Some(s) => s.parse().map_err(CliError::Input),
            None => Ok(Colormap::default()),
        }
    }

    /// `pre` or `post`; `post` needs the pooling spec of the dataset.
    pub fn map_source(&self, pool: ais_core::io::PoolSpec) -> CliResult<MapSource> {
        match self.map_source.as_deref() {
            None | Some("pre") => Ok(MapSource::PrePool),
            Some("post") => Ok(MapSource::PostPool(pool)),
            Some(other) => Err(CliError::Input(format!("map_source must be pre or post, got {other:?}"))),
        }
    }

    /// Fills defaults for everything the command reads so the snapshot is
    /// complete.
    pub fn resolved(&self, command: &str) -> CliResult<Settings> {
        let mut s = self.clone();
        s.command = Some(command.into());
        let needs_metrics = !matches!(command, "stats" | "report");
        if needs_metrics {
            let m = self.metric_config()?;
            s.baseline_metric = Some(m.baseline.to_string());
            s.variant_metric = Some(m.variant.to_string());
        }
        match command {
            "crossval" => {
                s.seed = Some(self.seed());
                s.repeats = Some(self.repeats());
                s.folds = Some(self.folds());
            }
            "heatmap" | "compare-saliency" => {
                s.colormap = Some(self.colormap()?.to_string());
                s.map_source = Some(self.map_source.clone().unwrap_or_else(|| "pre".into()));
                if command == "heatmap" {
                    s.both_models = Some(self.both_models.unwrap_or(false));
                }
            }
            "stats" => s.bins = Some(self.bins()),
            "dataset-ais" => s.dump_embeddings = Some(self.dump_embeddings.unwrap_or(false)),
            _ => {}
        }
        Ok(s)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("settings serialize")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_keys_override_flags() {
        let mut s = Settings {
            seed: Some(1),
            repeats: Some(3),
            ..Default::default()
        };
        let file: Settings = toml::from_str("seed = 7\nvariant_metric = \"pearson\"").unwrap();
        s.overlay(file);
        assert_eq!(s.seed, Some(7));
        assert_eq!(s.repeats, Some(3));
        assert_eq!(s.metric_config().unwrap().variant.to_string(), "pearson");
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<Settings>("sede = 7").is_err());
    }

    #[test]
    fn snapshot_omits_workers() {
        let s = Settings {
            workers: Some(4),
            ..Default::default()
        };
        let text = s.resolved("crossval").unwrap().to_toml();
        assert!(!text.contains("workers"));
        assert!(text.contains("repeats = 8"));
        assert!(text.contains("baseline_metric = \"spearman\""));
    }
}
