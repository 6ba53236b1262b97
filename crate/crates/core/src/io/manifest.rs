//! Plain-text dataset manifest and eager, all-violations validation.
//!
//! Grammar: one `key = value` per line, `#` starts a comment, blank lines are
//! ignored. Artifact paths are resolved relative to the manifest's directory.
//!
//! ```text
//! dataset_name = animals
//! n_images = 120
//! image_ids = a000,a001,...
//! architecture_mode = fc-chain
//! feature_maps = 512
//! feature_map_height = 14
//! feature_map_width = 14
//! activations = acts.npy
//! weights = weights.npz
//! judgments = judgments.npy
//! ```

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use ndarray::Array2;

use super::archive::read_archive;
use super::bundle::{ActivationBundle, ClassProbs, HumanJudgmentMatrix, Layout, PoolSpec, WeightBundle};
use super::npy::{read_tensor, Tensor};
use crate::error::{Error, Result};

/// Role a file plays in an experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ArtifactRole {
    Activations,
    Weights,
    Judgments,
    ClassProbs,
    Saliency,
    EmbeddingsGolden,
    /// `[n × H_img × W_img × 3]` RGB underlays in `[0, 1]`.
    Images,
}

impl ArtifactRole {
    pub const ALL: [ArtifactRole; 7] = [
        ArtifactRole::Activations,
        ArtifactRole::Weights,
        ArtifactRole::Judgments,
        ArtifactRole::ClassProbs,
        ArtifactRole::Saliency,
        ArtifactRole::EmbeddingsGolden,
        ArtifactRole::Images,
    ];

    pub fn key(self) -> &'static str {
        match self {
            ArtifactRole::Activations => "activations",
            ArtifactRole::Weights => "weights",
            ArtifactRole::Judgments => "judgments",
            ArtifactRole::ClassProbs => "class_probs",
            ArtifactRole::Saliency => "saliency",
            ArtifactRole::EmbeddingsGolden => "embeddings_golden",
            ArtifactRole::Images => "images",
        }
    }

    fn from_key(key: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|r| r.key() == key)
    }
}

impl fmt::Display for ArtifactRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

/// How embeddings are produced from the deepest feature maps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArchitectureMode {
    /// Max-pool, flatten, then two rectified affine stages.
    FcChain,
    /// Spatial mean of each channel.
    GlobalPool,
}

impl FromStr for ArchitectureMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "fc-chain" => Ok(ArchitectureMode::FcChain),
            "global-pool" => Ok(ArchitectureMode::GlobalPool),
            other => Err(format!("unknown architecture_mode {other:?}")),
        }
    }
}

impl fmt::Display for ArchitectureMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ArchitectureMode::FcChain => "fc-chain",
            ArchitectureMode::GlobalPool => "global-pool",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub dataset_name: String,
    pub n_images: usize,
    pub image_ids: Vec<String>,
    pub category: String,
    pub paths: BTreeMap<ArtifactRole, PathBuf>,
    pub architecture_mode: ArchitectureMode,
    pub feature_maps: usize,
    pub feature_map_height: usize,
    pub feature_map_width: usize,
    pub image_render_size: usize,
    pub layout: Layout,
    pub pool: PoolSpec,
    /// Directory relative paths are resolved against.
    pub base_dir: PathBuf,
}

impl DatasetManifest {
    pub fn resolve(&self, role: ArtifactRole) -> Option<PathBuf> {
        self.paths.get(&role).map(|p| self.base_dir.join(p))
    }

    /// Parses manifest text without touching any referenced file.
    pub fn parse(text: &str, base_dir: impl Into<PathBuf>) -> Result<Self> {
        let mut issues = Vec::new();
        let mut kv: BTreeMap<String, (usize, String)> = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                issues.push(Error::ManifestSyntax {
                    line: idx + 1,
                    reason: "expected `key = value`".into(),
                });
                continue;
            };
            let (k, v) = (k.trim().to_string(), v.trim().to_string());
            if kv.insert(k.clone(), (idx + 1, v)).is_some() {
                issues.push(Error::ManifestSyntax {
                    line: idx + 1,
                    reason: format!("duplicate key {k}"),
                });
            }
        }

        let mut paths = BTreeMap::new();
        let mut scalars = BTreeMap::new();
        for (k, (line, v)) in kv {
            if let Some(role) = ArtifactRole::from_key(&k) {
                paths.insert(role, PathBuf::from(v));
            } else if SCALAR_KEYS.contains(&k.as_str()) {
                scalars.insert(k, v);
            } else {
                issues.push(Error::ManifestSyntax {
                    line,
                    reason: format!("unknown key {k}"),
                });
            }
        }

        let mut text_field = |key: &str, issues: &mut Vec<Error>| -> Option<String> {
            let v = scalars.remove(key);
            if v.is_none() {
                issues.push(Error::InvalidValue {
                    key: key.into(),
                    reason: "required key is missing".into(),
                });
            }
            v
        };
        fn parsed<T: FromStr>(key: &str, v: Option<String>, issues: &mut Vec<Error>) -> Option<T>
        where
            T::Err: fmt::Display,
        {
            let v = v?;
            match v.parse::<T>() {
                Ok(x) => Some(x),
                Err(e) => {
                    issues.push(Error::InvalidValue {
                        key: key.into(),
                        reason: format!("{v:?}: {e}"),
                    });
                    None
                }
            }
        }

        let dataset_name = text_field("dataset_name", &mut issues);
        let n_images = text_field("n_images", &mut issues);
        let n_images: Option<usize> = parsed("n_images", n_images, &mut issues);
        let image_ids = text_field("image_ids", &mut issues).map(|v| {
            v.split(',')
                .map(|s| s.trim().to_string())
                .filter(|s| !s.is_empty())
                .collect::<Vec<_>>()
        });
        let mode = text_field("architecture_mode", &mut issues);
        let mode: Option<ArchitectureMode> = parsed("architecture_mode", mode, &mut issues);
        let k = text_field("feature_maps", &mut issues);
        let k: Option<usize> = parsed("feature_maps", k, &mut issues);
        let h = text_field("feature_map_height", &mut issues);
        let h: Option<usize> = parsed("feature_map_height", h, &mut issues);
        let w = text_field("feature_map_width", &mut issues);
        let w: Option<usize> = parsed("feature_map_width", w, &mut issues);
        let category = scalars.remove("category").unwrap_or_default();
        let render: Option<usize> = parsed(
            "image_render_size",
            Some(scalars.remove("image_render_size").unwrap_or_else(|| "224".into())),
            &mut issues,
        );
        let layout: Option<Layout> = parsed(
            "layout",
            Some(scalars.remove("layout").unwrap_or_else(|| "channel-major".into())),
            &mut issues,
        );
        let window: Option<usize> = parsed(
            "pool_window",
            Some(scalars.remove("pool_window").unwrap_or_else(|| "2".into())),
            &mut issues,
        );
        let stride: Option<usize> = parsed(
            "pool_stride",
            Some(scalars.remove("pool_stride").unwrap_or_else(|| "2".into())),
            &mut issues,
        );

        if let (Some(ids), Some(n)) = (&image_ids, n_images) {
            if ids.len() != n {
                issues.push(Error::Shape {
                    what: "image_ids".into(),
                    expected: vec![n],
                    got: vec![ids.len()],
                });
            }
            let mut seen = HashSet::new();
            for id in ids {
                if !seen.insert(id) {
                    issues.push(Error::InvalidValue {
                        key: "image_ids".into(),
                        reason: format!("duplicate id {id}"),
                    });
                }
            }
        }
        if !paths.contains_key(&ArtifactRole::Activations) {
            issues.push(Error::MissingArtifact(ArtifactRole::Activations));
        }
        match mode {
            Some(ArchitectureMode::FcChain) if !paths.contains_key(&ArtifactRole::Weights) => {
                issues.push(Error::MissingArtifact(ArtifactRole::Weights));
            }
            Some(ArchitectureMode::GlobalPool) if paths.contains_key(&ArtifactRole::Weights) => {
                issues.push(Error::InvalidValue {
                    key: "weights".into(),
                    reason: "global-pool mode takes no weight bundle".into(),
                });
            }
            _ => {}
        }
        if matches!((window, stride), (Some(0), _) | (_, Some(0))) {
            issues.push(Error::InvalidValue {
                key: "pool".into(),
                reason: "window and stride must be positive".into(),
            });
        }

        if !issues.is_empty() {
            return Err(Error::Manifest(issues));
        }
        Ok(DatasetManifest {
            dataset_name: dataset_name.expect("checked"),
            n_images: n_images.expect("checked"),
            image_ids: image_ids.expect("checked"),
            category,
            paths,
            architecture_mode: mode.expect("checked"),
            feature_maps: k.expect("checked"),
            feature_map_height: h.expect("checked"),
            feature_map_width: w.expect("checked"),
            image_render_size: render.expect("checked"),
            layout: layout.expect("checked"),
            pool: PoolSpec {
                window: window.expect("checked"),
                stride: stride.expect("checked"),
            },
            base_dir: base_dir.into(),
        })
    }
}

const SCALAR_KEYS: &[&str] = &[
    "dataset_name",
    "n_images",
    "image_ids",
    "category",
    "architecture_mode",
    "feature_maps",
    "feature_map_height",
    "feature_map_width",
    "image_render_size",
    "layout",
    "pool_window",
    "pool_stride",
];

impl fmt::Display for DatasetManifest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "dataset_name = {}", self.dataset_name)?;
        writeln!(f, "n_images = {}", self.n_images)?;
        writeln!(f, "image_ids = {}", self.image_ids.join(","))?;
        if !self.category.is_empty() {
            writeln!(f, "category = {}", self.category)?;
        }
        writeln!(f, "architecture_mode = {}", self.architecture_mode)?;
        writeln!(f, "feature_maps = {}", self.feature_maps)?;
        writeln!(f, "feature_map_height = {}", self.feature_map_height)?;
        writeln!(f, "feature_map_width = {}", self.feature_map_width)?;
        writeln!(f, "image_render_size = {}", self.image_render_size)?;
        writeln!(f, "layout = {}", self.layout)?;
        if self.architecture_mode == ArchitectureMode::FcChain {
            writeln!(f, "pool_window = {}", self.pool.window)?;
            writeln!(f, "pool_stride = {}", self.pool.stride)?;
        }
        for (role, path) in &self.paths {
            writeln!(f, "{} = {}", role, path.display())?;
        }
        Ok(())
    }
}

/// Every artifact of one experiment, loaded and cross-validated.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub manifest: DatasetManifest,
    pub activations: ActivationBundle,
    pub weights: Option<WeightBundle>,
    pub judgments: Option<HumanJudgmentMatrix>,
    pub class_probs: Option<ClassProbs>,
    /// `[n × H_img × W_img]`
    pub saliency: Option<ndarray::Array3<f64>>,
    /// `[n × d]` reference embeddings from the extractor.
    pub golden_embeddings: Option<Array2<f64>>,
    /// `[n × H_img × W_img × 3]`
    pub images: Option<ndarray::Array4<f64>>,
}

impl Dataset {
    pub fn judgments(&self) -> Result<&HumanJudgmentMatrix> {
        self.judgments
            .as_ref()
            .ok_or(Error::MissingArtifact(ArtifactRole::Judgments))
    }

    pub fn saliency(&self) -> Result<&ndarray::Array3<f64>> {
        self.saliency
            .as_ref()
            .ok_or(Error::MissingArtifact(ArtifactRole::Saliency))
    }

    pub fn class_probs(&self) -> Result<&ClassProbs> {
        self.class_probs
            .as_ref()
            .ok_or(Error::MissingArtifact(ArtifactRole::ClassProbs))
    }
}

/// Parses and validates a manifest, shape-checking every referenced tensor.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<DatasetManifest> {
    load_dataset(path).map(|d| d.manifest)
}

/// Like [`load_manifest`] but keeps the loaded bundles.
pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let manifest = DatasetManifest::parse(&text, base)?;
    Loader::new(&manifest).run()
}

struct Loader<'a> {
    m: &'a DatasetManifest,
    issues: Vec<Error>,
}

impl<'a> Loader<'a> {
    fn new(m: &'a DatasetManifest) -> Self {
        Loader {
            m,
            issues: Vec::new(),
        }
    }

    fn read(&mut self, role: ArtifactRole) -> Option<Tensor> {
        let path = self.m.resolve(role)?;
        if !path.is_file() {
            self.issues.push(Error::MissingArtifact(role));
            return None;
        }
        match read_tensor(&path) {
            Ok(t) => Some(t),
            Err(e) => {
                self.issues.push(e);
                None
            }
        }
    }

    /// Records a shape error; `None` in `expected` matches any extent.
    fn check(&mut self, role: ArtifactRole, t: &Tensor, expected: &[Option<usize>]) -> bool {
        let ok = t.shape.len() == expected.len()
            && t.shape.iter().zip(expected).all(|(g, e)| e.is_none_or(|e| e == *g));
        if !ok {
            self.issues.push(Error::Shape {
                what: role.to_string(),
                expected: expected.iter().map(|e| e.unwrap_or(0)).collect(),
                got: t.shape.clone(),
            });
        }
        ok
    }

    fn keep<T>(&mut self, r: Result<T>) -> Option<T> {
        r.map_err(|e| self.issues.push(e)).ok()
    }

    fn run(mut self) -> Result<Dataset> {
        use ArtifactRole as R;
        let m = self.m;
        let n = Some(m.n_images);
        let k = m.feature_maps;
        let render = Some(m.image_render_size);

        let activations = self.read(R::Activations).and_then(|t| {
            let expected = [n, Some(k), Some(m.feature_map_height), Some(m.feature_map_width)];
            if self.check(R::Activations, &t, &expected) {
                let r = ActivationBundle::from_tensor(t, m.layout);
                self.keep(r)
            } else {
                None
            }
        });

        let weights = match m.resolve(R::Weights) {
            None => None,
            Some(path) if !path.is_file() => {
                self.issues.push(Error::MissingArtifact(R::Weights));
                None
            }
            Some(path) => {
                let r = read_archive(&path).and_then(|members| WeightBundle::from_members(m.pool, members));
                self.keep(r)
            }
        };
        if let Some(w) = &weights {
            let hp = m.pool.output_len(m.feature_map_height);
            let wp = m.pool.output_len(m.feature_map_width);
            if w.input_dim() != k * hp * wp {
                self.issues.push(Error::shape(
                    "weights W1 columns",
                    &[w.hidden_dim(), k * hp * wp],
                    &[w.hidden_dim(), w.input_dim()],
                ));
            }
        }

        let judgments = self.read(R::Judgments).and_then(|t| {
            if self.check(R::Judgments, &t, &[n, n]) {
                let r = t.into_array2("judgments").and_then(HumanJudgmentMatrix::new);
                self.keep(r)
            } else {
                None
            }
        });
        let class_probs = self.read(R::ClassProbs).and_then(|t| {
            if self.check(R::ClassProbs, &t, &[n, None]) {
                let r = t.into_array2("class_probs").and_then(ClassProbs::new);
                self.keep(r)
            } else {
                None
            }
        });
        let saliency = self.read(R::Saliency).and_then(|t| {
            if self.check(R::Saliency, &t, &[n, render, render]) {
                if t.data.iter().any(|v| !v.is_finite() || *v < 0.0) {
                    self.issues.push(Error::Domain("saliency maps must be finite and nonnegative".into()));
                    return None;
                }
                self.keep(t.into_array3("saliency"))
            } else {
                None
            }
        });
        let golden_embeddings = self.read(R::EmbeddingsGolden).and_then(|t| {
            let d = match m.architecture_mode {
                ArchitectureMode::FcChain => weights.as_ref().map(|w| w.embedding_dim()),
                ArchitectureMode::GlobalPool => Some(k),
            };
            if self.check(R::EmbeddingsGolden, &t, &[n, d]) {
                self.keep(t.into_array2("embeddings_golden"))
            } else {
                None
            }
        });
        let images = self.read(R::Images).and_then(|t| {
            if self.check(R::Images, &t, &[n, render, render, Some(3)]) {
                self.keep(t.into_array4("images"))
            } else {
                None
            }
        });

        if !self.issues.is_empty() {
            return Err(Error::Manifest(self.issues));
        }
        Ok(Dataset {
            manifest: m.clone(),
            activations: activations.expect("no issues recorded"),
            weights,
            judgments,
            class_probs,
            saliency,
            golden_embeddings,
            images,
        })
    }
}
