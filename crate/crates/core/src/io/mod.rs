//! Tensor interchange files, weight archives and dataset manifests.

mod archive;
mod bundle;
mod manifest;
mod npy;

pub use archive::{read_archive, write_archive};
pub use bundle::{ActivationBundle, ClassProbs, HumanJudgmentMatrix, Layout, PoolSpec, WeightBundle};
pub use manifest::{load_dataset, load_manifest, ArchitectureMode, ArtifactRole, Dataset, DatasetManifest};
pub use npy::{decode_tensor, encode_tensor, read_tensor, write_tensor, Dtype, Tensor};
