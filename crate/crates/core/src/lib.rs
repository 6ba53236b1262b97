//! Alignment importance scoring of convolutional feature maps.
//!
//! The crate measures how much each feature map of a network's deepest
//! convolutional layer contributes to the agreement between the network's
//! pairwise image similarities and human similarity judgments, selects
//! feature subsets that generalize that agreement, and turns per-image scores
//! into heatmaps that can be compared against saliency maps.

pub mod error;
pub mod heatmap;
pub mod io;
pub mod masking;
pub mod render;
pub mod saliency;
pub mod selection;
pub mod similarity;
pub mod special;
pub mod stats;
pub mod synthetic;

pub use error::{Error, Result};
