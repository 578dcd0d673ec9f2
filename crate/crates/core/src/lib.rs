//! Salient object detection with hierarchical cellular automata.
//!
//! Superpixels seeded from the image border evolve under a single-layer
//! automaton ([`sca`]) at several scales; the resulting maps are fused
//! pixel-wise by a Bayesian cuboid automaton ([`cca`]). The same machinery
//! refines or fuses saliency maps produced elsewhere ([`pipeline`]), and
//! [`eval`] scores maps against ground truth.

pub mod cca;
pub mod error;
pub mod eval;
pub mod features;
pub mod imaging;
pub mod pipeline;
pub mod sca;
pub mod slic;
pub mod synth;

pub use error::{HcaError, Result};
pub use imaging::{RgbImage, SaliencyMap};
pub use pipeline::{fuse_maps, optimize_map, optimize_maps, run_hca, PipelineConfig};
