//! Decoding of voxel activity into latent feature spaces with
//! cross-validated ridge regression and distribution renormalization, and
//! the caption and image metrics used to score decoded outputs.
//!
//! - [`datastore`]: F32M matrix files, manifests, repeat averaging, ROI masks
//! - [`ridge`]: multi-target ridge on a shared SVD, k-fold α selection
//! - [`renorm`]: matching predicted feature statistics to the targets
//! - [`textmetrics`]: METEOR and embedding cosine similarity
//! - [`imagemetrics`]: PixCorr, SSIM, n-way identification, Fréchet distance
//! - [`pipeline`]: branch orchestration, evaluation reports, export
//! - [`synth`]: a linear-Gaussian encoder for closed-loop checks

pub mod datastore;
pub mod error;
pub mod imagemetrics;
pub mod pipeline;
pub mod renorm;
pub mod ridge;
pub mod synth;
pub mod textmetrics;

pub use error::{Error, Result};
