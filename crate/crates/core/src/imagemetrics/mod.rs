//! Image and embedding metrics: PixCorr, SSIM, n-way identification and the
//! Fréchet distance between Gaussian fits.

mod frechet;
mod identification;
mod image;
mod ssim;

pub use frechet::{frechet_distance, moments, GaussianMoments, EIGEN_CLAMP};
pub use identification::{correlation_matrix, nway_accuracy, EmbeddingSet, NwayOptions, Similarity};
pub use image::{decode_pgm, luminance, pearson_columns, pixcorr, read_pgm, write_pgm, GrayImage, LUMA_WEIGHTS};
pub use ssim::{gaussian_window, ssim, SsimParams};
