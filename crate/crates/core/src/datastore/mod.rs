//! Matrix and manifest storage plus the preprocessing steps that run before
//! any model is fitted.

mod manifest;
mod matrix_file;
mod prep;

pub use manifest::{Manifest, ManifestEntry, Split};
pub use matrix_file::{read_matrix, write_matrix, MatrixFile, HEADER_LEN, MAGIC, VERSION};
pub use prep::{apply_roi_mask, average_repeats, rows_for_split, split_rows, RoiMask};
