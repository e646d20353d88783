//! Per-dimension distribution matching of predicted features.
//!
//! Predictions are standardized with their own training-set statistics and
//! mapped onto the training-set statistics of the true features.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::datastore::{read_matrix, write_matrix};
use crate::error::{Error, Result};

/// Where a set of statistics was computed. The pipeline refuses anything
/// not derived from the training split.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Train,
    Test,
    Unknown,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RenormStats {
    pub mean: DVector<f64>,
    /// Population standard deviation (ddof = 0).
    pub std: DVector<f64>,
    pub provenance: Provenance,
}

impl RenormStats {
    pub fn dims(&self) -> usize {
        self.mean.len()
    }

    pub fn with_provenance(mut self, provenance: Provenance) -> Self {
        self.provenance = provenance;
        self
    }

    /// Stored as a 2 × dims matrix: row 0 mean, row 1 std. Provenance is not
    /// part of the file; callers restore it from their own records.
    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let d = self.dims();
        let m = DMatrix::from_fn(2, d, |r, c| if r == 0 { self.mean[c] } else { self.std[c] });
        write_matrix(&m, path)
    }

    pub fn read(path: impl AsRef<Path>, provenance: Provenance) -> Result<Self> {
        let m = read_matrix(path)?;
        if m.nrows() != 2 {
            return Err(Error::Shape(format!("stats file must have 2 rows, got {}", m.nrows())));
        }
        let std = m.row(1).transpose();
        if std.iter().any(|&s| s < 0.0) {
            return Err(Error::Data("negative standard deviation in stats file".into()));
        }
        Ok(Self {
            mean: m.row(0).transpose(),
            std,
            provenance,
        })
    }
}

pub fn compute_stats(f: &DMatrix<f64>) -> Result<RenormStats> {
    if f.nrows() == 0 || f.ncols() == 0 {
        return Err(Error::Degenerate("cannot compute statistics of an empty matrix".into()));
    }
    let n = f.nrows() as f64;
    let mut mean = DVector::zeros(f.ncols());
    let mut std = DVector::zeros(f.ncols());
    for (j, col) in f.column_iter().enumerate() {
        let mu = col.sum() / n;
        let var = col.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / n;
        mean[j] = mu;
        std[j] = var.sqrt();
    }
    Ok(RenormStats {
        mean,
        std,
        provenance: Provenance::Unknown,
    })
}

/// `(pred − μ_pred) / σ_pred · σ_target + μ_target` per column. Columns with
/// zero predicted spread collapse to the target mean.
pub fn renormalize(pred: &DMatrix<f64>, pred_stats: &RenormStats, target_stats: &RenormStats) -> Result<DMatrix<f64>> {
    let d = pred.ncols();
    if pred_stats.dims() != d || target_stats.dims() != d {
        return Err(Error::Shape(format!(
            "predictions have {d} dims, stats have {} and {}",
            pred_stats.dims(),
            target_stats.dims()
        )));
    }
    let mut out = pred.clone();
    for (j, mut col) in out.column_iter_mut().enumerate() {
        let (pm, ps) = (pred_stats.mean[j], pred_stats.std[j]);
        let (tm, ts) = (target_stats.mean[j], target_stats.std[j]);
        if ps == 0.0 {
            col.fill(tm);
        } else {
            let scale = ts / ps;
            col.apply(|v| *v = (*v - pm) * scale + tm);
        }
    }
    Ok(out)
}
