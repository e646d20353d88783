//! Dataset preparation: repeat averaging, ROI masking and the train/test split.

use std::collections::HashMap;

use nalgebra::DMatrix;

use super::manifest::{Manifest, ManifestEntry, Split};
use super::matrix_file::MatrixFile;
use crate::error::{Error, Result};

/// Boolean selection over voxel columns.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoiMask {
    flags: Vec<bool>,
}

impl RoiMask {
    pub fn new(flags: Vec<bool>) -> Result<Self> {
        if !flags.iter().any(|&f| f) {
            return Err(Error::Degenerate("ROI mask selects no voxels".into()));
        }
        Ok(Self { flags })
    }

    /// Masks are stored as a single-row matrix of 0.0 / 1.0 values.
    pub fn from_matrix_file(file: &MatrixFile) -> Result<Self> {
        if file.rows() != 1 {
            return Err(Error::Format(format!(
                "ROI mask must have exactly one row, got {}",
                file.rows()
            )));
        }
        let flags = file
            .data()
            .iter()
            .map(|&v| match v {
                0.0 => Ok(false),
                1.0 => Ok(true),
                other => Err(Error::Data(format!("ROI mask value {other} is not 0 or 1"))),
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(flags)
    }

    pub fn to_matrix_file(&self) -> MatrixFile {
        let data = self.flags.iter().map(|&f| if f { 1.0 } else { 0.0 }).collect();
        MatrixFile::new(1, self.flags.len(), data).expect("mask is nonempty")
    }

    pub fn len(&self) -> usize {
        self.flags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.flags.is_empty()
    }

    pub fn selected(&self) -> usize {
        self.flags.iter().filter(|&&f| f).count()
    }

    pub fn flags(&self) -> &[bool] {
        &self.flags
    }
}

fn check_aligned(m: &DMatrix<f64>, manifest: &Manifest) -> Result<()> {
    if m.nrows() != manifest.len() {
        return Err(Error::Shape(format!(
            "matrix has {} rows but manifest has {} entries",
            m.nrows(),
            manifest.len()
        )));
    }
    Ok(())
}

/// Collapses repeated presentations into one row per stimulus (the mean of
/// its trials). Output rows follow first appearance; the output manifest
/// uses the stimulus id as trial id.
pub fn average_repeats(trials: &DMatrix<f64>, manifest: &Manifest) -> Result<(DMatrix<f64>, Manifest)> {
    check_aligned(trials, manifest)?;
    let order = manifest.stimulus_ids();
    let index: HashMap<&str, usize> = order.iter().enumerate().map(|(i, s)| (*s, i)).collect();

    let mut sums = DMatrix::<f64>::zeros(order.len(), trials.ncols());
    let mut counts = vec![0usize; order.len()];
    let mut splits = vec![Split::Train; order.len()];
    for (row, entry) in manifest.entries().iter().enumerate() {
        let k = index[entry.stimulus_id.as_str()];
        counts[k] += 1;
        splits[k] = entry.split;
        let mut dst = sums.row_mut(k);
        dst += trials.row(row);
    }
    for (k, &n) in counts.iter().enumerate() {
        if n > 1 {
            sums.row_mut(k).scale_mut(1.0 / n as f64);
        }
    }
    let entries = order
        .iter()
        .zip(&splits)
        .map(|(s, &split)| ManifestEntry::new(*s, *s, split))
        .collect();
    Ok((sums, Manifest::new(entries)?))
}

pub fn apply_roi_mask(volume: &DMatrix<f64>, mask: &RoiMask) -> Result<DMatrix<f64>> {
    if mask.len() != volume.ncols() {
        return Err(Error::Shape(format!(
            "ROI mask covers {} voxels but matrix has {} columns",
            mask.len(),
            volume.ncols()
        )));
    }
    let cols: Vec<usize> = mask
        .flags()
        .iter()
        .enumerate()
        .filter_map(|(i, &f)| f.then_some(i))
        .collect();
    Ok(volume.select_columns(cols.iter()))
}

pub fn rows_for_split(manifest: &Manifest, split: Split) -> Vec<usize> {
    manifest
        .entries()
        .iter()
        .enumerate()
        .filter_map(|(i, e)| (e.split == split).then_some(i))
        .collect()
}

/// Partitions rows into (train, test); either side may be empty.
pub fn split_rows(m: &DMatrix<f64>, manifest: &Manifest) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    check_aligned(m, manifest)?;
    let train = rows_for_split(manifest, Split::Train);
    let test = rows_for_split(manifest, Split::Test);
    Ok((m.select_rows(train.iter()), m.select_rows(test.iter())))
}
