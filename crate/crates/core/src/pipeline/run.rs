use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::OnceLock;

use log::{debug, info};
use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{BranchName, PipelineConfig};
use crate::datastore::{
    apply_roi_mask, average_repeats, read_matrix, rows_for_split, split_rows, write_matrix, Manifest, MatrixFile,
    RoiMask, Split,
};
use crate::error::{Error, Result};
use crate::renorm::{compute_stats, renormalize, Provenance, RenormStats};
use crate::ridge::{fit_ridge_cv, RidgeModel};

pub const PRED_STATS_FILE: &str = "pred_stats.f32m";
pub const TARGET_STATS_FILE: &str = "target_stats.f32m";
pub const BRANCH_FILE: &str = "branch.json";
pub const PREDICTION_FILE: &str = "pred_test.f32m";
pub const PREDICTION_STATUS_FILE: &str = "predict.json";
pub const TEST_IDS_FILE: &str = "test_ids.json";

/// Voxel data after averaging, masking and splitting; shared by branches.
#[derive(Debug, Clone)]
pub struct Prepared {
    /// one entry per stimulus, first-appearance order
    pub stimuli: Manifest,
    pub train_x: DMatrix<f64>,
    pub test_x: DMatrix<f64>,
    pub train_ids: Vec<String>,
    pub test_ids: Vec<String>,
}

/// Sidecar written next to each fitted branch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchRecord {
    pub branch: String,
    pub alpha: f64,
    pub folds: usize,
    pub seed: u64,
    pub n_train: usize,
    pub n_test: usize,
    pub dims: usize,
    pub stats_provenance: Provenance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionStatus {
    pub branch: String,
    pub rows: usize,
    pub skipped: Option<String>,
}

#[derive(Debug, Clone)]
pub struct FittedBranch {
    pub name: String,
    pub model: RidgeModel,
    pub pred_stats: RenormStats,
    pub target_stats: RenormStats,
    pub dir: PathBuf,
}

#[derive(Debug, Clone)]
pub struct BranchOutcome {
    pub fitted: FittedBranch,
    /// renormalized test predictions; `None` when the test split is empty
    pub prediction: Option<DMatrix<f64>>,
    pub status: PredictionStatus,
}

/// Runs branches against one config, preprocessing the voxels at most once.
pub struct Pipeline {
    cfg: PipelineConfig,
    prepared: OnceLock<Prepared>,
    preprocess_runs: AtomicUsize,
    cache_hits: AtomicUsize,
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::json(path.display().to_string(), e))?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::json(path.display().to_string(), e))
}

/// Renormalizes only with statistics derived from the training split.
pub fn renormalize_train_only(pred: &DMatrix<f64>, pred_stats: &RenormStats, target_stats: &RenormStats) -> Result<DMatrix<f64>> {
    for (which, s) in [("prediction", pred_stats), ("target", target_stats)] {
        if s.provenance != Provenance::Train {
            return Err(Error::Validation(format!(
                "{which} statistics have provenance {:?}; only training-split statistics may be used",
                s.provenance
            )));
        }
    }
    renormalize(pred, pred_stats, target_stats)
}

impl Pipeline {
    pub fn new(cfg: PipelineConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            cfg,
            prepared: OnceLock::new(),
            preprocess_runs: AtomicUsize::new(0),
            cache_hits: AtomicUsize::new(0),
        })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.cfg
    }

    pub fn preprocess_runs(&self) -> usize {
        self.preprocess_runs.load(Ordering::SeqCst)
    }

    pub fn cache_hits(&self) -> usize {
        self.cache_hits.load(Ordering::SeqCst)
    }

    pub fn branch_dir(&self, name: &str) -> PathBuf {
        self.cfg.output_dir().join(name)
    }

    fn load_prepared(&self) -> Result<Prepared> {
        self.preprocess_runs.fetch_add(1, Ordering::SeqCst);
        let voxels = read_matrix(self.cfg.resolve(&self.cfg.voxels))?;
        let manifest = Manifest::read(self.cfg.resolve(&self.cfg.manifest))?;
        let (averaged, stimuli) = average_repeats(&voxels, &manifest)?;
        let masked = match &self.cfg.roi_mask {
            Some(p) => {
                let mask = RoiMask::from_matrix_file(&MatrixFile::read(self.cfg.resolve(p))?)?;
                apply_roi_mask(&averaged, &mask)?
            }
            None => averaged,
        };
        let (train_x, test_x) = split_rows(&masked, &stimuli)?;
        let ids = |split| {
            stimuli
                .entries()
                .iter()
                .filter(|e| e.split == split)
                .map(|e| e.stimulus_id.clone())
                .collect::<Vec<_>>()
        };
        info!(
            "preprocessed {} trials into {} stimuli ({} train, {} test) over {} voxels",
            manifest.len(),
            stimuli.len(),
            train_x.nrows(),
            test_x.nrows(),
            masked.ncols()
        );
        Ok(Prepared {
            train_ids: ids(Split::Train),
            test_ids: ids(Split::Test),
            stimuli,
            train_x,
            test_x,
        })
    }

    /// Averaged, masked and split voxels, computed on first use.
    pub fn prepared(&self) -> Result<&Prepared> {
        if let Some(p) = self.prepared.get() {
            let hits = self.cache_hits.fetch_add(1, Ordering::SeqCst) + 1;
            debug!("preprocessing cache hit ({hits} so far)");
            return Ok(p);
        }
        let p = self.load_prepared()?;
        // a concurrent caller may have won the race; both results are identical
        Ok(self.prepared.get_or_init(|| p))
    }

    /// Cross-validated ridge fit on the training split, plus training-split
    /// renormalization statistics. Writes the model and stats under
    /// `<output_dir>/<branch>/`.
    pub fn fit_branch(&self, name: &str) -> Result<FittedBranch> {
        self.fit_branch_inner(name).map_err(|e| e.in_branch(name))
    }

    fn fit_branch_inner(&self, name: &str) -> Result<FittedBranch> {
        let spec = self.cfg.branch(name)?;
        name.parse::<BranchName>()?;
        let prep = self.prepared()?;
        let target = read_matrix(self.cfg.resolve(&spec.target))?;
        if target.nrows() != prep.stimuli.len() {
            return Err(Error::Validation(format!(
                "target file {} has {} rows but the manifest has {} stimuli",
                spec.target.display(),
                target.nrows(),
                prep.stimuli.len()
            )));
        }
        let train_y = target.select_rows(rows_for_split(&prep.stimuli, Split::Train).iter());
        if prep.train_x.nrows() < 2 {
            return Err(Error::Validation(format!(
                "training split has {} stimuli; at least 2 are needed",
                prep.train_x.nrows()
            )));
        }

        let dir = self.branch_dir(name);
        let model = fit_ridge_cv(
            &prep.train_x,
            &train_y,
            &self.cfg.alpha_grid,
            self.cfg.folds,
            self.cfg.seed,
            self.cfg.fit_intercept,
        )?;
        model.save(&dir)?;
        info!("{name}: alpha = {} over {} train stimuli", model.alpha, train_y.nrows());

        // stats come from the stored (f32) model so predict sees the same map
        let model = RidgeModel::load(&dir)?;
        let pred_stats = compute_stats(&model.predict(&prep.train_x)?)?.with_provenance(Provenance::Train);
        let target_stats = compute_stats(&train_y)?.with_provenance(Provenance::Train);
        pred_stats.write(dir.join(PRED_STATS_FILE))?;
        target_stats.write(dir.join(TARGET_STATS_FILE))?;
        write_json(
            &BranchRecord {
                branch: name.to_string(),
                alpha: model.alpha,
                folds: self.cfg.folds,
                seed: self.cfg.seed,
                n_train: prep.train_x.nrows(),
                n_test: prep.test_x.nrows(),
                dims: model.n_dims(),
                stats_provenance: Provenance::Train,
            },
            &dir.join(BRANCH_FILE),
        )?;
        Ok(FittedBranch {
            name: name.to_string(),
            model,
            pred_stats,
            target_stats,
            dir,
        })
    }

    /// Loads a branch previously written by [`Pipeline::fit_branch`].
    pub fn load_branch(&self, name: &str) -> Result<FittedBranch> {
        let load = || -> Result<FittedBranch> {
            self.cfg.branch(name)?;
            let dir = self.branch_dir(name);
            let record: BranchRecord = read_json(&dir.join(BRANCH_FILE))?;
            let model = RidgeModel::load(&dir)?;
            let pred_stats = RenormStats::read(dir.join(PRED_STATS_FILE), record.stats_provenance)?;
            let target_stats = RenormStats::read(dir.join(TARGET_STATS_FILE), record.stats_provenance)?;
            Ok(FittedBranch {
                name: name.to_string(),
                model,
                pred_stats,
                target_stats,
                dir,
            })
        };
        load().map_err(|e| e.in_branch(name))
    }

    /// Predicts the test split and renormalizes with the branch's training
    /// statistics. With an empty test split nothing is predicted and the
    /// reason is recorded in `predict.json`.
    pub fn predict_branch(&self, fitted: &FittedBranch) -> Result<(Option<DMatrix<f64>>, PredictionStatus)> {
        let run = || -> Result<(Option<DMatrix<f64>>, PredictionStatus)> {
            let prep = self.prepared()?;
            let status_path = fitted.dir.join(PREDICTION_STATUS_FILE);
            let pred_path = fitted.dir.join(PREDICTION_FILE);
            if prep.test_x.nrows() == 0 {
                let status = PredictionStatus {
                    branch: fitted.name.clone(),
                    rows: 0,
                    skipped: Some("test split is empty".into()),
                };
                if pred_path.exists() {
                    fs::remove_file(&pred_path).map_err(|e| Error::io(&pred_path, e))?;
                }
                write_json(&status, &status_path)?;
                info!("{}: prediction skipped, test split is empty", fitted.name);
                return Ok((None, status));
            }
            let raw = fitted.model.predict(&prep.test_x)?;
            let pred = renormalize_train_only(&raw, &fitted.pred_stats, &fitted.target_stats)?;
            write_matrix(&pred, &pred_path)?;
            write_json(&prep.test_ids, &fitted.dir.join(TEST_IDS_FILE))?;
            let status = PredictionStatus {
                branch: fitted.name.clone(),
                rows: pred.nrows(),
                skipped: None,
            };
            write_json(&status, &status_path)?;
            // hand back exactly what is on disk
            Ok((Some(read_matrix(&pred_path)?), status))
        };
        run().map_err(|e| e.in_branch(&fitted.name))
    }

    /// average → mask → split → CV fit → predict → renormalize.
    pub fn run_branch(&self, name: &str) -> Result<BranchOutcome> {
        let fitted = self.fit_branch(name)?;
        let (prediction, status) = self.predict_branch(&fitted)?;
        Ok(BranchOutcome {
            fitted,
            prediction,
            status,
        })
    }

    fn selected<'a>(&'a self, only: Option<&'a str>) -> Result<Vec<&'a str>> {
        match only {
            Some(name) => Ok(vec![self.cfg.branch(name)?.name.as_str()]),
            None => Ok(self.cfg.branches.iter().map(|b| b.name.as_str()).collect()),
        }
    }

    /// Fits every configured branch (or just `only`), in parallel.
    pub fn fit_all(&self, only: Option<&str>) -> Result<Vec<FittedBranch>> {
        let names = self.selected(only)?;
        self.prepared()?;
        names.par_iter().map(|n| self.fit_branch(n)).collect()
    }

    /// Predicts every configured branch from its stored model.
    pub fn predict_all(&self, only: Option<&str>) -> Result<Vec<PredictionStatus>> {
        let names = self.selected(only)?;
        self.prepared()?;
        names
            .par_iter()
            .map(|n| Ok(self.predict_branch(&self.load_branch(n)?)?.1))
            .collect()
    }

    pub fn run_all(&self, only: Option<&str>) -> Result<Vec<BranchOutcome>> {
        let names = self.selected(only)?;
        self.prepared()?;
        names.par_iter().map(|n| self.run_branch(n)).collect()
    }
}
