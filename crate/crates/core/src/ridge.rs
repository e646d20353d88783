//! Multi-target ridge regression.
//!
//! All solves go through one economy SVD of the (centered) design matrix:
//! with `Xc = U S Vᵀ` the minimizer of `‖Yc − Xc W‖² + α‖W‖²` is
//! `W = V diag(s / (s² + α)) Uᵀ Yc`, so every candidate on an [`AlphaGrid`]
//! reuses the same factorization. The same expression is the dual (kernel)
//! solution when there are fewer samples than voxels.

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datastore::{read_matrix, write_matrix};
use crate::error::{Error, Result};

/// Singular values below this fraction of the largest are treated as zero.
pub const RANK_TOLERANCE: f64 = 1e-12;

pub const DEFAULT_FOLDS: usize = 5;

/// Sorted, duplicate-free set of regularization strengths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct AlphaGrid {
    candidates: Vec<f64>,
}

impl AlphaGrid {
    /// Candidates may be given in any order; duplicates are rejected.
    pub fn new(mut candidates: Vec<f64>) -> Result<Self> {
        if candidates.is_empty() {
            return Err(Error::InvalidArgument("alpha grid is empty".into()));
        }
        if let Some(bad) = candidates.iter().find(|a| !a.is_finite() || **a < 0.0) {
            return Err(Error::InvalidArgument(format!(
                "alpha candidates must be finite and nonnegative, got {bad}"
            )));
        }
        candidates.sort_by(f64::total_cmp);
        if candidates.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidArgument("alpha grid has duplicate candidates".into()));
        }
        Ok(Self { candidates })
    }

    pub fn candidates(&self) -> &[f64] {
        &self.candidates
    }

    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }
}

impl Default for AlphaGrid {
    /// Two decades either side of 5e4.
    fn default() -> Self {
        Self::new(vec![1e2, 1e3, 1e4, 5e4, 1e5, 1e6]).expect("default grid is valid")
    }
}

impl TryFrom<Vec<f64>> for AlphaGrid {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<AlphaGrid> for Vec<f64> {
    fn from(g: AlphaGrid) -> Self {
        g.candidates
    }
}

/// How α was chosen, kept alongside the model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvRecord {
    pub grid: AlphaGrid,
    pub folds: usize,
    pub seed: u64,
    /// Mean negative MSE per grid candidate, in grid order.
    pub scores: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RidgeModel {
    /// voxels × dims
    pub weights: DMatrix<f64>,
    pub intercept: DVector<f64>,
    pub alpha: f64,
    pub cv: Option<CvRecord>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Sidecar {
    alpha: f64,
    grid: Option<AlphaGrid>,
    k: Option<usize>,
    seed: Option<u64>,
    cv_scores: Option<Vec<f64>>,
}

pub const WEIGHTS_FILE: &str = "weights.f32m";
pub const INTERCEPT_FILE: &str = "intercept.f32m";
pub const SIDECAR_FILE: &str = "model.json";

impl RidgeModel {
    pub fn n_voxels(&self) -> usize {
        self.weights.nrows()
    }

    pub fn n_dims(&self) -> usize {
        self.weights.ncols()
    }

    /// `X W + 1 bᵀ`
    pub fn predict(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if x.ncols() != self.n_voxels() {
            return Err(Error::Shape(format!(
                "model expects {} voxels, input has {}",
                self.n_voxels(),
                x.ncols()
            )));
        }
        let mut out = x * &self.weights;
        for mut row in out.row_iter_mut() {
            row += self.intercept.transpose();
        }
        Ok(out)
    }

    /// Writes weights and intercept as matrix files plus a JSON sidecar.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_matrix(&self.weights, dir.join(WEIGHTS_FILE))?;
        write_matrix(&DMatrix::from_row_slice(1, self.n_dims(), self.intercept.as_slice()), dir.join(INTERCEPT_FILE))?;
        let sidecar = Sidecar {
            alpha: self.alpha,
            grid: self.cv.as_ref().map(|c| c.grid.clone()),
            k: self.cv.as_ref().map(|c| c.folds),
            seed: self.cv.as_ref().map(|c| c.seed),
            cv_scores: self.cv.as_ref().map(|c| c.scores.clone()),
        };
        let path = dir.join(SIDECAR_FILE);
        let text = serde_json::to_string_pretty(&sidecar).map_err(|e| Error::json("model sidecar", e))?;
        fs::write(&path, text).map_err(|e| Error::io(&path, e))
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let weights = read_matrix(dir.join(WEIGHTS_FILE))?;
        let intercept = read_matrix(dir.join(INTERCEPT_FILE))?;
        if intercept.nrows() != 1 || intercept.ncols() != weights.ncols() {
            return Err(Error::Shape(format!(
                "intercept is {}x{}, expected 1x{}",
                intercept.nrows(),
                intercept.ncols(),
                weights.ncols()
            )));
        }
        let path = dir.join(SIDECAR_FILE);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let s: Sidecar = serde_json::from_str(&text).map_err(|e| Error::json("model sidecar", e))?;
        let cv = match (s.grid, s.k, s.seed, s.cv_scores) {
            (Some(grid), Some(folds), Some(seed), Some(scores)) => Some(CvRecord { grid, folds, seed, scores }),
            _ => None,
        };
        Ok(Self {
            weights,
            intercept: DVector::from_row_slice(intercept.as_slice()),
            alpha: s.alpha,
            cv,
        })
    }
}

fn check_inputs(x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<()> {
    if x.nrows() != y.nrows() {
        return Err(Error::Shape(format!(
            "X has {} samples, Y has {}",
            x.nrows(),
            y.nrows()
        )));
    }
    if x.nrows() < 2 {
        return Err(Error::InvalidArgument(format!(
            "ridge needs at least 2 samples, got {}",
            x.nrows()
        )));
    }
    if x.ncols() == 0 || y.ncols() == 0 {
        return Err(Error::Shape("X and Y need at least one column".into()));
    }
    if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
        return Err(Error::Data("non-finite value in ridge inputs".into()));
    }
    Ok(())
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !alpha.is_finite() || alpha < 0.0 {
        return Err(Error::InvalidArgument(format!("alpha must be finite and >= 0, got {alpha}")));
    }
    Ok(())
}

pub(crate) fn column_means(m: &DMatrix<f64>) -> DVector<f64> {
    let n = m.nrows() as f64;
    DVector::from_iterator(m.ncols(), m.column_iter().map(|c| c.sum() / n))
}

pub(crate) fn center_columns(m: &DMatrix<f64>, means: &DVector<f64>) -> DMatrix<f64> {
    let mut out = m.clone();
    for (mut col, mu) in out.column_iter_mut().zip(means.iter()) {
        col.add_scalar_mut(-mu);
    }
    out
}


/// Thin SVD with singular values in descending order.
fn thin_svd(m: &DMatrix<f64>) -> Result<(DMatrix<f64>, Vec<f64>, DMatrix<f64>)> {
    let fm = faer::Mat::<f64>::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)]);
    let svd = fm
        .thin_svd()
        .map_err(|e| Error::Degenerate(format!("singular value decomposition failed: {e:?}")))?;
    let (u, v) = (svd.U(), svd.V());
    let s = svd.S().column_vector();
    let k = s.nrows();
    Ok((
        DMatrix::from_fn(m.nrows(), k, |i, j| u[(i, j)]),
        (0..k).map(|i| s[i]).collect(),
        DMatrix::from_fn(k, m.ncols(), |i, j| v[(j, i)]),
    ))
}
/// One SVD of the training design, reusable for any α.
#[derive(Debug, Clone)]
pub struct RidgePath {
    /// Vᵀ, rank-truncated: r × voxels
    v_t: DMatrix<f64>,
    /// r singular values above the rank cutoff
    s: Vec<f64>,
    /// Uᵀ Yc, r × dims
    u_t_y: DMatrix<f64>,
    x_mean: Option<DVector<f64>>,
    y_mean: Option<DVector<f64>>,
    n_voxels: usize,
}

impl RidgePath {
    pub fn new(x: &DMatrix<f64>, y: &DMatrix<f64>, fit_intercept: bool) -> Result<Self> {
        check_inputs(x, y)?;
        let (xc, yc, x_mean, y_mean) = if fit_intercept {
            let xm = column_means(x);
            let ym = column_means(y);
            (center_columns(x, &xm), center_columns(y, &ym), Some(xm), Some(ym))
        } else {
            (x.clone(), y.clone(), None, None)
        };

        let (u, s_all, v_t) = thin_svd(&xc)?;
        let s_max = s_all.first().copied().unwrap_or(0.0);
        let cutoff = RANK_TOLERANCE * s_max;
        let r = s_all.iter().take_while(|&&s| s_max > 0.0 && s > cutoff).count();

        let s = s_all[..r].to_vec();
        let u = u.columns(0, r).into_owned();
        let v_t = v_t.rows(0, r).into_owned();
        let u_t_y = u.tr_mul(&yc);
        Ok(Self {
            v_t,
            s,
            u_t_y,
            x_mean,
            y_mean,
            n_voxels: x.ncols(),
        })
    }

    pub fn rank(&self) -> usize {
        self.s.len()
    }

    pub fn singular_values(&self) -> &[f64] {
        &self.s
    }

    pub fn weights(&self, alpha: f64) -> Result<DMatrix<f64>> {
        check_alpha(alpha)?;
        if alpha == 0.0 && self.rank() < self.n_voxels {
            return Err(Error::RankDeficient(format!(
                "alpha = 0 needs full column rank, design has rank {} over {} voxels",
                self.rank(),
                self.n_voxels
            )));
        }
        let mut filtered = self.u_t_y.clone();
        for (mut row, &s) in filtered.row_iter_mut().zip(&self.s) {
            row.scale_mut(s / (s * s + alpha));
        }
        Ok(self.v_t.tr_mul(&filtered))
    }

    pub fn solve(&self, alpha: f64) -> Result<RidgeModel> {
        let weights = self.weights(alpha)?;
        let intercept = match (&self.x_mean, &self.y_mean) {
            (Some(xm), Some(ym)) => ym - weights.tr_mul(xm),
            _ => DVector::zeros(weights.ncols()),
        };
        Ok(RidgeModel {
            weights,
            intercept,
            alpha,
            cv: None,
        })
    }
}

/// Fits `Y ≈ X W + 1 bᵀ` with penalty `α‖W‖²`. With `fit_intercept` both
/// sides are centered first and `b` restores the means.
pub fn fit_ridge(x: &DMatrix<f64>, y: &DMatrix<f64>, alpha: f64, fit_intercept: bool) -> Result<RidgeModel> {
    check_alpha(alpha)?;
    RidgePath::new(x, y, fit_intercept)?.solve(alpha)
}

/// Kernel-form solve `W = Xcᵀ (Xc Xcᵀ + αI)⁻¹ Yc`. Only defined for α > 0;
/// cheaper than the primal when samples ≪ voxels and there is one α.
pub fn fit_ridge_dual(x: &DMatrix<f64>, y: &DMatrix<f64>, alpha: f64, fit_intercept: bool) -> Result<RidgeModel> {
    check_inputs(x, y)?;
    check_alpha(alpha)?;
    if alpha == 0.0 {
        return Err(Error::InvalidArgument("dual ridge needs alpha > 0".into()));
    }
    let (xc, yc, means) = if fit_intercept {
        let xm = column_means(x);
        let ym = column_means(y);
        (center_columns(x, &xm), center_columns(y, &ym), Some((xm, ym)))
    } else {
        (x.clone(), y.clone(), None)
    };
    let mut kernel = &xc * xc.transpose();
    for i in 0..kernel.nrows() {
        kernel[(i, i)] += alpha;
    }
    let dual = kernel
        .cholesky()
        .ok_or_else(|| Error::Degenerate("kernel matrix is not positive definite".into()))?
        .solve(&yc);
    let weights = xc.tr_mul(&dual);
    let intercept = match means {
        Some((xm, ym)) => ym - weights.tr_mul(&xm),
        None => DVector::zeros(weights.ncols()),
    };
    Ok(RidgeModel {
        weights,
        intercept,
        alpha,
        cv: None,
    })
}

/// Contiguous blocks of a seeded permutation of `0..n`. The first `n % k`
/// folds get one extra sample.
pub fn kfold_indices(n: usize, k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 folds, got {k}")));
    }
    if k > n {
        return Err(Error::InvalidArgument(format!("{k} folds requested for {n} samples")));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let base = n / k;
    let extra = n % k;
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for f in 0..k {
        let len = base + usize::from(f < extra);
        folds.push(perm[start..start + len].to_vec());
        start += len;
    }
    Ok(folds)
}

fn complement(n: usize, held_out: &[usize]) -> Vec<usize> {
    let mut mask = vec![true; n];
    for &i in held_out {
        mask[i] = false;
    }
    (0..n).filter(|&i| mask[i]).collect()
}

pub(crate) fn mse(pred: &DMatrix<f64>, truth: &DMatrix<f64>) -> f64 {
    (pred - truth).norm_squared() / pred.len() as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvOutcome {
    pub best_alpha: f64,
    /// Mean over folds of negative held-out MSE, in grid order.
    pub scores: Vec<f64>,
}

/// k-fold selection of α by mean negative MSE. Ties go to the larger α.
/// Folds are scored in parallel and reduced in fold order.
pub fn cross_validate_alpha(
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
    grid: &AlphaGrid,
    k: usize,
    seed: u64,
    fit_intercept: bool,
) -> Result<CvOutcome> {
    check_inputs(x, y)?;
    let n = x.nrows();
    let folds = kfold_indices(n, k, seed)?;
    if folds.iter().any(|f| n - f.len() < 2) {
        return Err(Error::InvalidArgument(format!(
            "{k} folds over {n} samples leave fewer than 2 training samples"
        )));
    }

    let per_fold: Vec<Vec<f64>> = folds
        .par_iter()
        .map(|held_out| {
            let train = complement(n, held_out);
            let path = RidgePath::new(
                &x.select_rows(train.iter()),
                &y.select_rows(train.iter()),
                fit_intercept,
            )?;
            let x_val = x.select_rows(held_out.iter());
            let y_val = y.select_rows(held_out.iter());
            grid.candidates()
                .iter()
                .map(|&alpha| {
                    let pred = path.solve(alpha)?.predict(&x_val)?;
                    Ok(-mse(&pred, &y_val))
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;

    let mut scores = vec![0.0; grid.len()];
    for fold in &per_fold {
        for (acc, s) in scores.iter_mut().zip(fold) {
            *acc += s;
        }
    }
    for s in &mut scores {
        *s /= k as f64;
    }

    let mut best = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s >= scores[best] {
            best = i;
        }
    }
    Ok(CvOutcome {
        best_alpha: grid.candidates()[best],
        scores,
    })
}

/// Cross-validates α, then refits on all rows with the winner.
pub fn fit_ridge_cv(
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
    grid: &AlphaGrid,
    k: usize,
    seed: u64,
    fit_intercept: bool,
) -> Result<RidgeModel> {
    let outcome = cross_validate_alpha(x, y, grid, k, seed, fit_intercept)?;
    let mut model = fit_ridge(x, y, outcome.best_alpha, fit_intercept)?;
    model.cv = Some(CvRecord {
        grid: grid.clone(),
        folds: k,
        seed,
        scores: outcome.scores,
    });
    Ok(model)
}
