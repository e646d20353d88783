use nalgebra::{DMatrix, DVector, SymmetricEigen};

use super::identification::EmbeddingSet;
use crate::error::{Error, Result};
use crate::ridge::{center_columns, column_means};

/// Eigenvalues below this fraction of the largest are set to zero when
/// taking square roots of PSD matrices.
pub const EIGEN_CLAMP: f64 = 1e-10;

const SYMMETRY_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMoments {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl GaussianMoments {
    pub fn dims(&self) -> usize {
        self.mean.len()
    }

    fn check(&self, which: &str) -> Result<()> {
        let d = self.dims();
        if self.cov.shape() != (d, d) {
            return Err(Error::Shape(format!(
                "{which}: covariance is {:?} for a {d}-dim mean",
                self.cov.shape()
            )));
        }
        let scale = self.cov.amax().max(1.0);
        let asym = (&self.cov - self.cov.transpose()).amax();
        if asym > SYMMETRY_TOLERANCE * scale {
            return Err(Error::Data(format!("{which}: covariance asymmetric by {asym:e}")));
        }
        Ok(())
    }
}

/// Sample mean and unbiased (ddof 1) covariance, symmetrized.
pub fn moments(set: &EmbeddingSet) -> Result<GaussianMoments> {
    let x = set.data();
    if x.nrows() < 2 {
        return Err(Error::InvalidArgument(format!(
            "moments need at least 2 items, got {}",
            x.nrows()
        )));
    }
    let mean = column_means(x);
    let xc = center_columns(x, &mean);
    let cov = xc.tr_mul(&xc) / (x.nrows() as f64 - 1.0);
    let cov = (&cov + cov.transpose()) * 0.5;
    Ok(GaussianMoments { mean, cov })
}

fn clamped_eigen(m: &DMatrix<f64>) -> SymmetricEigen<f64, nalgebra::Dyn> {
    let sym = (m + m.transpose()) * 0.5;
    let mut eig = sym.symmetric_eigen();
    let top = eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
    for v in eig.eigenvalues.iter_mut() {
        if *v < EIGEN_CLAMP * top {
            *v = 0.0;
        }
    }
    eig
}

fn sqrt_psd(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = clamped_eigen(m);
    let roots = DMatrix::from_diagonal(&eig.eigenvalues.map(f64::sqrt));
    &eig.eigenvectors * roots * eig.eigenvectors.transpose()
}

/// Squared Fréchet (2-Wasserstein) distance between two Gaussians:
/// `‖μ1 − μ2‖² + tr(Σ1 + Σ2 − 2 (Σ1 Σ2)^½)`. The trace of the matrix root is
/// taken from the symmetric product `√Σ1 Σ2 √Σ1`.
pub fn frechet_distance(g1: &GaussianMoments, g2: &GaussianMoments) -> Result<f64> {
    if g1.dims() != g2.dims() {
        return Err(Error::Shape(format!(
            "Gaussians have {} and {} dims",
            g1.dims(),
            g2.dims()
        )));
    }
    g1.check("first")?;
    g2.check("second")?;
    let root1 = sqrt_psd(&g1.cov);
    let inner = &root1 * &g2.cov * &root1;
    let trace_root: f64 = clamped_eigen(&inner).eigenvalues.iter().map(|v| v.sqrt()).sum();
    let mean_term = (&g1.mean - &g2.mean).norm_squared();
    let d2 = mean_term + g1.cov.trace() + g2.cov.trace() - 2.0 * trace_root;
    Ok(d2.max(0.0))
}
