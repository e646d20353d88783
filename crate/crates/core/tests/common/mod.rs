//! Reference implementations used as oracles by the integration tests.
//! They favour directness over speed and share no code with the library.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use neurodecode::synth::SynthSpec;

pub const FIXTURE: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/closed_loop.json");

pub const CV_NOISY_FIXTURE: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/cv_noisy.json");

pub fn closed_loop_spec() -> SynthSpec {
    SynthSpec::read(FIXTURE).expect("bundled fixture parses")
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
}

pub fn rel_frobenius(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm()
}

/// Ridge by the normal equations on explicitly centered data.
/// Returns (weights, intercept).
pub fn ridge_normal_equations(x: &DMatrix<f64>, y: &DMatrix<f64>, alpha: f64, intercept: bool) -> (DMatrix<f64>, DVector<f64>) {
    let n = x.nrows();
    let (xm, ym) = if intercept {
        (
            DVector::from_fn(x.ncols(), |j, _| x.column(j).sum() / n as f64),
            DVector::from_fn(y.ncols(), |j, _| y.column(j).sum() / n as f64),
        )
    } else {
        (DVector::zeros(x.ncols()), DVector::zeros(y.ncols()))
    };
    let xc = DMatrix::from_fn(n, x.ncols(), |i, j| x[(i, j)] - xm[j]);
    let yc = DMatrix::from_fn(n, y.ncols(), |i, j| y[(i, j)] - ym[j]);
    let p = x.ncols();
    let gram = xc.transpose() * &xc + DMatrix::<f64>::identity(p, p) * alpha;
    let w = gram.lu().solve(&(xc.transpose() * &yc)).expect("regularized gram is invertible");
    let b = ym - w.transpose() * xm;
    (w, b)
}

pub fn predict(x: &DMatrix<f64>, w: &DMatrix<f64>, b: &DVector<f64>) -> DMatrix<f64> {
    let mut out = x * w;
    for mut row in out.row_iter_mut() {
        row += b.transpose();
    }
    out
}

/// Mean over folds of negative held-out MSE for every candidate, with each
/// fold refit from scratch by the normal equations.
pub fn cv_scores(x: &DMatrix<f64>, y: &DMatrix<f64>, folds: &[Vec<usize>], grid: &[f64]) -> Vec<f64> {
    let n = x.nrows();
    grid.iter()
        .map(|&alpha| {
            let mut total = 0.0;
            for held in folds {
                let train: Vec<usize> = (0..n).filter(|i| !held.contains(i)).collect();
                let (w, b) = ridge_normal_equations(&x.select_rows(train.iter()), &y.select_rows(train.iter()), alpha, true);
                let pred = predict(&x.select_rows(held.iter()), &w, &b);
                let truth = y.select_rows(held.iter());
                let mut se = 0.0;
                for (p, t) in pred.iter().zip(truth.iter()) {
                    se += (p - t) * (p - t);
                }
                total -= se / pred.len() as f64;
            }
            total / folds.len() as f64
        })
        .collect()
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    sab / (saa * sbb).sqrt()
}

/// Every (item, distractor) pair scored directly: correct when the true
/// partner is strictly more similar than the distractor.
pub fn two_way_brute_force(pred: &DMatrix<f64>, truth: &DMatrix<f64>) -> f64 {
    let n = pred.nrows();
    let rows = |m: &DMatrix<f64>| -> Vec<Vec<f64>> { (0..n).map(|i| m.row(i).iter().copied().collect()).collect() };
    let (p, t) = (rows(pred), rows(truth));
    let mut correct = 0usize;
    let mut total = 0usize;
    for i in 0..n {
        let own = pearson(&p[i], &t[i]);
        for j in (0..n).filter(|&j| j != i) {
            total += 1;
            if own > pearson(&p[i], &t[j]) {
                correct += 1;
            }
        }
    }
    correct as f64 / total as f64
}

/// SSIM computed window by window with a 2-D Gaussian, no separability.
pub fn ssim_direct(a: &[f64], b: &[f64], h: usize, w: usize, range: f64) -> f64 {
    let size = 11usize;
    let sigma: f64 = 1.5;
    let c = (size as f64 - 1.0) / 2.0;
    let mut win = vec![0.0; size * size];
    for r in 0..size {
        for s in 0..size {
            let d2 = (r as f64 - c).powi(2) + (s as f64 - c).powi(2);
            win[r * size + s] = (-d2 / (2.0 * sigma * sigma)).exp();
        }
    }
    let z: f64 = win.iter().sum();
    win.iter_mut().for_each(|v| *v /= z);
    let c1 = (0.01 * range).powi(2);
    let c2 = (0.03 * range).powi(2);
    let mut total = 0.0;
    let mut count = 0;
    for r0 in 0..=h - size {
        for s0 in 0..=w - size {
            let (mut ma, mut mb, mut aa, mut bb, mut ab) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for r in 0..size {
                for s in 0..size {
                    let k = win[r * size + s];
                    let x = a[(r0 + r) * w + s0 + s];
                    let y = b[(r0 + r) * w + s0 + s];
                    ma += k * x;
                    mb += k * y;
                    aa += k * x * x;
                    bb += k * y * y;
                    ab += k * x * y;
                }
            }
            let va = aa - ma * ma;
            let vb = bb - mb * mb;
            let cov = ab - ma * mb;
            total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
            count += 1;
        }
    }
    total / count as f64
}

/// Closed-form Fréchet distance between 1-D Gaussians.
pub fn frechet_1d(m1: f64, s1: f64, m2: f64, s2: f64) -> f64 {
    (m1 - m2).powi(2) + (s1 - s2).powi(2)
}

/// (hypothesis, reference, matches, chunks, score), worked out by hand over
/// every maximum alignment.
pub const METEOR_TABLE: [(&str, &str, usize, usize, f64); 10] = [
    ("a dog on grass", "a dog on grass", 4, 1, 127.0 / 128.0),
    ("the cat", "the cat sat", 2, 1, 20.0 / 29.0 * 0.9375),
    ("red blue", "cat dog", 0, 0, 0.0),
    ("the cat sat on the mat", "on the mat sat the cat", 6, 3, 15.0 / 16.0),
    ("a man riding a horse", "a horse and a man riding", 5, 2, 242.0 / 295.0),
    ("dog", "a dog runs", 1, 1, 5.0 / 28.0),
    ("a cat sitting on a couch next to a dog", "a dog and a cat on a couch", 7, 3, 3295.0 / 4018.0),
    ("people walking down a street", "a street with people walking", 4, 2, 0.75),
    ("two giraffes standing in a field", "two zebras standing in a grassy field", 5, 3, 223.0 / 345.0),
    ("the the the", "the", 1, 1, 5.0 / 12.0),
];
