use super::image::GrayImage;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SsimParams {
    pub window: usize,
    pub sigma: f64,
    pub k1: f64,
    pub k2: f64,
}

impl Default for SsimParams {
    fn default() -> Self {
        Self {
            window: 11,
            sigma: 1.5,
            k1: 0.01,
            k2: 0.03,
        }
    }
}

/// Normalized 1-D Gaussian taps; the 2-D window is their outer product.
pub fn gaussian_window(size: usize, sigma: f64) -> Vec<f64> {
    let center = (size as f64 - 1.0) / 2.0;
    let taps: Vec<f64> = (0..size)
        .map(|i| {
            let d = i as f64 - center;
            (-(d * d) / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let sum: f64 = taps.iter().sum();
    taps.into_iter().map(|t| t / sum).collect()
}

/// Valid-mode separable filtering of a row-major plane.
fn filter_valid(plane: &[f64], height: usize, width: usize, taps: &[f64]) -> Vec<f64> {
    let k = taps.len();
    let out_w = width - k + 1;
    let out_h = height - k + 1;
    let mut horiz = vec![0.0; height * out_w];
    for r in 0..height {
        let row = &plane[r * width..(r + 1) * width];
        for c in 0..out_w {
            horiz[r * out_w + c] = taps.iter().zip(&row[c..c + k]).map(|(t, v)| t * v).sum();
        }
    }
    let mut out = vec![0.0; out_h * out_w];
    for r in 0..out_h {
        for c in 0..out_w {
            out[r * out_w + c] = taps
                .iter()
                .enumerate()
                .map(|(i, t)| t * horiz[(r + i) * out_w + c])
                .sum();
        }
    }
    out
}

fn ssim_term(mu_a: f64, mu_b: f64, var_a: f64, var_b: f64, cov: f64, c1: f64, c2: f64) -> f64 {
    ((2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2)) / ((mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2))
}

/// Mean SSIM over all positions of a Gaussian window that fit inside the
/// image. Images smaller than the window in either direction are scored as
/// one uniformly weighted global window.
pub fn ssim(a: &GrayImage, b: &GrayImage, params: &SsimParams) -> Result<f64> {
    if (a.height(), a.width()) != (b.height(), b.width()) {
        return Err(Error::Shape(format!(
            "image sizes differ: {}x{} vs {}x{}",
            a.height(),
            a.width(),
            b.height(),
            b.width()
        )));
    }
    if a.dynamic_range() != b.dynamic_range() {
        return Err(Error::InvalidArgument(format!(
            "dynamic ranges differ: {} vs {}",
            a.dynamic_range(),
            b.dynamic_range()
        )));
    }
    let l = a.dynamic_range();
    let c1 = (params.k1 * l).powi(2);
    let c2 = (params.k2 * l).powi(2);
    let (h, w) = (a.height(), a.width());
    let (pa, pb) = (a.pixels(), b.pixels());

    if h < params.window || w < params.window {
        let n = pa.len() as f64;
        let mu_a = pa.iter().sum::<f64>() / n;
        let mu_b = pb.iter().sum::<f64>() / n;
        let var_a = pa.iter().map(|x| x * x).sum::<f64>() / n - mu_a * mu_a;
        let var_b = pb.iter().map(|x| x * x).sum::<f64>() / n - mu_b * mu_b;
        let cov = pa.iter().zip(pb).map(|(x, y)| x * y).sum::<f64>() / n - mu_a * mu_b;
        return Ok(ssim_term(mu_a, mu_b, var_a, var_b, cov, c1, c2));
    }

    let taps = gaussian_window(params.window, params.sigma);
    let sq = |p: &[f64]| p.iter().map(|x| x * x).collect::<Vec<_>>();
    let prod: Vec<f64> = pa.iter().zip(pb).map(|(x, y)| x * y).collect();
    let mu_a = filter_valid(pa, h, w, &taps);
    let mu_b = filter_valid(pb, h, w, &taps);
    let e_aa = filter_valid(&sq(pa), h, w, &taps);
    let e_bb = filter_valid(&sq(pb), h, w, &taps);
    let e_ab = filter_valid(&prod, h, w, &taps);

    let total: f64 = (0..mu_a.len())
        .map(|i| {
            let (ma, mb) = (mu_a[i], mu_b[i]);
            ssim_term(ma, mb, e_aa[i] - ma * ma, e_bb[i] - mb * mb, e_ab[i] - ma * mb, c1, c2)
        })
        .sum();
    Ok(total / mu_a.len() as f64)
}
