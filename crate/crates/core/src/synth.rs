//! Linear-Gaussian brain encoder simulator.
//!
//! Latents `Z ~ N(0, I)` are pushed through a random encoder
//! `W_enc ~ N(0, 1/d)` to voxel space and every presentation gets fresh
//! Gaussian noise scaled to the empirical signal spread. Decoding the latents
//! back from the voxels has a known answer, which is what the pipeline is
//! scored against.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::datastore::{write_matrix, Manifest, ManifestEntry, Split};
use crate::error::{Error, Result};
use crate::imagemetrics::pearson_columns;
use crate::pipeline::{BranchSpec, PipelineConfig};

pub const MAX_REPEATS: usize = 3;

pub const VOXELS_FILE: &str = "voxels.f32m";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const LATENTS_FILE: &str = "latents.f32m";
pub const TEST_LATENTS_FILE: &str = "latents_test.f32m";
pub const ENCODER_FILE: &str = "encoder.f32m";
pub const CONFIG_FILE: &str = "pipeline.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub n_train: usize,
    pub n_test: usize,
    pub voxels: usize,
    pub latent_dims: usize,
    /// Noise std as a fraction of the signal std.
    pub noise_sigma: f64,
    pub repeats: usize,
    pub seed: u64,
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("n_train", self.n_train),
            ("n_test", self.n_test),
            ("voxels", self.voxels),
            ("latent_dims", self.latent_dims),
            ("repeats", self.repeats),
        ] {
            if v == 0 {
                return Err(Error::Validation(format!("synth spec: {name} must be at least 1")));
            }
        }
        if self.repeats > MAX_REPEATS {
            return Err(Error::Validation(format!(
                "synth spec: at most {MAX_REPEATS} repeats, got {}",
                self.repeats
            )));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::Validation(format!(
                "synth spec: noise_sigma must be finite and >= 0, got {}",
                self.noise_sigma
            )));
        }
        Ok(())
    }

    pub fn n_stimuli(&self) -> usize {
        self.n_train + self.n_test
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let spec: Self = serde_json::from_str(&text).map_err(|e| Error::json(path.display().to_string(), e))?;
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthData {
    pub spec: SynthSpec,
    /// (stimuli · repeats) × voxels, one row per presentation
    pub trials: DMatrix<f64>,
    pub manifest: Manifest,
    /// stimuli × latent_dims; train stimuli first
    pub latents: DMatrix<f64>,
    /// latent_dims × voxels
    pub encoder: DMatrix<f64>,
    /// population std of the noiseless voxel signal
    pub signal_std: f64,
}

pub fn stimulus_id(i: usize) -> String {
    format!("stim{i:05}")
}

fn normal_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(rows, cols);
    for r in 0..rows {
        for c in 0..cols {
            let z: f64 = rng.sample(StandardNormal);
            m[(r, c)] = scale * z;
        }
    }
    m
}

/// Presentations are ordered repeat-major: every stimulus once, then every
/// stimulus again, so repeats of one stimulus are never adjacent rows.
pub fn generate(spec: &SynthSpec) -> Result<SynthData> {
    spec.validate()?;
    let n = spec.n_stimuli();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let latents = normal_matrix(&mut rng, n, spec.latent_dims, 1.0);
    let encoder = normal_matrix(&mut rng, spec.latent_dims, spec.voxels, 1.0 / (spec.latent_dims as f64).sqrt());
    let signal = &latents * &encoder;
    let mean = signal.mean();
    let signal_std = (signal.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / signal.len() as f64).sqrt();
    let noise_scale = spec.noise_sigma * signal_std;

    let mut trials = DMatrix::zeros(n * spec.repeats, spec.voxels);
    let mut entries = Vec::with_capacity(n * spec.repeats);
    for rep in 0..spec.repeats {
        for s in 0..n {
            let row = rep * n + s;
            let noise = normal_matrix(&mut rng, 1, spec.voxels, noise_scale);
            trials.set_row(row, &(signal.row(s) + noise));
            let split = if s < spec.n_train { Split::Train } else { Split::Test };
            entries.push(ManifestEntry::new(format!("{}_r{rep}", stimulus_id(s)), stimulus_id(s), split));
        }
    }
    Ok(SynthData {
        spec: spec.clone(),
        trials,
        manifest: Manifest::new(entries)?,
        latents,
        encoder,
        signal_std,
    })
}

impl SynthData {
    pub fn train_latents(&self) -> DMatrix<f64> {
        self.latents.rows(0, self.spec.n_train).into_owned()
    }

    pub fn test_latents(&self) -> DMatrix<f64> {
        self.latents.rows(self.spec.n_train, self.spec.n_test).into_owned()
    }

    /// Writes voxels, manifest, latents (all and test-only), encoder and a
    /// ready-to-run single-branch pipeline config into `dir`.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<PathBuf> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_matrix(&self.trials, dir.join(VOXELS_FILE))?;
        self.manifest.write(dir.join(MANIFEST_FILE))?;
        write_matrix(&self.latents, dir.join(LATENTS_FILE))?;
        write_matrix(&self.test_latents(), dir.join(TEST_LATENTS_FILE))?;
        write_matrix(&self.encoder, dir.join(ENCODER_FILE))?;

        let cfg = PipelineConfig::new(
            VOXELS_FILE,
            MANIFEST_FILE,
            vec![BranchSpec::new("caption_features", LATENTS_FILE)],
            "out",
        )
        .with_seed(self.spec.seed);
        let path = dir.join(CONFIG_FILE);
        cfg.write(&path)?;
        Ok(path)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClosedLoopScore {
    pub per_dim: Vec<f64>,
    pub mean: f64,
}

/// Pearson r between decoded and true latents, per latent dimension.
pub fn closed_loop_score(decoded: &DMatrix<f64>, truth: &DMatrix<f64>) -> Result<ClosedLoopScore> {
    let per_dim = pearson_columns(decoded, truth)?;
    let mean = per_dim.iter().sum::<f64>() / per_dim.len() as f64;
    Ok(ClosedLoopScore { per_dim, mean })
}
