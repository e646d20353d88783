//! Conditioning bundle: decoded feature files plus the generation settings
//! an external image-synthesis stack needs.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::{DiffusionPassthrough, PipelineConfig};
use super::run::{PREDICTION_FILE, TEST_IDS_FILE};
use crate::datastore::MatrixFile;
use crate::error::{Error, Result};

pub const DESCRIPTOR_FILE: &str = "descriptor.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureEntry {
    pub branch: String,
    pub file: String,
    pub rows: usize,
    pub cols: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConditioningDescriptor {
    pub format: String,
    pub stimulus_ids: Vec<String>,
    pub features: Vec<FeatureEntry>,
    pub diffusion: DiffusionPassthrough,
}

impl ConditioningDescriptor {
    /// Reads `descriptor.json` from a bundle directory and checks every
    /// listed feature file against it.
    pub fn read(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let path = dir.join(DESCRIPTOR_FILE);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let d: Self = serde_json::from_str(&text).map_err(|e| Error::json(path.display().to_string(), e))?;
        d.validate(dir)?;
        Ok(d)
    }

    pub fn validate(&self, dir: &Path) -> Result<()> {
        if self.format != "F32M" {
            return Err(Error::Validation(format!("unknown feature format {:?}", self.format)));
        }
        for f in &self.features {
            let m = MatrixFile::read(dir.join(&f.file))?;
            if (m.rows(), m.cols()) != (f.rows, f.cols) {
                return Err(Error::Validation(format!(
                    "{}: descriptor says {}x{}, file is {}x{}",
                    f.file,
                    f.rows,
                    f.cols,
                    m.rows(),
                    m.cols()
                )));
            }
            if f.rows != self.stimulus_ids.len() {
                return Err(Error::Validation(format!(
                    "{}: {} rows for {} stimuli",
                    f.file,
                    f.rows,
                    self.stimulus_ids.len()
                )));
            }
        }
        Ok(())
    }
}

/// Copies the renormalized test predictions of `branches` (all configured
/// branches when empty) into `out_dir` and writes the descriptor.
pub fn export_conditioning(cfg: &PipelineConfig, branches: &[String], out_dir: impl AsRef<Path>) -> Result<ConditioningDescriptor> {
    let out_dir = out_dir.as_ref();
    let names: Vec<String> = if branches.is_empty() {
        cfg.branches.iter().map(|b| b.name.clone()).collect()
    } else {
        for b in branches {
            cfg.branch(b)?;
        }
        branches.to_vec()
    };

    let mut stimulus_ids: Option<Vec<String>> = None;
    let mut loaded = Vec::with_capacity(names.len());
    for name in &names {
        let dir = cfg.output_dir().join(name);
        let pred_path = dir.join(PREDICTION_FILE);
        if !pred_path.is_file() {
            return Err(Error::Validation(format!(
                "branch {name} is incomplete: no test predictions at {}",
                pred_path.display()
            )));
        }
        let ids_path = dir.join(TEST_IDS_FILE);
        let text = fs::read_to_string(&ids_path).map_err(|e| Error::io(&ids_path, e))?;
        let ids: Vec<String> = serde_json::from_str(&text).map_err(|e| Error::json(ids_path.display().to_string(), e))?;
        match &stimulus_ids {
            None => stimulus_ids = Some(ids),
            Some(prev) if *prev != ids => {
                return Err(Error::Validation(format!("branch {name} predicts a different set of test stimuli")))
            }
            Some(_) => {}
        }
        loaded.push((name, MatrixFile::read(&pred_path)?));
    }

    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut features = Vec::with_capacity(loaded.len());
    for (name, m) in loaded {
        let file = format!("{name}.f32m");
        m.write(out_dir.join(&file))?;
        features.push(FeatureEntry {
            branch: name.clone(),
            file,
            rows: m.rows(),
            cols: m.cols(),
        });
    }
    let descriptor = ConditioningDescriptor {
        format: "F32M".into(),
        stimulus_ids: stimulus_ids.unwrap_or_default(),
        features,
        diffusion: cfg.diffusion.clone(),
    };
    let path = out_dir.join(DESCRIPTOR_FILE);
    let text = serde_json::to_string_pretty(&descriptor).map_err(|e| Error::json("descriptor", e))?;
    fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))?;
    Ok(descriptor)
}
