use std::collections::{HashMap, HashSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub trial_id: String,
    pub stimulus_id: String,
    pub split: Split,
}

impl ManifestEntry {
    pub fn new(trial_id: impl Into<String>, stimulus_id: impl Into<String>, split: Split) -> Self {
        Self {
            trial_id: trial_id.into(),
            stimulus_id: stimulus_id.into(),
            split,
        }
    }
}

/// One entry per row of the voxel matrix, in row order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Manifest {
    entries: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn new(entries: Vec<ManifestEntry>) -> Result<Self> {
        let mut trials = HashSet::with_capacity(entries.len());
        let mut splits: HashMap<&str, Split> = HashMap::new();
        for e in &entries {
            if !trials.insert(e.trial_id.as_str()) {
                return Err(Error::Validation(format!("duplicate trial_id {:?}", e.trial_id)));
            }
            match splits.get(e.stimulus_id.as_str()) {
                Some(&s) if s != e.split => {
                    return Err(Error::Validation(format!(
                        "stimulus {:?} appears in both train and test splits",
                        e.stimulus_id
                    )))
                }
                Some(_) => {}
                None => {
                    splits.insert(e.stimulus_id.as_str(), e.split);
                }
            }
        }
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &[ManifestEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Distinct stimulus ids in order of first appearance.
    pub fn stimulus_ids(&self) -> Vec<&str> {
        let mut seen = HashSet::new();
        self.entries
            .iter()
            .filter(|e| seen.insert(e.stimulus_id.as_str()))
            .map(|e| e.stimulus_id.as_str())
            .collect()
    }

    pub fn split_count(&self, split: Split) -> usize {
        self.entries.iter().filter(|e| e.split == split).count()
    }

    /// Subset of entries on one side of the split, order preserved.
    pub fn filter_split(&self, split: Split) -> Manifest {
        Manifest {
            entries: self.entries.iter().filter(|e| e.split == split).cloned().collect(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let entries: Vec<ManifestEntry> =
            serde_json::from_str(text).map_err(|e| Error::json("manifest", e))?;
        Self::new(entries)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.entries).expect("manifest serializes")
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }
}
