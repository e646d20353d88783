use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imagemetrics::Similarity;
use crate::ridge::{AlphaGrid, DEFAULT_FOLDS};

pub const VDVAE_LAYERS: u8 = 31;

/// Which latent space a branch decodes into.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BranchName {
    CaptionFeatures,
    /// 1-based hierarchical layer index, 1..=31
    VdvaeLayer(u8),
    DepthLatent,
}

impl FromStr for BranchName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "caption_features" => Ok(Self::CaptionFeatures),
            "depth_latent" => Ok(Self::DepthLatent),
            other => {
                let layer = other
                    .strip_prefix("vdvae_layer_")
                    .and_then(|k| k.parse::<u8>().ok())
                    .filter(|k| (1..=VDVAE_LAYERS).contains(k))
                    .ok_or_else(|| {
                        Error::Validation(format!(
                            "unknown branch {other:?}; expected caption_features, depth_latent or vdvae_layer_1..vdvae_layer_{VDVAE_LAYERS}"
                        ))
                    })?;
                Ok(Self::VdvaeLayer(layer))
            }
        }
    }
}

impl fmt::Display for BranchName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::CaptionFeatures => f.write_str("caption_features"),
            Self::VdvaeLayer(k) => write!(f, "vdvae_layer_{k}"),
            Self::DepthLatent => f.write_str("depth_latent"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchSpec {
    pub name: String,
    /// stimuli × dims, rows in first-appearance order of the manifest
    pub target: PathBuf,
}

impl BranchSpec {
    pub fn new(name: impl Into<String>, target: impl Into<PathBuf>) -> Self {
        Self {
            name: name.into(),
            target: target.into(),
        }
    }
}

/// Image-generation settings carried through to the conditioning bundle.
/// Nothing here is interpreted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffusionPassthrough {
    pub steps: u32,
    pub guidance_scale: f64,
    pub controlnet_weight: f64,
    pub negative_prompt: String,
}

impl Default for DiffusionPassthrough {
    fn default() -> Self {
        Self {
            steps: 30,
            guidance_scale: 9.0,
            controlnet_weight: 0.8,
            negative_prompt: String::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaptionSource {
    pub hypotheses: PathBuf,
    pub references: Vec<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum EmbeddingSource {
    Path(PathBuf),
    WithIds { matrix: PathBuf, ids: Option<PathBuf> },
}

impl EmbeddingSource {
    pub fn matrix(&self) -> &Path {
        match self {
            Self::Path(p) => p,
            Self::WithIds { matrix, .. } => matrix,
        }
    }

    pub fn ids(&self) -> Option<&Path> {
        match self {
            Self::Path(_) => None,
            Self::WithIds { ids, .. } => ids.as_deref(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingPair {
    pub pred: EmbeddingSource,
    pub truth: EmbeddingSource,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ImageSource {
    /// One flattened image per row; `channels` = 3 means interleaved RGB.
    Matrix {
        matrix: PathBuf,
        height: usize,
        width: usize,
        dynamic_range: f64,
        #[serde(default = "one")]
        channels: usize,
    },
    /// Every `*.pgm` file in a directory, paired across sides by file name.
    PgmDir { pgm_dir: PathBuf },
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImagePair {
    pub pred: ImageSource,
    pub truth: ImageSource,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluationConfig {
    #[serde(default)]
    pub similarity: Similarity,
    #[serde(default = "two")]
    pub ways: usize,
    pub meteor_image_vs_human: Option<CaptionSource>,
    pub meteor_brain_vs_image: Option<CaptionSource>,
    pub sentence_image_vs_human: Option<EmbeddingPair>,
    pub sentence_brain_vs_image: Option<EmbeddingPair>,
    pub clip_image_vs_human: Option<EmbeddingPair>,
    pub clip_brain_vs_image: Option<EmbeddingPair>,
    pub images: Option<ImagePair>,
    pub alexnet_2: Option<EmbeddingPair>,
    pub alexnet_5: Option<EmbeddingPair>,
    pub inception: Option<EmbeddingPair>,
    pub clip: Option<EmbeddingPair>,
    /// Usually Inception pool features of generated and real images.
    pub fid: Option<EmbeddingPair>,
}

fn two() -> usize {
    2
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        Self {
            similarity: Similarity::default(),
            ways: two(),
            meteor_image_vs_human: None,
            meteor_brain_vs_image: None,
            sentence_image_vs_human: None,
            sentence_brain_vs_image: None,
            clip_image_vs_human: None,
            clip_brain_vs_image: None,
            images: None,
            alexnet_2: None,
            alexnet_5: None,
            inception: None,
            clip: None,
            fid: None,
        }
    }
}

fn default_folds() -> usize {
    DEFAULT_FOLDS
}

fn yes() -> bool {
    true
}

/// A whole run: inputs, per-branch targets, model selection and evaluation.
/// Relative paths resolve against the directory of the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub voxels: PathBuf,
    pub manifest: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub roi_mask: Option<PathBuf>,
    pub branches: Vec<BranchSpec>,
    #[serde(default)]
    pub alpha_grid: AlphaGrid,
    #[serde(default = "default_folds")]
    pub folds: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "yes")]
    pub fit_intercept: bool,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub evaluation: EvaluationConfig,
    #[serde(default)]
    pub diffusion: DiffusionPassthrough,
    #[serde(skip)]
    base_dir: PathBuf,
}

impl PipelineConfig {
    pub fn new(
        voxels: impl Into<PathBuf>,
        manifest: impl Into<PathBuf>,
        branches: Vec<BranchSpec>,
        output_dir: impl Into<PathBuf>,
    ) -> Self {
        Self {
            voxels: voxels.into(),
            manifest: manifest.into(),
            roi_mask: None,
            branches,
            alpha_grid: AlphaGrid::default(),
            folds: DEFAULT_FOLDS,
            seed: 0,
            fit_intercept: true,
            output_dir: output_dir.into(),
            evaluation: EvaluationConfig::default(),
            diffusion: DiffusionPassthrough::default(),
            base_dir: PathBuf::new(),
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_base_dir(mut self, dir: impl Into<PathBuf>) -> Self {
        self.base_dir = dir.into();
        self
    }

    pub fn base_dir(&self) -> &Path {
        &self.base_dir
    }

    /// Resolves `p` against the config file's directory.
    pub fn resolve(&self, p: impl AsRef<Path>) -> PathBuf {
        let p = p.as_ref();
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn output_dir(&self) -> PathBuf {
        self.resolve(&self.output_dir)
    }

    /// `.toml` files are parsed as TOML, anything else as JSON.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let ctx = path.display().to_string();
        let cfg: Self = if path.extension().is_some_and(|e| e == "toml") {
            toml::from_str(&text).map_err(|source| Error::Toml { context: ctx, source })?
        } else {
            serde_json::from_str(&text).map_err(|e| Error::json(ctx, e))?
        };
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg.with_base_dir(base))
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::json("pipeline config", e))?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    /// Structural checks plus existence of every input file the fitting
    /// stage reads.
    pub fn validate(&self) -> Result<()> {
        if self.branches.is_empty() {
            return Err(Error::Validation("config lists no branches".into()));
        }
        let mut seen = HashSet::new();
        for b in &self.branches {
            let name: BranchName = b.name.parse()?;
            if !seen.insert(name) {
                return Err(Error::Validation(format!("branch {} listed twice", b.name)));
            }
            let target = self.resolve(&b.target);
            if !target.is_file() {
                return Err(Error::Validation(format!(
                    "branch {}: target file {} does not exist",
                    b.name,
                    target.display()
                )));
            }
        }
        if self.folds < 2 {
            return Err(Error::Validation(format!("folds must be at least 2, got {}", self.folds)));
        }
        if self.evaluation.ways < 2 {
            return Err(Error::Validation(format!(
                "identification needs at least 2 ways, got {}",
                self.evaluation.ways
            )));
        }
        let mut inputs = vec![("voxels", &self.voxels), ("manifest", &self.manifest)];
        if let Some(mask) = &self.roi_mask {
            inputs.push(("roi_mask", mask));
        }
        for (what, p) in inputs {
            let p = self.resolve(p);
            if !p.is_file() {
                return Err(Error::Validation(format!("{what} file {} does not exist", p.display())));
            }
        }
        Ok(())
    }

    pub fn branch(&self, name: &str) -> Result<&BranchSpec> {
        self.branches
            .iter()
            .find(|b| b.name == name)
            .ok_or_else(|| Error::Validation(format!("branch {name:?} is not configured")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn branch_names() {
        assert_eq!("caption_features".parse::<BranchName>().unwrap(), BranchName::CaptionFeatures);
        assert_eq!("vdvae_layer_31".parse::<BranchName>().unwrap(), BranchName::VdvaeLayer(31));
        assert_eq!(BranchName::VdvaeLayer(7).to_string(), "vdvae_layer_7");
        for bad in ["vdvae_layer_0", "vdvae_layer_32", "vdvae_layer_x", "depth"] {
            assert!(bad.parse::<BranchName>().is_err(), "{bad}");
        }
    }

    #[test]
    fn json_defaults() {
        let cfg: PipelineConfig = serde_json::from_str(
            r#"{"voxels":"v.f32m","manifest":"m.json","output_dir":"out",
                "branches":[{"name":"depth_latent","target":"d.f32m"}]}"#,
        )
        .unwrap();
        assert_eq!(cfg.folds, 5);
        assert!(cfg.fit_intercept);
        assert_eq!(cfg.alpha_grid, AlphaGrid::default());
        assert_eq!(cfg.diffusion.steps, 30);
        assert_eq!(cfg.diffusion.guidance_scale, 9.0);
        assert_eq!(cfg.diffusion.controlnet_weight, 0.8);
        assert_eq!(cfg.evaluation.ways, 2);
        assert_eq!(cfg.evaluation.similarity, Similarity::Pearson);
    }

    #[test]
    fn toml_and_relative_paths() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cfg.toml");
        fs::write(
            &path,
            r#"
voxels = "v.f32m"
manifest = "/abs/m.json"
output_dir = "out"
alpha_grid = [10.0, 1.0]
seed = 3

[[branches]]
name = "caption_features"
target = "t.f32m"

[evaluation]
similarity = "cosine"

[evaluation.alexnet_2]
pred = "a.f32m"
truth = { matrix = "b.f32m", ids = "ids.json" }
"#,
        )
        .unwrap();
        let cfg = PipelineConfig::load(&path).unwrap();
        assert_eq!(cfg.resolve(&cfg.voxels), dir.path().join("v.f32m"));
        assert_eq!(cfg.resolve(&cfg.manifest), PathBuf::from("/abs/m.json"));
        assert_eq!(cfg.alpha_grid.candidates(), &[1.0, 10.0]);
        assert_eq!(cfg.evaluation.similarity, Similarity::Cosine);
        let pair = cfg.evaluation.alexnet_2.as_ref().unwrap();
        assert_eq!(pair.truth.ids(), Some(Path::new("ids.json")));
        // missing files surface at validation
        assert!(matches!(cfg.validate(), Err(Error::Validation(_))));
    }

    #[test]
    fn validation_rejects_duplicate_and_unknown_branches() {
        let dir = tempfile::tempdir().unwrap();
        for f in ["v", "m", "t"] {
            fs::write(dir.path().join(f), b"").unwrap();
        }
        let base = PipelineConfig::new("v", "m", vec![BranchSpec::new("caption_features", "t")], "out")
            .with_base_dir(dir.path());
        base.validate().unwrap();

        let mut dup = base.clone();
        dup.branches.push(BranchSpec::new("caption_features", "t"));
        assert!(dup.validate().is_err());

        let mut unknown = base.clone();
        unknown.branches[0].name = "vdvae_layer_40".into();
        assert!(unknown.validate().is_err());

        let mut folds = base;
        folds.folds = 1;
        assert!(folds.validate().is_err());
    }
}
