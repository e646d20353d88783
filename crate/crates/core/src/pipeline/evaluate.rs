//! Scores decoded outputs and assembles a report whose rows carry the caption
//! and image metric labels used for brain-decoding comparisons.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use log::warn;
use serde::{Deserialize, Serialize};

use super::config::{CaptionSource, EmbeddingPair, EmbeddingSource, ImagePair, ImageSource, PipelineConfig};
use super::run::{BranchRecord, BRANCH_FILE};
use crate::datastore::read_matrix;
use crate::error::{Error, Result};
use crate::imagemetrics::{
    frechet_distance, luminance, moments, nway_accuracy, pixcorr, read_pgm, ssim, EmbeddingSet, GrayImage,
    NwayOptions, SsimParams,
};
use crate::textmetrics::{align_captions, corpus_mean, meteor, paired_cosine, read_captions, TOKENIZATION, VARIANT};

pub const METEOR_IMAGE_HUMAN: &str = "Meteor (image captions and human captions)";
pub const METEOR_BRAIN_IMAGE: &str = "Meteor (brain captions and image captions)";
pub const SENTENCE_IMAGE_HUMAN: &str = "Sentence (image captions and human captions)";
pub const SENTENCE_BRAIN_IMAGE: &str = "Sentence (brain captions and image captions)";
pub const CLIP_IMAGE_HUMAN: &str = "CLIP (image captions and human captions)";
pub const CLIP_BRAIN_IMAGE: &str = "CLIP (brain captions and image captions)";
pub const PIXCORR: &str = "PixCorr";
pub const SSIM: &str = "SSIM";
pub const ALEXNET_2: &str = "AlexNet (2)";
pub const ALEXNET_5: &str = "AlexNet (5)";
pub const INCEPTION: &str = "Inception";
pub const CLIP: &str = "CLIP";
pub const FID: &str = "FID";

pub const CAPTION_LABELS: [&str; 6] = [
    METEOR_IMAGE_HUMAN,
    METEOR_BRAIN_IMAGE,
    SENTENCE_IMAGE_HUMAN,
    SENTENCE_BRAIN_IMAGE,
    CLIP_IMAGE_HUMAN,
    CLIP_BRAIN_IMAGE,
];
pub const IMAGE_LABELS: [&str; 7] = [PIXCORR, SSIM, ALEXNET_2, ALEXNET_5, INCEPTION, CLIP, FID];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricTable {
    Captions,
    Images,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricStatus {
    Ok,
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricEntry {
    pub table: MetricTable,
    pub label: String,
    pub status: MetricStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub items: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMetadata {
    pub meteor_variant: String,
    pub tokenization: String,
    pub embedding_similarity: String,
    pub identification: String,
    pub grayscale_conversion: String,
    pub ssim: String,
    pub fid: String,
    pub folds: usize,
    pub seed: u64,
    /// α chosen per branch; `null` for branches not fitted yet
    pub alpha_per_branch: BTreeMap<String, Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub metrics: Vec<MetricEntry>,
    pub metadata: ReportMetadata,
}

impl MetricReport {
    pub fn get(&self, label: &str) -> Option<&MetricEntry> {
        self.metrics.iter().find(|m| m.label == label)
    }

    pub fn value(&self, label: &str) -> Option<f64> {
        self.get(label).and_then(|m| m.value)
    }

    pub fn all_skipped(&self) -> bool {
        self.metrics.iter().all(|m| m.status == MetricStatus::Skipped)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }
}

/// Missing input files turn a metric into a skipped entry; anything else
/// wrong with the inputs is an error.
enum Outcome {
    Value { value: f64, items: usize },
    Skip(String),
}

struct Ctx<'a> {
    cfg: &'a PipelineConfig,
}

impl Ctx<'_> {
    fn path(&self, p: &Path) -> std::result::Result<PathBuf, String> {
        let full = self.cfg.resolve(p);
        if full.exists() {
            Ok(full)
        } else {
            Err(format!("missing input {}", full.display()))
        }
    }

    fn embeddings(&self, src: &EmbeddingSource) -> Result<std::result::Result<EmbeddingSet, String>> {
        let matrix = match self.path(src.matrix()) {
            Ok(p) => read_matrix(p)?,
            Err(reason) => return Ok(Err(reason)),
        };
        let set = match src.ids() {
            Some(ids) => {
                let ids_path = match self.path(ids) {
                    Ok(p) => p,
                    Err(reason) => return Ok(Err(reason)),
                };
                let text = fs::read_to_string(&ids_path).map_err(|e| Error::io(&ids_path, e))?;
                let ids: Vec<String> =
                    serde_json::from_str(&text).map_err(|e| Error::json(ids_path.display().to_string(), e))?;
                EmbeddingSet::new(ids, matrix)?
            }
            None => EmbeddingSet::unlabeled(matrix)?,
        };
        Ok(Ok(set))
    }

    fn pair(&self, pair: &EmbeddingPair) -> Result<std::result::Result<(EmbeddingSet, EmbeddingSet), String>> {
        let pred = match self.embeddings(&pair.pred)? {
            Ok(s) => s,
            Err(r) => return Ok(Err(r)),
        };
        let truth = match self.embeddings(&pair.truth)? {
            Ok(s) => s,
            Err(r) => return Ok(Err(r)),
        };
        Ok(Ok((pred, truth)))
    }

    fn meteor(&self, src: &CaptionSource) -> Result<Outcome> {
        let hyp = match self.path(&src.hypotheses) {
            Ok(p) => read_captions(p)?,
            Err(r) => return Ok(Outcome::Skip(r)),
        };
        let mut refs = Vec::with_capacity(src.references.len());
        for r in &src.references {
            match self.path(r) {
                Ok(p) => refs.push(read_captions(p)?),
                Err(reason) => return Ok(Outcome::Skip(reason)),
            }
        }
        if refs.is_empty() {
            return Ok(Outcome::Skip("no reference caption files configured".into()));
        }
        let sets = align_captions(&hyp, &refs)?;
        let scores = sets.iter().map(|(_, c)| meteor(c)).collect::<Result<Vec<_>>>()?;
        Ok(Outcome::Value {
            value: corpus_mean(&scores)?,
            items: scores.len(),
        })
    }

    fn cosine(&self, pair: &EmbeddingPair) -> Result<Outcome> {
        let (pred, truth) = match self.pair(pair)? {
            Ok(p) => p,
            Err(r) => return Ok(Outcome::Skip(r)),
        };
        if pred.ids() != truth.ids() {
            return Err(Error::Validation("embedding ids are not aligned".into()));
        }
        let scores = paired_cosine(pred.data(), truth.data())?;
        Ok(Outcome::Value {
            value: corpus_mean(&scores)?,
            items: scores.len(),
        })
    }

    fn identification(&self, pair: &EmbeddingPair) -> Result<Outcome> {
        let (pred, truth) = match self.pair(pair)? {
            Ok(p) => p,
            Err(r) => return Ok(Outcome::Skip(r)),
        };
        let opts = NwayOptions {
            ways: self.cfg.evaluation.ways,
            similarity: self.cfg.evaluation.similarity,
        };
        Ok(Outcome::Value {
            value: nway_accuracy(&pred, &truth, &opts)?,
            items: pred.len(),
        })
    }

    fn fid(&self, pair: &EmbeddingPair) -> Result<Outcome> {
        let (pred, truth) = match self.pair(pair)? {
            Ok(p) => p,
            Err(r) => return Ok(Outcome::Skip(r)),
        };
        Ok(Outcome::Value {
            value: frechet_distance(&moments(&pred)?, &moments(&truth)?)?,
            items: pred.len(),
        })
    }

    fn images(&self, src: &ImageSource) -> Result<std::result::Result<Vec<(String, GrayImage)>, String>> {
        match src {
            ImageSource::Matrix {
                matrix,
                height,
                width,
                dynamic_range,
                channels,
            } => {
                let m = match self.path(matrix) {
                    Ok(p) => read_matrix(p)?,
                    Err(r) => return Ok(Err(r)),
                };
                if *channels != 1 && *channels != 3 {
                    return Err(Error::Validation(format!("images must have 1 or 3 channels, got {channels}")));
                }
                if m.ncols() != height * width * channels {
                    return Err(Error::Shape(format!(
                        "image matrix has {} columns, expected {height}x{width}x{channels}",
                        m.ncols()
                    )));
                }
                let mut out = Vec::with_capacity(m.nrows());
                for (i, row) in m.row_iter().enumerate() {
                    let raw: Vec<f64> = row.iter().copied().collect();
                    let px = if *channels == 3 { luminance(&raw)? } else { raw };
                    out.push((i.to_string(), GrayImage::new(*height, *width, px, *dynamic_range)?));
                }
                Ok(Ok(out))
            }
            ImageSource::PgmDir { pgm_dir } => {
                let dir = match self.path(pgm_dir) {
                    Ok(p) => p,
                    Err(r) => return Ok(Err(r)),
                };
                let mut files: Vec<PathBuf> = fs::read_dir(&dir)
                    .map_err(|e| Error::io(&dir, e))?
                    .filter_map(|e| e.ok().map(|e| e.path()))
                    .filter(|p| p.extension().is_some_and(|x| x == "pgm"))
                    .collect();
                files.sort();
                let mut out = Vec::with_capacity(files.len());
                for f in files {
                    let name = f.file_name().unwrap().to_string_lossy().into_owned();
                    out.push((name, read_pgm(&f)?));
                }
                Ok(Ok(out))
            }
        }
    }

    fn pixel_metrics(&self, pair: &ImagePair) -> Result<(Outcome, Outcome)> {
        let skip2 = |r: String| Ok((Outcome::Skip(r.clone()), Outcome::Skip(r)));
        let pred = match self.images(&pair.pred)? {
            Ok(v) => v,
            Err(r) => return skip2(r),
        };
        let truth = match self.images(&pair.truth)? {
            Ok(v) => v,
            Err(r) => return skip2(r),
        };
        if pred.is_empty() {
            return skip2("no predicted images found".into());
        }
        if pred.iter().map(|p| &p.0).ne(truth.iter().map(|t| &t.0)) {
            return Err(Error::Validation("predicted and ground-truth images do not pair up".into()));
        }
        let params = SsimParams::default();
        let mut corr = Vec::with_capacity(pred.len());
        let mut structural = Vec::with_capacity(pred.len());
        for ((_, p), (_, t)) in pred.iter().zip(&truth) {
            corr.push(pixcorr(p.pixels(), t.pixels())?);
            structural.push(ssim(p, t, &params)?);
        }
        Ok((
            Outcome::Value {
                value: corpus_mean(&corr)?,
                items: corr.len(),
            },
            Outcome::Value {
                value: corpus_mean(&structural)?,
                items: structural.len(),
            },
        ))
    }
}

fn entry(table: MetricTable, label: &str, outcome: Outcome) -> MetricEntry {
    match outcome {
        Outcome::Value { value, items } => MetricEntry {
            table,
            label: label.to_string(),
            status: MetricStatus::Ok,
            value: Some(value),
            items: Some(items),
            reason: None,
        },
        Outcome::Skip(reason) => {
            warn!("{label}: skipped ({reason})");
            MetricEntry {
                table,
                label: label.to_string(),
                status: MetricStatus::Skipped,
                value: None,
                items: None,
                reason: Some(reason),
            }
        }
    }
}

fn not_configured() -> Outcome {
    Outcome::Skip("not configured".into())
}

fn alpha_per_branch(cfg: &PipelineConfig) -> BTreeMap<String, Option<f64>> {
    cfg.branches
        .iter()
        .map(|b| {
            let path = cfg.output_dir().join(&b.name).join(BRANCH_FILE);
            let alpha = fs::read_to_string(path)
                .ok()
                .and_then(|t| serde_json::from_str::<BranchRecord>(&t).ok())
                .map(|r| r.alpha);
            (b.name.clone(), alpha)
        })
        .collect()
}

pub fn metadata(cfg: &PipelineConfig) -> ReportMetadata {
    ReportMetadata {
        meteor_variant: VARIANT.to_string(),
        tokenization: TOKENIZATION.to_string(),
        embedding_similarity: "per-item cosine similarity of externally extracted embeddings, averaged over items".into(),
        identification: format!(
            "{}-way identification, {} similarity, all distractor combinations, ties count as incorrect",
            cfg.evaluation.ways,
            cfg.evaluation.similarity.name()
        ),
        grayscale_conversion: "RGB converted to luma with BT.601 weights 0.299/0.587/0.114".into(),
        ssim: "Gaussian window 11x11, sigma 1.5, k1 0.01, k2 0.03, valid windows, mean over images".into(),
        fid: "squared Frechet distance between Gaussian fits (ddof 1) of supplied embeddings".into(),
        folds: cfg.folds,
        seed: cfg.seed,
        alpha_per_branch: alpha_per_branch(cfg),
    }
}

/// Computes every metric in the evaluation section. Rows that are not
/// configured, or whose inputs are missing, are reported as skipped.
pub fn evaluate(cfg: &PipelineConfig) -> Result<MetricReport> {
    let ev = &cfg.evaluation;
    let ctx = Ctx { cfg };
    let mut metrics = Vec::with_capacity(CAPTION_LABELS.len() + IMAGE_LABELS.len());

    let captions: [(&str, Option<&CaptionSource>); 2] = [
        (METEOR_IMAGE_HUMAN, ev.meteor_image_vs_human.as_ref()),
        (METEOR_BRAIN_IMAGE, ev.meteor_brain_vs_image.as_ref()),
    ];
    for (label, src) in captions {
        let o = match src {
            Some(s) => ctx.meteor(s)?,
            None => not_configured(),
        };
        metrics.push(entry(MetricTable::Captions, label, o));
    }
    let cosines = [
        (SENTENCE_IMAGE_HUMAN, ev.sentence_image_vs_human.as_ref()),
        (SENTENCE_BRAIN_IMAGE, ev.sentence_brain_vs_image.as_ref()),
        (CLIP_IMAGE_HUMAN, ev.clip_image_vs_human.as_ref()),
        (CLIP_BRAIN_IMAGE, ev.clip_brain_vs_image.as_ref()),
    ];
    for (label, src) in cosines {
        let o = match src {
            Some(p) => ctx.cosine(p)?,
            None => not_configured(),
        };
        metrics.push(entry(MetricTable::Captions, label, o));
    }

    let (pc, ss) = match &ev.images {
        Some(pair) => ctx.pixel_metrics(pair)?,
        None => (not_configured(), not_configured()),
    };
    metrics.push(entry(MetricTable::Images, PIXCORR, pc));
    metrics.push(entry(MetricTable::Images, SSIM, ss));

    let spaces = [
        (ALEXNET_2, ev.alexnet_2.as_ref()),
        (ALEXNET_5, ev.alexnet_5.as_ref()),
        (INCEPTION, ev.inception.as_ref()),
        (CLIP, ev.clip.as_ref()),
    ];
    for (label, src) in spaces {
        let o = match src {
            Some(p) => ctx.identification(p)?,
            None => not_configured(),
        };
        metrics.push(entry(MetricTable::Images, label, o));
    }
    let fid = match &ev.fid {
        Some(p) => ctx.fid(p)?,
        None => not_configured(),
    };
    metrics.push(entry(MetricTable::Images, FID, fid));

    Ok(MetricReport {
        metrics,
        metadata: metadata(cfg),
    })
}
