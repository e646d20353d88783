//! Decoding branches over the ridge/renormalization core, evaluation, and
//! export of decoded features.

mod config;
mod evaluate;
mod export;
mod run;

pub use config::{
    BranchName, BranchSpec, CaptionSource, DiffusionPassthrough, EmbeddingPair, EmbeddingSource, EvaluationConfig,
    ImagePair, ImageSource, PipelineConfig, VDVAE_LAYERS,
};
pub use evaluate::{
    evaluate, metadata, MetricEntry, MetricReport, MetricStatus, MetricTable, ReportMetadata, ALEXNET_2, ALEXNET_5,
    CAPTION_LABELS, CLIP, CLIP_BRAIN_IMAGE, CLIP_IMAGE_HUMAN, FID, IMAGE_LABELS, INCEPTION, METEOR_BRAIN_IMAGE,
    METEOR_IMAGE_HUMAN, PIXCORR, SENTENCE_BRAIN_IMAGE, SENTENCE_IMAGE_HUMAN, SSIM,
};
pub use export::{export_conditioning, ConditioningDescriptor, FeatureEntry, DESCRIPTOR_FILE};
pub use run::{
    renormalize_train_only, BranchOutcome, BranchRecord, FittedBranch, Pipeline, Prepared, PredictionStatus,
    BRANCH_FILE, PREDICTION_FILE, PREDICTION_STATUS_FILE, PRED_STATS_FILE, TARGET_STATS_FILE, TEST_IDS_FILE,
};
