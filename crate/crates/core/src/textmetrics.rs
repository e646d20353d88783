//! Caption metrics: exact-match unigram METEOR and embedding cosine similarity.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Longest sentence accepted by [`meteor`]; chunk minimization is exponential
/// in the worst case.
pub const MAX_TOKENS: usize = 50;

/// Memo entries allowed per chunk search before giving up.
const SEARCH_BUDGET: usize = 4_000_000;

pub const RECALL_WEIGHT: f64 = 9.0;
pub const PENALTY_GAMMA: f64 = 0.5;
pub const PENALTY_BETA: f64 = 3.0;

pub const VARIANT: &str = "METEOR exact-match unigram (no stemming or synonyms), alpha=0.9 (P:R weights 1:9), gamma=0.5, beta=3, exact chunk minimization, max over references";
pub const TOKENIZATION: &str = "lowercase, split on whitespace, strip ASCII punctuation";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenSeq {
    tokens: Vec<String>,
}

impl TokenSeq {
    /// Lowercases every token; empty tokens are rejected.
    pub fn new<S: AsRef<str>>(tokens: impl IntoIterator<Item = S>) -> Result<Self> {
        let tokens: Vec<String> = tokens.into_iter().map(|t| t.as_ref().to_lowercase()).collect();
        if tokens.iter().any(String::is_empty) {
            return Err(Error::InvalidArgument("empty token".into()));
        }
        Ok(Self { tokens })
    }

    pub fn tokenize(text: &str) -> Self {
        let tokens = text
            .split_whitespace()
            .map(|w| {
                w.chars()
                    .filter(|c| !c.is_ascii_punctuation())
                    .collect::<String>()
                    .to_lowercase()
            })
            .filter(|t| !t.is_empty())
            .collect();
        Self { tokens }
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CaptionSet {
    pub hypothesis: TokenSeq,
    pub references: Vec<TokenSeq>,
}

impl CaptionSet {
    pub fn new(hypothesis: TokenSeq, references: Vec<TokenSeq>) -> Result<Self> {
        if references.is_empty() {
            return Err(Error::InvalidArgument("caption set needs at least one reference".into()));
        }
        Ok(Self {
            hypothesis,
            references,
        })
    }

    pub fn from_text(hypothesis: &str, references: &[&str]) -> Result<Self> {
        Self::new(
            TokenSeq::tokenize(hypothesis),
            references.iter().map(|r| TokenSeq::tokenize(r)).collect(),
        )
    }
}

/// Intermediate quantities of a single hypothesis/reference comparison.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeteorParts {
    pub matches: usize,
    pub chunks: usize,
    pub precision: f64,
    pub recall: f64,
    pub fmean: f64,
    pub penalty: f64,
    pub score: f64,
}

pub fn meteor_parts(hyp: &TokenSeq, reference: &TokenSeq) -> Result<MeteorParts> {
    if hyp.is_empty() {
        return Err(Error::InvalidArgument("empty hypothesis".into()));
    }
    for (what, seq) in [("hypothesis", hyp), ("reference", reference)] {
        if seq.len() > MAX_TOKENS {
            return Err(Error::InvalidArgument(format!(
                "{what} has {} tokens, limit is {MAX_TOKENS}",
                seq.len()
            )));
        }
    }
    let (matches, chunks) = ChunkSearch::new(hyp.tokens(), reference.tokens()).run()?;
    if matches == 0 {
        return Ok(MeteorParts {
            matches: 0,
            chunks: 0,
            precision: 0.0,
            recall: 0.0,
            fmean: 0.0,
            penalty: 0.0,
            score: 0.0,
        });
    }
    let m = matches as f64;
    let precision = m / hyp.len() as f64;
    let recall = m / reference.len() as f64;
    let fmean = (1.0 + RECALL_WEIGHT) * precision * recall / (recall + RECALL_WEIGHT * precision);
    let penalty = PENALTY_GAMMA * (chunks as f64 / m).powf(PENALTY_BETA);
    Ok(MeteorParts {
        matches,
        chunks,
        precision,
        recall,
        fmean,
        penalty,
        score: fmean * (1.0 - penalty),
    })
}

/// Best score over all references.
pub fn meteor(c: &CaptionSet) -> Result<f64> {
    let mut best = 0.0f64;
    for r in &c.references {
        best = best.max(meteor_parts(&c.hypothesis, r)?.score);
    }
    Ok(best)
}

/// Finds, among alignments with the maximum number of exact unigram matches,
/// one with the fewest chunks. A chunk is a run of matches that is contiguous
/// and in the same order on both sides.
struct ChunkSearch {
    hyp: Vec<usize>,
    /// ref positions per word id
    ref_positions: Vec<Vec<usize>>,
    ref_masks: Vec<u64>,
    /// unmatched hyp tokens allowed per word id
    skip_allowance: Vec<usize>,
    /// hyp occurrences of each word before position i, per position
    hyp_seen_before: Vec<usize>,
    matches: usize,
    memo: HashMap<(u8, u64, u8), u32>,
}

const NO_PREV: u8 = u8::MAX;
const DEAD: u32 = u32::MAX;

impl ChunkSearch {
    fn new(hyp: &[String], reference: &[String]) -> Self {
        fn ids<'a>(seq: &'a [String], vocab: &mut HashMap<&'a str, usize>) -> Vec<usize> {
            seq.iter()
                .map(|w| {
                    let n = vocab.len();
                    *vocab.entry(w.as_str()).or_insert(n)
                })
                .collect()
        }
        let mut vocab = HashMap::new();
        let hyp_ids = ids(hyp, &mut vocab);
        let ref_ids = ids(reference, &mut vocab);
        let v = vocab.len();

        let mut ref_positions = vec![Vec::new(); v];
        let mut ref_masks = vec![0u64; v];
        for (j, &w) in ref_ids.iter().enumerate() {
            ref_positions[w].push(j);
            ref_masks[w] |= 1 << j;
        }
        let mut hyp_counts = vec![0usize; v];
        let mut hyp_seen_before = Vec::with_capacity(hyp_ids.len());
        for &w in &hyp_ids {
            hyp_seen_before.push(hyp_counts[w]);
            hyp_counts[w] += 1;
        }
        let mut matches = 0;
        let skip_allowance = (0..v)
            .map(|w| {
                let m = hyp_counts[w].min(ref_positions[w].len());
                matches += m;
                hyp_counts[w] - m
            })
            .collect();
        Self {
            hyp: hyp_ids,
            ref_positions,
            ref_masks,
            skip_allowance,
            hyp_seen_before,
            matches,
            memo: HashMap::new(),
        }
    }

    fn run(mut self) -> Result<(usize, usize)> {
        if self.matches == 0 {
            return Ok((0, 0));
        }
        let chunks = self.best(0, 0, NO_PREV)?;
        debug_assert_ne!(chunks, DEAD);
        Ok((self.matches, chunks as usize))
    }

    /// Minimum chunks for hyp[i..] given used ref positions and the ref
    /// position matched by hyp[i - 1] (if any).
    fn best(&mut self, i: usize, used: u64, prev: u8) -> Result<u32> {
        if i == self.hyp.len() {
            return Ok(0);
        }
        let key = (i as u8, used, prev);
        if let Some(&v) = self.memo.get(&key) {
            return Ok(v);
        }
        if self.memo.len() >= SEARCH_BUDGET {
            return Err(Error::Degenerate(
                "METEOR chunk search exceeded its budget (highly repetitive captions)".into(),
            ));
        }

        let w = self.hyp[i];
        let used_of_word = (used & self.ref_masks[w]).count_ones() as usize;
        let skipped_so_far = self.hyp_seen_before[i] - used_of_word;
        let mut result = DEAD;

        if skipped_so_far < self.skip_allowance[w] {
            result = result.min(self.best(i + 1, used, NO_PREV)?);
        }
        for k in 0..self.ref_positions[w].len() {
            let j = self.ref_positions[w][k];
            if used & (1 << j) != 0 {
                continue;
            }
            let rest = self.best(i + 1, used | (1 << j), j as u8)?;
            if rest == DEAD {
                continue;
            }
            let continues = prev != NO_PREV && prev as usize + 1 == j;
            result = result.min(rest + u32::from(!continues));
        }
        self.memo.insert(key, result);
        Ok(result)
    }
}

/// `a·b / (‖a‖‖b‖)`, clamped to [−1, 1].
pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Shape(format!("vector lengths differ: {} vs {}", a.len(), b.len())));
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return Err(Error::Degenerate("cosine similarity of a zero vector".into()));
    }
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

/// Row-by-row cosine between two aligned embedding matrices.
pub fn paired_cosine(pred: &DMatrix<f64>, truth: &DMatrix<f64>) -> Result<Vec<f64>> {
    if pred.shape() != truth.shape() {
        return Err(Error::Shape(format!(
            "embedding matrices differ: {:?} vs {:?}",
            pred.shape(),
            truth.shape()
        )));
    }
    (0..pred.nrows())
        .map(|i| {
            let a: Vec<f64> = pred.row(i).iter().copied().collect();
            let b: Vec<f64> = truth.row(i).iter().copied().collect();
            cosine_similarity(&a, &b)
        })
        .collect()
}

pub fn corpus_mean(scores: &[f64]) -> Result<f64> {
    if scores.is_empty() {
        return Err(Error::InvalidArgument("mean of an empty score list".into()));
    }
    Ok(scores.iter().sum::<f64>() / scores.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaptionRecord {
    pub stimulus_id: String,
    pub text: String,
}

pub fn read_captions(path: impl AsRef<Path>) -> Result<Vec<CaptionRecord>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::json(path.display().to_string(), e))
}

pub fn write_captions(records: &[CaptionRecord], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = serde_json::to_string_pretty(records).map_err(|e| Error::json("captions", e))?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Pairs each hypothesis with every reference sharing its stimulus id, across
/// all reference files. Hypotheses without references are an error.
pub fn align_captions(
    hypotheses: &[CaptionRecord],
    reference_files: &[Vec<CaptionRecord>],
) -> Result<Vec<(String, CaptionSet)>> {
    let mut refs: BTreeMap<&str, Vec<TokenSeq>> = BTreeMap::new();
    for file in reference_files {
        for r in file {
            refs.entry(r.stimulus_id.as_str())
                .or_default()
                .push(TokenSeq::tokenize(&r.text));
        }
    }
    hypotheses
        .iter()
        .map(|h| {
            let r = refs.get(h.stimulus_id.as_str()).cloned().ok_or_else(|| {
                Error::Validation(format!("no reference caption for stimulus {:?}", h.stimulus_id))
            })?;
            Ok((h.stimulus_id.clone(), CaptionSet::new(TokenSeq::tokenize(&h.text), r)?))
        })
        .collect()
}
