use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Similarity {
    #[default]
    Pearson,
    Cosine,
}

impl Similarity {
    pub fn name(self) -> &'static str {
        match self {
            Similarity::Pearson => "pearson",
            Similarity::Cosine => "cosine",
        }
    }
}

/// Embeddings with one row per item, ids aligned with rows.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    ids: Vec<String>,
    data: DMatrix<f64>,
}

impl EmbeddingSet {
    pub fn new(ids: Vec<String>, data: DMatrix<f64>) -> Result<Self> {
        if ids.len() != data.nrows() {
            return Err(Error::Shape(format!(
                "{} ids for {} embedding rows",
                ids.len(),
                data.nrows()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data("non-finite embedding value".into()));
        }
        Ok(Self { ids, data })
    }

    /// Ids are the row indices as strings.
    pub fn unlabeled(data: DMatrix<f64>) -> Result<Self> {
        Self::new((0..data.nrows()).map(|i| i.to_string()).collect(), data)
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NwayOptions {
    pub ways: usize,
    pub similarity: Similarity,
}

impl Default for NwayOptions {
    fn default() -> Self {
        Self {
            ways: 2,
            similarity: Similarity::Pearson,
        }
    }
}

fn normalized_rows(m: &DMatrix<f64>, similarity: Similarity, what: &str) -> Result<DMatrix<f64>> {
    let mut out = m.clone();
    for (i, mut row) in out.row_iter_mut().enumerate() {
        if similarity == Similarity::Pearson {
            let mean = row.mean();
            row.add_scalar_mut(-mean);
        }
        let norm = row.norm();
        if norm == 0.0 {
            return Err(Error::Degenerate(format!(
                "{what} row {i} is {} and has no {} similarity",
                if similarity == Similarity::Pearson { "constant" } else { "zero" },
                similarity.name()
            )));
        }
        row.scale_mut(1.0 / norm);
    }
    Ok(out)
}

/// `S[i, j] = sim(pred_i, truth_j)`.
pub fn correlation_matrix(pred: &DMatrix<f64>, truth: &DMatrix<f64>, similarity: Similarity) -> Result<DMatrix<f64>> {
    if pred.shape() != truth.shape() {
        return Err(Error::Shape(format!(
            "prediction {:?} and truth {:?} shapes differ",
            pred.shape(),
            truth.shape()
        )));
    }
    let p = normalized_rows(pred, similarity, "prediction")?;
    let t = normalized_rows(truth, similarity, "truth")?;
    Ok(p * t.transpose())
}

fn binomial(n: usize, k: usize) -> Option<u128> {
    if k > n {
        return Some(0);
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc.checked_mul((n - i) as u128)? / (i as u128 + 1);
    }
    Some(acc)
}

/// n-way identification: a trial pairs item `i` with `n − 1` distinct
/// distractors and is correct when `sim(pred_i, truth_i)` strictly beats
/// every `sim(pred_i, truth_j)`. All distractor combinations are scored.
///
/// Only the number `c_i` of distractors that item `i` beats matters, so the
/// exhaustive count is `Σ C(c_i, n−1)` over `N · C(N−1, n−1)` trials.
pub fn nway_accuracy(pred: &EmbeddingSet, truth: &EmbeddingSet, opts: &NwayOptions) -> Result<f64> {
    if pred.ids() != truth.ids() {
        return Err(Error::Validation("prediction and truth item ids are not aligned".into()));
    }
    let n_items = pred.len();
    let k = opts.ways;
    if k < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 ways, got {k}")));
    }
    if n_items < k {
        return Err(Error::InvalidArgument(format!("{k}-way identification over {n_items} items")));
    }
    let s = correlation_matrix(pred.data(), truth.data(), opts.similarity)?;
    let beaten: Vec<usize> = (0..n_items)
        .map(|i| {
            let own = s[(i, i)];
            (0..n_items).filter(|&j| j != i && own > s[(i, j)]).count()
        })
        .collect();

    let exact = || -> Option<f64> {
        let per_item = binomial(n_items - 1, k - 1)?;
        let total = per_item.checked_mul(n_items as u128)?;
        let mut correct: u128 = 0;
        for &c in &beaten {
            correct = correct.checked_add(binomial(c, k - 1)?)?;
        }
        Some(correct as f64 / total as f64)
    };
    if let Some(acc) = exact() {
        return Ok(acc);
    }
    // counts overflow u128: average per-item ratios C(c, k−1) / C(N−1, k−1)
    let ratio = |c: usize| (0..k - 1).map(|t| (c as f64 - t as f64).max(0.0) / (n_items - 1 - t) as f64).product::<f64>();
    Ok(beaten.iter().map(|&c| ratio(c)).sum::<f64>() / n_items as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(rows: usize, cols: usize, v: &[f64]) -> EmbeddingSet {
        EmbeddingSet::unlabeled(DMatrix::from_row_slice(rows, cols, v)).unwrap()
    }

    #[test]
    fn perfect_prediction() {
        let t = set(3, 3, &[1.0, 2.0, 0.0, 0.0, 1.0, 3.0, 2.0, 0.0, 1.0]);
        assert_eq!(nway_accuracy(&t, &t, &NwayOptions::default()).unwrap(), 1.0);
        let opts = NwayOptions { ways: 3, similarity: Similarity::Cosine };
        assert_eq!(nway_accuracy(&t, &t, &opts).unwrap(), 1.0);
    }

    #[test]
    fn swapped_pair_is_zero() {
        let t = set(2, 3, &[1.0, 2.0, 0.0, 0.0, 1.0, 3.0]);
        let p = set(2, 3, &[0.0, 1.0, 3.0, 1.0, 2.0, 0.0]);
        assert_eq!(nway_accuracy(&p, &t, &NwayOptions::default()).unwrap(), 0.0);
    }

    #[test]
    fn ties_are_incorrect() {
        // both truth rows are perfectly correlated with each other
        let t = set(2, 3, &[1.0, 2.0, 3.0, 2.0, 4.0, 6.0]);
        assert_eq!(nway_accuracy(&t, &t, &NwayOptions::default()).unwrap(), 0.0);
    }

    #[test]
    fn errors() {
        let t = set(2, 2, &[1.0, 2.0, 3.0, 1.0]);
        let c = set(2, 2, &[1.0, 1.0, 3.0, 1.0]);
        assert!(matches!(nway_accuracy(&c, &t, &NwayOptions::default()), Err(Error::Degenerate(_))));
        let opts = NwayOptions { ways: 3, ..Default::default() };
        assert!(nway_accuracy(&t, &t, &opts).is_err());
        let relabeled = EmbeddingSet::new(vec!["b".into(), "a".into()], t.data().clone()).unwrap();
        assert!(matches!(nway_accuracy(&relabeled, &t, &NwayOptions::default()), Err(Error::Validation(_))));
    }

    #[test]
    fn binomials() {
        assert_eq!(binomial(5, 2), Some(10));
        assert_eq!(binomial(3, 5), Some(0));
        assert_eq!(binomial(981, 1), Some(981));
    }
}
