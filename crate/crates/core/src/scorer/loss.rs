//! Training objectives.
//!
//! The contrastive objective treats every (text, image) combination as a
//! pair: the matching pair should score +1, every other pair −1. A query's
//! loss averages its pair losses over all candidates, and the dataset loss
//! averages query losses. Averaging from the text side or the image side sums
//! the same pair losses, so the two agree up to rounding.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::ScorerModel;
use crate::corpus::PairedCorpus;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    /// Regress the cosine similarity of the two embeddings.
    Mse,
    /// Pull matching pairs to +1 and all other pairs to −1.
    Contrastive,
}

impl LossKind {
    pub fn name(self) -> &'static str {
        match self {
            LossKind::Mse => "mse",
            LossKind::Contrastive => "contrastive",
        }
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mse" => Ok(LossKind::Mse),
            "contrastive" => Ok(LossKind::Contrastive),
            other => Err(Error::Config(format!(
                "unknown loss {other:?} (expected mse or contrastive)"
            ))),
        }
    }
}

/// `½(1 − d)²` for a matching pair, `½(d + 1)²` otherwise.
pub fn contrastive_pair_loss(d: f64, positive: bool) -> f64 {
    if positive {
        0.5 * (1.0 - d) * (1.0 - d)
    } else {
        0.5 * (d + 1.0) * (d + 1.0)
    }
}

/// Mean pair loss of one query given its scores against every candidate.
pub fn mean_pair_loss(scores: &[f64], positive: usize) -> Result<f64> {
    if scores.is_empty() {
        return Err(Error::Empty("candidate list"));
    }
    if positive >= scores.len() {
        return Err(Error::Config(format!(
            "positive index {positive} out of range for {} candidates",
            scores.len()
        )));
    }
    let total: f64 = scores
        .iter()
        .enumerate()
        .map(|(j, &d)| contrastive_pair_loss(d, j == positive))
        .sum();
    Ok(total / scores.len() as f64)
}

/// Per-query contrastive loss of `query` against `candidates`, where
/// `candidates[positive]` is its match.
pub fn per_query_loss(model: &ScorerModel, query: &[f32], candidates: &[&[f32]], positive: usize) -> Result<f64> {
    let scores = candidates
        .iter()
        .map(|c| model.forward(query, c))
        .collect::<Result<Vec<f64>>>()?;
    mean_pair_loss(&scores, positive)
}

/// Dataset loss averaged from each side.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DatasetLoss {
    /// Mean over texts of each text's loss against all images.
    pub text_side: f64,
    /// Mean over images of each image's loss against all texts.
    pub image_side: f64,
}

/// Dataset loss from an `n × n` row-major score matrix whose diagonal holds
/// the matching pairs.
pub fn objective_from_scores(scores: &[f64], n: usize) -> Result<DatasetLoss> {
    if n == 0 {
        return Err(Error::Empty("score matrix"));
    }
    if scores.len() != n * n {
        return Err(Error::Shape(format!("{} scores for a {n} × {n} matrix", scores.len())));
    }
    Ok(sides(n, n, |i, j| contrastive_pair_loss(scores[i * n + j], i == j)))
}

fn sides(rows: usize, cols: usize, loss: impl Fn(usize, usize) -> f64) -> DatasetLoss {
    let text_side = (0..rows)
        .map(|i| (0..cols).map(|j| loss(i, j)).sum::<f64>() / cols as f64)
        .sum::<f64>()
        / rows as f64;
    let image_side = (0..cols)
        .map(|j| (0..rows).map(|i| loss(i, j)).sum::<f64>() / rows as f64)
        .sum::<f64>()
        / cols as f64;
    DatasetLoss { text_side, image_side }
}

/// Contrastive dataset loss of a one-to-one corpus, from both sides.
pub fn dataset_loss_sides(model: &ScorerModel, corpus: &PairedCorpus) -> Result<DatasetLoss> {
    if !corpus.is_one_to_one() {
        return Err(Error::Config("the dataset loss needs a one-to-one corpus".into()));
    }
    if corpus.text.is_empty() {
        return Err(Error::Empty("corpus"));
    }
    let matrix = model.score_matrix(&corpus.text, &corpus.image)?;
    let mut partner = vec![0usize; corpus.text.count()];
    for (t, i) in corpus.pairs() {
        partner[t] = i;
    }
    let n = corpus.text.count();
    Ok(sides(n, n, |i, j| {
        contrastive_pair_loss(matrix.get(i, j), partner[i] == j)
    }))
}

/// Contrastive dataset loss of a one-to-one corpus (text-side average).
pub fn dataset_loss(model: &ScorerModel, corpus: &PairedCorpus) -> Result<f64> {
    dataset_loss_sides(model, corpus).map(|l| l.text_side)
}

/// Mean squared error of the model's scores against explicit targets.
pub fn mse_loss(model: &ScorerModel, samples: &[(&[f32], &[f32], f64)]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::Empty("sample list"));
    }
    let mut total = 0.0;
    for (x, y, target) in samples {
        let e = model.forward(x, y)? - target;
        total += e * e;
    }
    Ok(total / samples.len() as f64)
}
