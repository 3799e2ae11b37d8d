//! Modality-gap diagnostics: centroid distance and Wasserstein-2 distance
//! between the text and image embedding clouds.
//!
//! Wasserstein-2 between two equal-size, equal-weight point clouds is solved
//! exactly as a min-cost assignment over squared Euclidean distances. Large
//! sets are handled by shuffling the paired indices once, cutting them into
//! equal batches (the short remainder is dropped) and averaging the per-batch
//! distances.

pub mod assignment;

use std::cmp::Ordering;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::EmbeddingSet;
use crate::error::{Error, Result};

pub const DEFAULT_W2_BATCH_SIZE: usize = 256;

fn check_dims(a: &EmbeddingSet, b: &EmbeddingSet) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::DimMismatch {
            left: a.dim(),
            right: b.dim(),
        });
    }
    Ok(())
}

fn centroid(set: &EmbeddingSet) -> Vec<f64> {
    let mut sum = vec![0.0f64; set.dim()];
    for row in set.rows() {
        for (s, &v) in sum.iter_mut().zip(row) {
            *s += f64::from(v);
        }
    }
    let n = set.count() as f64;
    sum.iter().map(|s| s / n).collect()
}

/// Euclidean distance between the two sets' means.
pub fn centroid_gap(a: &EmbeddingSet, b: &EmbeddingSet) -> Result<f64> {
    check_dims(a, b)?;
    if a.is_empty() || b.is_empty() {
        return Err(Error::Empty("embedding set"));
    }
    let (ca, cb) = (centroid(a), centroid(b));
    Ok(ca.iter().zip(&cb).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt())
}

fn squared_distance(p: &[f32], q: &[f32]) -> f64 {
    p.iter()
        .zip(q)
        .map(|(&x, &y)| {
            let d = f64::from(x) - f64::from(y);
            d * d
        })
        .sum()
}

fn lexicographic(a: &[&[f32]], b: &[&[f32]]) -> Ordering {
    a.iter()
        .flat_map(|r| r.iter())
        .zip(b.iter().flat_map(|r| r.iter()))
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(Ordering::Equal)
}

/// Exact Wasserstein-2 distance between two equal-size point clouds with
/// uniform weights: `sqrt(min_σ (1/m) Σ ‖a_i − b_σ(i)‖²)`.
///
/// The result is bit-identical under swapping `a` and `b`.
pub fn wasserstein2_exact(a: &[&[f32]], b: &[&[f32]]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::CountMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    if a.is_empty() {
        return Err(Error::Empty("point set"));
    }
    let dim = a[0].len();
    if let Some(bad) = a.iter().chain(b).find(|r| r.len() != dim) {
        return Err(Error::DimMismatch {
            left: dim,
            right: bad.len(),
        });
    }
    // Solve in a canonical role order so that (a, b) and (b, a) run the same computation.
    let (rows, cols) = if lexicographic(a, b) == Ordering::Greater {
        (b, a)
    } else {
        (a, b)
    };
    let m = rows.len();
    let mut costs = Vec::with_capacity(m * m);
    for p in rows {
        for q in cols {
            costs.push(squared_distance(p, q));
        }
    }
    let assign = assignment::solve(&costs, m);
    let total = assignment::assignment_cost(&costs, m, &assign);
    Ok((total / m as f64).max(0.0).sqrt())
}

/// Mean of per-batch exact Wasserstein-2 distances over paired index batches.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchedW2 {
    pub mean: f64,
    pub batches: usize,
    pub batch_size: usize,
    /// Rows left out because they did not fill a final batch.
    pub dropped: usize,
    pub seed: u64,
}

pub fn wasserstein2_batched(a: &EmbeddingSet, b: &EmbeddingSet, batch_size: usize, seed: u64) -> Result<BatchedW2> {
    check_dims(a, b)?;
    if a.count() != b.count() {
        return Err(Error::CountMismatch {
            left: a.count(),
            right: b.count(),
        });
    }
    let n = a.count();
    if batch_size < 1 || batch_size > n {
        return Err(Error::BatchSize { batch_size, count: n });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let batches = n / batch_size;
    let values = order[..batches * batch_size]
        .par_chunks(batch_size)
        .map(|idx| {
            let pa: Vec<&[f32]> = idx.iter().map(|&i| a.row(i)).collect();
            let pb: Vec<&[f32]> = idx.iter().map(|&i| b.row(i)).collect();
            wasserstein2_exact(&pa, &pb)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(BatchedW2 {
        mean: values.iter().sum::<f64>() / batches as f64,
        batches,
        batch_size,
        dropped: n - batches * batch_size,
        seed,
    })
}

/// Centroid gap plus batched Wasserstein-2, with the parameters that produced them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapReport {
    pub centroid_gap: f64,
    pub w2_mean: f64,
    pub w2_batches: usize,
    pub batch_size: usize,
    pub dropped: usize,
    pub seed: u64,
}

pub fn gap_report(a: &EmbeddingSet, b: &EmbeddingSet, batch_size: usize, seed: u64) -> Result<GapReport> {
    let centroid_gap = centroid_gap(a, b)?;
    let w2 = wasserstein2_batched(a, b, batch_size, seed)?;
    Ok(GapReport {
        centroid_gap,
        w2_mean: w2.mean,
        w2_batches: w2.batches,
        batch_size: w2.batch_size,
        dropped: w2.dropped,
        seed,
    })
}
