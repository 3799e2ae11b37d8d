//! Finite-difference check of the analytic gradients.

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::grid::{grid_pass, Grid, Targets};
use super::{LossKind, ScorerModel};
use crate::error::{Error, Result};
use crate::metrics::Metric;

/// Central-difference step.
pub const GRADCHECK_STEP: f64 = 1e-5;
/// Parameters compared per check (all of them for smaller models).
const SUBSET: usize = 128;

/// Largest relative error between analytic and central-difference gradients
/// of the in-batch loss over `texts[i] ↔ images[i]`, on a seeded subset of
/// parameters.
pub fn gradient_check(
    model: &ScorerModel,
    texts: &[&[f32]],
    images: &[&[f32]],
    loss: LossKind,
    seed: u64,
) -> Result<f64> {
    gradient_check_with(model, texts, images, loss, seed, None)
}

/// Like [`gradient_check`]; `corrupt` doubles the analytic gradient of one
/// parameter (always included in the subset) to test the checker itself.
pub fn gradient_check_with(
    model: &ScorerModel,
    texts: &[&[f32]],
    images: &[&[f32]],
    loss: LossKind,
    seed: u64,
    corrupt: Option<usize>,
) -> Result<f64> {
    if texts.len() != images.len() {
        return Err(Error::CountMismatch {
            left: texts.len(),
            right: images.len(),
        });
    }
    if texts.is_empty() {
        return Err(Error::Empty("sample batch"));
    }
    for (x, y) in texts.iter().zip(images) {
        if x.len() != model.text_dim() || y.len() != model.image_dim() {
            return Err(Error::DimMismatch {
                left: x.len() + y.len(),
                right: model.input_dim(),
            });
        }
    }
    let count = model.param_count();
    if let Some(p) = corrupt {
        if p >= count {
            return Err(Error::Config(format!(
                "parameter {p} out of range for {count} parameters"
            )));
        }
    }

    let targets = match loss {
        LossKind::Contrastive => Targets::Contrastive {
            text_keys: (0..texts.len()).collect(),
            image_keys: (0..images.len()).collect(),
        },
        LossKind::Mse => {
            let mut values = Vec::with_capacity(texts.len() * images.len());
            for x in texts {
                for y in images {
                    values.push(Metric::Cosine.score(x, y)?);
                }
            }
            Targets::Mse { values }
        }
    };
    let grid = Grid {
        texts: texts.to_vec(),
        images: images.to_vec(),
        targets,
    };
    let mut analytic = grid_pass(model, &grid, true).1.expect("gradient requested").flat();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut subset = index::sample(&mut rng, count, count.min(SUBSET)).into_vec();
    if let Some(p) = corrupt {
        analytic[p] *= 2.0;
        if !subset.contains(&p) {
            subset.push(p);
        }
    }

    let mut probe = model.clone();
    let mut worst = 0.0f64;
    for p in subset {
        let original = probe.param(p);
        *probe.param_mut(p) = original + GRADCHECK_STEP;
        let up = grid_pass(&probe, &grid, false).0;
        *probe.param_mut(p) = original - GRADCHECK_STEP;
        let down = grid_pass(&probe, &grid, false).0;
        *probe.param_mut(p) = original;
        let numeric = (up - down) / (2.0 * GRADCHECK_STEP);
        let err = (analytic[p] - numeric).abs() / numeric.abs().max(1e-8);
        worst = worst.max(err);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn batch(seed: u64, n: usize, dx: usize, dy: usize) -> (Vec<Vec<f32>>, Vec<Vec<f32>>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut rows = |d: usize| -> Vec<Vec<f32>> {
            (0..n)
                .map(|_| (0..d).map(|_| rng.gen_range(-1.0f32..1.0)).collect())
                .collect()
        };
        (rows(dx), rows(dy))
    }

    /// Random weights and random biases. With zero biases a dead layer puts the
    /// next pre-activation exactly on the ReLU kink, where central differences
    /// average the two one-sided slopes.
    fn random_model(dx: usize, dy: usize, hidden: &[usize], seed: u64) -> ScorerModel {
        let mut m = ScorerModel::new(dx, dy, hidden, seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(!seed);
        let mut offset = 0;
        for l in m.layers().to_vec() {
            offset += l.weights.len();
            for b in 0..l.biases.len() {
                *m.param_mut(offset + b) = rng.gen_range(-0.1..0.1);
            }
            offset += l.biases.len();
        }
        m
    }

    fn refs(v: &[Vec<f32>]) -> Vec<&[f32]> {
        v.iter().map(Vec::as_slice).collect()
    }

    #[test]
    fn zero_model_mse() {
        // cosine targets need equal dimensions on both sides
        let m = ScorerModel::zeros(4, 4, &[5, 3]).unwrap();
        let (t, i) = batch(1, 4, 4, 4);
        assert!(gradient_check(&m, &refs(&t), &refs(&i), LossKind::Mse, 0).unwrap() < 1e-4);
    }

    #[test]
    fn random_models_both_losses() {
        for seed in 0..4 {
            let m = random_model(4, 4, &[6, 5, 4], seed);
            let (t, i) = batch(seed + 100, 5, 4, 4);
            for loss in [LossKind::Contrastive, LossKind::Mse] {
                let err = gradient_check(&m, &refs(&t), &refs(&i), loss, seed).unwrap();
                assert!(err < 1e-4, "seed {seed} {loss}: {err}");
            }
        }
    }

    #[test]
    fn corrupted_gradient_is_caught() {
        let m = ScorerModel::new(3, 3, &[4], 7).unwrap();
        let (t, i) = batch(8, 4, 3, 3);
        // the output bias always receives gradient
        let last = m.param_count() - 1;
        let err = gradient_check_with(&m, &refs(&t), &refs(&i), LossKind::Contrastive, 0, Some(last)).unwrap();
        assert!(err > 0.5);
    }
}
