//! Seeded random search over MLP architectures.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::train::{train, TrainConfig, TrainHistory};
use super::{ScorerModel, MAX_HIDDEN_LAYERS};
use crate::corpus::PairedCorpus;
use crate::error::{Error, Result};

/// Depth range and per-layer width choices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub min_depth: usize,
    pub max_depth: usize,
    pub widths: Vec<usize>,
}

impl Default for SearchSpace {
    fn default() -> Self {
        SearchSpace {
            min_depth: 1,
            max_depth: MAX_HIDDEN_LAYERS,
            widths: (1..=11).map(|k| 100 * k).collect(),
        }
    }
}

impl SearchSpace {
    fn validate(&self) -> Result<()> {
        if self.min_depth == 0 || self.min_depth > self.max_depth || self.max_depth > MAX_HIDDEN_LAYERS {
            return Err(Error::Config(format!(
                "depth range {}..={} must lie within 1..={MAX_HIDDEN_LAYERS}",
                self.min_depth, self.max_depth
            )));
        }
        if self.widths.is_empty() || self.widths.contains(&0) {
            return Err(Error::Config("width choices must be non-empty and positive".into()));
        }
        Ok(())
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> Vec<usize> {
        let depth = rng.gen_range(self.min_depth..=self.max_depth);
        (0..depth)
            .map(|_| *self.widths.choose(rng).expect("non-empty"))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArchSearch {
    /// Every trial uses this architecture (seeds still differ).
    Fixed(Vec<usize>),
    Random(SearchSpace),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub hidden_sizes: Vec<usize>,
    pub seed: u64,
    pub best_val_loss: f64,
    pub best_epoch: usize,
    pub stopped_epoch: usize,
}

#[derive(Debug, Clone)]
pub struct SearchOutcome {
    pub best_trial: usize,
    pub trials: Vec<Trial>,
    pub model: ScorerModel,
    pub history: TrainHistory,
}

impl SearchOutcome {
    pub fn best(&self) -> &Trial {
        &self.trials[self.best_trial]
    }
}

/// Architectures and seeds of the `budget` trials: trial `t` trains with seed
/// `config.seed + t`, so a budget of 1 reproduces a plain [`train`] call.
pub fn plan_trials(search: &ArchSearch, budget: usize, seed: u64) -> Result<Vec<(Vec<usize>, u64)>> {
    if budget == 0 {
        return Err(Error::Config("search budget must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..budget)
        .map(|t| {
            let arch = match search {
                ArchSearch::Fixed(arch) => arch.clone(),
                ArchSearch::Random(space) => {
                    space.validate()?;
                    space.sample(&mut rng)
                }
            };
            Ok((arch, seed.wrapping_add(t as u64)))
        })
        .collect()
}

/// Trains `budget` candidates (concurrently) and keeps the one with the
/// lowest validation loss; ties go to the earlier trial.
pub fn search_architectures(
    search: &ArchSearch,
    budget: usize,
    train_split: &PairedCorpus,
    val_split: &PairedCorpus,
    config: &TrainConfig,
) -> Result<SearchOutcome> {
    let plan = plan_trials(search, budget, config.seed)?;
    let runs = plan
        .par_iter()
        .map(|(arch, seed)| {
            let trial_config = TrainConfig {
                seed: *seed,
                ..config.clone()
            };
            train(train_split, val_split, &trial_config, arch)
        })
        .collect::<Result<Vec<_>>>()?;
    let trials: Vec<Trial> = plan
        .iter()
        .zip(&runs)
        .map(|((arch, seed), (_, h))| Trial {
            hidden_sizes: arch.clone(),
            seed: *seed,
            best_val_loss: h.best_val_loss,
            best_epoch: h.best_epoch,
            stopped_epoch: h.stopped_epoch,
        })
        .collect();
    let best_trial = trials
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.best_val_loss.total_cmp(&b.1.best_val_loss).then(a.0.cmp(&b.0)))
        .map(|(i, _)| i)
        .expect("budget ≥ 1");
    let (model, history) = runs.into_iter().nth(best_trial).expect("in range");
    Ok(SearchOutcome {
        best_trial,
        trials,
        model,
        history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{EmbeddingSet, Modality};

    fn corpus(n: usize, seed: u64) -> PairedCorpus {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows: Vec<Vec<f32>> = (0..n)
            .map(|_| (0..3).map(|_| rng.gen_range(-1.0f32..1.0)).collect())
            .collect();
        let t = EmbeddingSet::from_rows(Modality::Text, (0..n).map(|i| format!("t{i}")).collect(), &rows).unwrap();
        let i = EmbeddingSet::from_rows(Modality::Image, (0..n).map(|i| format!("i{i}")).collect(), &rows).unwrap();
        PairedCorpus::aligned(t, i).unwrap()
    }

    fn quick() -> TrainConfig {
        TrainConfig {
            base_lr: 1e-2,
            batch_size: 8,
            max_epochs: 3,
            ..Default::default()
        }
    }

    #[test]
    fn plan_is_deterministic_and_in_space() {
        let space = SearchSpace::default();
        let a = plan_trials(&ArchSearch::Random(space.clone()), 3, 1).unwrap();
        assert_eq!(a, plan_trials(&ArchSearch::Random(space.clone()), 3, 1).unwrap());
        for (arch, _) in &a {
            assert!((1..=5).contains(&arch.len()));
            assert!(arch.iter().all(|w| w % 100 == 0 && (100..=1100).contains(w)));
        }
        assert!(plan_trials(&ArchSearch::Fixed(vec![4]), 0, 1).is_err());
        let bad = SearchSpace {
            min_depth: 0,
            ..Default::default()
        };
        assert!(plan_trials(&ArchSearch::Random(bad), 1, 0).is_err());
    }

    #[test]
    fn fixed_budget_one_is_plain_training() {
        let data = corpus(16, 3);
        let config = quick();
        let out = search_architectures(&ArchSearch::Fixed(vec![7, 3, 7]), 1, &data, &data, &config).unwrap();
        let (model, history) = train(&data, &data, &config, &[7, 3, 7]).unwrap();
        assert_eq!(out.model, model);
        assert_eq!(out.history, history);
        assert_eq!(out.best().hidden_sizes, vec![7, 3, 7]);
    }

    #[test]
    fn best_is_min_over_seeded_runs() {
        let data = corpus(16, 4);
        let config = quick();
        let out = search_architectures(&ArchSearch::Fixed(vec![5]), 5, &data, &data, &config).unwrap();
        let losses: Vec<f64> = (0..5)
            .map(|t| {
                let c = TrainConfig {
                    seed: t,
                    ..config.clone()
                };
                train(&data, &data, &c, &[5]).unwrap().1.best_val_loss
            })
            .collect();
        let min = losses.iter().copied().fold(f64::INFINITY, f64::min);
        assert_eq!(out.best().best_val_loss, min);
    }
}
