//! Adam training with a per-epoch decaying learning rate and early stopping.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::grid::{grid_pass, Gradients, Grid, Targets};
use super::{LossKind, ScorerModel};
use crate::corpus::PairedCorpus;
use crate::error::{Error, Result};
use crate::metrics::Metric;

/// Largest corpus for which every text is trained against every image.
pub const FULL_DATASET_LIMIT: usize = 2048;

/// Which images a text is contrasted with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NegativeMode {
    /// The other images of the same batch: a B × B grid per batch.
    InBatch,
    /// Every image in the split: a B × N grid per batch.
    FullDataset,
}

impl NegativeMode {
    pub fn name(self) -> &'static str {
        match self {
            NegativeMode::InBatch => "in_batch",
            NegativeMode::FullDataset => "full_dataset",
        }
    }
}

impl std::str::FromStr for NegativeMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "in_batch" | "in-batch" => Ok(NegativeMode::InBatch),
            "full_dataset" | "full-dataset" => Ok(NegativeMode::FullDataset),
            other => Err(Error::Config(format!(
                "unknown negative mode {other:?} (expected in_batch or full_dataset)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub base_lr: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub early_stop_patience: usize,
    /// Relative validation improvement below which an epoch counts as stale.
    pub early_stop_min_improvement: f64,
    pub loss: LossKind,
    pub negative_mode: NegativeMode,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            base_lr: 5e-5,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            batch_size: 64,
            max_epochs: 100,
            early_stop_patience: 5,
            early_stop_min_improvement: 0.01,
            loss: LossKind::Contrastive,
            negative_mode: NegativeMode::InBatch,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Config(what.to_owned()));
        if !(self.base_lr > 0.0 && self.base_lr.is_finite()) {
            return bad("base_lr must be positive");
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) {
            return bad("Adam betas must lie in [0, 1)");
        }
        if !(self.adam_eps > 0.0 && self.adam_eps.is_finite()) {
            return bad("adam_eps must be positive");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if self.max_epochs == 0 {
            return bad("max_epochs must be at least 1");
        }
        if self.early_stop_patience == 0 {
            return bad("early_stop_patience must be at least 1");
        }
        if !(self.early_stop_min_improvement >= 0.0 && self.early_stop_min_improvement.is_finite()) {
            return bad("early_stop_min_improvement must be non-negative");
        }
        Ok(())
    }

    /// Learning rate used throughout epoch `epoch` (counted from 0).
    pub fn lr_at(&self, epoch: usize) -> f64 {
        decayed_lr(self.base_lr, epoch)
    }
}

/// `base_lr / (1 + 2^(epoch / 2))`; the decay restarts from `base_lr` each
/// epoch rather than compounding.
pub fn decayed_lr(base_lr: f64, epoch: usize) -> f64 {
    base_lr / (1.0 + 2f64.powf(0.5 * epoch as f64))
}

/// Stops after `patience` consecutive epochs whose validation loss improved
/// on the previous epoch's by less than `min_improvement` (relative).
#[derive(Debug, Clone)]
pub struct EarlyStopping {
    patience: usize,
    min_improvement: f64,
    previous: Option<f64>,
    stale: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize, min_improvement: f64) -> Self {
        EarlyStopping {
            patience,
            min_improvement,
            previous: None,
            stale: 0,
        }
    }

    /// Records one epoch's validation loss; returns true when training should stop.
    pub fn update(&mut self, val_loss: f64) -> bool {
        if let Some(prev) = self.previous {
            // a zero loss cannot improve further
            let relative = if prev > 0.0 { (prev - val_loss) / prev } else { 0.0 };
            if relative < self.min_improvement {
                self.stale += 1;
            } else {
                self.stale = 0;
            }
        }
        self.previous = Some(val_loss);
        self.stale >= self.patience
    }

    pub fn stale_epochs(&self) -> usize {
        self.stale
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub lr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    /// Training-split objective of the freshly initialised model.
    pub initial_train_loss: f64,
    /// Training-split objective of the returned (best-validation) model.
    pub final_train_loss: f64,
    /// Last epoch that ran.
    pub stopped_epoch: usize,
    /// Epoch whose weights were kept.
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub early_stopped: bool,
}

impl TrainHistory {
    pub const CSV_HEADER: &'static str = "epoch,train_loss,val_loss,lr";

    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for e in &self.epochs {
            let _ = writeln!(out, "{},{},{},{}", e.epoch, e.train_loss, e.val_loss, e.lr);
        }
        out
    }
}

/// Adam moment estimates, shaped like the model.
struct Adam {
    m: Gradients,
    v: Gradients,
    step: i32,
    beta1: f64,
    beta2: f64,
    eps: f64,
}

impl Adam {
    fn new(model: &ScorerModel, config: &TrainConfig) -> Self {
        Adam {
            m: Gradients::zeros_like(model),
            v: Gradients::zeros_like(model),
            step: 0,
            beta1: config.adam_beta1,
            beta2: config.adam_beta2,
            eps: config.adam_eps,
        }
    }

    fn update(&mut self, model: &mut ScorerModel, grads: &Gradients, lr: f64) {
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step);
        let c2 = 1.0 - self.beta2.powi(self.step);
        let (b1, b2, eps) = (self.beta1, self.beta2, self.eps);
        for (k, layer) in model.layers_mut().iter_mut().enumerate() {
            let params = [
                (
                    &mut layer.weights,
                    &grads.weights[k],
                    &mut self.m.weights[k],
                    &mut self.v.weights[k],
                ),
                (
                    &mut layer.biases,
                    &grads.biases[k],
                    &mut self.m.biases[k],
                    &mut self.v.biases[k],
                ),
            ];
            for (p, g, m, v) in params {
                for i in 0..p.len() {
                    m[i] = b1 * m[i] + (1.0 - b1) * g[i];
                    v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
                    let m_hat = m[i] / c1;
                    let v_hat = v[i] / c2;
                    p[i] -= lr * m_hat / (v_hat.sqrt() + eps);
                }
            }
        }
    }
}

/// Grid for the pairs at positions `batch` of `pairs`.
pub(crate) fn build_grid<'a>(
    corpus: &'a PairedCorpus,
    pairs: &[(usize, usize)],
    batch: &[usize],
    config: &TrainConfig,
) -> Result<Grid<'a>> {
    let texts: Vec<&[f32]> = batch.iter().map(|&p| corpus.text.row(pairs[p].0)).collect();
    let text_keys: Vec<usize> = batch.iter().map(|&p| pairs[p].1).collect();
    let image_keys: Vec<usize> = match config.negative_mode {
        NegativeMode::InBatch => text_keys.clone(),
        NegativeMode::FullDataset => (0..corpus.image.count()).collect(),
    };
    let images: Vec<&[f32]> = image_keys.iter().map(|&i| corpus.image.row(i)).collect();
    let targets = match config.loss {
        LossKind::Contrastive => Targets::Contrastive { text_keys, image_keys },
        LossKind::Mse => {
            let mut values = Vec::with_capacity(texts.len() * images.len());
            for x in &texts {
                for y in &images {
                    values.push(Metric::Cosine.score(x, y)?);
                }
            }
            Targets::Mse { values }
        }
    };
    Ok(Grid { texts, images, targets })
}

/// The training objective of `model` on a whole split: the mean grid loss over
/// consecutive batches of pairs (in-batch mode) or over every text against
/// every image (full-dataset mode).
pub fn objective(model: &ScorerModel, corpus: &PairedCorpus, config: &TrainConfig) -> Result<f64> {
    let pairs = corpus.pairs();
    if pairs.is_empty() {
        return Err(Error::Empty("corpus has no pairs"));
    }
    let positions: Vec<usize> = (0..pairs.len()).collect();
    let chunk = match config.negative_mode {
        NegativeMode::InBatch => config.batch_size.max(1),
        NegativeMode::FullDataset => pairs.len(),
    };
    let mut total = 0.0;
    for batch in positions.chunks(chunk) {
        let grid = build_grid(corpus, &pairs, batch, config)?;
        total += grid_pass(model, &grid, false).0 * batch.len() as f64;
    }
    Ok(total / pairs.len() as f64)
}

fn check_split(corpus: &PairedCorpus, name: &'static str, config: &TrainConfig) -> Result<usize> {
    let n = corpus.pairs().len();
    if n == 0 {
        return Err(Error::Empty(name));
    }
    if config.negative_mode == NegativeMode::FullDataset && corpus.image.count().max(n) > FULL_DATASET_LIMIT {
        return Err(Error::Config(format!(
            "full_dataset negatives need at most {FULL_DATASET_LIMIT} items, the {name} has {}",
            corpus.image.count().max(n)
        )));
    }
    Ok(n)
}

/// Trains a fresh model of architecture `hidden` on `train`, selecting
/// weights by loss on `val`.
pub fn train(
    train: &PairedCorpus,
    val: &PairedCorpus,
    config: &TrainConfig,
    hidden: &[usize],
) -> Result<(ScorerModel, TrainHistory)> {
    config.validate()?;
    check_split(train, "training split", config)?;
    check_split(val, "validation split", config)?;
    let (dx, dy) = (train.text.dim(), train.image.dim());
    if val.text.dim() != dx || val.image.dim() != dy {
        return Err(Error::DimMismatch {
            left: val.text.dim() + val.image.dim(),
            right: dx + dy,
        });
    }

    let mut model = ScorerModel::new(dx, dy, hidden, config.seed)?;
    model.loss = Some(config.loss);
    let mut adam = Adam::new(&model, config);
    let mut shuffler = ChaCha8Rng::seed_from_u64(config.seed);
    shuffler.set_stream(1);

    let initial_train_loss = objective(&model, train, config)?;
    let pairs = train.pairs();
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    let mut stopper = EarlyStopping::new(config.early_stop_patience, config.early_stop_min_improvement);
    let mut epochs = Vec::new();
    let mut best: Option<(ScorerModel, usize, f64)> = None;
    let mut early_stopped = false;

    for epoch in 0..config.max_epochs {
        let lr = config.lr_at(epoch);
        order.shuffle(&mut shuffler);
        let mut train_total = 0.0;
        for batch in order.chunks(config.batch_size) {
            let grid = build_grid(train, &pairs, batch, config)?;
            let (loss, grads) = grid_pass(&model, &grid, true);
            adam.update(&mut model, &grads.expect("gradient requested"), lr);
            train_total += loss * batch.len() as f64;
        }
        let val_loss = objective(&model, val, config)?;
        if !val_loss.is_finite() {
            return Err(Error::Config(format!("validation loss diverged at epoch {epoch}")));
        }
        epochs.push(EpochRecord {
            epoch,
            train_loss: train_total / pairs.len() as f64,
            val_loss,
            lr,
        });
        if best.as_ref().is_none_or(|(_, _, b)| val_loss < *b) {
            best = Some((model.clone(), epoch, val_loss));
        }
        if stopper.update(val_loss) {
            early_stopped = true;
            break;
        }
    }

    let (model, best_epoch, best_val_loss) = best.expect("at least one epoch runs");
    let final_train_loss = objective(&model, train, config)?;
    let stopped_epoch = epochs.last().map_or(0, |e| e.epoch);
    Ok((
        model,
        TrainHistory {
            epochs,
            initial_train_loss,
            final_train_loss,
            stopped_epoch,
            best_epoch,
            best_val_loss,
            early_stopped,
        },
    ))
}
