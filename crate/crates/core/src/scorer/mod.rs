//! Learned similarity: an MLP over concatenated (text, image) embeddings.
//!
//! Hidden layers use ReLU; the single output unit uses tanh, so scores lie in
//! (−1, 1) like cosine similarity. The model is trained either to regress
//! cosine similarity (MSE) or with a pairwise contrastive loss that pulls
//! matching pairs toward +1 and all other pairs toward −1.
//!
//! The first layer is split into a text block and an image block, so a whole
//! query × candidate grid costs one projection per row and per column plus the
//! deeper layers per pair. [`ScorerModel::forward`] runs the same arithmetic on
//! a 1 × 1 grid, so single-pair and batched scores agree bit for bit.

mod file;
mod gradcheck;
mod grid;
mod loss;
mod search;
mod train;

use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::EmbeddingSet;
use crate::error::{Error, Result};
use crate::metrics::{Orientation, ScoreMatrix};

pub use file::{load_model, save_model, MODEL_FORMAT};
pub use gradcheck::{gradient_check, gradient_check_with, GRADCHECK_STEP};
pub use grid::Gradients;
pub use loss::{
    contrastive_pair_loss, dataset_loss, dataset_loss_sides, mean_pair_loss, mse_loss, objective_from_scores,
    per_query_loss, DatasetLoss, LossKind,
};
pub use search::{plan_trials, search_architectures, ArchSearch, SearchOutcome, SearchSpace, Trial};
pub use train::{
    decayed_lr, objective, train, EarlyStopping, EpochRecord, NegativeMode, TrainConfig, TrainHistory,
    FULL_DATASET_LIMIT,
};

pub const MAX_HIDDEN_LAYERS: usize = 5;

/// Fully connected layer; `weights` is `outputs × inputs`, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl Dense {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Dense {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            biases: vec![0.0; outputs],
        }
    }

    /// Uniform in ±sqrt(6 / (fan_in + fan_out)), zero biases.
    fn glorot(inputs: usize, outputs: usize, rng: &mut ChaCha8Rng) -> Self {
        let limit = (6.0 / (inputs + outputs) as f64).sqrt();
        let dist = Uniform::new_inclusive(-limit, limit);
        Dense {
            inputs,
            outputs,
            weights: (0..inputs * outputs).map(|_| dist.sample(rng)).collect(),
            biases: vec![0.0; outputs],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScorerModel {
    text_dim: usize,
    image_dim: usize,
    hidden_sizes: Vec<usize>,
    layers: Vec<Dense>,
    /// Seed the weights were initialised from.
    pub seed: u64,
    /// Loss the model was trained with, if any.
    pub loss: Option<LossKind>,
}

fn check_arch(text_dim: usize, image_dim: usize, hidden: &[usize]) -> Result<()> {
    if text_dim == 0 || image_dim == 0 {
        return Err(Error::Architecture("input dimensions must be positive".into()));
    }
    if hidden.is_empty() || hidden.len() > MAX_HIDDEN_LAYERS {
        return Err(Error::Architecture(format!(
            "{} hidden layers, expected 1..={MAX_HIDDEN_LAYERS}",
            hidden.len()
        )));
    }
    if hidden.contains(&0) {
        return Err(Error::Architecture("hidden layer widths must be positive".into()));
    }
    Ok(())
}

fn layer_shapes(input_dim: usize, hidden: &[usize]) -> Vec<(usize, usize)> {
    let mut sizes = vec![input_dim];
    sizes.extend_from_slice(hidden);
    sizes.push(1);
    sizes.windows(2).map(|w| (w[0], w[1])).collect()
}

impl ScorerModel {
    /// Randomly initialised model for the given architecture.
    pub fn new(text_dim: usize, image_dim: usize, hidden: &[usize], seed: u64) -> Result<Self> {
        check_arch(text_dim, image_dim, hidden)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = layer_shapes(text_dim + image_dim, hidden)
            .into_iter()
            .map(|(i, o)| Dense::glorot(i, o, &mut rng))
            .collect();
        Ok(ScorerModel {
            text_dim,
            image_dim,
            hidden_sizes: hidden.to_vec(),
            layers,
            seed,
            loss: None,
        })
    }

    /// All weights and biases zero; scores every pair as exactly 0.
    pub fn zeros(text_dim: usize, image_dim: usize, hidden: &[usize]) -> Result<Self> {
        check_arch(text_dim, image_dim, hidden)?;
        let layers = layer_shapes(text_dim + image_dim, hidden)
            .into_iter()
            .map(|(i, o)| Dense::zeros(i, o))
            .collect();
        Ok(ScorerModel {
            text_dim,
            image_dim,
            hidden_sizes: hidden.to_vec(),
            layers,
            seed: 0,
            loss: None,
        })
    }

    /// Model from explicit layers; shapes must chain from `text_dim + image_dim` to 1.
    pub fn from_layers(text_dim: usize, image_dim: usize, layers: Vec<Dense>) -> Result<Self> {
        let hidden: Vec<usize> = layers
            .iter()
            .take(layers.len().saturating_sub(1))
            .map(|l| l.outputs)
            .collect();
        check_arch(text_dim, image_dim, &hidden)?;
        let expected = layer_shapes(text_dim + image_dim, &hidden);
        for (k, (layer, (i, o))) in layers.iter().zip(&expected).enumerate() {
            if layer.inputs != *i || layer.outputs != *o || layer.weights.len() != i * o || layer.biases.len() != *o {
                return Err(Error::Architecture(format!(
                    "layer {k} is {}×{} with {} weights and {} biases, expected {i}→{o}",
                    layer.inputs,
                    layer.outputs,
                    layer.weights.len(),
                    layer.biases.len()
                )));
            }
        }
        if layers
            .iter()
            .any(|l| l.weights.iter().chain(&l.biases).any(|v| !v.is_finite()))
        {
            return Err(Error::Architecture("non-finite parameter".into()));
        }
        Ok(ScorerModel {
            text_dim,
            image_dim,
            hidden_sizes: hidden,
            layers,
            seed: 0,
            loss: None,
        })
    }

    pub fn text_dim(&self) -> usize {
        self.text_dim
    }

    pub fn image_dim(&self) -> usize {
        self.image_dim
    }

    pub fn input_dim(&self) -> usize {
        self.text_dim + self.image_dim
    }

    pub fn hidden_sizes(&self) -> &[usize] {
        &self.hidden_sizes
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.biases.len()).sum()
    }

    fn locate(&self, mut index: usize) -> (usize, bool, usize) {
        for (k, l) in self.layers.iter().enumerate() {
            if index < l.weights.len() {
                return (k, true, index);
            }
            index -= l.weights.len();
            if index < l.biases.len() {
                return (k, false, index);
            }
            index -= l.biases.len();
        }
        panic!("parameter index out of range");
    }

    /// Parameter by flat index: each layer's weights, then its biases.
    pub fn param(&self, index: usize) -> f64 {
        match self.locate(index) {
            (k, true, i) => self.layers[k].weights[i],
            (k, false, i) => self.layers[k].biases[i],
        }
    }

    pub fn param_mut(&mut self, index: usize) -> &mut f64 {
        match self.locate(index) {
            (k, true, i) => &mut self.layers[k].weights[i],
            (k, false, i) => &mut self.layers[k].biases[i],
        }
    }

    pub(crate) fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    /// First-layer contribution of a text vector (weights only, no bias).
    pub(crate) fn project_text(&self, x: &[f32], out: &mut [f64]) {
        self.project(x, 0, out)
    }

    pub(crate) fn project_image(&self, y: &[f32], out: &mut [f64]) {
        self.project(y, self.text_dim, out)
    }

    fn project(&self, v: &[f32], offset: usize, out: &mut [f64]) {
        let l = &self.layers[0];
        for (k, o) in out.iter_mut().enumerate() {
            let w = &l.weights[k * l.inputs + offset..k * l.inputs + offset + v.len()];
            *o = w.iter().zip(v).map(|(w, &x)| w * f64::from(x)).sum();
        }
    }

    /// Scratch activation buffers, one per hidden layer.
    pub(crate) fn scratch(&self) -> Vec<Vec<f64>> {
        self.hidden_sizes.iter().map(|&h| vec![0.0; h]).collect()
    }

    /// Output for one pair given its projected text and image parts. Leaves
    /// hidden activations in `acts`.
    pub(crate) fn forward_projected(&self, hx: &[f64], hy: &[f64], acts: &mut [Vec<f64>]) -> f64 {
        let first = &self.layers[0];
        for (k, a) in acts[0].iter_mut().enumerate() {
            *a = (hx[k] + hy[k] + first.biases[k]).max(0.0);
        }
        let n = self.layers.len();
        for l in 1..n - 1 {
            let layer = &self.layers[l];
            let (done, rest) = acts.split_at_mut(l);
            let input = &done[l - 1];
            for (o, a) in rest[0].iter_mut().enumerate() {
                let w = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
                let z: f64 = w.iter().zip(input).map(|(w, x)| w * x).sum::<f64>() + layer.biases[o];
                *a = z.max(0.0);
            }
        }
        let last = &self.layers[n - 1];
        let z: f64 = last.weights.iter().zip(&acts[n - 2]).map(|(w, x)| w * x).sum::<f64>() + last.biases[0];
        z.tanh()
    }

    fn check_inputs(&self, x: &[f32], y: &[f32]) -> Result<()> {
        if x.len() + y.len() != self.input_dim() || x.len() != self.text_dim {
            return Err(Error::DimMismatch {
                left: x.len() + y.len(),
                right: self.input_dim(),
            });
        }
        Ok(())
    }

    /// Score of one (text, image) pair.
    pub fn forward(&self, x: &[f32], y: &[f32]) -> Result<f64> {
        self.check_inputs(x, y)?;
        let h = self.hidden_sizes[0];
        let (mut hx, mut hy) = (vec![0.0; h], vec![0.0; h]);
        self.project_text(x, &mut hx);
        self.project_image(y, &mut hy);
        Ok(self.forward_projected(&hx, &hy, &mut self.scratch()))
    }

    /// Scores every text row against every image row; rows are texts.
    pub fn score_matrix(&self, text: &EmbeddingSet, image: &EmbeddingSet) -> Result<ScoreMatrix> {
        if text.dim() != self.text_dim || image.dim() != self.image_dim {
            return Err(Error::DimMismatch {
                left: text.dim() + image.dim(),
                right: self.input_dim(),
            });
        }
        let h = self.hidden_sizes[0];
        let project_all = |set: &EmbeddingSet, text_side: bool| -> Vec<f64> {
            let mut out = vec![0.0; set.count() * h];
            out.par_chunks_mut(h.max(1))
                .zip(set.rows().collect::<Vec<_>>())
                .for_each(|(o, r)| {
                    if text_side {
                        self.project_text(r, o)
                    } else {
                        self.project_image(r, o)
                    }
                });
            out
        };
        let hx = project_all(text, true);
        let hy = project_all(image, false);
        let cols = image.count();
        let mut values = vec![0.0; text.count() * cols];
        if cols > 0 {
            values.par_chunks_mut(cols).enumerate().for_each(|(i, out)| {
                let mut acts = self.scratch();
                let xi = &hx[i * h..(i + 1) * h];
                for (j, slot) in out.iter_mut().enumerate() {
                    *slot = self.forward_projected(xi, &hy[j * h..(j + 1) * h], &mut acts);
                }
            });
        }
        Ok(ScoreMatrix {
            scorer: "mlp".into(),
            orientation: Orientation::Similarity,
            row_ids: text.ids().to_vec(),
            col_ids: image.ids().to_vec(),
            values,
        })
    }
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;
    use crate::corpus::Modality;

    #[test]
    fn zero_model_scores_zero() {
        let m = ScorerModel::zeros(3, 2, &[4, 3]).unwrap();
        assert_eq!(m.forward(&[1.0, -2.0, 5.0], &[0.5, 9.0]).unwrap(), 0.0);
    }

    #[test]
    fn unit_weights_give_tanh_of_sum() {
        // one hidden unit summing the input, output weight 1: tanh(relu(s))
        let hidden = Dense {
            inputs: 4,
            outputs: 1,
            weights: vec![1.0; 4],
            biases: vec![0.0],
        };
        let out = Dense {
            inputs: 1,
            outputs: 1,
            weights: vec![1.0],
            biases: vec![0.0],
        };
        let m = ScorerModel::from_layers(2, 2, vec![hidden, out]).unwrap();
        let d = m.forward(&[0.25, 0.25], &[0.5, 0.0]).unwrap();
        assert!((d - 0.761_594_155_955_764_9).abs() < 1e-15);
        assert_eq!(d, 1f64.tanh());
    }

    #[test]
    fn architecture_validation() {
        assert!(ScorerModel::new(2, 2, &[], 0).is_err());
        assert!(ScorerModel::new(2, 2, &[1, 1, 1, 1, 1, 1], 0).is_err());
        assert!(ScorerModel::new(2, 2, &[3, 0], 0).is_err());
        assert!(ScorerModel::new(0, 2, &[3], 0).is_err());
        let m = ScorerModel::new(3, 5, &[700, 100, 700], 1).unwrap();
        assert_eq!(m.hidden_sizes(), &[700, 100, 700]);
        assert_eq!(
            m.param_count(),
            8 * 700 + 700 + 700 * 100 + 100 + 100 * 700 + 700 + 700 + 1
        );
        let bad = Dense::zeros(3, 2);
        assert!(ScorerModel::from_layers(2, 2, vec![bad, Dense::zeros(2, 1)]).is_err());
    }

    #[test]
    fn forward_rejects_wrong_dims() {
        let m = ScorerModel::new(2, 2, &[3], 0).unwrap();
        assert_eq!(m.forward(&[1.0], &[1.0, 2.0, 3.0]).unwrap_err().code(), "dim_mismatch");
        assert_eq!(m.forward(&[1.0, 2.0], &[1.0]).unwrap_err().code(), "dim_mismatch");
    }

    #[test]
    fn init_is_seeded_and_bounded() {
        let a = ScorerModel::new(4, 4, &[6, 5], 9).unwrap();
        assert_eq!(a, ScorerModel::new(4, 4, &[6, 5], 9).unwrap());
        assert_ne!(a, ScorerModel::new(4, 4, &[6, 5], 10).unwrap());
        let limit = (6.0f64 / 14.0).sqrt();
        assert!(a.layers()[0].weights.iter().all(|w| w.abs() <= limit));
        assert!(a.layers().iter().all(|l| l.biases.iter().all(|&b| b == 0.0)));
    }

    #[test]
    fn score_matrix_matches_forward_bitwise() {
        let m = ScorerModel::new(3, 2, &[5, 4], 3).unwrap();
        let t = EmbeddingSet::new(
            Modality::Text,
            3,
            vec!["a".into(), "b".into()],
            vec![0.1, -0.4, 2.0, 1.0, 0.0, -1.0],
        )
        .unwrap();
        let i = EmbeddingSet::new(
            Modality::Image,
            2,
            vec!["x".into(), "y".into(), "z".into()],
            vec![1.0, 2.0, -0.5, 0.3, 0.0, 0.0],
        )
        .unwrap();
        let s = m.score_matrix(&t, &i).unwrap();
        for r in 0..2 {
            for c in 0..3 {
                assert_eq!(s.get(r, c).to_bits(), m.forward(t.row(r), i.row(c)).unwrap().to_bits());
            }
        }
    }

    proptest! {
        #[test]
        fn output_is_strictly_bounded(
            seed in any::<u64>(),
            x in prop::collection::vec(-100.0f32..100.0, 3),
            y in prop::collection::vec(-100.0f32..100.0, 3),
        ) {
            let m = ScorerModel::new(3, 3, &[8, 4], seed).unwrap();
            let d = m.forward(&x, &y).unwrap();
            prop_assert!(d.abs() <= 1.0);
            prop_assert!(d.is_finite());
        }
    }
}
