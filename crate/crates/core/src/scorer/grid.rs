//! Loss and gradient over a query × candidate grid of pairs.
//!
//! Each pair is run forward and immediately back-propagated, so nothing per
//! pair is kept. First-layer gradients are accumulated per text row and per
//! image row and folded into the weight gradient once at the end.

use super::ScorerModel;

/// What each grid cell is trained toward.
#[derive(Debug, Clone)]
pub(crate) enum Targets {
    /// Cell (i, j) is a positive iff `text_keys[i] == image_keys[j]`.
    Contrastive {
        text_keys: Vec<usize>,
        image_keys: Vec<usize>,
    },
    /// Row-major regression targets, one per cell.
    Mse { values: Vec<f64> },
}

pub(crate) struct Grid<'a> {
    pub texts: Vec<&'a [f32]>,
    pub images: Vec<&'a [f32]>,
    pub targets: Targets,
}

impl Grid<'_> {
    pub fn cells(&self) -> usize {
        self.texts.len() * self.images.len()
    }

    /// Loss of cell (i, j) at score `d`, and its derivative in `d`.
    fn loss(&self, i: usize, j: usize, d: f64) -> (f64, f64) {
        match &self.targets {
            Targets::Contrastive { text_keys, image_keys } => {
                if text_keys[i] == image_keys[j] {
                    (0.5 * (1.0 - d) * (1.0 - d), d - 1.0)
                } else {
                    (0.5 * (d + 1.0) * (d + 1.0), d + 1.0)
                }
            }
            Targets::Mse { values } => {
                let e = d - values[i * self.images.len() + j];
                (e * e, 2.0 * e)
            }
        }
    }
}

/// Gradient of a loss with respect to every model parameter, shaped like the
/// model's layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

impl Gradients {
    pub fn zeros_like(model: &ScorerModel) -> Self {
        Gradients {
            weights: model.layers().iter().map(|l| vec![0.0; l.weights.len()]).collect(),
            biases: model.layers().iter().map(|l| vec![0.0; l.biases.len()]).collect(),
        }
    }

    /// Flattened in the model's parameter order.
    pub fn flat(&self) -> Vec<f64> {
        self.weights
            .iter()
            .zip(&self.biases)
            .flat_map(|(w, b)| w.iter().chain(b).copied())
            .collect()
    }
}

fn project_rows(model: &ScorerModel, rows: &[&[f32]], text: bool) -> Vec<f64> {
    let h = model.hidden_sizes()[0];
    let mut out = vec![0.0; rows.len() * h];
    for (r, o) in rows.iter().zip(out.chunks_mut(h)) {
        if text {
            model.project_text(r, o);
        } else {
            model.project_image(r, o);
        }
    }
    out
}

/// Mean loss over all cells; with `want_grad`, also its gradient.
pub(crate) fn grid_pass(model: &ScorerModel, grid: &Grid<'_>, want_grad: bool) -> (f64, Option<Gradients>) {
    let (nt, ni) = (grid.texts.len(), grid.images.len());
    if nt == 0 || ni == 0 {
        return (0.0, want_grad.then(|| Gradients::zeros_like(model)));
    }
    let h = model.hidden_sizes()[0];
    let hx = project_rows(model, &grid.texts, true);
    let hy = project_rows(model, &grid.images, false);
    let inv = 1.0 / grid.cells() as f64;
    let layers = model.layers();
    let n = layers.len();

    let mut acts = model.scratch();
    let mut grads = want_grad.then(|| Gradients::zeros_like(model));
    let mut gx = vec![0.0; if want_grad { nt * h } else { 0 }];
    let mut gy = vec![0.0; if want_grad { ni * h } else { 0 }];
    let widest = model.hidden_sizes().iter().copied().max().unwrap_or(0);
    let (mut delta, mut next) = (vec![0.0; widest], vec![0.0; widest]);

    let mut total = 0.0;
    for i in 0..nt {
        let xi = &hx[i * h..(i + 1) * h];
        for j in 0..ni {
            let d = model.forward_projected(xi, &hy[j * h..(j + 1) * h], &mut acts);
            let (loss, dl_dd) = grid.loss(i, j, d);
            total += loss;
            let Some(g) = grads.as_mut() else { continue };

            // output layer
            let g_out = dl_dd * (1.0 - d * d) * inv;
            let top = &acts[n - 2];
            for (gw, a) in g.weights[n - 1].iter_mut().zip(top) {
                *gw += g_out * a;
            }
            g.biases[n - 1][0] += g_out;
            let w_out = &layers[n - 1].weights;
            for k in 0..top.len() {
                delta[k] = if top[k] > 0.0 { w_out[k] * g_out } else { 0.0 };
            }

            // hidden-to-hidden layers, top down
            for l in (1..n - 1).rev() {
                let layer = &layers[l];
                let input = &acts[l - 1];
                let gw = &mut g.weights[l];
                next[..layer.inputs].fill(0.0);
                for (o, &dz) in delta[..layer.outputs].iter().enumerate() {
                    if dz == 0.0 {
                        continue;
                    }
                    g.biases[l][o] += dz;
                    let row = o * layer.inputs;
                    for k in 0..layer.inputs {
                        gw[row + k] += dz * input[k];
                        next[k] += layer.weights[row + k] * dz;
                    }
                }
                for k in 0..layer.inputs {
                    delta[k] = if input[k] > 0.0 { next[k] } else { 0.0 };
                }
            }

            // first layer: bias now, weights via the per-row accumulators
            for k in 0..h {
                g.biases[0][k] += delta[k];
                gx[i * h + k] += delta[k];
                gy[j * h + k] += delta[k];
            }
        }
    }

    if let Some(g) = grads.as_mut() {
        let (dx, inputs) = (model.text_dim(), model.input_dim());
        let gw = &mut g.weights[0];
        for k in 0..h {
            let row = &mut gw[k * inputs..(k + 1) * inputs];
            for (i, x) in grid.texts.iter().enumerate() {
                let s = gx[i * h + k];
                if s != 0.0 {
                    for (w, &v) in row[..dx].iter_mut().zip(*x) {
                        *w += s * f64::from(v);
                    }
                }
            }
            for (j, y) in grid.images.iter().enumerate() {
                let s = gy[j * h + k];
                if s != 0.0 {
                    for (w, &v) in row[dx..].iter_mut().zip(*y) {
                        *w += s * f64::from(v);
                    }
                }
            }
        }
    }
    (total * inv, grads)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn loss_matches_direct_forward() {
        let m = ScorerModel::new(2, 3, &[4, 3], 5).unwrap();
        let texts: Vec<Vec<f32>> = vec![vec![0.3, -1.0], vec![2.0, 0.5]];
        let images: Vec<Vec<f32>> = vec![vec![1.0, 0.0, -0.5], vec![0.2, 0.2, 0.2], vec![-1.0, 3.0, 0.0]];
        let grid = Grid {
            texts: texts.iter().map(Vec::as_slice).collect(),
            images: images.iter().map(Vec::as_slice).collect(),
            targets: Targets::Contrastive {
                text_keys: vec![0, 2],
                image_keys: vec![0, 1, 2],
            },
        };
        let (loss, _) = grid_pass(&m, &grid, false);
        let mut direct = 0.0;
        for (i, t) in texts.iter().enumerate() {
            for (j, y) in images.iter().enumerate() {
                let d = m.forward(t, y).unwrap();
                let positive = [0, 2][i] == j;
                direct += if positive {
                    0.5 * (1.0 - d).powi(2)
                } else {
                    0.5 * (d + 1.0).powi(2)
                };
            }
        }
        assert!((loss - direct / 6.0).abs() < 1e-14);
    }
}
