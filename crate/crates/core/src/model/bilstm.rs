//! Bidirectional LSTM with additive attention pooling.

use rand::RngCore;

use super::layers::{dropout, dropout_backward, name, softmax_in_place, uniform, Linear, Params};
use super::matrix::{axpy, dot, Matrix};
use crate::preprocess::PAD_ID;

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// One direction. Gate blocks are ordered input, forget, cell, output.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmDirection {
    /// `4H x E` input weights plus gate bias.
    pub input: Linear,
    /// `4H x H`.
    pub recurrent: Matrix,
}

struct DirectionCache {
    x: Matrix,
    /// Post-activation gates, `T x 4H`.
    gates: Matrix,
    cells: Matrix,
    hidden: Matrix,
}

impl LstmDirection {
    fn init(rng: &mut dyn RngCore, embed: usize, hidden: usize) -> Self {
        LstmDirection {
            input: Linear::init(rng, embed, 4 * hidden),
            recurrent: uniform(rng, 4 * hidden, hidden, 1.0 / (hidden as f64).sqrt()),
        }
    }

    fn hidden_size(&self) -> usize {
        self.recurrent.cols()
    }

    fn forward(&self, x: &Matrix) -> DirectionCache {
        let h = self.hidden_size();
        let t_len = x.rows();
        let mut gates = self.input.forward(x);
        let mut cells = Matrix::zeros(t_len, h);
        let mut hidden = Matrix::zeros(t_len, h);
        let mut h_prev = vec![0.0; h];
        let mut c_prev = vec![0.0; h];
        for t in 0..t_len {
            let z = gates.row_mut(t);
            for (j, zj) in z.iter_mut().enumerate() {
                *zj += dot(self.recurrent.row(j), &h_prev);
            }
            for j in 0..h {
                z[j] = sigmoid(z[j]);
                z[h + j] = sigmoid(z[h + j]);
                z[2 * h + j] = z[2 * h + j].tanh();
                z[3 * h + j] = sigmoid(z[3 * h + j]);
            }
            let z = gates.row(t);
            for j in 0..h {
                let c = z[h + j] * c_prev[j] + z[j] * z[2 * h + j];
                c_prev[j] = c;
                h_prev[j] = z[3 * h + j] * c.tanh();
            }
            cells.row_mut(t).copy_from_slice(&c_prev);
            hidden.row_mut(t).copy_from_slice(&h_prev);
        }
        DirectionCache {
            x: x.clone(),
            gates,
            cells,
            hidden,
        }
    }

    /// Backpropagation through time from per-step hidden-state gradients.
    fn backward(&self, cache: &DirectionCache, dhidden: &Matrix, grad: &mut LstmDirection) -> Matrix {
        let h = self.hidden_size();
        let t_len = cache.x.rows();
        let mut dz = Matrix::zeros(t_len, 4 * h);
        let mut dh_next = vec![0.0; h];
        let mut dc_next = vec![0.0; h];
        for t in (0..t_len).rev() {
            let z = cache.gates.row(t);
            let c = cache.cells.row(t);
            let dzt = dz.row_mut(t);
            for j in 0..h {
                let (i, f, g, o) = (z[j], z[h + j], z[2 * h + j], z[3 * h + j]);
                let tc = c[j].tanh();
                let dh = dhidden.get(t, j) + dh_next[j];
                let dc = dc_next[j] + dh * o * (1.0 - tc * tc);
                let c_prev = if t > 0 { cache.cells.get(t - 1, j) } else { 0.0 };
                dzt[j] = dc * g * i * (1.0 - i);
                dzt[h + j] = dc * c_prev * f * (1.0 - f);
                dzt[2 * h + j] = dc * i * (1.0 - g * g);
                dzt[3 * h + j] = dh * tc * o * (1.0 - o);
                dc_next[j] = dc * f;
            }
            dh_next.fill(0.0);
            for (k, &dzk) in dzt.iter().enumerate() {
                axpy(&mut dh_next, dzk, self.recurrent.row(k));
            }
            if t > 0 {
                let hp = cache.hidden.row(t - 1);
                for (k, &dzk) in dzt.iter().enumerate() {
                    axpy(grad.recurrent.row_mut(k), dzk, hp);
                }
            }
        }
        self.input.backward(&cache.x, &dz, &mut grad.input)
    }
}

impl Params for LstmDirection {
    fn visit<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Matrix)>) {
        self.input.visit(&name(prefix, "input"), out);
        out.push((name(prefix, "recurrent"), &self.recurrent));
    }
    fn visit_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Matrix)>) {
        self.input.visit_mut(&name(prefix, "input"), out);
        out.push((name(prefix, "recurrent"), &mut self.recurrent));
    }
}

/// Embeddings, both LSTM directions and the attention scorer. The output layer
/// lives with the other classifiers.
#[derive(Debug, Clone, PartialEq)]
pub struct BiLstmAtt {
    /// `vocab x E`.
    pub embedding: Matrix,
    pub forward_lstm: LstmDirection,
    pub backward_lstm: LstmDirection,
    /// `2H -> 2H` projection inside the scorer.
    pub attention: Linear,
    /// `1 x 2H` scoring vector.
    pub score: Matrix,
}

pub struct BiLstmCache {
    ids: Vec<usize>,
    dropout_mask: Option<Matrix>,
    fwd: DirectionCache,
    bwd: DirectionCache,
    states: Matrix,
    projected: Matrix,
    /// Attention weights over positions; PAD positions are exactly 0.
    pub weights: Vec<f64>,
}

fn reversed(m: &Matrix) -> Matrix {
    let n = m.rows();
    Matrix::from_fn(n, m.cols(), |r, c| m.get(n - 1 - r, c))
}

impl BiLstmAtt {
    pub fn init(rng: &mut dyn RngCore, vocab: usize, embed: usize, hidden: usize) -> Self {
        BiLstmAtt {
            embedding: uniform(rng, vocab, embed, 1.0 / (embed as f64).sqrt()),
            forward_lstm: LstmDirection::init(rng, embed, hidden),
            backward_lstm: LstmDirection::init(rng, embed, hidden),
            attention: Linear::init(rng, 2 * hidden, 2 * hidden),
            score: uniform(rng, 1, 2 * hidden, 1.0 / ((2 * hidden) as f64).sqrt()),
        }
    }

    /// Returns the `1 x 2H` pooled representation. Ids must be in range.
    pub fn forward(
        &self,
        ids: &[usize],
        p_drop: f64,
        rng: Option<&mut dyn RngCore>,
    ) -> (Matrix, BiLstmCache) {
        let e = self.embedding.cols();
        let x = Matrix::from_fn(ids.len(), e, |t, c| self.embedding.get(ids[t], c));
        let (x, dropout_mask) = dropout(&x, p_drop, rng);
        let fwd = self.forward_lstm.forward(&x);
        let bwd = self.backward_lstm.forward(&reversed(&x));
        let h = self.forward_lstm.hidden_size();
        let mut states = Matrix::zeros(ids.len(), 2 * h);
        states.set_cols(0, &fwd.hidden);
        states.set_cols(h, &reversed(&bwd.hidden));
        let projected = self.attention.forward(&states).map(f64::tanh);
        let any_token = ids.iter().any(|&id| id != PAD_ID);
        let mut weights: Vec<f64> = (0..ids.len())
            .map(|t| {
                if any_token && ids[t] == PAD_ID {
                    f64::NEG_INFINITY
                } else {
                    dot(projected.row(t), self.score.row(0))
                }
            })
            .collect();
        softmax_in_place(&mut weights);
        let mut pooled = Matrix::zeros(1, 2 * h);
        for (t, &w) in weights.iter().enumerate() {
            axpy(pooled.row_mut(0), w, states.row(t));
        }
        (
            pooled,
            BiLstmCache {
                ids: ids.to_vec(),
                dropout_mask,
                fwd,
                bwd,
                states,
                projected,
                weights,
            },
        )
    }

    pub fn backward(&self, cache: &BiLstmCache, dpooled: &Matrix, grad: &mut BiLstmAtt) {
        let h = self.forward_lstm.hidden_size();
        let t_len = cache.ids.len();
        let dp = dpooled.row(0);
        let mut dstates = Matrix::zeros(t_len, 2 * h);
        let dw: Vec<f64> = (0..t_len).map(|t| dot(dp, cache.states.row(t))).collect();
        let inner: f64 = cache.weights.iter().zip(&dw).map(|(a, b)| a * b).sum();
        let mut dpre = Matrix::zeros(t_len, 2 * h);
        for t in 0..t_len {
            let a = cache.weights[t];
            axpy(dstates.row_mut(t), a, dp);
            let dscore = a * (dw[t] - inner);
            if dscore == 0.0 {
                continue;
            }
            axpy(grad.score.row_mut(0), dscore, cache.projected.row(t));
            let u = cache.projected.row(t);
            let row = dpre.row_mut(t);
            for (k, v) in row.iter_mut().enumerate() {
                *v = dscore * self.score.get(0, k) * (1.0 - u[k] * u[k]);
            }
        }
        dstates.add_assign(&self.attention.backward(&cache.states, &dpre, &mut grad.attention));
        let dfwd = dstates.cols_range(0, h);
        let dbwd = reversed(&dstates.cols_range(h, 2 * h));
        let mut dx = self
            .forward_lstm
            .backward(&cache.fwd, &dfwd, &mut grad.forward_lstm);
        dx.add_assign(&reversed(&self.backward_lstm.backward(
            &cache.bwd,
            &dbwd,
            &mut grad.backward_lstm,
        )));
        let dx = dropout_backward(dx, &cache.dropout_mask);
        for (t, &id) in cache.ids.iter().enumerate() {
            axpy(grad.embedding.row_mut(id), 1.0, dx.row(t));
        }
    }
}

impl Params for BiLstmAtt {
    fn visit<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Matrix)>) {
        out.push((name(prefix, "embedding"), &self.embedding));
        self.forward_lstm.visit(&name(prefix, "forward_lstm"), out);
        self.backward_lstm.visit(&name(prefix, "backward_lstm"), out);
        self.attention.visit(&name(prefix, "attention"), out);
        out.push((name(prefix, "score"), &self.score));
    }
    fn visit_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Matrix)>) {
        out.push((name(prefix, "embedding"), &mut self.embedding));
        self.forward_lstm.visit_mut(&name(prefix, "forward_lstm"), out);
        self.backward_lstm.visit_mut(&name(prefix, "backward_lstm"), out);
        self.attention.visit_mut(&name(prefix, "attention"), out);
        out.push((name(prefix, "score"), &mut self.score));
    }
}
