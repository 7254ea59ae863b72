//! Single-head cross-attention with text rows as queries over image rows.

use rand::RngCore;

use super::layers::{name, softmax_rows, softmax_rows_backward, uniform, Params};
use super::matrix::Matrix;
use crate::error::{Error, Result};

/// Learnable `W^Q`, `W^K`, `W^V`, each `d x d`.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossAttention {
    pub wq: Matrix,
    pub wk: Matrix,
    pub wv: Matrix,
}

pub struct CrossCache {
    l: Matrix,
    i: Matrix,
    q: Matrix,
    k: Matrix,
    v: Matrix,
    /// `m_L x m_I`.
    pub weights: Matrix,
}

impl CrossAttention {
    pub fn init(rng: &mut dyn RngCore, d: usize) -> Self {
        let bound = 1.0 / (d as f64).sqrt();
        CrossAttention {
            wq: uniform(rng, d, d, bound),
            wk: uniform(rng, d, d, bound),
            wv: uniform(rng, d, d, bound),
        }
    }

    pub fn zeros(d: usize) -> Self {
        CrossAttention {
            wq: Matrix::zeros(d, d),
            wk: Matrix::zeros(d, d),
            wv: Matrix::zeros(d, d),
        }
    }

    pub fn forward(&self, l: &Matrix, i: &Matrix) -> Result<(Matrix, CrossCache)> {
        check_shapes(l, i, &self.wq, &self.wk, &self.wv)?;
        let q = l.matmul_t(&self.wq);
        let k = i.matmul_t(&self.wk);
        let v = i.matmul_t(&self.wv);
        let scale = 1.0 / (l.cols() as f64).sqrt();
        let weights = softmax_rows(&q.matmul_t(&k).scaled(scale));
        let out = weights.matmul(&v);
        Ok((
            out,
            CrossCache {
                l: l.clone(),
                i: i.clone(),
                q,
                k,
                v,
                weights,
            },
        ))
    }

    /// Returns `(dL, dI)` and accumulates weight gradients.
    pub fn backward(
        &self,
        cache: &CrossCache,
        dout: &Matrix,
        grad: &mut CrossAttention,
    ) -> (Matrix, Matrix) {
        let scale = 1.0 / (cache.l.cols() as f64).sqrt();
        let da = dout.matmul_t(&cache.v);
        let dv = cache.weights.t_matmul(dout);
        let ds = softmax_rows_backward(&cache.weights, &da).scaled(scale);
        let dq = ds.matmul(&cache.k);
        let dk = ds.t_matmul(&cache.q);
        dq.t_matmul_acc(&cache.l, &mut grad.wq);
        dk.t_matmul_acc(&cache.i, &mut grad.wk);
        dv.t_matmul_acc(&cache.i, &mut grad.wv);
        let dl = dq.matmul(&self.wq);
        let mut di = dk.matmul(&self.wk);
        di.add_assign(&dv.matmul(&self.wv));
        (dl, di)
    }
}

impl Params for CrossAttention {
    fn visit<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Matrix)>) {
        out.push((name(prefix, "wq"), &self.wq));
        out.push((name(prefix, "wk"), &self.wk));
        out.push((name(prefix, "wv"), &self.wv));
    }
    fn visit_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Matrix)>) {
        out.push((name(prefix, "wq"), &mut self.wq));
        out.push((name(prefix, "wk"), &mut self.wk));
        out.push((name(prefix, "wv"), &mut self.wv));
    }
}

fn check_shapes(l: &Matrix, i: &Matrix, wq: &Matrix, wk: &Matrix, wv: &Matrix) -> Result<()> {
    let d = l.cols();
    if l.rows() == 0 || i.rows() == 0 {
        return Err(Error::DimensionMismatch(
            "cross-attention needs at least one query and one key row".into(),
        ));
    }
    if i.cols() != d {
        return Err(Error::DimensionMismatch(format!(
            "text width {d} differs from image width {}",
            i.cols()
        )));
    }
    for (label, w) in [("W^Q", wq), ("W^K", wk), ("W^V", wv)] {
        if w.shape() != (d, d) {
            return Err(Error::DimensionMismatch(format!(
                "{label} is {:?}, expected ({d}, {d})",
                w.shape()
            )));
        }
    }
    Ok(())
}

/// `softmax((L W^Qᵀ)(I W^Kᵀ)ᵀ / √d) · (I W^Vᵀ)`, shape `m_L x d`.
pub fn cross_attention(
    l: &Matrix,
    i: &Matrix,
    wq: &Matrix,
    wk: &Matrix,
    wv: &Matrix,
) -> Result<Matrix> {
    cross_attention_with_weights(l, i, wq, wk, wv).map(|(out, _)| out)
}

/// Like [`cross_attention`] but also returns the `m_L x m_I` attention map.
pub fn cross_attention_with_weights(
    l: &Matrix,
    i: &Matrix,
    wq: &Matrix,
    wk: &Matrix,
    wv: &Matrix,
) -> Result<(Matrix, Matrix)> {
    let layer = CrossAttention {
        wq: wq.clone(),
        wk: wk.clone(),
        wv: wv.clone(),
    };
    let (out, cache) = layer.forward(l, i)?;
    Ok((out, cache.weights))
}
