//! Differentiable building blocks. Each layer's `forward` returns a cache that
//! its `backward` consumes; parameter gradients accumulate into a same-shaped
//! gradient struct.

use rand::{Rng, RngCore};

use super::matrix::Matrix;

/// Named-tensor traversal shared by parameters and their gradients.
pub trait Params {
    fn visit<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Matrix)>);
    fn visit_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Matrix)>);
}

pub(crate) fn name(prefix: &str, field: &str) -> String {
    if prefix.is_empty() {
        field.to_owned()
    } else {
        format!("{prefix}.{field}")
    }
}

/// Uniform in `[-bound, bound]`.
pub(crate) fn uniform(rng: &mut dyn RngCore, rows: usize, cols: usize, bound: f64) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.gen_range(-bound..=bound))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    /// `out x in`.
    pub weight: Matrix,
    /// `1 x out`.
    pub bias: Matrix,
}

impl Linear {
    pub fn init(rng: &mut dyn RngCore, input: usize, output: usize) -> Self {
        Linear {
            weight: uniform(rng, output, input, 1.0 / (input as f64).sqrt()),
            bias: Matrix::zeros(1, output),
        }
    }

    pub fn forward(&self, x: &Matrix) -> Matrix {
        let mut y = x.matmul_t(&self.weight);
        y.add_row_broadcast(&self.bias);
        y
    }

    /// Accumulates into `grad`, returns the input gradient.
    pub fn backward(&self, x: &Matrix, dy: &Matrix, grad: &mut Linear) -> Matrix {
        dy.t_matmul_acc(x, &mut grad.weight);
        dy.col_sums_acc(&mut grad.bias);
        dy.matmul(&self.weight)
    }
}

impl Params for Linear {
    fn visit<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Matrix)>) {
        out.push((name(prefix, "weight"), &self.weight));
        out.push((name(prefix, "bias"), &self.bias));
    }
    fn visit_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Matrix)>) {
        out.push((name(prefix, "weight"), &mut self.weight));
        out.push((name(prefix, "bias"), &mut self.bias));
    }
}

pub const LAYER_NORM_EPS: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq)]
pub struct LayerNorm {
    pub gain: Matrix,
    pub bias: Matrix,
}

pub struct LayerNormCache {
    xhat: Matrix,
    inv_std: Vec<f64>,
}

impl LayerNorm {
    pub fn new(d: usize) -> Self {
        let mut gain = Matrix::zeros(1, d);
        gain.fill(1.0);
        LayerNorm {
            gain,
            bias: Matrix::zeros(1, d),
        }
    }

    pub fn forward(&self, x: &Matrix) -> (Matrix, LayerNormCache) {
        let (n, d) = x.shape();
        let mut xhat = Matrix::zeros(n, d);
        let mut y = Matrix::zeros(n, d);
        let mut inv_std = Vec::with_capacity(n);
        for r in 0..n {
            let row = x.row(r);
            let mean = row.iter().sum::<f64>() / d as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
            let is = 1.0 / (var + LAYER_NORM_EPS).sqrt();
            inv_std.push(is);
            let g = self.gain.row(0);
            let b = self.bias.row(0);
            let xr = xhat.row_mut(r);
            for c in 0..d {
                xr[c] = (row[c] - mean) * is;
            }
            let yr = y.row_mut(r);
            for c in 0..d {
                yr[c] = xhat.get(r, c) * g[c] + b[c];
            }
        }
        (y, LayerNormCache { xhat, inv_std })
    }

    pub fn backward(&self, cache: &LayerNormCache, dy: &Matrix, grad: &mut LayerNorm) -> Matrix {
        let (n, d) = dy.shape();
        let mut dx = Matrix::zeros(n, d);
        let g = self.gain.row(0);
        for r in 0..n {
            let dyr = dy.row(r);
            let xh = cache.xhat.row(r);
            let gg = grad.gain.row_mut(0);
            for c in 0..d {
                gg[c] += dyr[c] * xh[c];
            }
            let gb = grad.bias.row_mut(0);
            for c in 0..d {
                gb[c] += dyr[c];
            }
            let dxhat: Vec<f64> = (0..d).map(|c| dyr[c] * g[c]).collect();
            let mean_dxhat = dxhat.iter().sum::<f64>() / d as f64;
            let mean_dxhat_xhat = dxhat.iter().zip(xh).map(|(a, b)| a * b).sum::<f64>() / d as f64;
            let is = cache.inv_std[r];
            let dxr = dx.row_mut(r);
            for c in 0..d {
                dxr[c] = is * (dxhat[c] - mean_dxhat - xh[c] * mean_dxhat_xhat);
            }
        }
        dx
    }
}

impl Params for LayerNorm {
    fn visit<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Matrix)>) {
        out.push((name(prefix, "gain"), &self.gain));
        out.push((name(prefix, "bias"), &self.bias));
    }
    fn visit_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Matrix)>) {
        out.push((name(prefix, "gain"), &mut self.gain));
        out.push((name(prefix, "bias"), &mut self.bias));
    }
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)

/// tanh approximation of GELU.
pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + 0.044715 * x * x * x)).tanh())
}

pub fn gelu_grad(x: f64) -> f64 {
    let t = (GELU_C * (x + 0.044715 * x * x * x)).tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * 0.044715 * x * x)
}

/// Numerically stable softmax of one row in place. `-inf` entries get weight 0.
pub fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

pub fn softmax_rows(scores: &Matrix) -> Matrix {
    let mut a = scores.clone();
    for r in 0..a.rows() {
        softmax_in_place(a.row_mut(r));
    }
    a
}

/// Gradient through a row-wise softmax given its output `a`.
pub fn softmax_rows_backward(a: &Matrix, da: &Matrix) -> Matrix {
    let mut ds = Matrix::zeros(a.rows(), a.cols());
    for r in 0..a.rows() {
        let ar = a.row(r);
        let dar = da.row(r);
        let inner: f64 = ar.iter().zip(dar).map(|(x, y)| x * y).sum();
        let dsr = ds.row_mut(r);
        for c in 0..ar.len() {
            dsr[c] = ar[c] * (dar[c] - inner);
        }
    }
    ds
}

/// Short reborrow of an optional RNG so it can be passed on repeatedly.
pub(crate) fn reborrow<'a>(rng: &'a mut Option<&mut dyn RngCore>) -> Option<&'a mut dyn RngCore> {
    match rng {
        Some(r) => Some(&mut **r),
        None => None,
    }
}

/// Inverted dropout. With `rng = None` or `p = 0` this is the identity.
pub fn dropout(x: &Matrix, p: f64, rng: Option<&mut dyn RngCore>) -> (Matrix, Option<Matrix>) {
    match rng {
        Some(rng) if p > 0.0 => {
            let scale = 1.0 / (1.0 - p);
            let mask = Matrix::from_fn(x.rows(), x.cols(), |_, _| {
                if rng.gen::<f64>() < p {
                    0.0
                } else {
                    scale
                }
            });
            let mut y = x.clone();
            for (v, m) in y.as_mut_slice().iter_mut().zip(mask.as_slice()) {
                *v *= m;
            }
            (y, Some(mask))
        }
        _ => (x.clone(), None),
    }
}

pub fn dropout_backward(dy: Matrix, mask: &Option<Matrix>) -> Matrix {
    match mask {
        None => dy,
        Some(mask) => {
            let mut dx = dy;
            for (v, m) in dx.as_mut_slice().iter_mut().zip(mask.as_slice()) {
                *v *= m;
            }
            dx
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultiHeadAttention {
    pub query: Linear,
    pub key: Linear,
    pub value: Linear,
    pub output: Linear,
    pub heads: usize,
}

pub struct AttentionCache {
    x: Matrix,
    q: Matrix,
    k: Matrix,
    v: Matrix,
    /// One `n x n` map per head.
    pub weights: Vec<Matrix>,
    context: Matrix,
}

impl MultiHeadAttention {
    pub fn init(rng: &mut dyn RngCore, d: usize, heads: usize) -> Self {
        MultiHeadAttention {
            query: Linear::init(rng, d, d),
            key: Linear::init(rng, d, d),
            value: Linear::init(rng, d, d),
            output: Linear::init(rng, d, d),
            heads,
        }
    }

    pub fn forward(&self, x: &Matrix) -> (Matrix, AttentionCache) {
        let (n, d) = x.shape();
        let dh = d / self.heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let q = self.query.forward(x);
        let k = self.key.forward(x);
        let v = self.value.forward(x);
        let mut context = Matrix::zeros(n, d);
        let mut weights = Vec::with_capacity(self.heads);
        for h in 0..self.heads {
            let (qh, kh, vh) = (
                q.cols_range(h * dh, (h + 1) * dh),
                k.cols_range(h * dh, (h + 1) * dh),
                v.cols_range(h * dh, (h + 1) * dh),
            );
            let a = softmax_rows(&qh.matmul_t(&kh).scaled(scale));
            context.set_cols(h * dh, &a.matmul(&vh));
            weights.push(a);
        }
        let y = self.output.forward(&context);
        (
            y,
            AttentionCache {
                x: x.clone(),
                q,
                k,
                v,
                weights,
                context,
            },
        )
    }

    pub fn backward(
        &self,
        cache: &AttentionCache,
        dy: &Matrix,
        grad: &mut MultiHeadAttention,
    ) -> Matrix {
        let (n, d) = cache.x.shape();
        let dh = d / self.heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let dcontext = self.output.backward(&cache.context, dy, &mut grad.output);
        let mut dq = Matrix::zeros(n, d);
        let mut dk = Matrix::zeros(n, d);
        let mut dv = Matrix::zeros(n, d);
        for h in 0..self.heads {
            let cols = h * dh..(h + 1) * dh;
            let qh = cache.q.cols_range(cols.start, cols.end);
            let kh = cache.k.cols_range(cols.start, cols.end);
            let vh = cache.v.cols_range(cols.start, cols.end);
            let a = &cache.weights[h];
            let dctx = dcontext.cols_range(cols.start, cols.end);
            let da = dctx.matmul_t(&vh);
            dv.set_cols(cols.start, &a.t_matmul(&dctx));
            let ds = softmax_rows_backward(a, &da).scaled(scale);
            dq.set_cols(cols.start, &ds.matmul(&kh));
            dk.set_cols(cols.start, &ds.t_matmul(&qh));
        }
        let mut dx = self.query.backward(&cache.x, &dq, &mut grad.query);
        dx.add_assign(&self.key.backward(&cache.x, &dk, &mut grad.key));
        dx.add_assign(&self.value.backward(&cache.x, &dv, &mut grad.value));
        dx
    }
}

impl Params for MultiHeadAttention {
    fn visit<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Matrix)>) {
        self.query.visit(&name(prefix, "query"), out);
        self.key.visit(&name(prefix, "key"), out);
        self.value.visit(&name(prefix, "value"), out);
        self.output.visit(&name(prefix, "output"), out);
    }
    fn visit_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Matrix)>) {
        self.query.visit_mut(&name(prefix, "query"), out);
        self.key.visit_mut(&name(prefix, "key"), out);
        self.value.visit_mut(&name(prefix, "value"), out);
        self.output.visit_mut(&name(prefix, "output"), out);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gelu_derivative_matches_difference_quotient() {
        for &x in &[-3.0, -0.7, 0.0, 0.4, 2.5] {
            let h = 1e-6;
            let fd = (gelu(x + h) - gelu(x - h)) / (2.0 * h);
            assert!((fd - gelu_grad(x)).abs() < 1e-8, "x={x}");
        }
    }

    #[test]
    fn softmax_masks_negative_infinity() {
        let mut row = [1.0, f64::NEG_INFINITY, 2.0];
        softmax_in_place(&mut row);
        assert_eq!(row[1], 0.0);
        assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn dropout_is_identity_without_rng() {
        let x = Matrix::from_rows(&[[1.0, 2.0]]);
        let (y, mask) = dropout(&x, 0.5, None);
        assert_eq!(y, x);
        assert!(mask.is_none());
    }
}
