//! Pre-norm transformer encoders for token sequences and image patches.

use rand::RngCore;

use super::layers::{
    dropout, dropout_backward, gelu, gelu_grad, name, uniform, AttentionCache, LayerNorm,
    LayerNormCache, Linear, MultiHeadAttention, Params,
};
use super::matrix::Matrix;
use crate::preprocess::PixelTensor;

#[derive(Debug, Clone, PartialEq)]
pub struct TransformerBlock {
    pub norm1: LayerNorm,
    pub attention: MultiHeadAttention,
    pub norm2: LayerNorm,
    pub ff_in: Linear,
    pub ff_out: Linear,
}

pub struct BlockCache {
    norm1: LayerNormCache,
    h1: Matrix,
    pub attention: AttentionCache,
    norm2: LayerNormCache,
    h2: Matrix,
    pre_act: Matrix,
    act: Matrix,
}

impl TransformerBlock {
    pub fn init(rng: &mut dyn RngCore, d: usize, heads: usize, ff_dim: usize) -> Self {
        TransformerBlock {
            norm1: LayerNorm::new(d),
            attention: MultiHeadAttention::init(rng, d, heads),
            norm2: LayerNorm::new(d),
            ff_in: Linear::init(rng, d, ff_dim),
            ff_out: Linear::init(rng, ff_dim, d),
        }
    }

    pub fn forward(&self, x: &Matrix) -> (Matrix, BlockCache) {
        let (h1, norm1) = self.norm1.forward(x);
        let (a, attention) = self.attention.forward(&h1);
        let mut x2 = x.clone();
        x2.add_assign(&a);
        let (h2, norm2) = self.norm2.forward(&x2);
        let pre_act = self.ff_in.forward(&h2);
        let act = pre_act.map(gelu);
        let mut out = x2;
        out.add_assign(&self.ff_out.forward(&act));
        (
            out,
            BlockCache {
                norm1,
                h1,
                attention,
                norm2,
                h2,
                pre_act,
                act,
            },
        )
    }

    pub fn backward(&self, cache: &BlockCache, dout: &Matrix, grad: &mut TransformerBlock) -> Matrix {
        let dact = self.ff_out.backward(&cache.act, dout, &mut grad.ff_out);
        let mut dpre = dact;
        for (d, &z) in dpre.as_mut_slice().iter_mut().zip(cache.pre_act.as_slice()) {
            *d *= gelu_grad(z);
        }
        let dh2 = self.ff_in.backward(&cache.h2, &dpre, &mut grad.ff_in);
        let mut dx2 = dout.clone();
        dx2.add_assign(&self.norm2.backward(&cache.norm2, &dh2, &mut grad.norm2));
        let dh1 = self
            .attention
            .backward(&cache.attention, &dx2, &mut grad.attention);
        let _ = &cache.h1;
        let mut dx = dx2;
        dx.add_assign(&self.norm1.backward(&cache.norm1, &dh1, &mut grad.norm1));
        dx
    }
}

impl Params for TransformerBlock {
    fn visit<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Matrix)>) {
        self.norm1.visit(&name(prefix, "norm1"), out);
        self.attention.visit(&name(prefix, "attention"), out);
        self.norm2.visit(&name(prefix, "norm2"), out);
        self.ff_in.visit(&name(prefix, "ff_in"), out);
        self.ff_out.visit(&name(prefix, "ff_out"), out);
    }
    fn visit_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Matrix)>) {
        self.norm1.visit_mut(&name(prefix, "norm1"), out);
        self.attention.visit_mut(&name(prefix, "attention"), out);
        self.norm2.visit_mut(&name(prefix, "norm2"), out);
        self.ff_in.visit_mut(&name(prefix, "ff_in"), out);
        self.ff_out.visit_mut(&name(prefix, "ff_out"), out);
    }
}

/// Stack of blocks followed by a final layer norm.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockStack {
    pub blocks: Vec<TransformerBlock>,
    pub final_norm: LayerNorm,
}

pub struct StackCache {
    pub blocks: Vec<BlockCache>,
    final_norm: LayerNormCache,
}

impl BlockStack {
    fn init(rng: &mut dyn RngCore, d: usize, layers: usize, heads: usize, ff_dim: usize) -> Self {
        BlockStack {
            blocks: (0..layers)
                .map(|_| TransformerBlock::init(rng, d, heads, ff_dim))
                .collect(),
            final_norm: LayerNorm::new(d),
        }
    }

    fn forward(&self, x: Matrix) -> (Matrix, StackCache) {
        let mut h = x;
        let mut caches = Vec::with_capacity(self.blocks.len());
        for block in &self.blocks {
            let (next, cache) = block.forward(&h);
            caches.push(cache);
            h = next;
        }
        let (out, final_norm) = self.final_norm.forward(&h);
        (
            out,
            StackCache {
                blocks: caches,
                final_norm,
            },
        )
    }

    fn backward(&self, cache: &StackCache, dout: &Matrix, grad: &mut BlockStack) -> Matrix {
        let mut dh = self
            .final_norm
            .backward(&cache.final_norm, dout, &mut grad.final_norm);
        for ((block, bc), bg) in self
            .blocks
            .iter()
            .zip(&cache.blocks)
            .zip(grad.blocks.iter_mut())
            .rev()
        {
            dh = block.backward(bc, &dh, bg);
        }
        dh
    }
}

impl Params for BlockStack {
    fn visit<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Matrix)>) {
        for (i, b) in self.blocks.iter().enumerate() {
            b.visit(&name(prefix, &format!("block{i}")), out);
        }
        self.final_norm.visit(&name(prefix, "final_norm"), out);
    }
    fn visit_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Matrix)>) {
        for (i, b) in self.blocks.iter_mut().enumerate() {
            b.visit_mut(&name(prefix, &format!("block{i}")), out);
        }
        self.final_norm.visit_mut(&name(prefix, "final_norm"), out);
    }
}

/// Fixed sinusoidal position encodings, `n x d`.
pub fn sinusoidal_positions(n: usize, d: usize) -> Matrix {
    Matrix::from_fn(n, d, |pos, i| {
        let freq = 1.0 / 10_000f64.powf((2 * (i / 2)) as f64 / d as f64);
        let angle = pos as f64 * freq;
        if i % 2 == 0 {
            angle.sin()
        } else {
            angle.cos()
        }
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TextEncoder {
    /// `vocab x d`.
    pub token_embedding: Matrix,
    pub stack: BlockStack,
}

pub struct TextCache {
    ids: Vec<usize>,
    dropout_mask: Option<Matrix>,
    pub stack: StackCache,
}

impl TextCache {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

impl TextEncoder {
    pub fn init(
        rng: &mut dyn RngCore,
        vocab: usize,
        d: usize,
        layers: usize,
        heads: usize,
        ff_dim: usize,
    ) -> Self {
        TextEncoder {
            token_embedding: uniform(rng, vocab, d, 1.0),
            stack: BlockStack::init(rng, d, layers, heads, ff_dim),
        }
    }

    /// Token ids must already be range-checked.
    pub fn forward(
        &self,
        ids: &[usize],
        p_drop: f64,
        rng: Option<&mut dyn RngCore>,
    ) -> (Matrix, TextCache) {
        let d = self.token_embedding.cols();
        let mut x = sinusoidal_positions(ids.len(), d);
        for (t, &id) in ids.iter().enumerate() {
            super::matrix::axpy(x.row_mut(t), 1.0, self.token_embedding.row(id));
        }
        let (x, dropout_mask) = dropout(&x, p_drop, rng);
        let (out, stack) = self.stack.forward(x);
        (
            out,
            TextCache {
                ids: ids.to_vec(),
                dropout_mask,
                stack,
            },
        )
    }

    pub fn backward(&self, cache: &TextCache, dout: &Matrix, grad: &mut TextEncoder) {
        let dx = self.stack.backward(&cache.stack, dout, &mut grad.stack);
        let dx = dropout_backward(dx, &cache.dropout_mask);
        for (t, &id) in cache.ids.iter().enumerate() {
            super::matrix::axpy(grad.token_embedding.row_mut(id), 1.0, dx.row(t));
        }
    }
}

impl Params for TextEncoder {
    fn visit<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Matrix)>) {
        out.push((name(prefix, "token_embedding"), &self.token_embedding));
        self.stack.visit(prefix, out);
    }
    fn visit_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Matrix)>) {
        out.push((name(prefix, "token_embedding"), &mut self.token_embedding));
        self.stack.visit_mut(prefix, out);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImageEncoder {
    pub patch_size: usize,
    pub patch_projection: Linear,
    /// `1 x d` learned image [CLS] row.
    pub cls: Matrix,
    /// `(patches + 1) x d`.
    pub positions: Matrix,
    pub stack: BlockStack,
}

pub struct ImageCache {
    patches: Matrix,
    dropout_mask: Option<Matrix>,
    pub stack: StackCache,
}

/// Split `(3, size, size)` pixels into non-overlapping row-major patches, each
/// flattened channel-major to `3 * patch * patch` values.
pub fn extract_patches(px: &PixelTensor, patch: usize) -> Matrix {
    let grid = px.size / patch;
    let mut out = Matrix::zeros(grid * grid, 3 * patch * patch);
    for gy in 0..grid {
        for gx in 0..grid {
            let row = out.row_mut(gy * grid + gx);
            let mut k = 0;
            for c in 0..3 {
                for py in 0..patch {
                    for pxl in 0..patch {
                        row[k] = px.get(c, gy * patch + py, gx * patch + pxl);
                        k += 1;
                    }
                }
            }
        }
    }
    out
}

impl ImageCache {
    /// Sequence length including the [CLS] row.
    pub fn len(&self) -> usize {
        self.patches.rows() + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

impl ImageEncoder {
    pub fn init(
        rng: &mut dyn RngCore,
        image_size: usize,
        patch_size: usize,
        d: usize,
        layers: usize,
        heads: usize,
        ff_dim: usize,
    ) -> Self {
        let n_patches = (image_size / patch_size).pow(2);
        let bound = 1.0 / (d as f64).sqrt();
        ImageEncoder {
            patch_size,
            patch_projection: Linear::init(rng, 3 * patch_size * patch_size, d),
            cls: uniform(rng, 1, d, bound),
            positions: uniform(rng, n_patches + 1, d, bound),
            stack: BlockStack::init(rng, d, layers, heads, ff_dim),
        }
    }

    /// Projected patches without [CLS] or positions.
    pub fn patch_embeddings(&self, px: &PixelTensor) -> Matrix {
        self.patch_projection
            .forward(&extract_patches(px, self.patch_size))
    }

    pub fn forward(
        &self,
        px: &PixelTensor,
        p_drop: f64,
        rng: Option<&mut dyn RngCore>,
    ) -> (Matrix, ImageCache) {
        let patches = extract_patches(px, self.patch_size);
        let embedded = self.patch_projection.forward(&patches);
        let d = embedded.cols();
        let mut x = Matrix::zeros(embedded.rows() + 1, d);
        x.row_mut(0).copy_from_slice(self.cls.row(0));
        for r in 0..embedded.rows() {
            x.row_mut(r + 1).copy_from_slice(embedded.row(r));
        }
        x.add_assign(&self.positions);
        let (x, dropout_mask) = dropout(&x, p_drop, rng);
        let (out, stack) = self.stack.forward(x);
        (
            out,
            ImageCache {
                patches,
                dropout_mask,
                stack,
            },
        )
    }

    pub fn backward(&self, cache: &ImageCache, dout: &Matrix, grad: &mut ImageEncoder) {
        let dx = self.stack.backward(&cache.stack, dout, &mut grad.stack);
        let dx = dropout_backward(dx, &cache.dropout_mask);
        grad.positions.add_assign(&dx);
        super::matrix::axpy(grad.cls.row_mut(0), 1.0, dx.row(0));
        let dembedded = Matrix::from_fn(dx.rows() - 1, dx.cols(), |r, c| dx.get(r + 1, c));
        self.patch_projection
            .backward(&cache.patches, &dembedded, &mut grad.patch_projection);
    }
}

impl Params for ImageEncoder {
    fn visit<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Matrix)>) {
        self.patch_projection.visit(&name(prefix, "patch_projection"), out);
        out.push((name(prefix, "cls"), &self.cls));
        out.push((name(prefix, "positions"), &self.positions));
        self.stack.visit(prefix, out);
    }
    fn visit_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Matrix)>) {
        self.patch_projection
            .visit_mut(&name(prefix, "patch_projection"), out);
        out.push((name(prefix, "cls"), &mut self.cls));
        out.push((name(prefix, "positions"), &mut self.positions));
        self.stack.visit_mut(prefix, out);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn patches_are_row_major_channel_major() {
        let mut px = PixelTensor::zeros(4);
        // Channel 1, pixel (y=2, x=3) sits in patch (gy=1, gx=1) at (py=0, px=1).
        px.data[(4 + 2) * 4 + 3] = 0.5;
        let p = extract_patches(&px, 2);
        assert_eq!(p.shape(), (4, 12));
        assert_eq!(p.get(3, 4 + 1), 0.5);
        assert_eq!(p.as_slice().iter().filter(|&&v| v != 0.0).count(), 1);
    }

    #[test]
    fn self_attention_rows_sum_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let enc = TextEncoder::init(&mut rng, 20, 8, 2, 2, 16);
        let (_, cache) = enc.forward(&[0, 5, 7, 19, 3], 0.0, None);
        for block in &cache.stack.blocks {
            for a in &block.attention.weights {
                for r in 0..a.rows() {
                    let s: f64 = a.row(r).iter().sum();
                    assert!((s - 1.0).abs() < 1e-9);
                }
            }
        }
    }
}
