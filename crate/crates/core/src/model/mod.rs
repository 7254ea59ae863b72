//! From-scratch numeric models: text and image transformer encoders, the
//! cross-attention fusion head, the concatenation ablation, unimodal variants
//! and a BiLSTM baseline. Every forward pass has a hand-written backward pass.

pub mod bilstm;
pub mod encoder;
pub mod fusion;
pub mod layers;
pub mod matrix;
pub mod params;

use rand::RngCore;

pub use self::fusion::{cross_attention, cross_attention_with_weights, CrossAttention};
pub use self::layers::Params;
use self::layers::reborrow;
pub use self::matrix::Matrix;
pub use self::params::{FusionMode, ModelConfig, ModelParams};

use self::bilstm::BiLstmCache;
use self::encoder::{ImageCache, TextCache};
use self::fusion::CrossCache;
use crate::corpus::Label;
use crate::error::{Error, Result};
use crate::preprocess::{PixelTensor, TokenSeq};

/// Model inputs for one post. A missing image is fed as an all-zero tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Features {
    pub ids: Vec<usize>,
    pub pixels: Option<PixelTensor>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub features: Features,
    pub label: Label,
}

/// Logits and class probabilities, indexed by [`Label::index`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Output {
    pub logits: [f64; 2],
    pub probs: [f64; 2],
}

impl Output {
    fn from_logits(logits: [f64; 2]) -> Self {
        let m = logits[0].max(logits[1]);
        let e = [(logits[0] - m).exp(), (logits[1] - m).exp()];
        let s = e[0] + e[1];
        Output {
            logits,
            probs: [e[0] / s, e[1] / s],
        }
    }

    /// `log p_label`, computed stably from the logits.
    pub fn log_prob(&self, label: Label) -> f64 {
        let m = self.logits[0].max(self.logits[1]);
        let lse = m + ((self.logits[0] - m).exp() + (self.logits[1] - m).exp()).ln();
        self.logits[label.index()] - lse
    }

    /// Argmax; ties go to non-commercial.
    pub fn label(&self) -> Label {
        if self.probs[1] > self.probs[0] {
            Label::Commercial
        } else {
            Label::NonCommercial
        }
    }
}

fn check_ids(ids: &[usize], config: &ModelConfig) -> Result<()> {
    if ids.is_empty() {
        return Err(Error::InvalidArgument(
            "token sequence must contain at least [CLS]".into(),
        ));
    }
    if let Some(&id) = ids.iter().find(|&&id| id >= config.vocab_size) {
        return Err(Error::TokenOutOfRange {
            id,
            vocab_size: config.vocab_size,
        });
    }
    let limit = config.text_len_limit();
    if ids.len() > limit {
        return Err(Error::InvalidArgument(format!(
            "sequence of {} tokens exceeds the limit of {limit}",
            ids.len()
        )));
    }
    Ok(())
}

fn check_pixels(px: &PixelTensor, config: &ModelConfig) -> Result<()> {
    if px.size != config.image_size || px.data.len() != 3 * px.size * px.size {
        return Err(Error::DimensionMismatch(format!(
            "image tensor of side {} ({} values), model expects side {}",
            px.size,
            px.data.len(),
            config.image_size
        )));
    }
    Ok(())
}

fn missing(component: &str, mode: FusionMode) -> Error {
    Error::InvalidArgument(format!("fusion mode {mode} has no {component}"))
}

/// Contextual text representation, `len(seq) x d`; row 0 is the text [CLS].
pub fn encode_text(seq: &TokenSeq, params: &ModelParams, config: &ModelConfig) -> Result<Matrix> {
    check_ids(&seq.ids, config)?;
    let text = params
        .text
        .as_ref()
        .ok_or_else(|| missing("text encoder", config.fusion))?;
    Ok(text.forward(&seq.ids, 0.0, None).0)
}

/// Contextual image representation, `(patches + 1) x d`; row 0 is the image [CLS].
pub fn encode_image(px: &PixelTensor, params: &ModelParams, config: &ModelConfig) -> Result<Matrix> {
    check_pixels(px, config)?;
    let image = params
        .image
        .as_ref()
        .ok_or_else(|| missing("image encoder", config.fusion))?;
    Ok(image.forward(px, 0.0, None).0)
}

fn concat_rows(a: &[f64], b: &[f64]) -> Matrix {
    let mut h = Matrix::zeros(1, a.len() + b.len());
    h.row_mut(0)[..a.len()].copy_from_slice(a);
    h.row_mut(0)[a.len()..].copy_from_slice(b);
    h
}

fn classify(params: &ModelParams, h: &Matrix) -> Output {
    let z = params.classifier.forward(h);
    Output::from_logits([z.get(0, 0), z.get(0, 1)])
}

/// Classifier over `concat(L[0], second[0])`. In cross_att mode `second` is
/// the cross-attention output; in concat mode it is the image representation.
pub fn fuse_and_classify(
    l: &Matrix,
    second: &Matrix,
    params: &ModelParams,
    config: &ModelConfig,
) -> Result<Output> {
    if !matches!(config.fusion, FusionMode::CrossAtt | FusionMode::Concat) {
        return Err(Error::InvalidArgument(format!(
            "fuse_and_classify needs cross_att or concat, got {}",
            config.fusion
        )));
    }
    if l.rows() == 0 || second.rows() == 0 || l.cols() != config.d || second.cols() != config.d {
        return Err(Error::DimensionMismatch(format!(
            "expected two non-empty inputs of width {}, got {:?} and {:?}",
            config.d,
            l.shape(),
            second.shape()
        )));
    }
    Ok(classify(params, &concat_rows(l.row(0), second.row(0))))
}

/// BiLSTM-attention baseline prediction for one sequence.
pub fn bilstm_att_forward(seq: &TokenSeq, params: &ModelParams) -> Result<Output> {
    let config = &params.config;
    check_ids(&seq.ids, config)?;
    let bilstm = params
        .bilstm
        .as_ref()
        .ok_or_else(|| missing("bilstm", config.fusion))?;
    let (pooled, _) = bilstm.forward(&seq.ids, 0.0, None);
    Ok(classify(params, &pooled))
}

enum Cache {
    Fused {
        text: TextCache,
        image: ImageCache,
        cross: Option<CrossCache>,
        h: Matrix,
    },
    Text {
        text: TextCache,
        h: Matrix,
    },
    Image {
        image: ImageCache,
        h: Matrix,
    },
    BiLstm {
        bilstm: BiLstmCache,
        h: Matrix,
    },
}

fn zero_pixels(config: &ModelConfig) -> PixelTensor {
    PixelTensor::zeros(config.image_size)
}

/// Full forward pass. Dropout is applied only when `rng` is given.
fn forward_cached(
    params: &ModelParams,
    features: &Features,
    mut rng: Option<&mut dyn RngCore>,
) -> Result<(Output, Cache)> {
    let config = &params.config;
    let p = config.dropout;
    let mode = config.fusion;
    if mode.uses_text() {
        check_ids(&features.ids, config)?;
    }
    let zeros;
    let pixels = if mode.uses_image() {
        let px = match &features.pixels {
            Some(px) => px,
            None => {
                zeros = zero_pixels(config);
                &zeros
            }
        };
        check_pixels(px, config)?;
        Some(px)
    } else {
        None
    };
    let text_enc = || params.text.as_ref().ok_or_else(|| missing("text encoder", mode));
    let image_enc = || params.image.as_ref().ok_or_else(|| missing("image encoder", mode));
    match mode {
        FusionMode::CrossAtt | FusionMode::Concat => {
            let (l, text) = text_enc()?.forward(&features.ids, p, reborrow(&mut rng));
            let (i, image) = image_enc()?.forward(pixels.expect("image mode"), p, reborrow(&mut rng));
            let (second, cross) = if mode == FusionMode::CrossAtt {
                let layer = params.cross.as_ref().ok_or_else(|| missing("cross-attention", mode))?;
                // Only the [CLS] query row reaches the classifier.
                let (c, cache) = layer.forward(&l.row_matrix(0), &i)?;
                (c, Some(cache))
            } else {
                (i.row_matrix(0), None)
            };
            let h = concat_rows(l.row(0), second.row(0));
            Ok((
                classify(params, &h),
                Cache::Fused {
                    text,
                    image,
                    cross,
                    h,
                },
            ))
        }
        FusionMode::TextOnly => {
            let (l, text) = text_enc()?.forward(&features.ids, p, rng);
            let h = l.row_matrix(0);
            Ok((classify(params, &h), Cache::Text { text, h }))
        }
        FusionMode::ImageOnly => {
            let (i, image) = image_enc()?.forward(pixels.expect("image mode"), p, rng);
            let h = i.row_matrix(0);
            Ok((classify(params, &h), Cache::Image { image, h }))
        }
        FusionMode::BilstmAtt => {
            let bilstm = params.bilstm.as_ref().ok_or_else(|| missing("bilstm", mode))?;
            let (h, cache) = bilstm.forward(&features.ids, p, rng);
            Ok((classify(params, &h), Cache::BiLstm { bilstm: cache, h }))
        }
    }
}

fn row_into(rows: usize, cols: usize, row0: &[f64]) -> Matrix {
    let mut m = Matrix::zeros(rows, cols);
    m.row_mut(0).copy_from_slice(row0);
    m
}

fn backward(params: &ModelParams, cache: &Cache, dlogits: [f64; 2], grad: &mut ModelParams) {
    let dz = Matrix::from_rows(&[dlogits]);
    let h = match cache {
        Cache::Fused { h, .. } | Cache::Text { h, .. } | Cache::Image { h, .. } | Cache::BiLstm { h, .. } => h,
    };
    let dh = params.classifier.backward(h, &dz, &mut grad.classifier);
    let dh = dh.row(0);
    let d = params.config.d;
    match cache {
        Cache::Fused {
            text, image, cross, ..
        } => {
            let text_enc = params.text.as_ref().expect("fused model has text");
            let image_enc = params.image.as_ref().expect("fused model has image");
            let m_l = text.len();
            let m_i = image.len();
            let mut dl = row_into(m_l, d, &dh[..d]);
            let di = match cross {
                Some(cc) => {
                    let layer = params.cross.as_ref().expect("cross model has weights");
                    let gcross = grad.cross.as_mut().expect("cross gradient slot");
                    let dc = Matrix::from_rows(&[&dh[d..]]);
                    let (dl0, di) = layer.backward(cc, &dc, gcross);
                    crate::model::matrix::axpy(dl.row_mut(0), 1.0, dl0.row(0));
                    di
                }
                None => row_into(m_i, d, &dh[d..]),
            };
            text_enc.backward(text, &dl, grad.text.as_mut().expect("text gradient slot"));
            image_enc.backward(image, &di, grad.image.as_mut().expect("image gradient slot"));
        }
        Cache::Text { text, .. } => {
            let dl = row_into(text.len(), d, dh);
            params
                .text
                .as_ref()
                .expect("text model")
                .backward(text, &dl, grad.text.as_mut().expect("text gradient slot"));
        }
        Cache::Image { image, .. } => {
            let di = row_into(image.len(), d, dh);
            params
                .image
                .as_ref()
                .expect("image model")
                .backward(image, &di, grad.image.as_mut().expect("image gradient slot"));
        }
        Cache::BiLstm { bilstm, .. } => {
            let dp = Matrix::from_rows(&[dh]);
            params
                .bilstm
                .as_ref()
                .expect("bilstm model")
                .backward(bilstm, &dp, grad.bilstm.as_mut().expect("bilstm gradient slot"));
        }
    }
}

/// Evaluation-mode prediction (no dropout).
pub fn predict(params: &ModelParams, features: &Features) -> Result<Output> {
    forward_cached(params, features, None).map(|(out, _)| out)
}

/// Class-weighted cross-entropy: mean over the batch of `-w_y log p_y`.
pub fn batch_loss(params: &ModelParams, batch: &[Example], class_weights: [f64; 2]) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::InvalidArgument("batch must be non-empty".into()));
    }
    let mut total = 0.0;
    for ex in batch {
        let out = predict(params, &ex.features)?;
        total -= class_weights[ex.label.index()] * out.log_prob(ex.label);
    }
    let loss = total / batch.len() as f64;
    if !loss.is_finite() {
        return Err(Error::NonFiniteLoss(format!("evaluation loss is {loss}")));
    }
    Ok(loss)
}

/// Loss and parameter gradients for one batch. `rng` enables dropout.
pub fn forward_backward(
    params: &ModelParams,
    batch: &[Example],
    class_weights: [f64; 2],
    mut rng: Option<&mut dyn RngCore>,
) -> Result<(f64, ModelParams)> {
    if batch.is_empty() {
        return Err(Error::InvalidArgument("batch must be non-empty".into()));
    }
    let n = batch.len() as f64;
    let mut grad = params.zeros_like();
    let mut total = 0.0;
    for ex in batch {
        let (out, cache) = forward_cached(params, &ex.features, reborrow(&mut rng))?;
        let y = ex.label.index();
        let w = class_weights[y];
        total -= w * out.log_prob(ex.label);
        let mut dlogits = [w * out.probs[0] / n, w * out.probs[1] / n];
        dlogits[y] -= w / n;
        backward(params, &cache, dlogits, &mut grad);
    }
    let loss = total / n;
    if !loss.is_finite() {
        return Err(Error::NonFiniteLoss(format!("training loss is {loss}")));
    }
    Ok((loss, grad))
}
