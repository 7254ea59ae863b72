//! Helpers shared by the integration test targets.

#![allow(dead_code)]

use crosscue::model::{forward_backward, Example, Features, FusionMode, ModelConfig, ModelParams};
use crosscue::preprocess::PixelTensor;
use crosscue::Label;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FD_STEP: f64 = 1e-5;
pub const GRAD_REL_TOL: f64 = 1e-4;
/// Denominator floor for relative errors, below which differences are
/// compared on an absolute scale.
pub const GRAD_REL_FLOOR: f64 = 1e-7;

/// d=4, one layer, m_L=3, m_I=5 (4x4 image in 2x2 patches plus [CLS]).
pub fn micro_config(fusion: FusionMode) -> ModelConfig {
    ModelConfig {
        d: 4,
        layers: 1,
        heads: 2,
        ff_dim: 8,
        patch_size: 2,
        image_size: 4,
        max_seq_len: 3,
        dropout: 0.0,
        fusion,
        vocab_size: 7,
        bilstm_embed_dim: 4,
        bilstm_hidden: 4,
        bilstm_max_len: 3,
    }
}

pub fn micro_batch() -> Vec<Example> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut pixels = || {
        let mut px = PixelTensor::zeros(4);
        px.data.iter_mut().for_each(|v| *v = rng.gen_range(0.0..1.0));
        px
    };
    vec![
        Example {
            features: Features {
                ids: vec![0, 4, 6],
                pixels: Some(pixels()),
            },
            label: Label::Commercial,
        },
        Example {
            features: Features {
                ids: vec![0, 5, 3],
                pixels: Some(pixels()),
            },
            label: Label::NonCommercial,
        },
        Example {
            features: Features {
                ids: vec![0, 6, 1],
                pixels: Some(pixels()),
            },
            label: Label::NonCommercial,
        },
    ]
}

pub struct GradReport {
    pub max_rel_error: f64,
    pub worst: String,
    pub checked: usize,
}

/// Compare analytic gradients with central differences on every parameter.
pub fn gradient_check(fusion: FusionMode) -> GradReport {
    let params = ModelParams::init(&micro_config(fusion), 0).unwrap();
    let batch = micro_batch();
    let weights = [0.8, 1.3];
    let (_, grad) = forward_backward(&params, &batch, weights, None).unwrap();
    let analytic = grad.flat_values();
    let names: Vec<(String, usize)> = params
        .tensors()
        .iter()
        .map(|(n, m)| (n.clone(), m.len()))
        .collect();
    let base = params.flat_values();
    let mut probe = params.clone();
    let mut loss_at = |values: &[f64]| {
        probe.set_flat_values(values).unwrap();
        forward_backward(&probe, &batch, weights, None).unwrap().0
    };
    let mut report = GradReport {
        max_rel_error: 0.0,
        worst: String::new(),
        checked: 0,
    };
    let mut k = 0;
    let mut values = base.clone();
    for (name, len) in names {
        for j in 0..len {
            values[k] = base[k] + FD_STEP;
            let up = loss_at(&values);
            values[k] = base[k] - FD_STEP;
            let down = loss_at(&values);
            values[k] = base[k];
            let numeric = (up - down) / (2.0 * FD_STEP);
            let a = analytic[k];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(GRAD_REL_FLOOR);
            if rel > report.max_rel_error {
                report.max_rel_error = rel;
                report.worst = format!("{name}[{j}] analytic {a:.3e} numeric {numeric:.3e}");
            }
            report.checked += 1;
            k += 1;
        }
    }
    report
}
