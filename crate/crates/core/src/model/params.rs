//! Model configuration, parameter container and binary checkpoints.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::bilstm::BiLstmAtt;
use super::encoder::{ImageEncoder, TextEncoder};
use super::fusion::CrossAttention;
use super::layers::{Linear, Params};
use super::matrix::Matrix;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FusionMode {
    CrossAtt,
    Concat,
    TextOnly,
    ImageOnly,
    BilstmAtt,
}

impl FusionMode {
    pub const ALL: [FusionMode; 5] = [
        FusionMode::CrossAtt,
        FusionMode::Concat,
        FusionMode::TextOnly,
        FusionMode::ImageOnly,
        FusionMode::BilstmAtt,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FusionMode::CrossAtt => "cross_att",
            FusionMode::Concat => "concat",
            FusionMode::TextOnly => "text_only",
            FusionMode::ImageOnly => "image_only",
            FusionMode::BilstmAtt => "bilstm_att",
        }
    }

    pub fn uses_text(self) -> bool {
        self != FusionMode::ImageOnly
    }

    pub fn uses_image(self) -> bool {
        matches!(
            self,
            FusionMode::CrossAtt | FusionMode::Concat | FusionMode::ImageOnly
        )
    }
}

impl fmt::Display for FusionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FusionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        FusionMode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| {
                Error::InvalidArgument(format!(
                    "unknown fusion mode {s:?}; expected one of cross_att, concat, text_only, image_only, bilstm_att"
                ))
            })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub d: usize,
    pub layers: usize,
    pub heads: usize,
    /// Hidden width of the transformer feed-forward sublayer.
    pub ff_dim: usize,
    pub patch_size: usize,
    pub image_size: usize,
    pub max_seq_len: usize,
    pub dropout: f64,
    pub fusion: FusionMode,
    pub vocab_size: usize,
    pub bilstm_embed_dim: usize,
    pub bilstm_hidden: usize,
    pub bilstm_max_len: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            d: 32,
            layers: 2,
            heads: 2,
            ff_dim: 64,
            patch_size: 8,
            image_size: 32,
            max_seq_len: 128,
            dropout: 0.05,
            fusion: FusionMode::CrossAtt,
            vocab_size: 0,
            bilstm_embed_dim: 200,
            bilstm_hidden: 32,
            bilstm_max_len: 50,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.vocab_size == 0 {
            return bad("vocab_size must be positive".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout must lie in [0, 1), got {}", self.dropout));
        }
        if self.fusion == FusionMode::BilstmAtt {
            if self.bilstm_embed_dim == 0 || self.bilstm_hidden == 0 || self.bilstm_max_len == 0 {
                return bad("bilstm dimensions must be positive".into());
            }
            return Ok(());
        }
        if self.d == 0 || self.heads == 0 || self.d % self.heads != 0 {
            return bad(format!(
                "d ({}) must be a positive multiple of heads ({})",
                self.d, self.heads
            ));
        }
        if self.ff_dim == 0 || self.max_seq_len == 0 {
            return bad("ff_dim and max_seq_len must be positive".into());
        }
        if self.fusion.uses_image()
            && (self.patch_size == 0 || self.image_size % self.patch_size != 0)
        {
            return bad(format!(
                "image_size ({}) must be divisible by patch_size ({})",
                self.image_size, self.patch_size
            ));
        }
        Ok(())
    }

    /// Image sequence length including the [CLS] row.
    pub fn image_seq_len(&self) -> usize {
        (self.image_size / self.patch_size).pow(2) + 1
    }

    /// Maximum token count (with [CLS]) fed to the configured text encoder.
    pub fn text_len_limit(&self) -> usize {
        if self.fusion == FusionMode::BilstmAtt {
            self.bilstm_max_len
        } else {
            self.max_seq_len
        }
    }

    fn classifier_input(&self) -> usize {
        match self.fusion {
            FusionMode::CrossAtt | FusionMode::Concat => 2 * self.d,
            FusionMode::TextOnly | FusionMode::ImageOnly => self.d,
            FusionMode::BilstmAtt => 2 * self.bilstm_hidden,
        }
    }
}

/// All weights for one configured model. Components not used by the fusion
/// mode are absent. The same type doubles as the gradient buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub config: ModelConfig,
    pub text: Option<TextEncoder>,
    pub image: Option<ImageEncoder>,
    pub cross: Option<CrossAttention>,
    pub bilstm: Option<BiLstmAtt>,
    /// `2 x classifier_input`.
    pub classifier: Linear,
}

impl ModelParams {
    pub fn init(config: &ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c = config;
        let mode = c.fusion;
        let text = (mode.uses_text() && mode != FusionMode::BilstmAtt).then(|| {
            TextEncoder::init(&mut rng, c.vocab_size, c.d, c.layers, c.heads, c.ff_dim)
        });
        let image = mode.uses_image().then(|| {
            ImageEncoder::init(
                &mut rng,
                c.image_size,
                c.patch_size,
                c.d,
                c.layers,
                c.heads,
                c.ff_dim,
            )
        });
        let cross = (mode == FusionMode::CrossAtt).then(|| CrossAttention::init(&mut rng, c.d));
        let bilstm = (mode == FusionMode::BilstmAtt).then(|| {
            BiLstmAtt::init(&mut rng, c.vocab_size, c.bilstm_embed_dim, c.bilstm_hidden)
        });
        let classifier = Linear::init(&mut rng, c.classifier_input(), 2);
        Ok(ModelParams {
            config: config.clone(),
            text,
            image,
            cross,
            bilstm,
            classifier,
        })
    }

    /// Same structure with every value zero.
    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for (_, m) in z.tensors_mut() {
            m.fill(0.0);
        }
        z
    }

    pub fn tensors(&self) -> Vec<(String, &Matrix)> {
        let mut out = Vec::new();
        self.visit("", &mut out);
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<(String, &mut Matrix)> {
        let mut out = Vec::new();
        self.visit_mut("", &mut out);
        out
    }

    pub fn num_values(&self) -> usize {
        self.tensors().iter().map(|(_, m)| m.len()).sum()
    }

    pub fn flat_values(&self) -> Vec<f64> {
        self.tensors()
            .into_iter()
            .flat_map(|(_, m)| m.as_slice().to_vec())
            .collect()
    }

    pub fn set_flat_values(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.num_values() {
            return Err(Error::DimensionMismatch(format!(
                "expected {} values, got {}",
                self.num_values(),
                values.len()
            )));
        }
        let mut offset = 0;
        for (_, m) in self.tensors_mut() {
            let n = m.len();
            m.as_mut_slice().copy_from_slice(&values[offset..offset + n]);
            offset += n;
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|(_, m)| m.is_finite())
    }

    pub fn to_checkpoint_bytes(&self) -> Result<Vec<u8>> {
        let header = serde_json::to_vec(&self.config)?;
        let tensors = self.tensors();
        let mut out = Vec::with_capacity(16 + header.len() + 8 * self.num_values());
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        out.extend_from_slice(&(tensors.len() as u64).to_le_bytes());
        for (name, m) in tensors {
            out.extend_from_slice(&(name.len() as u64).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(m.rows() as u64).to_le_bytes());
            out.extend_from_slice(&(m.cols() as u64).to_le_bytes());
            for v in m.as_slice() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    /// Parses a checkpoint. With `expected` set, a differing stored config is
    /// rejected.
    pub fn from_checkpoint_bytes(bytes: &[u8], expected: Option<&ModelConfig>) -> Result<Self> {
        let mut r = bytes;
        let mut magic = [0u8; 8];
        read_exact(&mut r, &mut magic)?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(Error::Checkpoint("not a crosscue checkpoint".into()));
        }
        let header_len = read_u64(&mut r)? as usize;
        let header = take(&mut r, header_len)?;
        let config: ModelConfig = serde_json::from_slice(header)?;
        if let Some(expected) = expected {
            if expected != &config {
                return Err(Error::Checkpoint(format!(
                    "config mismatch: checkpoint has {}, expected {}",
                    serde_json::to_string(&config)?,
                    serde_json::to_string(expected)?
                )));
            }
        }
        let mut blocks = BTreeMap::new();
        let count = read_u64(&mut r)?;
        for _ in 0..count {
            let name_len = read_u64(&mut r)? as usize;
            let name = std::str::from_utf8(take(&mut r, name_len)?)
                .map_err(|_| Error::Checkpoint("tensor name is not UTF-8".into()))?
                .to_owned();
            let rows = read_u64(&mut r)? as usize;
            let cols = read_u64(&mut r)? as usize;
            let raw = take(&mut r, rows * cols * 8)?;
            let data = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
                .collect();
            blocks.insert(name, Matrix::from_vec(rows, cols, data)?);
        }
        if !r.is_empty() {
            return Err(Error::Checkpoint("trailing bytes after last tensor".into()));
        }
        let mut params = ModelParams::init(&config, 0)?;
        let expected_count = params.tensors().len();
        for (name, slot) in params.tensors_mut() {
            let m = blocks
                .remove(&name)
                .ok_or_else(|| Error::Checkpoint(format!("missing tensor {name}")))?;
            if m.shape() != slot.shape() {
                return Err(Error::Checkpoint(format!(
                    "tensor {name} has shape {:?}, expected {:?}",
                    m.shape(),
                    slot.shape()
                )));
            }
            *slot = m;
        }
        if let Some(extra) = blocks.keys().next() {
            return Err(Error::Checkpoint(format!(
                "unexpected tensor {extra} (model has {expected_count})"
            )));
        }
        Ok(params)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let bytes = self.to_checkpoint_bytes()?;
        std::fs::File::create(path)
            .and_then(|mut f| f.write_all(&bytes))
            .map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>, expected: Option<&ModelConfig>) -> Result<Self> {
        let path = path.as_ref();
        let mut bytes = Vec::new();
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| Error::io(path, e))?;
        Self::from_checkpoint_bytes(&bytes, expected)
    }
}

impl Params for ModelParams {
    fn visit<'a>(&'a self, _prefix: &str, out: &mut Vec<(String, &'a Matrix)>) {
        if let Some(t) = &self.text {
            t.visit("text", out);
        }
        if let Some(i) = &self.image {
            i.visit("image", out);
        }
        if let Some(c) = &self.cross {
            c.visit("cross", out);
        }
        if let Some(b) = &self.bilstm {
            b.visit("bilstm", out);
        }
        self.classifier.visit("classifier", out);
    }
    fn visit_mut<'a>(&'a mut self, _prefix: &str, out: &mut Vec<(String, &'a mut Matrix)>) {
        if let Some(t) = &mut self.text {
            t.visit_mut("text", out);
        }
        if let Some(i) = &mut self.image {
            i.visit_mut("image", out);
        }
        if let Some(c) = &mut self.cross {
            c.visit_mut("cross", out);
        }
        if let Some(b) = &mut self.bilstm {
            b.visit_mut("bilstm", out);
        }
        self.classifier.visit_mut("classifier", out);
    }
}

const CHECKPOINT_MAGIC: &[u8; 8] = b"XCUECKP1";

fn truncated() -> Error {
    Error::Checkpoint("truncated checkpoint".into())
}

fn read_exact(r: &mut &[u8], buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf).map_err(|_| truncated())
}

fn read_u64(r: &mut &[u8]) -> Result<u64> {
    let mut b = [0u8; 8];
    read_exact(r, &mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn take<'a>(r: &mut &'a [u8], n: usize) -> Result<&'a [u8]> {
    if r.len() < n {
        return Err(truncated());
    }
    let (head, tail) = r.split_at(n);
    *r = tail;
    Ok(head)
}
