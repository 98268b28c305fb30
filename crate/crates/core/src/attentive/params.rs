//! Parameter storage. Encoder and head parameters each live in one flat
//! `Vec<f64>`; named tensors are fixed-offset slices, so optimizer steps,
//! gradient checks and serialization all work on plain slices.

use super::tokens::{ASSESSMENT_VOCAB, SECTION_VOCAB};
use crate::rng;
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct EncoderConfig {
    pub d_model: usize,
    pub heads: usize,
    pub layers: usize,
    pub d_ff: usize,
    pub max_len: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig { d_model: 64, heads: 4, layers: 2, d_ff: 256, max_len: 512 }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.d_model == 0 || self.heads == 0 || self.d_ff == 0 || self.max_len == 0 {
            return Err("d_model, heads, d_ff and max_len must be positive".into());
        }
        if self.d_model % self.heads != 0 {
            return Err(format!("d_model {} is not divisible by {} heads", self.d_model, self.heads));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.heads
    }
}

/// Offsets of one encoder layer's tensors.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerOffsets {
    pub wq: usize,
    pub bq: usize,
    pub wk: usize,
    pub bk: usize,
    pub wv: usize,
    pub bv: usize,
    pub wo: usize,
    pub bo: usize,
    pub ln1_gain: usize,
    pub ln1_bias: usize,
    pub w1: usize,
    pub b1: usize,
    pub w2: usize,
    pub b2: usize,
    pub ln2_gain: usize,
    pub ln2_bias: usize,
}

/// Tensor layout of the encoder. Order (also the on-disk order):
/// question, section, correctness, timeliness and position embeddings, then per
/// layer `wq bq wk bk wv bv wo bo ln1.gain ln1.bias w1 b1 w2 b2 ln2.gain ln2.bias`.
/// Matrices are row-major `[in x out]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    pub question_emb: usize,
    pub section_emb: usize,
    pub correctness_emb: usize,
    pub timeliness_emb: usize,
    pub position_emb: usize,
    pub layers: Vec<LayerOffsets>,
    pub total: usize,
    /// `(name, offset, rows, cols)` for every tensor, in storage order.
    pub tensors: Vec<(String, usize, usize, usize)>,
}

impl Layout {
    pub fn new(cfg: &EncoderConfig, vocab_size: usize) -> Layout {
        let d = cfg.d_model;
        let mut tensors = Vec::new();
        let mut at = 0usize;
        let mut push = |name: String, rows: usize, cols: usize| {
            let o = at;
            tensors.push((name, o, rows, cols));
            at += rows * cols;
            o
        };
        let question_emb = push("emb.question".into(), vocab_size, d);
        let section_emb = push("emb.section".into(), SECTION_VOCAB, d);
        let correctness_emb = push("emb.correctness".into(), ASSESSMENT_VOCAB, d);
        let timeliness_emb = push("emb.timeliness".into(), ASSESSMENT_VOCAB, d);
        let position_emb = push("emb.position".into(), cfg.max_len, d);
        let mut layers = Vec::with_capacity(cfg.layers);
        for l in 0..cfg.layers {
            let mut t = |n: &str, r, c| push(format!("layer{l}.{n}"), r, c);
            layers.push(LayerOffsets {
                wq: t("wq", d, d),
                bq: t("bq", 1, d),
                wk: t("wk", d, d),
                bk: t("bk", 1, d),
                wv: t("wv", d, d),
                bv: t("bv", 1, d),
                wo: t("wo", d, d),
                bo: t("bo", 1, d),
                ln1_gain: t("ln1.gain", 1, d),
                ln1_bias: t("ln1.bias", 1, d),
                w1: t("w1", d, cfg.d_ff),
                b1: t("b1", 1, cfg.d_ff),
                w2: t("w2", cfg.d_ff, d),
                b2: t("b2", 1, d),
                ln2_gain: t("ln2.gain", 1, d),
                ln2_bias: t("ln2.bias", 1, d),
            });
        }
        Layout {
            question_emb,
            section_emb,
            correctness_emb,
            timeliness_emb,
            position_emb,
            layers,
            total: at,
            tensors,
        }
    }
}

/// Encoder weights plus their layout.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    pub cfg: EncoderConfig,
    pub vocab_size: usize,
    pub layout: Layout,
    pub data: Vec<f64>,
}

fn uniform(rng: &mut rng::Rng, out: &mut [f64], bound: f64) {
    for v in out {
        *v = rng.random_range(-bound..=bound);
    }
}

impl EncoderParams {
    pub fn zeros(cfg: EncoderConfig, vocab_size: usize) -> Self {
        let layout = Layout::new(&cfg, vocab_size);
        EncoderParams { cfg, vocab_size, data: vec![0.0; layout.total], layout }
    }

    /// Embeddings uniform in `±0.1`, projection and feed-forward weights
    /// Glorot-uniform, biases zero, layer-norm gains one.
    pub fn init(cfg: EncoderConfig, vocab_size: usize, seed: u64) -> Self {
        let mut p = EncoderParams::zeros(cfg, vocab_size);
        let mut rng = rng::rng(seed);
        let tensors = p.layout.tensors.clone();
        for (name, off, rows, cols) in tensors {
            let t = &mut p.data[off..off + rows * cols];
            if name.starts_with("emb.") {
                uniform(&mut rng, t, 0.1);
            } else if name.ends_with(".gain") {
                t.fill(1.0);
            } else if rows > 1 {
                uniform(&mut rng, t, (6.0 / (rows + cols) as f64).sqrt());
            }
        }
        p
    }

    pub fn tensor(&self, off: usize, len: usize) -> &[f64] {
        &self.data[off..off + len]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum HeadKind {
    /// Per-position logits for (correctness, timeliness).
    Pretrain,
    /// Mean-pooled scalar score on the `[0, 1]` scale.
    Score,
}

impl HeadKind {
    pub fn outputs(self) -> usize {
        match self {
            HeadKind::Pretrain => 2,
            HeadKind::Score => 1,
        }
    }
}

/// Output layer: `[d_model x outputs]` weights followed by `outputs` biases.
#[derive(Debug, Clone, PartialEq)]
pub struct Head {
    pub kind: HeadKind,
    pub d_model: usize,
    pub data: Vec<f64>,
}

impl Head {
    pub fn init(kind: HeadKind, d_model: usize, seed: u64) -> Self {
        let out = kind.outputs();
        let mut data = vec![0.0; d_model * out + out];
        let mut rng = rng::rng(seed);
        let bound = match kind {
            // keeps initial logits near zero (chance-level loss)
            HeadKind::Pretrain => 0.02,
            HeadKind::Score => (6.0 / (d_model + 1) as f64).sqrt() * 0.1,
        };
        uniform(&mut rng, &mut data[..d_model * out], bound);
        if kind == HeadKind::Score {
            data[d_model] = 0.5;
        }
        Head { kind, d_model, data }
    }

    pub fn outputs(&self) -> usize {
        self.kind.outputs()
    }

    pub fn weights(&self) -> &[f64] {
        &self.data[..self.d_model * self.outputs()]
    }

    pub fn bias(&self) -> &[f64] {
        &self.data[self.d_model * self.outputs()..]
    }
}
