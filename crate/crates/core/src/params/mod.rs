//! Trainable and frozen model tensors.
//!
//! Every diagonal matrix is stored as its diagonal. Values are kept on the
//! `f32` grid: initialization and optimizer updates round to `f32`, so a
//! checkpoint written as 32-bit floats reloads bit-for-bit.

mod checkpoint;

use std::fmt;
use std::str::FromStr;

use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;

use crate::config::KeyValues;
use crate::corpus::Embeddings;
use crate::error::{Error, Result};

pub use checkpoint::{
    load_checkpoint, load_checkpoint_expecting, read_checkpoint, save_checkpoint, save_checkpoint_with, CHECKPOINT_MAGIC,
    CHECKPOINT_VERSION,
};

/// How relation weights are normalized.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Softmax over relations for each mention pair.
    RelNorm,
    /// Softmax over the other mentions (plus a padding mention) for each
    /// mention and relation.
    MentNorm,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::RelNorm => "rel-norm",
            Mode::MentNorm => "ment-norm",
        })
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "rel-norm" => Ok(Mode::RelNorm),
            "ment-norm" => Ok(Mode::MentNorm),
            other => Err(format!("unknown mode {other:?} (expected rel-norm or ment-norm)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub dim: usize,
    pub relations: usize,
    pub mode: Mode,
    /// Hidden width of the final mixing network.
    pub hidden: usize,
    /// Local-score context, tokens per side.
    pub local_window: usize,
    /// Context words kept by the local hard attention.
    pub local_keep: usize,
    /// Context for relation features, tokens per side.
    pub pair_window: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self { dim: 300, relations: 3, mode: Mode::MentNorm, hidden: 100, local_window: 50, local_keep: 25, pair_window: 6 }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::Config("dim must be positive".into()));
        }
        if self.relations == 0 {
            return Err(Error::Config("relations must be positive".into()));
        }
        if self.hidden == 0 {
            return Err(Error::Config("hidden must be positive".into()));
        }
        if self.local_keep == 0 {
            return Err(Error::Config("local_keep must be positive".into()));
        }
        Ok(())
    }

    pub(crate) fn apply(&mut self, kv: &KeyValues, key: &str, value: &str) -> Result<bool> {
        match key {
            "dim" => self.dim = kv.parse(key, value)?,
            "relations" => self.relations = kv.parse(key, value)?,
            "mode" => self.mode = kv.parse(key, value)?,
            "hidden" => self.hidden = kv.parse(key, value)?,
            "local_window" => self.local_window = kv.parse(key, value)?,
            "local_keep" => self.local_keep = kv.parse(key, value)?,
            "pair_window" => self.pair_window = kv.parse(key, value)?,
            _ => return Ok(false),
        }
        Ok(true)
    }

    pub fn to_key_values(&self) -> KeyValues {
        let mut kv = KeyValues::default();
        kv.set("dim", self.dim);
        kv.set("relations", self.relations);
        kv.set("mode", self.mode);
        kv.set("hidden", self.hidden);
        kv.set("local_window", self.local_window);
        kv.set("local_keep", self.local_keep);
        kv.set("pair_window", self.pair_window);
        kv
    }

    /// Number of trainable scalars.
    pub fn param_count(&self) -> usize {
        let (d, k, h) = (self.dim, self.relations, self.hidden);
        let pads = if self.mode == Mode::MentNorm { 2 * d } else { 0 };
        2 * d + 2 * k * d + (2 * d * d + d) + (2 * h + h + h + 1) + pads
    }
}

/// Dense tensor, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Self {
        Self { shape: shape.to_vec(), data: vec![0.0; shape.iter().product()] }
    }

    pub fn filled(shape: &[usize], value: f64) -> Self {
        Self { shape: shape.to_vec(), data: vec![value; shape.iter().product()] }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Row `i` of a matrix.
    pub fn row(&self, i: usize) -> &[f64] {
        let w = self.shape[1..].iter().product::<usize>();
        &self.data[i * w..(i + 1) * w]
    }

    pub fn round_to_f32(&mut self) {
        self.data.iter_mut().for_each(|x| *x = *x as f32 as f64);
    }
}

/// Names of the trainable groups, in checkpoint and optimizer order.
pub const GROUP_NAMES: [&str; 12] = [
    "local_attn",
    "local_out",
    "rel",
    "rel_attn",
    "ctx_w",
    "ctx_b",
    "mix_w1",
    "mix_b1",
    "mix_w2",
    "mix_b2",
    "pad_feature",
    "pad_entity",
];

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub config: ModelConfig,
    pub seed: u64,
    /// Frozen word vectors.
    pub words: Embeddings,
    /// Frozen entity vectors.
    pub entities: Embeddings,
    /// diag(A): local attention, `d`.
    pub local_attn: Tensor,
    /// diag(B): local score, `d`.
    pub local_out: Tensor,
    /// diag(R_k): relation embeddings, `K × d`.
    pub rel: Tensor,
    /// diag(D_k): relation attention, `K × d`.
    pub rel_attn: Tensor,
    /// Context mapping `tanh(W [left; right] + b)`, `d × 2d`.
    pub ctx_w: Tensor,
    pub ctx_b: Tensor,
    /// Mixing network `2 → h → 1`: `h × 2`.
    pub mix_w1: Tensor,
    pub mix_b1: Tensor,
    /// `h`.
    pub mix_w2: Tensor,
    /// `1`.
    pub mix_b2: Tensor,
    /// Padding mention feature (ment-norm only, empty otherwise).
    pub pad_feature: Tensor,
    /// Padding entity embedding (ment-norm only, empty otherwise).
    pub pad_entity: Tensor,
}

impl ModelParams {
    /// Allocates zeroed tensors with the shapes `config` implies.
    pub fn zeros(config: &ModelConfig, words: Embeddings, entities: Embeddings) -> Self {
        let (d, k, h) = (config.dim, config.relations, config.hidden);
        let pad = if config.mode == Mode::MentNorm { d } else { 0 };
        Self {
            config: config.clone(),
            seed: 0,
            words,
            entities,
            local_attn: Tensor::zeros(&[d]),
            local_out: Tensor::zeros(&[d]),
            rel: Tensor::zeros(&[k, d]),
            rel_attn: Tensor::zeros(&[k, d]),
            ctx_w: Tensor::zeros(&[d, 2 * d]),
            ctx_b: Tensor::zeros(&[d]),
            mix_w1: Tensor::zeros(&[h, 2]),
            mix_b1: Tensor::zeros(&[h]),
            mix_w2: Tensor::zeros(&[h]),
            mix_b2: Tensor::zeros(&[1]),
            pad_feature: Tensor::zeros(&[pad]),
            pad_entity: Tensor::zeros(&[pad]),
        }
    }

    pub fn groups(&self) -> [(&'static str, &Tensor); 12] {
        [
            (GROUP_NAMES[0], &self.local_attn),
            (GROUP_NAMES[1], &self.local_out),
            (GROUP_NAMES[2], &self.rel),
            (GROUP_NAMES[3], &self.rel_attn),
            (GROUP_NAMES[4], &self.ctx_w),
            (GROUP_NAMES[5], &self.ctx_b),
            (GROUP_NAMES[6], &self.mix_w1),
            (GROUP_NAMES[7], &self.mix_b1),
            (GROUP_NAMES[8], &self.mix_w2),
            (GROUP_NAMES[9], &self.mix_b2),
            (GROUP_NAMES[10], &self.pad_feature),
            (GROUP_NAMES[11], &self.pad_entity),
        ]
    }

    pub fn groups_mut(&mut self) -> [(&'static str, &mut Tensor); 12] {
        [
            (GROUP_NAMES[0], &mut self.local_attn),
            (GROUP_NAMES[1], &mut self.local_out),
            (GROUP_NAMES[2], &mut self.rel),
            (GROUP_NAMES[3], &mut self.rel_attn),
            (GROUP_NAMES[4], &mut self.ctx_w),
            (GROUP_NAMES[5], &mut self.ctx_b),
            (GROUP_NAMES[6], &mut self.mix_w1),
            (GROUP_NAMES[7], &mut self.mix_b1),
            (GROUP_NAMES[8], &mut self.mix_w2),
            (GROUP_NAMES[9], &mut self.mix_b2),
            (GROUP_NAMES[10], &mut self.pad_feature),
            (GROUP_NAMES[11], &mut self.pad_entity),
        ]
    }

    pub fn param_count(&self) -> usize {
        self.groups().iter().map(|(_, t)| t.len()).sum()
    }

    pub fn round_to_f32(&mut self) {
        for (_, t) in self.groups_mut() {
            t.round_to_f32();
        }
    }
}

fn fill_normal(rng: &mut ChaCha8Rng, t: &mut Tensor, mean: f64, std: f64) {
    let dist = Normal::new(mean, std).expect("finite std");
    t.data.iter_mut().for_each(|x| *x = dist.sample(rng));
}

fn fill_glorot(rng: &mut ChaCha8Rng, t: &mut Tensor, fan_in: usize, fan_out: usize) {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let dist = Uniform::new_inclusive(-limit, limit);
    t.data.iter_mut().for_each(|x| *x = dist.sample(rng));
}

/// Standard deviation of every normal initializer.
pub const INIT_STD: f64 = 0.1;

/// Fresh parameters. Relation diagonals and paddings are drawn from
/// `N(0, 0.1²)`, except `diag(R_1) ~ N(1, 0.1²)` under ment-norm; network
/// weights are Glorot-uniform with zero biases; local diagonals start at 1.
pub fn init_params(config: &ModelConfig, seed: u64, words: Embeddings, entities: Embeddings) -> Result<ModelParams> {
    config.validate()?;
    for (what, table) in [("word", &words), ("entity", &entities)] {
        if !table.is_empty() && table.dim() != config.dim {
            return Err(Error::Config(format!("{what} embeddings have dim {}, model expects {}", table.dim(), config.dim)));
        }
    }
    let (d, h) = (config.dim, config.hidden);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = ModelParams::zeros(config, words, entities);
    p.seed = seed;

    p.local_attn = Tensor::filled(&[d], 1.0);
    p.local_out = Tensor::filled(&[d], 1.0);
    fill_normal(&mut rng, &mut p.rel, 0.0, INIT_STD);
    if config.mode == Mode::MentNorm {
        let first = Normal::new(1.0, INIT_STD).expect("finite std");
        p.rel.data[..d].iter_mut().for_each(|x| *x = first.sample(&mut rng));
    }
    fill_normal(&mut rng, &mut p.rel_attn, 0.0, INIT_STD);
    fill_glorot(&mut rng, &mut p.ctx_w, 2 * d, d);
    fill_glorot(&mut rng, &mut p.mix_w1, 2, h);
    fill_glorot(&mut rng, &mut p.mix_w2, h, 1);
    fill_normal(&mut rng, &mut p.pad_feature, 0.0, INIT_STD);
    fill_normal(&mut rng, &mut p.pad_entity, 0.0, INIT_STD);
    p.round_to_f32();
    Ok(p)
}
