//! The trainable encoder: a minimal pre-norm transformer with three
//! representation heads (dense CLS vector, per-token lexical weights,
//! per-token projected multi-vectors).
//!
//! All math is 64-bit. Forward and backward passes are hand-written; the
//! backward pass is validated against central finite differences by the
//! `gradcheck` module.

mod backward;
mod forward;

pub use backward::{backward_into, ReprGrad};
pub use forward::{encode, encode_with_cache, ForwardCache};

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::CoreError;

/// Epsilon inside layer-norm variance.
pub(crate) const LN_EPS: f64 = 1e-9;

/// Shape-and-seed description of an encoder.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct EncoderConfig {
    /// Embedding dimension d.
    pub dim: usize,
    /// Transformer block count.
    pub layers: usize,
    /// Attention head count; must divide `dim`.
    pub heads: usize,
    /// Maximum sequence length including the prepended CLS position.
    pub max_seq_len: usize,
    /// Vocabulary size including reserved ids.
    pub vocab_size: usize,
    /// Seed for parameter initialization.
    pub seed: u64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            dim: 64,
            layers: 2,
            heads: 2,
            max_seq_len: 128,
            vocab_size: 0,
            seed: 0,
        }
    }
}

impl EncoderConfig {
    /// Feed-forward inner dimension (fixed 4x expansion).
    pub fn ff_dim(&self) -> usize {
        4 * self.dim
    }

    pub fn head_dim(&self) -> usize {
        self.dim / self.heads
    }

    pub fn validate(&self) -> Result<(), CoreError> {
        if self.dim == 0 || self.layers == 0 || self.heads == 0 || self.vocab_size == 0 {
            return Err(CoreError::InvalidConfig(
                "dim, layers, heads and vocab_size must all be >= 1".into(),
            ));
        }
        if self.dim % self.heads != 0 {
            return Err(CoreError::InvalidConfig(format!(
                "dim {} not divisible by head count {}",
                self.dim, self.heads
            )));
        }
        if self.max_seq_len < 2 {
            return Err(CoreError::InvalidConfig(
                "max_seq_len must be >= 2 (CLS plus at least one token)".into(),
            ));
        }
        Ok(())
    }
}

/// Learnable tensors of one transformer block.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerTensors {
    pub w_q: Array2<f64>,
    pub w_k: Array2<f64>,
    pub w_v: Array2<f64>,
    pub w_o: Array2<f64>,
    pub ln1_gain: Array1<f64>,
    pub ln1_bias: Array1<f64>,
    pub ln2_gain: Array1<f64>,
    pub ln2_bias: Array1<f64>,
    pub w_ff1: Array2<f64>,
    pub b_ff1: Array1<f64>,
    pub w_ff2: Array2<f64>,
    pub b_ff2: Array1<f64>,
}

/// Every learnable tensor of the encoder, shared between parameters and
/// gradients so flat-view utilities exist once.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorSet {
    pub token_embed: Array2<f64>,
    pub pos_embed: Array2<f64>,
    pub layers: Vec<LayerTensors>,
    pub final_ln_gain: Array1<f64>,
    pub final_ln_bias: Array1<f64>,
    /// Lexical projection vector; per-token weight = ReLU(w_lex . h).
    pub w_lex: Array1<f64>,
    /// Multi-vector projection; per-token vector = normalize(W_col^T h).
    pub w_col: Array2<f64>,
}

impl TensorSet {
    pub fn zeros(config: &EncoderConfig) -> Self {
        let d = config.dim;
        let ff = config.ff_dim();
        let layer = || LayerTensors {
            w_q: Array2::zeros((d, d)),
            w_k: Array2::zeros((d, d)),
            w_v: Array2::zeros((d, d)),
            w_o: Array2::zeros((d, d)),
            ln1_gain: Array1::zeros(d),
            ln1_bias: Array1::zeros(d),
            ln2_gain: Array1::zeros(d),
            ln2_bias: Array1::zeros(d),
            w_ff1: Array2::zeros((d, ff)),
            b_ff1: Array1::zeros(ff),
            w_ff2: Array2::zeros((ff, d)),
            b_ff2: Array1::zeros(d),
        };
        Self {
            token_embed: Array2::zeros((config.vocab_size, d)),
            pos_embed: Array2::zeros((config.max_seq_len, d)),
            layers: (0..config.layers).map(|_| layer()).collect(),
            final_ln_gain: Array1::zeros(d),
            final_ln_bias: Array1::zeros(d),
            w_lex: Array1::zeros(d),
            w_col: Array2::zeros((d, d)),
        }
    }

    /// Named views of every tensor: `(name, shape, row-major data)`.
    pub fn named_tensors(&self) -> Vec<(String, Vec<usize>, &[f64])> {
        fn one(v: &Array1<f64>) -> (Vec<usize>, &[f64]) {
            (vec![v.len()], v.as_slice().expect("contiguous"))
        }
        fn two(m: &Array2<f64>) -> (Vec<usize>, &[f64]) {
            (m.shape().to_vec(), m.as_slice().expect("contiguous"))
        }
        let mut out: Vec<(String, Vec<usize>, &[f64])> = Vec::new();
        macro_rules! push {
            ($name:expr, $view:expr) => {{
                let (shape, data) = $view;
                out.push(($name.into(), shape, data));
            }};
        }
        push!("token_embed", two(&self.token_embed));
        push!("pos_embed", two(&self.pos_embed));
        for (i, l) in self.layers.iter().enumerate() {
            push!(format!("layer{i}.w_q"), two(&l.w_q));
            push!(format!("layer{i}.w_k"), two(&l.w_k));
            push!(format!("layer{i}.w_v"), two(&l.w_v));
            push!(format!("layer{i}.w_o"), two(&l.w_o));
            push!(format!("layer{i}.ln1_gain"), one(&l.ln1_gain));
            push!(format!("layer{i}.ln1_bias"), one(&l.ln1_bias));
            push!(format!("layer{i}.ln2_gain"), one(&l.ln2_gain));
            push!(format!("layer{i}.ln2_bias"), one(&l.ln2_bias));
            push!(format!("layer{i}.w_ff1"), two(&l.w_ff1));
            push!(format!("layer{i}.b_ff1"), one(&l.b_ff1));
            push!(format!("layer{i}.w_ff2"), two(&l.w_ff2));
            push!(format!("layer{i}.b_ff2"), one(&l.b_ff2));
        }
        push!("final_ln_gain", one(&self.final_ln_gain));
        push!("final_ln_bias", one(&self.final_ln_bias));
        push!("w_lex", one(&self.w_lex));
        push!("w_col", two(&self.w_col));
        out
    }

    /// Mutable named views, same order as [`named_tensors`](Self::named_tensors).
    pub fn named_tensors_mut(&mut self) -> Vec<(String, &mut [f64])> {
        let mut out: Vec<(String, &mut [f64])> = Vec::new();
        out.push((
            "token_embed".into(),
            self.token_embed.as_slice_mut().expect("contiguous"),
        ));
        out.push((
            "pos_embed".into(),
            self.pos_embed.as_slice_mut().expect("contiguous"),
        ));
        for (i, l) in self.layers.iter_mut().enumerate() {
            out.push((format!("layer{i}.w_q"), l.w_q.as_slice_mut().unwrap()));
            out.push((format!("layer{i}.w_k"), l.w_k.as_slice_mut().unwrap()));
            out.push((format!("layer{i}.w_v"), l.w_v.as_slice_mut().unwrap()));
            out.push((format!("layer{i}.w_o"), l.w_o.as_slice_mut().unwrap()));
            out.push((format!("layer{i}.ln1_gain"), l.ln1_gain.as_slice_mut().unwrap()));
            out.push((format!("layer{i}.ln1_bias"), l.ln1_bias.as_slice_mut().unwrap()));
            out.push((format!("layer{i}.ln2_gain"), l.ln2_gain.as_slice_mut().unwrap()));
            out.push((format!("layer{i}.ln2_bias"), l.ln2_bias.as_slice_mut().unwrap()));
            out.push((format!("layer{i}.w_ff1"), l.w_ff1.as_slice_mut().unwrap()));
            out.push((format!("layer{i}.b_ff1"), l.b_ff1.as_slice_mut().unwrap()));
            out.push((format!("layer{i}.w_ff2"), l.w_ff2.as_slice_mut().unwrap()));
            out.push((format!("layer{i}.b_ff2"), l.b_ff2.as_slice_mut().unwrap()));
        }
        out.push((
            "final_ln_gain".into(),
            self.final_ln_gain.as_slice_mut().unwrap(),
        ));
        out.push((
            "final_ln_bias".into(),
            self.final_ln_bias.as_slice_mut().unwrap(),
        ));
        out.push(("w_lex".into(), self.w_lex.as_slice_mut().unwrap()));
        out.push(("w_col".into(), self.w_col.as_slice_mut().unwrap()));
        out
    }

    /// Total scalar parameter count.
    pub fn param_count(&self) -> usize {
        self.named_tensors().iter().map(|(_, _, d)| d.len()).sum()
    }

    /// Global L2 norm over every tensor.
    pub fn global_norm(&self) -> f64 {
        self.named_tensors()
            .iter()
            .flat_map(|(_, _, d)| d.iter())
            .map(|x| x * x)
            .sum::<f64>()
            .sqrt()
    }

    /// Multiply every entry by `c`.
    pub fn scale(&mut self, c: f64) {
        for (_, data) in self.named_tensors_mut() {
            for x in data {
                *x *= c;
            }
        }
    }

    /// `self += alpha * other`, tensor by tensor.
    pub fn axpy(&mut self, alpha: f64, other: &TensorSet) {
        let others = other.named_tensors();
        for ((_, data), (_, _, src)) in self.named_tensors_mut().into_iter().zip(others) {
            debug_assert_eq!(data.len(), src.len());
            for (x, y) in data.iter_mut().zip(src) {
                *x += alpha * y;
            }
        }
    }

    /// First tensor containing a non-finite entry, if any.
    pub fn find_non_finite(&self) -> Option<String> {
        self.named_tensors()
            .into_iter()
            .find(|(_, _, d)| d.iter().any(|x| !x.is_finite()))
            .map(|(name, _, _)| name)
    }
}

/// All learnable encoder state.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    pub config: EncoderConfig,
    pub tensors: TensorSet,
}

impl EncoderParams {
    /// Initialize deterministically from `config.seed`.
    ///
    /// Weight matrices and embeddings are uniform in +-1/sqrt(d); layer-norm
    /// gains start at 1, every bias at 0.
    pub fn init(config: &EncoderConfig) -> Result<Self, CoreError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let bound = 1.0 / (config.dim as f64).sqrt();
        let mut tensors = TensorSet::zeros(config);
        for (name, data) in tensors.named_tensors_mut() {
            if name.ends_with("gain") {
                data.fill(1.0);
            } else if name.ends_with("bias") || name.starts_with("b_") || name.contains(".b_") {
                data.fill(0.0);
            } else {
                for x in data {
                    *x = rng.random_range(-bound..bound);
                }
            }
        }
        Ok(Self {
            config: config.clone(),
            tensors,
        })
    }
}

/// Gradients with the exact shapes of [`EncoderParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet {
    pub tensors: TensorSet,
}

impl GradientSet {
    pub fn zeros(config: &EncoderConfig) -> Self {
        Self {
            tensors: TensorSet::zeros(config),
        }
    }

    pub fn global_norm(&self) -> f64 {
        self.tensors.global_norm()
    }

    /// Error naming the first tensor holding a non-finite gradient.
    pub fn check_finite(&self) -> Result<(), CoreError> {
        match self.tensors.find_non_finite() {
            Some(name) => Err(CoreError::NonFinite(format!("gradient tensor {name}"))),
            None => Ok(()),
        }
    }
}

/// One text's tri-modal representation.
///
/// `dense` is the normalized CLS hidden state; `lexical_weights[t]` is the
/// non-negative learned importance of token `t`; `multi_vectors` holds one
/// unit row per token. Token strings ride along for sparse-overlap matching.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiRepresentation {
    pub dense: Array1<f64>,
    pub lexical_weights: Vec<f64>,
    pub multi_vectors: Array2<f64>,
    pub tokens: Vec<String>,
}

impl MultiRepresentation {
    /// Token count N (CLS excluded).
    pub fn token_count(&self) -> usize {
        self.tokens.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(dim: usize, vocab: usize) -> EncoderConfig {
        EncoderConfig {
            dim,
            layers: 1,
            heads: 2,
            max_seq_len: 16,
            vocab_size: vocab,
            seed: 7,
        }
    }

    #[test]
    fn init_is_deterministic_for_same_seed() {
        let cfg = config(4, 10);
        let a = EncoderParams::init(&cfg).unwrap();
        let b = EncoderParams::init(&cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn init_differs_across_seeds() {
        let mut cfg = config(4, 10);
        let a = EncoderParams::init(&cfg).unwrap();
        cfg.seed = 8;
        let b = EncoderParams::init(&cfg).unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn embedding_table_shape_follows_config() {
        let cfg = config(4, 10);
        let params = EncoderParams::init(&cfg).unwrap();
        assert_eq!(params.tensors.token_embed.shape(), &[10, 4]);
    }

    #[test]
    fn init_rejects_bad_shapes() {
        let mut cfg = config(4, 10);
        cfg.heads = 3; // does not divide 4
        assert!(EncoderParams::init(&cfg).is_err());
        let mut cfg = config(4, 10);
        cfg.max_seq_len = 1;
        assert!(EncoderParams::init(&cfg).is_err());
        let mut cfg = config(4, 10);
        cfg.vocab_size = 0;
        assert!(EncoderParams::init(&cfg).is_err());
    }

    #[test]
    fn init_bounds_and_defaults() {
        let cfg = config(16, 20);
        let params = EncoderParams::init(&cfg).unwrap();
        let bound = 1.0 / 4.0;
        for x in params.tensors.token_embed.iter() {
            assert!(x.abs() <= bound);
        }
        assert!(params.tensors.layers[0].ln1_gain.iter().all(|&g| g == 1.0));
        assert!(params.tensors.layers[0].b_ff1.iter().all(|&b| b == 0.0));
    }

    #[test]
    fn flat_views_cover_every_tensor() {
        let cfg = config(4, 10);
        let params = EncoderParams::init(&cfg).unwrap();
        let named = params.tensors.named_tensors();
        let total: usize = named.iter().map(|(_, _, d)| d.len()).sum();
        assert_eq!(total, params.tensors.param_count());
        // layer tensors present with per-layer prefixes
        assert!(named.iter().any(|(n, _, _)| n == "layer0.w_q"));
        assert!(named.iter().any(|(n, _, _)| n == "w_col"));
    }

    #[test]
    fn axpy_and_norm_are_consistent() {
        let cfg = config(4, 10);
        let params = EncoderParams::init(&cfg).unwrap();
        let mut acc = TensorSet::zeros(&cfg);
        acc.axpy(2.0, &params.tensors);
        let direct = params.tensors.global_norm() * 2.0;
        assert!((acc.global_norm() - direct).abs() < 1e-12);
    }
}
