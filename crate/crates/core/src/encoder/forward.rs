//! Encoder forward pass with cached intermediates for backprop.

use ndarray::{s, Array1, Array2, Axis};

use super::{EncoderParams, LayerTensors, MultiRepresentation, LN_EPS};
use crate::error::CoreError;
use crate::vocab::{TokenSeq, CLS_ID};

/// Cached row-normalization statistics of one layer-norm application.
#[derive(Debug, Clone)]
pub(crate) struct LnCache {
    pub xhat: Array2<f64>,
    pub inv_std: Vec<f64>,
}

#[derive(Debug, Clone)]
pub(crate) struct LayerCache {
    pub ln1: LnCache,
    pub y1: Array2<f64>,
    pub q: Array2<f64>,
    pub k: Array2<f64>,
    pub v: Array2<f64>,
    /// Per-head attention probabilities, each n x n.
    pub attn: Vec<Array2<f64>>,
    /// Concatenated head outputs before the output projection.
    pub concat: Array2<f64>,
    pub ln2: LnCache,
    pub y2: Array2<f64>,
    pub ff_pre: Array2<f64>,
    pub ff_act: Array2<f64>,
}

/// Everything the backward pass needs from one forward evaluation.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// Token ids with CLS prepended.
    pub(crate) ids: Vec<u32>,
    pub(crate) layers: Vec<LayerCache>,
    pub(crate) final_ln: LnCache,
    /// Final hidden states after the closing layer norm, one row per position.
    pub(crate) hidden: Array2<f64>,
    pub(crate) cls_norm: f64,
    /// Pre-ReLU lexical projections, one per real token.
    pub(crate) lex_preact: Vec<f64>,
    /// Pre-normalization multi-vector projections, one row per real token.
    pub(crate) col_proj: Array2<f64>,
    pub(crate) col_norms: Vec<f64>,
}

pub(crate) fn layer_norm(x: &Array2<f64>, gain: &Array1<f64>, bias: &Array1<f64>) -> (Array2<f64>, LnCache) {
    let d = x.ncols();
    let mut xhat = Array2::zeros(x.raw_dim());
    let mut out = Array2::zeros(x.raw_dim());
    let mut inv_std = Vec::with_capacity(x.nrows());
    for (r, row) in x.axis_iter(Axis(0)).enumerate() {
        let mean = row.sum() / d as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
        let istd = 1.0 / (var + LN_EPS).sqrt();
        inv_std.push(istd);
        for c in 0..d {
            let h = (row[c] - mean) * istd;
            xhat[[r, c]] = h;
            out[[r, c]] = gain[c] * h + bias[c];
        }
    }
    (out, LnCache { xhat, inv_std })
}

pub(crate) fn gelu(z: f64) -> f64 {
    // tanh approximation; smooth everywhere, which keeps finite-difference
    // probes of the backward pass clean
    const C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
    0.5 * z * (1.0 + (C * (z + 0.044715 * z * z * z)).tanh())
}

pub(crate) fn gelu_prime(z: f64) -> f64 {
    const C: f64 = 0.797_884_560_802_865_4;
    let u = C * (z + 0.044715 * z * z * z);
    let t = u.tanh();
    0.5 * (1.0 + t) + 0.5 * z * (1.0 - t * t) * C * (1.0 + 3.0 * 0.044715 * z * z)
}

fn softmax_rows(scores: &mut Array2<f64>) {
    for mut row in scores.axis_iter_mut(Axis(0)) {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
}

fn attention(params: &LayerTensors, y: &Array2<f64>, heads: usize) -> (Array2<f64>, Array2<f64>, Array2<f64>, Vec<Array2<f64>>, Array2<f64>) {
    let n = y.nrows();
    let d = y.ncols();
    let hd = d / heads;
    let scale = 1.0 / (hd as f64).sqrt();

    let q = y.dot(&params.w_q);
    let k = y.dot(&params.w_k);
    let v = y.dot(&params.w_v);

    let mut concat = Array2::zeros((n, d));
    let mut attn = Vec::with_capacity(heads);
    for h in 0..heads {
        let cols = s![.., h * hd..(h + 1) * hd];
        let qh = q.slice(cols);
        let kh = k.slice(cols);
        let vh = v.slice(cols);
        let mut scores = qh.dot(&kh.t());
        scores.mapv_inplace(|x| x * scale);
        softmax_rows(&mut scores);
        let oh = scores.dot(&vh);
        concat.slice_mut(cols).assign(&oh);
        attn.push(scores);
    }
    (q, k, v, attn, concat)
}

/// Run the encoder over `seq`, keeping every intermediate needed by
/// [`backward_into`](super::backward_into).
pub fn encode_with_cache(
    params: &EncoderParams,
    seq: &TokenSeq,
) -> Result<(MultiRepresentation, ForwardCache), CoreError> {
    let cfg = &params.config;
    let d = cfg.dim;
    let n_tokens = seq.len();
    if n_tokens + 1 > cfg.max_seq_len {
        return Err(CoreError::SequenceTooLong {
            len: n_tokens,
            max: cfg.max_seq_len,
        });
    }
    let mut ids = Vec::with_capacity(n_tokens + 1);
    ids.push(CLS_ID);
    for &id in &seq.ids {
        if id as usize >= cfg.vocab_size {
            return Err(CoreError::DimensionMismatch(format!(
                "token id {id} outside vocab of size {}",
                cfg.vocab_size
            )));
        }
        ids.push(id);
    }
    let n = ids.len();

    // Embedding sum: token row + position row.
    let mut x = Array2::zeros((n, d));
    for (pos, &id) in ids.iter().enumerate() {
        let tok = params.tensors.token_embed.row(id as usize);
        let pe = params.tensors.pos_embed.row(pos);
        for c in 0..d {
            x[[pos, c]] = tok[c] + pe[c];
        }
    }

    let mut layer_caches = Vec::with_capacity(cfg.layers);
    for lp in &params.tensors.layers {
        let (y1, ln1) = layer_norm(&x, &lp.ln1_gain, &lp.ln1_bias);
        let (q, k, v, attn, concat) = attention(lp, &y1, cfg.heads);
        let x1 = &x + &concat.dot(&lp.w_o);

        let (y2, ln2) = layer_norm(&x1, &lp.ln2_gain, &lp.ln2_bias);
        let ff_pre = y2.dot(&lp.w_ff1) + &lp.b_ff1;
        let ff_act = ff_pre.mapv(gelu);
        let x2 = &x1 + &(ff_act.dot(&lp.w_ff2) + &lp.b_ff2);

        layer_caches.push(LayerCache {
            ln1,
            y1,
            q,
            k,
            v,
            attn,
            concat,
            ln2,
            y2,
            ff_pre,
            ff_act,
        });
        x = x2;
    }

    let (hidden, final_ln) = layer_norm(
        &x,
        &params.tensors.final_ln_gain,
        &params.tensors.final_ln_bias,
    );

    // Dense head: normalized CLS state.
    let cls = hidden.row(0);
    let cls_norm = cls.dot(&cls).sqrt();
    if !cls_norm.is_finite() || cls_norm < 1e-300 {
        return Err(CoreError::NonFinite("dense head normalization".into()));
    }
    let dense = cls.mapv(|v| v / cls_norm);

    // Lexical head: ReLU(w_lex . h_t) per real token.
    let mut lex_preact = Vec::with_capacity(n_tokens);
    let mut lexical_weights = Vec::with_capacity(n_tokens);
    for t in 1..n {
        let pre = hidden.row(t).dot(&params.tensors.w_lex);
        lex_preact.push(pre);
        lexical_weights.push(pre.max(0.0));
    }

    // Multi-vector head: normalize(W_col^T h_t) per real token.
    let mut col_proj = Array2::zeros((n_tokens, d));
    let mut multi_vectors = Array2::zeros((n_tokens, d));
    let mut col_norms = Vec::with_capacity(n_tokens);
    for t in 1..n {
        let v = hidden.row(t).dot(&params.tensors.w_col);
        let norm = v.dot(&v).sqrt();
        if !norm.is_finite() || norm < 1e-300 {
            return Err(CoreError::NonFinite("multi-vector normalization".into()));
        }
        col_proj.row_mut(t - 1).assign(&v);
        multi_vectors.row_mut(t - 1).assign(&v.mapv(|x| x / norm));
        col_norms.push(norm);
    }

    if dense.iter().any(|v| !v.is_finite())
        || lexical_weights.iter().any(|v| !v.is_finite())
        || multi_vectors.iter().any(|v| !v.is_finite())
    {
        return Err(CoreError::NonFinite("encoder outputs".into()));
    }

    let repr = MultiRepresentation {
        dense,
        lexical_weights,
        multi_vectors,
        tokens: seq.tokens.clone(),
    };
    let cache = ForwardCache {
        ids,
        layers: layer_caches,
        final_ln,
        hidden,
        cls_norm,
        lex_preact,
        col_proj,
        col_norms,
    };
    Ok((repr, cache))
}

/// Run the encoder over `seq` without keeping backward state.
pub fn encode(params: &EncoderParams, seq: &TokenSeq) -> Result<MultiRepresentation, CoreError> {
    encode_with_cache(params, seq).map(|(repr, _)| repr)
}
