//! Manual backward pass through the encoder.
//!
//! `backward_into` takes the gradient of a loss with respect to one text's
//! tri-modal outputs and accumulates exact parameter gradients. Summing the
//! calls over a batch yields the gradient of the summed batch loss.

use ndarray::{s, Array1, Array2, Axis};

use super::forward::{gelu_prime, ForwardCache, LnCache};
use super::{EncoderParams, GradientSet, MultiRepresentation};

/// Gradient of a loss with respect to one [`MultiRepresentation`].
#[derive(Debug, Clone)]
pub struct ReprGrad {
    pub d_dense: Array1<f64>,
    pub d_lexical: Vec<f64>,
    pub d_multi: Array2<f64>,
}

impl ReprGrad {
    pub fn zeros_like(repr: &MultiRepresentation) -> Self {
        Self {
            d_dense: Array1::zeros(repr.dense.len()),
            d_lexical: vec![0.0; repr.lexical_weights.len()],
            d_multi: Array2::zeros(repr.multi_vectors.raw_dim()),
        }
    }
}

/// Row-wise layer-norm backward; returns the input gradient and accumulates
/// gain/bias gradients.
fn layer_norm_backward(
    g_y: &Array2<f64>,
    cache: &LnCache,
    gain: &Array1<f64>,
    g_gain: &mut Array1<f64>,
    g_bias: &mut Array1<f64>,
) -> Array2<f64> {
    let d = g_y.ncols();
    let mut g_x = Array2::zeros(g_y.raw_dim());
    for r in 0..g_y.nrows() {
        let istd = cache.inv_std[r];
        let mut mean_ghat = 0.0;
        let mut mean_ghat_xhat = 0.0;
        for c in 0..d {
            let gy = g_y[[r, c]];
            let xhat = cache.xhat[[r, c]];
            let ghat = gy * gain[c];
            mean_ghat += ghat;
            mean_ghat_xhat += ghat * xhat;
            g_gain[c] += gy * xhat;
            g_bias[c] += gy;
        }
        mean_ghat /= d as f64;
        mean_ghat_xhat /= d as f64;
        for c in 0..d {
            let ghat = g_y[[r, c]] * gain[c];
            g_x[[r, c]] = istd * (ghat - mean_ghat - cache.xhat[[r, c]] * mean_ghat_xhat);
        }
    }
    g_x
}

/// Row-wise softmax backward given the probabilities and output gradient.
fn softmax_backward(probs: &Array2<f64>, g_out: &Array2<f64>) -> Array2<f64> {
    let mut g_in = Array2::zeros(probs.raw_dim());
    for r in 0..probs.nrows() {
        let a = probs.row(r);
        let ga = g_out.row(r);
        let dot = ga.dot(&a);
        for c in 0..probs.ncols() {
            g_in[[r, c]] = a[c] * (ga[c] - dot);
        }
    }
    g_in
}

fn column_sums(m: &Array2<f64>) -> Array1<f64> {
    m.sum_axis(Axis(0))
}

/// Accumulate the parameter gradients of one encoded text into `grads`.
pub fn backward_into(
    params: &EncoderParams,
    cache: &ForwardCache,
    grad: &ReprGrad,
    grads: &mut GradientSet,
) {
    let cfg = &params.config;
    let d = cfg.dim;
    let heads = cfg.heads;
    let hd = cfg.head_dim();
    let scale = 1.0 / (hd as f64).sqrt();
    let n = cache.ids.len();
    let n_tokens = n - 1;

    // Heads -> gradient on the final hidden states.
    let mut g_hidden: Array2<f64> = Array2::zeros((n, d));

    // Dense: u = h0 / |h0|.
    {
        let u = cache.hidden.row(0).mapv(|v| v / cache.cls_norm);
        let gdot = grad.d_dense.dot(&u);
        for c in 0..d {
            g_hidden[[0, c]] += (grad.d_dense[c] - gdot * u[c]) / cache.cls_norm;
        }
    }

    // Lexical: w_t = relu(w_lex . h_t).
    for t in 0..n_tokens {
        let g = grad.d_lexical[t];
        if g != 0.0 && cache.lex_preact[t] > 0.0 {
            for c in 0..d {
                grads.tensors.w_lex[c] += g * cache.hidden[[t + 1, c]];
                g_hidden[[t + 1, c]] += g * params.tensors.w_lex[c];
            }
        }
    }

    // Multi-vector: e_t = v_t / |v_t| with v_t = W_col^T h_t.
    for t in 0..n_tokens {
        let norm = cache.col_norms[t];
        let v = cache.col_proj.row(t);
        let ge = grad.d_multi.row(t);
        let e = v.mapv(|x| x / norm);
        let gdot = ge.dot(&e);
        let gv = Array1::from_iter((0..d).map(|c| (ge[c] - gdot * e[c]) / norm));
        for b in 0..d {
            let h_b = cache.hidden[[t + 1, b]];
            let mut acc = 0.0;
            for a in 0..d {
                grads.tensors.w_col[[b, a]] += h_b * gv[a];
                acc += params.tensors.w_col[[b, a]] * gv[a];
            }
            g_hidden[[t + 1, b]] += acc;
        }
    }

    // Closing layer norm.
    let mut g_x = layer_norm_backward(
        &g_hidden,
        &cache.final_ln,
        &params.tensors.final_ln_gain,
        &mut grads.tensors.final_ln_gain,
        &mut grads.tensors.final_ln_bias,
    );

    // Blocks in reverse.
    for (l, lc) in cache.layers.iter().enumerate().rev() {
        let lp = &params.tensors.layers[l];
        let lg = &mut grads.tensors.layers[l];

        // x2 = x1 + gelu(y2 W1 + b1) W2 + b2
        let g_ff_out = &g_x;
        lg.w_ff2 = &lg.w_ff2 + &lc.ff_act.t().dot(g_ff_out);
        lg.b_ff2 = &lg.b_ff2 + &column_sums(g_ff_out);
        let g_act = g_ff_out.dot(&lp.w_ff2.t());
        let mut g_pre = g_act;
        g_pre.zip_mut_with(&lc.ff_pre, |g, &z| *g *= gelu_prime(z));
        lg.w_ff1 = &lg.w_ff1 + &lc.y2.t().dot(&g_pre);
        lg.b_ff1 = &lg.b_ff1 + &column_sums(&g_pre);
        let g_y2 = g_pre.dot(&lp.w_ff1.t());
        let g_x1_ffn =
            layer_norm_backward(&g_y2, &lc.ln2, &lp.ln2_gain, &mut lg.ln2_gain, &mut lg.ln2_bias);
        let g_x1 = &g_x + &g_x1_ffn;

        // x1 = x0 + concat(heads) W_o
        lg.w_o = &lg.w_o + &lc.concat.t().dot(&g_x1);
        let g_concat = g_x1.dot(&lp.w_o.t());

        let mut g_q = Array2::zeros((n, d));
        let mut g_k = Array2::zeros((n, d));
        let mut g_v = Array2::zeros((n, d));
        for h in 0..heads {
            let cols = s![.., h * hd..(h + 1) * hd];
            let g_oh = g_concat.slice(cols);
            let a = &lc.attn[h];
            let vh = lc.v.slice(cols);
            let qh = lc.q.slice(cols);
            let kh = lc.k.slice(cols);

            let g_a = g_oh.dot(&vh.t());
            let g_vh = a.t().dot(&g_oh);
            let mut g_s = softmax_backward(a, &g_a);
            g_s.mapv_inplace(|x| x * scale);
            let g_qh = g_s.dot(&kh);
            let g_kh = g_s.t().dot(&qh);

            g_q.slice_mut(cols).assign(&g_qh);
            g_k.slice_mut(cols).assign(&g_kh);
            g_v.slice_mut(cols).assign(&g_vh);
        }

        lg.w_q = &lg.w_q + &lc.y1.t().dot(&g_q);
        lg.w_k = &lg.w_k + &lc.y1.t().dot(&g_k);
        lg.w_v = &lg.w_v + &lc.y1.t().dot(&g_v);
        let g_y1 = g_q.dot(&lp.w_q.t()) + g_k.dot(&lp.w_k.t()) + g_v.dot(&lp.w_v.t());
        let g_x0_attn =
            layer_norm_backward(&g_y1, &lc.ln1, &lp.ln1_gain, &mut lg.ln1_gain, &mut lg.ln1_bias);
        g_x = &g_x1 + &g_x0_attn;
    }

    // Embedding tables.
    for (pos, &id) in cache.ids.iter().enumerate() {
        for c in 0..d {
            grads.tensors.token_embed[[id as usize, c]] += g_x[[pos, c]];
            grads.tensors.pos_embed[[pos, c]] += g_x[[pos, c]];
        }
    }
}
