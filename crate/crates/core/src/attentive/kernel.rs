//! Encoder forward pass with cached activations and the matching hand-written
//! backward pass.
//!
//! Layers are post-norm: `Z = LN(X + MHA(X))`, `X' = LN(Z + FFN(Z))`, with a
//! tanh-approximated GELU in the feed-forward block. Keys at padding positions
//! are skipped entirely, so real positions never read padding content.

use super::params::{EncoderParams, LayerOffsets};
use super::tokens::TokenizedSequence;
use super::AttentiveError;

/// Layer-norm variance floor.
pub const LN_EPS: f64 = 1e-9;

const GELU_K: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)
const GELU_C: f64 = 0.044_715;

/// `out[n x m] += a[n x k] * b[k x m]`
pub(crate) fn matmul(a: &[f64], b: &[f64], n: usize, k: usize, m: usize, out: &mut [f64]) {
    for i in 0..n {
        let o = &mut out[i * m..(i + 1) * m];
        for (p, &av) in a[i * k..(i + 1) * k].iter().enumerate() {
            if av != 0.0 {
                for (ov, bv) in o.iter_mut().zip(&b[p * m..(p + 1) * m]) {
                    *ov += av * bv;
                }
            }
        }
    }
}

/// `out[k x m] += a[n x k]^T * b[n x m]`
pub(crate) fn matmul_at_b(a: &[f64], b: &[f64], n: usize, k: usize, m: usize, out: &mut [f64]) {
    for i in 0..n {
        let brow = &b[i * m..(i + 1) * m];
        for (p, &av) in a[i * k..(i + 1) * k].iter().enumerate() {
            if av != 0.0 {
                for (ov, bv) in out[p * m..(p + 1) * m].iter_mut().zip(brow) {
                    *ov += av * bv;
                }
            }
        }
    }
}

/// `out[n x k] += a[n x m] * b[k x m]^T`
pub(crate) fn matmul_a_bt(a: &[f64], b: &[f64], n: usize, m: usize, k: usize, out: &mut [f64]) {
    for i in 0..n {
        let arow = &a[i * m..(i + 1) * m];
        for p in 0..k {
            out[i * k + p] += dot(arow, &b[p * m..(p + 1) * m]);
        }
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn add_bias(x: &mut [f64], bias: &[f64]) {
    for row in x.chunks_mut(bias.len()) {
        row.iter_mut().zip(bias).for_each(|(v, b)| *v += b);
    }
}

fn sum_rows(x: &[f64], out: &mut [f64]) {
    for row in x.chunks(out.len()) {
        out.iter_mut().zip(row).for_each(|(o, v)| *o += v);
    }
}

pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_K * (x + GELU_C * x * x * x)).tanh())
}

pub fn gelu_grad(x: f64) -> f64 {
    let t = (GELU_K * (x + GELU_C * x * x * x)).tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_K * (1.0 + 3.0 * GELU_C * x * x)
}

/// Normalize each `dim`-wide row to zero mean and unit variance (before gain
/// and bias). Returns the normalized rows and each row's `1 / sqrt(var + eps)`.
pub fn layer_norm(x: &[f64], dim: usize) -> (Vec<f64>, Vec<f64>) {
    let mut xhat = vec![0.0; x.len()];
    let mut inv_std = Vec::with_capacity(x.len() / dim);
    for (row, out) in x.chunks(dim).zip(xhat.chunks_mut(dim)) {
        let mean = row.iter().sum::<f64>() / dim as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / dim as f64;
        let is = 1.0 / (var + LN_EPS).sqrt();
        out.iter_mut().zip(row).for_each(|(o, v)| *o = (v - mean) * is);
        inv_std.push(is);
    }
    (xhat, inv_std)
}

/// Backward of `layer_norm`: maps the gradient w.r.t. the normalized rows to
/// the gradient w.r.t. the inputs.
fn layer_norm_backward(dxhat: &[f64], xhat: &[f64], inv_std: &[f64], dim: usize, out: &mut [f64]) {
    let n = dim as f64;
    for (r, &is) in inv_std.iter().enumerate() {
        let s = r * dim..(r + 1) * dim;
        let (g, h) = (&dxhat[s.clone()], &xhat[s.clone()]);
        let mean_g = g.iter().sum::<f64>() / n;
        let mean_gh = dot(g, h) / n;
        for ((o, gv), hv) in out[s].iter_mut().zip(g).zip(h) {
            *o += is * (gv - mean_g - hv * mean_gh);
        }
    }
}

/// Scaled dot-product attention weights for one head: row `i` is the softmax
/// of `q_i . k_j / sqrt(dim)` over positions `j` with `mask[j]` true; masked
/// columns get exactly zero weight.
pub fn attention_weights(
    q: &[f64],
    k: &[f64],
    mask: &[bool],
    dim: usize,
) -> Result<Vec<f64>, AttentiveError> {
    let t = mask.len();
    if !mask.iter().any(|m| *m) {
        return Err(AttentiveError::AllMasked);
    }
    let scale = 1.0 / (dim as f64).sqrt();
    let mut w = vec![0.0; t * t];
    for i in 0..t {
        let row = &mut w[i * t..(i + 1) * t];
        let qi = &q[i * dim..(i + 1) * dim];
        let mut max = f64::NEG_INFINITY;
        for j in (0..t).filter(|&j| mask[j]) {
            row[j] = scale * dot(qi, &k[j * dim..(j + 1) * dim]);
            max = max.max(row[j]);
        }
        let mut z = 0.0;
        for j in (0..t).filter(|&j| mask[j]) {
            row[j] = (row[j] - max).exp();
            z += row[j];
        }
        for j in (0..t).filter(|&j| mask[j]) {
            row[j] /= z;
        }
    }
    Ok(w)
}

/// Single-head attention over `position x dim` inputs. Returns the output rows
/// and the weight matrix.
pub fn attention(
    q: &[f64],
    k: &[f64],
    v: &[f64],
    mask: &[bool],
    dim: usize,
) -> Result<(Vec<f64>, Vec<f64>), AttentiveError> {
    let t = mask.len();
    let w = attention_weights(q, k, mask, dim)?;
    let mut out = vec![0.0; t * dim];
    matmul(&w, v, t, t, dim, &mut out);
    Ok((out, w))
}

/// Activations of one encoder layer kept for the backward pass.
#[derive(Debug, Clone)]
struct LayerCache {
    input: Vec<f64>,
    q: Vec<f64>,
    k: Vec<f64>,
    v: Vec<f64>,
    /// Per head, `t x t` attention weights.
    weights: Vec<Vec<f64>>,
    ctx: Vec<f64>,
    xhat1: Vec<f64>,
    inv_std1: Vec<f64>,
    z1: Vec<f64>,
    h1: Vec<f64>,
    g: Vec<f64>,
    xhat2: Vec<f64>,
    inv_std2: Vec<f64>,
}

/// Forward activations of a whole sequence.
#[derive(Debug, Clone)]
pub struct EncoderCache {
    pub len: usize,
    pub mask: Vec<bool>,
    tokens: Vec<super::tokens::Token>,
    layers: Vec<LayerCache>,
    /// Final hidden states, `len x d_model`.
    pub output: Vec<f64>,
}

fn check_input(seq: &TokenizedSequence, params: &EncoderParams) -> Result<(), AttentiveError> {
    if seq.is_empty() {
        return Err(AttentiveError::EmptySequence);
    }
    if seq.len() > params.cfg.max_len {
        return Err(AttentiveError::LengthOverflow { len: seq.len(), max_len: params.cfg.max_len });
    }
    seq.validate().map_err(AttentiveError::InvalidSequence)?;
    if let Some(t) = seq.tokens.iter().find(|t| t.question as usize >= params.vocab_size) {
        return Err(AttentiveError::VocabOverflow { token: t.question, vocab_size: params.vocab_size });
    }
    if seq.n_real() == 0 {
        return Err(AttentiveError::AllMasked);
    }
    Ok(())
}

/// Run the encoder and keep every activation needed by [`encoder_backward`].
pub fn encoder_forward(
    params: &EncoderParams,
    seq: &TokenizedSequence,
) -> Result<EncoderCache, AttentiveError> {
    check_input(seq, params)?;
    let cfg = &params.cfg;
    let (t, d, dff) = (seq.len(), cfg.d_model, cfg.d_ff);
    let lay = &params.layout;
    let w = &params.data;

    let mut x = vec![0.0; t * d];
    for (p, tok) in seq.tokens.iter().enumerate() {
        let row = &mut x[p * d..(p + 1) * d];
        let sources = [
            lay.question_emb + tok.question as usize * d,
            lay.section_emb + tok.section as usize * d,
            lay.correctness_emb + tok.correctness as usize * d,
            lay.timeliness_emb + tok.timeliness as usize * d,
            lay.position_emb + p * d,
        ];
        for s in sources {
            row.iter_mut().zip(&w[s..s + d]).for_each(|(r, e)| *r += e);
        }
    }

    let mut layers = Vec::with_capacity(cfg.layers);
    for o in &lay.layers {
        let (cache, out) = layer_forward(params, o, x, &seq.attention_mask, t, d, dff)?;
        layers.push(cache);
        x = out;
    }
    Ok(EncoderCache {
        len: t,
        mask: seq.attention_mask.clone(),
        tokens: seq.tokens.clone(),
        layers,
        output: x,
    })
}

fn layer_forward(
    params: &EncoderParams,
    o: &LayerOffsets,
    input: Vec<f64>,
    mask: &[bool],
    t: usize,
    d: usize,
    dff: usize,
) -> Result<(LayerCache, Vec<f64>), AttentiveError> {
    let w = &params.data;
    let heads = params.cfg.heads;
    let dh = params.cfg.head_dim();
    let proj = |wo: usize, bo: usize| {
        let mut out = vec![0.0; t * d];
        matmul(&input, &w[wo..wo + d * d], t, d, d, &mut out);
        add_bias(&mut out, &w[bo..bo + d]);
        out
    };
    let q = proj(o.wq, o.bq);
    let k = proj(o.wk, o.bk);
    let v = proj(o.wv, o.bv);

    let mut ctx = vec![0.0; t * d];
    let mut weights = Vec::with_capacity(heads);
    for h in 0..heads {
        let qh = head_slice(&q, t, d, h, dh);
        let kh = head_slice(&k, t, d, h, dh);
        let vh = head_slice(&v, t, d, h, dh);
        let (out, a) = attention(&qh, &kh, &vh, mask, dh)?;
        for p in 0..t {
            ctx[p * d + h * dh..p * d + (h + 1) * dh].copy_from_slice(&out[p * dh..(p + 1) * dh]);
        }
        weights.push(a);
    }

    let mut y1 = input.clone();
    matmul(&ctx, &w[o.wo..o.wo + d * d], t, d, d, &mut y1);
    add_bias(&mut y1, &w[o.bo..o.bo + d]);
    let (xhat1, inv_std1) = layer_norm(&y1, d);
    let z1 = affine(&xhat1, &w[o.ln1_gain..o.ln1_gain + d], &w[o.ln1_bias..o.ln1_bias + d]);

    let mut h1 = vec![0.0; t * dff];
    matmul(&z1, &w[o.w1..o.w1 + d * dff], t, d, dff, &mut h1);
    add_bias(&mut h1, &w[o.b1..o.b1 + dff]);
    let g: Vec<f64> = h1.iter().map(|&x| gelu(x)).collect();
    let mut y2 = z1.clone();
    matmul(&g, &w[o.w2..o.w2 + dff * d], t, dff, d, &mut y2);
    add_bias(&mut y2, &w[o.b2..o.b2 + d]);
    let (xhat2, inv_std2) = layer_norm(&y2, d);
    let out = affine(&xhat2, &w[o.ln2_gain..o.ln2_gain + d], &w[o.ln2_bias..o.ln2_bias + d]);

    Ok((LayerCache { input, q, k, v, weights, ctx, xhat1, inv_std1, z1, h1, g, xhat2, inv_std2 }, out))
}

fn affine(xhat: &[f64], gain: &[f64], bias: &[f64]) -> Vec<f64> {
    let mut out = xhat.to_vec();
    for row in out.chunks_mut(gain.len()) {
        for ((v, g), b) in row.iter_mut().zip(gain).zip(bias) {
            *v = *v * g + b;
        }
    }
    out
}

fn head_slice(x: &[f64], t: usize, d: usize, h: usize, dh: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(t * dh);
    for p in 0..t {
        out.extend_from_slice(&x[p * d + h * dh..p * d + (h + 1) * dh]);
    }
    out
}

/// Accumulate into `grad` (laid out like `params.data`) the gradient of a
/// loss whose gradient w.r.t. the encoder output is `d_output`.
pub fn encoder_backward(params: &EncoderParams, cache: &EncoderCache, d_output: &[f64], grad: &mut [f64]) {
    let cfg = &params.cfg;
    let (t, d) = (cache.len, cfg.d_model);
    let lay = &params.layout;
    let mut dx = d_output.to_vec();
    for (o, lc) in lay.layers.iter().zip(&cache.layers).rev() {
        dx = layer_backward(params, o, lc, &cache.mask, &dx, t, grad);
    }
    for (p, tok) in cache.tokens.iter().enumerate() {
        let row = &dx[p * d..(p + 1) * d];
        let targets = [
            lay.question_emb + tok.question as usize * d,
            lay.section_emb + tok.section as usize * d,
            lay.correctness_emb + tok.correctness as usize * d,
            lay.timeliness_emb + tok.timeliness as usize * d,
            lay.position_emb + p * d,
        ];
        for s in targets {
            grad[s..s + d].iter_mut().zip(row).for_each(|(g, v)| *g += v);
        }
    }
}

fn layer_backward(
    params: &EncoderParams,
    o: &LayerOffsets,
    c: &LayerCache,
    mask: &[bool],
    d_out: &[f64],
    t: usize,
    grad: &mut [f64],
) -> Vec<f64> {
    let w = &params.data;
    let (d, dff) = (params.cfg.d_model, params.cfg.d_ff);
    let (heads, dh) = (params.cfg.heads, params.cfg.head_dim());

    // second layer norm
    let mut dy2 = vec![0.0; t * d];
    ln_affine_backward(w, grad, o.ln2_gain, o.ln2_bias, d_out, &c.xhat2, &c.inv_std2, d, &mut dy2);

    // feed-forward; the residual branch passes dy2 straight to z1
    let mut dz1 = dy2.clone();
    matmul_at_b(&c.g, &dy2, t, dff, d, &mut grad[o.w2..o.w2 + dff * d]);
    sum_rows(&dy2, &mut grad[o.b2..o.b2 + d]);
    let mut dh1 = vec![0.0; t * dff];
    matmul_a_bt(&dy2, &w[o.w2..o.w2 + dff * d], t, d, dff, &mut dh1);
    dh1.iter_mut().zip(&c.h1).for_each(|(g, &x)| *g *= gelu_grad(x));
    matmul_at_b(&c.z1, &dh1, t, d, dff, &mut grad[o.w1..o.w1 + d * dff]);
    sum_rows(&dh1, &mut grad[o.b1..o.b1 + dff]);
    matmul_a_bt(&dh1, &w[o.w1..o.w1 + d * dff], t, dff, d, &mut dz1);

    // first layer norm
    let mut dy1 = vec![0.0; t * d];
    ln_affine_backward(w, grad, o.ln1_gain, o.ln1_bias, &dz1, &c.xhat1, &c.inv_std1, d, &mut dy1);

    // attention output projection; the residual passes dy1 to the input
    let mut dx = dy1.clone();
    matmul_at_b(&c.ctx, &dy1, t, d, d, &mut grad[o.wo..o.wo + d * d]);
    sum_rows(&dy1, &mut grad[o.bo..o.bo + d]);
    let mut dctx = vec![0.0; t * d];
    matmul_a_bt(&dy1, &w[o.wo..o.wo + d * d], t, d, d, &mut dctx);

    let mut dq = vec![0.0; t * d];
    let mut dk = vec![0.0; t * d];
    let mut dv = vec![0.0; t * d];
    let scale = 1.0 / (dh as f64).sqrt();
    for h in 0..heads {
        let a = &c.weights[h];
        let col = |p: usize| p * d + h * dh..p * d + (h + 1) * dh;
        for i in 0..t {
            let dci = &dctx[col(i)];
            let mut da = vec![0.0; t];
            let mut s = 0.0;
            for j in (0..t).filter(|&j| mask[j]) {
                let aij = a[i * t + j];
                da[j] = dot(dci, &c.v[col(j)]);
                s += aij * da[j];
                dv[col(j)].iter_mut().zip(dci).for_each(|(g, x)| *g += aij * x);
            }
            for j in (0..t).filter(|&j| mask[j]) {
                let ds = a[i * t + j] * (da[j] - s) * scale;
                if ds != 0.0 {
                    for e in 0..dh {
                        dq[i * d + h * dh + e] += ds * c.k[j * d + h * dh + e];
                        dk[j * d + h * dh + e] += ds * c.q[i * d + h * dh + e];
                    }
                }
            }
        }
    }

    for (dm, wo, bo) in [(&dq, o.wq, o.bq), (&dk, o.wk, o.bk), (&dv, o.wv, o.bv)] {
        matmul_at_b(&c.input, dm, t, d, d, &mut grad[wo..wo + d * d]);
        sum_rows(dm, &mut grad[bo..bo + d]);
        matmul_a_bt(dm, &w[wo..wo + d * d], t, d, d, &mut dx);
    }
    dx
}

/// Gain/bias gradients of `gain * xhat + bias` plus the input gradient of the
/// normalization, accumulated into `d_in`.
#[allow(clippy::too_many_arguments)]
fn ln_affine_backward(
    w: &[f64],
    grad: &mut [f64],
    gain: usize,
    bias: usize,
    d_out: &[f64],
    xhat: &[f64],
    inv_std: &[f64],
    d: usize,
    d_in: &mut [f64],
) {
    let mut dxhat = vec![0.0; d_out.len()];
    for ((r_out, r_hat), r_dx) in d_out.chunks(d).zip(xhat.chunks(d)).zip(dxhat.chunks_mut(d)) {
        for e in 0..d {
            grad[gain + e] += r_out[e] * r_hat[e];
            grad[bias + e] += r_out[e];
            r_dx[e] = r_out[e] * w[gain + e];
        }
    }
    layer_norm_backward(&dxhat, xhat, inv_std, d, d_in);
}

#[cfg(test)]
mod tests {
    use super::super::params::EncoderConfig;
    use super::super::tokens::{assessment, Token};
    use super::*;
    use crate::rng;
    use rand::Rng;

    fn tiny() -> EncoderParams {
        let cfg = EncoderConfig { d_model: 8, heads: 2, layers: 1, d_ff: 16, max_len: 8 };
        EncoderParams::init(cfg, 6, 5)
    }

    fn seq(n_real: usize, n_pad: usize) -> TokenizedSequence {
        let mut s = TokenizedSequence { tokens: vec![], attention_mask: vec![] };
        for p in 0..n_real {
            s.tokens.push(Token {
                question: 2 + (p as u32 % 4),
                section: (p % 2) as u8,
                correctness: (p % 2) as u8,
                timeliness: ((p / 2) % 2) as u8,
            });
            s.attention_mask.push(true);
        }
        s.padded(n_real + n_pad)
    }

    #[test]
    fn single_position_attention_returns_its_value() {
        let (out, w) = attention(&[0.3, -1.0], &[2.0, 0.5], &[7.0, -3.0], &[true], 2).unwrap();
        assert_eq!(out, vec![7.0, -3.0]);
        assert_eq!(w, vec![1.0]);
    }

    #[test]
    fn attention_rows_are_distributions() {
        let mut r = rng::rng(3);
        for _ in 0..100 {
            let t = r.random_range(1..10);
            let dim = r.random_range(1..6);
            let q: Vec<f64> = (0..t * dim).map(|_| r.random_range(-3.0..3.0)).collect();
            let k: Vec<f64> = (0..t * dim).map(|_| r.random_range(-3.0..3.0)).collect();
            let mut mask: Vec<bool> = (0..t).map(|_| r.random_bool(0.7)).collect();
            mask[r.random_range(0..t)] = true;
            let w = attention_weights(&q, &k, &mask, dim).unwrap();
            for i in 0..t {
                let row = &w[i * t..(i + 1) * t];
                assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
                assert!(row.iter().zip(&mask).all(|(w, m)| *m || *w == 0.0));
            }
        }
    }

    #[test]
    fn identical_keys_give_uniform_weights() {
        let k = vec![1.0, 2.0, 1.0, 2.0, 1.0, 2.0];
        let w = attention_weights(&[0.5, -0.2, 3.0, 1.0, 0.0, 0.0], &k, &[true, false, true], 2).unwrap();
        for i in 0..3 {
            assert_eq!(&w[i * 3..i * 3 + 3], &[0.5, 0.0, 0.5]);
        }
        assert!(matches!(attention_weights(&[1.0], &[1.0], &[false], 1), Err(AttentiveError::AllMasked)));
    }

    #[test]
    fn layer_norm_statistics() {
        let mut r = rng::rng(9);
        let x: Vec<f64> = (0..64 * 10).map(|_| r.random_range(-5.0..5.0)).collect();
        let (xhat, _) = layer_norm(&x, 64);
        for row in xhat.chunks(64) {
            let mean = row.iter().sum::<f64>() / 64.0;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 64.0;
            assert!(mean.abs() < 1e-7);
            assert!((var - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn gelu_derivative_matches_differences() {
        for &x in &[-4.0, -1.3, -0.2, 0.0, 0.7, 2.5] {
            let fd = (gelu(x + 1e-6) - gelu(x - 1e-6)) / 2e-6;
            assert!((fd - gelu_grad(x)).abs() < 1e-8);
        }
    }

    #[test]
    fn forward_shape_and_determinism() {
        let p = tiny();
        let a = encoder_forward(&p, &seq(1, 0)).unwrap();
        assert_eq!(a.output.len(), 8);
        let s = seq(4, 2);
        let x = encoder_forward(&p, &s).unwrap().output;
        let y = encoder_forward(&p, &s).unwrap().output;
        assert_eq!(x, y);
        assert!(x.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn padding_contents_do_not_reach_real_positions() {
        let p = tiny();
        let s = seq(3, 3);
        let base = encoder_forward(&p, &s).unwrap().output;
        let mut alt = s.clone();
        alt.tokens.swap(3, 5);
        alt.tokens[4].question = 5;
        alt.tokens[4].section = 1;
        let other = encoder_forward(&p, &alt).unwrap().output;
        assert_eq!(&base[..3 * 8], &other[..3 * 8]);
    }

    #[test]
    fn input_errors() {
        let p = tiny();
        let empty = TokenizedSequence { tokens: vec![], attention_mask: vec![] };
        assert!(matches!(encoder_forward(&p, &empty), Err(AttentiveError::EmptySequence)));
        assert!(matches!(encoder_forward(&p, &seq(9, 0)), Err(AttentiveError::LengthOverflow { .. })));
        let mut s = seq(2, 0);
        s.tokens[0].question = 6;
        assert!(matches!(encoder_forward(&p, &s), Err(AttentiveError::VocabOverflow { .. })));
        let pad_only = seq(0, 2);
        assert!(matches!(encoder_forward(&p, &pad_only), Err(AttentiveError::AllMasked)));
        let mut bad = seq(2, 0);
        bad.tokens[0].correctness = assessment::PAD;
        assert!(matches!(encoder_forward(&p, &bad), Err(AttentiveError::InvalidSequence(_))));
    }
}
