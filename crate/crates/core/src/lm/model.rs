//! Forward pass, next-token loss and its reverse-mode gradient.

use super::{LMParams, Scalar};
use crate::error::{Error, Result};
use crate::textcodec::TokenId;

const LN_EPS: f64 = 1e-5;

/// Keys and values of every processed position, per layer.
#[derive(Debug, Clone)]
pub struct KvCache<F> {
    keys: Vec<Vec<F>>,
    values: Vec<Vec<F>>,
    len: usize,
}

impl<F: Scalar> KvCache<F> {
    pub fn new(params: &LMParams<F>) -> Self {
        let cap = params.config.max_len * params.config.d_model;
        KvCache {
            keys: (0..params.config.n_layers).map(|_| Vec::with_capacity(cap)).collect(),
            values: (0..params.config.n_layers).map(|_| Vec::with_capacity(cap)).collect(),
            len: 0,
        }
    }

    /// Number of positions processed so far.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }
}

/// Activations of one block at one position, kept for the backward pass.
struct LayerTrace<F> {
    ln1_xhat: Vec<F>,
    ln1_rstd: F,
    h1: Vec<F>,
    q: Vec<F>,
    /// Attention weights per head over positions `0..=t`.
    probs: Vec<Vec<F>>,
    att: Vec<F>,
    ln2_xhat: Vec<F>,
    ln2_rstd: F,
    h2: Vec<F>,
    u: Vec<F>,
    act: Vec<F>,
}

/// Everything computed for one position.
pub(crate) struct PosTrace<F> {
    layers: Vec<LayerTrace<F>>,
    lnf_xhat: Vec<F>,
    lnf_rstd: F,
    hf: Vec<F>,
    pub(crate) logits: Vec<F>,
}

// y = x W for row-major W [x.len(), out_dim]
fn vec_mat<F: Scalar>(x: &[F], w: &[F], out_dim: usize) -> Vec<F> {
    let mut y = vec![F::zero(); out_dim];
    for (i, &xi) in x.iter().enumerate() {
        let row = &w[i * out_dim..(i + 1) * out_dim];
        for (yo, &wio) in y.iter_mut().zip(row) {
            *yo += xi * wio;
        }
    }
    y
}

// dx = W dy, i.e. the gradient of vec_mat with respect to x
fn mat_vec<F: Scalar>(w: &[F], dy: &[F]) -> Vec<F> {
    let out_dim = dy.len();
    w.chunks_exact(out_dim)
        .map(|row| row.iter().zip(dy).map(|(&a, &b)| a * b).sum())
        .collect()
}

// gw += x^T dy
fn outer_acc<F: Scalar>(gw: &mut [F], x: &[F], dy: &[F]) {
    let out_dim = dy.len();
    for (row, &xi) in gw.chunks_exact_mut(out_dim).zip(x) {
        if xi == F::zero() {
            continue;
        }
        for (g, &d) in row.iter_mut().zip(dy) {
            *g += xi * d;
        }
    }
}

fn add_in_place<F: Scalar>(acc: &mut [F], x: &[F]) {
    for (a, &b) in acc.iter_mut().zip(x) {
        *a += b;
    }
}

fn normalize<F: Scalar>(x: &[F]) -> (Vec<F>, F) {
    let n = F::of(x.len() as f64);
    let mean = x.iter().copied().sum::<F>() / n;
    let var = x.iter().map(|&v| (v - mean) * (v - mean)).sum::<F>() / n;
    let rstd = F::one() / (var + F::of(LN_EPS)).sqrt();
    (x.iter().map(|&v| (v - mean) * rstd).collect(), rstd)
}

fn affine<F: Scalar>(xhat: &[F], gain: &[F], bias: &[F]) -> Vec<F> {
    xhat.iter()
        .zip(gain.iter().zip(bias))
        .map(|(&x, (&g, &b))| x * g + b)
        .collect()
}

fn layer_norm_backward<F: Scalar>(
    dy: &[F],
    xhat: &[F],
    rstd: F,
    gain: &[F],
    dgain: &mut [F],
    dbias: &mut [F],
) -> Vec<F> {
    let n = F::of(dy.len() as f64);
    let mut dxhat = Vec::with_capacity(dy.len());
    for i in 0..dy.len() {
        dgain[i] += dy[i] * xhat[i];
        dbias[i] += dy[i];
        dxhat.push(dy[i] * gain[i]);
    }
    let mean_d = dxhat.iter().copied().sum::<F>() / n;
    let mean_dx = dxhat.iter().zip(xhat).map(|(&a, &b)| a * b).sum::<F>() / n;
    dxhat
        .iter()
        .zip(xhat)
        .map(|(&d, &xh)| rstd * (d - mean_d - xh * mean_dx))
        .collect()
}

fn gelu_consts<F: Scalar>() -> (F, F) {
    (F::of((2.0 / std::f64::consts::PI).sqrt()), F::of(0.044715))
}

fn gelu<F: Scalar>(x: F) -> F {
    let (c, a) = gelu_consts::<F>();
    let half = F::of(0.5);
    half * x * (F::one() + (c * (x + a * x * x * x)).tanh())
}

fn gelu_grad<F: Scalar>(x: F) -> F {
    let (c, a) = gelu_consts::<F>();
    let half = F::of(0.5);
    let th = (c * (x + a * x * x * x)).tanh();
    half * (F::one() + th) + half * x * (F::one() - th * th) * c * (F::one() + F::of(3.0) * a * x * x)
}

fn softmax_in_place<F: Scalar>(s: &mut [F]) {
    let max = s.iter().copied().fold(F::neg_infinity(), F::max);
    let mut sum = F::zero();
    for v in s.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in s.iter_mut() {
        *v = *v / sum;
    }
}

/// Runs one position through the network, appending its keys and values to
/// `cache`. Positions `j > t` are never read, which is the causal mask.
pub(crate) fn step<F: Scalar>(p: &LMParams<F>, token: TokenId, cache: &mut KvCache<F>) -> PosTrace<F> {
    let c = &p.config;
    let (d, dk, v) = (c.d_model, c.d_k, c.vocab_size);
    let t = cache.len;
    let scale = F::one() / F::of((dk as f64).sqrt());

    let mut x: Vec<F> = (0..d)
        .map(|i| p.token_embedding[token * d + i] + p.position_embedding[t * d + i])
        .collect();
    let mut layers = Vec::with_capacity(c.n_layers);
    for (li, l) in p.layers.iter().enumerate() {
        let (ln1_xhat, ln1_rstd) = normalize(&x);
        let h1 = affine(&ln1_xhat, &l.ln1_gain, &l.ln1_bias);
        let q = vec_mat(&h1, &l.w_q, d);
        cache.keys[li].extend(vec_mat(&h1, &l.w_k, d));
        cache.values[li].extend(vec_mat(&h1, &l.w_v, d));
        let keys = &cache.keys[li];
        let values = &cache.values[li];

        let mut att = vec![F::zero(); d];
        let mut probs = Vec::with_capacity(c.n_heads);
        for h in 0..c.n_heads {
            let off = h * dk;
            let qh = &q[off..off + dk];
            let mut s: Vec<F> = (0..=t)
                .map(|j| {
                    let kj = &keys[j * d + off..j * d + off + dk];
                    qh.iter().zip(kj).map(|(&a, &b)| a * b).sum::<F>() * scale
                })
                .collect();
            softmax_in_place(&mut s);
            for (j, &pj) in s.iter().enumerate() {
                let vj = &values[j * d + off..j * d + off + dk];
                for (a, &vv) in att[off..off + dk].iter_mut().zip(vj) {
                    *a += pj * vv;
                }
            }
            probs.push(s);
        }
        add_in_place(&mut x, &vec_mat(&att, &l.w_o, d));

        let (ln2_xhat, ln2_rstd) = normalize(&x);
        let h2 = affine(&ln2_xhat, &l.ln2_gain, &l.ln2_bias);
        let mut u = vec_mat(&h2, &l.w_up, c.d_ff);
        add_in_place(&mut u, &l.b_up);
        let act: Vec<F> = u.iter().map(|&z| gelu(z)).collect();
        let mut down = vec_mat(&act, &l.w_down, d);
        add_in_place(&mut down, &l.b_down);
        add_in_place(&mut x, &down);

        layers.push(LayerTrace {
            ln1_xhat,
            ln1_rstd,
            h1,
            q,
            probs,
            att,
            ln2_xhat,
            ln2_rstd,
            h2,
            u,
            act,
        });
    }
    cache.len += 1;

    let (lnf_xhat, lnf_rstd) = normalize(&x);
    let hf = affine(&lnf_xhat, &p.lnf_gain, &p.lnf_bias);
    let logits = vec_mat(&hf, &p.head, v);
    PosTrace {
        layers,
        lnf_xhat,
        lnf_rstd,
        hf,
        logits,
    }
}

fn check_tokens<F: Scalar>(p: &LMParams<F>, tokens: &[TokenId]) -> Result<()> {
    if tokens.len() > p.config.max_len {
        return Err(Error::SequenceTooLong {
            len: tokens.len(),
            max_len: p.config.max_len,
        });
    }
    if let Some(&bad) = tokens.iter().find(|&&t| t >= p.config.vocab_size) {
        return Err(Error::InvalidArgument(format!(
            "token id {bad} outside vocabulary of size {}",
            p.config.vocab_size
        )));
    }
    Ok(())
}

/// Logits for every position (`tokens.len()` rows of `vocab_size`). Row `k`
/// depends only on `tokens[..=k]`.
pub fn forward<F: Scalar>(params: &LMParams<F>, tokens: &[TokenId]) -> Result<Vec<Vec<F>>> {
    check_tokens(params, tokens)?;
    let mut cache = KvCache::new(params);
    Ok(tokens.iter().map(|&t| step(params, t, &mut cache).logits).collect())
}

/// Attention weights `[layer][head][i][j]`, zero wherever `j > i`.
pub type AttentionMaps<F> = Vec<Vec<Vec<Vec<F>>>>;

pub fn attention_maps<F: Scalar>(params: &LMParams<F>, tokens: &[TokenId]) -> Result<AttentionMaps<F>> {
    check_tokens(params, tokens)?;
    let c = &params.config;
    let n = tokens.len();
    let mut maps = vec![vec![vec![vec![F::zero(); n]; n]; c.n_heads]; c.n_layers];
    let mut cache = KvCache::new(params);
    for (i, &t) in tokens.iter().enumerate() {
        let trace = step(params, t, &mut cache);
        for (l, lt) in trace.layers.iter().enumerate() {
            for (h, probs) in lt.probs.iter().enumerate() {
                maps[l][h][i][..probs.len()].copy_from_slice(probs);
            }
        }
    }
    Ok(maps)
}

fn check_batch<F: Scalar>(params: &LMParams<F>, batch: &[&[TokenId]]) -> Result<()> {
    if batch.is_empty() {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    for seq in batch {
        if seq.len() < 2 {
            return Err(Error::InvalidArgument("sequences need at least 2 tokens".into()));
        }
        check_tokens(params, seq)?;
    }
    Ok(())
}

/// Log-softmax probability of `target` under `logits`, in f64.
fn log_prob<F: Scalar>(logits: &[F], target: TokenId) -> f64 {
    let max = logits.iter().map(|x| x.f64()).fold(f64::NEG_INFINITY, f64::max);
    let lse = logits.iter().map(|x| (x.f64() - max).exp()).sum::<f64>().ln() + max;
    logits[target].f64() - lse
}

/// Mean negative log-likelihood over all next-token positions of the batch.
pub fn nll_loss<F: Scalar, S: AsRef<[TokenId]>>(params: &LMParams<F>, batch: &[S]) -> Result<f64> {
    let batch: Vec<&[TokenId]> = batch.iter().map(AsRef::as_ref).collect();
    check_batch(params, &batch)?;
    let mut total = 0.0;
    let mut count = 0usize;
    for seq in batch {
        let mut cache = KvCache::new(params);
        for (k, &tok) in seq[..seq.len() - 1].iter().enumerate() {
            let trace = step(params, tok, &mut cache);
            total -= log_prob(&trace.logits, seq[k + 1]);
            count += 1;
        }
    }
    Ok(total / count as f64)
}

/// Loss (as [`nll_loss`]) and its exact gradient.
pub fn grad<F: Scalar, S: AsRef<[TokenId]>>(params: &LMParams<F>, batch: &[S]) -> Result<(f64, LMParams<F>)> {
    let batch: Vec<&[TokenId]> = batch.iter().map(AsRef::as_ref).collect();
    check_batch(params, &batch)?;
    let mut g = LMParams::<F>::zeros(params.config);
    let mut total = 0.0;
    let mut count = 0usize;
    for seq in &batch {
        total += sequence_backward(params, seq, &mut g);
        count += seq.len() - 1;
    }
    let inv = F::of(1.0 / count as f64);
    for t in g.tensors_mut() {
        for x in t.iter_mut() {
            *x *= inv;
        }
    }
    Ok((total / count as f64, g))
}

/// Accumulates the gradient of the summed NLL of one sequence into `g`;
/// returns that summed NLL.
fn sequence_backward<F: Scalar>(p: &LMParams<F>, seq: &[TokenId], g: &mut LMParams<F>) -> f64 {
    let c = p.config;
    let (d, dk, v) = (c.d_model, c.d_k, c.vocab_size);
    let scale = F::one() / F::of((dk as f64).sqrt());
    let inputs = &seq[..seq.len() - 1];
    let n = inputs.len();

    let mut cache = KvCache::new(p);
    let traces: Vec<PosTrace<F>> = inputs.iter().map(|&t| step(p, t, &mut cache)).collect();

    let mut nll = 0.0;
    let mut dx: Vec<Vec<F>> = Vec::with_capacity(n);
    for (t, trace) in traces.iter().enumerate() {
        let target = seq[t + 1];
        nll -= log_prob(&trace.logits, target);
        let mut dlogits = trace.logits.clone();
        softmax_in_place(&mut dlogits);
        dlogits[target] -= F::one();
        outer_acc(&mut g.head, &trace.hf, &dlogits);
        let dhf = mat_vec(&p.head, &dlogits);
        debug_assert_eq!(dhf.len(), d);
        debug_assert_eq!(dlogits.len(), v);
        dx.push(layer_norm_backward(
            &dhf,
            &trace.lnf_xhat,
            trace.lnf_rstd,
            &p.lnf_gain,
            &mut g.lnf_gain,
            &mut g.lnf_bias,
        ));
    }

    for li in (0..c.n_layers).rev() {
        let l = &p.layers[li];
        let gl = &mut g.layers[li];
        let keys = &cache.keys[li];
        let values = &cache.values[li];

        // MLP sub-block: dx holds d(x_out), becomes d(x_mid).
        for (t, trace) in traces.iter().enumerate() {
            let lt = &trace.layers[li];
            let dout = &dx[t];
            add_in_place(&mut gl.b_down, dout);
            outer_acc(&mut gl.w_down, &lt.act, dout);
            let dact = mat_vec(&l.w_down, dout);
            let du: Vec<F> = dact.iter().zip(&lt.u).map(|(&da, &u)| da * gelu_grad(u)).collect();
            add_in_place(&mut gl.b_up, &du);
            outer_acc(&mut gl.w_up, &lt.h2, &du);
            let dh2 = mat_vec(&l.w_up, &du);
            let dmid = layer_norm_backward(&dh2, &lt.ln2_xhat, lt.ln2_rstd, &l.ln2_gain, &mut gl.ln2_gain, &mut gl.ln2_bias);
            add_in_place(&mut dx[t], &dmid);
        }

        // Attention sub-block: dx holds d(x_mid), becomes d(x_in).
        let datt: Vec<Vec<F>> = traces
            .iter()
            .enumerate()
            .map(|(t, trace)| {
                outer_acc(&mut gl.w_o, &trace.layers[li].att, &dx[t]);
                mat_vec(&l.w_o, &dx[t])
            })
            .collect();
        let mut dq = vec![vec![F::zero(); d]; n];
        let mut dkeys = vec![F::zero(); n * d];
        let mut dvalues = vec![F::zero(); n * d];
        for (t, trace) in traces.iter().enumerate() {
            let lt = &trace.layers[li];
            for h in 0..c.n_heads {
                let off = h * dk;
                let probs = &lt.probs[h];
                let da = &datt[t][off..off + dk];
                let dp: Vec<F> = (0..=t)
                    .map(|j| {
                        let vj = &values[j * d + off..j * d + off + dk];
                        da.iter().zip(vj).map(|(&a, &b)| a * b).sum()
                    })
                    .collect();
                let weighted: F = probs.iter().zip(&dp).map(|(&a, &b)| a * b).sum();
                for j in 0..=t {
                    let pj = probs[j];
                    for e in 0..dk {
                        dvalues[j * d + off + e] += pj * da[e];
                    }
                    let ds = pj * (dp[j] - weighted) * scale;
                    for e in 0..dk {
                        dq[t][off + e] += ds * keys[j * d + off + e];
                        dkeys[j * d + off + e] += ds * lt.q[off + e];
                    }
                }
            }
        }
        for (t, trace) in traces.iter().enumerate() {
            let lt = &trace.layers[li];
            let dkt = &dkeys[t * d..(t + 1) * d];
            let dvt = &dvalues[t * d..(t + 1) * d];
            outer_acc(&mut gl.w_q, &lt.h1, &dq[t]);
            outer_acc(&mut gl.w_k, &lt.h1, dkt);
            outer_acc(&mut gl.w_v, &lt.h1, dvt);
            let mut dh1 = mat_vec(&l.w_q, &dq[t]);
            add_in_place(&mut dh1, &mat_vec(&l.w_k, dkt));
            add_in_place(&mut dh1, &mat_vec(&l.w_v, dvt));
            let din = layer_norm_backward(&dh1, &lt.ln1_xhat, lt.ln1_rstd, &l.ln1_gain, &mut gl.ln1_gain, &mut gl.ln1_bias);
            add_in_place(&mut dx[t], &din);
        }
    }

    for (t, &tok) in inputs.iter().enumerate() {
        add_in_place(&mut g.token_embedding[tok * d..(tok + 1) * d], &dx[t]);
        add_in_place(&mut g.position_embedding[t * d..(t + 1) * d], &dx[t]);
    }
    nll
}
