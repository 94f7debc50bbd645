use rand::Rng;
use rand_distr::StandardNormal;

use super::{LMConfig, Scalar};
use crate::error::Result;
use crate::rng;

/// Weights of one decoder block. Matrices are row-major `[in, out]`, applied as
/// `y = x W`.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams<F> {
    pub ln1_gain: Vec<F>,
    pub ln1_bias: Vec<F>,
    pub w_q: Vec<F>,
    pub w_k: Vec<F>,
    pub w_v: Vec<F>,
    pub w_o: Vec<F>,
    pub ln2_gain: Vec<F>,
    pub ln2_bias: Vec<F>,
    pub w_up: Vec<F>,
    pub b_up: Vec<F>,
    pub w_down: Vec<F>,
    pub b_down: Vec<F>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LMParams<F> {
    pub config: LMConfig,
    /// `[vocab_size, d_model]`
    pub token_embedding: Vec<F>,
    /// `[max_len, d_model]`
    pub position_embedding: Vec<F>,
    pub layers: Vec<LayerParams<F>>,
    pub lnf_gain: Vec<F>,
    pub lnf_bias: Vec<F>,
    /// `[d_model, vocab_size]`
    pub head: Vec<F>,
}

impl<F: Scalar> LayerParams<F> {
    fn zeros(c: &LMConfig) -> Self {
        let d = c.d_model;
        LayerParams {
            ln1_gain: vec![F::zero(); d],
            ln1_bias: vec![F::zero(); d],
            w_q: vec![F::zero(); d * d],
            w_k: vec![F::zero(); d * d],
            w_v: vec![F::zero(); d * d],
            w_o: vec![F::zero(); d * d],
            ln2_gain: vec![F::zero(); d],
            ln2_bias: vec![F::zero(); d],
            w_up: vec![F::zero(); d * c.d_ff],
            b_up: vec![F::zero(); c.d_ff],
            w_down: vec![F::zero(); c.d_ff * d],
            b_down: vec![F::zero(); d],
        }
    }
}

impl<F: Scalar> LMParams<F> {
    /// All-zero parameters; also the shape of a gradient.
    pub fn zeros(config: LMConfig) -> Self {
        let d = config.d_model;
        LMParams {
            config,
            token_embedding: vec![F::zero(); config.vocab_size * d],
            position_embedding: vec![F::zero(); config.max_len * d],
            layers: (0..config.n_layers).map(|_| LayerParams::zeros(&config)).collect(),
            lnf_gain: vec![F::zero(); d],
            lnf_bias: vec![F::zero(); d],
            head: vec![F::zero(); d * config.vocab_size],
        }
    }

    /// `(name, shape)` of every tensor, in a fixed order.
    pub fn manifest(config: &LMConfig) -> Vec<(String, Vec<usize>)> {
        let (d, v, f) = (config.d_model, config.vocab_size, config.d_ff);
        let mut out = vec![
            ("token_embedding".to_string(), vec![v, d]),
            ("position_embedding".to_string(), vec![config.max_len, d]),
        ];
        for l in 0..config.n_layers {
            let p = |n: &str| format!("layers.{l}.{n}");
            out.extend([
                (p("ln1_gain"), vec![d]),
                (p("ln1_bias"), vec![d]),
                (p("w_q"), vec![d, d]),
                (p("w_k"), vec![d, d]),
                (p("w_v"), vec![d, d]),
                (p("w_o"), vec![d, d]),
                (p("ln2_gain"), vec![d]),
                (p("ln2_bias"), vec![d]),
                (p("w_up"), vec![d, f]),
                (p("b_up"), vec![f]),
                (p("w_down"), vec![f, d]),
                (p("b_down"), vec![d]),
            ]);
        }
        out.extend([
            ("lnf_gain".to_string(), vec![d]),
            ("lnf_bias".to_string(), vec![d]),
            ("head".to_string(), vec![d, v]),
        ]);
        out
    }

    /// Tensors in [`manifest`](Self::manifest) order.
    pub fn tensors(&self) -> Vec<&Vec<F>> {
        let mut out = vec![&self.token_embedding, &self.position_embedding];
        for l in &self.layers {
            out.extend([
                &l.ln1_gain, &l.ln1_bias, &l.w_q, &l.w_k, &l.w_v, &l.w_o, &l.ln2_gain, &l.ln2_bias, &l.w_up,
                &l.b_up, &l.w_down, &l.b_down,
            ]);
        }
        out.extend([&self.lnf_gain, &self.lnf_bias, &self.head]);
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Vec<F>> {
        let mut out = vec![&mut self.token_embedding, &mut self.position_embedding];
        for l in &mut self.layers {
            out.extend([
                &mut l.ln1_gain,
                &mut l.ln1_bias,
                &mut l.w_q,
                &mut l.w_k,
                &mut l.w_v,
                &mut l.w_o,
                &mut l.ln2_gain,
                &mut l.ln2_bias,
                &mut l.w_up,
                &mut l.b_up,
                &mut l.w_down,
                &mut l.b_down,
            ]);
        }
        out.extend([&mut self.lnf_gain, &mut self.lnf_bias, &mut self.head]);
        out
    }

    pub fn n_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|x| x.is_finite()))
    }

    /// Element-wise conversion to another scalar type.
    pub fn cast<G: Scalar>(&self) -> LMParams<G> {
        let mut out = LMParams::<G>::zeros(self.config);
        for (dst, src) in out.tensors_mut().into_iter().zip(self.tensors()) {
            for (d, s) in dst.iter_mut().zip(src) {
                *d = G::of(s.f64());
            }
        }
        out
    }
}

/// Random initialization, deterministic under `seed`.
///
/// Embeddings and block matrices are `N(0, 1/d_model)` (standard deviation
/// `1/sqrt(d_model)`); the output head uses standard deviation `1/d_model` so the
/// initial next-token distribution is close to uniform. Layer-norm gains are 1,
/// offsets and biases 0.
pub fn init_params<F: Scalar>(config: LMConfig, seed: u64) -> Result<LMParams<F>> {
    config.validate()?;
    let mut rng = rng::stream(seed);
    let d = config.d_model as f64;
    let std = 1.0 / d.sqrt();
    let mut p = LMParams::<F>::zeros(config);
    let mut fill = |t: &mut Vec<F>, std: f64| {
        for x in t.iter_mut() {
            let z: f64 = rng.sample(StandardNormal);
            *x = F::of(z * std);
        }
    };
    fill(&mut p.token_embedding, std);
    fill(&mut p.position_embedding, std);
    for l in &mut p.layers {
        for w in [&mut l.w_q, &mut l.w_k, &mut l.w_v, &mut l.w_o, &mut l.w_up, &mut l.w_down] {
            fill(w, std);
        }
        l.ln1_gain.fill(F::one());
        l.ln2_gain.fill(F::one());
    }
    fill(&mut p.head, 1.0 / d);
    p.lnf_gain.fill(F::one());
    Ok(p)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> LMConfig {
        LMConfig {
            vocab_size: 11,
            d_model: 8,
            n_layers: 2,
            n_heads: 2,
            d_k: 4,
            d_ff: 16,
            max_len: 12,
        }
    }

    #[test]
    fn init_is_deterministic_and_finite() {
        let a = init_params::<f32>(cfg(), 1).unwrap();
        let b = init_params::<f32>(cfg(), 1).unwrap();
        let c = init_params::<f32>(cfg(), 2).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!(a.all_finite());
        assert!(a.layers.iter().all(|l| l.ln1_gain.iter().all(|&g| g == 1.0)));
    }

    #[test]
    fn manifest_matches_tensors() {
        let p = init_params::<f32>(cfg(), 0).unwrap();
        let m = LMParams::<f32>::manifest(&cfg());
        let t = p.tensors();
        assert_eq!(m.len(), t.len());
        for ((_, shape), tensor) in m.iter().zip(t) {
            assert_eq!(shape.iter().product::<usize>(), tensor.len());
        }
    }

    #[test]
    fn rejects_inconsistent_heads() {
        let mut c = cfg();
        c.d_k = 3;
        assert!(init_params::<f32>(c, 0).is_err());
    }
}
