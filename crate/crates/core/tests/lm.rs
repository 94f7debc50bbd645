//! Language-model oracles: finite differences, initial loss, overfitting,
//! causality and sampling frequencies.

use imbllm::data::generate_fixture;
use imbllm::lm::{forward, Decoder, grad, init_params, nll_loss, sample_sequence, train, LMConfig, LMParams, SamplerConfig, TrainConfig};
use imbllm::rng;
use imbllm::textcodec::{encode, permute_sentence, row_to_sentence, Permutation, TokenSeq, Vocab};
use rand::Rng;

fn fixture_sequences(n: usize, seed: u64) -> (Vocab, Vec<TokenSeq>) {
    let table = generate_fixture(20, 20, 4, 2, seed);
    let schema = table.schema().clone();
    let vocab = Vocab::build(&schema);
    let mut r = rng::stream(seed);
    let seqs = table.rows()[..n]
        .iter()
        .map(|row| {
            let s = row_to_sentence(row, &schema, true, 4);
            let s = permute_sentence(&s, &schema.target.name, Permutation::FixY, &mut r);
            encode(&s, &vocab).unwrap()
        })
        .collect();
    (vocab, seqs)
}

/// Central finite differences (f64) against the analytic gradient.
#[test]
fn gradient_matches_central_differences() {
    let (vocab, seqs) = fixture_sequences(2, 3);
    let cfg = LMConfig {
        vocab_size: vocab.len(),
        d_model: 8,
        n_layers: 1,
        n_heads: 2,
        d_k: 4,
        d_ff: 16,
        max_len: 64,
    };
    let params: LMParams<f64> = init_params(cfg, 11).unwrap();
    let (_, g) = grad(&params, &seqs).unwrap();
    let h = 1e-4;
    let mut r = rng::stream(12);
    let n_tensors = params.tensors().len();
    let mut checked = 0;
    let mut worst: f64 = 0.0;
    while checked < 20 {
        let ti = r.random_range(0..n_tensors);
        let len = params.tensors()[ti].len();
        let i = r.random_range(0..len);
        let analytic = g.tensors()[ti][i];
        let mut plus = params.clone();
        plus.tensors_mut()[ti][i] += h;
        let mut minus = params.clone();
        minus.tensors_mut()[ti][i] -= h;
        let numeric = (nll_loss(&plus, &seqs).unwrap() - nll_loss(&minus, &seqs).unwrap()) / (2.0 * h);
        let denom = analytic.abs().max(numeric.abs()).max(1e-7);
        let rel = (analytic - numeric).abs() / denom;
        worst = worst.max(rel);
        assert!(rel < 1e-3, "tensor {ti} index {i}: analytic {analytic}, numeric {numeric}, rel {rel}");
        checked += 1;
    }
    println!("worst relative error over 20 coordinates: {worst:.2e}");
}

#[test]
fn initial_loss_is_near_log_vocab() {
    let (vocab, seqs) = fixture_sequences(8, 4);
    let ln_v = (vocab.len() as f64).ln();
    for seed in 0..3 {
        let p = init_params::<f32>(LMConfig::default().with_vocab(vocab.len()), seed).unwrap();
        let loss = nll_loss(&p, &seqs).unwrap();
        assert!((loss - ln_v).abs() < 0.1, "seed {seed}: loss {loss} vs ln V {ln_v}");
    }
}

#[test]
fn two_sentences_overfit() {
    let (vocab, seqs) = fixture_sequences(2, 5);
    let p = init_params::<f32>(LMConfig::default().with_vocab(vocab.len()), 0).unwrap();
    let initial = nll_loss(&p, &seqs).unwrap();
    let tcfg = TrainConfig {
        epochs: 200,
        ..TrainConfig::default()
    };
    let report = train(p, &seqs, &tcfg).unwrap();
    let final_loss = nll_loss(&report.params, &seqs).unwrap();
    assert!(final_loss < 0.1 * initial, "initial {initial}, final {final_loss}");
    for w in report.epoch_losses[..10].windows(2) {
        assert!(w[1] < w[0], "{:?}", &report.epoch_losses[..10]);
    }
}

#[test]
fn future_perturbations_leave_past_logits_unchanged() {
    let cfg = LMConfig {
        vocab_size: 30,
        d_model: 16,
        n_layers: 2,
        n_heads: 4,
        d_k: 4,
        d_ff: 32,
        max_len: 40,
    };
    let p = init_params::<f32>(cfg, 21).unwrap();
    let mut r = rng::stream(22);
    for _ in 0..100 {
        let len = r.random_range(2..=40);
        let seq: Vec<usize> = (0..len).map(|_| r.random_range(0..30)).collect();
        let k = r.random_range(1..len);
        let mut other = seq.clone();
        for t in &mut other[k..] {
            *t = r.random_range(0..30);
        }
        let a = forward(&p, &seq).unwrap();
        let b = forward(&p, &other).unwrap();
        for pos in 0..k {
            let bits = |v: &Vec<f32>| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(&a[pos]), bits(&b[pos]), "position {pos} changed after perturbing from {k}");
        }
    }
}

/// All weights zero except the final norm offset and one head entry, so the
/// logits are exactly ln 2 for token 4 and 0 elsewhere.
#[test]
fn two_way_choice_matches_forced_probabilities() {
    let cfg = LMConfig {
        vocab_size: 8,
        d_model: 4,
        n_layers: 1,
        n_heads: 1,
        d_k: 4,
        d_ff: 4,
        max_len: 4,
    };
    let mut p = LMParams::<f32>::zeros(cfg);
    p.lnf_bias[0] = 1.0;
    p.head[4] = 2f32.ln();
    let scfg = SamplerConfig::with_temperature(1.0);
    let mask = |_: &[usize]| Some(vec![4, 5]);
    let mut d = Decoder::new(&p);
    d.feed(0).unwrap();
    let probs = d.distribution(&scfg, Some(&[4, 5])).unwrap();
    assert!((probs[4] - 2.0 / 3.0).abs() < 1e-6);

    let mut r = rng::stream(31);
    let n = 30_000;
    let mut hits = 0;
    for _ in 0..n {
        let out = sample_sequence(&p, &[0], &scfg, mask, 1, &mut r, 1).unwrap();
        if out.tokens[1] == 4 {
            hits += 1;
        }
    }
    let freq = hits as f64 / n as f64;
    assert!((freq - 2.0 / 3.0).abs() < 0.01, "empirical frequency {freq}");
}
