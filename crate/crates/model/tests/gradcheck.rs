//! Finite-difference check of the backward pass on a tiny model.

use ergoscene_model::{softmax_backward, Batch, Model, ModelConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const V: usize = 11;

fn setup(dropout: f64) -> (Model<f64>, Batch, Vec<u32>) {
    let cfg = ModelConfig { n_layer: 2, n_head: 2, d_model: 16, dropout, vocab: V, ctx: 8, init_std: 0.3 };
    let m = Model::new(cfg, 3).unwrap();
    let tokens = vec![1, 4, 2, 8, 5, 7, 3, 0, 9, 10, 6, 2];
    let positions = (1..=6).chain(1..=6).collect();
    let indices = (0..12).map(|k| (k % 6) as u32 + 1).collect();
    let targets = vec![4, 2, 8, 5, 7, 3, 9, 10, 6, 2, 1, 1];
    (m, Batch::new(2, 6, tokens, positions, indices), targets)
}

fn loss(m: &Model<f64>, b: &Batch, targets: &[u32], dropout_seed: Option<u64>) -> (f64, Vec<f64>) {
    let mut rng = dropout_seed.map(ChaCha8Rng::seed_from_u64);
    let tape = m.forward(b, rng.as_mut().map(|r| r as &mut dyn rand::RngCore)).unwrap();
    let mut l = 0.0;
    let mut dlogits = Vec::with_capacity(tape.probs.len());
    for (r, row) in tape.probs.chunks(V).enumerate() {
        let y = targets[r] as usize;
        l -= row[y].ln();
        let mut dp = vec![0.0; V];
        dp[y] = -1.0 / row[y];
        dlogits.extend(softmax_backward(row, &dp));
    }
    let mut g = m.zero_grads();
    m.backward(&tape, &dlogits, &mut g);
    (l, g)
}

fn check(dropout: f64, seed: Option<u64>) {
    let (mut m, b, targets) = setup(dropout);
    let (_, g) = loss(&m, &b, &targets, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let specs = m.index.specs.clone();
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    while checked < 20 {
        let s = &specs[rng.random_range(0..specs.len())];
        let i = s.offset + rng.random_range(0..s.len());
        if g[i].abs() < 1e-6 {
            continue;
        }
        let h = 1e-5;
        let orig = m.params[i];
        m.params[i] = orig + h;
        let lp = loss(&m, &b, &targets, seed).0;
        m.params[i] = orig - h;
        let lm = loss(&m, &b, &targets, seed).0;
        m.params[i] = orig;
        let num = (lp - lm) / (2.0 * h);
        let rel = (num - g[i]).abs() / num.abs().max(g[i].abs());
        worst = worst.max(rel);
        assert!(rel < 1e-3, "{} [{}]: analytic {} numeric {}", s.name, i - s.offset, g[i], num);
        checked += 1;
    }
    assert!(worst < 1e-3);
}

#[test]
fn parameter_gradients_match_finite_differences() {
    check(0.0, None);
}

#[test]
fn gradients_match_under_fixed_dropout_masks() {
    check(0.2, Some(5));
}
