use std::sync::atomic::{AtomicUsize, Ordering};

use ergoscene_core::data::{synth_corpus, Corpus, RoomTemplate, SynthConfig};
use ergoscene_core::{Attr, Codec, CodecConfig, ErgoEngine, ErgoParams, ExpertKind, ExpertKind::*, Layout, SceneExpert, Taxonomy};
use ergoscene_lab::loss::{expert_token_loss, geometric_slot, Variant};
use ergoscene_lab::prep::{encode_sample, Sample};
use ergoscene_lab::train::{batch_pass, make_expert, sample_terms, LossCtx};
use ergoscene_lab::{fine_tune, train, Arch, TrainConfig};
use ergoscene_model::{Model, ModelConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn tiny() -> TrainConfig {
    TrainConfig {
        arch: Arch { n_layer: 1, n_head: 2, d_model: 16, dropout: 0.1, init_std: 0.02 },
        batch_size: 16,
        epochs: 2,
        lr: 3e-3,
        finetune_lr: 1e-3,
        resolution: 64,
        ..TrainConfig::default()
    }
}

fn corpus(n_train: usize, n_val: usize, seed: u64) -> (Taxonomy, Corpus) {
    let t = Taxonomy::default();
    let c = synth_corpus(n_train + 2 * n_val + 20, RoomTemplate::Bedroom, seed, &SynthConfig::default(), &t);
    let c = c.truncated(n_train, n_val).unwrap();
    (t, c)
}

#[test]
fn ten_epochs_over_100_scenes_visit_8000_samples() {
    let (t, c) = corpus(100, 5, 1);
    let cfg = TrainConfig { epochs: 10, batch_size: 64, ..tiny() };
    let out = train(&c, &cfg, &t, None).unwrap();
    assert_eq!(out.sample_visits, 8000);
    assert_eq!(out.steps, 10 * 800usize.div_ceil(64));
    assert_eq!(out.metrics.len(), 10);
    assert_eq!(out.metrics.iter().filter(|m| m.best).count(), 1);
    let best = out.metrics.iter().min_by(|a, b| a.val_loss.total_cmp(&b.val_loss)).unwrap();
    assert!(best.best && best.epoch == out.best_epoch);
}

#[test]
fn seeded_runs_repeat_exactly() {
    let (t, c) = corpus(40, 8, 2);
    let cfg = TrainConfig { variant: Variant::V3, seed: 11, ..tiny() };
    let a = train(&c, &cfg, &t, None).unwrap();
    let b = train(&c, &cfg, &t, None).unwrap();
    assert_eq!(a.metrics, b.metrics);
    assert_eq!(a.best.params, b.best.params);
    let other = train(&c, &TrainConfig { seed: 12, ..cfg }, &t, None).unwrap();
    assert_ne!(a.metrics, other.metrics);
}

#[test]
fn run_directory_holds_checkpoints_and_metrics() {
    let (t, c) = corpus(20, 4, 3);
    let dir = tempfile::tempdir().unwrap();
    let out = train(&c, &tiny(), &t, Some(dir.path())).unwrap();
    let metrics = ergoscene_lab::artifact::read_metrics(&dir.path().join("metrics.csv")).unwrap();
    assert_eq!(metrics, out.metrics);
    let header = std::fs::read_to_string(dir.path().join("metrics.csv")).unwrap();
    assert!(header.starts_with("epoch,train_loss,val_loss,mean_expert_score"));
    let (best, codec) = ergoscene_lab::artifact::load_run(dir.path()).unwrap();
    assert_eq!(best.params, out.best.params);
    assert_eq!(codec, out.codec);
}

#[test]
fn fine_tuning_requires_a_matching_codec() {
    let (t, c) = corpus(20, 4, 4);
    let out = train(&c, &TrainConfig { epochs: 1, ..tiny() }, &t, None).unwrap();
    let wrong = CodecConfig::new(32, out.codec.bounds).unwrap();
    assert!(fine_tune(&out.best, wrong, &c, &tiny(), &t, None).is_err());
    let ft = fine_tune(&out.best, out.codec, &c, &TrainConfig { epochs: 1, ..tiny() }, &t, None).unwrap();
    assert_eq!(ft.sample_visits, 20 * 8);
}

#[test]
fn eval_samples_log_a_mean_expert_score() {
    let (t, c) = corpus(20, 4, 5);
    let out = train(&c, &TrainConfig { epochs: 1, eval_samples: 8, ..tiny() }, &t, None).unwrap();
    let m = out.metrics[0].mean_expert_score.unwrap();
    assert!(m.is_finite());
}

fn setup(expert: ExpertKind, seed: u64) -> (Taxonomy, Codec, Sample, Box<dyn SceneExpert>) {
    let (t, c) = corpus(8, 1, seed);
    let codec = Codec::new(CodecConfig::new(64, c.bounds).unwrap(), &t).unwrap();
    let ex = make_expert(expert, &t);
    let s = encode_sample(&c.train[0], &codec, Some(ex.as_ref())).unwrap();
    (t, codec, s, ex)
}

fn model_for(codec: &Codec) -> Model<f64> {
    let cfg = ModelConfig { n_layer: 1, n_head: 2, d_model: 16, dropout: 0.0, vocab: codec.cfg.vocab_size(), ctx: codec.cfg.seq_len(), init_std: 0.2 };
    Model::new(cfg, 9).unwrap()
}

#[test]
fn v1_and_v3_scale_cross_entropy_gradients_by_one_minus_weight() {
    let (_, codec, s, ex) = setup(Ergonomic, 6);
    let w = s.weight;
    assert!(w > 0.0 && w < 1.0);
    let m = model_for(&codec);
    let grads = |variant: Variant, with_expert: bool| {
        let ctx = LossCtx { variant, expert: Some(ex.as_ref()), codec: &codec, sigma: 2.0, exec: Default::default() };
        let pass = batch_pass(&m, &[&s], &ctx, None, with_expert, true).unwrap();
        let mut g = m.zero_grads();
        m.backward(&pass.tape, &pass.dlogits, &mut g);
        g
    };
    let g0 = grads(Variant::V0, false);
    let g1 = grads(Variant::V1, false);
    let scale = 1.0 - w;
    let mut checked = 0;
    for (a, b) in g0.iter().zip(&g1) {
        if a.abs() > 1e-10 {
            assert!((b / a - scale).abs() < 1e-9, "{b} / {a} vs {scale}");
            checked += 1;
        }
    }
    assert!(checked > 100);
    // V3 is V1 plus `w` times the expert-only gradient of V2 minus V0.
    let g2 = grads(Variant::V2, true);
    let g3 = grads(Variant::V3, true);
    for i in 0..g0.len() {
        let want = scale * g0[i] + w * (g2[i] - g0[i]);
        assert!((g3[i] - want).abs() <= 1e-9 * (1.0 + want.abs()), "{i}: {} vs {want}", g3[i]);
    }
}

#[test]
fn total_loss_per_variant_composes_the_two_terms() {
    let (_, codec, s, ex) = setup(Ergonomic, 7);
    let m = model_for(&codec);
    let batch = ergoscene_lab::train::make_batch(&[&s]);
    let tape = m.forward(&batch, None).unwrap();
    let terms = |v: Variant| {
        let ctx = LossCtx { variant: v, expert: Some(ex.as_ref()), codec: &codec, sigma: 2.0, exec: Default::default() };
        sample_terms(&s, &tape.probs, batch.t, &ctx, true, false)
    };
    let v0 = terms(Variant::V0);
    let e = v0.expert.unwrap();
    assert_eq!(v0.total, v0.ce);
    assert!((terms(Variant::V2).total - (v0.ce + e)).abs() < 1e-12);
    let w = s.weight;
    assert!((terms(Variant::V3).total - ((1.0 - w) * v0.ce + w * e)).abs() < 1e-12);
    assert!((terms(Variant::V1).total - (1.0 - w) * v0.ce).abs() < 1e-12);
}

/// Counts expert evaluations.
struct Counting(ErgoEngine, AtomicUsize);

impl SceneExpert for Counting {
    fn kind(&self) -> ExpertKind {
        Ergonomic
    }
    fn score(&self, l: &Layout) -> f64 {
        self.0.score(l)
    }
    fn weight(&self, l: &Layout) -> f64 {
        self.0.weight_score(l)
    }
    fn scores_with_attrs(&self, l: &Layout, q: &[(usize, Attr, f64)]) -> Vec<(f64, f64)> {
        self.1.fetch_add(q.len(), Ordering::Relaxed);
        SceneExpert::scores_with_attrs(&self.0, l, q)
    }
}

#[test]
fn expert_is_evaluated_once_per_geometric_slot() {
    let (t, codec, s, _) = setup(Ergonomic, 8);
    let counting = Counting(ErgoEngine::new(ErgoParams::default(), &t), AtomicUsize::new(0));
    let m = model_for(&codec);
    let batch = ergoscene_lab::train::make_batch(&[&s]);
    let tape = m.forward(&batch, None).unwrap();
    let ctx = LossCtx { variant: Variant::V2, expert: Some(&counting), codec: &codec, sigma: 2.0, exec: Default::default() };
    sample_terms(&s, &tape.probs, batch.t, &ctx, true, true);
    let furniture = s.layout.furniture().filter(|o| !t.is_boundary(o.category)).count();
    assert!(furniture > 0);
    assert_eq!(counting.1.load(Ordering::Relaxed), 5 * furniture);
}

#[test]
fn one_hot_prediction_reproduces_the_ground_truth_score() {
    for kind in [Ergonomic, Intersection] {
        let (_, codec, s, ex) = setup(kind, 9);
        let v = codec.cfg.vocab_size() as usize;
        let gt = ex.score(&s.layout);
        let mut slots = 0;
        for k in 0..s.len {
            let mut p = vec![0.0f64; v];
            p[s.tokens[k] as usize] = 1.0;
            match expert_token_loss(ex.as_ref(), &codec, &s.layout, &s.tokens, s.len, k, &p, 2.0) {
                Some((loss, _)) => {
                    assert!((loss - gt).abs() < 1e-9, "{kind:?} slot {k}: {loss} vs {gt}");
                    slots += 1;
                }
                None => assert!(geometric_slot(&codec, &s.tokens, s.len, k).is_none()),
            }
        }
        assert!(slots > 0);
        // Category slots never carry the expert loss.
        let p = vec![1.0 / v as f64; v];
        assert!(expert_token_loss(ex.as_ref(), &codec, &s.layout, &s.tokens, s.len, 6, &p, 2.0).is_none());
    }
}

#[test]
fn expert_token_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for (case, kind) in [Ergonomic, Intersection, Ergonomic, Intersection].into_iter().enumerate() {
        let (_, codec, s, ex) = setup(kind, 10 + case as u64);
        let v = codec.cfg.vocab_size() as usize;
        let r = codec.cfg.resolution as usize;
        let slots: Vec<usize> = (0..s.len).filter(|&k| geometric_slot(&codec, &s.tokens, s.len, k).is_some()).collect();
        let k = slots[rng.random_range(0..slots.len())];
        // A peaked distribution around a token near the ground truth.
        let peak = (s.tokens[k] as usize + rng.random_range(0..3)).min(r - 1);
        let mut p: Vec<f64> = (0..v).map(|j| if j < r { 0.02 + 0.05 * rng.random::<f64>() } else { 0.0 }).collect();
        p[peak] = 1.0;
        let z: f64 = p.iter().sum();
        p.iter_mut().for_each(|x| *x /= z);
        let f = |p: &[f64]| expert_token_loss(ex.as_ref(), &codec, &s.layout, &s.tokens, s.len, k, p, 3.0).unwrap();
        let (_, g) = f(&p);
        let h = 1e-6;
        for j in (peak.saturating_sub(8)..(peak + 9).min(r)).filter(|&j| j != peak) {
            let mut a = p.clone();
            let mut b = p.clone();
            a[j] += h;
            b[j] -= h;
            let fd = (f(&a).0 - f(&b).0) / (2.0 * h);
            let err = (fd - g[j]).abs() / fd.abs().max(g[j].abs()).max(1e-6);
            assert!(err < 1e-3, "{kind:?} slot {k} entry {j}: analytic {} fd {fd}", g[j]);
        }
    }
}
