use std::sync::OnceLock;

use ergoscene_core::data::{synth_corpus, Corpus, RoomTemplate, SynthConfig};
use ergoscene_core::{collision_check, Codec, Exec, ExemptPairs, Layout, Taxonomy, TUPLE};
use ergoscene_lab::sample::{nucleus, nucleus_sample, Request};
use ergoscene_lab::{train, Arch, Generator, SamplerConfig, TrainConfig, TrainOutcome};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

struct Fixture {
    taxonomy: Taxonomy,
    corpus: Corpus,
    run: TrainOutcome,
}

fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let taxonomy = Taxonomy::default();
        let corpus = synth_corpus(60, RoomTemplate::Bedroom, 21, &SynthConfig::default(), &taxonomy);
        let cfg = TrainConfig {
            arch: Arch { n_layer: 2, n_head: 2, d_model: 32, dropout: 0.0, init_std: 0.02 },
            epochs: 3,
            batch_size: 16,
            lr: 3e-3,
            resolution: 64,
            ..TrainConfig::default()
        };
        let run = train(&corpus, &cfg, &taxonomy, None).unwrap();
        Fixture { taxonomy, corpus, run }
    })
}

fn codec(f: &Fixture) -> Codec {
    Codec::new(f.run.codec, &f.taxonomy).unwrap()
}

#[test]
fn checked_generation_satisfies_its_postconditions() {
    let f = fixture();
    let codec = codec(f);
    let exempt = ExemptPairs::default_for(&f.taxonomy);
    let cfg = SamplerConfig::default();
    let gen = Generator::new(&f.run.best, &codec, &f.taxonomy, &exempt, cfg);
    let results = gen.generate_many(&gen.unconditional(40, 5));
    let ok: Vec<_> = results.iter().flatten().collect();
    assert!(ok.len() >= 36, "{} of 40 scenes", ok.len());
    for g in ok {
        assert_eq!(*g.tokens.last().unwrap(), codec.cfg.stop_token());
        assert_eq!(g.tokens.len(), g.layout.len() * TUPLE + 1);
        assert_eq!(codec.decode_tokens(&g.tokens).unwrap(), g.layout);
        assert!(ergoscene_core::validate(&g.layout, &f.taxonomy).is_empty());
        for i in 1..g.layout.len() {
            let before = Layout { objects: g.layout.objects[..i].to_vec(), source_id: None, room_type: None };
            let c = collision_check(&before, &g.layout.objects[i], cfg.area_ratio_threshold, &exempt);
            assert!(c.accepted(), "object {i} collides: {c:?}");
        }
    }
}

#[test]
fn unchecked_generation_never_rejects() {
    let f = fixture();
    let codec = codec(f);
    let exempt = ExemptPairs::default_for(&f.taxonomy);
    let cfg = SamplerConfig { collision_checks: false, ..SamplerConfig::default() };
    let gen = Generator::new(&f.run.best, &codec, &f.taxonomy, &exempt, cfg);
    for g in gen.generate_many(&gen.unconditional(200, 1)) {
        let g = g.unwrap();
        assert_eq!((g.rejections, g.restarts), (0, 0));
    }
}

#[test]
fn results_do_not_depend_on_batching_or_threads() {
    let f = fixture();
    let codec = codec(f);
    let exempt = ExemptPairs::default_for(&f.taxonomy);
    let run = |slots: usize, exec: Exec| {
        let cfg = SamplerConfig { slots, exec, ..SamplerConfig::default() };
        let gen = Generator::new(&f.run.best, &codec, &f.taxonomy, &exempt, cfg);
        let out: Vec<_> = gen.generate_many(&gen.unconditional(12, 3)).into_iter().map(|r| r.ok().map(|g| g.tokens)).collect();
        out
    };
    let base = run(12, Exec::Parallel);
    assert_eq!(base, run(1, Exec::Sequential));
    assert_eq!(base, run(5, Exec::Parallel));
    let gen = Generator::new(&f.run.best, &codec, &f.taxonomy, &exempt, SamplerConfig::default());
    let single = gen.generate(&Request { seed: 3, stream: 7, prefix: vec![f.taxonomy.room().0 as u32] }).ok().map(|g| g.tokens);
    assert_eq!(single, base[7]);
}

#[test]
fn conditioned_generation_keeps_the_prefix() {
    let f = fixture();
    let codec = codec(f);
    let exempt = ExemptPairs::default_for(&f.taxonomy);
    let gen = Generator::new(&f.run.best, &codec, &f.taxonomy, &exempt, SamplerConfig::default());
    let shells = &f.corpus.train[..10];
    let requests = gen.conditioned(shells, 8).unwrap();
    for (req, res) in requests.iter().zip(gen.generate_many(&requests)) {
        let g = res.unwrap();
        assert_eq!(&g.tokens[..req.prefix.len()], &req.prefix[..]);
        let n = req.prefix.len() / TUPLE;
        let prefix = codec.decode_tokens(&[req.prefix.clone(), vec![codec.cfg.stop_token()]].concat()).unwrap();
        assert_eq!(&g.layout.objects[..n], &prefix.objects[..]);
        // No door or window is added after the frozen prefix.
        assert!(g.layout.objects[n..].iter().all(|o| !f.taxonomy.is_boundary(o.category)));
    }
}

/// Reference nucleus: sort descending, accumulate until the mass reaches p.
fn reference_nucleus(p: &[f64], top_p: f64) -> Vec<usize> {
    let total: f64 = p.iter().sum();
    let mut ids: Vec<usize> = (0..p.len()).filter(|&i| p[i] > 0.0).collect();
    ids.sort_by(|&a, &b| p[b].partial_cmp(&p[a]).unwrap().then(a.cmp(&b)));
    let mut out = Vec::new();
    let mut acc = 0.0;
    for i in ids {
        out.push(i);
        acc += p[i];
        if acc >= top_p * total {
            break;
        }
    }
    out
}

proptest! {
    #[test]
    fn sampled_tokens_lie_in_the_reference_nucleus(
        raw in prop::collection::vec(0.0f64..1.0, 2..40),
        top_p in 0.05f64..1.0,
        seed in any::<u64>(),
    ) {
        prop_assume!(raw.iter().any(|&v| v > 0.0));
        let z: f64 = raw.iter().sum();
        let p: Vec<f64> = raw.iter().map(|v| v / z).collect();
        let reference = reference_nucleus(&p, top_p);
        let mut got = nucleus(&p, top_p);
        got.sort_unstable();
        let mut want = reference.clone();
        want.sort_unstable();
        prop_assert_eq!(&got, &want);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..50 {
            let t = nucleus_sample(&p, top_p, &mut rng);
            prop_assert!(reference.contains(&t));
        }
    }

    #[test]
    fn full_mass_nucleus_keeps_every_positive_token(raw in prop::collection::vec(0.0f64..1.0, 1..30)) {
        let n = nucleus(&raw, 1.0);
        prop_assert_eq!(n.len(), raw.iter().filter(|&&v| v > 0.0).count());
    }
}
