//! Sequential against data-parallel execution of the hot loops: expert
//! scoring, one training step and batched generation.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use ergoscene_core::data::{synth_corpus, RoomTemplate, SynthConfig};
use ergoscene_core::{Codec, CodecConfig, ErgoEngine, ErgoParams, Exec, ExemptPairs, ExpertKind, Taxonomy};
use ergoscene_lab::loss::Variant;
use ergoscene_lab::prep::{prepare, PrepOptions, Sample};
use ergoscene_lab::train::{batch_pass, make_expert, LossCtx};
use ergoscene_lab::{Arch, Generator, SamplerConfig};
use ergoscene_model::Model;

const STRATEGIES: [(&str, Exec); 2] = [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)];

fn bench(c: &mut Criterion) {
    let t = Taxonomy::default();
    let corpus = synth_corpus(64, RoomTemplate::Bedroom, 1, &SynthConfig::default(), &t);
    let codec = Codec::new(CodecConfig::new(256, corpus.bounds).unwrap(), &t).unwrap();
    let ergo = ErgoEngine::new(ErgoParams::default(), &t);

    let mut g = c.benchmark_group("ergo_scores_64");
    for (name, exec) in STRATEGIES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| exec.map(&corpus.train, |l| ergo.scene_score_grad(l).score))
        });
    }
    g.finish();

    let expert = make_expert(ExpertKind::Ergonomic, &t);
    let mut opts = PrepOptions::new(&t, 1);
    opts.expert = Some(expert.as_ref());
    let samples = prepare(&corpus.train[..32], &codec, &t, &opts).unwrap();
    let refs: Vec<&Sample> = samples.iter().collect();
    let mut g = c.benchmark_group("train_step_v2_batch32");
    g.sample_size(10);
    for (name, exec) in STRATEGIES {
        let mut model: Model<f32> = Model::new(Arch::desk().model_config(&codec.cfg), 0).unwrap();
        model.exec = exec;
        let ctx = LossCtx { variant: Variant::V2, expert: Some(expert.as_ref()), codec: &codec, sigma: 8.0, exec };
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| {
                let pass = batch_pass(&model, &refs, &ctx, None, true, true).unwrap();
                let mut grads = model.zero_grads();
                model.backward(&pass.tape, &pass.dlogits, &mut grads);
                grads[0]
            })
        });
    }
    g.finish();

    let exempt = ExemptPairs::default_for(&t);
    let mut g = c.benchmark_group("generate_64_unchecked");
    g.sample_size(10);
    for (name, exec) in STRATEGIES {
        let mut model: Model<f32> = Model::new(Arch::desk().model_config(&codec.cfg), 0).unwrap();
        model.exec = exec;
        let cfg = SamplerConfig { collision_checks: false, exec, ..SamplerConfig::default() };
        let gen = Generator::new(&model, &codec, &t, &exempt, cfg);
        let requests = gen.unconditional(64, 0);
        g.bench_function(BenchmarkId::from_parameter(name), |b| b.iter(|| gen.generate_many(&requests).len()));
    }
    g.finish();
}

criterion_group!(benches, bench);
criterion_main!(benches);
