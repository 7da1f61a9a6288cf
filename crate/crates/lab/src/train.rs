//! Teacher-forced training with cross-entropy and expert losses.

use std::path::Path;

use ergoscene_core::codec::tuple_index;
use ergoscene_core::data::{AugmentRules, Corpus};
use ergoscene_core::{
    Codec, CodecConfig, ErgoEngine, ErgoParams, Exec, ExemptPairs, ExpertKind, IntersectionEngine, SceneExpert, Taxonomy, TUPLE,
};
use ergoscene_model::{clip_grad_norm, Adam, AdamConfig, Batch, Elem, Model, ModelConfig, Tape};
use rand::seq::SliceRandom;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::artifact;
use crate::error::LabError;
use crate::loss::{add_softmax_backward, geometric_slot, slot_losses, window_expectation, Variant, Window};
use crate::prep::{prepare, PrepOptions, Sample};
use crate::sample::{Generator, SamplerConfig};
use crate::schedule::lr_at;

/// Network shape; vocabulary and context follow from the codec.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Arch {
    pub n_layer: usize,
    pub n_head: usize,
    pub d_model: usize,
    pub dropout: f64,
    pub init_std: f64,
}

impl Default for Arch {
    fn default() -> Self {
        Arch { n_layer: 12, n_head: 8, d_model: 256, dropout: 0.1, init_std: 0.02 }
    }
}

impl Arch {
    pub fn desk() -> Self {
        Arch { n_layer: 4, n_head: 4, d_model: 128, ..Arch::default() }
    }

    pub fn model_config(&self, codec: &CodecConfig) -> ModelConfig {
        ModelConfig {
            n_layer: self.n_layer,
            n_head: self.n_head,
            d_model: self.d_model,
            dropout: self.dropout,
            vocab: codec.vocab_size(),
            ctx: codec.seq_len(),
            init_std: self.init_std,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub arch: Arch,
    pub batch_size: usize,
    pub epochs: usize,
    /// Augmented copies of every training layout per epoch.
    pub augmentations: usize,
    pub warmup_epochs: f64,
    pub lr: f64,
    pub finetune_lr: f64,
    pub expert: ExpertKind,
    pub variant: Variant,
    /// Width of the window expectation in tokens; `resolution / 32` if unset.
    pub sigma_window: Option<f64>,
    /// Global gradient-norm cap.
    pub grad_clip: Option<f64>,
    pub resolution: u32,
    pub seed: u64,
    /// Scenes generated after every epoch to log their mean expert score.
    pub eval_samples: usize,
    /// Batches per length bucket; shuffled samples are sorted by length
    /// inside each bucket to reduce padding. `1` disables bucketing.
    pub length_buckets: usize,
    pub exec: Exec,
    pub augment: AugmentRules,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            arch: Arch::default(),
            batch_size: 32,
            epochs: 10,
            augmentations: 8,
            warmup_epochs: 1.0,
            lr: 5e-5,
            finetune_lr: 2e-5,
            expert: ExpertKind::Ergonomic,
            variant: Variant::V0,
            sigma_window: None,
            grad_clip: Some(1.0),
            resolution: 256,
            seed: 0,
            eval_samples: 0,
            length_buckets: 8,
            exec: Exec::default(),
            augment: AugmentRules::default(),
        }
    }
}

impl TrainConfig {
    /// Small network with a learning rate suited to short runs.
    pub fn desk() -> Self {
        TrainConfig { arch: Arch::desk(), lr: 1e-3, finetune_lr: 4e-4, ..TrainConfig::default() }
    }

    pub fn sigma(&self) -> f64 {
        self.sigma_window.unwrap_or(self.resolution as f64 / 32.0)
    }

    pub fn validate(&self) -> Result<(), LabError> {
        let bad = |m: String| Err(LabError::Config(m));
        if !(self.lr > 0.0) || !(self.finetune_lr > 0.0) {
            return bad("learning rates must be positive".into());
        }
        if !(self.sigma() > 0.0) {
            return bad("sigma_window must be positive".into());
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return bad("batch_size and epochs must be at least 1".into());
        }
        if !(self.warmup_epochs >= 0.0) {
            return bad("warmup_epochs must be non-negative".into());
        }
        if !self.augment.is_valid() {
            return bad("augmentation probabilities must lie in [0, 1]".into());
        }
        CodecConfig::new(self.resolution, ergoscene_core::DatasetBounds { w_min: 1.0, w_max: 2.0, d_min: 1.0, d_max: 2.0 })?;
        Ok(())
    }

    /// Reads JSON, or TOML when the extension is `.toml`.
    pub fn load(path: &Path) -> Result<Self, LabError> {
        let text = std::fs::read_to_string(path).map_err(LabError::io(path))?;
        let cfg: TrainConfig = if path.extension().is_some_and(|e| e == "toml") {
            toml::from_str(&text).map_err(|e| LabError::Format { path: path.into(), reason: e.to_string() })?
        } else {
            serde_json::from_str(&text).map_err(|e| LabError::Format { path: path.into(), reason: e.to_string() })?
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

pub fn make_expert(kind: ExpertKind, taxonomy: &Taxonomy) -> Box<dyn SceneExpert> {
    match kind {
        ExpertKind::Ergonomic => Box::new(ErgoEngine::new(ErgoParams::default(), taxonomy)),
        ExpertKind::Intersection => Box::new(IntersectionEngine::new(ExemptPairs::default_for(taxonomy), taxonomy)),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub mean_expert_score: Option<f64>,
    pub val_expert_loss: Option<f64>,
    /// Lowest validation loss so far.
    pub best: bool,
}

pub struct TrainOutcome {
    /// Parameters from the epoch with the lowest validation loss.
    pub best: Model<f32>,
    pub last: Model<f32>,
    pub codec: CodecConfig,
    pub metrics: Vec<EpochMetrics>,
    pub best_epoch: usize,
    /// Training samples processed over all epochs.
    pub sample_visits: usize,
    pub steps: usize,
}

/// Everything a loss evaluation needs besides the model.
pub struct LossCtx<'a> {
    pub variant: Variant,
    pub expert: Option<&'a dyn SceneExpert>,
    pub codec: &'a Codec,
    pub sigma: f64,
    pub exec: Exec,
}

pub struct SampleTerms {
    pub ce: f64,
    pub expert: Option<f64>,
    pub total: f64,
    /// `∂total/∂logits`, `[t, vocab]`; empty when not requested.
    pub grad: Vec<f64>,
}

/// Loss terms of one sample given the model's distributions `probs`
/// (`[t, vocab]`, row `i` predicting token `i + 1`).
pub fn sample_terms<E: Elem>(s: &Sample, probs: &[E], t: usize, ctx: &LossCtx, with_expert: bool, grad: bool) -> SampleTerms {
    let v = probs.len() / t;
    let n = (s.len - 1).min(t);
    let (bt, be) = ctx.variant.betas(s.weight);
    let mut g = if grad { vec![0.0; t * v] } else { Vec::new() };
    let mut ce = 0.0;
    let inv_n = 1.0 / n.max(1) as f64;
    for i in 0..n {
        let row = &probs[i * v..(i + 1) * v];
        let y = s.tokens[i + 1] as usize;
        ce -= row[y].as_f64().max(1e-30).ln();
        if grad && bt != 0.0 {
            let gr = &mut g[i * v..(i + 1) * v];
            for (gj, &p) in gr.iter_mut().zip(row) {
                *gj = bt * inv_n * p.as_f64();
            }
            gr[y] -= bt * inv_n;
        }
    }
    ce *= inv_n;

    let mut expert = None;
    if let (Some(ex), true) = (ctx.expert, with_expert) {
        let r = ctx.codec.cfg.resolution;
        let slots: Vec<(usize, usize, ergoscene_core::Attr)> =
            (TUPLE..=n).filter_map(|k| geometric_slot(ctx.codec, &s.tokens, s.len, k).map(|(o, a)| (k, o, a))).collect();
        if slots.is_empty() {
            expert = Some(0.0);
        } else {
            let windows: Vec<Window> =
                slots.iter().map(|&(k, _, _)| window_expectation(&probs[(k - 1) * v..k * v], r as usize, ctx.sigma)).collect();
            let q: Vec<_> = slots.iter().zip(&windows).map(|(&(_, o, a), w)| (o, a, w)).collect();
            let losses = slot_losses(ex, &s.layout, s.cell, r, &q);
            let m = losses.len() as f64;
            expert = Some(losses.iter().map(|l| l.loss).sum::<f64>() / m);
            if grad && be != 0.0 {
                for ((&(k, _, _), w), l) in slots.iter().zip(&windows).zip(&losses) {
                    let scale = be * l.dloss_dvbar / m;
                    let dp: Vec<f64> = w.grad.iter().map(|d| scale * d).collect();
                    let row = &probs[(k - 1) * v..k * v];
                    add_softmax_backward(row, w.start, &dp, &mut g[(k - 1) * v..k * v]);
                }
            }
        }
    }
    let total = bt * ce + if be != 0.0 { be * expert.unwrap_or(0.0) } else { 0.0 };
    SampleTerms { ce, expert, total, grad: g }
}

/// Inputs `tokens[..t]` for each sample, `t` being the longest content length
/// minus one.
pub fn make_batch(samples: &[&Sample]) -> Batch {
    let t = samples.iter().map(|s| s.len - 1).max().unwrap_or(1).max(1);
    let mut tokens = Vec::with_capacity(samples.len() * t);
    for s in samples {
        tokens.extend_from_slice(&s.tokens[..t]);
    }
    let positions = samples.iter().flat_map(|_| 1..=t as u32).collect();
    let indices = samples.iter().flat_map(|_| (0..t).map(tuple_index)).collect();
    Batch::new(samples.len(), t, tokens, positions, indices)
}

pub struct BatchPass<E> {
    pub tape: Tape<E>,
    pub loss: f64,
    pub ce: f64,
    pub expert: Option<f64>,
    pub terms: Vec<SampleTerms>,
    /// `∂loss/∂logits` for the batch mean; empty without gradients.
    pub dlogits: Vec<E>,
}

pub fn batch_pass<E: Elem>(
    model: &Model<E>,
    samples: &[&Sample],
    ctx: &LossCtx,
    rng: Option<&mut dyn RngCore>,
    with_expert: bool,
    grad: bool,
) -> Result<BatchPass<E>, LabError> {
    let batch = make_batch(samples);
    let t = batch.t;
    let tape = model.forward(&batch, rng)?;
    let v = model.cfg.vocab;
    let terms =
        ctx.exec.map_range(samples.len(), |i| sample_terms(samples[i], &tape.probs[i * t * v..(i + 1) * t * v], t, ctx, with_expert, grad));
    let b = samples.len() as f64;
    let loss = terms.iter().map(|s| s.total).sum::<f64>() / b;
    let ce = terms.iter().map(|s| s.ce).sum::<f64>() / b;
    let expert = if terms.iter().all(|s| s.expert.is_some()) {
        Some(terms.iter().map(|s| s.expert.unwrap_or(0.0)).sum::<f64>() / b)
    } else {
        None
    };
    let dlogits = if grad { terms.iter().flat_map(|s| s.grad.iter().map(|&g| E::lit(g / b))).collect() } else { Vec::new() };
    Ok(BatchPass { tape, loss, ce, expert, terms, dlogits })
}

/// Shuffled batches; with bucketing, samples of similar length share a batch.
pub fn epoch_batches(lens: &[usize], batch: usize, buckets: usize, rng: &mut impl rand::Rng) -> Vec<Vec<usize>> {
    let mut perm: Vec<usize> = (0..lens.len()).collect();
    perm.shuffle(rng);
    if buckets > 1 {
        for group in perm.chunks_mut(batch * buckets) {
            group.sort_by_key(|&i| lens[i]);
        }
    }
    let mut out: Vec<Vec<usize>> = perm.chunks(batch).map(|c| c.to_vec()).collect();
    out.shuffle(rng);
    out
}

/// Mean cross-entropy and expert loss over `samples` without dropout.
pub fn evaluate<E: Elem>(model: &Model<E>, samples: &[Sample], ctx: &LossCtx, batch: usize) -> Result<(f64, Option<f64>), LabError> {
    if samples.is_empty() {
        return Ok((f64::NAN, None));
    }
    let mut ce = 0.0;
    let mut ex = 0.0;
    let mut have_ex = ctx.expert.is_some();
    let mut order: Vec<usize> = (0..samples.len()).collect();
    order.sort_by_key(|&i| samples[i].len);
    for chunk in order.chunks(batch.max(1)) {
        let refs: Vec<&Sample> = chunk.iter().map(|&i| &samples[i]).collect();
        let pass = batch_pass(model, &refs, ctx, None, true, false)?;
        for t in &pass.terms {
            ce += t.ce;
            match t.expert {
                Some(e) => ex += e,
                None => have_ex = false,
            }
        }
    }
    let n = samples.len() as f64;
    Ok((ce / n, have_ex.then_some(ex / n)))
}

/// Trains a fresh model on `corpus`.
pub fn train(corpus: &Corpus, cfg: &TrainConfig, taxonomy: &Taxonomy, out: Option<&Path>) -> Result<TrainOutcome, LabError> {
    cfg.validate()?;
    let codec_cfg = CodecConfig::new(cfg.resolution, corpus.bounds)?;
    let model = Model::new(cfg.arch.model_config(&codec_cfg), cfg.seed)?;
    run(model, codec_cfg, corpus, cfg, cfg.lr, taxonomy, out)
}

/// Continues training `base` on `corpus` at the fine-tuning learning rate.
/// The corpus must fit the base model's codec.
pub fn fine_tune(
    base: &Model<f32>,
    codec: CodecConfig,
    corpus: &Corpus,
    cfg: &TrainConfig,
    taxonomy: &Taxonomy,
    out: Option<&Path>,
) -> Result<TrainOutcome, LabError> {
    cfg.validate()?;
    if base.cfg.vocab != codec.vocab_size() || base.cfg.ctx != codec.seq_len() {
        return Err(LabError::Config("base model does not match the codec".into()));
    }
    let mut model = base.clone();
    model.cfg.dropout = cfg.arch.dropout;
    run(model, codec, corpus, cfg, cfg.finetune_lr, taxonomy, out)
}

fn run(
    mut model: Model<f32>,
    codec_cfg: CodecConfig,
    corpus: &Corpus,
    cfg: &TrainConfig,
    base_lr: f64,
    taxonomy: &Taxonomy,
    out: Option<&Path>,
) -> Result<TrainOutcome, LabError> {
    if corpus.train.is_empty() {
        return Err(LabError::Data(ergoscene_core::DataError::Empty));
    }
    model.exec = cfg.exec;
    let codec = Codec::new(codec_cfg, taxonomy)?;
    let expert = make_expert(cfg.expert, taxonomy);
    let mut opts = PrepOptions::new(taxonomy, cfg.augmentations);
    opts.rules = cfg.augment;
    opts.expert = Some(expert.as_ref());
    opts.exec = cfg.exec;
    let train_set = prepare(&corpus.train, &codec, taxonomy, &opts)?;
    opts.draws = 1;
    opts.seed_offset = 1 << 40;
    // Bounds come from the training rooms; validation rooms beyond them are skipped.
    let val: Vec<_> = corpus.val.iter().filter(|l| codec.encode(l).is_ok()).cloned().collect();
    if val.len() < corpus.val.len() {
        log::warn!("{} validation rooms lie outside the codec bounds and are skipped", corpus.val.len() - val.len());
    }
    let val_set = prepare(&val, &codec, taxonomy, &opts)?;
    let ctx = LossCtx { variant: cfg.variant, expert: Some(expert.as_ref()), codec: &codec, sigma: cfg.sigma(), exec: cfg.exec };

    let steps_per_epoch = train_set.len().div_ceil(cfg.batch_size);
    let total = steps_per_epoch * cfg.epochs;
    let warmup = (cfg.warmup_epochs * steps_per_epoch as f64).round() as usize;
    let mut adam = Adam::new(model.n_params(), AdamConfig::default());
    let mut drop_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    drop_rng.set_stream(1);
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    shuffle_rng.set_stream(2);
    let lens: Vec<usize> = train_set.iter().map(|s| s.len).collect();
    let exempt = ExemptPairs::default_for(taxonomy);

    if let Some(dir) = out {
        std::fs::create_dir_all(dir).map_err(LabError::io(dir))?;
        artifact::save_codec(&codec_cfg, &dir.join(artifact::CODEC_FILE))?;
        artifact::write_json(&dir.join(artifact::TRAIN_CONFIG_FILE), cfg)?;
    }

    let mut metrics = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, Vec<f32>, usize)> = None;
    let mut step = 0;
    let mut visits = 0;
    let mut grads = model.zero_grads();
    for epoch in 1..=cfg.epochs {
        let mut loss_sum = 0.0;
        let batches = epoch_batches(&lens, cfg.batch_size, cfg.length_buckets, &mut shuffle_rng);
        for idx in &batches {
            let refs: Vec<&Sample> = idx.iter().map(|&i| &train_set[i]).collect();
            let pass = batch_pass(&model, &refs, &ctx, Some(&mut drop_rng), cfg.variant.uses_expert(), true)?;
            if !pass.loss.is_finite() {
                return Err(LabError::Divergence { epoch, step, loss: pass.loss });
            }
            grads.iter_mut().for_each(|g| *g = 0.0);
            model.backward(&pass.tape, &pass.dlogits, &mut grads);
            if let Some(c) = cfg.grad_clip {
                let norm = clip_grad_norm(&mut grads, c);
                if !norm.is_finite() {
                    return Err(LabError::Divergence { epoch, step, loss: norm });
                }
            }
            adam.step(&mut model.params, &grads, lr_at(step, total, warmup, base_lr));
            loss_sum += pass.loss * refs.len() as f64;
            visits += refs.len();
            step += 1;
        }
        let train_loss = loss_sum / train_set.len() as f64;
        let (val_loss, val_expert) = evaluate(&model, &val_set, &ctx, cfg.batch_size)?;
        let mean_expert_score = if cfg.eval_samples > 0 {
            let scfg = SamplerConfig { collision_checks: false, exec: cfg.exec, ..SamplerConfig::default() };
            let gen = Generator::new(&model, &codec, taxonomy, &exempt, scfg);
            let scenes = gen.generate_many(&gen.unconditional(cfg.eval_samples, cfg.seed ^ epoch as u64));
            let scores: Vec<f64> = scenes.iter().flatten().map(|g| expert.score(&g.layout)).collect();
            (!scores.is_empty()).then(|| scores.iter().sum::<f64>() / scores.len() as f64)
        } else {
            None
        };
        let key = if val_loss.is_finite() { val_loss } else { train_loss };
        let is_best = best.as_ref().is_none_or(|b| key < b.0);
        if is_best {
            best = Some((key, model.params.clone(), epoch));
        }
        log::info!("epoch {epoch}: train {train_loss:.4} val {val_loss:.4} expert {val_expert:?}");
        metrics.push(EpochMetrics { epoch, train_loss, val_loss, mean_expert_score, val_expert_loss: val_expert, best: false });
        let best_epoch = best.as_ref().map_or(0, |b| b.2);
        metrics.iter_mut().for_each(|m| m.best = m.epoch == best_epoch);
        if let Some(dir) = out {
            artifact::write_metrics(&dir.join(artifact::METRICS_FILE), &metrics)?;
            ergoscene_model::checkpoint::save(&model, &dir.join(artifact::LAST_FILE))?;
            if is_best {
                ergoscene_model::checkpoint::save(&model, &dir.join(artifact::BEST_FILE))?;
            }
        }
    }
    let (_, best_params, best_epoch) = best.expect("at least one epoch");
    let mut best_model = Model::from_params(model.cfg, best_params)?;
    best_model.exec = model.exec;
    Ok(TrainOutcome { best: best_model, last: model, codec: codec_cfg, metrics, best_epoch, sample_visits: visits, steps: step })
}
