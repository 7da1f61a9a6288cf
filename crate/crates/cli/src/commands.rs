use std::path::{Path, PathBuf};
use std::time::Instant;

use ergoscene_core::data::{self, synth_corpus, Corpus, ImportConfig, SynthConfig, UnknownPolicy};
use ergoscene_core::{
    CategoryOrder, Codec, CodecConfig, ErgoEngine, ErgoParams, ErgoReport, Exec, ExemptPairs, IntersectionEngine, Layout,
    Taxonomy,
};
use ergoscene_lab::ablate::{self, AblationConfig};
use ergoscene_lab::artifact::{self, RunManifest};
use ergoscene_lab::{post_process, render_svg, Generator, HeightRules, LabError, SamplerConfig, Style, TrainConfig};
use serde::Serialize;

use crate::args::*;

pub const CORPUS_FILE: &str = "corpus.json";
pub const ORDER_FILE: &str = "category_order.json";
pub const REPORT_FILE: &str = "import_report.json";
pub const SCENES_FILE: &str = "scenes.json";
pub const SCENES_CSV: &str = "scenes.csv";
pub const PLACED_FILE: &str = "placed.json";
pub const SCORE_FILE: &str = "score.json";

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
    Divergence(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Data(m) | CliError::Divergence(m) => f.write_str(m),
        }
    }
}

impl From<LabError> for CliError {
    fn from(e: LabError) -> Self {
        match e {
            LabError::Config(_) => CliError::Usage(e.to_string()),
            LabError::Divergence { .. } => CliError::Divergence(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<ergoscene_core::DataError> for CliError {
    fn from(e: ergoscene_core::DataError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<ergoscene_core::CodecError> for CliError {
    fn from(e: ergoscene_core::CodecError) -> Self {
        CliError::Data(e.to_string())
    }
}

type Result<T> = std::result::Result<T, CliError>;

struct Env {
    taxonomy: Taxonomy,
    exec: Exec,
}

pub fn run(cli: Cli) -> Result<()> {
    let taxonomy = match &cli.taxonomy {
        Some(p) => Taxonomy::load(p).map_err(|e| CliError::Data(format!("{}: {e}", p.display())))?,
        None => Taxonomy::default(),
    };
    let env = Env { taxonomy, exec: if cli.sequential { Exec::Sequential } else { Exec::Parallel } };
    match cli.command {
        Command::Preprocess(a) => preprocess(&env, a),
        Command::SynthCorpus(a) => synth(&env, a),
        Command::Train(a) => train(&env, a),
        Command::Finetune(a) => finetune(&env, a),
        Command::Generate(a) => generate(&env, a),
        Command::Score(a) => score(&env, a),
        Command::Ablate(a) => ablate_cmd(&env, a),
        Command::Render(a) => render(&env, a),
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| CliError::Data(format!("{}: {e}", dir.display())))?;
    }
    std::fs::write(path, text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    Ok(artifact::write_json(path, value)?)
}

fn display(p: &Path) -> String {
    p.display().to_string()
}

fn finish(mut m: RunManifest, dir: &Path, inputs: &[&Path], outputs: &[PathBuf]) -> Result<()> {
    m.inputs = inputs.iter().map(|p| display(p)).collect();
    m.outputs = outputs.iter().map(|p| display(p)).collect();
    m.write(dir)?;
    Ok(())
}

fn load_corpus(env: &Env, path: &Path) -> Result<Corpus> {
    let (corpus, report) = data::import(path, &env.taxonomy, &ImportConfig::default())?;
    log::info!("{}: {} train, {} val rooms ({report:?})", path.display(), corpus.train.len(), corpus.val.len());
    Ok(corpus)
}

fn preprocess(env: &Env, a: PreprocessArgs) -> Result<()> {
    let started = Instant::now();
    let mut cfg = ImportConfig { split_seed: a.seed, ..ImportConfig::default() };
    if let Some(p) = &a.grouping {
        cfg.load_grouping(p)?;
    }
    if let Some(t) = a.door_threshold {
        cfg.door_threshold = t;
    }
    if let Some(f) = a.val_fraction {
        if !(0.0..=1.0).contains(&f) {
            return Err(CliError::Usage(format!("--val-fraction must lie in [0, 1], got {f}")));
        }
        cfg.val_fraction = f;
    }
    if a.drop_unknown {
        cfg.unknown = UnknownPolicy::Drop;
    }
    let (corpus, report) = data::import(&a.input, &env.taxonomy, &cfg)?;
    let codec = CodecConfig::new(a.resolution, corpus.bounds)?;
    let mut outputs = vec![a.out.join(CORPUS_FILE), a.out.join(REPORT_FILE), a.out.join(artifact::CODEC_FILE)];
    write_text(&outputs[0], &data::export_json(&corpus, &env.taxonomy))?;
    write_json(&outputs[1], &report)?;
    artifact::save_codec(&codec, &outputs[2])?;
    if a.emit_order {
        let order = CategoryOrder::from_layouts(&corpus.train, &env.taxonomy);
        let path = a.out.join(ORDER_FILE);
        write_text(&path, &order.to_json())?;
        outputs.push(path);
    }
    eprintln!(
        "imported {} of {} rooms ({} non-rectangular, {} over the object cap, {} invalid)",
        report.imported, report.rooms_read, report.dropped_non_rectangular, report.dropped_too_many_objects, report.dropped_invalid
    );
    let mut m = RunManifest::new("preprocess", &cfg, a.seed);
    m.timings.insert("total".into(), started.elapsed().as_secs_f64());
    finish(m, &a.out, &[&a.input], &outputs)
}

fn synth(env: &Env, a: SynthArgs) -> Result<()> {
    let started = Instant::now();
    if a.n == 0 {
        return Err(CliError::Usage("--n must be at least 1".into()));
    }
    let mut cfg = SynthConfig::default();
    for (v, dst) in [
        (a.poor_fraction, &mut cfg.poor_fraction),
        (a.sloppy_fraction, &mut cfg.sloppy_fraction),
        (a.val_fraction, &mut cfg.val_fraction),
    ] {
        if let Some(v) = v {
            if !(0.0..=1.0).contains(&v) {
                return Err(CliError::Usage(format!("fractions must lie in [0, 1], got {v}")));
            }
            *dst = v;
        }
    }
    let mut corpus: Option<Corpus> = None;
    for (i, &template) in a.template.iter().enumerate() {
        let part = synth_corpus(a.n, template, a.seed.wrapping_add(i as u64), &cfg, &env.taxonomy);
        corpus = Some(match corpus {
            None => part,
            Some(c) => c.merge(part)?,
        });
    }
    let corpus = corpus.ok_or_else(|| CliError::Usage("at least one --template is required".into()))?;
    let path = a.out.join(CORPUS_FILE);
    write_text(&path, &data::export_json(&corpus, &env.taxonomy))?;
    let mut m = RunManifest::new("synth-corpus", &(cfg, &a.template, a.n), a.seed);
    m.timings.insert("total".into(), started.elapsed().as_secs_f64());
    finish(m, &a.out, &[], &[path])
}

fn train_config(env: &Env, o: &TrainOpts) -> Result<TrainConfig> {
    let mut cfg = match &o.config {
        Some(p) => TrainConfig::load(p)?,
        None => match o.profile {
            Profile::Desk => TrainConfig::desk(),
            Profile::Paper => TrainConfig::default(),
        },
    };
    macro_rules! set {
        ($($field:ident),*) => { $( if let Some(v) = o.$field { cfg.$field = v; } )* };
    }
    set!(epochs, batch_size, lr, finetune_lr, variant, expert, resolution, augmentations, eval_samples, seed);
    if o.sigma_window.is_some() {
        cfg.sigma_window = o.sigma_window;
    }
    cfg.exec = env.exec;
    cfg.validate()?;
    Ok(cfg)
}

fn sampler_config(env: &Env, o: &SamplerOpts, collision_checks: bool) -> Result<SamplerConfig> {
    let mut cfg = SamplerConfig { collision_checks, exec: env.exec, ..SamplerConfig::default() };
    if let Some(v) = o.top_p {
        cfg.top_p = v;
    }
    if let Some(v) = o.resample_limit {
        cfg.resample_limit = v;
    }
    if let Some(v) = o.restart_budget {
        cfg.restart_budget = v;
    }
    if let Some(v) = o.area_ratio_threshold {
        cfg.area_ratio_threshold = v;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run_outputs(dir: &Path) -> Vec<PathBuf> {
    [artifact::CODEC_FILE, artifact::TRAIN_CONFIG_FILE, artifact::METRICS_FILE, artifact::BEST_FILE, artifact::LAST_FILE]
        .iter()
        .map(|f| dir.join(f))
        .collect()
}

fn train(env: &Env, a: TrainArgs) -> Result<()> {
    let cfg = train_config(env, &a.opts)?;
    let corpus = load_corpus(env, &a.corpus)?;
    let started = Instant::now();
    let out = ergoscene_lab::train(&corpus, &cfg, &env.taxonomy, Some(&a.out))?;
    eprintln!("best epoch {} of {}, {} steps", out.best_epoch, cfg.epochs, out.steps);
    let mut m = RunManifest::new("train", &cfg, cfg.seed);
    m.timings.insert("train".into(), started.elapsed().as_secs_f64());
    finish(m, &a.out, &[&a.corpus], &run_outputs(&a.out))
}

fn finetune(env: &Env, a: FinetuneArgs) -> Result<()> {
    let cfg = train_config(env, &a.opts)?;
    let (base, codec) = artifact::load_run(&a.base)?;
    let corpus = load_corpus(env, &a.corpus)?;
    let started = Instant::now();
    let out = ergoscene_lab::fine_tune(&base, codec, &corpus, &cfg, &env.taxonomy, Some(&a.out))?;
    eprintln!("best epoch {} of {}", out.best_epoch, cfg.epochs);
    let mut m = RunManifest::new("finetune", &cfg, cfg.seed);
    m.timings.insert("train".into(), started.elapsed().as_secs_f64());
    finish(m, &a.out, &[&a.base, &a.corpus], &run_outputs(&a.out))
}

#[derive(Serialize)]
struct SceneRow {
    scene: usize,
    status: &'static str,
    objects: usize,
    ergonomic_score: Option<f64>,
    intersection_loss: Option<f64>,
    rejections: usize,
    restarts: usize,
}

fn generate(env: &Env, a: GenerateArgs) -> Result<()> {
    let t = &env.taxonomy;
    let scfg = sampler_config(env, &a.sampler, !a.no_collision_checks)?;
    let (model, codec_cfg) = artifact::load_run(&a.model)?;
    let codec = Codec::new(codec_cfg, t)?;
    let exempt = ExemptPairs::default_for(t);
    let gen = Generator::new(&model, &codec, t, &exempt, scfg);
    let requests = match &a.conditioned_on {
        Some(p) => {
            let shells = data::read_layouts(p, t)?;
            if shells.is_empty() {
                return Err(CliError::Data(format!("{}: no rooms", p.display())));
            }
            let cycled: Vec<Layout> = shells.iter().cycle().take(a.n).cloned().collect();
            gen.conditioned(&cycled, a.seed)?
        }
        None => gen.unconditional(a.n, a.seed),
    };
    std::fs::create_dir_all(&a.out).map_err(|e| CliError::Data(format!("{}: {e}", a.out.display())))?;
    let started = Instant::now();
    let results = gen.generate_many(&requests);
    let elapsed = started.elapsed().as_secs_f64();

    let ergo = ErgoEngine::new(ErgoParams::default(), t);
    let inter = IntersectionEngine::new(exempt.clone(), t);
    let rules = HeightRules::default();
    let mut layouts = Vec::new();
    let mut placed = Vec::new();
    let mut rows = Vec::new();
    let mut outputs = vec![a.out.join(SCENES_FILE), a.out.join(SCENES_CSV), a.out.join(PLACED_FILE)];
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok(g) => {
                rows.push(SceneRow {
                    scene: i,
                    status: "ok",
                    objects: g.layout.len() - 1,
                    ergonomic_score: Some(ergo.score(&g.layout)),
                    intersection_loss: Some(inter.scene_loss(&g.layout)),
                    rejections: g.rejections,
                    restarts: g.restarts,
                });
                if a.svg {
                    let path = a.out.join(format!("scene_{i:05}.svg"));
                    write_text(&path, &render_svg(&g.layout, t, &Style::default()))?;
                    outputs.push(path);
                }
                placed.push(post_process(&g.layout, t, &rules));
                let mut l = g.layout;
                l.source_id = Some(format!("scene-{i}"));
                layouts.push(l);
            }
            Err(LabError::GenerationFailed { restarts, .. }) => rows.push(SceneRow {
                scene: i,
                status: "failed",
                objects: 0,
                ergonomic_score: None,
                intersection_loss: None,
                rejections: 0,
                restarts,
            }),
            Err(e) => return Err(e.into()),
        }
    }
    write_json(&outputs[0], &data::layouts_to_interchange(&layouts, t))?;
    let mut w = csv::Writer::from_path(&outputs[1]).map_err(|e| CliError::Data(e.to_string()))?;
    for r in &rows {
        w.serialize(r).map_err(|e| CliError::Data(e.to_string()))?;
    }
    w.flush().map_err(|e| CliError::Data(e.to_string()))?;
    write_json(&outputs[2], &placed)?;
    eprintln!("{} of {} scenes in {elapsed:.2} s", layouts.len(), a.n);
    let mut m = RunManifest::new("generate", &(scfg, a.n, &a.conditioned_on), a.seed);
    m.timings.insert("generate".into(), elapsed);
    let mut inputs: Vec<&Path> = vec![&a.model];
    if let Some(p) = &a.conditioned_on {
        inputs.push(p);
    }
    finish(m, &a.out, &inputs, &outputs)
}

#[derive(Serialize)]
struct ObjectGradient {
    index: usize,
    category: String,
    ergonomic: f64,
    intersection: f64,
}

#[derive(Serialize)]
struct SceneScore {
    id: String,
    ergonomics: ErgoReport,
    intersection_loss: f64,
    /// Euclidean norms of the per-object attribute gradients.
    gradient_norms: Vec<ObjectGradient>,
}

#[derive(Serialize)]
struct ScoreFile {
    file: String,
    scenes: Vec<SceneScore>,
}

fn norm(g: &[f64; 5]) -> f64 {
    g.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Scores of every layout in an interchange file.
fn score_layouts(t: &Taxonomy, layouts: &[Layout], file: &Path) -> ScoreFile {
    let ergo = ErgoEngine::new(ErgoParams::default(), t);
    let inter = IntersectionEngine::new(ExemptPairs::default_for(t), t);
    let scenes = layouts
        .iter()
        .enumerate()
        .map(|(i, l)| {
            let mut report = ergo.scene_score_grad(l);
            let eg = report.gradient.take().unwrap_or_default();
            let (loss, ig) = inter.scene_loss_grad(l);
            let gradient_norms = (1..l.len())
                .map(|k| ObjectGradient {
                    index: k,
                    category: t.name(l.objects[k].category).to_string(),
                    ergonomic: eg.get(k).map_or(0.0, norm),
                    intersection: ig.get(k).map_or(0.0, norm),
                })
                .collect();
            SceneScore {
                id: l.source_id.clone().unwrap_or_else(|| format!("room-{i}")),
                ergonomics: report,
                intersection_loss: loss,
                gradient_norms,
            }
        })
        .collect();
    ScoreFile { file: display(file), scenes }
}

fn score(env: &Env, a: ScoreArgs) -> Result<()> {
    let started = Instant::now();
    let layouts = data::read_layouts(&a.layout, &env.taxonomy)?;
    let report = score_layouts(&env.taxonomy, &layouts, &a.layout);
    let json = serde_json::to_string_pretty(&report).expect("report serializes");
    match &a.out {
        Some(dir) => {
            let path = dir.join(SCORE_FILE);
            write_text(&path, &json)?;
            let mut m = RunManifest::new("score", &display(&a.layout), 0);
            m.timings.insert("total".into(), started.elapsed().as_secs_f64());
            finish(m, dir, &[&a.layout], &[path])
        }
        None => {
            println!("{json}");
            Ok(())
        }
    }
}

fn ablate_cmd(env: &Env, a: AblateArgs) -> Result<()> {
    let train = train_config(env, &a.opts)?;
    let sampler = sampler_config(env, &a.sampler, a.collision_checks)?;
    let mut cfg = AblationConfig { train, sampler, ..AblationConfig::default() };
    if let Some(n) = a.scenes {
        cfg.scenes = n;
    }
    if !a.variants.is_empty() {
        cfg.variants = a.variants.clone();
    }
    cfg.sample_seed = cfg.train.seed;
    let corpus = load_corpus(env, &a.corpus)?;
    let started = Instant::now();
    let report = ablate::run(&corpus, &cfg, &env.taxonomy, Some(&a.out))?;
    for r in &report.rows {
        eprintln!("{}: {:.4} [{:.4}, {:.4}]", r.variant, r.mean_score, r.ci95_low, r.ci95_high);
        let dir = a.out.join(r.variant.name());
        let sub = RunManifest::new(&format!("ablate {}", r.variant), &TrainConfig { variant: r.variant, ..cfg.train.clone() }, cfg.train.seed);
        finish(sub, &dir, &[&a.corpus], &run_outputs(&dir))?;
    }
    let mut m = RunManifest::new("ablate", &cfg, cfg.train.seed);
    m.timings.insert("total".into(), started.elapsed().as_secs_f64());
    finish(m, &a.out, &[&a.corpus], &[a.out.join(ablate::REPORT_CSV), a.out.join(ablate::REPORT_SVG)])
}

fn render(env: &Env, a: RenderArgs) -> Result<()> {
    let started = Instant::now();
    if !(a.scale > 0.0) {
        return Err(CliError::Usage("--scale must be positive".into()));
    }
    let style = Style { scale: a.scale, labels: !a.no_labels, ..Style::default() };
    let layouts = data::read_layouts(&a.layout, &env.taxonomy)?;
    let mut outputs = Vec::with_capacity(layouts.len());
    for (i, l) in layouts.iter().enumerate() {
        let path = a.out.join(format!("room_{i:05}.svg"));
        write_text(&path, &render_svg(l, &env.taxonomy, &style))?;
        outputs.push(path);
    }
    let mut m = RunManifest::new("render", &style, 0);
    m.timings.insert("total".into(), started.elapsed().as_secs_f64());
    finish(m, &a.out, &[&a.layout], &outputs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ergoscene_core::FurnObj;
    use std::f64::consts::PI;

    #[test]
    fn empty_room_scores_zero_with_no_activities() {
        let t = Taxonomy::default();
        let s = score_layouts(&t, &[Layout::room(t.room(), 4.0, 3.0)], Path::new("x.json"));
        let e = &s.scenes[0].ergonomics;
        assert_eq!(e.score, 0.0);
        assert!(e.read_book.is_none() && e.watch_tv.is_none() && e.use_computer.is_none() && e.work_at_desk.is_none());
        assert!(s.scenes[0].gradient_norms.is_empty());
    }

    /// A bedroom whose only window sits right behind the TV as seen from the
    /// bed, and whose only light is that window.
    fn glare_room(t: &Taxonomy) -> Layout {
        let mut l = Layout::room(t.room(), 5.0, 4.0);
        l.push(FurnObj::new(t.id("door"), 0.0, 0.9, 0.1, 0.2, 0.0));
        // Window, TV and bed center are collinear; the bed looks slightly past the TV.
        l.push(FurnObj::new(t.id("window"), PI, 1.4, 0.1, 2.5 - 0.3 * 2.95 / 2.65 - 0.7, 3.9));
        l.push(FurnObj::new(t.id("tv_stand"), PI, 1.4, 0.45, 1.8, 3.45));
        l.push(FurnObj::centered(t.id("tv"), PI, 1.1, 0.1, 2.2, 3.65));
        l.push(FurnObj::new(t.id("double_bed"), 0.0, 1.6, 2.0, 1.7, 0.0));
        l
    }

    #[test]
    fn window_behind_tv_and_no_reading_light_score_badly() {
        let t = Taxonomy::default();
        let s = score_layouts(&t, &[glare_room(&t)], Path::new("x.json"));
        let e = &s.scenes[0].ergonomics;
        let prm = ErgoParams::default();
        let mid = (ergoscene_core::ergo::rescale(0.0, &prm) + ergoscene_core::ergo::rescale(1.0, &prm)) / 2.0;
        let (tv, book) = (e.watch_tv.unwrap(), e.read_book.unwrap());
        assert!(tv > mid && book > mid, "tv {tv}, book {book}, midpoint {mid}");
    }

    #[test]
    fn scoring_is_pure() {
        let t = Taxonomy::default();
        let l = [glare_room(&t)];
        let a = serde_json::to_string(&score_layouts(&t, &l, Path::new("x"))).unwrap();
        let b = serde_json::to_string(&score_layouts(&t, &l, Path::new("x"))).unwrap();
        assert_eq!(a, b);
    }
}
