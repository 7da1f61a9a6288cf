//! Loss-variant ablation: train every variant under one configuration,
//! sample scenes from each and compare their mean expert scores.

use std::fmt::Write as _;
use std::path::Path;

use ergoscene_core::data::Corpus;
use ergoscene_core::{Codec, CodecConfig, ExemptPairs, Layout, Taxonomy};
use ergoscene_model::Model;
use serde::{Deserialize, Serialize};

use crate::error::LabError;
use crate::loss::Variant;
use crate::sample::{Generator, SamplerConfig};
use crate::train::{make_expert, train, TrainConfig};

pub const REPORT_CSV: &str = "ablation.csv";
pub const REPORT_SVG: &str = "ablation.svg";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblationConfig {
    /// Shared by every variant; its `variant` field is ignored.
    pub train: TrainConfig,
    pub sampler: SamplerConfig,
    /// Scenes generated per variant.
    pub scenes: usize,
    pub sample_seed: u64,
    pub variants: Vec<Variant>,
}

impl Default for AblationConfig {
    fn default() -> Self {
        AblationConfig {
            train: TrainConfig::desk(),
            sampler: SamplerConfig { collision_checks: false, ..SamplerConfig::default() },
            scenes: 1000,
            sample_seed: 0x5eed,
            variants: Variant::ALL.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub variant: Variant,
    pub scenes: usize,
    pub failures: usize,
    pub mean_score: f64,
    pub std_dev: f64,
    pub ci95_low: f64,
    pub ci95_high: f64,
    pub best_epoch: usize,
}

impl AblationRow {
    /// Mean with a normal-approximation 95% interval.
    pub fn from_scores(variant: Variant, scores: &[f64], failures: usize, best_epoch: usize) -> Self {
        let n = scores.len() as f64;
        let mean = scores.iter().sum::<f64>() / n;
        let var = if scores.len() > 1 { scores.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
        let sd = var.sqrt();
        let half = 1.96 * sd / n.sqrt();
        AblationRow {
            variant,
            scenes: scores.len(),
            failures,
            mean_score: mean,
            std_dev: sd,
            ci95_low: mean - half,
            ci95_high: mean + half,
            best_epoch,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub expert: ergoscene_core::ExpertKind,
    pub rows: Vec<AblationRow>,
}

impl AblationReport {
    pub fn row(&self, v: Variant) -> Option<&AblationRow> {
        self.rows.iter().find(|r| r.variant == v)
    }

    pub fn write(&self, dir: &Path) -> Result<(), LabError> {
        std::fs::create_dir_all(dir).map_err(LabError::io(dir))?;
        let csv_path = dir.join(REPORT_CSV);
        let mut w = csv::Writer::from_path(&csv_path)?;
        for r in &self.rows {
            w.serialize(r)?;
        }
        w.flush().map_err(LabError::io(&csv_path))?;
        let svg_path = dir.join(REPORT_SVG);
        std::fs::write(&svg_path, self.bar_chart()).map_err(LabError::io(&svg_path))
    }

    /// Bars of the mean score per variant with 95% interval whiskers.
    pub fn bar_chart(&self) -> String {
        let (w, h, pad) = (480.0, 320.0, 48.0);
        let top = self.rows.iter().map(|r| r.ci95_high).fold(0.0_f64, f64::max).max(1e-12) * 1.1;
        let n = self.rows.len().max(1) as f64;
        let slot = (w - 2.0 * pad) / n;
        let y_of = |v: f64| h - pad - (v.max(0.0) / top) * (h - 2.0 * pad);
        let mut s = String::new();
        let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#);
        let _ = writeln!(
            s,
            r##"<line x1="{pad}" y1="{:.3}" x2="{:.3}" y2="{:.3}" stroke="#000"/>"##,
            h - pad,
            w - pad,
            h - pad
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.3}" y="20" font-size="13" text-anchor="middle" font-family="sans-serif">mean {} score</text>"#,
            w / 2.0,
            self.expert
        );
        for (i, r) in self.rows.iter().enumerate() {
            let x = pad + slot * (i as f64 + 0.2);
            let bw = slot * 0.6;
            let y = y_of(r.mean_score);
            let cx = x + bw / 2.0;
            let _ = writeln!(
                s,
                r##"<rect x="{x:.3}" y="{y:.3}" width="{bw:.3}" height="{:.3}" fill="#6a8fc7"/>"##,
                h - pad - y
            );
            let (lo, hi) = (y_of(r.ci95_low), y_of(r.ci95_high));
            let _ = writeln!(s, r##"<line x1="{cx:.3}" y1="{lo:.3}" x2="{cx:.3}" y2="{hi:.3}" stroke="#000"/>"##);
            for yy in [lo, hi] {
                let _ = writeln!(
                    s,
                    r##"<line x1="{:.3}" y1="{yy:.3}" x2="{:.3}" y2="{yy:.3}" stroke="#000"/>"##,
                    cx - 6.0,
                    cx + 6.0
                );
            }
            let _ = writeln!(
                s,
                r#"<text x="{cx:.3}" y="{:.3}" font-size="12" text-anchor="middle" font-family="sans-serif">{} ({:.4})</text>"#,
                h - pad + 18.0,
                r.variant,
                r.mean_score
            );
        }
        s.push_str("</svg>\n");
        s
    }
}

/// Generated layouts of one model plus the number of failed scenes.
pub fn sample_layouts(
    model: &Model<f32>,
    codec: CodecConfig,
    taxonomy: &Taxonomy,
    sampler: &SamplerConfig,
    scenes: usize,
    seed: u64,
) -> Result<(Vec<Layout>, usize), LabError> {
    let codec = Codec::new(codec, taxonomy)?;
    let exempt = ExemptPairs::default_for(taxonomy);
    let gen = Generator::new(model, &codec, taxonomy, &exempt, *sampler);
    let mut layouts = Vec::with_capacity(scenes);
    let mut failures = 0;
    for r in gen.generate_many(&gen.unconditional(scenes, seed)) {
        match r {
            Ok(g) => layouts.push(g.layout),
            Err(LabError::GenerationFailed { .. }) => failures += 1,
            Err(e) => return Err(e),
        }
    }
    Ok((layouts, failures))
}

/// Trains each configured variant, with per-variant checkpoints under
/// `out/<variant>` when `out` is set, and scores its samples.
pub fn run(corpus: &Corpus, cfg: &AblationConfig, taxonomy: &Taxonomy, out: Option<&Path>) -> Result<AblationReport, LabError> {
    if cfg.scenes == 0 || cfg.variants.is_empty() {
        return Err(LabError::Config("ablation needs at least one variant and one scene".into()));
    }
    cfg.sampler.validate()?;
    let expert = make_expert(cfg.train.expert, taxonomy);
    let mut rows = Vec::with_capacity(cfg.variants.len());
    for &variant in &cfg.variants {
        let tc = TrainConfig { variant, ..cfg.train.clone() };
        let dir = out.map(|d| d.join(variant.name()));
        let outcome = train(corpus, &tc, taxonomy, dir.as_deref())?;
        let (layouts, failures) = sample_layouts(&outcome.best, outcome.codec, taxonomy, &cfg.sampler, cfg.scenes, cfg.sample_seed)?;
        if layouts.is_empty() {
            return Err(LabError::GenerationFailed { scene: 0, restarts: cfg.sampler.restart_budget });
        }
        let scores: Vec<f64> = layouts.iter().map(|l| expert.score(l)).collect();
        let row = AblationRow::from_scores(variant, &scores, failures, outcome.best_epoch);
        log::info!("{variant}: mean {:.4} over {} scenes", row.mean_score, row.scenes);
        rows.push(row);
    }
    let report = AblationReport { expert: cfg.train.expert, rows };
    if let Some(dir) = out {
        report.write(dir)?;
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interval_is_symmetric_about_the_mean() {
        let r = AblationRow::from_scores(Variant::V1, &[1.0, 2.0, 3.0, 4.0], 0, 1);
        assert_eq!(r.mean_score, 2.5);
        assert!((r.std_dev - (5.0f64 / 3.0).sqrt()).abs() < 1e-12);
        assert!((r.ci95_high - r.mean_score - (r.mean_score - r.ci95_low)).abs() < 1e-12);
        let one = AblationRow::from_scores(Variant::V0, &[0.3], 0, 1);
        assert_eq!((one.ci95_low, one.ci95_high), (0.3, 0.3));
    }

    #[test]
    fn chart_has_one_bar_per_row() {
        let rows = Variant::ALL.iter().map(|&v| AblationRow::from_scores(v, &[0.1, 0.2], 0, 1)).collect();
        let rep = AblationReport { expert: ergoscene_core::ExpertKind::Ergonomic, rows };
        let svg = rep.bar_chart();
        assert_eq!(svg.matches("<rect").count(), 4);
        assert_eq!(svg, rep.bar_chart());
    }
}
