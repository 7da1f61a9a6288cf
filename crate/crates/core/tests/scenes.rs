use std::f64::consts::PI;

use approx::assert_relative_eq;
use ergoscene_core::data::{augment, export_json, import_str, synth_corpus, synth_layout, ImportConfig, RoomTemplate, SynthConfig};
use ergoscene_core::{
    validate, Attr, CategoryId, Codec, CodecConfig, DatasetBounds, ErgoEngine, ErgoParams, ExemptPairs, FurnObj,
    IntersectionEngine, Layout, Taxonomy,
};
use proptest::prelude::*;

fn with_attr(l: &Layout, k: usize, a: Attr, v: f64) -> Layout {
    let mut out = l.clone();
    let o = &mut out.objects[k];
    match a {
        Attr::Orientation => o.orientation = v,
        Attr::Width => o.width = v,
        Attr::Depth => o.depth = v,
        Attr::X => o.x = v,
        Attr::Y => o.y = v,
    }
    out
}

#[test]
fn mixed_corpus_survives_export_encode_and_augment() {
    let t = Taxonomy::default();
    let cfg = SynthConfig::default();
    let corpus = synth_corpus(30, RoomTemplate::Bedroom, 2, &cfg, &t).merge(synth_corpus(30, RoomTemplate::LivingRoom, 3, &cfg, &t)).unwrap();
    let (back, report) = import_str(&export_json(&corpus, &t), "mem", &t, &ImportConfig::default()).unwrap();
    assert_eq!(report.imported, 60);
    assert_eq!(back, corpus);
    let codec = Codec::new(CodecConfig::new(256, corpus.bounds).unwrap(), &t).unwrap();
    for (i, l) in corpus.train.iter().enumerate() {
        assert!(validate(l, &t).is_empty(), "room {i}");
        let a = augment(l, &Default::default(), &t, i as u64);
        assert!(a.len() >= l.len());
        let decoded = codec.decode(&codec.encode(&a).unwrap()).unwrap();
        assert_eq!(decoded.len(), a.len());
    }
}

#[test]
fn ergonomic_gradient_matches_central_differences_off_quarter_turns() {
    let t = Taxonomy::default();
    let ergo = ErgoEngine::new(ErgoParams::default(), &t);
    let h = 1e-5;
    for seed in 0..6 {
        let template = if seed % 2 == 0 { RoomTemplate::Bedroom } else { RoomTemplate::LivingRoom };
        let mut l = synth_layout(template, &SynthConfig::default(), &t, seed);
        // The corner-anchored footprint has an orientation kink at quarter turns.
        for (k, o) in l.objects.iter_mut().enumerate().skip(1) {
            o.orientation = (o.orientation + 0.05 + 0.01 * k as f64).min(PI);
        }
        let g = ergo.scene_score_grad(&l).gradient.unwrap();
        for k in 1..l.len() {
            for a in Attr::ALL {
                let v = l.objects[k].attr(a);
                let num = (ergo.score(&with_attr(&l, k, a, v + h)) - ergo.score(&with_attr(&l, k, a, v - h))) / (2.0 * h);
                assert_relative_eq!(g[k][a as usize], num, epsilon = 1e-6, max_relative = 1e-5);
            }
        }
    }
}

#[test]
fn intersection_loss_ignores_object_order() {
    let t = Taxonomy::default();
    let engine = IntersectionEngine::new(ExemptPairs::default_for(&t), &t);
    for seed in 0..20 {
        let cfg = SynthConfig { sloppy_fraction: 1.0, ..SynthConfig::default() };
        let l = synth_layout(RoomTemplate::LivingRoom, &cfg, &t, seed);
        let mut rev = l.clone();
        rev.objects[1..].reverse();
        assert_relative_eq!(engine.scene_loss(&l), engine.scene_loss(&rev), max_relative = 1e-12);
    }
}

fn arb_layout(first_category: u16) -> impl Strategy<Value = Layout> {
    let obj = (first_category..31, -PI + 1e-6..=PI, 0.1f64..2.0, 0.1f64..2.0, 0.0f64..1.0, 0.0f64..1.0);
    (2.0f64..8.0, 2.0f64..8.0, prop::collection::vec(obj, 0..20)).prop_map(|(w, d, objs)| {
        let mut l = Layout::room(CategoryId(0), w, d);
        for (c, o, fw, fd, u, v) in objs {
            l.push(FurnObj::new(CategoryId(c), o, fw, fd, u * (w - 0.5), v * (d - 0.5)));
        }
        l
    })
}

proptest! {
    #[test]
    fn scores_stay_in_range(l in arb_layout(1)) {
        let t = Taxonomy::default();
        let ergo = ErgoEngine::new(ErgoParams::default(), &t).activity_costs(&l);
        let floor = -(1.0 + ErgoParams::default().epsilon).ln();
        prop_assert!(ergo.score >= floor - 1e-12 && ergo.score <= 5.0 + 1e-9);
        prop_assert!((0.0..=1.0).contains(&ergo.weight_score));
        let geom = IntersectionEngine::new(ExemptPairs::default_for(&t), &t);
        prop_assert!(geom.scene_loss(&l) >= 0.0);
        prop_assert!((0.0..=1.0).contains(&geom.weight_score(&l)));
    }

    // Free-standing furniture only; doors and windows are moved onto the walls.
    #[test]
    fn codec_round_trip_stays_within_a_cell(l in arb_layout(3)) {
        let t = Taxonomy::default();
        let bounds = DatasetBounds { w_min: 2.0, w_max: 8.0, d_min: 2.0, d_max: 8.0 };
        let codec = Codec::new(CodecConfig::new(256, bounds).unwrap(), &t).unwrap();
        let seq = codec.encode(&l).unwrap();
        let g = codec.cell_of(&seq.tokens[..6]);
        let want = codec.snapped(&l).unwrap();
        let got = codec.decode(&seq).unwrap();
        prop_assert_eq!(got.len(), want.len());
        for (a, b) in got.furniture().zip(want.furniture()) {
            prop_assert_eq!(a.category, b.category);
            let d = (a.orientation - b.orientation).abs();
            prop_assert!(d.min(2.0 * PI - d) <= 2.0 * PI / 256.0 + 1e-9);
            for attr in [Attr::Width, Attr::Depth, Attr::X, Attr::Y] {
                prop_assert!((a.attr(attr) - b.attr(attr)).abs() <= g + 1e-9, "{:?}", attr);
            }
        }
    }
}
