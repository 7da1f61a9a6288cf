//! Turning corpora into encoded training samples.

use ergoscene_core::data::{augment, AugmentRules};
use ergoscene_core::{canonical_order, CategoryOrder, Codec, Exec, Layout, SceneExpert, Taxonomy, TUPLE};

use crate::error::LabError;

/// One encoded layout with everything the losses need.
#[derive(Debug, Clone)]
pub struct Sample {
    /// Full-length token sequence, padded.
    pub tokens: Vec<u32>,
    /// Tokens up to and including the stop token.
    pub len: usize,
    /// The layout as the codec reconstructs it.
    pub layout: Layout,
    /// Grid cell of the room.
    pub cell: f64,
    /// Expert weight `Ê` of `layout` (zero without an expert).
    pub weight: f64,
}

#[derive(Clone)]
pub struct PrepOptions<'a> {
    /// Augmentation draws per layout.
    pub draws: usize,
    pub rules: AugmentRules,
    pub order: CategoryOrder,
    /// Added to every augmentation seed; keeps validation draws distinct.
    pub seed_offset: u64,
    pub expert: Option<&'a dyn SceneExpert>,
    pub exec: Exec,
}

impl<'a> PrepOptions<'a> {
    pub fn new(taxonomy: &Taxonomy, draws: usize) -> Self {
        PrepOptions {
            draws,
            rules: AugmentRules::default(),
            order: CategoryOrder::default_for(taxonomy),
            seed_offset: 0,
            expert: None,
            exec: Exec::default(),
        }
    }
}

pub fn encode_sample(layout: &Layout, codec: &Codec, expert: Option<&dyn SceneExpert>) -> Result<Sample, LabError> {
    let seq = codec.encode(layout)?;
    let len = seq.content_len(&codec.cfg);
    let decoded = codec.decode(&seq)?;
    let cell = codec.cell_of(&seq.tokens[..TUPLE]);
    let weight = expert.map_or(0.0, |e| e.weight(&decoded));
    Ok(Sample { tokens: seq.tokens, len, layout: decoded, cell, weight })
}

/// `draws` augmented copies of every layout, in layout-major order. Draw `k`
/// of layout `i` uses augmentation seed `offset + i · draws + k`.
pub fn prepare(layouts: &[Layout], codec: &Codec, taxonomy: &Taxonomy, opts: &PrepOptions) -> Result<Vec<Sample>, LabError> {
    let draws = opts.draws.max(1);
    let jobs: Vec<(usize, usize)> = (0..layouts.len()).flat_map(|i| (0..draws).map(move |k| (i, k))).collect();
    opts.exec
        .map(&jobs, |&(i, k)| {
            let seed = opts.seed_offset + (i * draws + k) as u64;
            let aug = if opts.draws == 0 { layouts[i].clone() } else { augment(&layouts[i], &opts.rules, taxonomy, seed) };
            let ordered = canonical_order(&aug, &opts.order, seed);
            encode_sample(&ordered, codec, opts.expert)
        })
        .into_iter()
        .collect()
}
