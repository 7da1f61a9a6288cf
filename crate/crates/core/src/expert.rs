//! Scene-level expert functions usable as training losses.

use serde::{Deserialize, Serialize};

use crate::ergo::ErgoEngine;
use crate::geom::IntersectionEngine;
use crate::layout::{Attr, Layout};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExpertKind {
    Ergonomic,
    Intersection,
}

impl std::fmt::Display for ExpertKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ExpertKind::Ergonomic => "ergonomic",
            ExpertKind::Intersection => "intersection",
        })
    }
}

impl std::str::FromStr for ExpertKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "ergonomic" | "ergo" => Ok(ExpertKind::Ergonomic),
            "intersection" => Ok(ExpertKind::Intersection),
            _ => Err(format!("unknown expert {s:?}")),
        }
    }
}

pub trait SceneExpert: Send + Sync {
    fn kind(&self) -> ExpertKind;

    /// Loss value of the whole scene.
    fn score(&self, layout: &Layout) -> f64;

    /// Per-sample weight in `[0, 1]`.
    fn weight(&self, layout: &Layout) -> f64;

    /// For each `(object, attribute, value)`: the scene loss with that single
    /// attribute replaced by `value`, and its derivative with respect to it.
    fn scores_with_attrs(&self, layout: &Layout, queries: &[(usize, Attr, f64)]) -> Vec<(f64, f64)>;
}

impl SceneExpert for ErgoEngine {
    fn kind(&self) -> ExpertKind {
        ExpertKind::Ergonomic
    }

    fn score(&self, layout: &Layout) -> f64 {
        ErgoEngine::score(self, layout)
    }

    fn weight(&self, layout: &Layout) -> f64 {
        self.weight_score(layout)
    }

    fn scores_with_attrs(&self, layout: &Layout, queries: &[(usize, Attr, f64)]) -> Vec<(f64, f64)> {
        let mut scratch = layout.clone();
        queries
            .iter()
            .map(|&(k, a, v)| {
                let old = scratch.objects[k].attr(a);
                scratch.objects[k].set_attr(a, v);
                let out = self.score_attr_grad(&scratch, k, a);
                scratch.objects[k].set_attr(a, old);
                out
            })
            .collect()
    }
}

impl SceneExpert for IntersectionEngine {
    fn kind(&self) -> ExpertKind {
        ExpertKind::Intersection
    }

    fn score(&self, layout: &Layout) -> f64 {
        self.scene_loss(layout)
    }

    fn weight(&self, layout: &Layout) -> f64 {
        self.weight_score(layout)
    }

    fn scores_with_attrs(&self, layout: &Layout, queries: &[(usize, Attr, f64)]) -> Vec<(f64, f64)> {
        self.losses_with_attrs(layout, queries)
    }
}
