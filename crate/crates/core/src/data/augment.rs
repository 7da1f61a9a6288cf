use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::layout::{FurnObj, Layout, MAX_OBJECTS};
use crate::taxonomy::{CategoryId, Role, Taxonomy};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentRules {
    pub lamp_on_stand: f64,
    pub computer_on_desk: f64,
    pub tv_on_tv_stand: f64,
}

impl Default for AugmentRules {
    fn default() -> Self {
        AugmentRules { lamp_on_stand: 0.5, computer_on_desk: 0.5, tv_on_tv_stand: 1.0 }
    }
}

impl AugmentRules {
    pub fn is_valid(&self) -> bool {
        [self.lamp_on_stand, self.computer_on_desk, self.tv_on_tv_stand].iter().all(|p| (0.0..=1.0).contains(p))
    }
}

fn first_with(t: &Taxonomy, roles: &[Role]) -> Option<CategoryId> {
    t.categories().iter().find(|c| roles.iter().all(|&r| c.has(r))).map(|c| c.id)
}

fn carries(layout: &Layout, support: &FurnObj, cat: CategoryId) -> bool {
    let (x0, y0, x1, y1) = support.aabb();
    layout.furniture().any(|o| {
        let (cx, cy) = o.center();
        o.category == cat && cx >= x0 && cx <= x1 && cy >= y0 && cy <= y1
    })
}

/// Adds lamps to stands, computers to desks and TVs to TV stands. One coin is
/// drawn per candidate support in object order, so the result depends only on
/// the layout and `seed`. Supports that already carry the object are skipped.
pub fn augment(layout: &Layout, rules: &AugmentRules, taxonomy: &Taxonomy, seed: u64) -> Layout {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lamp = first_with(taxonomy, &[Role::StandingLight, Role::Supported]);
    let computer = first_with(taxonomy, &[Role::Computer]);
    let tv = first_with(taxonomy, &[Role::Tv]);
    let mut out = layout.clone();
    for support in layout.furniture() {
        let c = support.category;
        let rule = if taxonomy.has(c, Role::Stand) {
            lamp.map(|k| (k, rules.lamp_on_stand, 0.3, 0.3))
        } else if taxonomy.has(c, Role::Desk) {
            computer.map(|k| (k, rules.computer_on_desk, 0.5, 0.25))
        } else if taxonomy.has(c, Role::TvStand) {
            tv.map(|k| (k, rules.tv_on_tv_stand, 1.2, 0.12))
        } else {
            None
        };
        let Some((cat, p, w, d)): Option<(CategoryId, f64, f64, f64)> = rule else { continue };
        let coin = rng.random::<f64>() < p;
        if !coin || out.len() >= MAX_OBJECTS || carries(&out, support, cat) {
            continue;
        }
        let (cx, cy) = support.center();
        let w = w.min(0.9 * support.width);
        let d = d.min(0.9 * support.depth);
        out.push(FurnObj::centered(cat, support.orientation, w, d, cx, cy));
    }
    out
}
