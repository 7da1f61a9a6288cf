//! Vertical placement of generated layouts.

use std::collections::BTreeMap;

use ergoscene_core::{CategoryId, FurnObj, Layout, Role, Taxonomy};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HeightRules {
    /// Elevation of window bottoms.
    pub window_sill: f64,
    /// Elevation of ceiling lights.
    pub ceiling_light: f64,
    /// Object heights in meters by category name; supported objects rest on
    /// top of their supporter.
    pub heights: BTreeMap<String, f64>,
    pub default_height: f64,
}

impl Default for HeightRules {
    fn default() -> Self {
        let heights = [
            ("door", 2.1),
            ("window", 1.2),
            ("double_bed", 0.5),
            ("single_bed", 0.5),
            ("kids_bed", 0.5),
            ("wardrobe", 2.0),
            ("bookshelf", 1.8),
            ("cabinet", 0.9),
            ("dresser", 0.8),
            ("tv_stand", 0.5),
            ("nightstand", 0.55),
            ("side_table", 0.55),
            ("desk", 0.75),
            ("dining_table", 0.75),
            ("coffee_table", 0.45),
            ("console_table", 0.8),
            ("chair", 0.9),
            ("armchair", 0.9),
            ("stool", 0.45),
            ("sofa", 0.85),
            ("sectional_sofa", 0.85),
            ("ottoman", 0.4),
            ("ceiling_lamp", 0.2),
            ("pendant_lamp", 0.5),
            ("floor_lamp", 1.6),
            ("table_lamp", 0.45),
            ("tv", 0.6),
            ("computer", 0.45),
            ("plant", 1.0),
            ("children_cabinet", 1.0),
        ];
        HeightRules {
            window_sill: 0.9,
            ceiling_light: 2.5,
            heights: heights.into_iter().map(|(n, h)| (n.to_string(), h)).collect(),
            default_height: 0.8,
        }
    }
}

impl HeightRules {
    pub fn height_of(&self, taxonomy: &Taxonomy, id: CategoryId) -> f64 {
        self.heights.get(taxonomy.name(id)).copied().unwrap_or(self.default_height)
    }
}

/// A furniture object with its vertical extent; stands in for a retrieved mesh.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlacedObject {
    pub category: String,
    pub object: FurnObj,
    pub z: f64,
    pub height: f64,
    /// Index into the layout's objects of the object this one rests on.
    pub support: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlacedScene {
    pub room_width: f64,
    pub room_depth: f64,
    pub objects: Vec<PlacedObject>,
}

fn overlap(a: &FurnObj, b: &FurnObj) -> f64 {
    let (ax0, ay0, ax1, ay1) = a.aabb();
    let (bx0, by0, bx1, by1) = b.aabb();
    (ax1.min(bx1) - ax0.max(bx0)).max(0.0) * (ay1.min(by1) - ay0.max(by0)).max(0.0)
}

/// Elevations for every furniture object (the room itself is skipped).
/// A supported object takes the top of the supporting object it overlaps most
/// in plan; without one it stands on the floor.
pub fn post_process(layout: &Layout, taxonomy: &Taxonomy, rules: &HeightRules) -> PlacedScene {
    let (room_width, room_depth) = layout.room_size();
    let mut objects = Vec::with_capacity(layout.len().saturating_sub(1));
    for (i, o) in layout.objects.iter().enumerate().skip(1) {
        let height = rules.height_of(taxonomy, o.category);
        let mut support = None;
        let z = if taxonomy.has(o.category, Role::Window) {
            rules.window_sill
        } else if taxonomy.has(o.category, Role::CeilingLight) {
            rules.ceiling_light
        } else if taxonomy.has(o.category, Role::Supported) {
            let mut best = 0.0;
            for (j, s) in layout.objects.iter().enumerate().skip(1) {
                if j == i || !taxonomy.has(s.category, Role::Supporting) {
                    continue;
                }
                let a = overlap(o, s);
                if a > best {
                    best = a;
                    support = Some(j);
                }
            }
            support.map_or(0.0, |j| rules.height_of(taxonomy, layout.objects[j].category))
        } else {
            0.0
        };
        objects.push(PlacedObject { category: taxonomy.name(o.category).to_string(), object: *o, z, height, support });
    }
    PlacedScene { room_width, room_depth, objects }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scene() -> (Taxonomy, Layout) {
        let t = Taxonomy::default();
        let mut l = Layout::room(t.room(), 4.0, 3.0);
        l.push(FurnObj::new(t.id("nightstand"), 0.0, 0.5, 0.4, 0.2, 0.0));
        l.push(FurnObj::centered(t.id("table_lamp"), 0.0, 0.2, 0.2, 0.45, 0.2));
        l.push(FurnObj::new(t.id("wardrobe"), 0.0, 1.2, 0.6, 2.0, 0.0));
        l.push(FurnObj::centered(t.id("pendant_lamp"), 0.0, 0.4, 0.4, 2.0, 1.5));
        l.push(FurnObj::new(t.id("window"), 0.0, 1.0, 0.1, 1.5, 2.9));
        l.push(FurnObj::centered(t.id("tv"), 0.0, 1.0, 0.1, 3.0, 2.0));
        (t, l)
    }

    #[test]
    fn lamp_on_stand_sits_at_stand_height() {
        let (t, l) = scene();
        let rules = HeightRules::default();
        let p = post_process(&l, &t, &rules);
        assert_eq!(p.objects[1].support, Some(1));
        assert_eq!(p.objects[1].z, rules.heights["nightstand"]);
    }

    #[test]
    fn fixed_heights_and_floor() {
        let (t, l) = scene();
        let rules = HeightRules { ceiling_light: 2.7, ..HeightRules::default() };
        let p = post_process(&l, &t, &rules);
        assert_eq!(p.objects[2].z, 0.0);
        assert_eq!(p.objects[3].z, 2.7);
        assert_eq!(p.objects[4].z, 0.9);
        // A TV with nothing under it stays on the floor.
        assert_eq!((p.objects[5].z, p.objects[5].support), (0.0, None));
        assert_eq!(p.objects.len(), l.len() - 1);
    }
}
