//! Corpora: the JSON interchange format, import filters, augmentation and a
//! procedural generator.
//!
//! Interchange schema, version 1:
//!
//! ```json
//! {"version": 1,
//!  "rooms": [{"id": "r0", "type": "bedroom", "split": "train",
//!             "width": 4.0, "depth": 3.5,
//!             "floor": [[0, 0], [4, 0], [4, 3.5], [0, 3.5]],
//!             "objects": [{"category": "double_bed", "orientation": 0.0,
//!                          "width": 1.6, "depth": 2.0, "x": 1.2, "y": 0.0}]}]}
//! ```
//!
//! `split` and `floor` are optional. Object coordinates follow [`FurnObj`]:
//! `(x, y)` is the bottom-left corner of the footprint, in meters, relative to
//! the room's bottom-left corner.

mod augment;
mod synthetic;

pub use augment::{augment, AugmentRules};
pub use synthetic::{synth_corpus, synth_layout, RoomTemplate, SynthConfig};

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::DataError;
use crate::layout::{validate, DatasetBounds, FurnObj, Layout, MAX_OBJECTS};
use crate::taxonomy::{Role, Taxonomy};

pub const INTERCHANGE_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InterchangeObject {
    pub category: String,
    pub orientation: f64,
    pub width: f64,
    pub depth: f64,
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InterchangeRoom {
    pub id: String,
    #[serde(rename = "type")]
    pub room_type: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<Split>,
    pub width: f64,
    pub depth: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub floor: Option<Vec<[f64; 2]>>,
    pub objects: Vec<InterchangeObject>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InterchangeFile {
    pub version: u32,
    pub rooms: Vec<InterchangeRoom>,
}

/// What to do with a category name that is neither in the taxonomy nor in
/// the grouping map.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum UnknownPolicy {
    #[default]
    Reject,
    Drop,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ImportConfig {
    /// Doors farther than this from every wall are dropped (m).
    pub door_threshold: f64,
    /// Raw category name to taxonomy name.
    pub grouping: BTreeMap<String, String>,
    pub unknown: UnknownPolicy,
    /// Fraction of rooms without a split tag assigned to validation.
    pub val_fraction: f64,
    pub split_seed: u64,
}

impl Default for ImportConfig {
    fn default() -> Self {
        ImportConfig {
            door_threshold: 0.25,
            grouping: BTreeMap::new(),
            unknown: UnknownPolicy::Reject,
            val_fraction: 0.1,
            split_seed: 0,
        }
    }
}

impl ImportConfig {
    /// Reads a grouping map file: a JSON object from raw to taxonomy names.
    pub fn load_grouping(&mut self, path: &Path) -> Result<(), DataError> {
        let text = std::fs::read_to_string(path)?;
        self.grouping = serde_json::from_str(&text)
            .map_err(|source| DataError::Parse { path: path.display().to_string(), source })?;
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImportReport {
    pub rooms_read: usize,
    pub imported: usize,
    pub dropped_non_rectangular: usize,
    pub dropped_too_many_objects: usize,
    pub dropped_invalid: usize,
    pub doors_attached: usize,
    pub doors_dropped: usize,
    pub objects_regrouped: usize,
    pub objects_dropped_unknown: usize,
}

/// Train and validation layouts with bounds over the training rooms.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub train: Vec<Layout>,
    pub val: Vec<Layout>,
    pub bounds: DatasetBounds,
}

impl Corpus {
    pub fn new(train: Vec<Layout>, val: Vec<Layout>) -> Result<Self, DataError> {
        let bounds = DatasetBounds::from_layouts(&train).ok_or(DataError::Empty)?;
        Ok(Corpus { train, val, bounds })
    }

    pub fn len(&self) -> usize {
        self.train.len() + self.val.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Rooms whose type tag equals `room_type`; bounds are recomputed.
    pub fn of_type(&self, room_type: &str) -> Result<Corpus, DataError> {
        let keep = |v: &[Layout]| -> Vec<Layout> {
            v.iter().filter(|l| l.room_type.as_deref() == Some(room_type)).cloned().collect()
        };
        Corpus::new(keep(&self.train), keep(&self.val))
    }

    pub fn merge(mut self, other: Corpus) -> Result<Corpus, DataError> {
        self.train.extend(other.train);
        self.val.extend(other.val);
        Corpus::new(self.train, self.val)
    }

    /// First `n_train` training and `n_val` validation rooms.
    pub fn truncated(&self, n_train: usize, n_val: usize) -> Result<Corpus, DataError> {
        Corpus::new(
            self.train.iter().take(n_train).cloned().collect(),
            self.val.iter().take(n_val).cloned().collect(),
        )
    }
}

fn split_hash(id: &str, seed: u64) -> f64 {
    // FNV-1a, mixed with the seed.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325 ^ seed.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    for b in id.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x100_0000_01b3);
    }
    h = (h ^ (h >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    h = (h ^ (h >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    h ^= h >> 31;
    (h >> 11) as f64 / (1u64 << 53) as f64
}

/// Axis-aligned rectangle `[0, w] × [0, d]` after dropping repeated and
/// collinear vertices.
fn is_rectangular(floor: &[[f64; 2]], w: f64, d: f64) -> bool {
    const TOL: f64 = 1e-3;
    let mut pts: Vec<[f64; 2]> = Vec::new();
    for p in floor {
        if pts.last().is_none_or(|q| (q[0] - p[0]).abs() > TOL || (q[1] - p[1]).abs() > TOL) {
            pts.push(*p);
        }
    }
    if pts.len() > 1 && (pts[0][0] - pts[pts.len() - 1][0]).abs() <= TOL && (pts[0][1] - pts[pts.len() - 1][1]).abs() <= TOL
    {
        pts.pop();
    }
    let n = pts.len();
    let corners: Vec<[f64; 2]> = (0..n)
        .filter(|&i| {
            let (a, b, c) = (pts[(i + n - 1) % n], pts[i], pts[(i + 1) % n]);
            let cross = (b[0] - a[0]) * (c[1] - b[1]) - (b[1] - a[1]) * (c[0] - b[0]);
            cross.abs() > TOL * TOL
        })
        .map(|i| pts[i])
        .collect();
    if corners.len() != 4 {
        return false;
    }
    let axis_aligned = (0..4).all(|i| {
        let (a, b) = (corners[i], corners[(i + 1) % 4]);
        (a[0] - b[0]).abs() <= TOL || (a[1] - b[1]).abs() <= TOL
    });
    let (x0, x1) = corners.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(p[0]), hi.max(p[0])));
    let (y0, y1) = corners.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(p[1]), hi.max(p[1])));
    axis_aligned && x0.abs() <= TOL && y0.abs() <= TOL && (x1 - w).abs() <= TOL && (y1 - d).abs() <= TOL
}

/// Gap between a door footprint and its nearest wall, if the door's width
/// runs along that wall.
fn door_wall_gap(o: &FurnObj, w: f64, d: f64) -> Option<f64> {
    const ANG_TOL: f64 = 1e-3;
    let quarter = (o.orientation / (PI / 2.0)).round();
    if (o.orientation - quarter * PI / 2.0).abs() > ANG_TOL {
        return None;
    }
    // Even quarter turns: width along x, so the door belongs on a horizontal wall.
    let horizontal = (quarter as i64).rem_euclid(2) == 0;
    let (x0, y0, x1, y1) = o.aabb();
    let gap = |lo: f64, hi: f64, line: f64| if lo <= line && line <= hi { 0.0 } else { (lo - line).abs().min((hi - line).abs()) };
    Some(if horizontal { gap(y0, y1, 0.0).min(gap(y0, y1, d)) } else { gap(x0, x1, 0.0).min(gap(x0, x1, w)) })
}

fn room_to_layout(
    room: &InterchangeRoom,
    path: &str,
    taxonomy: &Taxonomy,
    cfg: &ImportConfig,
    report: &mut ImportReport,
) -> Result<Option<Layout>, DataError> {
    if let Some(floor) = &room.floor {
        if !is_rectangular(floor, room.width, room.depth) {
            report.dropped_non_rectangular += 1;
            return Ok(None);
        }
    }
    let mut layout = Layout::room(taxonomy.room(), room.width, room.depth);
    layout.source_id = Some(room.id.clone());
    layout.room_type = Some(room.room_type.clone());
    for (k, o) in room.objects.iter().enumerate() {
        let category = match taxonomy.by_name(&o.category) {
            Some(c) => c,
            None => match cfg.grouping.get(&o.category) {
                Some(mapped) => {
                    report.objects_regrouped += 1;
                    taxonomy.by_name(mapped).ok_or_else(|| DataError::UnknownCategory {
                        path: format!("grouping[{:?}]", o.category),
                        name: mapped.clone(),
                    })?
                }
                None if cfg.unknown == UnknownPolicy::Drop => {
                    report.objects_dropped_unknown += 1;
                    continue;
                }
                None => {
                    return Err(DataError::UnknownCategory {
                        path: format!("{path}: rooms[{:?}].objects[{k}].category", room.id),
                        name: o.category.clone(),
                    })
                }
            },
        };
        let obj = FurnObj::new(category, o.orientation, o.width, o.depth, o.x, o.y);
        if taxonomy.has(category, Role::Door) {
            match door_wall_gap(&obj, room.width, room.depth) {
                Some(g) if g < cfg.door_threshold => report.doors_attached += 1,
                _ => {
                    report.doors_dropped += 1;
                    continue;
                }
            }
        }
        layout.push(obj);
    }
    if layout.len() > MAX_OBJECTS {
        report.dropped_too_many_objects += 1;
        return Ok(None);
    }
    let violations = validate(&layout, taxonomy);
    if !violations.is_empty() {
        log::warn!("{path}: room {:?} dropped: {}", room.id, violations[0]);
        report.dropped_invalid += 1;
        return Ok(None);
    }
    Ok(Some(layout))
}

/// Parses interchange JSON held in memory; `path` only labels errors.
pub fn import_str(
    text: &str,
    path: &str,
    taxonomy: &Taxonomy,
    cfg: &ImportConfig,
) -> Result<(Corpus, ImportReport), DataError> {
    let file: InterchangeFile =
        serde_json::from_str(text).map_err(|source| DataError::Parse { path: path.to_string(), source })?;
    if file.version != INTERCHANGE_VERSION {
        return Err(DataError::Version { path: path.to_string(), version: file.version });
    }
    let mut report = ImportReport { rooms_read: file.rooms.len(), ..Default::default() };
    let (mut train, mut val) = (Vec::new(), Vec::new());
    for room in &file.rooms {
        if !(room.width > 0.0 && room.depth > 0.0) {
            return Err(DataError::Invalid {
                path: format!("{path}: rooms[{:?}]", room.id),
                reason: "room dimensions must be positive".into(),
            });
        }
        let Some(layout) = room_to_layout(room, path, taxonomy, cfg, &mut report)? else { continue };
        report.imported += 1;
        let split = room.split.unwrap_or_else(|| {
            if split_hash(&room.id, cfg.split_seed) < cfg.val_fraction {
                Split::Val
            } else {
                Split::Train
            }
        });
        match split {
            Split::Train => train.push(layout),
            Split::Val => val.push(layout),
        }
    }
    Ok((Corpus::new(train, val)?, report))
}

pub fn import(path: &Path, taxonomy: &Taxonomy, cfg: &ImportConfig) -> Result<(Corpus, ImportReport), DataError> {
    let text = std::fs::read_to_string(path)?;
    import_str(&text, &path.display().to_string(), taxonomy, cfg)
}

fn layout_to_room(l: &Layout, idx: usize, split: Option<Split>, taxonomy: &Taxonomy) -> InterchangeRoom {
    let (width, depth) = l.room_size();
    InterchangeRoom {
        id: l.source_id.clone().unwrap_or_else(|| format!("room-{idx}")),
        room_type: l.room_type.clone().unwrap_or_else(|| "unknown".into()),
        split,
        width,
        depth,
        floor: None,
        objects: l
            .furniture()
            .map(|o| InterchangeObject {
                category: taxonomy.name(o.category).to_string(),
                orientation: o.orientation,
                width: o.width,
                depth: o.depth,
                x: o.x,
                y: o.y,
            })
            .collect(),
    }
}

/// Interchange form of loose layouts, without split tags.
pub fn layouts_to_interchange(layouts: &[Layout], taxonomy: &Taxonomy) -> InterchangeFile {
    InterchangeFile {
        version: INTERCHANGE_VERSION,
        rooms: layouts.iter().enumerate().map(|(i, l)| layout_to_room(l, i, None, taxonomy)).collect(),
    }
}

pub fn export(corpus: &Corpus, taxonomy: &Taxonomy) -> InterchangeFile {
    let tagged = corpus
        .train
        .iter()
        .map(|l| (l, Split::Train))
        .chain(corpus.val.iter().map(|l| (l, Split::Val)));
    InterchangeFile {
        version: INTERCHANGE_VERSION,
        rooms: tagged.enumerate().map(|(i, (l, s))| layout_to_room(l, i, Some(s), taxonomy)).collect(),
    }
}

pub fn export_json(corpus: &Corpus, taxonomy: &Taxonomy) -> String {
    serde_json::to_string_pretty(&export(corpus, taxonomy)).expect("interchange serializes")
}

/// Layouts of an interchange file, ignoring splits and filters; for scoring
/// and rendering individual scenes.
pub fn read_layouts(path: &Path, taxonomy: &Taxonomy) -> Result<Vec<Layout>, DataError> {
    let cfg = ImportConfig { door_threshold: f64::INFINITY, ..Default::default() };
    let text = std::fs::read_to_string(path)?;
    let label = path.display().to_string();
    let file: InterchangeFile =
        serde_json::from_str(&text).map_err(|source| DataError::Parse { path: label.clone(), source })?;
    if file.version != INTERCHANGE_VERSION {
        return Err(DataError::Version { path: label, version: file.version });
    }
    let mut report = ImportReport::default();
    let mut out = Vec::new();
    for room in &file.rooms {
        match room_to_layout(room, &label, taxonomy, &cfg, &mut report)? {
            Some(l) => out.push(l),
            None => {
                return Err(DataError::Invalid {
                    path: format!("{label}: rooms[{:?}]", room.id),
                    reason: "room violates layout invariants".into(),
                })
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn room_json(id: &str, floor: Option<&str>, objects: &str) -> String {
        let floor = floor.map(|f| format!(r#","floor":{f}"#)).unwrap_or_default();
        format!(r#"{{"id":"{id}","type":"bedroom","split":"train","width":4.0,"depth":3.0{floor},"objects":[{objects}]}}"#)
    }

    fn file(rooms: &[String]) -> String {
        format!(r#"{{"version":1,"rooms":[{}]}}"#, rooms.join(","))
    }

    const BED: &str = r#"{"category":"double_bed","orientation":0.0,"width":1.6,"depth":2.0,"x":1.0,"y":0.0}"#;

    #[test]
    fn l_shaped_rooms_are_dropped() {
        let t = Taxonomy::default();
        let l_shape = "[[0,0],[4,0],[4,1.5],[2,1.5],[2,3],[0,3]]";
        let rect = "[[0,0],[2,0],[4,0],[4,3],[0,3],[0,0]]";
        let mut rooms: Vec<String> = (0..8).map(|i| room_json(&format!("r{i}"), Some(rect), BED)).collect();
        rooms.push(room_json("l1", Some(l_shape), BED));
        rooms.push(room_json("l2", Some(l_shape), ""));
        let (c, rep) = import_str(&file(&rooms), "mem", &t, &ImportConfig::default()).unwrap();
        assert_eq!(c.len(), 8);
        assert_eq!(rep.dropped_non_rectangular, 2);
    }

    #[test]
    fn doors_attach_below_threshold() {
        let t = Taxonomy::default();
        let near = r#"{"category":"door","orientation":0.0,"width":0.9,"depth":0.1,"x":1.0,"y":2.8}"#;
        let far = r#"{"category":"door","orientation":0.0,"width":0.9,"depth":0.1,"x":1.0,"y":1.5}"#;
        let skew = r#"{"category":"door","orientation":0.3,"width":0.9,"depth":0.1,"x":1.0,"y":2.8}"#;
        let objs = [BED, near, far, skew].join(",");
        let (c, rep) = import_str(&file(&[room_json("a", None, &objs)]), "mem", &t, &ImportConfig::default()).unwrap();
        assert_eq!(rep.doors_attached, 1);
        assert_eq!(rep.doors_dropped, 2);
        assert_eq!(c.train[0].len(), 3);
    }

    #[test]
    fn unknown_categories_follow_policy() {
        let t = Taxonomy::default();
        let odd = r#"{"category":"King-size Bed","orientation":0.0,"width":1.8,"depth":2.0,"x":1.0,"y":0.0}"#;
        let text = file(&[room_json("a", None, odd)]);
        let err = import_str(&text, "mem", &t, &ImportConfig::default()).unwrap_err();
        assert!(matches!(err, DataError::UnknownCategory { ref name, .. } if name == "King-size Bed"));
        let mut cfg = ImportConfig::default();
        cfg.grouping.insert("King-size Bed".into(), "double_bed".into());
        let (c, rep) = import_str(&text, "mem", &t, &cfg).unwrap();
        assert_eq!(rep.objects_regrouped, 1);
        assert_eq!(c.train[0].objects[1].category, t.id("double_bed"));
        let cfg = ImportConfig { unknown: UnknownPolicy::Drop, ..Default::default() };
        let (c, rep) = import_str(&text, "mem", &t, &cfg).unwrap();
        assert_eq!((rep.objects_dropped_unknown, c.train[0].len()), (1, 1));
    }

    #[test]
    fn schema_violations_name_the_source() {
        let t = Taxonomy::default();
        let err = import_str(r#"{"version":1,"rooms":[{"id":"a"}]}"#, "corpus.json", &t, &ImportConfig::default())
            .unwrap_err();
        assert!(err.to_string().starts_with("corpus.json:"));
        let err = import_str(r#"{"version":7,"rooms":[]}"#, "c.json", &t, &ImportConfig::default()).unwrap_err();
        assert!(matches!(err, DataError::Version { version: 7, .. }));
    }

    #[test]
    fn export_import_is_identity() {
        let t = Taxonomy::default();
        let corpus = synth_corpus(40, RoomTemplate::Bedroom, 3, &SynthConfig::default(), &t);
        let text = export_json(&corpus, &t);
        let (back, rep) = import_str(&text, "mem", &t, &ImportConfig::default()).unwrap();
        assert_eq!(rep.imported, 40);
        assert_eq!(back, corpus);
    }

    #[test]
    fn untagged_rooms_split_deterministically() {
        let t = Taxonomy::default();
        let rooms: Vec<String> =
            (0..200).map(|i| room_json(&format!("r{i}"), None, BED).replace(r#","split":"train""#, "")).collect();
        let text = file(&rooms);
        let (a, _) = import_str(&text, "mem", &t, &ImportConfig::default()).unwrap();
        let (b, _) = import_str(&text, "mem", &t, &ImportConfig::default()).unwrap();
        assert_eq!(a, b);
        assert!(a.val.len() > 5 && a.val.len() < 40, "{}", a.val.len());
    }
}
