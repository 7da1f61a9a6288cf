//! Rooms, furniture objects and their canonical ordering.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::scalar::{Real, V2};
use crate::taxonomy::{CategoryId, CategoryOrder, Taxonomy};

/// Maximum number of objects in a layout, the room included.
pub const MAX_OBJECTS: usize = 21;

/// One furniture element: category plus a 2D oriented bounding box.
///
/// `(x, y)` is the bottom-left corner of the box's axis-aligned footprint, so
/// for the four cardinal orientations it is the literal bottom-left corner of
/// the object. `width` runs along the object's local x axis and `depth` along
/// its local y axis; orientation 0 faces +y.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FurnObj {
    pub category: CategoryId,
    pub orientation: f64,
    pub width: f64,
    pub depth: f64,
    pub x: f64,
    pub y: f64,
}

/// The five continuous attributes of a [`FurnObj`], in token-slot order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Attr {
    Orientation,
    Width,
    Depth,
    X,
    Y,
}

impl Attr {
    pub const ALL: [Attr; 5] = [Attr::Orientation, Attr::Width, Attr::Depth, Attr::X, Attr::Y];

    /// Position inside the 6-tuple (category is slot 0).
    pub fn slot(self) -> usize {
        self as usize + 1
    }

    pub fn from_slot(slot: usize) -> Option<Attr> {
        Attr::ALL.get(slot.wrapping_sub(1)).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Attr::Orientation => "orientation",
            Attr::Width => "width",
            Attr::Depth => "depth",
            Attr::X => "x",
            Attr::Y => "y",
        }
    }
}

/// Geometry of one object over a generic scalar.
#[derive(Debug, Clone, Copy)]
pub struct ObjGeom<T> {
    pub center: V2<T>,
    /// Facing direction (unit).
    pub dir: V2<T>,
    pub half_w: T,
    pub half_d: T,
    pub angle: T,
}

impl<T: Real> ObjGeom<T> {
    pub fn from_attrs(attrs: [T; 5]) -> Self {
        let [o, w, d, x, y] = attrs;
        let (s, c) = (o.sin(), o.cos());
        let half = T::cst(0.5);
        let hx = (c.abs() * w + s.abs() * d) * half;
        let hy = (s.abs() * w + c.abs() * d) * half;
        ObjGeom {
            center: V2::new(x + hx, y + hy),
            dir: V2::new(-s, c),
            half_w: w * half,
            half_d: d * half,
            angle: o,
        }
    }

    /// Corner, edge-midpoint and center sample points with weights.
    pub fn sample_points(&self) -> [(V2<T>, f64); 9] {
        let (s, c) = (self.angle.sin(), self.angle.cos());
        let local = |u: f64, v: f64| {
            let lx = self.half_w * T::cst(u);
            let ly = self.half_d * T::cst(v);
            V2::new(self.center.x + lx * c - ly * s, self.center.y + lx * s + ly * c)
        };
        [
            (local(0.0, 0.0), 16.0),
            (local(1.0, 0.0), 4.0),
            (local(-1.0, 0.0), 4.0),
            (local(0.0, 1.0), 4.0),
            (local(0.0, -1.0), 4.0),
            (local(1.0, 1.0), 1.0),
            (local(1.0, -1.0), 1.0),
            (local(-1.0, 1.0), 1.0),
            (local(-1.0, -1.0), 1.0),
        ]
    }

    /// Signed distance from `p` to this box (negative inside).
    pub fn signed_distance(&self, p: V2<T>) -> T {
        let (s, c) = (self.angle.sin(), self.angle.cos());
        let rel = p - self.center;
        let lx = rel.x * c + rel.y * s;
        let ly = -rel.x * s + rel.y * c;
        let qx = lx.abs() - self.half_w;
        let qy = ly.abs() - self.half_d;
        let zero = T::zero();
        let ox = qx.max(zero);
        let oy = qy.max(zero);
        let outside = (ox * ox + oy * oy + T::cst(1e-30)).sqrt();
        let outside = if ox.val() > 0.0 || oy.val() > 0.0 { outside } else { zero };
        outside + qx.max(qy).min(zero)
    }
}

impl FurnObj {
    pub fn new(category: CategoryId, orientation: f64, width: f64, depth: f64, x: f64, y: f64) -> Self {
        FurnObj { category, orientation, width, depth, x, y }
    }

    /// Object whose footprint is centered at `(cx, cy)`.
    pub fn centered(category: CategoryId, orientation: f64, width: f64, depth: f64, cx: f64, cy: f64) -> Self {
        let (hx, hy) = aabb_half(orientation, width, depth);
        FurnObj::new(category, orientation, width, depth, cx - hx, cy - hy)
    }

    pub fn attr(&self, a: Attr) -> f64 {
        match a {
            Attr::Orientation => self.orientation,
            Attr::Width => self.width,
            Attr::Depth => self.depth,
            Attr::X => self.x,
            Attr::Y => self.y,
        }
    }

    pub fn set_attr(&mut self, a: Attr, v: f64) {
        match a {
            Attr::Orientation => self.orientation = v,
            Attr::Width => self.width = v,
            Attr::Depth => self.depth = v,
            Attr::X => self.x = v,
            Attr::Y => self.y = v,
        }
    }

    pub fn attrs(&self) -> [f64; 5] {
        [self.orientation, self.width, self.depth, self.x, self.y]
    }

    pub fn geom(&self) -> ObjGeom<f64> {
        ObjGeom::from_attrs(self.attrs())
    }

    pub fn center(&self) -> (f64, f64) {
        let (hx, hy) = aabb_half(self.orientation, self.width, self.depth);
        (self.x + hx, self.y + hy)
    }

    /// Axis-aligned footprint `(x0, y0, x1, y1)`.
    pub fn aabb(&self) -> (f64, f64, f64, f64) {
        let (hx, hy) = aabb_half(self.orientation, self.width, self.depth);
        (self.x, self.y, self.x + 2.0 * hx, self.y + 2.0 * hy)
    }

    pub fn area(&self) -> f64 {
        self.width * self.depth
    }

    /// Footprint corners, counter-clockwise.
    pub fn corners(&self) -> [(f64, f64); 4] {
        let (cx, cy) = self.center();
        let (s, c) = self.orientation.sin_cos();
        let (hw, hd) = (self.width / 2.0, self.depth / 2.0);
        [(-hw, -hd), (hw, -hd), (hw, hd), (-hw, hd)].map(|(u, v)| (cx + u * c - v * s, cy + u * s + v * c))
    }
}

/// Half extents of the axis-aligned footprint of a rotated `w × d` box.
pub fn aabb_half(orientation: f64, width: f64, depth: f64) -> (f64, f64) {
    let (s, c) = orientation.sin_cos();
    ((c.abs() * width + s.abs() * depth) / 2.0, (s.abs() * width + c.abs() * depth) / 2.0)
}

/// Wrap an angle into `(-π, π]`.
pub fn wrap_angle(a: f64) -> f64 {
    let mut r = a.rem_euclid(2.0 * PI);
    if r > PI {
        r -= 2.0 * PI;
    }
    if r <= -PI {
        r += 2.0 * PI;
    }
    r
}

/// A room and its furniture; `objects[0]` is the room itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layout {
    pub objects: Vec<FurnObj>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub room_type: Option<String>,
}

impl Layout {
    /// Empty room of the given size.
    pub fn room(room: CategoryId, width: f64, depth: f64) -> Self {
        Layout {
            objects: vec![FurnObj::new(room, 0.0, width, depth, 0.0, 0.0)],
            source_id: None,
            room_type: None,
        }
    }

    pub fn room_obj(&self) -> &FurnObj {
        &self.objects[0]
    }

    pub fn room_size(&self) -> (f64, f64) {
        let r = self.room_obj();
        (r.width, r.depth)
    }

    pub fn furniture(&self) -> impl Iterator<Item = &FurnObj> {
        self.objects.iter().skip(1)
    }

    pub fn len(&self) -> usize {
        self.objects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.objects.is_empty()
    }

    pub fn push(&mut self, obj: FurnObj) {
        self.objects.push(obj);
    }

    /// The layout turned counter-clockwise by `k` quarter turns about the
    /// room, with the room again at the origin.
    pub fn rotated_quarter(&self, k: u32) -> Layout {
        let mut out = self.clone();
        for _ in 0..k % 4 {
            let (_, d) = out.room_size();
            let rotated: Vec<FurnObj> = out
                .objects
                .iter()
                .enumerate()
                .map(|(i, o)| {
                    if i == 0 {
                        return FurnObj::new(o.category, 0.0, o.depth, o.width, 0.0, 0.0);
                    }
                    let (cx, cy) = o.center();
                    FurnObj::centered(o.category, wrap_angle(o.orientation + PI / 2.0), o.width, o.depth, d - cy, cx)
                })
                .collect();
            out.objects = rotated;
        }
        out
    }
}

/// Corpus-wide extrema of room dimensions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DatasetBounds {
    pub w_min: f64,
    pub w_max: f64,
    pub d_min: f64,
    pub d_max: f64,
}

impl DatasetBounds {
    pub fn is_valid(&self) -> bool {
        self.w_min < self.w_max && self.d_min < self.d_max && self.w_min > 0.0 && self.d_min > 0.0
    }

    pub fn from_layouts<'a>(layouts: impl IntoIterator<Item = &'a Layout>) -> Option<Self> {
        let mut it = layouts.into_iter().peekable();
        it.peek()?;
        let mut b = DatasetBounds {
            w_min: f64::INFINITY,
            w_max: f64::NEG_INFINITY,
            d_min: f64::INFINITY,
            d_max: f64::NEG_INFINITY,
        };
        for l in it {
            let (w, d) = l.room_size();
            b.w_min = b.w_min.min(w);
            b.w_max = b.w_max.max(w);
            b.d_min = b.d_min.min(d);
            b.d_max = b.d_max.max(d);
        }
        // A corpus of identical rooms still needs a non-empty range.
        if b.w_max <= b.w_min {
            b.w_max = b.w_min + 1e-3;
        }
        if b.d_max <= b.d_min {
            b.d_max = b.d_min + 1e-3;
        }
        Some(b)
    }
}

fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn tie_key(obj: &FurnObj, seed: u64) -> u64 {
    obj.attrs().iter().fold(mix64(seed), |h, v| mix64(h ^ v.to_bits()))
}

/// Room first, then furniture by category priority. Objects of the same
/// category are ordered by a seeded hash of their attributes, which makes
/// the result a pure function of the object multiset and the seed.
pub fn canonical_order(layout: &Layout, order: &CategoryOrder, seed: u64) -> Layout {
    let mut objects = layout.objects.clone();
    if objects.is_empty() {
        return layout.clone();
    }
    let rest = &mut objects[1..];
    rest.sort_by(|a, b| {
        order
            .rank(a.category)
            .cmp(&order.rank(b.category))
            .then_with(|| tie_key(a, seed).cmp(&tie_key(b, seed)))
            .then_with(|| a.attrs().partial_cmp(&b.attrs()).unwrap_or(std::cmp::Ordering::Equal))
    });
    Layout { objects, ..layout.clone() }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub index: usize,
    pub rule: &'static str,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "object {}: {}", self.index, self.rule)
    }
}

/// All violated layout invariants, empty for a well-formed layout.
pub fn validate(layout: &Layout, taxonomy: &Taxonomy) -> Vec<Violation> {
    let mut out = Vec::new();
    let room = taxonomy.room();
    if layout.objects.is_empty() {
        out.push(Violation { index: 0, rule: "room-first" });
        return out;
    }
    if layout.objects.len() > MAX_OBJECTS {
        out.push(Violation { index: MAX_OBJECTS, rule: "max-objects" });
    }
    let r = &layout.objects[0];
    if r.category != room {
        out.push(Violation { index: 0, rule: "room-first" });
    } else {
        if r.x != 0.0 || r.y != 0.0 {
            out.push(Violation { index: 0, rule: "room-origin" });
        }
        if r.orientation != 0.0 && r.orientation != -PI / 2.0 {
            out.push(Violation { index: 0, rule: "room-orientation" });
        }
    }
    for (i, o) in layout.objects.iter().enumerate() {
        if !taxonomy.contains(o.category) {
            out.push(Violation { index: i, rule: "category-known" });
        }
        if i > 0 && o.category == room {
            out.push(Violation { index: i, rule: "single-room" });
        }
        if !o.attrs().iter().all(|v| v.is_finite()) {
            out.push(Violation { index: i, rule: "finite" });
            continue;
        }
        if !(o.orientation > -PI && o.orientation <= PI) {
            out.push(Violation { index: i, rule: "orientation-range" });
        }
        if o.width <= 0.0 {
            out.push(Violation { index: i, rule: "width>0" });
        }
        if o.depth <= 0.0 {
            out.push(Violation { index: i, rule: "depth>0" });
        }
    }
    out
}
