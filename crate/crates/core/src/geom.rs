//! Oriented-rectangle geometry: signed distances, the sample-point
//! intersection loss, exact overlap areas and the insertion test used during
//! generation.

use std::collections::BTreeSet;
use std::path::Path;


use crate::layout::{Attr, FurnObj, Layout, ObjGeom};
use crate::scalar::{Dual, Real, V2};
use crate::taxonomy::{CategoryId, Role, Taxonomy};

/// Sample-point weights: center 16, edge midpoints 4, corners 1.
pub const SAMPLE_WEIGHTS: [f64; 9] = [16.0, 4.0, 4.0, 4.0, 4.0, 1.0, 1.0, 1.0, 1.0];
pub const SAMPLE_WEIGHT_SUM: f64 = 36.0;

/// Box view of a [`FurnObj`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrientedBox {
    pub center: (f64, f64),
    pub half: (f64, f64),
    pub angle: f64,
}

impl OrientedBox {
    pub fn of(obj: &FurnObj) -> Self {
        OrientedBox { center: obj.center(), half: (obj.width / 2.0, obj.depth / 2.0), angle: obj.orientation }
    }

    fn geom(&self) -> ObjGeom<f64> {
        let (s, c) = self.angle.sin_cos();
        ObjGeom {
            center: V2::new(self.center.0, self.center.1),
            dir: V2::new(-s, c),
            half_w: self.half.0,
            half_d: self.half.1,
            angle: self.angle,
        }
    }
}

/// Signed distance from `p` to the box: positive outside, negative inside.
pub fn signed_distance(p: (f64, f64), b: &OrientedBox) -> f64 {
    b.geom().signed_distance(V2::new(p.0, p.1))
}

/// Penetration of `a`'s sample points into `b`, weighted and normalized.
pub fn pair_penetration<T: Real>(a: &ObjGeom<T>, b: &ObjGeom<T>) -> T {
    let mut acc = T::zero();
    for (p, w) in a.sample_points() {
        acc += T::cst(w) * (-b.signed_distance(p)).max(T::zero());
    }
    acc / T::cst(SAMPLE_WEIGHT_SUM)
}

/// Escape of `a`'s sample points out of the room box.
pub fn room_escape<T: Real>(a: &ObjGeom<T>, room: &ObjGeom<T>) -> T {
    let mut acc = T::zero();
    for (p, w) in a.sample_points() {
        acc += T::cst(w) * room.signed_distance(p).max(T::zero());
    }
    acc / T::cst(SAMPLE_WEIGHT_SUM)
}

/// Pair loss between furniture `fi` and either another object or the room.
pub fn pair_intersection_loss(fi: &FurnObj, fj: &FurnObj, j_is_room: bool) -> f64 {
    if j_is_room {
        room_escape(&fi.geom(), &fj.geom())
    } else {
        pair_penetration(&fi.geom(), &fj.geom())
    }
}

/// Unordered category pairs skipped by the intersection loss and the
/// collision test. A pair `(c, room)` skips room containment for `c`.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ExemptPairs {
    pairs: BTreeSet<(CategoryId, CategoryId)>,
}

impl ExemptPairs {
    pub fn new(pairs: impl IntoIterator<Item = (CategoryId, CategoryId)>) -> Self {
        ExemptPairs { pairs: pairs.into_iter().map(|(a, b)| if a <= b { (a, b) } else { (b, a) }).collect() }
    }

    /// Chairs under tables and desks, doors and windows beyond the walls,
    /// supported objects on their supporters, ceiling lights over anything.
    pub fn default_for(t: &Taxonomy) -> Self {
        let ids = |r: Role| t.with_role(r).collect::<Vec<_>>();
        let mut pairs = Vec::new();
        for c in ids(Role::Chair) {
            for s in ids(Role::Table).into_iter().chain(ids(Role::Desk)) {
                pairs.push((c, s));
            }
        }
        for b in ids(Role::Door).into_iter().chain(ids(Role::Window)) {
            pairs.push((b, t.room()));
        }
        for a in ids(Role::Supported) {
            for s in ids(Role::Supporting) {
                pairs.push((a, s));
            }
        }
        for l in ids(Role::CeilingLight) {
            for c in t.categories() {
                pairs.push((l, c.id));
            }
        }
        ExemptPairs::new(pairs)
    }

    pub fn contains(&self, a: CategoryId, b: CategoryId) -> bool {
        let k = if a <= b { (a, b) } else { (b, a) };
        self.pairs.contains(&k)
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn from_json(text: &str) -> serde_json::Result<Self> {
        let raw: Vec<(u16, u16)> = serde_json::from_str(text)?;
        Ok(ExemptPairs::new(raw.into_iter().map(|(a, b)| (CategoryId(a), CategoryId(b)))))
    }

    pub fn to_json(&self) -> String {
        let raw: Vec<(u16, u16)> = self.pairs.iter().map(|(a, b)| (a.0, b.0)).collect();
        serde_json::to_string(&raw).expect("pairs serialize")
    }

    pub fn load(path: &Path) -> std::io::Result<Self> {
        let text = std::fs::read_to_string(path)?;
        ExemptPairs::from_json(&text).map_err(std::io::Error::other)
    }
}

/// Scene-level intersection loss with exemptions.
#[derive(Debug, Clone)]
pub struct IntersectionEngine {
    pub exempt: ExemptPairs,
    room: CategoryId,
}

impl IntersectionEngine {
    pub fn new(exempt: ExemptPairs, taxonomy: &Taxonomy) -> Self {
        IntersectionEngine { exempt, room: taxonomy.room() }
    }

    fn pair_term<T: Real>(&self, cats: &[CategoryId], geo: &[ObjGeom<T>], i: usize, j: usize) -> T {
        if i == j || self.exempt.contains(cats[i], cats[j]) {
            return T::zero();
        }
        pair_penetration(&geo[i], &geo[j])
    }

    fn room_term<T: Real>(&self, cats: &[CategoryId], geo: &[ObjGeom<T>], i: usize) -> T {
        if self.exempt.contains(cats[i], self.room) {
            return T::zero();
        }
        room_escape(&geo[i], &geo[0])
    }

    fn total<T: Real>(&self, cats: &[CategoryId], geo: &[ObjGeom<T>]) -> T {
        let n = geo.len();
        let mut acc = T::zero();
        for i in 1..n {
            acc += self.room_term(cats, geo, i);
            for j in 1..n {
                acc += self.pair_term(cats, geo, i, j);
            }
        }
        acc
    }

    /// Terms that depend on object `k`.
    fn involving<T: Real>(&self, cats: &[CategoryId], geo: &[ObjGeom<T>], k: usize) -> T {
        let mut acc = self.room_term(cats, geo, k);
        for j in 1..geo.len() {
            if j != k {
                acc += self.pair_term(cats, geo, k, j);
                acc += self.pair_term(cats, geo, j, k);
            }
        }
        acc
    }

    /// Sum of all pair and room-containment losses (unclamped).
    pub fn scene_loss(&self, layout: &Layout) -> f64 {
        let cats: Vec<_> = layout.objects.iter().map(|o| o.category).collect();
        let geo: Vec<_> = layout.objects.iter().map(|o| o.geom()).collect();
        self.total(&cats, &geo)
    }

    /// Loss clamped at 1, used to weight training samples.
    pub fn weight_score(&self, layout: &Layout) -> f64 {
        self.scene_loss(layout).min(1.0)
    }

    /// Scene loss with one attribute replaced by `value`, and its derivative.
    pub fn loss_with_attr(&self, layout: &Layout, index: usize, attr: Attr, value: f64) -> (f64, f64) {
        self.losses_with_attrs(layout, &[(index, attr, value)])[0]
    }

    /// Batched form of [`Self::loss_with_attr`] sharing the unaffected terms.
    pub fn losses_with_attrs(&self, layout: &Layout, queries: &[(usize, Attr, f64)]) -> Vec<(f64, f64)> {
        let cats: Vec<_> = layout.objects.iter().map(|o| o.category).collect();
        let geo: Vec<_> = layout.objects.iter().map(|o| o.geom()).collect();
        let base = self.total(&cats, &geo);
        let mut own = vec![None; geo.len()];
        let dual_geo: Vec<ObjGeom<Dual>> =
            layout.objects.iter().map(|o| ObjGeom::from_attrs(o.attrs().map(Dual::cst))).collect();
        queries
            .iter()
            .map(|&(k, attr, value)| {
                if k == 0 || k >= geo.len() {
                    return (base, 0.0);
                }
                let old = *own[k].get_or_insert_with(|| self.involving(&cats, &geo, k));
                let mut attrs = layout.objects[k].attrs().map(Dual::cst);
                attrs[attr as usize] = Dual::var(value);
                let mut g = dual_geo.clone();
                g[k] = ObjGeom::from_attrs(attrs);
                let new = self.involving(&cats, &g, k);
                (base - old + new.v, new.d)
            })
            .collect()
    }

    /// Loss and its gradient over every furniture attribute.
    pub fn scene_loss_grad(&self, layout: &Layout) -> (f64, Vec<[f64; 5]>) {
        let mut grad = vec![[0.0; 5]; layout.len()];
        let queries: Vec<_> = (1..layout.len())
            .flat_map(|k| Attr::ALL.map(|a| (k, a, layout.objects[k].attr(a))))
            .collect();
        for (&(k, a, _), (_, d)) in queries.iter().zip(self.losses_with_attrs(layout, &queries)) {
            grad[k][a as usize] = d;
        }
        (self.scene_loss(layout), grad)
    }
}

fn polygon_area(poly: &[(f64, f64)]) -> f64 {
    let n = poly.len();
    if n < 3 {
        return 0.0;
    }
    let mut s = 0.0;
    for i in 0..n {
        let (x0, y0) = poly[i];
        let (x1, y1) = poly[(i + 1) % n];
        s += x0 * y1 - x1 * y0;
    }
    s.abs() / 2.0
}

/// Sutherland–Hodgman clip of `subject` against the convex CCW polygon `clip`.
fn clip_polygon(subject: &[(f64, f64)], clip: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut out: Vec<(f64, f64)> = subject.to_vec();
    for i in 0..clip.len() {
        if out.is_empty() {
            break;
        }
        let a = clip[i];
        let b = clip[(i + 1) % clip.len()];
        let side = |p: (f64, f64)| (b.0 - a.0) * (p.1 - a.1) - (b.1 - a.1) * (p.0 - a.0);
        let input = std::mem::take(&mut out);
        for k in 0..input.len() {
            let cur = input[k];
            let prev = input[(k + input.len() - 1) % input.len()];
            let (sc, sp) = (side(cur), side(prev));
            if sc >= 0.0 {
                if sp < 0.0 {
                    out.push(intersect(prev, cur, sp, sc));
                }
                out.push(cur);
            } else if sp >= 0.0 {
                out.push(intersect(prev, cur, sp, sc));
            }
        }
    }
    out
}

fn intersect(p: (f64, f64), q: (f64, f64), sp: f64, sq: f64) -> (f64, f64) {
    let t = sp / (sp - sq);
    (p.0 + t * (q.0 - p.0), p.1 + t * (q.1 - p.1))
}

/// Exact overlap area of two oriented rectangles.
pub fn overlap_area(a: &FurnObj, b: &FurnObj) -> f64 {
    polygon_area(&clip_polygon(&a.corners(), &b.corners()))
}

/// Area of `a` lying outside the room rectangle.
pub fn area_outside_room(a: &FurnObj, room: &FurnObj) -> f64 {
    (a.area() - overlap_area(a, room)).max(0.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Collision {
    Clear,
    /// Overlap with object `with` as a fraction of the smaller footprint.
    Overlap { with: usize, ratio: f64 },
    /// Fraction of the object's footprint outside the room.
    OutsideRoom { fraction: f64 },
}

impl Collision {
    pub fn accepted(&self) -> bool {
        matches!(self, Collision::Clear)
    }
}

/// Whether `new_obj` may be inserted into `layout`.
pub fn collision_check(layout: &Layout, new_obj: &FurnObj, threshold: f64, exempt: &ExemptPairs) -> Collision {
    let room = layout.room_obj();
    if !exempt.contains(new_obj.category, room.category) {
        let fraction = area_outside_room(new_obj, room) / new_obj.area().max(1e-12);
        if fraction > threshold {
            return Collision::OutsideRoom { fraction };
        }
    }
    for (i, other) in layout.objects.iter().enumerate().skip(1) {
        if exempt.contains(new_obj.category, other.category) {
            continue;
        }
        let ratio = overlap_area(new_obj, other) / new_obj.area().min(other.area()).max(1e-12);
        if ratio > threshold {
            return Collision::Overlap { with: i, ratio };
        }
    }
    Collision::Clear
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit(c: CategoryId, cx: f64, cy: f64) -> FurnObj {
        FurnObj::centered(c, 0.0, 1.0, 1.0, cx, cy)
    }

    #[test]
    fn signed_distance_examples() {
        let b = OrientedBox { center: (0.0, 0.0), half: (0.5, 0.5), angle: 0.0 };
        assert!((signed_distance((0.0, 0.0), &b) + 0.5).abs() < 1e-12);
        assert!(signed_distance((0.5, 0.1), &b).abs() < 1e-12);
        assert!((signed_distance((2.0, 0.0), &b) - 1.5).abs() < 1e-12);
        assert!((signed_distance((1.5, 1.5), &b) - 2f64.sqrt()).abs() < 1e-12);
        let rot = OrientedBox { center: (0.0, 0.0), half: (1.0, 0.25), angle: std::f64::consts::FRAC_PI_2 };
        assert!((signed_distance((0.0, 0.9), &rot) + 0.1).abs() < 1e-12);
    }

    #[test]
    fn pair_loss_examples() {
        let c = CategoryId(6);
        let a = unit(c, 0.0, 0.0);
        assert_eq!(pair_intersection_loss(&a, &unit(c, 4.0, 0.0), false), 0.0);
        assert!((pair_intersection_loss(&a, &a, false) - 8.0 / 36.0).abs() < 1e-12);
        let room = FurnObj::new(CategoryId(0), 0.0, 5.0, 5.0, 0.0, 0.0);
        assert_eq!(pair_intersection_loss(&unit(c, 2.0, 2.0), &room, true), 0.0);
        assert!(pair_intersection_loss(&unit(c, -0.2, 2.0), &room, true) > 0.0);
    }

    #[test]
    fn exempt_chair_under_table() {
        let t = Taxonomy::default();
        let eng = IntersectionEngine::new(ExemptPairs::default_for(&t), &t);
        let mut l = Layout::room(t.room(), 5.0, 5.0);
        l.push(FurnObj::centered(t.id("dining_table"), 0.0, 1.6, 0.9, 2.5, 2.5));
        l.push(FurnObj::centered(t.id("chair"), 0.0, 0.5, 0.5, 2.5, 2.2));
        assert_eq!(eng.scene_loss(&l), 0.0);
        l.objects[2].category = t.id("wardrobe");
        assert!(eng.scene_loss(&l) > 0.0);
    }

    #[test]
    fn overlap_of_offset_unit_squares() {
        let c = CategoryId(6);
        let a = unit(c, 0.0, 0.0);
        assert!((overlap_area(&a, &unit(c, 0.5, 0.0)) - 0.5).abs() < 1e-12);
        assert!((overlap_area(&a, &a) - 1.0).abs() < 1e-12);
        assert_eq!(overlap_area(&a, &unit(c, 3.0, 0.0)), 0.0);
        let rot = FurnObj::centered(c, std::f64::consts::FRAC_PI_4, 1.0, 1.0, 0.0, 0.0);
        let expect = 2.0 * (2f64.sqrt() - 1.0);
        assert!((overlap_area(&a, &rot) - expect).abs() < 1e-12);
    }

    #[test]
    fn collision_examples() {
        let t = Taxonomy::default();
        let ex = ExemptPairs::default_for(&t);
        let mut l = Layout::room(t.room(), 5.0, 5.0);
        l.push(unit(t.id("wardrobe"), 2.0, 2.0));
        let shifted = unit(t.id("cabinet"), 2.5, 2.0);
        assert!(matches!(collision_check(&l, &shifted, 0.2, &ex), Collision::Overlap { with: 1, .. }));
        let window = FurnObj::new(t.id("window"), 0.0, 1.2, 0.2, 1.0, 4.95);
        assert!(collision_check(&l, &window, 0.2, &ex).accepted());
        let lamp = unit(t.id("ceiling_lamp"), 2.0, 2.0);
        assert!(collision_check(&l, &lamp, 0.2, &ex).accepted());
        let outside = unit(t.id("cabinet"), -0.2, 3.5);
        assert!(matches!(collision_check(&l, &outside, 0.2, &ex), Collision::OutsideRoom { .. }));
    }

    #[test]
    fn exempt_pairs_json_round_trip() {
        let t = Taxonomy::default();
        let ex = ExemptPairs::default_for(&t);
        assert_eq!(ExemptPairs::from_json(&ex.to_json()).unwrap(), ex);
        assert!(ex.contains(t.id("desk"), t.id("chair")));
        assert!(ex.contains(t.room(), t.id("door")));
    }
}
