//! Differentiable ergonomic scoring.
//!
//! Four rule costs (reach, visibility, lighting, glare), each in `[0, 1]`, are
//! combined into per-activity costs and averaged into one scene score. The
//! scaled score passes every rule cost through `-ln(1 + ε - E)` first, the
//! weight score does not and stays in `[0, 1]`.

use serde::{Deserialize, Serialize};

use crate::error::ErgoError;
use crate::layout::{Attr, Layout, ObjGeom};
use crate::scalar::{Dual, Real, V2};
use crate::taxonomy::{CategoryId, Role, Taxonomy};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErgoParams {
    /// Center of the reach sigmoid (m).
    pub reach_distance: f64,
    /// Steepness of the reach sigmoid.
    pub reach_sharpness: f64,
    /// Temperature of every softmin/softmax aggregation.
    pub temperature: f64,
    /// Offset of the log re-scaling.
    pub epsilon: f64,
    /// Distance of the implied book in front of a seat (m).
    pub book_offset: f64,
}

impl Default for ErgoParams {
    fn default() -> Self {
        ErgoParams {
            reach_distance: 0.8,
            reach_sharpness: 15.0,
            temperature: 10.0,
            epsilon: (-5.0f64).exp(),
            book_offset: 0.3,
        }
    }
}

fn reach<T: Real>(p: V2<T>, q: V2<T>, prm: &ErgoParams) -> T {
    let dist = (q - p).norm_safe();
    T::cst(1.0) / (T::cst(1.0) + (T::cst(-prm.reach_sharpness) * (dist - T::cst(prm.reach_distance))).exp())
}

fn visibility<T: Real>(p: V2<T>, u: V2<T>, q: V2<T>) -> T {
    let v = (q - p).normalized();
    let a = (T::cst(1.0) + u.dot(v)) * T::cst(0.5);
    T::cst(1.0) - a * a
}

/// Weighted sum `⟨e, softmax(β·e)⟩`; a negative `beta` gives the softmin form.
pub fn soft_aggregate<T: Real>(values: &[T], beta: f64) -> T {
    debug_assert!(!values.is_empty());
    let shift = values
        .iter()
        .map(|v| beta * v.val())
        .fold(f64::NEG_INFINITY, f64::max);
    let mut num = T::zero();
    let mut den = T::zero();
    for &v in values {
        let w = (T::cst(beta) * v - T::cst(shift)).exp();
        num += w * v;
        den += w;
    }
    num / den
}

fn lighting<T: Real>(p: V2<T>, q: V2<T>, lights: &[V2<T>], prm: &ErgoParams) -> T {
    if lights.is_empty() {
        return T::cst(1.0);
    }
    let v = (q - p).normalized();
    let costs: Vec<T> = lights
        .iter()
        .map(|&b| {
            let l = (q - b).normalized();
            (T::cst(1.0) - (T::cst(1.0) + v.dot(l)) * T::cst(0.5)).powi(4)
        })
        .collect();
    soft_aggregate(&costs, -prm.temperature)
}

fn glare<T: Real>(p: V2<T>, q: V2<T>, lights: &[V2<T>], prm: &ErgoParams) -> T {
    if lights.is_empty() {
        return T::zero();
    }
    let v = (q - p).normalized();
    let costs: Vec<T> = lights
        .iter()
        .map(|&b| {
            let g = (b - p).normalized();
            ((T::cst(1.0) + v.dot(g)) * T::cst(0.5)).powi(4)
        })
        .collect();
    soft_aggregate(&costs, prm.temperature)
}

fn rescale_t<T: Real>(e: T, prm: &ErgoParams) -> T {
    -(T::cst(1.0 + prm.epsilon) - e).ln()
}

trait NormSafe<T> {
    fn norm_safe(self) -> T;
}

impl<T: Real> NormSafe<T> for V2<T> {
    fn norm_safe(self) -> T {
        (self.dot(self) + T::cst(1e-24)).sqrt()
    }
}

fn p2(p: (f64, f64)) -> V2<f64> {
    V2::new(p.0, p.1)
}

/// Reach cost between a seated position `p` and a target `q`.
pub fn reach_cost(p: (f64, f64), q: (f64, f64), prm: &ErgoParams) -> f64 {
    reach(p2(p), p2(q), prm)
}

/// Visibility of `q` from `p` looking along the unit vector `u`.
pub fn visibility_cost(p: (f64, f64), u: (f64, f64), q: (f64, f64)) -> Result<f64, ErgoError> {
    if p == q {
        return Err(ErgoError::Degenerate);
    }
    Ok(visibility(p2(p), p2(u), p2(q)))
}

/// Lighting of `q` viewed from `p` by the given light sources.
pub fn lighting_cost(p: (f64, f64), q: (f64, f64), lights: &[(f64, f64)], prm: &ErgoParams) -> f64 {
    let b: Vec<_> = lights.iter().copied().map(p2).collect();
    lighting(p2(p), p2(q), &b, prm)
}

/// Glare from the given (non-ceiling) lights while looking from `p` to `q`.
pub fn glare_cost(p: (f64, f64), q: (f64, f64), lights: &[(f64, f64)], prm: &ErgoParams) -> f64 {
    let b: Vec<_> = lights.iter().copied().map(p2).collect();
    glare(p2(p), p2(q), &b, prm)
}

/// Log re-scaling of a `[0, 1]` cost onto `[-ln(1+ε), 5]`.
pub fn rescale(e: f64, prm: &ErgoParams) -> f64 {
    rescale_t(e, prm)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activity {
    ReadBook,
    WatchTv,
    UseComputer,
    WorkAtDesk,
}

impl Activity {
    pub const ALL: [Activity; 4] = [Activity::ReadBook, Activity::WatchTv, Activity::UseComputer, Activity::WorkAtDesk];
}

/// Per-activity and overall scores, optionally with gradients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErgoReport {
    pub read_book: Option<f64>,
    pub watch_tv: Option<f64>,
    pub use_computer: Option<f64>,
    pub work_at_desk: Option<f64>,
    /// Mean of the present (scaled) activity costs.
    pub score: f64,
    /// Same aggregation over unscaled rule costs, in `[0, 1]`.
    pub weight_score: f64,
    /// `∂score/∂(orientation, width, depth, x, y)` per object; the room row is zero.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gradient: Option<Vec<[f64; 5]>>,
}

impl ErgoReport {
    pub fn activity(&self, a: Activity) -> Option<f64> {
        match a {
            Activity::ReadBook => self.read_book,
            Activity::WatchTv => self.watch_tv,
            Activity::UseComputer => self.use_computer,
            Activity::WorkAtDesk => self.work_at_desk,
        }
    }
}

#[derive(Debug, Clone, Default)]
struct RoleTable {
    seat: Vec<bool>,
    chair: Vec<bool>,
    work_surface: Vec<bool>,
    tv: Vec<bool>,
    computer: Vec<bool>,
    light: Vec<bool>,
    ceiling: Vec<bool>,
}

impl RoleTable {
    fn new(t: &Taxonomy) -> Self {
        let col = |f: &dyn Fn(&crate::taxonomy::Category) -> bool| t.categories().iter().map(f).collect::<Vec<_>>();
        RoleTable {
            seat: col(&|c| c.has(Role::Bed) || c.has(Role::Chair) || c.has(Role::Sofa)),
            chair: col(&|c| c.has(Role::Chair)),
            work_surface: col(&|c| c.has(Role::Table) || c.has(Role::Desk)),
            tv: col(&|c| c.has(Role::Tv)),
            computer: col(&|c| c.has(Role::Computer)),
            light: col(&|c| c.is_light()),
            ceiling: col(&|c| c.has(Role::CeilingLight)),
        }
    }

    fn is(col: &[bool], c: CategoryId) -> bool {
        col.get(c.index()).copied().unwrap_or(false)
    }
}

/// Activity costs over a generic scalar: `(scaled, unscaled)` per activity.
#[derive(Debug, Clone, Copy)]
struct Activities<T> {
    costs: [Option<(T, T)>; 4],
}

impl<T: Real> Activities<T> {
    fn overall(&self) -> (T, T) {
        let present: Vec<_> = self.costs.iter().flatten().collect();
        if present.is_empty() {
            return (T::zero(), T::zero());
        }
        let n = T::cst(present.len() as f64);
        let mut s = T::zero();
        let mut u = T::zero();
        for &&(a, b) in &present {
            s += a;
            u += b;
        }
        (s / n, u / n)
    }
}

/// Ergonomic cost engine for one taxonomy.
#[derive(Debug, Clone)]
pub struct ErgoEngine {
    pub params: ErgoParams,
    roles: RoleTable,
}

impl ErgoEngine {
    pub fn new(params: ErgoParams, taxonomy: &Taxonomy) -> Self {
        ErgoEngine { params, roles: RoleTable::new(taxonomy) }
    }

    fn evaluate<T: Real>(&self, cats: &[CategoryId], geo: &[ObjGeom<T>]) -> Activities<T> {
        let prm = &self.params;
        let r = &self.roles;
        let idx = |col: &[bool]| -> Vec<usize> { (1..cats.len()).filter(|&i| RoleTable::is(col, cats[i])).collect() };
        let seats = idx(&r.seat);
        let chairs = idx(&r.chair);
        let surfaces = idx(&r.work_surface);
        let tvs = idx(&r.tv);
        let computers = idx(&r.computer);
        let lights: Vec<V2<T>> = idx(&r.light).into_iter().map(|i| geo[i].center).collect();
        let glare_lights: Vec<V2<T>> = (1..cats.len())
            .filter(|&i| RoleTable::is(&r.light, cats[i]) && !RoleTable::is(&r.ceiling, cats[i]))
            .map(|i| geo[i].center)
            .collect();

        let s = |e: T| rescale_t(e, prm);
        // Each activity: list of per-(seat, target) rule-cost tuples.
        let aggregate = |terms: Vec<Vec<T>>| -> Option<(T, T)> {
            if terms.is_empty() {
                return None;
            }
            let scaled: Vec<T> = terms
                .iter()
                .map(|t| t.iter().fold(T::zero(), |a, &e| a + s(e)) / T::cst(t.len() as f64))
                .collect();
            let raw: Vec<T> =
                terms.iter().map(|t| t.iter().fold(T::zero(), |a, &e| a + e) / T::cst(t.len() as f64)).collect();
            Some((soft_aggregate(&scaled, -prm.temperature), soft_aggregate(&raw, -prm.temperature)))
        };

        let book = aggregate(
            seats
                .iter()
                .map(|&j| {
                    let p = geo[j].center;
                    let q = p + geo[j].dir.scale(T::cst(prm.book_offset));
                    vec![lighting(p, q, &lights, prm), glare(p, q, &glare_lights, prm)]
                })
                .collect(),
        );
        let pairs = |a: &[usize], b: &[usize]| -> Vec<(usize, usize)> {
            a.iter().flat_map(|&j| b.iter().map(move |&k| (j, k))).filter(|(j, k)| j != k).collect()
        };
        let tv = aggregate(
            pairs(&seats, &tvs)
                .into_iter()
                .map(|(j, k)| {
                    let (p, u, q) = (geo[j].center, geo[j].dir, geo[k].center);
                    vec![visibility(p, u, q), glare(p, q, &glare_lights, prm)]
                })
                .collect(),
        );
        let comp = aggregate(
            pairs(&seats, &computers)
                .into_iter()
                .map(|(j, k)| {
                    let (p, u, q) = (geo[j].center, geo[j].dir, geo[k].center);
                    vec![visibility(p, u, q), glare(p, q, &glare_lights, prm), reach(p, q, prm)]
                })
                .collect(),
        );
        let work = aggregate(
            pairs(&chairs, &surfaces)
                .into_iter()
                .map(|(j, k)| {
                    let (p, u, q) = (geo[j].center, geo[j].dir, geo[k].center);
                    vec![visibility(p, u, q), lighting(p, q, &lights, prm), reach(p, q, prm)]
                })
                .collect(),
        );
        Activities { costs: [book, tv, comp, work] }
    }

    fn report_from(acts: &Activities<f64>) -> ErgoReport {
        let (score, weight_score) = acts.overall();
        let c = |i: usize| acts.costs[i].map(|(s, _)| s);
        ErgoReport {
            read_book: c(0),
            watch_tv: c(1),
            use_computer: c(2),
            work_at_desk: c(3),
            score,
            weight_score,
            gradient: None,
        }
    }

    fn cats(layout: &Layout) -> Vec<CategoryId> {
        layout.objects.iter().map(|o| o.category).collect()
    }

    pub fn activity_costs(&self, layout: &Layout) -> ErgoReport {
        let geo: Vec<ObjGeom<f64>> = layout.objects.iter().map(|o| o.geom()).collect();
        Self::report_from(&self.evaluate(&Self::cats(layout), &geo))
    }

    /// Scaled scene score.
    pub fn score(&self, layout: &Layout) -> f64 {
        self.activity_costs(layout).score
    }

    /// Unscaled scene score in `[0, 1]`.
    pub fn weight_score(&self, layout: &Layout) -> f64 {
        self.activity_costs(layout).weight_score
    }

    /// Scaled score and its derivative with respect to one attribute.
    pub fn score_attr_grad(&self, layout: &Layout, index: usize, attr: Attr) -> (f64, f64) {
        let cats = Self::cats(layout);
        let geo: Vec<ObjGeom<Dual>> = layout
            .objects
            .iter()
            .enumerate()
            .map(|(i, o)| {
                let mut a = o.attrs().map(Dual::cst);
                if i == index {
                    a[attr as usize] = Dual::var(o.attr(attr));
                }
                ObjGeom::from_attrs(a)
            })
            .collect();
        let (s, _) = self.evaluate(&cats, &geo).overall();
        (s.v, s.d)
    }

    /// Scores plus the full gradient over every furniture attribute.
    pub fn scene_score_grad(&self, layout: &Layout) -> ErgoReport {
        let mut report = self.activity_costs(layout);
        let mut grad = vec![[0.0; 5]; layout.len()];
        for (i, row) in grad.iter_mut().enumerate().skip(1) {
            for a in Attr::ALL {
                row[a as usize] = self.score_attr_grad(layout, i, a).1;
            }
        }
        report.gradient = Some(grad);
        report
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layout::FurnObj;
    use std::f64::consts::PI;

    const TOL: f64 = 1e-12;

    #[test]
    fn reach_examples() {
        let prm = ErgoParams::default();
        assert!((reach_cost((0.0, 0.0), (0.8, 0.0), &prm) - 0.5).abs() < TOL);
        let at_zero = 1.0 / (1.0 + 12.0f64.exp());
        assert!((reach_cost((1.0, 1.0), (1.0, 1.0), &prm) - at_zero).abs() < 1e-12);
        assert!((at_zero - 6.144e-6).abs() < 1e-9);
        assert!(reach_cost((0.0, 0.0), (100.0, 0.0), &prm) > 1.0 - 1e-12);
    }

    #[test]
    fn visibility_examples() {
        assert!(visibility_cost((0.0, 0.0), (1.0, 0.0), (2.0, 0.0)).unwrap().abs() < TOL);
        assert!((visibility_cost((0.0, 0.0), (-1.0, 0.0), (2.0, 0.0)).unwrap() - 1.0).abs() < TOL);
        assert!((visibility_cost((0.0, 0.0), (0.0, 1.0), (2.0, 0.0)).unwrap() - 0.75).abs() < TOL);
        assert_eq!(visibility_cost((1.0, 1.0), (0.0, 1.0), (1.0, 1.0)), Err(ErgoError::Degenerate));
    }

    #[test]
    fn lighting_examples() {
        let prm = ErgoParams::default();
        // Light behind the viewer on the line of sight.
        assert!(lighting_cost((0.0, 0.0), (1.0, 0.0), &[(-1.0, 0.0)], &prm).abs() < TOL);
        // Singleton: softmin weight 1.
        let single = lighting_cost((0.0, 0.0), (1.0, 0.0), &[(1.0, 3.0)], &prm);
        let l = {
            let (dx, dy) = (0.0f64, -3.0f64);
            let n = (dx * dx + dy * dy).sqrt();
            (1.0 - (1.0 + dx / n) / 2.0).powi(4)
        };
        assert!((single - l).abs() < TOL);
        // Costs {0, 1}: light behind the viewer and light behind the target.
        let two = lighting_cost((0.0, 0.0), (1.0, 0.0), &[(-1.0, 0.0), (2.0, 0.0)], &prm);
        let expect = (-10.0f64).exp() / (1.0 + (-10.0f64).exp());
        assert!((two - expect).abs() < TOL);
        assert!((two - 4.54e-5).abs() < 1e-7);
        assert_eq!(lighting_cost((0.0, 0.0), (1.0, 0.0), &[], &prm), 1.0);
    }

    #[test]
    fn glare_examples() {
        let prm = ErgoParams::default();
        assert!((glare_cost((0.0, 0.0), (1.0, 0.0), &[(3.0, 0.0)], &prm) - 1.0).abs() < TOL);
        assert!(glare_cost((0.0, 0.0), (1.0, 0.0), &[(-3.0, 0.0)], &prm).abs() < TOL);
        let two = glare_cost((0.0, 0.0), (1.0, 0.0), &[(-3.0, 0.0), (3.0, 0.0)], &prm);
        let expect = 10.0f64.exp() / (1.0 + 10.0f64.exp());
        assert!((two - expect).abs() < TOL);
        assert!((two - 0.99995).abs() < 1e-5);
        assert_eq!(glare_cost((0.0, 0.0), (1.0, 0.0), &[], &prm), 0.0);
    }

    #[test]
    fn rescale_examples() {
        let prm = ErgoParams::default();
        assert!((rescale(1.0, &prm) - 5.0).abs() < TOL);
        assert!((rescale(0.0, &prm) + (1.0 + (-5.0f64).exp()).ln()).abs() < TOL);
        assert!((rescale(0.0, &prm) + 0.0067153).abs() < 1e-6);
        assert!((rescale(0.5, &prm) - 0.6798).abs() < 1e-4);
    }

    #[test]
    fn soft_aggregate_of_equal_values_is_that_value() {
        for v in [0.0, 0.37, 1.0] {
            assert!((soft_aggregate(&[v; 5], -10.0) - v).abs() < TOL);
            assert!((soft_aggregate(&[v; 3], 10.0) - v).abs() < TOL);
        }
        let mixed = [0.1, 0.4, 0.9];
        let m = soft_aggregate(&mixed, -10.0);
        assert!(m >= 0.1 && m <= 0.9);
    }

    fn tv_scene(t: &Taxonomy) -> Layout {
        let mut l = Layout::room(t.room(), 5.0, 5.0);
        // Armchair at (2.5, 1) facing +y, TV at (2.5, 4), lamp behind-left.
        l.push(FurnObj::centered(t.id("armchair"), 0.0, 0.8, 0.8, 2.5, 1.0));
        l.push(FurnObj::centered(t.id("tv"), PI, 1.0, 0.2, 2.5, 4.0));
        l.push(FurnObj::centered(t.id("floor_lamp"), 0.0, 0.3, 0.3, 1.5, 0.3));
        l
    }

    #[test]
    fn watch_tv_matches_hand_evaluation() {
        let t = Taxonomy::default();
        let e = ErgoEngine::new(ErgoParams::default(), &t);
        let r = e.activity_costs(&tv_scene(&t));
        let prm = ErgoParams::default();
        let vis = visibility_cost((2.5, 1.0), (0.0, 1.0), (2.5, 4.0)).unwrap();
        let gl = glare_cost((2.5, 1.0), (2.5, 4.0), &[(1.5, 0.3)], &prm);
        let expect = (rescale(vis, &prm) + rescale(gl, &prm)) / 2.0;
        assert!((r.watch_tv.unwrap() - expect).abs() < TOL);
        assert!(r.read_book.is_some());
        assert!(r.use_computer.is_none() && r.work_at_desk.is_none());
        assert!((r.score - (r.watch_tv.unwrap() + r.read_book.unwrap()) / 2.0).abs() < TOL);
    }

    #[test]
    fn bed_and_lamp_only_reads() {
        let t = Taxonomy::default();
        let e = ErgoEngine::new(ErgoParams::default(), &t);
        let mut l = Layout::room(t.room(), 4.0, 4.0);
        l.push(FurnObj::centered(t.id("double_bed"), 0.0, 1.6, 2.0, 2.0, 1.0));
        l.push(FurnObj::centered(t.id("table_lamp"), 0.0, 0.3, 0.3, 0.8, 0.2));
        let r = e.activity_costs(&l);
        assert!(r.watch_tv.is_none() && r.use_computer.is_none() && r.work_at_desk.is_none());
        assert_eq!(r.score, r.read_book.unwrap());
    }

    #[test]
    fn empty_room_scores_zero() {
        let t = Taxonomy::default();
        let e = ErgoEngine::new(ErgoParams::default(), &t);
        let r = e.activity_costs(&Layout::room(t.room(), 4.0, 4.0));
        assert_eq!((r.score, r.weight_score), (0.0, 0.0));
        assert!(Activity::ALL.iter().all(|&a| r.activity(a).is_none()));
    }

    #[test]
    fn duplicate_seat_leaves_activity_costs_unchanged() {
        let t = Taxonomy::default();
        let e = ErgoEngine::new(ErgoParams::default(), &t);
        let mut l = Layout::room(t.room(), 5.0, 5.0);
        l.push(FurnObj::centered(t.id("armchair"), 0.0, 0.8, 0.8, 2.5, 1.0));
        l.push(FurnObj::centered(t.id("floor_lamp"), 0.0, 0.3, 0.3, 2.5, 0.2));
        let before = e.activity_costs(&l);
        let mut twin = l.clone();
        twin.push(FurnObj::centered(t.id("armchair"), 0.0, 0.8, 0.8, 2.5, 1.0));
        let after = e.activity_costs(&twin);
        assert!((before.read_book.unwrap() - after.read_book.unwrap()).abs() < TOL);
    }

    #[test]
    fn unreferenced_attributes_have_zero_gradient() {
        let t = Taxonomy::default();
        let e = ErgoEngine::new(ErgoParams::default(), &t);
        let mut l = tv_scene(&t);
        l.push(FurnObj::centered(t.id("wardrobe"), 0.0, 1.5, 0.6, 4.0, 4.5));
        let g = e.scene_score_grad(&l).gradient.unwrap();
        assert_eq!(g[4], [0.0; 5]);
        assert_eq!(g[0], [0.0; 5]);
        assert!(g[1].iter().any(|v| v.abs() > 0.0));
    }
}
