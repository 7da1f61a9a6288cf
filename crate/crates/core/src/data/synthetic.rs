//! Procedural bedrooms and living rooms.
//!
//! Scenes are built in a frame where the main seat (bed or sofa) stands
//! against the bottom wall facing +y, then turned by a random number of
//! quarter turns. A "poor" scene moves a window onto the wall the seat faces
//! and often removes the light beside it; a "sloppy" scene pushes a few
//! objects into their neighbours or through a wall.

use std::f64::consts::PI;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::Corpus;
use crate::geom::{area_outside_room, overlap_area, ExemptPairs};
use crate::layout::{canonical_order, wrap_angle, FurnObj, Layout, MAX_OBJECTS};
use crate::taxonomy::{CategoryId, CategoryOrder, Role, Taxonomy};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoomTemplate {
    Bedroom,
    LivingRoom,
}

impl RoomTemplate {
    pub fn tag(self) -> &'static str {
        match self {
            RoomTemplate::Bedroom => "bedroom",
            RoomTemplate::LivingRoom => "living_room",
        }
    }
}

impl FromStr for RoomTemplate {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "bedroom" => Ok(RoomTemplate::Bedroom),
            "living_room" | "livingroom" | "living" => Ok(RoomTemplate::LivingRoom),
            _ => Err(format!("unknown room template {s:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    /// Fraction of scenes with deliberately bad lighting or glare.
    pub poor_fraction: f64,
    /// Fraction of scenes with deliberately overlapping objects.
    pub sloppy_fraction: f64,
    pub val_fraction: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig { poor_fraction: 0.4, sloppy_fraction: 0.25, val_fraction: 0.1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Wall {
    Bottom,
    Top,
    Left,
    Right,
}

const SIDE_WALLS: [Wall; 3] = [Wall::Left, Wall::Right, Wall::Top];

struct Builder<'a> {
    t: &'a Taxonomy,
    exempt: &'a ExemptPairs,
    w: f64,
    d: f64,
    objs: Vec<FurnObj>,
    keepout: Vec<FurnObj>,
    rng: ChaCha8Rng,
}

impl<'a> Builder<'a> {
    fn u(&mut self, lo: f64, hi: f64) -> f64 {
        if hi <= lo {
            lo
        } else {
            self.rng.random_range(lo..hi)
        }
    }

    fn chance(&mut self, p: f64) -> bool {
        self.rng.random::<f64>() < p
    }

    fn pick<T: Copy>(&mut self, xs: &[T]) -> T {
        xs[self.rng.random_range(0..xs.len())]
    }

    fn cat(&self, name: &str) -> CategoryId {
        self.t.id(name)
    }

    fn wall_len(&self, wall: Wall) -> f64 {
        match wall {
            Wall::Bottom | Wall::Top => self.w,
            Wall::Left | Wall::Right => self.d,
        }
    }

    /// Object with its back to `wall`, facing into the room.
    fn against(&self, cat: CategoryId, wall: Wall, along: f64, ow: f64, od: f64, gap: f64) -> FurnObj {
        let (w, d) = (self.w, self.d);
        match wall {
            Wall::Bottom => FurnObj::centered(cat, 0.0, ow, od, along, od / 2.0 + gap),
            Wall::Top => FurnObj::centered(cat, PI, ow, od, along, d - od / 2.0 - gap),
            Wall::Left => FurnObj::centered(cat, -PI / 2.0, ow, od, od / 2.0 + gap, along),
            Wall::Right => FurnObj::centered(cat, PI / 2.0, ow, od, w - od / 2.0 - gap, along),
        }
    }

    fn free(&self, o: &FurnObj) -> bool {
        let room = FurnObj::new(self.t.room(), 0.0, self.w, self.d, 0.0, 0.0);
        if area_outside_room(o, &room) > 1e-9 {
            return false;
        }
        let blocked = |p: &FurnObj| overlap_area(o, p) > 1e-9;
        !self.keepout.iter().any(blocked)
            && !self
                .objs
                .iter()
                .filter(|p| !self.t.is_boundary(p.category) && !self.exempt.contains(o.category, p.category))
                .any(blocked)
    }

    fn place(&mut self, o: FurnObj) -> Option<FurnObj> {
        if self.free(&o) {
            self.objs.push(o);
            Some(o)
        } else {
            None
        }
    }

    fn on_wall(&mut self, name: &str, walls: &[Wall], ow: f64, od: f64) -> Option<FurnObj> {
        let cat = self.cat(name);
        for _ in 0..40 {
            let wall = self.pick(walls);
            let len = self.wall_len(wall);
            if ow >= len {
                continue;
            }
            let along = self.u(ow / 2.0, len - ow / 2.0);
            let gap = self.u(0.0, 0.04);
            if let Some(o) = self.place(self.against(cat, wall, along, ow, od, gap)) {
                return Some(o);
            }
        }
        None
    }

    /// Door or window just beyond `wall`.
    fn opening(&mut self, name: &str, wall: Wall, width: f64, clearance: f64) -> bool {
        let cat = self.cat(name);
        let len = self.wall_len(wall);
        for _ in 0..40 {
            let along = self.u(width / 2.0 + 0.15, len - width / 2.0 - 0.15);
            let o = self.against(cat, wall, along, width, 0.1, -0.1);
            let clash = self.objs.iter().any(|p| self.t.is_boundary(p.category) && overlap_area(&o, p) > 1e-9);
            let zone = self.against(self.t.room(), wall, along, width + 0.1, clearance, 0.0);
            let blocked = clearance > 0.0 && self.objs.iter().any(|p| overlap_area(&zone, p) > 1e-9);
            if !clash && !blocked {
                self.objs.push(o);
                if clearance > 0.0 {
                    self.keepout.push(zone);
                }
                return true;
            }
        }
        false
    }

    fn ceiling_light(&mut self) {
        let name = if self.chance(0.3) { "pendant_lamp" } else { "ceiling_lamp" };
        let (cx, cy) = (self.w / 2.0 + self.u(-0.2, 0.2), self.d / 2.0 + self.u(-0.2, 0.2));
        let s = self.u(0.4, 0.6);
        self.objs.push(FurnObj::centered(self.cat(name), 0.0, s, s, cx, cy));
    }

    fn windows(&mut self, poor: bool) {
        let n = if self.chance(0.5) { 2 } else { 1 };
        for k in 0..n {
            let wall = if poor && k == 0 { Wall::Top } else { self.pick(&[Wall::Bottom, Wall::Left, Wall::Right]) };
            let width = self.u(0.9, 1.8).min(self.wall_len(wall) - 0.4);
            self.opening("window", wall, width, 0.0);
        }
    }

    /// Main seat against the bottom wall with optional stands on both sides.
    fn seat_with_stands(&mut self, seat: &str, sw: f64, sd: f64, stand: &str, n_stands: usize) -> Option<FurnObj> {
        let (nw, nd) = (self.u(0.4, 0.55), self.u(0.35, 0.45));
        let mut n = n_stands;
        loop {
            let side = |k: usize| if n > k { nw + 0.06 } else { 0.0 };
            let lo = sw / 2.0 + side(0) + 0.02;
            let hi = self.w - sw / 2.0 - side(1) - 0.02;
            if lo <= hi {
                let cx = (self.w / 2.0 + self.u(-0.6, 0.6)).clamp(lo, hi);
                let gap = self.u(0.0, 0.03);
                let s = self.place(self.against(self.cat(seat), Wall::Bottom, cx, sw, sd, gap))?;
                let stand_cat = self.cat(stand);
                for k in 0..n {
                    let off = sw / 2.0 + self.u(0.02, 0.06) + nw / 2.0;
                    let along = if k == 0 { cx - off } else { cx + off };
                    let gap = self.u(0.0, 0.03);
                    self.place(self.against(stand_cat, Wall::Bottom, along, nw, nd, gap));
                }
                return Some(s);
            }
            if n == 0 {
                return None;
            }
            n -= 1;
        }
    }

    fn layout(&self) -> Layout {
        let mut l = Layout::room(self.t.room(), self.w, self.d);
        l.objects.extend(self.objs.iter().copied());
        l
    }
}

fn bedroom(b: &mut Builder, poor: bool) -> Option<()> {
    b.w = b.u(3.0, 5.0);
    b.d = b.u(3.2, 4.8);
    let door_wall = b.pick(&SIDE_WALLS);
    let door_w = b.u(0.8, 0.95);
    b.opening("door", door_wall, door_w, 0.8);
    b.windows(poor);

    let (bed, bw, bd) = match b.u(0.0, 1.0) {
        x if x < 0.6 => ("double_bed", b.u(1.4, 1.8), b.u(2.0, 2.1)),
        x if x < 0.9 => ("single_bed", b.u(0.9, 1.1), b.u(1.9, 2.05)),
        _ => ("kids_bed", b.u(0.8, 0.9), b.u(1.6, 1.8)),
    };
    let dark = poor && b.chance(0.7);
    let n_stands = if dark { 0 } else if b.chance(0.75) { 2 } else { 1 };
    let bed = b.seat_with_stands(bed, bw, bd, "nightstand", n_stands)?;
    if b.chance(0.85) {
        b.ceiling_light();
    }
    if b.chance(0.8) {
        let (w, d) = (b.u(1.0, 2.0), b.u(0.55, 0.65));
        b.on_wall("wardrobe", &SIDE_WALLS, w, d);
    }
    if b.chance(0.4) {
        let (w, d) = (b.u(1.0, 1.4), b.u(0.5, 0.7));
        if let Some(desk) = b.on_wall("desk", &SIDE_WALLS, w, d) {
            let g = desk.geom();
            let s = b.u(0.42, 0.5);
            let reach = desk.depth / 2.0 + b.u(0.05, 0.2);
            let (cx, cy) = (g.center.x + g.dir.x * reach, g.center.y + g.dir.y * reach);
            let chair = FurnObj::centered(b.cat("chair"), wrap_angle(desk.orientation + PI), s, s, cx, cy);
            b.place(chair);
        }
    }
    if b.chance(0.35) {
        let (w, d) = (b.u(0.8, 1.4), b.u(0.4, 0.5));
        b.on_wall("dresser", &SIDE_WALLS, w, d);
    }
    if b.chance(0.3) {
        let (w, d) = (b.u(1.0, 1.6), b.u(0.35, 0.45));
        if poor {
            b.on_wall("tv_stand", &[Wall::Left, Wall::Right], w, d);
        } else {
            let cat = b.cat("tv_stand");
            let (cx, _) = bed.center();
            for _ in 0..10 {
                let along = (cx + b.u(-0.4, 0.4)).clamp(w / 2.0, b.w - w / 2.0);
                if b.place(b.against(cat, Wall::Top, along, w, d, 0.02)).is_some() {
                    break;
                }
            }
        }
    }
    let s = b.u(0.3, 0.45);
    if dark && b.chance(0.8) {
        b.on_wall("floor_lamp", &[Wall::Top], s, s);
    } else if !poor && b.chance(0.25) {
        b.on_wall("floor_lamp", &[Wall::Bottom], s, s);
    }
    if b.chance(0.2) {
        let (w, d) = (b.u(0.8, 1.2), b.u(0.3, 0.4));
        b.on_wall("bookshelf", &SIDE_WALLS, w, d);
    }
    if b.chance(0.3) {
        let s = b.u(0.3, 0.5);
        b.on_wall("plant", &[Wall::Bottom, Wall::Top, Wall::Left, Wall::Right], s, s);
    }
    if b.chance(0.15) {
        let (w, d) = (b.u(0.6, 1.0), b.u(0.4, 0.5));
        b.on_wall("cabinet", &SIDE_WALLS, w, d);
    }
    Some(())
}

fn living_room(b: &mut Builder, poor: bool) -> Option<()> {
    b.w = b.u(4.0, 6.5);
    b.d = b.u(3.6, 5.5);
    let door_wall = b.pick(&SIDE_WALLS);
    let door_w = b.u(0.8, 1.0);
    b.opening("door", door_wall, door_w, 0.8);
    b.windows(poor);

    let dark = poor && b.chance(0.6);
    let (sofa, sw, sd) =
        if b.chance(0.7) { ("sofa", b.u(1.8, 2.4), b.u(0.85, 1.0)) } else { ("sectional_sofa", b.u(2.4, 3.0), b.u(1.5, 1.8)) };
    let n_stands = if dark { 0 } else if b.chance(0.5) { 2 } else { 1 };
    let sofa = b.seat_with_stands(sofa, sw, sd, "side_table", n_stands)?;
    let (cx, _) = sofa.center();
    if b.chance(0.85) {
        b.ceiling_light();
    }
    let (tw, td) = (b.u(1.2, 2.0), b.u(0.35, 0.5));
    if poor && !dark {
        b.on_wall("tv_stand", &[Wall::Left, Wall::Right], tw, td);
    } else {
        let cat = b.cat("tv_stand");
        for _ in 0..10 {
            let along = (cx + b.u(-0.3, 0.3)).clamp(tw / 2.0, b.w - tw / 2.0);
            if b.place(b.against(cat, Wall::Top, along, tw, td, 0.02)).is_some() {
                break;
            }
        }
    }
    let mut table = None;
    if b.chance(0.85) {
        let (w, d) = (b.u(0.9, 1.3), b.u(0.5, 0.7));
        let cy = sd + b.u(0.35, 0.5) + d / 2.0;
        table = b.place(FurnObj::centered(b.cat("coffee_table"), 0.0, w, d, cx, cy));
    }
    if let Some(t) = table {
        let (tx, ty) = t.center();
        for side in [-1.0, 1.0] {
            if b.chance(0.45) {
                let s = b.u(0.75, 0.9);
                let x = tx + side * (t.width / 2.0 + b.u(0.3, 0.5) + s / 2.0);
                let o = if side < 0.0 { -PI / 2.0 } else { PI / 2.0 };
                b.place(FurnObj::centered(b.cat("armchair"), o, s, s, x, ty));
            }
        }
    }
    let s = b.u(0.3, 0.45);
    if dark && b.chance(0.8) {
        b.on_wall("floor_lamp", &[Wall::Top], s, s);
    } else if !poor && b.chance(0.5) {
        b.on_wall("floor_lamp", &[Wall::Bottom], s, s);
    }
    if b.chance(0.4) {
        let (w, d) = (b.u(0.8, 1.6), b.u(0.3, 0.4));
        b.on_wall("bookshelf", &SIDE_WALLS, w, d);
    }
    if b.chance(0.3) {
        let (w, d) = (b.u(0.6, 1.2), b.u(0.4, 0.5));
        b.on_wall("cabinet", &SIDE_WALLS, w, d);
    }
    if b.chance(0.2) {
        let (w, d) = (b.u(0.9, 1.3), b.u(0.3, 0.4));
        b.on_wall("console_table", &SIDE_WALLS, w, d);
    }
    if b.chance(0.5) {
        let s = b.u(0.3, 0.5);
        b.on_wall("plant", &[Wall::Bottom, Wall::Top, Wall::Left, Wall::Right], s, s);
    }
    if b.w > 5.2 && b.chance(0.3) {
        let (w, d) = (b.u(1.2, 1.6), b.u(0.8, 0.9));
        let (x, y) = (b.u(w / 2.0 + 0.7, b.w - w / 2.0 - 0.7), b.u(d / 2.0 + 0.7, b.d - d / 2.0 - 0.7));
        if let Some(dt) = b.place(FurnObj::centered(b.cat("dining_table"), 0.0, w, d, x, y)) {
            let (tx, ty) = dt.center();
            for (dx, dy, o) in [(0.0, -1.0, 0.0), (0.0, 1.0, PI), (-1.0, 0.0, -PI / 2.0), (1.0, 0.0, PI / 2.0)] {
                let s = b.u(0.42, 0.5);
                let off_x = dx * (w / 2.0 + 0.05);
                let off_y = dy * (d / 2.0 + 0.05);
                b.place(FurnObj::centered(b.cat("chair"), o, s, s, tx + off_x, ty + off_y));
            }
        }
    }
    Some(())
}

/// Shoves one to three objects into a neighbour or through a wall.
fn make_sloppy(b: &mut Builder) {
    let movable: Vec<usize> = (0..b.objs.len())
        .filter(|&i| {
            let c = b.objs[i].category;
            !b.t.is_boundary(c) && !b.t.has(c, Role::CeilingLight) && !b.t.has(c, Role::Supported)
        })
        .collect();
    if movable.is_empty() {
        return;
    }
    let n = b.rng.random_range(1..=3usize.min(movable.len()));
    for _ in 0..n {
        let i = b.pick(&movable);
        let (cx, cy) = b.objs[i].center();
        let target = movable
            .iter()
            .filter(|&&j| j != i && !b.exempt.contains(b.objs[i].category, b.objs[j].category))
            .map(|&j| b.objs[j].center())
            .min_by(|p, q| {
                let dp = (p.0 - cx).hypot(p.1 - cy);
                let dq = (q.0 - cx).hypot(q.1 - cy);
                dp.total_cmp(&dq)
            });
        let (dx, dy, dist) = match target {
            Some((tx, ty)) if b.chance(0.7) => {
                let len = (tx - cx).hypot(ty - cy).max(1e-9);
                ((tx - cx) / len, (ty - cy) / len, b.u(0.25, 0.6).min(len))
            }
            _ => {
                let walls = [(cx, (-1.0, 0.0)), (b.w - cx, (1.0, 0.0)), (cy, (0.0, -1.0)), (b.d - cy, (0.0, 1.0))];
                let (_, (dx, dy)) = walls.into_iter().min_by(|p, q| p.0.total_cmp(&q.0)).unwrap();
                (dx, dy, b.u(0.15, 0.4))
            }
        };
        b.objs[i].x += dx * dist;
        b.objs[i].y += dy * dist;
    }
}

fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// One scene in canonical object order. Rejected drafts are redrawn from the
/// same stream, so the result is a pure function of the arguments.
pub fn synth_layout(template: RoomTemplate, cfg: &SynthConfig, taxonomy: &Taxonomy, seed: u64) -> Layout {
    let exempt = ExemptPairs::default_for(taxonomy);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let poor = rng.random::<f64>() < cfg.poor_fraction;
        let sloppy = rng.random::<f64>() < cfg.sloppy_fraction;
        let turns = rng.random_range(0..4u32);
        let draft = rng.random::<u64>();
        let mut b = Builder {
            t: taxonomy,
            exempt: &exempt,
            w: 0.0,
            d: 0.0,
            objs: Vec::new(),
            keepout: Vec::new(),
            rng: ChaCha8Rng::seed_from_u64(draft),
        };
        let built = match template {
            RoomTemplate::Bedroom => bedroom(&mut b, poor),
            RoomTemplate::LivingRoom => living_room(&mut b, poor),
        };
        // Room for the objects augmentation may add.
        if built.is_none() || b.objs.len() + 1 > MAX_OBJECTS - 4 {
            continue;
        }
        if sloppy {
            make_sloppy(&mut b);
        }
        let mut l = b.layout().rotated_quarter(turns);
        l.room_type = Some(template.tag().to_string());
        return canonical_order(&l, &CategoryOrder::default_for(taxonomy), seed);
    }
}

/// `n` scenes; the last `round(n · val_fraction)` form the validation split.
pub fn synth_corpus(n: usize, template: RoomTemplate, seed: u64, cfg: &SynthConfig, taxonomy: &Taxonomy) -> Corpus {
    assert!(n >= 1, "corpus needs at least one scene");
    let salt = match template {
        RoomTemplate::Bedroom => 0x6265_6472,
        RoomTemplate::LivingRoom => 0x6c69_7669,
    };
    let n_val = ((n as f64 * cfg.val_fraction).round() as usize).min(n - 1);
    let scenes: Vec<Layout> = (0..n)
        .map(|i| {
            let mut l = synth_layout(template, cfg, taxonomy, mix(seed ^ salt ^ mix(i as u64)));
            l.source_id = Some(format!("{}-{i:05}", template.tag()));
            l
        })
        .collect();
    let (train, val) = scenes.split_at(n - n_val);
    Corpus::new(train.to_vec(), val.to_vec()).expect("non-empty training split")
}
