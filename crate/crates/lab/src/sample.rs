//! Layout generation: nucleus sampling, batched incremental decoding and
//! collision resampling.

use ergoscene_core::codec::{decode_furniture, decode_room, tuple_index};
use ergoscene_core::{collision_check, CategoryId, Codec, Exec, ExemptPairs, FurnObj, Layout, Taxonomy, TUPLE};
use ergoscene_model::{Decoder, Elem, Model};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::LabError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplerConfig {
    pub top_p: f64,
    /// Attempts per object before the scene is restarted.
    pub resample_limit: usize,
    /// Largest accepted overlap (fraction of the smaller footprint) and
    /// largest accepted fraction outside the room.
    pub area_ratio_threshold: f64,
    /// Restarts per scene before generation fails.
    pub restart_budget: usize,
    pub collision_checks: bool,
    /// Scenes decoded in lockstep.
    pub slots: usize,
    pub exec: Exec,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            top_p: 0.9,
            resample_limit: 20,
            area_ratio_threshold: 0.2,
            restart_budget: 50,
            collision_checks: true,
            slots: 256,
            exec: Exec::default(),
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<(), LabError> {
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return Err(LabError::Config(format!("top_p must lie in (0, 1], got {}", self.top_p)));
        }
        if self.resample_limit == 0 || self.slots == 0 {
            return Err(LabError::Config("resample_limit and slots must be at least 1".into()));
        }
        Ok(())
    }
}

/// Token ids of the nucleus: the shortest prefix of the tokens sorted by
/// descending probability (ties by id) whose mass reaches `p` of the total.
/// Zero-probability tokens are never included.
pub fn nucleus(probs: &[f64], p: f64) -> Vec<usize> {
    let total: f64 = probs.iter().sum();
    let mut ids: Vec<usize> = (0..probs.len()).filter(|&i| probs[i] > 0.0).collect();
    ids.sort_by(|&a, &b| probs[b].total_cmp(&probs[a]).then(a.cmp(&b)));
    if p >= 1.0 {
        return ids;
    }
    let target = p * total;
    let mut acc = 0.0;
    for (n, &i) in ids.iter().enumerate() {
        acc += probs[i];
        if acc >= target {
            ids.truncate(n + 1);
            break;
        }
    }
    ids
}

/// Draws from the renormalized nucleus of `probs`. `probs` need not sum to 1.
pub fn nucleus_sample(probs: &[f64], p: f64, rng: &mut impl Rng) -> usize {
    let ids = nucleus(probs, p);
    assert!(!ids.is_empty(), "no token has positive probability");
    let mass: f64 = ids.iter().map(|&i| probs[i]).sum();
    let mut u = rng.random::<f64>() * mass;
    for &i in &ids {
        u -= probs[i];
        if u < 0.0 {
            return i;
        }
    }
    *ids.last().expect("non-empty")
}

/// Highest-probability token, lowest id on ties.
pub fn argmax(probs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in probs.iter().enumerate() {
        if v > probs[best] {
            best = i;
        }
    }
    best
}

/// One scene to generate.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Request {
    pub seed: u64,
    pub stream: u64,
    /// Frozen leading tokens; at least the room category.
    pub prefix: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Generated {
    pub layout: Layout,
    /// Tokens up to and including the stop token.
    pub tokens: Vec<u32>,
    /// Objects discarded by the collision check.
    pub rejections: usize,
    pub restarts: usize,
}

struct Slot {
    req: usize,
    rng: ChaCha8Rng,
    tokens: Vec<u32>,
    prefix_len: usize,
    objects: Vec<FurnObj>,
    cell: f64,
    attempts: usize,
    rejections: usize,
    restarts: usize,
}

enum Outcome {
    Continue,
    /// Truncate the decoder to this many tokens.
    Rollback(usize),
    Done(Generated),
    Failed,
}

/// Generator bound to a model, codec and collision rules.
pub struct Generator<'a, E> {
    pub model: &'a Model<E>,
    pub codec: &'a Codec,
    pub exempt: &'a ExemptPairs,
    pub room: CategoryId,
    pub cfg: SamplerConfig,
}

impl<'a, E: Elem> Generator<'a, E> {
    pub fn new(model: &'a Model<E>, codec: &'a Codec, taxonomy: &Taxonomy, exempt: &'a ExemptPairs, cfg: SamplerConfig) -> Self {
        Generator { model, codec, exempt, room: taxonomy.room(), cfg }
    }

    /// Requests for `n` unconditional scenes; scene `i` draws from stream `i`
    /// of `seed`.
    pub fn unconditional(&self, n: usize, seed: u64) -> Vec<Request> {
        (0..n).map(|i| Request { seed, stream: i as u64, prefix: vec![self.room.0 as u32] }).collect()
    }

    /// Room, door and window tokens of `layout`, in sequence order.
    pub fn prefix_of(&self, layout: &Layout) -> Result<Vec<u32>, LabError> {
        let mut shell = Layout { objects: vec![layout.objects[0]], ..layout.clone() };
        let mut rest: Vec<FurnObj> = layout.furniture().filter(|o| self.codec.is_boundary(o.category)).copied().collect();
        rest.sort_by_key(|o| o.category);
        shell.objects.extend(rest);
        let seq = self.codec.encode(&shell)?;
        Ok(seq.tokens[..shell.objects.len() * TUPLE].to_vec())
    }

    pub fn conditioned(&self, layouts: &[Layout], seed: u64) -> Result<Vec<Request>, LabError> {
        layouts
            .iter()
            .enumerate()
            .map(|(i, l)| Ok(Request { seed, stream: i as u64, prefix: self.prefix_of(l)? }))
            .collect()
    }

    pub fn generate(&self, request: &Request) -> Result<Generated, LabError> {
        self.generate_many(std::slice::from_ref(request)).pop().expect("one result")
    }

    /// Generates every request; results are in request order and independent
    /// of `slots` and the execution strategy.
    pub fn generate_many(&self, requests: &[Request]) -> Vec<Result<Generated, LabError>> {
        let mut results: Vec<Option<Result<Generated, LabError>>> = (0..requests.len()).map(|_| None).collect();
        if requests.is_empty() {
            return Vec::new();
        }
        if let Err(e) = self.cfg.validate() {
            let msg = e.to_string();
            return requests.iter().map(|_| Err(LabError::Config(msg.clone()))).collect();
        }
        let n_slots = self.cfg.slots.min(requests.len());
        let mut dec = Decoder::new(self.model, n_slots);
        let mut slots: Vec<Option<Slot>> = (0..n_slots).map(|_| None).collect();
        let mut next = 0;
        loop {
            for (s, slot) in slots.iter_mut().enumerate() {
                if slot.is_none() && next < requests.len() {
                    *slot = Some(self.start(next, &requests[next]));
                    dec.reset(s);
                    next += 1;
                }
            }
            let active: Vec<usize> = (0..n_slots).filter(|&s| slots[s].is_some()).collect();
            if active.is_empty() {
                break;
            }
            let mut toks = Vec::with_capacity(active.len());
            let mut pos = Vec::with_capacity(active.len());
            let mut idx = Vec::with_capacity(active.len());
            for &s in &active {
                let k = dec.len(s);
                toks.push(slots[s].as_ref().expect("active").tokens[k]);
                pos.push(k as u32 + 1);
                idx.push(tuple_index(k));
            }
            let probs = match dec.step(&active, &toks, &pos, &idx) {
                Ok(p) => p,
                Err(e) => {
                    let msg = e.to_string();
                    for &s in &active {
                        let req = slots[s].take().expect("active").req;
                        results[req] = Some(Err(LabError::Config(msg.clone())));
                    }
                    continue;
                }
            };
            let v = self.model.cfg.vocab;
            let consumed: Vec<usize> = active.iter().map(|&s| dec.len(s)).collect();
            let mut work: Vec<(Slot, &[E], usize, Outcome)> = active
                .iter()
                .enumerate()
                .map(|(r, &s)| (slots[s].take().expect("active"), &probs[r * v..(r + 1) * v], consumed[r], Outcome::Continue))
                .collect();
            self.cfg.exec.for_each_mut(&mut work, |_, (slot, row, k, out)| *out = self.advance(slot, row, *k));
            let outcomes = work.into_iter().map(|(slot, _, _, out)| (slot, out));
            for (&s, (slot, out)) in active.iter().zip(outcomes) {
                match out {
                    Outcome::Continue => slots[s] = Some(slot),
                    Outcome::Rollback(len) => {
                        dec.truncate(s, len);
                        slots[s] = Some(slot);
                    }
                    Outcome::Done(g) => results[slot.req] = Some(Ok(g)),
                    Outcome::Failed => {
                        results[slot.req] = Some(Err(LabError::GenerationFailed { scene: slot.req, restarts: slot.restarts }))
                    }
                }
            }
        }
        results.into_iter().map(|r| r.expect("every request finishes")).collect()
    }

    fn start(&self, req: usize, r: &Request) -> Slot {
        let mut rng = ChaCha8Rng::seed_from_u64(r.seed);
        rng.set_stream(r.stream);
        let mut slot = Slot {
            req,
            rng,
            tokens: r.prefix.clone(),
            prefix_len: r.prefix.len(),
            objects: Vec::new(),
            cell: 0.0,
            attempts: 0,
            rejections: 0,
            restarts: 0,
        };
        self.rebuild(&mut slot);
        slot
    }

    /// Recomputes the decoded objects from the complete tuples in `tokens`.
    fn rebuild(&self, slot: &mut Slot) {
        slot.objects.clear();
        let n = slot.tokens.len() / TUPLE;
        if n == 0 {
            return;
        }
        let (room, g) = decode_room(&slot.tokens[..TUPLE], &self.codec.cfg);
        slot.cell = g;
        slot.objects.push(room);
        for i in 1..n {
            slot.objects.push(decode_furniture(&slot.tokens[i * TUPLE..(i + 1) * TUPLE], g, &self.codec.cfg));
        }
    }

    /// Chooses the token at position `k` from `row`, the model's distribution
    /// after consuming `k` tokens.
    fn advance(&self, slot: &mut Slot, row: &[E], k: usize) -> Outcome {
        if k < slot.tokens.len() {
            return Outcome::Continue;
        }
        let cfg = &self.codec.cfg;
        let r = cfg.resolution as usize;
        let stop = cfg.stop_token() as usize;
        let phase = k % TUPLE;
        let object = k / TUPLE;
        let mut p: Vec<f64> = row.iter().map(|v| v.as_f64()).collect();
        let sampled = if phase == 0 {
            let full = object >= cfg.max_objects;
            for (t, v) in p.iter_mut().enumerate() {
                let legal = if t == stop {
                    true
                } else if t < self.codec.n_categories() && !full {
                    let c = CategoryId(t as u16);
                    c != self.room && !(slot.prefix_len > 1 && self.codec.is_boundary(c))
                } else {
                    false
                };
                if !legal {
                    *v = 0.0;
                }
            }
            true
        } else {
            p[r..].iter_mut().for_each(|v| *v = 0.0);
            object == 0 || self.codec.is_boundary(CategoryId(slot.tokens[object * TUPLE] as u16))
        };
        if p.iter().all(|&v| v <= 0.0) {
            // Degenerate row: fall back to the only always-legal choice.
            let t = if phase == 0 { stop } else { 0 };
            p.iter_mut().for_each(|v| *v = 0.0);
            p[t] = 1.0;
        }
        let token = if sampled { nucleus_sample(&p, self.cfg.top_p, &mut slot.rng) } else { argmax(&p) };
        slot.tokens.push(token as u32);

        if token == stop {
            return match self.codec.decode_tokens(&slot.tokens) {
                Ok(layout) => Outcome::Done(Generated {
                    layout,
                    tokens: std::mem::take(&mut slot.tokens),
                    rejections: slot.rejections,
                    restarts: slot.restarts,
                }),
                Err(_) => self.restart(slot),
            };
        }
        if phase + 1 < TUPLE {
            return Outcome::Continue;
        }
        let tuple = &slot.tokens[object * TUPLE..];
        if object == 0 {
            let (room, g) = decode_room(tuple, cfg);
            slot.cell = g;
            slot.objects = vec![room];
            return Outcome::Continue;
        }
        let obj = decode_furniture(tuple, slot.cell, cfg);
        if self.cfg.collision_checks {
            let layout = Layout { objects: std::mem::take(&mut slot.objects), source_id: None, room_type: None };
            let verdict = collision_check(&layout, &obj, self.cfg.area_ratio_threshold, self.exempt);
            slot.objects = layout.objects;
            if !verdict.accepted() {
                slot.rejections += 1;
                slot.attempts += 1;
                if slot.attempts >= self.cfg.resample_limit {
                    return self.restart(slot);
                }
                slot.tokens.truncate(object * TUPLE);
                return Outcome::Rollback(slot.tokens.len() - 1);
            }
        }
        slot.attempts = 0;
        slot.objects.push(obj);
        Outcome::Continue
    }

    fn restart(&self, slot: &mut Slot) -> Outcome {
        slot.restarts += 1;
        if slot.restarts > self.cfg.restart_budget {
            return Outcome::Failed;
        }
        slot.attempts = 0;
        slot.tokens.truncate(slot.prefix_len);
        self.rebuild(slot);
        Outcome::Rollback(slot.tokens.len() - 1)
    }
}
