//! Conversion between [`Layout`]s and integer token sequences.
//!
//! Every object becomes six tokens `(category, orientation, width, depth, x, y)`.
//! Orientations are quantized uniformly over `(-π, π]` with a resolution that
//! keeps the four cardinal directions on integer values. Lengths and positions
//! are multiples of a per-room grid cell `g`, chosen so that the room's longer
//! side spans `r - 2` cells and one spare cell remains beyond every wall for
//! doors and windows.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::CodecError;
use crate::layout::{wrap_angle, Attr, DatasetBounds, FurnObj, Layout, MAX_OBJECTS};
use crate::scalar::Real;
use crate::taxonomy::{CategoryId, Taxonomy};

/// Tokens per object.
pub const TUPLE: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CodecConfig {
    pub resolution: u32,
    pub bounds: DatasetBounds,
    pub max_objects: usize,
}

impl CodecConfig {
    pub fn new(resolution: u32, bounds: DatasetBounds) -> Result<Self, CodecError> {
        let cfg = CodecConfig { resolution, bounds, max_objects: MAX_OBJECTS };
        cfg.check()?;
        Ok(cfg)
    }

    pub fn check(&self) -> Result<(), CodecError> {
        if self.resolution < 8 || self.resolution % 4 != 0 {
            return Err(CodecError::BadResolution(self.resolution));
        }
        if !self.bounds.is_valid() {
            return Err(CodecError::BadBounds);
        }
        Ok(())
    }

    /// Tokens in a full sequence without the stop token (`6 · N_furn`).
    pub fn n_tokens(&self) -> usize {
        TUPLE * self.max_objects
    }

    /// Length of an encoded sequence: all tuples plus the stop token.
    pub fn seq_len(&self) -> usize {
        self.n_tokens() + 1
    }

    pub fn pad_token(&self) -> u32 {
        self.resolution
    }

    pub fn stop_token(&self) -> u32 {
        self.resolution + 1
    }

    pub fn vocab_size(&self) -> usize {
        self.resolution as usize + 2
    }
}

/// Token sequence plus its parallel position and tuple-index sequences.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenSequence {
    pub tokens: Vec<u32>,
    pub positions: Vec<u32>,
    pub indices: Vec<u32>,
}

impl TokenSequence {
    pub fn new(tokens: Vec<u32>) -> Self {
        let n = tokens.len();
        TokenSequence {
            tokens,
            positions: (1..=n as u32).collect(),
            indices: (0..n).map(|k| (k % TUPLE) as u32 + 1).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Number of tokens up to and including the stop token (or the first
    /// padding token).
    pub fn content_len(&self, cfg: &CodecConfig) -> usize {
        match self.tokens.iter().position(|&t| t >= cfg.pad_token()) {
            Some(i) if self.tokens[i] == cfg.stop_token() => i + 1,
            Some(i) => i,
            None => self.tokens.len(),
        }
    }
}

/// Tuple-index (1..=6) of sequence position `k` (0-based).
pub fn tuple_index(k: usize) -> u32 {
    (k % TUPLE) as u32 + 1
}

/// Result of quantizing the room object.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoomEncoding {
    pub tokens: [u32; 6],
    /// Cell size from the real-valued room dimension.
    pub cell: f64,
    /// Cell size the decoder reconstructs from the quantized room; all other
    /// objects are quantized against this one.
    pub decoded_cell: f64,
    /// Depth exceeded width, so the two were swapped and the orientation
    /// token marks the swap.
    pub swapped: bool,
}

#[inline]
fn round_half_up(v: f64) -> f64 {
    (v + 0.5).floor()
}

fn clamp_token(v: f64, max: u32, what: &str) -> u32 {
    let r = round_half_up(v);
    if r < 0.0 || r > max as f64 {
        log::debug!("clamped {what} token {r} into [0, {max}]");
    }
    r.clamp(0.0, max as f64) as u32
}

/// Integer orientation token for an angle in `(-π, π]`.
pub fn quantize_orientation(angle: f64, resolution: u32) -> Result<u32, CodecError> {
    if !(angle > -PI && angle <= PI) {
        return Err(CodecError::OrientationOutOfRange(angle));
    }
    let r = resolution as f64;
    let step = 2.0 * PI / r;
    let v = (angle - (step - PI)) / (2.0 * PI - step) * (r - 1.0);
    Ok(clamp_token(v, resolution - 1, "orientation"))
}

pub fn dequantize_orientation<T: Real>(token: T, resolution: u32) -> T {
    let r = resolution as f64;
    let step = 2.0 * PI / r;
    T::cst(step - PI) + token * T::cst((2.0 * PI - step) / (r - 1.0))
}

/// Continuous value of an attribute from a (possibly fractional) token.
pub fn dequantize_attr<T: Real>(attr: Attr, token: T, cell: f64, resolution: u32) -> T {
    let g = T::cst(cell);
    match attr {
        Attr::Orientation => dequantize_orientation(token, resolution),
        Attr::Width | Attr::Depth => token * g + g,
        Attr::X | Attr::Y => token * g - g,
    }
}

/// Derivative of [`dequantize_attr`] with respect to the token value.
pub fn dequantize_slope(attr: Attr, cell: f64, resolution: u32) -> f64 {
    match attr {
        Attr::Orientation => {
            let r = resolution as f64;
            (2.0 * PI - 2.0 * PI / r) / (r - 1.0)
        }
        _ => cell,
    }
}

pub fn encode_room(room: &FurnObj, cfg: &CodecConfig) -> Result<RoomEncoding, CodecError> {
    let r = cfg.resolution;
    let span = (r - 2) as f64;
    let b = cfg.bounds;
    let swapped = room.width < room.depth;
    let (big, small, lo, hi) =
        if swapped { (room.depth, room.width, b.d_min, b.d_max) } else { (room.width, room.depth, b.w_min, b.w_max) };
    let tol = 1e-9 * hi.abs().max(1.0);
    if !(big >= lo - tol && big <= hi + tol) {
        return Err(CodecError::RoomOutOfBounds { value: big, min: lo, max: hi });
    }
    let big_tok = clamp_token((big - lo) / (hi - lo) * span, r - 2, "room size");
    let cell = big / span;
    let decoded_cell = (lo + big_tok as f64 / span * (hi - lo)) / span;
    let g = decoded_cell;
    let orientation = if swapped { -PI / 2.0 } else { 0.0 };
    let tokens = [
        room.category.0 as u32,
        quantize_orientation(orientation, r)?,
        big_tok,
        clamp_token((small - g) / g, r - 1, "room depth"),
        clamp_token((room.x + g) / g, r - 1, "x"),
        clamp_token((room.y + g) / g, r - 1, "y"),
    ];
    Ok(RoomEncoding { tokens, cell, decoded_cell, swapped })
}

/// Move a door or window so its footprint touches the nearest wall from the
/// outside, with depth equal to one grid cell.
pub fn snap_to_wall(obj: &FurnObj, cell: f64, room_w: f64, room_d: f64) -> FurnObj {
    let mut o = *obj;
    o.depth = cell;
    let (x0, y0, x1, y1) = o.aabb();
    let (cx, cy) = ((x0 + x1) / 2.0, (y0 + y1) / 2.0);
    let dists = [cx, room_w - cx, cy, room_d - cy];
    let wall = (0..4).min_by(|&a, &b| dists[a].total_cmp(&dists[b])).unwrap();
    match wall {
        0 => o.x = -(x1 - x0),
        1 => o.x = room_w,
        2 => o.y = -(y1 - y0),
        _ => o.y = room_d,
    }
    o
}

pub fn encode_furniture(obj: &FurnObj, cell: f64, cfg: &CodecConfig) -> Result<[u32; 6], CodecError> {
    if !(cell > 0.0) {
        return Err(CodecError::BadCell(cell));
    }
    let g = cell;
    let top = cfg.resolution - 1;
    Ok([
        obj.category.0 as u32,
        quantize_orientation(wrap_angle(obj.orientation), cfg.resolution)?,
        clamp_token((obj.width - g) / g, top, "width"),
        clamp_token((obj.depth - g) / g, top, "depth"),
        clamp_token((obj.x + g) / g, top, "x"),
        clamp_token((obj.y + g) / g, top, "y"),
    ])
}

/// Decoded room plus the grid cell used by the remaining objects.
pub fn decode_room(tokens: &[u32], cfg: &CodecConfig) -> (FurnObj, f64) {
    let r = cfg.resolution;
    let span = (r - 2) as f64;
    let b = cfg.bounds;
    let swapped = tokens[1] == quantize_orientation(-PI / 2.0, r).expect("in range");
    let (lo, hi) = if swapped { (b.d_min, b.d_max) } else { (b.w_min, b.w_max) };
    let big = lo + tokens[2] as f64 / span * (hi - lo);
    let g = big / span;
    let small = tokens[3] as f64 * g + g;
    let (w, d) = if swapped { (small, big) } else { (big, small) };
    (FurnObj::new(CategoryId(tokens[0] as u16), 0.0, w, d, 0.0, 0.0), g)
}

pub fn decode_furniture(tokens: &[u32], cell: f64, cfg: &CodecConfig) -> FurnObj {
    let r = cfg.resolution;
    let t = |k: usize| tokens[k] as f64;
    FurnObj::new(
        CategoryId(tokens[0] as u16),
        // The top token is π up to rounding; keep it inside (-π, π].
        dequantize_orientation(t(1), r).min(PI),
        dequantize_attr(Attr::Width, t(2), cell, r),
        dequantize_attr(Attr::Depth, t(3), cell, r),
        dequantize_attr(Attr::X, t(4), cell, r),
        dequantize_attr(Attr::Y, t(5), cell, r),
    )
}

/// Sequence codec bound to a taxonomy (needed to recognize doors and windows).
#[derive(Debug, Clone)]
pub struct Codec {
    pub cfg: CodecConfig,
    boundary: Vec<bool>,
}

impl Codec {
    pub fn new(cfg: CodecConfig, taxonomy: &Taxonomy) -> Result<Self, CodecError> {
        cfg.check()?;
        let boundary = taxonomy.categories().iter().map(|c| c.is_boundary()).collect();
        Ok(Codec { cfg, boundary })
    }

    pub fn n_categories(&self) -> usize {
        self.boundary.len()
    }

    pub fn is_boundary(&self, c: CategoryId) -> bool {
        self.boundary.get(c.index()).copied().unwrap_or(false)
    }

    /// Layout as the codec sees it: doors and windows snapped to the walls.
    pub fn snapped(&self, layout: &Layout) -> Result<Layout, CodecError> {
        let room = layout.objects.first().ok_or(CodecError::MissingRoom)?;
        let g = encode_room(room, &self.cfg)?.decoded_cell;
        let mut out = layout.clone();
        for o in out.objects.iter_mut().skip(1) {
            if self.is_boundary(o.category) {
                *o = snap_to_wall(o, g, room.width, room.depth);
            }
        }
        Ok(out)
    }

    pub fn encode(&self, layout: &Layout) -> Result<TokenSequence, CodecError> {
        let room = layout.objects.first().ok_or(CodecError::MissingRoom)?;
        if layout.objects.len() > self.cfg.max_objects {
            return Err(CodecError::TooManyObjects(layout.objects.len()));
        }
        let enc = encode_room(room, &self.cfg)?;
        let g = enc.decoded_cell;
        let mut tokens = Vec::with_capacity(self.cfg.seq_len());
        tokens.extend_from_slice(&enc.tokens);
        for obj in layout.furniture() {
            let obj = if self.is_boundary(obj.category) { snap_to_wall(obj, g, room.width, room.depth) } else { *obj };
            tokens.extend_from_slice(&encode_furniture(&obj, g, &self.cfg)?);
        }
        tokens.push(self.cfg.stop_token());
        tokens.resize(self.cfg.seq_len(), self.cfg.pad_token());
        Ok(TokenSequence::new(tokens))
    }

    /// Structural check shared by [`Codec::decode`]; returns the number of
    /// complete objects.
    pub fn check_tokens(&self, tokens: &[u32]) -> Result<usize, CodecError> {
        let pad = self.cfg.pad_token();
        let stop = self.cfg.stop_token();
        let malformed = |position: usize, reason: &str| CodecError::Malformed { position, reason: reason.into() };
        let mut end = tokens.len();
        for (k, &t) in tokens.iter().enumerate() {
            if t > stop {
                return Err(malformed(k, "token outside vocabulary"));
            }
            if t >= pad {
                if k % TUPLE != 0 {
                    return Err(malformed(k, "special token inside an object"));
                }
                end = k;
                break;
            }
            if k % TUPLE == 0 && t as usize >= self.n_categories() {
                return Err(malformed(k, "category out of range"));
            }
        }
        if end % TUPLE != 0 {
            return Err(malformed(end, "truncated object"));
        }
        if end < TUPLE {
            return Err(malformed(0, "missing room"));
        }
        if let Some(k) = tokens.iter().skip(end + 1).position(|&t| t != pad) {
            return Err(malformed(end + 1 + k, "non-padding token after end"));
        }
        let n = end / TUPLE;
        if n > self.cfg.max_objects {
            return Err(CodecError::TooManyObjects(n));
        }
        Ok(n)
    }

    pub fn decode_tokens(&self, tokens: &[u32]) -> Result<Layout, CodecError> {
        let n = self.check_tokens(tokens)?;
        let (room, g) = decode_room(&tokens[..TUPLE], &self.cfg);
        let mut objects = Vec::with_capacity(n);
        objects.push(room);
        for i in 1..n {
            objects.push(decode_furniture(&tokens[i * TUPLE..(i + 1) * TUPLE], g, &self.cfg));
        }
        Ok(Layout { objects, source_id: None, room_type: None })
    }

    pub fn decode(&self, seq: &TokenSequence) -> Result<Layout, CodecError> {
        self.decode_tokens(&seq.tokens)
    }

    /// Grid cell encoded by a room tuple.
    pub fn cell_of(&self, room_tokens: &[u32]) -> f64 {
        decode_room(room_tokens, &self.cfg).1
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bounds() -> DatasetBounds {
        DatasetBounds { w_min: 2.0, w_max: 8.0, d_min: 2.0, d_max: 8.0 }
    }

    #[test]
    fn every_orientation_token_decodes_into_range() {
        for r in [8u32, 64, 100, 256, 1000] {
            let cfg = CodecConfig::new(r, bounds()).unwrap();
            for k in 0..r {
                let o = decode_furniture(&[3, k, 0, 0, 0, 0], 0.1, &cfg).orientation;
                assert!(o > -PI && o <= PI, "r={r} k={k}: {o}");
            }
        }
    }

    #[test]
    fn orientation_examples() {
        assert_eq!(quantize_orientation(PI, 256).unwrap(), 255);
        assert_eq!(quantize_orientation(0.0, 256).unwrap(), 127);
        assert_eq!(quantize_orientation(-PI / 2.0, 256).unwrap(), 63);
        assert!(quantize_orientation(-PI, 256).is_err());
        assert!(quantize_orientation(3.5, 256).is_err());
    }

    #[test]
    fn cardinal_orientations_are_exact_for_multiples_of_four() {
        for r in (8..=512).step_by(4) {
            let step = 2.0 * PI / r as f64;
            for a in [-PI / 2.0, 0.0, PI / 2.0, PI] {
                let v = (a - (step - PI)) / (2.0 * PI - step) * (r as f64 - 1.0);
                assert!((v - v.round()).abs() < 1e-9, "r={r} a={a} v={v}");
                let t = quantize_orientation(a, r).unwrap();
                assert!((dequantize_orientation(t as f64, r) - a).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn room_width_example() {
        let cfg = CodecConfig::new(256, bounds()).unwrap();
        let room = FurnObj::new(CategoryId(0), 0.0, 6.0, 4.0, 0.0, 0.0);
        let e = encode_room(&room, &cfg).unwrap();
        assert_eq!(e.tokens[2], 169);
        assert!((e.cell - 0.023622).abs() < 5e-7);
        assert!(!e.swapped);
        let lo = encode_room(&FurnObj::new(CategoryId(0), 0.0, 2.0, 2.0, 0.0, 0.0), &cfg).unwrap();
        assert_eq!(lo.tokens[2], 0);
        let hi = encode_room(&FurnObj::new(CategoryId(0), 0.0, 8.0, 3.0, 0.0, 0.0), &cfg).unwrap();
        assert_eq!(hi.tokens[2], 254);
        let out = encode_room(&FurnObj::new(CategoryId(0), 0.0, 9.0, 3.0, 0.0, 0.0), &cfg);
        assert!(matches!(out, Err(CodecError::RoomOutOfBounds { .. })));
    }

    #[test]
    fn deep_rooms_swap_and_mark_orientation() {
        let cfg = CodecConfig::new(256, bounds()).unwrap();
        let room = FurnObj::new(CategoryId(0), 0.0, 3.0, 5.0, 0.0, 0.0);
        let e = encode_room(&room, &cfg).unwrap();
        assert!(e.swapped);
        assert_eq!(e.tokens[1], 63);
        assert_eq!(e.tokens[2], 127); // (5-2)/6*254
        let (dec, g) = decode_room(&e.tokens, &cfg);
        assert!((dec.depth - 5.0).abs() < 6.0 / 254.0);
        assert!((dec.width - 3.0).abs() <= g);
        assert_eq!(dec.orientation, 0.0);
    }

    #[test]
    fn furniture_examples() {
        let cfg = CodecConfig::new(256, bounds()).unwrap();
        let obj = FurnObj::new(CategoryId(5), 0.0, 2.0, 1.0, -0.05, 0.3);
        let t = encode_furniture(&obj, 0.05, &cfg).unwrap();
        assert_eq!(t[2], 39);
        assert_eq!(t[4], 0);
        assert!(encode_furniture(&obj, 0.0, &cfg).is_err());
    }

    #[test]
    fn empty_room_sequence() {
        let t = Taxonomy::default();
        let codec = Codec::new(CodecConfig::new(256, bounds()).unwrap(), &t).unwrap();
        let seq = codec.encode(&Layout::room(t.room(), 4.0, 3.0)).unwrap();
        assert_eq!(seq.len(), 127);
        assert_eq!(seq.tokens[6], 257);
        assert!(seq.tokens[7..].iter().all(|&x| x == 256));
        assert_eq!(&seq.indices[..8], &[1, 2, 3, 4, 5, 6, 1, 2]);
        assert_eq!(seq.positions[126], 127);
        assert_eq!(seq.content_len(&codec.cfg), 7);
    }

    #[test]
    fn malformed_sequences_are_rejected() {
        let t = Taxonomy::default();
        let codec = Codec::new(CodecConfig::new(256, bounds()).unwrap(), &t).unwrap();
        let mut seq = codec.encode(&Layout::room(t.room(), 4.0, 3.0)).unwrap().tokens;
        seq[3] = 256;
        assert!(matches!(codec.decode_tokens(&seq), Err(CodecError::Malformed { position: 3, .. })));
        let mut seq = codec.encode(&Layout::room(t.room(), 4.0, 3.0)).unwrap().tokens;
        seq[9] = 4;
        assert!(matches!(codec.decode_tokens(&seq), Err(CodecError::Malformed { position: 9, .. })));
        let mut seq = codec.encode(&Layout::room(t.room(), 4.0, 3.0)).unwrap().tokens;
        seq[0] = 40;
        assert!(codec.decode_tokens(&seq).is_err());
    }

    #[test]
    fn windows_snap_outside_the_nearest_wall() {
        let t = Taxonomy::default();
        let w = FurnObj::new(t.id("window"), PI / 2.0, 1.2, 0.2, -0.1, 1.0);
        let s = snap_to_wall(&w, 0.02, 4.0, 3.0);
        let (x0, _, x1, _) = s.aabb();
        assert!((x1 - 0.0).abs() < 1e-12 && (x1 - x0 - 0.02).abs() < 1e-12);
        let top = FurnObj::new(t.id("window"), 0.0, 1.2, 0.2, 1.0, 2.95);
        let s = snap_to_wall(&top, 0.02, 4.0, 3.0);
        assert!((s.y - 3.0).abs() < 1e-12);
    }
}
