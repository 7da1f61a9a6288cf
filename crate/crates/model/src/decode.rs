//! Incremental decoding with per-slot key/value caches.

use crate::elem::Elem;
use crate::error::ModelError;
use crate::model::{gelu, layer_norm, linear, softmax_rows, Model};

/// Key/value caches for `slots` independent sequences. Each slot advances by
/// one token per [`Decoder::step`] in which it appears and can be rolled back
/// with [`Decoder::truncate`].
pub struct Decoder<'m, E> {
    model: &'m Model<E>,
    /// Per layer, `[slot, ctx, d]`.
    keys: Vec<Vec<E>>,
    values: Vec<Vec<E>>,
    lens: Vec<usize>,
}

impl<'m, E: Elem> Decoder<'m, E> {
    pub fn new(model: &'m Model<E>, slots: usize) -> Self {
        let n = slots * model.cfg.ctx * model.cfg.d_model;
        Decoder {
            model,
            keys: (0..model.cfg.n_layer).map(|_| vec![E::zero(); n]).collect(),
            values: (0..model.cfg.n_layer).map(|_| vec![E::zero(); n]).collect(),
            lens: vec![0; slots],
        }
    }

    pub fn slots(&self) -> usize {
        self.lens.len()
    }

    /// Tokens consumed by `slot`.
    pub fn len(&self, slot: usize) -> usize {
        self.lens[slot]
    }

    pub fn is_empty(&self, slot: usize) -> bool {
        self.lens[slot] == 0
    }

    /// Forgets everything after the first `len` tokens of `slot`.
    pub fn truncate(&mut self, slot: usize, len: usize) {
        self.lens[slot] = self.lens[slot].min(len);
    }

    pub fn reset(&mut self, slot: usize) {
        self.lens[slot] = 0;
    }

    /// Feeds one token to each listed slot and returns the next-token
    /// distributions, `[slots.len(), vocab]`.
    pub fn step(&mut self, slots: &[usize], tokens: &[u32], positions: &[u32], indices: &[u32]) -> Result<Vec<E>, ModelError> {
        let m = self.model;
        let cfg = &m.cfg;
        let (d, nh, hd, ctx) = (cfg.d_model, cfg.n_head, cfg.head_dim(), cfg.ctx);
        let n = slots.len();
        assert!(tokens.len() == n && positions.len() == n && indices.len() == n, "step inputs differ in length");
        for &s in slots {
            assert!(s < self.lens.len(), "slot {s} out of range");
            if self.lens[s] >= ctx {
                return Err(ModelError::LengthOverflow { len: self.lens[s] + 1, max: ctx });
            }
        }
        let p = &m.params;
        let mut x = m.embed(tokens, positions, indices)?;
        let scale = E::lit(1.0 / (hd as f64).sqrt());
        for (l, lx) in m.index.layers.iter().enumerate() {
            let (h1, _) = layer_norm(&x, &p[lx.ln1_g..lx.ln1_g + d], &p[lx.ln1_b..lx.ln1_b + d], d);
            let qkv = linear(&h1, p, lx.w_qkv, Some(lx.b_qkv), d, 3 * d);
            for (r, &s) in slots.iter().enumerate() {
                let at = (s * ctx + self.lens[s]) * d;
                self.keys[l][at..at + d].copy_from_slice(&qkv[r * 3 * d + d..r * 3 * d + 2 * d]);
                self.values[l][at..at + d].copy_from_slice(&qkv[r * 3 * d + 2 * d..(r + 1) * 3 * d]);
            }
            let (keys, values, lens) = (&self.keys[l], &self.values[l], &self.lens);
            let outs = m.exec.map_range(n, |r| {
                let s = slots[r];
                let span = lens[s] + 1;
                let base = s * ctx * d;
                let mut o = vec![E::zero(); d];
                let mut w = vec![E::zero(); span];
                for h in 0..nh {
                    let q = &qkv[r * 3 * d + h * hd..r * 3 * d + (h + 1) * hd];
                    for (j, wj) in w.iter_mut().enumerate() {
                        let k = &keys[base + j * d + h * hd..base + j * d + (h + 1) * hd];
                        *wj = q.iter().zip(k).fold(E::zero(), |a, (&u, &v)| a + u * v) * scale;
                    }
                    softmax_rows(&mut w, span);
                    let oh = &mut o[h * hd..(h + 1) * hd];
                    for (j, &wj) in w.iter().enumerate() {
                        let v = &values[base + j * d + h * hd..base + j * d + (h + 1) * hd];
                        oh.iter_mut().zip(v).for_each(|(a, &b)| *a += wj * b);
                    }
                }
                o
            });
            let att: Vec<E> = outs.concat();
            let a = linear(&att, p, lx.w_o, Some(lx.b_o), d, d);
            x.iter_mut().zip(&a).for_each(|(v, &u)| *v += u);
            let (h2, _) = layer_norm(&x, &p[lx.ln2_g..lx.ln2_g + d], &p[lx.ln2_b..lx.ln2_b + d], d);
            let mut f = linear(&h2, p, lx.w_fc, Some(lx.b_fc), d, 4 * d);
            f.iter_mut().for_each(|v| *v = gelu(*v));
            let mo = linear(&f, p, lx.w_proj, Some(lx.b_proj), 4 * d, d);
            x.iter_mut().zip(&mo).for_each(|(v, &u)| *v += u);
        }
        for &s in slots {
            self.lens[s] += 1;
        }
        let ix = &m.index;
        let (hf, _) = layer_norm(&x, &p[ix.lnf_g..ix.lnf_g + d], &p[ix.lnf_b..ix.lnf_b + d], d);
        let mut probs = linear(&hf, p, ix.w_head, None, d, cfg.vocab);
        softmax_rows(&mut probs, cfg.vocab);
        Ok(probs)
    }
}
