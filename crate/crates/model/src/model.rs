//! Pre-norm decoder-only transformer with a hand-written backward pass.

use ergoscene_core::Exec;
use rand::RngCore;

use crate::config::{ModelConfig, INDEX_ROWS};
use crate::elem::{gemm, Elem, View};
use crate::error::ModelError;
use crate::params::{LayerIx, ParamIndex};

pub(crate) const LN_EPS: f64 = 1e-5;

/// `b` sequences of `t` steps, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Batch {
    pub b: usize,
    pub t: usize,
    pub tokens: Vec<u32>,
    pub positions: Vec<u32>,
    pub indices: Vec<u32>,
}

impl Batch {
    pub fn new(b: usize, t: usize, tokens: Vec<u32>, positions: Vec<u32>, indices: Vec<u32>) -> Self {
        assert!(tokens.len() == b * t && positions.len() == b * t && indices.len() == b * t, "batch shape");
        Batch { b, t, tokens, positions, indices }
    }

    pub fn single(tokens: &[u32], positions: &[u32], indices: &[u32]) -> Self {
        Batch::new(1, tokens.len(), tokens.to_vec(), positions.to_vec(), indices.to_vec())
    }

    pub fn rows(&self) -> usize {
        self.b * self.t
    }
}

pub(crate) struct LnCache<E> {
    xhat: Vec<E>,
    rstd: Vec<E>,
}

struct LayerTape<E> {
    ln1: LnCache<E>,
    h1: Vec<E>,
    qkv: Vec<E>,
    /// Attention probabilities, `[b, head, t, t]`.
    p: Vec<E>,
    att: Vec<E>,
    mask_attn: Option<Vec<E>>,
    ln2: LnCache<E>,
    h2: Vec<E>,
    f: Vec<E>,
    g: Vec<E>,
    mask_mlp: Option<Vec<E>>,
}

/// Activations recorded by [`Model::forward`] for [`Model::backward`].
pub struct Tape<E> {
    b: usize,
    t: usize,
    tokens: Vec<u32>,
    positions: Vec<u32>,
    indices: Vec<u32>,
    mask_emb: Option<Vec<E>>,
    layers: Vec<LayerTape<E>>,
    lnf: LnCache<E>,
    hf: Vec<E>,
    /// Softmax outputs, `[b·t, vocab]`.
    pub probs: Vec<E>,
}

impl<E: Elem> Tape<E> {
    pub fn rows(&self) -> usize {
        self.b * self.t
    }

    /// Probability vector at sequence `s`, step `i`.
    pub fn row(&self, s: usize, i: usize) -> &[E] {
        let v = self.probs.len() / self.rows();
        let r = s * self.t + i;
        &self.probs[r * v..(r + 1) * v]
    }
}

#[derive(Debug, Clone)]
pub struct Model<E> {
    pub cfg: ModelConfig,
    pub params: Vec<E>,
    pub index: ParamIndex,
    pub exec: Exec,
}

pub(crate) fn layer_norm<E: Elem>(x: &[E], g: &[E], b: &[E], d: usize) -> (Vec<E>, LnCache<E>) {
    let rows = x.len() / d;
    let mut y = vec![E::zero(); x.len()];
    let mut xhat = vec![E::zero(); x.len()];
    let mut rstd = vec![E::zero(); rows];
    let inv_d = E::lit(1.0 / d as f64);
    let eps = E::lit(LN_EPS);
    for r in 0..rows {
        let xr = &x[r * d..(r + 1) * d];
        let mut mean = E::zero();
        for &v in xr {
            mean += v;
        }
        mean = mean * inv_d;
        let mut var = E::zero();
        for &v in xr {
            var += (v - mean) * (v - mean);
        }
        let rs = E::one() / (var * inv_d + eps).sqrt();
        rstd[r] = rs;
        for j in 0..d {
            let h = (xr[j] - mean) * rs;
            xhat[r * d + j] = h;
            y[r * d + j] = h * g[j] + b[j];
        }
    }
    (y, LnCache { xhat, rstd })
}

/// Adds the input gradient into `dx` and the gain/bias gradients into `dg`/`db`.
fn layer_norm_backward<E: Elem>(dy: &[E], c: &LnCache<E>, g: &[E], dg: &mut [E], db: &mut [E], dx: &mut [E], d: usize) {
    let rows = dy.len() / d;
    let inv_d = E::lit(1.0 / d as f64);
    let mut dxhat = vec![E::zero(); d];
    for r in 0..rows {
        let dyr = &dy[r * d..(r + 1) * d];
        let xh = &c.xhat[r * d..(r + 1) * d];
        let mut m1 = E::zero();
        let mut m2 = E::zero();
        for j in 0..d {
            dg[j] += dyr[j] * xh[j];
            db[j] += dyr[j];
            dxhat[j] = dyr[j] * g[j];
            m1 += dxhat[j];
            m2 += dxhat[j] * xh[j];
        }
        m1 = m1 * inv_d;
        m2 = m2 * inv_d;
        let rs = c.rstd[r];
        for j in 0..d {
            dx[r * d + j] += rs * (dxhat[j] - m1 - xh[j] * m2);
        }
    }
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/π)
const GELU_A: f64 = 0.044715;

pub(crate) fn gelu<E: Elem>(x: E) -> E {
    let c = E::lit(GELU_C);
    let a = E::lit(GELU_A);
    let half = E::lit(0.5);
    half * x * (E::one() + (c * (x + a * x * x * x)).tanh())
}

fn gelu_grad<E: Elem>(x: E) -> E {
    let c = E::lit(GELU_C);
    let a = E::lit(GELU_A);
    let half = E::lit(0.5);
    let t = (c * (x + a * x * x * x)).tanh();
    half * (E::one() + t) + half * x * (E::one() - t * t) * c * (E::one() + E::lit(3.0) * a * x * x)
}

/// Row-wise softmax in place.
pub(crate) fn softmax_rows<E: Elem>(z: &mut [E], n: usize) {
    for row in z.chunks_mut(n) {
        let m = row.iter().copied().fold(E::neg_infinity(), E::max);
        let mut s = E::zero();
        for v in row.iter_mut() {
            *v = (*v - m).exp();
            s += *v;
        }
        let inv = E::one() / s;
        for v in row.iter_mut() {
            *v *= inv;
        }
    }
}

/// Gradient at the logits given the gradient at the softmax output:
/// `dz = P ⊙ (dP − ⟨dP, P⟩)`.
pub fn softmax_backward<E: Elem>(probs: &[E], dprobs: &[E]) -> Vec<E> {
    let dot = probs.iter().zip(dprobs).fold(E::zero(), |acc, (&p, &g)| acc + p * g);
    probs.iter().zip(dprobs).map(|(&p, &g)| p * (g - dot)).collect()
}

fn col_sum_into<E: Elem>(dy: &[E], db: &mut [E]) {
    let n = db.len();
    for row in dy.chunks(n) {
        for (acc, &v) in db.iter_mut().zip(row) {
            *acc += v;
        }
    }
}

fn dropout_mask<E: Elem>(n: usize, p: f64, rng: &mut dyn RngCore) -> Vec<E> {
    let threshold = (p * 4_294_967_296.0) as u64;
    let keep = E::lit(1.0 / (1.0 - p));
    (0..n).map(|_| if (rng.next_u32() as u64) < threshold { E::zero() } else { keep }).collect()
}

/// `y = x · W + b` for row-major `x [rows, n_in]` and `W [n_in, n_out]` stored at `w_off`.
pub(crate) fn linear<E: Elem>(x: &[E], params: &[E], w_off: usize, b_off: Option<usize>, n_in: usize, n_out: usize) -> Vec<E> {
    let rows = x.len() / n_in;
    let mut y = vec![E::zero(); rows * n_out];
    if let Some(b) = b_off {
        for row in y.chunks_mut(n_out) {
            row.copy_from_slice(&params[b..b + n_out]);
        }
    }
    gemm(E::one(), x, View::dense(rows, n_in), params, View::rm(w_off, n_in, n_out, n_out), E::one(), &mut y, View::dense(rows, n_out));
    y
}

/// Accumulates `dW += xᵀ·dy` and `db += Σ dy`, returns `dx = dy·Wᵀ`.
#[allow(clippy::too_many_arguments)]
fn linear_backward<E: Elem>(
    x: &[E],
    dy: &[E],
    params: &[E],
    grads: &mut [E],
    w_off: usize,
    b_off: Option<usize>,
    n_in: usize,
    n_out: usize,
) -> Vec<E> {
    let rows = x.len() / n_in;
    gemm(E::one(), x, View::dense(rows, n_in).t(), dy, View::dense(rows, n_out), E::one(), grads, View::rm(w_off, n_in, n_out, n_out));
    if let Some(b) = b_off {
        col_sum_into(dy, &mut grads[b..b + n_out]);
    }
    let mut dx = vec![E::zero(); rows * n_in];
    gemm(E::one(), dy, View::dense(rows, n_out), params, View::rm(w_off, n_in, n_out, n_out).t(), E::zero(), &mut dx, View::dense(rows, n_in));
    dx
}

impl<E: Elem> Model<E> {
    pub fn new(cfg: ModelConfig, seed: u64) -> Result<Self, ModelError> {
        cfg.validate()?;
        let index = ParamIndex::new(&cfg);
        let params = index.init(cfg.init_std, seed);
        Ok(Model { cfg, params, index, exec: Exec::default() })
    }

    pub fn from_params(cfg: ModelConfig, params: Vec<E>) -> Result<Self, ModelError> {
        cfg.validate()?;
        let index = ParamIndex::new(&cfg);
        if params.len() != index.total {
            return Err(ModelError::Config(format!("expected {} parameters, got {}", index.total, params.len())));
        }
        Ok(Model { cfg, params, index, exec: Exec::default() })
    }

    pub fn with_exec(mut self, exec: Exec) -> Self {
        self.exec = exec;
        self
    }

    pub fn n_params(&self) -> usize {
        self.index.total
    }

    pub fn zero_grads(&self) -> Vec<E> {
        vec![E::zero(); self.index.total]
    }

    pub(crate) fn check_ids(&self, tokens: &[u32], positions: &[u32], indices: &[u32]) -> Result<(), ModelError> {
        let checks: [(&'static str, &[u32], usize); 3] =
            [("token", tokens, self.cfg.vocab), ("position", positions, self.cfg.ctx + 1), ("index", indices, INDEX_ROWS)];
        for (what, ids, limit) in checks {
            if let Some(&value) = ids.iter().find(|&&v| v as usize >= limit) {
                return Err(ModelError::OutOfRange { what, value, limit });
            }
        }
        Ok(())
    }

    /// Sum of the token, position and tuple-index embedding rows.
    pub fn embed(&self, tokens: &[u32], positions: &[u32], indices: &[u32]) -> Result<Vec<E>, ModelError> {
        assert!(tokens.len() == positions.len() && tokens.len() == indices.len(), "id sequences differ in length");
        self.check_ids(tokens, positions, indices)?;
        let d = self.cfg.d_model;
        let p = &self.params;
        let mut x = vec![E::zero(); tokens.len() * d];
        for (r, row) in x.chunks_mut(d).enumerate() {
            let (a, b, c) = (
                self.index.wte + tokens[r] as usize * d,
                self.index.wpe + positions[r] as usize * d,
                self.index.wie + indices[r] as usize * d,
            );
            for j in 0..d {
                row[j] = p[a + j] + p[b + j] + p[c + j];
            }
        }
        Ok(x)
    }

    /// Runs the network. Passing an rng enables dropout (training mode).
    pub fn forward(&self, batch: &Batch, mut rng: Option<&mut dyn RngCore>) -> Result<Tape<E>, ModelError> {
        if batch.t > self.cfg.ctx {
            return Err(ModelError::LengthOverflow { len: batch.t, max: self.cfg.ctx });
        }
        let cfg = &self.cfg;
        let (b, t, d) = (batch.b, batch.t, cfg.d_model);
        let rows = b * t;
        let p = &self.params;
        let drop = cfg.dropout > 0.0 && rng.is_some();
        let mut mask = |n: usize| -> Option<Vec<E>> {
            match (drop, rng.as_deref_mut()) {
                (true, Some(r)) => Some(dropout_mask(n, cfg.dropout, r)),
                _ => None,
            }
        };

        let mut x = self.embed(&batch.tokens, &batch.positions, &batch.indices)?;
        let mask_emb = mask(rows * d);
        if let Some(m) = &mask_emb {
            x.iter_mut().zip(m).for_each(|(v, &k)| *v *= k);
        }

        let mut layers = Vec::with_capacity(cfg.n_layer);
        for lx in &self.index.layers {
            let (h1, c1) = layer_norm(&x, &p[lx.ln1_g..lx.ln1_g + d], &p[lx.ln1_b..lx.ln1_b + d], d);
            let qkv = linear(&h1, p, lx.w_qkv, Some(lx.b_qkv), d, 3 * d);
            let (pr, att) = self.attention(&qkv, b, t);
            let mut a = linear(&att, p, lx.w_o, Some(lx.b_o), d, d);
            let mask_attn = mask(rows * d);
            if let Some(m) = &mask_attn {
                a.iter_mut().zip(m).for_each(|(v, &k)| *v *= k);
            }
            x.iter_mut().zip(&a).for_each(|(v, &u)| *v += u);

            let (h2, c2) = layer_norm(&x, &p[lx.ln2_g..lx.ln2_g + d], &p[lx.ln2_b..lx.ln2_b + d], d);
            let f = linear(&h2, p, lx.w_fc, Some(lx.b_fc), d, 4 * d);
            let g: Vec<E> = f.iter().map(|&v| gelu(v)).collect();
            let mut m = linear(&g, p, lx.w_proj, Some(lx.b_proj), 4 * d, d);
            let mask_mlp = mask(rows * d);
            if let Some(mk) = &mask_mlp {
                m.iter_mut().zip(mk).for_each(|(v, &k)| *v *= k);
            }
            x.iter_mut().zip(&m).for_each(|(v, &u)| *v += u);
            layers.push(LayerTape {
                ln1: c1,
                h1,
                qkv,
                p: pr,
                att,
                mask_attn,
                ln2: c2,
                h2,
                f,
                g,
                mask_mlp,
            });
        }
        let ix = &self.index;
        let (hf, cf) = layer_norm(&x, &p[ix.lnf_g..ix.lnf_g + d], &p[ix.lnf_b..ix.lnf_b + d], d);
        let mut probs = linear(&hf, p, ix.w_head, None, d, cfg.vocab);
        softmax_rows(&mut probs, cfg.vocab);
        Ok(Tape {
            b,
            t,
            tokens: batch.tokens.clone(),
            positions: batch.positions.clone(),
            indices: batch.indices.clone(),
            mask_emb,
            layers,
            lnf: cf,
            hf,
            probs,
        })
    }

    /// Causal attention over `qkv [b·t, 3d]`; returns the probabilities
    /// `[b, head, t, t]` and the concatenated head outputs `[b·t, d]`.
    fn attention(&self, qkv: &[E], b: usize, t: usize) -> (Vec<E>, Vec<E>) {
        let d = self.cfg.d_model;
        let nh = self.cfg.n_head;
        let hd = self.cfg.head_dim();
        let scale = E::lit(1.0 / (hd as f64).sqrt());
        let parts = self.exec.map_range(b * nh, |task| {
            let (s, h) = (task / nh, task % nh);
            let base = s * t * 3 * d;
            let q = View { off: base + h * hd, rows: t, cols: hd, rs: 3 * d, cs: 1 };
            let k = View { off: base + d + h * hd, ..q };
            let v = View { off: base + 2 * d + h * hd, ..q };
            let mut pr = vec![E::zero(); t * t];
            gemm(scale, qkv, q, qkv, k.t(), E::zero(), &mut pr, View::dense(t, t));
            for i in 0..t {
                let row = &mut pr[i * t..(i + 1) * t];
                row[i + 1..].fill(E::neg_infinity());
                softmax_rows(&mut row[..=i], i + 1);
                row[i + 1..].fill(E::zero());
            }
            let mut o = vec![E::zero(); t * hd];
            gemm(E::one(), &pr, View::dense(t, t), qkv, v, E::zero(), &mut o, View::dense(t, hd));
            (pr, o)
        });
        let mut probs = Vec::with_capacity(b * nh * t * t);
        let mut att = vec![E::zero(); b * t * d];
        for (task, (pr, o)) in parts.into_iter().enumerate() {
            let (s, h) = (task / nh, task % nh);
            probs.extend_from_slice(&pr);
            for i in 0..t {
                let dst = (s * t + i) * d + h * hd;
                att[dst..dst + hd].copy_from_slice(&o[i * hd..(i + 1) * hd]);
            }
        }
        (probs, att)
    }

    fn attention_backward(&self, lt: &LayerTape<E>, datt: &[E], b: usize, t: usize) -> Vec<E> {
        let d = self.cfg.d_model;
        let nh = self.cfg.n_head;
        let hd = self.cfg.head_dim();
        let scale = E::lit(1.0 / (hd as f64).sqrt());
        let qkv = &lt.qkv;
        let parts = self.exec.map_range(b * nh, |task| {
            let (s, h) = (task / nh, task % nh);
            let base = s * t * 3 * d;
            let q = View { off: base + h * hd, rows: t, cols: hd, rs: 3 * d, cs: 1 };
            let k = View { off: base + d + h * hd, ..q };
            let v = View { off: base + 2 * d + h * hd, ..q };
            let dov = View { off: s * t * d + h * hd, rows: t, cols: hd, rs: d, cs: 1 };
            let pr = &lt.p[task * t * t..(task + 1) * t * t];
            let mut dp = vec![E::zero(); t * t];
            gemm(E::one(), datt, dov, qkv, v.t(), E::zero(), &mut dp, View::dense(t, t));
            let mut dv = vec![E::zero(); t * hd];
            gemm(E::one(), pr, View::dense(t, t).t(), datt, dov, E::zero(), &mut dv, View::dense(t, hd));
            for i in 0..t {
                let prow = &pr[i * t..(i + 1) * t];
                let drow = &mut dp[i * t..(i + 1) * t];
                let mut dot = E::zero();
                for j in 0..=i {
                    dot += prow[j] * drow[j];
                }
                for j in 0..t {
                    drow[j] = if j <= i { prow[j] * (drow[j] - dot) * scale } else { E::zero() };
                }
            }
            let mut dq = vec![E::zero(); t * hd];
            gemm(E::one(), &dp, View::dense(t, t), qkv, k, E::zero(), &mut dq, View::dense(t, hd));
            let mut dk = vec![E::zero(); t * hd];
            gemm(E::one(), &dp, View::dense(t, t).t(), qkv, q, E::zero(), &mut dk, View::dense(t, hd));
            (dq, dk, dv)
        });
        let mut dqkv = vec![E::zero(); b * t * 3 * d];
        for (task, (dq, dk, dv)) in parts.into_iter().enumerate() {
            let (s, h) = (task / nh, task % nh);
            for i in 0..t {
                let r = (s * t + i) * 3 * d + h * hd;
                dqkv[r..r + hd].copy_from_slice(&dq[i * hd..(i + 1) * hd]);
                dqkv[r + d..r + d + hd].copy_from_slice(&dk[i * hd..(i + 1) * hd]);
                dqkv[r + 2 * d..r + 2 * d + hd].copy_from_slice(&dv[i * hd..(i + 1) * hd]);
            }
        }
        dqkv
    }

    /// Backpropagates `dlogits [b·t, vocab]` and accumulates into `grads`.
    pub fn backward(&self, tape: &Tape<E>, dlogits: &[E], grads: &mut [E]) {
        let cfg = &self.cfg;
        let (b, t, d) = (tape.b, tape.t, cfg.d_model);
        let rows = b * t;
        assert_eq!(dlogits.len(), rows * cfg.vocab, "dlogits shape");
        assert_eq!(grads.len(), self.index.total, "gradient buffer");
        let p = &self.params;
        let ix = &self.index;

        let dhf = linear_backward(&tape.hf, dlogits, p, grads, ix.w_head, None, d, cfg.vocab);
        let mut dx = vec![E::zero(); rows * d];
        {
            let (dg, db) = grads[ix.lnf_g..ix.lnf_b + d].split_at_mut(d);
            layer_norm_backward(&dhf, &tape.lnf, &p[ix.lnf_g..ix.lnf_g + d], dg, db, &mut dx, d);
        }

        for (lx, lt) in ix.layers.iter().zip(&tape.layers).rev() {
            self.block_backward(lx, lt, &mut dx, grads, b, t);
        }

        if let Some(m) = &tape.mask_emb {
            dx.iter_mut().zip(m).for_each(|(v, &k)| *v *= k);
        }
        for r in 0..rows {
            let src = &dx[r * d..(r + 1) * d];
            for (table, id) in [(ix.wte, tape.tokens[r]), (ix.wpe, tape.positions[r]), (ix.wie, tape.indices[r])] {
                let o = table + id as usize * d;
                grads[o..o + d].iter_mut().zip(src).for_each(|(g, &v)| *g += v);
            }
        }
    }

    fn block_backward(&self, lx: &LayerIx, lt: &LayerTape<E>, dx: &mut [E], grads: &mut [E], b: usize, t: usize) {
        let d = self.cfg.d_model;
        let p = &self.params;

        let mut dm = dx.to_vec();
        if let Some(m) = &lt.mask_mlp {
            dm.iter_mut().zip(m).for_each(|(v, &k)| *v *= k);
        }
        let mut df = linear_backward(&lt.g, &dm, p, grads, lx.w_proj, Some(lx.b_proj), 4 * d, d);
        df.iter_mut().zip(&lt.f).for_each(|(v, &f)| *v *= gelu_grad(f));
        let dh2 = linear_backward(&lt.h2, &df, p, grads, lx.w_fc, Some(lx.b_fc), d, 4 * d);
        {
            let (dg, db) = grads[lx.ln2_g..lx.ln2_b + d].split_at_mut(d);
            layer_norm_backward(&dh2, &lt.ln2, &p[lx.ln2_g..lx.ln2_g + d], dg, db, dx, d);
        }

        let mut da = dx.to_vec();
        if let Some(m) = &lt.mask_attn {
            da.iter_mut().zip(m).for_each(|(v, &k)| *v *= k);
        }
        let datt = linear_backward(&lt.att, &da, p, grads, lx.w_o, Some(lx.b_o), d, d);
        let dqkv = self.attention_backward(lt, &datt, b, t);
        let dh1 = linear_backward(&lt.h1, &dqkv, p, grads, lx.w_qkv, Some(lx.b_qkv), d, 3 * d);
        let (dg, db) = grads[lx.ln1_g..lx.ln1_b + d].split_at_mut(d);
        layer_norm_backward(&dh1, &lt.ln1, &p[lx.ln1_g..lx.ln1_g + d], dg, db, dx, d);
    }

    /// Converts to another element type.
    pub fn cast<F: Elem>(&self) -> Model<F> {
        Model {
            cfg: self.cfg,
            params: self.params.iter().map(|&v| F::lit(v.as_f64())).collect(),
            index: self.index.clone(),
            exec: self.exec,
        }
    }
}
