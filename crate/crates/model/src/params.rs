//! Flat parameter vector with named tensors.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::Serialize;

use crate::config::{ModelConfig, INDEX_ROWS};
use crate::elem::Elem;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Init {
    Normal,
    Zeros,
    Ones,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TensorSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
    pub init: Init,
}

impl TensorSpec {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

/// Offsets of one transformer block. Weight matrices are stored `[in, out]`.
#[derive(Debug, Clone, Copy)]
pub struct LayerIx {
    pub ln1_g: usize,
    pub ln1_b: usize,
    pub w_qkv: usize,
    pub b_qkv: usize,
    pub w_o: usize,
    pub b_o: usize,
    pub ln2_g: usize,
    pub ln2_b: usize,
    pub w_fc: usize,
    pub b_fc: usize,
    pub w_proj: usize,
    pub b_proj: usize,
}

#[derive(Debug, Clone)]
pub struct ParamIndex {
    pub wte: usize,
    pub wpe: usize,
    pub wie: usize,
    pub layers: Vec<LayerIx>,
    pub lnf_g: usize,
    pub lnf_b: usize,
    pub w_head: usize,
    pub total: usize,
    pub specs: Vec<TensorSpec>,
}

struct Builder {
    specs: Vec<TensorSpec>,
    total: usize,
}

impl Builder {
    fn add(&mut self, name: String, shape: &[usize], init: Init) -> usize {
        let off = self.total;
        let spec = TensorSpec { name, shape: shape.to_vec(), offset: off, init };
        self.total += spec.len();
        self.specs.push(spec);
        off
    }
}

impl ParamIndex {
    pub fn new(cfg: &ModelConfig) -> Self {
        let d = cfg.d_model;
        let mut b = Builder { specs: Vec::new(), total: 0 };
        let wte = b.add("wte".into(), &[cfg.vocab, d], Init::Normal);
        let wpe = b.add("wpe".into(), &[cfg.ctx + 1, d], Init::Normal);
        let wie = b.add("wie".into(), &[INDEX_ROWS, d], Init::Normal);
        let layers = (0..cfg.n_layer)
            .map(|l| {
                let mut add = |n: &str, shape: &[usize], init| b.add(format!("h{l}.{n}"), shape, init);
                LayerIx {
                    ln1_g: add("ln1.g", &[d], Init::Ones),
                    ln1_b: add("ln1.b", &[d], Init::Zeros),
                    w_qkv: add("attn.w_qkv", &[d, 3 * d], Init::Normal),
                    b_qkv: add("attn.b_qkv", &[3 * d], Init::Zeros),
                    w_o: add("attn.w_o", &[d, d], Init::Normal),
                    b_o: add("attn.b_o", &[d], Init::Zeros),
                    ln2_g: add("ln2.g", &[d], Init::Ones),
                    ln2_b: add("ln2.b", &[d], Init::Zeros),
                    w_fc: add("mlp.w_fc", &[d, 4 * d], Init::Normal),
                    b_fc: add("mlp.b_fc", &[4 * d], Init::Zeros),
                    w_proj: add("mlp.w_proj", &[4 * d, d], Init::Normal),
                    b_proj: add("mlp.b_proj", &[d], Init::Zeros),
                }
            })
            .collect();
        let lnf_g = b.add("lnf.g".into(), &[d], Init::Ones);
        let lnf_b = b.add("lnf.b".into(), &[d], Init::Zeros);
        let w_head = b.add("head".into(), &[d, cfg.vocab], Init::Normal);
        ParamIndex { wte, wpe, wie, layers, lnf_g, lnf_b, w_head, total: b.total, specs: b.specs }
    }

    pub fn spec(&self, name: &str) -> Option<&TensorSpec> {
        self.specs.iter().find(|s| s.name == name)
    }

    pub fn init<E: Elem>(&self, std: f64, seed: u64) -> Vec<E> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, std).expect("positive std");
        let mut out = vec![E::zero(); self.total];
        for s in &self.specs {
            let dst = &mut out[s.range()];
            match s.init {
                Init::Zeros => {}
                Init::Ones => dst.fill(E::one()),
                Init::Normal => dst.iter_mut().for_each(|v| *v = E::lit(normal.sample(&mut rng))),
            }
        }
        out
    }
}
