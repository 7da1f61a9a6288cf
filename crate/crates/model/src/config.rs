use serde::{Deserialize, Serialize};

use crate::error::ModelError;

/// Number of rows in the tuple-index embedding (indices 1..=6, row 0 unused).
pub const INDEX_ROWS: usize = 7;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub n_layer: usize,
    pub n_head: usize,
    pub d_model: usize,
    pub dropout: f64,
    pub vocab: usize,
    /// Longest input the model accepts; positions run 1..=ctx.
    pub ctx: usize,
    pub init_std: f64,
}

impl ModelConfig {
    /// 4 layers, 4 heads, width 128.
    pub fn desk(vocab: usize, ctx: usize) -> Self {
        ModelConfig { n_layer: 4, n_head: 4, d_model: 128, dropout: 0.1, vocab, ctx, init_std: 0.02 }
    }

    /// 12 layers, 8 heads, width 256.
    pub fn paper(vocab: usize, ctx: usize) -> Self {
        ModelConfig { n_layer: 12, n_head: 8, d_model: 256, ..ModelConfig::desk(vocab, ctx) }
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_head
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: &str| Err(ModelError::Config(m.to_string()));
        if self.n_layer == 0 || self.n_head == 0 || self.d_model == 0 || self.vocab == 0 || self.ctx == 0 {
            return bad("all sizes must be positive");
        }
        if self.d_model % self.n_head != 0 {
            return bad("embedding width must be divisible by the head count");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout must lie in [0, 1)");
        }
        if !(self.init_std > 0.0) {
            return bad("init_std must be positive");
        }
        Ok(())
    }
}
