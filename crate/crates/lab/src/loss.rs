//! Cross-entropy, the Gaussian-window token expectation and the expert loss.

use std::str::FromStr;

use ergoscene_core::codec::{dequantize_attr, dequantize_slope};
use ergoscene_core::{Attr, CategoryId, Codec, Layout, SceneExpert, TUPLE};
use ergoscene_model::Elem;
use serde::{Deserialize, Serialize};

/// Loss weighting scheme `(β_T, β_E)` as a function of the sample weight `Ê`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default, PartialOrd, Ord)]
pub enum Variant {
    /// Cross-entropy only.
    #[default]
    V0,
    /// Cross-entropy weighted by `1 − Ê`.
    V1,
    /// Cross-entropy plus expert loss.
    V2,
    /// `(1 − Ê)` cross-entropy plus `Ê` expert loss.
    V3,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::V0, Variant::V1, Variant::V2, Variant::V3];

    pub fn betas(self, weight: f64) -> (f64, f64) {
        match self {
            Variant::V0 => (1.0, 0.0),
            Variant::V1 => (1.0 - weight, 0.0),
            Variant::V2 => (1.0, 1.0),
            Variant::V3 => (1.0 - weight, weight),
        }
    }

    /// Whether the expert loss contributes to the gradient.
    pub fn uses_expert(self) -> bool {
        matches!(self, Variant::V2 | Variant::V3)
    }

    pub fn name(self) -> &'static str {
        match self {
            Variant::V0 => "V0",
            Variant::V1 => "V1",
            Variant::V2 => "V2",
            Variant::V3 => "V3",
        }
    }
}

impl FromStr for Variant {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_uppercase().as_str() {
            "V0" => Ok(Variant::V0),
            "V1" => Ok(Variant::V1),
            "V2" => Ok(Variant::V2),
            "V3" => Ok(Variant::V3),
            _ => Err(format!("unknown variant {s:?}")),
        }
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// `β_T · L_T + β_E · L_E`.
pub fn total_loss(variant: Variant, weight: f64, ce: f64, expert: f64) -> f64 {
    let (bt, be) = variant.betas(weight);
    let mut l = bt * ce;
    if be != 0.0 {
        l += be * expert;
    }
    l
}

/// Mean negative log-probability of the targets over unmasked rows, and its
/// gradient at the logits, `[rows, vocab]`.
pub fn cross_entropy<E: Elem>(probs: &[E], vocab: usize, targets: &[u32], mask: &[bool]) -> (f64, Vec<f64>) {
    assert_eq!(probs.len(), targets.len() * vocab, "probability rows");
    assert_eq!(targets.len(), mask.len(), "mask length");
    let n = mask.iter().filter(|&&m| m).count();
    let mut grad = vec![0.0; probs.len()];
    if n == 0 {
        return (0.0, grad);
    }
    let inv = 1.0 / n as f64;
    let mut loss = 0.0;
    for (r, row) in probs.chunks(vocab).enumerate() {
        if !mask[r] {
            continue;
        }
        let y = targets[r] as usize;
        loss -= row[y].as_f64().ln();
        let g = &mut grad[r * vocab..(r + 1) * vocab];
        for (gj, &p) in g.iter_mut().zip(row) {
            *gj = p.as_f64() * inv;
        }
        g[y] -= inv;
    }
    (loss * inv, grad)
}

/// Differentiable surrogate for the most likely token value.
#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    /// Most likely value token (lowest id on ties).
    pub v_hat: usize,
    /// `Σ N_j P_j v_j / Σ N_j P_j` over value tokens `j`.
    pub v_bar: f64,
    /// First token of the support of `grad`.
    pub start: usize,
    /// `∂v̄/∂P_j` for `j = start, start + 1, …`; zero elsewhere.
    pub grad: Vec<f64>,
}

/// Gaussian weights below this are treated as zero.
const WINDOW_FLOOR: f64 = 1e-16;

/// Window expectation over the value tokens `0..n_values` of `probs`.
pub fn window_expectation<E: Elem>(probs: &[E], n_values: usize, sigma: f64) -> Window {
    assert!(sigma > 0.0 && n_values > 0 && probs.len() >= n_values);
    let mut v_hat = 0;
    for j in 1..n_values {
        if probs[j] > probs[v_hat] {
            v_hat = j;
        }
    }
    let reach = (sigma * (-2.0 * WINDOW_FLOOR.ln()).sqrt()).floor() as usize;
    let start = v_hat.saturating_sub(reach);
    let end = (v_hat + reach + 1).min(n_values);
    let weights: Vec<f64> = (start..end)
        .map(|j| {
            let z = (j as f64 - v_hat as f64) / sigma;
            (-0.5 * z * z).exp() * probs[j].as_f64()
        })
        .collect();
    let den: f64 = weights.iter().sum();
    let num: f64 = weights.iter().enumerate().map(|(i, w)| w * (start + i) as f64).sum();
    if !(den > 0.0) {
        return Window { v_hat, v_bar: v_hat as f64, start, grad: vec![0.0; end - start] };
    }
    let v_bar = num / den;
    let grad = (start..end)
        .map(|j| {
            let z = (j as f64 - v_hat as f64) / sigma;
            (-0.5 * z * z).exp() * (j as f64 - v_bar) / den
        })
        .collect();
    Window { v_hat, v_bar, start, grad }
}

/// Object index and attribute addressed by sequence position `k`, if the
/// expert loss applies there: a geometric slot of a furniture object that is
/// neither the room nor a door or window. `len` counts tokens up to and
/// including the stop token.
pub fn geometric_slot(codec: &Codec, tokens: &[u32], len: usize, k: usize) -> Option<(usize, Attr)> {
    if k < TUPLE || k + 1 >= len || k % TUPLE == 0 {
        return None;
    }
    let object = k / TUPLE;
    let cat = tokens[object * TUPLE];
    if cat >= codec.cfg.pad_token() || codec.is_boundary(CategoryId(cat as u16)) {
        return None;
    }
    Attr::from_slot(k % TUPLE).map(|a| (object, a))
}

/// Expert loss of one slot: the scene score of `layout` with the slot's
/// attribute replaced by the dequantized window expectation, plus
/// `∂loss/∂v̄`.
pub struct SlotLoss {
    pub loss: f64,
    pub dloss_dvbar: f64,
}

/// Evaluates the expert once per `(object, attribute, window)`.
pub fn slot_losses(
    expert: &dyn SceneExpert,
    layout: &Layout,
    cell: f64,
    resolution: u32,
    slots: &[(usize, Attr, &Window)],
) -> Vec<SlotLoss> {
    let queries: Vec<(usize, Attr, f64)> =
        slots.iter().map(|&(o, a, w)| (o, a, dequantize_attr(a, w.v_bar, cell, resolution))).collect();
    expert
        .scores_with_attrs(layout, &queries)
        .into_iter()
        .zip(slots)
        .map(|((loss, d), &(_, a, _))| SlotLoss { loss, dloss_dvbar: d * dequantize_slope(a, cell, resolution) })
        .collect()
}

/// Expert loss of sequence position `k` given the predicted distribution
/// `probs` there, with its gradient with respect to every entry of `probs`.
/// `None` for positions the expert loss does not apply to.
#[allow(clippy::too_many_arguments)]
pub fn expert_token_loss<E: Elem>(
    expert: &dyn SceneExpert,
    codec: &Codec,
    layout: &Layout,
    tokens: &[u32],
    len: usize,
    k: usize,
    probs: &[E],
    sigma: f64,
) -> Option<(f64, Vec<f64>)> {
    let (object, attr) = geometric_slot(codec, tokens, len, k)?;
    let r = codec.cfg.resolution;
    let w = window_expectation(probs, r as usize, sigma);
    let cell = codec.cell_of(&tokens[..TUPLE]);
    let s = &slot_losses(expert, layout, cell, r, &[(object, attr, &w)])[0];
    let mut grad = vec![0.0; probs.len()];
    for (i, g) in w.grad.iter().enumerate() {
        grad[w.start + i] = s.dloss_dvbar * g;
    }
    Some((s.loss, grad))
}

/// Adds `softmax_backward(P, dP)` to `dlogits` for a sparse `dP` supported on
/// `start..start + dp.len()`.
pub fn add_softmax_backward<E: Elem>(probs: &[E], start: usize, dp: &[f64], dlogits: &mut [f64]) {
    let dot: f64 = dp.iter().enumerate().map(|(i, g)| g * probs[start + i].as_f64()).sum();
    for (j, (z, &p)) in dlogits.iter_mut().zip(probs).enumerate() {
        let g = if j >= start && j < start + dp.len() { dp[j - start] } else { 0.0 };
        *z += p.as_f64() * (g - dot);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_cross_entropy_is_log_vocab() {
        let v = 258;
        let probs = vec![1.0 / v as f64; 3 * v];
        let (l, g) = cross_entropy(&probs, v, &[1, 7, 200], &[true, true, true]);
        assert!((l - (v as f64).ln()).abs() < 1e-12);
        assert!((l - 5.553).abs() < 1e-3);
        let row_sum: f64 = g[..v].iter().sum();
        assert!(row_sum.abs() < 1e-12);
    }

    #[test]
    fn perfect_prediction_has_zero_loss() {
        let probs = [0.0, 1.0, 0.0, 1.0, 0.0, 0.0];
        let (l, _) = cross_entropy(&probs, 3, &[1, 0], &[true, true]);
        assert_eq!(l, 0.0);
    }

    #[test]
    fn all_masked_gives_zero_and_no_gradient() {
        let probs = [0.2f32, 0.8, 0.5, 0.5];
        let (l, g) = cross_entropy(&probs, 2, &[0, 1], &[false, false]);
        assert_eq!(l, 0.0);
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn window_examples() {
        let mut p = vec![0.0; 258];
        p[100] = 0.5;
        p[108] = 0.5;
        let w = window_expectation(&p, 256, 8.0);
        assert_eq!(w.v_hat, 100);
        let e = (-0.5f64).exp();
        assert!((w.v_bar - (100.0 + 108.0 * e) / (1.0 + e)).abs() < 1e-12);
        assert!((w.v_bar - 103.02).abs() < 5e-3);

        let mut one = vec![0.0; 258];
        one[37] = 1.0;
        assert_eq!(window_expectation(&one, 256, 8.0).v_bar, 37.0);

        let mut sym = vec![0.0; 258];
        sym[50] = 0.4;
        sym[47] = 0.15;
        sym[53] = 0.15;
        sym[40] = 0.1;
        sym[60] = 0.1;
        assert!((window_expectation(&sym, 256, 8.0).v_bar - 50.0).abs() < 1e-12);
    }

    #[test]
    fn window_gradient_matches_finite_differences() {
        let mut p: Vec<f64> = (0..40).map(|j| 1.0 + ((j * 7919) % 13) as f64).collect();
        p[20] = 30.0;
        let s: f64 = p.iter().sum();
        p.iter_mut().for_each(|v| *v /= s);
        let w = window_expectation(&p, 40, 3.0);
        for j in [12, 19, 20, 25, 33] {
            let mut hi = p.clone();
            let mut lo = p.clone();
            hi[j] += 1e-6;
            lo[j] -= 1e-6;
            let num = (window_expectation(&hi, 40, 3.0).v_bar - window_expectation(&lo, 40, 3.0).v_bar) / 2e-6;
            let ana = if j >= w.start && j < w.start + w.grad.len() { w.grad[j - w.start] } else { 0.0 };
            assert!((num - ana).abs() < 1e-6 * num.abs().max(1.0), "{j}: {num} vs {ana}");
        }
    }

    #[test]
    fn window_support_is_local() {
        let mut p = vec![1.0 / 256.0; 256];
        p[128] = 0.5;
        let w = window_expectation(&p, 256, 8.0);
        assert!(w.start > 0 && w.start + w.grad.len() < 256);
        assert!(w.grad.len() <= 2 * 69 + 1);
    }

    #[test]
    fn variant_weights() {
        assert_eq!(total_loss(Variant::V0, 0.7, 2.0, 9.0), 2.0);
        assert_eq!(total_loss(Variant::V3, 0.0, 2.0, 9.0), 2.0);
        assert_eq!(total_loss(Variant::V2, 0.3, 2.0, 9.0), 11.0);
        assert!((total_loss(Variant::V1, 0.25, 2.0, 9.0) - 1.5).abs() < 1e-15);
        assert!((total_loss(Variant::V3, 0.25, 2.0, 4.0) - 2.5).abs() < 1e-15);
        assert_eq!("v2".parse::<Variant>().unwrap(), Variant::V2);
    }
}
