//! Segment-guided token scoring.
//!
//! Raw scores are window sums of head-averaged attention. Each segment gets
//! a weight `ω = I · (1 + η·D)` from its mean raw score `I` and the mean
//! entropy `D` of its tokens' normalized window attention, and every token
//! is scaled by `1 + α·ω` of its own segment. Scaling a segment by one
//! positive factor keeps the order of tokens inside it.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::segment::Segment;
use crate::trace::AttentionTrace;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoringConfig {
    /// Strength of the segment factor in the adjusted score.
    pub alpha: f64,
    /// Weight of diversity relative to importance in the segment weight.
    pub eta: f64,
    /// Smoothing inside the entropy logarithm.
    pub epsilon: f64,
}

impl Default for ScoringConfig {
    fn default() -> Self {
        ScoringConfig {
            alpha: 0.9,
            eta: 1.0,
            epsilon: 1e-6,
        }
    }
}

impl ScoringConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::Config(format!("alpha must be >= 0, got {}", self.alpha)));
        }
        if !(self.eta >= 0.0 && self.eta.is_finite()) {
            return Err(Error::Config(format!("eta must be >= 0, got {}", self.eta)));
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::Config(format!("epsilon must be > 0, got {}", self.epsilon)));
        }
        Ok(())
    }
}

/// Row-major `[query][key]` matrix of head-averaged window attention.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowMatrix {
    pub window: usize,
    pub len: usize,
    pub data: Vec<f64>,
}

impl WindowMatrix {
    pub fn row(&self, q: usize) -> &[f64] {
        &self.data[q * self.len..(q + 1) * self.len]
    }

    pub fn get(&self, q: usize, t: usize) -> f64 {
        self.data[q * self.len + t]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreSet {
    pub head_mean: WindowMatrix,
    pub raw: Vec<f64>,
    pub adjusted: Vec<f64>,
    pub seg_importance: Vec<f64>,
    pub seg_diversity: Vec<f64>,
    pub seg_weight: Vec<f64>,
}

/// Mean over heads: `Ā[q][t] = (1/H) Σ_h A[h][q][t]`.
pub fn head_mean(trace: &AttentionTrace) -> WindowMatrix {
    let (w, t_len) = (trace.window, trace.compressible_len());
    let mut data = vec![0.0; w * t_len];
    for h in 0..trace.num_heads {
        for q in 0..w {
            let dst = &mut data[q * t_len..(q + 1) * t_len];
            for (d, a) in dst.iter_mut().zip(trace.row(h, q)) {
                *d += a;
            }
        }
    }
    let inv = 1.0 / trace.num_heads as f64;
    data.iter_mut().for_each(|d| *d *= inv);
    WindowMatrix { window: w, len: t_len, data }
}

/// Column sums of the head-mean matrix: `s[t] = Σ_q Ā[q][t]`.
pub fn window_scores(head_mean: &WindowMatrix) -> Vec<f64> {
    let mut s = vec![0.0; head_mean.len];
    for q in 0..head_mean.window {
        for (acc, a) in s.iter_mut().zip(head_mean.row(q)) {
            *acc += a;
        }
    }
    s
}

/// Entropy of one token's attention distribution over the window queries.
/// A column with no mass has entropy 0.
pub fn token_entropy(head_mean: &WindowMatrix, column_sum: f64, t: usize, epsilon: f64) -> f64 {
    if column_sum <= 0.0 {
        return 0.0;
    }
    let mut h = 0.0;
    for q in 0..head_mean.window {
        let p = head_mean.get(q, t) / column_sum;
        if p > 0.0 {
            h -= p * (p + epsilon).ln();
        }
    }
    h
}

/// Per-segment mean raw score `I` and mean token entropy `D`.
pub fn segment_stats(
    head_mean: &WindowMatrix,
    raw: &[f64],
    segments: &[Segment],
    epsilon: f64,
) -> (Vec<f64>, Vec<f64>) {
    segments
        .iter()
        .map(|seg| {
            let n = seg.len() as f64;
            let importance = raw[seg.range()].iter().sum::<f64>() / n;
            let diversity = seg
                .range()
                .map(|t| token_entropy(head_mean, raw[t], t, epsilon))
                .sum::<f64>()
                / n;
            // ε can push a near-deterministic column a hair below zero
            (importance, diversity.max(0.0))
        })
        .unzip()
}

/// `ω_k = I_k · (1 + η·D_k)`.
pub fn segment_weights(importance: &[f64], diversity: &[f64], eta: f64) -> Vec<f64> {
    importance
        .iter()
        .zip(diversity)
        .map(|(i, d)| i * (1.0 + eta * d))
        .collect()
}

/// `s̃_t = s_t · (1 + α·ω_{k(t)})`.
///
/// Rounding can map two distinct raw scores of a segment onto one adjusted
/// value; the larger one is then nudged up by an ulp so the order inside
/// every segment stays strict.
pub fn adjusted_scores(raw: &[f64], weights: &[f64], segments: &[Segment], alpha: f64) -> Vec<f64> {
    let mut out = vec![0.0; raw.len()];
    let mut order = Vec::new();
    for seg in segments {
        let factor = 1.0 + alpha * weights[seg.index];
        for t in seg.range() {
            out[t] = raw[t] * factor;
        }
        if factor == 1.0 {
            continue;
        }
        order.clear();
        order.extend(seg.range());
        order.sort_unstable_by(|&a, &b| raw[a].total_cmp(&raw[b]));
        for w in 1..order.len() {
            let (lo, hi) = (order[w - 1], order[w]);
            if raw[lo] == raw[hi] {
                out[hi] = out[lo];
            } else if out[hi] <= out[lo] {
                out[hi] = out[lo].next_up();
            }
        }
    }
    out
}

/// Run the full scoring pass over a segmented trace.
pub fn score(trace: &AttentionTrace, segments: &[Segment], cfg: &ScoringConfig) -> ScoreSet {
    let head_mean = head_mean(trace);
    let raw = window_scores(&head_mean);
    let (seg_importance, seg_diversity) = segment_stats(&head_mean, &raw, segments, cfg.epsilon);
    let seg_weight = segment_weights(&seg_importance, &seg_diversity, cfg.eta);
    let adjusted = adjusted_scores(&raw, &seg_weight, segments, cfg.alpha);
    ScoreSet {
        head_mean,
        raw,
        adjusted,
        seg_importance,
        seg_diversity,
        seg_weight,
    }
}
