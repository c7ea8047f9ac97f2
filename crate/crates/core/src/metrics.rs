//! Diagnostic metrics over segmentations, scores and retained sets.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::blocksearch::{top_k_of, CompressionPlan};
use crate::error::{Error, Result};
use crate::segment::Segment;
use crate::trace::NeedleSpan;

/// Fraction of consecutive `g`-blocks over `[0, T)` that touch two or more
/// segments.
pub fn cross_sentence_rate(segments: &[Segment], g: usize, t_len: usize) -> f64 {
    if g == 0 || t_len == 0 {
        return 0.0;
    }
    let mut blocks = 0usize;
    let mut crossing = 0usize;
    for start in (0..t_len).step_by(g) {
        let last = (start + g).min(t_len) - 1;
        blocks += 1;
        // a boundary strictly inside (start, last] means two segments
        let first_seg = segments.partition_point(|s| s.end <= start);
        if segments.get(first_seg).is_some_and(|s| s.end <= last) {
            crossing += 1;
        }
    }
    crossing as f64 / blocks as f64
}

fn top_b_mass(scores: &[f64], budget: usize) -> f64 {
    top_k_of(scores, (0..scores.len()).collect(), budget)
        .iter()
        .map(|&t| scores[t])
        .sum()
}

/// Kept score mass relative to the token-level top-B mass, in `[0, 1]`;
/// 1 when the top-B mass is zero.
pub fn retention_fidelity(scores: &[f64], retained: &[usize], budget: usize) -> f64 {
    let denom = top_b_mass(scores, budget);
    if denom <= 0.0 {
        return 1.0;
    }
    let kept: f64 = retained.iter().map(|&t| scores[t]).sum();
    (kept / denom).clamp(0.0, 1.0)
}

/// Score mass sacrificed versus token-level top-B: `1 - fidelity`.
pub fn redundancy_rate(scores: &[f64], retained: &[usize], budget: usize) -> f64 {
    1.0 - retention_fidelity(scores, retained, budget)
}

pub fn needle_recall(retained: &[usize], needle: NeedleSpan) -> Result<f64> {
    if needle.len == 0 {
        return Err(Error::Metric("needle span is empty".into()));
    }
    let hit = retained.iter().filter(|&&t| needle.contains(t)).count();
    Ok(hit as f64 / needle.len as f64)
}

/// Counts of chosen block sizes over segments with a nonzero budget.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct BlockSizeHistogram {
    pub counts: BTreeMap<usize, usize>,
    /// Mean block size, one vote per budgeted segment.
    pub mean: f64,
}

impl BlockSizeHistogram {
    pub fn total(&self) -> usize {
        self.counts.values().sum()
    }

    pub fn add(&mut self, g: usize) {
        *self.counts.entry(g).or_default() += 1;
        let n = self.total() as f64;
        self.mean += (g as f64 - self.mean) / n;
    }

    pub fn merge(&mut self, other: &BlockSizeHistogram) {
        for (&g, &c) in &other.counts {
            *self.counts.entry(g).or_default() += c;
        }
        self.refresh_mean();
    }

    fn refresh_mean(&mut self) {
        let n = self.total();
        self.mean = if n == 0 {
            0.0
        } else {
            self.counts.iter().map(|(&g, &c)| (g * c) as f64).sum::<f64>() / n as f64
        };
    }
}

pub fn blocksize_histogram(plans: &[CompressionPlan]) -> BlockSizeHistogram {
    let mut counts = BTreeMap::new();
    for p in plans {
        for s in p.active_segments() {
            *counts.entry(s.block_size).or_default() += 1;
        }
    }
    let mut h = BlockSizeHistogram { counts, mean: 0.0 };
    h.refresh_mean();
    h
}

/// Analytic KV-cache size in bytes: `2 · batch · layers · seq_len · heads ·
/// head_dim · bytes_per_value`.
pub fn kv_bytes_estimate(
    batch: u64,
    layers: u64,
    seq_len: u64,
    heads: u64,
    head_dim: u64,
    bytes_per_value: u64,
) -> Result<u64> {
    let dims = [batch, layers, seq_len, heads, head_dim, bytes_per_value];
    if dims.contains(&0) {
        return Err(Error::Metric("all KV dimensions must be positive".into()));
    }
    dims.iter()
        .try_fold(2u64, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| Error::Metric("KV byte estimate overflows u64".into()))
}

/// Spearman rank correlation with average ranks for ties. `None` when
/// either side is constant or the lengths differ.
pub fn spearman(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    let (rx, ry) = (average_ranks(x), average_ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some(sxy / (sxx * syy).sqrt())
}

fn average_ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut ranks = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Named scalar metrics plus optional block-size histogram and config echo.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub metrics: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub histogram: Option<BlockSizeHistogram>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<serde_json::Value>,
}

impl MetricReport {
    pub fn insert(&mut self, name: impl Into<String>, value: f64) {
        self.metrics.insert(name.into(), value);
    }
}
