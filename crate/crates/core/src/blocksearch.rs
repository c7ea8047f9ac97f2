//! Budget-driven adaptive block-size search.
//!
//! A global top-B over adjusted scores fixes how many tokens each segment
//! keeps (`b_k`). Each segment then tries block sizes from the largest
//! candidate down: it is cut into fixed-size blocks from its start, the
//! best blocks are taken while they fit in `b_k`, and the first block that
//! does not fit contributes only its best tokens. The first block size whose
//! kept score mass reaches `tau` times the token-level mass wins. Block size
//! 1 reproduces the token-level selection exactly, so the scan always ends.
//!
//! Every ranking breaks ties toward the smaller index.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::scoring::{score, ScoreSet, ScoringConfig};
use crate::segment::{segment_tokens, Segment, SegmentConfig};
use crate::trace::AttentionTrace;

pub const DEFAULT_LADDER: &[usize] = &[1, 2, 3, 5, 7, 9, 11, 13];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    pub budget: usize,
    /// Fidelity a block size must reach to be accepted.
    pub tau: f64,
    pub g_max: usize,
    /// Candidate block sizes; ignored when `dense_range` is set.
    pub ladder: Vec<usize>,
    /// Search every integer in `1..=g_max` instead of the ladder.
    pub dense_range: bool,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            budget: 96,
            tau: 0.85,
            g_max: 13,
            ladder: DEFAULT_LADDER.to_vec(),
            dense_range: false,
        }
    }
}

impl SearchConfig {
    pub fn with_budget(budget: usize) -> Self {
        SearchConfig {
            budget,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.budget == 0 {
            return Err(Error::Config("budget must be at least 1".into()));
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(Error::Config(format!("tau must be in (0, 1], got {}", self.tau)));
        }
        if self.g_max == 0 {
            return Err(Error::Config("g_max must be at least 1".into()));
        }
        if !self.dense_range {
            if self.ladder.first() != Some(&1) {
                return Err(Error::Config("block-size ladder must start at 1".into()));
            }
            if self.ladder.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::Config("block-size ladder must be strictly ascending".into()));
            }
        }
        Ok(())
    }

    /// Candidate block sizes for a segment of `seg_len` tokens with budget
    /// `b_k`, ascending.
    pub fn candidates(&self, seg_len: usize, b_k: usize) -> Vec<usize> {
        let limit = seg_len.min(b_k).min(self.g_max);
        if self.dense_range {
            (1..=limit).collect()
        } else {
            self.ladder.iter().copied().filter(|&g| g >= 1 && g <= limit).collect()
        }
    }
}

/// Everything needed to reproduce a plan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct PlanConfig {
    pub scoring: ScoringConfig,
    pub search: SearchConfig,
    pub segmentation: SegmentConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentPlan {
    pub segment: usize,
    pub start: usize,
    pub end: usize,
    /// Implicit budget `b_k`.
    pub budget: usize,
    pub block_size: usize,
    /// Kept token indices, ascending.
    pub retained: Vec<usize>,
    pub fidelity: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompressionPlan {
    pub budget: usize,
    pub segments: Vec<SegmentPlan>,
    /// Kept compressible-region indices, ascending.
    pub retained: Vec<usize>,
    /// Observation-window indices; always kept.
    pub window_tokens: Vec<usize>,
    pub config: PlanConfig,
    pub manifest: Option<serde_json::Value>,
}

impl CompressionPlan {
    /// Segments that received a nonzero budget.
    pub fn active_segments(&self) -> impl Iterator<Item = &SegmentPlan> {
        self.segments.iter().filter(|s| s.budget > 0)
    }
}

/// Descending by score, ascending by index on ties.
#[inline]
pub fn rank_cmp(scores: &[f64], a: usize, b: usize) -> Ordering {
    scores[b].total_cmp(&scores[a]).then(a.cmp(&b))
}

/// The `k` best of `candidates`, returned in ascending index order.
pub fn top_k_of(scores: &[f64], mut candidates: Vec<usize>, k: usize) -> Vec<usize> {
    if k < candidates.len() {
        if k > 0 {
            candidates.select_nth_unstable_by(k - 1, |&a, &b| rank_cmp(scores, a, b));
        }
        candidates.truncate(k);
    }
    candidates.sort_unstable();
    candidates
}

/// Global top-B token indices (ascending).
pub fn select_top_b(scores: &[f64], budget: usize) -> Result<Vec<usize>> {
    if budget == 0 {
        return Err(Error::Config("budget must be at least 1".into()));
    }
    Ok(top_k_of(scores, (0..scores.len()).collect(), budget))
}

/// Number of top-B tokens falling in each segment.
pub fn implicit_budgets(top_b: &[usize], segments: &[Segment]) -> Vec<usize> {
    segments
        .iter()
        .map(|s| top_b.partition_point(|&t| t < s.end) - top_b.partition_point(|&t| t < s.start))
        .collect()
}

/// Cover `b_k` tokens of `seg` with blocks of size `g`, refining the first
/// block that does not fit down to its best tokens.
pub fn cover_segment(scores: &[f64], seg: &Segment, b_k: usize, g: usize) -> Result<Vec<usize>> {
    let len = seg.len();
    if b_k > len {
        return Err(Error::Config(format!(
            "segment budget {b_k} exceeds segment length {len}"
        )));
    }
    if g == 0 || g > len.min(b_k) {
        return Err(Error::Config(format!(
            "block size {g} outside 1..={} for segment [{}, {})",
            len.min(b_k),
            seg.start,
            seg.end
        )));
    }
    let blocks: Vec<(usize, usize)> = (seg.start..seg.end)
        .step_by(g)
        .map(|s| (s, (s + g).min(seg.end)))
        .collect();
    let phi: Vec<f64> = blocks
        .iter()
        .map(|&(s, e)| scores[s..e].iter().sum())
        .collect();
    let mut order: Vec<usize> = (0..blocks.len()).collect();
    order.sort_unstable_by(|&a, &b| rank_cmp(&phi, a, b));

    let mut kept = Vec::with_capacity(b_k);
    for m in order {
        let (s, e) = blocks[m];
        let room = b_k - kept.len();
        if e - s <= room {
            kept.extend(s..e);
        } else {
            kept.extend(top_k_of(scores, (s..e).collect(), room));
            break;
        }
    }
    kept.sort_unstable();
    Ok(kept)
}

fn mass(scores: &[f64], set: &[usize]) -> f64 {
    set.iter().map(|&t| scores[t]).sum()
}

/// Kept score mass over the token-level baseline mass; 1 when the baseline
/// holds nothing. Both sets are summed in the order given, so pass them
/// sorted to get bit-exact 1 on equal sets.
pub fn fidelity_ratio(scores: &[f64], cover: &[usize], base: &[usize]) -> f64 {
    let denom = mass(scores, base);
    if denom <= 0.0 {
        return 1.0;
    }
    (mass(scores, cover) / denom).min(1.0)
}

/// Choose the block size for one segment: the largest candidate whose
/// fidelity reaches `tau`, falling back to token-level selection.
pub fn search_segment(
    scores: &[f64],
    seg: &Segment,
    b_k: usize,
    base: &[usize],
    cfg: &SearchConfig,
) -> Result<SegmentPlan> {
    let mut plan = SegmentPlan {
        segment: seg.index,
        start: seg.start,
        end: seg.end,
        budget: b_k,
        block_size: 1,
        retained: Vec::new(),
        fidelity: 1.0,
    };
    if b_k == 0 {
        return Ok(plan);
    }
    let candidates = cfg.candidates(seg.len(), b_k);
    for &g in candidates.iter().rev() {
        let cover = cover_segment(scores, seg, b_k, g)?;
        let r = fidelity_ratio(scores, &cover, base);
        if r >= cfg.tau || g == 1 {
            plan.block_size = g;
            plan.retained = cover;
            plan.fidelity = r;
            return Ok(plan);
        }
    }
    unreachable!("1 is always a candidate for a nonzero budget")
}

/// Intermediate products of one compression run.
#[derive(Debug, Clone)]
pub struct Compression {
    pub segments: Vec<Segment>,
    pub scores: ScoreSet,
    pub top_b: Vec<usize>,
    pub plan: CompressionPlan,
}

/// Segment, score, and search one trace.
pub fn compress(trace: &AttentionTrace, config: &PlanConfig) -> Result<CompressionPlan> {
    compress_detailed(trace, config, Exec::Sequential).map(|c| c.plan)
}

/// [`compress`] keeping the intermediate products; per-segment searches
/// run under `exec`.
pub fn compress_detailed(trace: &AttentionTrace, config: &PlanConfig, exec: Exec) -> Result<Compression> {
    config.scoring.validate()?;
    config.search.validate()?;
    config.segmentation.validate()?;
    let segments = segment_tokens(trace, &config.segmentation);
    let scores = score(trace, &segments, &config.scoring);
    let top_b = select_top_b(&scores.adjusted, config.search.budget)?;
    let plan_segments = search_segments(&scores.adjusted, &segments, &top_b, &config.search, exec)?;

    // segments are ordered and disjoint, so concatenation is already sorted
    let retained: Vec<usize> = plan_segments.iter().flat_map(|p| p.retained.iter().copied()).collect();
    let plan = CompressionPlan {
        budget: config.search.budget,
        segments: plan_segments,
        retained,
        window_tokens: trace.window_indices().collect(),
        config: config.clone(),
        manifest: None,
    };
    Ok(Compression {
        segments,
        scores,
        top_b,
        plan,
    })
}

/// Top-B, implicit budgets, and per-segment search over precomputed scores.
pub fn plan_segments(
    adjusted: &[f64],
    segments: &[Segment],
    cfg: &SearchConfig,
    exec: Exec,
) -> Result<Vec<SegmentPlan>> {
    cfg.validate()?;
    let top_b = select_top_b(adjusted, cfg.budget)?;
    search_segments(adjusted, segments, &top_b, cfg, exec)
}

fn search_segments(
    adjusted: &[f64],
    segments: &[Segment],
    top_b: &[usize],
    cfg: &SearchConfig,
    exec: Exec,
) -> Result<Vec<SegmentPlan>> {
    let budgets = implicit_budgets(top_b, segments);
    exec.try_map(segments, |seg| {
        let lo = top_b.partition_point(|&t| t < seg.start);
        let base = &top_b[lo..lo + budgets[seg.index]];
        search_segment(adjusted, seg, budgets[seg.index], base, cfg)
    })
}
