//! Baseline eviction policies on the shared trace model.
//!
//! All policies keep exactly `min(B, T)` compressible tokens; window tokens
//! are kept by every policy and are not counted against the budget. The
//! trace holds one post-prefill snapshot, so cumulative (H2O-style) and
//! window (SnapKV-style) accumulation coincide here.

use std::fmt;
use std::str::FromStr;

use crate::blocksearch::{compress, rank_cmp, top_k_of, PlanConfig};
use crate::error::{Error, Result};
use crate::scoring::{head_mean, segment_stats, window_scores};
use crate::segment::{segment_tokens, Segment, SegmentConfig};
use crate::trace::AttentionTrace;

/// Sink tokens kept by `streaming` when no count is given.
pub const DEFAULT_SINK_TOKENS: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyResult {
    pub policy: String,
    /// Kept compressible-region indices, ascending.
    pub retained: Vec<usize>,
    /// Block size per planned segment, for block-structured policies.
    pub block_sizes: Option<Vec<usize>>,
}

/// Raw window score `s_t` of every compressible token.
pub fn raw_scores(trace: &AttentionTrace) -> Vec<f64> {
    window_scores(&head_mean(trace))
}

fn result(policy: impl Into<String>, retained: Vec<usize>) -> PolicyResult {
    PolicyResult {
        policy: policy.into(),
        retained,
        block_sizes: None,
    }
}

/// Keep the first `n_init` and the last `B - n_init` tokens.
pub fn evict_sliding_window(trace: &AttentionTrace, budget: usize, n_init: usize) -> Result<PolicyResult> {
    if n_init > budget {
        return Err(Error::Config(format!(
            "sink count {n_init} exceeds budget {budget}"
        )));
    }
    let t_len = trace.compressible_len();
    let retained = if budget >= t_len {
        (0..t_len).collect()
    } else {
        (0..n_init).chain(t_len - (budget - n_init)..t_len).collect()
    };
    Ok(result(format!("streaming:{n_init}"), retained))
}

/// Top-B by attention accumulated over every available query.
pub fn evict_cumulative(trace: &AttentionTrace, budget: usize) -> Result<PolicyResult> {
    let s = raw_scores(trace);
    Ok(result("h2o", top_b(&s, budget)?))
}

/// Top-B by observation-window score.
pub fn evict_window_topk(trace: &AttentionTrace, budget: usize) -> Result<PolicyResult> {
    let s = raw_scores(trace);
    Ok(result("snapkv", top_b(&s, budget)?))
}

fn top_b(scores: &[f64], budget: usize) -> Result<Vec<usize>> {
    if budget == 0 {
        return Err(Error::Config("budget must be at least 1".into()));
    }
    Ok(top_k_of(scores, (0..scores.len()).collect(), budget))
}

/// Greedily keep whole units in descending `rank` order while they fit;
/// the first unit that does not fit contributes its best tokens.
fn greedy_units(scores: &[f64], units: &[(usize, usize)], rank: &[f64], budget: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..units.len()).collect();
    order.sort_unstable_by(|&a, &b| rank_cmp(rank, a, b));
    let mut kept = Vec::with_capacity(budget);
    for u in order {
        let (s, e) = units[u];
        let room = budget - kept.len();
        if e - s <= room {
            kept.extend(s..e);
        } else {
            kept.extend(top_k_of(scores, (s..e).collect(), room));
            break;
        }
    }
    kept.sort_unstable();
    kept
}

/// Fixed-size blocks over the whole region, ranked by block score sum.
pub fn evict_fixed_block(trace: &AttentionTrace, budget: usize, g: usize) -> Result<PolicyResult> {
    if g == 0 {
        return Err(Error::Config("block size must be at least 1".into()));
    }
    if budget == 0 {
        return Err(Error::Config("budget must be at least 1".into()));
    }
    let s = raw_scores(trace);
    let t_len = s.len();
    let blocks: Vec<(usize, usize)> = (0..t_len).step_by(g).map(|b| (b, (b + g).min(t_len))).collect();
    let phi: Vec<f64> = blocks.iter().map(|&(a, b)| s[a..b].iter().sum()).collect();
    let mut r = result(format!("chunkkv:{g}"), greedy_units(&s, &blocks, &phi, budget));
    r.block_sizes = Some(vec![g; blocks.len()]);
    Ok(r)
}

/// Whole sentences ranked by mean score.
pub fn evict_sentence(trace: &AttentionTrace, budget: usize, cfg: &SegmentConfig) -> Result<PolicyResult> {
    if budget == 0 {
        return Err(Error::Config("budget must be at least 1".into()));
    }
    cfg.validate()?;
    let segments = segment_tokens(trace, cfg);
    let hm = head_mean(trace);
    let s = window_scores(&hm);
    let (importance, _) = segment_stats(&hm, &s, &segments, 1e-6);
    let units: Vec<(usize, usize)> = segments.iter().map(|g: &Segment| (g.start, g.end)).collect();
    Ok(result("sentencekv", greedy_units(&s, &units, &importance, budget)))
}

/// SABlock through the common policy interface.
pub fn evict_sablock(trace: &AttentionTrace, budget: usize, config: &PlanConfig) -> Result<PolicyResult> {
    let mut cfg = config.clone();
    cfg.search.budget = budget;
    let plan = compress(trace, &cfg)?;
    let mut r = result("sablock", plan.retained);
    r.block_sizes = Some(plan.segments.iter().filter(|p| p.budget > 0).map(|p| p.block_size).collect());
    Ok(r)
}

/// A named policy as accepted on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Policy {
    Streaming { n_init: usize },
    H2o,
    SnapKv,
    ChunkKv { block: usize },
    SentenceKv,
    SaBlock,
}

impl Policy {
    pub const NAMES: &'static [&'static str] =
        &["streaming[:<sinks>]", "h2o", "snapkv", "chunkkv:<g>", "sentencekv", "sablock"];

    /// Run the policy. `config` supplies segmentation and SABlock settings;
    /// its budget is overridden by `budget`.
    pub fn run(&self, trace: &AttentionTrace, budget: usize, config: &PlanConfig) -> Result<PolicyResult> {
        match *self {
            // sinks never exceed the budget
            Policy::Streaming { n_init } => evict_sliding_window(trace, budget, n_init.min(budget)),
            Policy::H2o => evict_cumulative(trace, budget),
            Policy::SnapKv => evict_window_topk(trace, budget),
            Policy::ChunkKv { block } => evict_fixed_block(trace, budget, block),
            Policy::SentenceKv => evict_sentence(trace, budget, &config.segmentation),
            Policy::SaBlock => evict_sablock(trace, budget, config),
        }
    }

    /// Parse a comma-separated list; empty lists are rejected.
    pub fn parse_list(s: &str) -> Result<Vec<Policy>> {
        let list: Vec<Policy> = s
            .split(',')
            .map(str::trim)
            .filter(|p| !p.is_empty())
            .map(str::parse)
            .collect::<Result<_>>()?;
        if list.is_empty() {
            return Err(Error::Config("policy list is empty".into()));
        }
        Ok(list)
    }
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Policy::Streaming { n_init } if *n_init == DEFAULT_SINK_TOKENS => f.write_str("streaming"),
            Policy::Streaming { n_init } => write!(f, "streaming:{n_init}"),
            Policy::H2o => f.write_str("h2o"),
            Policy::SnapKv => f.write_str("snapkv"),
            Policy::ChunkKv { block } => write!(f, "chunkkv:{block}"),
            Policy::SentenceKv => f.write_str("sentencekv"),
            Policy::SaBlock => f.write_str("sablock"),
        }
    }
}

impl FromStr for Policy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (name, arg) = match s.split_once(':') {
            Some((n, a)) => (n, Some(a)),
            None => (s, None),
        };
        let unknown = || {
            Error::Config(format!(
                "unknown policy '{s}'; valid policies: {}",
                Policy::NAMES.join(", ")
            ))
        };
        let num = |a: &str| a.parse::<usize>().map_err(|_| unknown());
        match (name, arg) {
            ("streaming", None) => Ok(Policy::Streaming { n_init: DEFAULT_SINK_TOKENS }),
            ("streaming", Some(a)) => Ok(Policy::Streaming { n_init: num(a)? }),
            ("h2o", None) => Ok(Policy::H2o),
            ("snapkv", None) => Ok(Policy::SnapKv),
            ("chunkkv", Some(a)) => match num(a)? {
                0 => Err(Error::Config("chunkkv block size must be at least 1".into())),
                block => Ok(Policy::ChunkKv { block }),
            },
            ("sentencekv", None) => Ok(Policy::SentenceKv),
            ("sablock", None) => Ok(Policy::SaBlock),
            _ => Err(unknown()),
        }
    }
}
