//! JSON encodings of traces and compression plans.

use serde::{Deserialize, Serialize};

use super::{validate_trace, AttentionTrace, NeedleSpan, Token};
use crate::blocksearch::{CompressionPlan, PlanConfig, SegmentPlan};
use crate::error::{Error, Result};

pub const TRACE_VERSION: u32 = 1;
pub const PLAN_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct TraceFile {
    version: u32,
    num_heads: usize,
    window: usize,
    tokens: Vec<Token>,
    attention: Vec<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    needle: Option<NeedleSpan>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    manifest: Option<serde_json::Value>,
}

/// Decode and validate a trace file.
pub fn parse_trace(bytes: &[u8]) -> Result<AttentionTrace> {
    let file: TraceFile = serde_json::from_slice(bytes).map_err(|e| Error::Parse(e.to_string()))?;
    if file.version != TRACE_VERSION {
        return Err(Error::validation(
            "version",
            format!("unsupported version {}", file.version),
        ));
    }
    let mut trace = AttentionTrace {
        num_heads: file.num_heads,
        window: file.window,
        tokens: file.tokens,
        attention: Vec::new(),
        needle: file.needle,
        manifest: file.manifest,
    };
    // header checks first so shape errors below have a meaningful T
    if trace.num_heads == 0 || trace.window == 0 || trace.tokens.len() <= trace.window {
        validate_trace(&trace)?;
    }
    let t = trace.compressible_len();
    if file.attention.len() != trace.num_heads {
        return Err(Error::validation(
            "attention",
            format!("expected {} heads, found {}", trace.num_heads, file.attention.len()),
        ));
    }
    let mut flat = Vec::with_capacity(trace.num_heads * trace.window * t);
    for (h, head) in file.attention.into_iter().enumerate() {
        if head.len() != trace.window {
            return Err(Error::validation(
                format!("attention[{h}]"),
                format!("expected {} query rows, found {}", trace.window, head.len()),
            ));
        }
        for (q, row) in head.into_iter().enumerate() {
            if row.len() != t {
                return Err(Error::validation(
                    format!("attention[{h}][{q}]"),
                    format!("expected {t} keys, found {}", row.len()),
                ));
            }
            flat.extend(row);
        }
    }
    trace.attention = flat;
    validate_trace(&trace)?;
    Ok(trace)
}

/// Encode a trace in the on-disk JSON format.
pub fn serialize_trace(trace: &AttentionTrace) -> Result<Vec<u8>> {
    validate_trace(trace)?;
    let attention = (0..trace.num_heads)
        .map(|h| (0..trace.window).map(|q| trace.row(h, q).to_vec()).collect())
        .collect();
    let file = TraceFile {
        version: TRACE_VERSION,
        num_heads: trace.num_heads,
        window: trace.window,
        tokens: trace.tokens.clone(),
        attention,
        needle: trace.needle,
        manifest: trace.manifest.clone(),
    };
    serde_json::to_vec(&file).map_err(|e| Error::Parse(e.to_string()))
}

#[derive(Serialize, Deserialize)]
struct PlanFile {
    version: u32,
    budget: usize,
    retained: Vec<usize>,
    window_tokens: Vec<usize>,
    segments: Vec<SegmentRecord>,
    config: PlanConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    manifest: Option<serde_json::Value>,
}

#[derive(Serialize, Deserialize)]
struct SegmentRecord {
    start: usize,
    end: usize,
    budget: usize,
    block_size: usize,
    fidelity: f64,
}

/// Encode a plan as JSON, checking it against the trace it was built from.
pub fn write_plan(plan: &CompressionPlan, trace: &AttentionTrace) -> Result<Vec<u8>> {
    let t = trace.compressible_len();
    if plan.budget == 0 {
        return Err(Error::validation("budget", "budget must be at least 1"));
    }
    if plan.retained.is_empty() {
        return Err(Error::validation("retained", "plan retains no tokens"));
    }
    let mut retained = plan.retained.clone();
    retained.sort_unstable();
    for (i, &idx) in retained.iter().enumerate() {
        if idx >= t {
            return Err(Error::validation(
                format!("retained[{i}]"),
                format!("token {idx} outside compressible region 0..{t}"),
            ));
        }
    }
    if retained.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::validation("retained", "duplicate token index"));
    }
    let window = trace.window_indices();
    for (i, &idx) in plan.window_tokens.iter().enumerate() {
        if !window.contains(&idx) {
            return Err(Error::validation(
                format!("window_tokens[{i}]"),
                format!("token {idx} outside window {window:?}"),
            ));
        }
    }
    let mut segments = Vec::with_capacity(plan.segments.len());
    for (k, s) in plan.segments.iter().enumerate() {
        if s.start >= s.end || s.end > t {
            return Err(Error::validation(
                format!("segments[{k}]"),
                format!("span [{}, {}) invalid for T={t}", s.start, s.end),
            ));
        }
        segments.push(SegmentRecord {
            start: s.start,
            end: s.end,
            budget: s.budget,
            block_size: s.block_size,
            fidelity: s.fidelity,
        });
    }
    let file = PlanFile {
        version: PLAN_VERSION,
        budget: plan.budget,
        retained,
        window_tokens: plan.window_tokens.clone(),
        segments,
        config: plan.config.clone(),
        manifest: plan.manifest.clone(),
    };
    serde_json::to_vec_pretty(&file).map_err(|e| Error::Parse(e.to_string()))
}

/// Decode a plan file. Per-segment retained sets are rebuilt from the global
/// retained list.
pub fn read_plan(bytes: &[u8]) -> Result<CompressionPlan> {
    let file: PlanFile = serde_json::from_slice(bytes).map_err(|e| Error::Parse(e.to_string()))?;
    if file.version != PLAN_VERSION {
        return Err(Error::validation(
            "version",
            format!("unsupported version {}", file.version),
        ));
    }
    let retained = file.retained;
    let segments = file
        .segments
        .into_iter()
        .enumerate()
        .map(|(k, r)| {
            let lo = retained.partition_point(|&i| i < r.start);
            let hi = retained.partition_point(|&i| i < r.end);
            SegmentPlan {
                segment: k,
                start: r.start,
                end: r.end,
                budget: r.budget,
                block_size: r.block_size,
                retained: retained[lo..hi].to_vec(),
                fidelity: r.fidelity,
            }
        })
        .collect();
    Ok(CompressionPlan {
        budget: file.budget,
        segments,
        retained,
        window_tokens: file.window_tokens,
        config: file.config,
        manifest: file.manifest,
    })
}
