//! Batch drivers behind `compare` and `sweep`.
//!
//! Work fans out over traces (and policies) under an [`Exec`]; results are
//! reduced in input order so both execution modes give identical reports.

use serde::{Deserialize, Serialize};

use crate::blocksearch::PlanConfig;
use crate::error::Result;
use crate::exec::Exec;
use crate::metrics::{needle_recall, redundancy_rate, retention_fidelity, spearman, BlockSizeHistogram};
use crate::policies::{raw_scores, Policy, PolicyResult};
use crate::scoring::score;
use crate::segment::segment_tokens;
use crate::trace::AttentionTrace;

/// One policy's outcome on one trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyRow {
    pub policy: String,
    pub budget: usize,
    pub retained_count: usize,
    /// Kept adjusted-score mass over the top-B adjusted mass.
    pub fidelity: f64,
    /// Raw-score mass lost versus token-level top-B.
    pub redundancy: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub needle_recall: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_block_size: Option<f64>,
    pub retained: Vec<usize>,
}

/// Run every policy on one trace at one budget.
pub fn compare(
    trace: &AttentionTrace,
    policies: &[Policy],
    budget: usize,
    config: &PlanConfig,
    exec: Exec,
) -> Result<Vec<PolicyRow>> {
    let segments = segment_tokens(trace, &config.segmentation);
    let adjusted = score(trace, &segments, &config.scoring).adjusted;
    let raw = raw_scores(trace);
    exec.try_map(policies, |p| {
        let r = p.run(trace, budget, config)?;
        row(trace, &r, p, budget, &raw, &adjusted)
    })
}

fn row(
    trace: &AttentionTrace,
    r: &PolicyResult,
    policy: &Policy,
    budget: usize,
    raw: &[f64],
    adjusted: &[f64],
) -> Result<PolicyRow> {
    let mean_block_size = match policy {
        Policy::SaBlock => r.block_sizes.as_ref().map(|gs| {
            let mut h = BlockSizeHistogram::default();
            gs.iter().for_each(|&g| h.add(g));
            h.mean
        }),
        Policy::ChunkKv { block } => Some(*block as f64),
        _ => None,
    };
    Ok(PolicyRow {
        policy: policy.to_string(),
        budget,
        retained_count: r.retained.len(),
        fidelity: retention_fidelity(adjusted, &r.retained, budget),
        redundancy: redundancy_rate(raw, &r.retained, budget),
        needle_recall: trace.needle.map(|n| needle_recall(&r.retained, n)).transpose()?,
        mean_block_size,
        retained: r.retained.clone(),
    })
}

/// Per (budget, policy) means over a corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub budget: usize,
    pub policy: String,
    pub traces: usize,
    pub mean_fidelity: f64,
    pub mean_redundancy: f64,
    pub mean_needle_recall: Option<f64>,
    pub mean_block_size: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudgetHistogram {
    pub budget: usize,
    pub histogram: BlockSizeHistogram,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
    /// SABlock block-size distribution per budget, pooled over traces.
    pub histograms: Vec<BudgetHistogram>,
    /// Rank correlation between budget and mean SABlock block size.
    pub budget_blocksize_spearman: Option<f64>,
}

/// Evaluate `policies` on every trace at every budget. SABlock block-size
/// histograms are always collected, whether or not `sablock` is listed.
pub fn sweep(
    traces: &[AttentionTrace],
    budgets: &[usize],
    policies: &[Policy],
    config: &PlanConfig,
    exec: Exec,
) -> Result<SweepReport> {
    let per_trace: Vec<Vec<(Vec<PolicyRow>, BlockSizeHistogram)>> = exec.try_map(traces, |trace| {
        budgets
            .iter()
            .map(|&b| {
                let rows = compare(trace, policies, b, config, Exec::Sequential)?;
                let sab = Policy::SaBlock.run(trace, b, config)?;
                let mut h = BlockSizeHistogram::default();
                sab.block_sizes.unwrap_or_default().into_iter().for_each(|g| h.add(g));
                Ok((rows, h))
            })
            .collect::<Result<Vec<_>>>()
    })?;

    let mut rows = Vec::with_capacity(budgets.len() * policies.len());
    let mut histograms = Vec::with_capacity(budgets.len());
    for (bi, &budget) in budgets.iter().enumerate() {
        let mut hist = BlockSizeHistogram::default();
        for t in &per_trace {
            hist.merge(&t[bi].1);
        }
        histograms.push(BudgetHistogram { budget, histogram: hist });
        for (pi, p) in policies.iter().enumerate() {
            let cells: Vec<&PolicyRow> = per_trace.iter().map(|t| &t[bi].0[pi]).collect();
            let n = cells.len() as f64;
            let mean = |f: &dyn Fn(&PolicyRow) -> f64| cells.iter().map(|r| f(r)).sum::<f64>() / n;
            let recalls: Vec<f64> = cells.iter().filter_map(|r| r.needle_recall).collect();
            let blocks: Vec<f64> = cells.iter().filter_map(|r| r.mean_block_size).collect();
            rows.push(SweepRow {
                budget,
                policy: p.to_string(),
                traces: cells.len(),
                mean_fidelity: mean(&|r| r.fidelity),
                mean_redundancy: mean(&|r| r.redundancy),
                mean_needle_recall: (!recalls.is_empty())
                    .then(|| recalls.iter().sum::<f64>() / recalls.len() as f64),
                mean_block_size: (!blocks.is_empty()).then(|| blocks.iter().sum::<f64>() / blocks.len() as f64),
            });
        }
    }
    let xs: Vec<f64> = budgets.iter().map(|&b| b as f64).collect();
    let ys: Vec<f64> = histograms.iter().map(|h| h.histogram.mean).collect();
    Ok(SweepReport {
        rows,
        histograms,
        budget_blocksize_spearman: spearman(&xs, &ys),
    })
}
