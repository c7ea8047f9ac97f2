//! Attention-trace data model.
//!
//! A trace is one layer's snapshot: `num_heads` heads, a window of the
//! `window` most recent prompt tokens acting as queries, and the attention
//! each of those queries pays to every token of the compressible region.
//! The last `window` entries of `tokens` are the window itself; everything
//! before them is eligible for eviction.

mod io;
mod synthetic;

pub use io::{parse_trace, read_plan, serialize_trace, write_plan, PLAN_VERSION, TRACE_VERSION};
pub use synthetic::{generate_synthetic, SyntheticSpec};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Token {
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub offset: Option<usize>,
}

impl Token {
    pub fn new(text: impl Into<String>) -> Self {
        Token {
            text: text.into(),
            offset: None,
        }
    }
}

/// Half-open span `[start, start + len)` of planted "needle" tokens.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NeedleSpan {
    pub start: usize,
    pub len: usize,
}

impl NeedleSpan {
    pub fn end(&self) -> usize {
        self.start + self.len
    }

    pub fn contains(&self, t: usize) -> bool {
        t >= self.start && t < self.end()
    }
}

/// Window attention snapshot. `attention` is dense and row-major over
/// `[head][query][key]`, keys spanning the compressible region only.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionTrace {
    pub num_heads: usize,
    pub window: usize,
    pub tokens: Vec<Token>,
    pub attention: Vec<f64>,
    /// Planted needle, when the trace came from the synthetic generator.
    pub needle: Option<NeedleSpan>,
    /// Free-form provenance record of the run that produced this trace.
    pub manifest: Option<serde_json::Value>,
}

impl AttentionTrace {
    /// Build and validate a trace.
    pub fn new(
        num_heads: usize,
        window: usize,
        tokens: Vec<Token>,
        attention: Vec<f64>,
    ) -> Result<Self> {
        let trace = AttentionTrace {
            num_heads,
            window,
            tokens,
            attention,
            needle: None,
            manifest: None,
        };
        validate_trace(&trace)?;
        Ok(trace)
    }

    /// Length `T` of the compressible region.
    pub fn compressible_len(&self) -> usize {
        self.tokens.len().saturating_sub(self.window)
    }

    #[inline]
    pub fn at(&self, head: usize, query: usize, key: usize) -> f64 {
        let t = self.compressible_len();
        self.attention[(head * self.window + query) * t + key]
    }

    /// Attention row of one (head, query) pair over all compressible keys.
    pub fn row(&self, head: usize, query: usize) -> &[f64] {
        let t = self.compressible_len();
        let off = (head * self.window + query) * t;
        &self.attention[off..off + t]
    }

    /// Token indices of the observation window, `T..T+window`.
    pub fn window_indices(&self) -> std::ops::Range<usize> {
        let t = self.compressible_len();
        t..t + self.window
    }

    /// Column mass `Σ_{h,q} A[h,q,t]` for every compressible token.
    pub fn column_mass(&self) -> Vec<f64> {
        let mut mass = vec![0.0; self.compressible_len()];
        for h in 0..self.num_heads {
            for q in 0..self.window {
                for (m, a) in mass.iter_mut().zip(self.row(h, q)) {
                    *m += a;
                }
            }
        }
        mass
    }
}

/// Check every [`AttentionTrace`] invariant, reporting the first violation.
pub fn validate_trace(trace: &AttentionTrace) -> Result<()> {
    if trace.num_heads == 0 {
        return Err(Error::validation("num_heads", "must be at least 1"));
    }
    if trace.window == 0 {
        return Err(Error::validation("window", "must be at least 1"));
    }
    if trace.tokens.len() <= trace.window {
        return Err(Error::validation(
            "tokens",
            format!(
                "{} tokens leave no compressible region for window {}",
                trace.tokens.len(),
                trace.window
            ),
        ));
    }
    let t = trace.compressible_len();
    let expected = trace
        .num_heads
        .checked_mul(trace.window)
        .and_then(|x| x.checked_mul(t))
        .ok_or_else(|| Error::validation("attention", "dimensions overflow"))?;
    if trace.attention.len() != expected {
        return Err(Error::validation(
            "attention",
            format!(
                "expected {expected} entries ({}x{}x{t}), found {}",
                trace.num_heads,
                trace.window,
                trace.attention.len()
            ),
        ));
    }
    for (i, &a) in trace.attention.iter().enumerate() {
        if !a.is_finite() || a < 0.0 {
            let (h, rest) = (i / (trace.window * t), i % (trace.window * t));
            let (q, k) = (rest / t, rest % t);
            let what = if a.is_finite() { "negative" } else { "non-finite" };
            return Err(Error::validation(
                format!("attention[{h}][{q}][{k}]"),
                format!("{what} value {a}"),
            ));
        }
    }
    if let Some(n) = trace.needle {
        if n.len == 0 || n.end() > t {
            return Err(Error::validation(
                "needle",
                format!("span [{}, {}) not inside [0, {t})", n.start, n.end()),
            ));
        }
    }
    Ok(())
}
