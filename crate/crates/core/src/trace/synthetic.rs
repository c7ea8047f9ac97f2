//! Deterministic synthetic traces for desk-scale experiments.
//!
//! Token texts are filler words with `"."` delimiters at geometric gaps.
//! Attention mass follows a clipped log-normal salience that is partly
//! shared within a sentence, so important tokens cluster the way heavy
//! hitters do in real prompts. An optional needle is planted as its own
//! sentence and boosted until every needle column carries at least
//! `needle_boost` times the median non-needle column mass.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{validate_trace, AttentionTrace, NeedleSpan, Token};
use crate::error::{Error, Result};

/// Share of the log-salience variance that is common to a whole sentence.
const SENTENCE_SHARE: f64 = 0.6;
const SALIENCE_CLIP: f64 = 3.5;
/// Log-normal spread of per-(head, query) attention around token salience.
const QUERY_NOISE: f64 = 0.5;
const MAX_BOOST_ROUNDS: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSpec {
    /// Length `T` of the compressible region.
    pub total_tokens: usize,
    pub num_heads: usize,
    pub window: usize,
    pub needle: Option<NeedleSpan>,
    pub needle_boost: f64,
    /// Mean number of tokens between delimiters.
    pub punctuation_period: f64,
    /// Log-salience standard deviation; 0 gives near-uniform attention.
    pub skew: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            total_tokens: 1000,
            num_heads: 4,
            window: 8,
            needle: None,
            needle_boost: 50.0,
            punctuation_period: 8.0,
            skew: 1.0,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.total_tokens == 0 {
            return Err(Error::Spec("total_tokens must be at least 1".into()));
        }
        if self.num_heads == 0 || self.window == 0 {
            return Err(Error::Spec("num_heads and window must be at least 1".into()));
        }
        if !(self.punctuation_period >= 1.0 && self.punctuation_period.is_finite()) {
            return Err(Error::Spec(format!(
                "punctuation_period must be >= 1, got {}",
                self.punctuation_period
            )));
        }
        if !(self.skew >= 0.0 && self.skew.is_finite()) {
            return Err(Error::Spec(format!("skew must be >= 0, got {}", self.skew)));
        }
        if let Some(n) = self.needle {
            if !(self.needle_boost > 0.0 && self.needle_boost.is_finite()) {
                return Err(Error::Spec(format!(
                    "needle_boost must be positive, got {}",
                    self.needle_boost
                )));
            }
            if n.len == 0 || n.start.checked_add(n.len).is_none_or(|e| e > self.total_tokens) {
                return Err(Error::Spec(format!(
                    "needle [{}, +{}) not inside [0, {})",
                    n.start, n.len, self.total_tokens
                )));
            }
        }
        Ok(())
    }
}

/// Generate a trace; a pure function of `spec`.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<AttentionTrace> {
    spec.validate()?;
    let t_len = spec.total_tokens;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let p_delim = 1.0 / spec.punctuation_period;

    let mut tokens = Vec::with_capacity(t_len + spec.window);
    let mut salience = Vec::with_capacity(t_len);
    let mut sentence_z: f64 = rng.sample(StandardNormal);
    for _ in 0..t_len {
        let delim = rng.random::<f64>() < p_delim;
        let word: u32 = rng.random_range(0..50_000);
        let token_z: f64 = rng.sample(StandardNormal);
        let z = SENTENCE_SHARE * sentence_z + (1.0 - SENTENCE_SHARE.powi(2)).sqrt() * token_z;
        salience.push((spec.skew * z.clamp(-SALIENCE_CLIP, SALIENCE_CLIP)).exp());
        tokens.push(Token::new(if delim { ".".to_string() } else { format!(" w{word}") }));
        if delim {
            sentence_z = rng.sample(StandardNormal);
        }
    }
    if let Some(n) = spec.needle {
        if n.start > 0 {
            tokens[n.start - 1] = Token::new(".");
        }
        for i in 0..n.len {
            let last = i + 1 == n.len;
            tokens[n.start + i] = Token::new(format!(" needle{i}{}", if last { "." } else { "" }));
        }
    }
    for q in 0..spec.window {
        let last = q + 1 == spec.window;
        tokens.push(Token::new(format!(" q{q}{}", if last { "?" } else { "" })));
    }

    let rows = spec.num_heads * spec.window;
    let mut attention = Vec::with_capacity(rows * t_len);
    for _ in 0..rows {
        for &s in &salience {
            let noise: f64 = rng.sample(StandardNormal);
            attention.push(s * (QUERY_NOISE * noise).exp());
        }
    }
    normalize_rows(&mut attention, t_len);

    let mut trace = AttentionTrace {
        num_heads: spec.num_heads,
        window: spec.window,
        tokens,
        attention,
        needle: spec.needle,
        manifest: None,
    };
    if let Some(n) = spec.needle {
        boost_needle(&mut trace, n, spec.needle_boost)?;
    }
    validate_trace(&trace)?;
    Ok(trace)
}

fn normalize_rows(attention: &mut [f64], t_len: usize) {
    for row in attention.chunks_mut(t_len) {
        let sum: f64 = row.iter().sum();
        if sum > 0.0 {
            row.iter_mut().for_each(|a| *a /= sum);
        }
    }
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_unstable_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

fn boost_needle(trace: &mut AttentionTrace, needle: NeedleSpan, boost: f64) -> Result<()> {
    let t_len = trace.compressible_len();
    if needle.len == t_len {
        return Ok(());
    }
    for _ in 0..MAX_BOOST_ROUNDS {
        let mass = trace.column_mass();
        let mut hay: Vec<f64> = mass
            .iter()
            .enumerate()
            .filter(|(t, _)| !needle.contains(*t))
            .map(|(_, &m)| m)
            .collect();
        let target = boost * median(&mut hay);
        let factors: Vec<f64> = (needle.start..needle.end())
            .map(|t| if mass[t] >= target { 1.0 } else { 1.02 * target / mass[t].max(f64::MIN_POSITIVE) })
            .collect();
        if factors.iter().all(|&f| f == 1.0) {
            return Ok(());
        }
        for row in trace.attention.chunks_mut(t_len) {
            for (a, f) in row[needle.start..needle.end()].iter_mut().zip(&factors) {
                *a = (*a).max(f64::MIN_POSITIVE) * f;
            }
        }
        normalize_rows(&mut trace.attention, t_len);
    }
    Err(Error::Spec(format!("needle_boost {boost} not attainable")))
}
