//! Punctuation-based segmentation of the compressible region.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trace::AttentionTrace;

pub const DEFAULT_DELIMITERS: &[char] = &['.', '!', '?', ';', ':', ',', '\n'];
pub const DEFAULT_MAX_LEN: usize = 256;

/// Contiguous span `[start, end)` of compressible-region token indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub index: usize,
    pub start: usize,
    pub end: usize,
}

impl Segment {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.start >= self.end
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.start..self.end
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentConfig {
    pub delimiters: Vec<char>,
    pub max_len: usize,
}

impl Default for SegmentConfig {
    fn default() -> Self {
        SegmentConfig {
            delimiters: DEFAULT_DELIMITERS.to_vec(),
            max_len: DEFAULT_MAX_LEN,
        }
    }
}

impl SegmentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_len == 0 {
            return Err(Error::Config("max segment length must be at least 1".into()));
        }
        Ok(())
    }
}

/// Split `[0, T)` after every token whose text ends in a delimiter, then cut
/// any span longer than `max_len` left to right. The delimiter stays with
/// the span it closes.
pub fn segment_tokens(trace: &AttentionTrace, cfg: &SegmentConfig) -> Vec<Segment> {
    let t_len = trace.compressible_len();
    segment_texts(trace.tokens[..t_len].iter().map(|t| t.text.as_str()), cfg)
}

/// [`segment_tokens`] over bare token texts.
pub fn segment_texts<'a, I>(texts: I, cfg: &SegmentConfig) -> Vec<Segment>
where
    I: IntoIterator<Item = &'a str>,
{
    let max_len = cfg.max_len.max(1);
    let mut out = Vec::new();
    let mut start = 0;
    let push = |start: usize, end: usize, out: &mut Vec<Segment>| {
        let mut s = start;
        while s < end {
            let e = (s + max_len).min(end);
            out.push(Segment { index: out.len(), start: s, end: e });
            s = e;
        }
    };
    let mut n = 0;
    for (i, text) in texts.into_iter().enumerate() {
        n = i + 1;
        if text.chars().next_back().is_some_and(|c| cfg.delimiters.contains(&c)) {
            push(start, i + 1, &mut out);
            start = i + 1;
        }
    }
    push(start, n, &mut out);
    out
}

/// Index of the segment containing token `t`.
pub fn segment_of(segments: &[Segment], t: usize) -> Result<usize> {
    let len = segments.last().map_or(0, |s| s.end);
    if t >= len {
        return Err(Error::Index { index: t, len });
    }
    Ok(segments.partition_point(|s| s.end <= t))
}

/// Segment index of every token, as a dense lookup table.
pub fn token_segment_map(segments: &[Segment]) -> Vec<usize> {
    let mut map = Vec::with_capacity(segments.last().map_or(0, |s| s.end));
    for s in segments {
        map.extend(std::iter::repeat_n(s.index, s.len()));
    }
    map
}
