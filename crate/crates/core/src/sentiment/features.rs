//! Tokenization, sentence splitting and hashed n-gram features.

use serde::{Deserialize, Serialize};

/// Lowercased runs of alphanumeric characters (apostrophes inside a word
/// are kept, so "don't" stays one token).
pub fn tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut cur = String::new();
    let mut chars = text.chars().peekable();
    while let Some(c) = chars.next() {
        if c.is_alphanumeric() {
            cur.extend(c.to_lowercase());
        } else if (c == '\'' || c == '’') && !cur.is_empty() && chars.peek().is_some_and(|n| n.is_alphanumeric()) {
            cur.push('\'');
        } else if !cur.is_empty() {
            tokens.push(std::mem::take(&mut cur));
        }
    }
    if !cur.is_empty() {
        tokens.push(cur);
    }
    tokens
}

/// Splits on `.`, `!` or `?` followed by whitespace (or the end of the
/// text) and on line breaks. Decimal points such as `3.5` do not split.
pub fn split_sentences(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut start = 0;
    let bytes: Vec<(usize, char)> = text.char_indices().collect();
    for (k, &(i, c)) in bytes.iter().enumerate() {
        let next = bytes.get(k + 1).map(|&(_, n)| n);
        let boundary = match c {
            '\n' | '\r' => true,
            '.' | '!' | '?' => next.is_none_or(char::is_whitespace),
            _ => false,
        };
        if boundary {
            let end = i + c.len_utf8();
            let piece = text[start..end].trim();
            if !piece.is_empty() {
                out.push(piece);
            }
            start = end;
        }
    }
    let tail = text[start..].trim();
    if !tail.is_empty() {
        out.push(tail);
    }
    out
}

/// Sparse, L2-normalized feature vector with sorted unique indices.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SparseVector {
    pub indices: Vec<u32>,
    pub values: Vec<f64>,
}

impl SparseVector {
    pub fn dot(&self, dense: &[f64]) -> f64 {
        self.indices
            .iter()
            .zip(&self.values)
            .map(|(&i, &v)| dense[i as usize] * v)
            .sum()
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Unigram and bigram features hashed into `2^bits` slots. The top hash
/// bit chooses the sign so that collisions cancel in expectation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureHasher {
    pub bits: u32,
}

impl Default for FeatureHasher {
    fn default() -> Self {
        FeatureHasher { bits: 18 }
    }
}

impl FeatureHasher {
    pub fn new(bits: u32) -> Self {
        assert!((1..=30).contains(&bits), "feature bits must lie in 1..=30");
        FeatureHasher { bits }
    }

    pub fn dim(&self) -> usize {
        1 << self.bits
    }

    fn slot(&self, feature: &str) -> (u32, f64) {
        let h = fnv1a(feature.as_bytes());
        let idx = (h & ((1u64 << self.bits) - 1)) as u32;
        let sign = if h >> 63 == 0 { 1.0 } else { -1.0 };
        (idx, sign)
    }

    pub fn transform(&self, tokens: &[String]) -> SparseVector {
        let mut raw: Vec<(u32, f64)> = Vec::with_capacity(2 * tokens.len());
        for t in tokens {
            raw.push(self.slot(t));
        }
        for pair in tokens.windows(2) {
            raw.push(self.slot(&format!("{}\u{1f}{}", pair[0], pair[1])));
        }
        raw.sort_by_key(|&(i, _)| i);
        let mut v = SparseVector::default();
        for (i, x) in raw {
            if v.indices.last() == Some(&i) {
                *v.values.last_mut().expect("parallel vectors") += x;
            } else {
                v.indices.push(i);
                v.values.push(x);
            }
        }
        let norm = v.norm();
        if norm > 0.0 {
            v.values.iter_mut().for_each(|x| *x /= norm);
        }
        v
    }

    pub fn transform_text(&self, text: &str) -> SparseVector {
        self.transform(&tokenize(text))
    }
}
