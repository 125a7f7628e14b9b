//! Embedding backends.
//!
//! Two implementations stand behind one contract: a deterministic test
//! embedder (seeded feature hashing of character n-grams) that every golden
//! fixture uses, and a remote client for real embedding models. Cosine
//! similarity over either drives chunking, EHR linking and retrieval.

use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
#[error("embedding failed: {0}")]
pub struct EmbedError(pub String);

/// Deterministic-for-a-fixed-id embedding contract.
pub trait EmbeddingBackend: Send + Sync {
    /// Stable identity recorded in build manifests. Two backends with the
    /// same id must embed identically.
    fn id(&self) -> &str;

    fn embed(&self, text: &str) -> Result<Vec<f64>, EmbedError>;

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>, EmbedError> {
        texts.iter().map(|t| self.embed(t)).collect()
    }
}

/// Cosine similarity; zero vectors compare as 0.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let mut dot = 0.0;
    let mut na = 0.0;
    let mut nb = 0.0;
    for (x, y) in a.iter().zip(b.iter()) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na.sqrt() * nb.sqrt())
    }
}

/// Deterministic test embedder: signed feature hashing of character
/// trigrams with a seeded FNV-1a hash, L2-normalized.
///
/// The hash is implemented here rather than borrowed from `std` so the
/// embedding is stable across platforms and toolchain versions.
#[derive(Debug, Clone)]
pub struct HashEmbedder {
    dim: usize,
    ngram: usize,
    seed: u64,
    id: String,
}

impl Default for HashEmbedder {
    fn default() -> Self {
        Self::new(256, 3, 0x5CA1_AB1E)
    }
}

impl HashEmbedder {
    pub fn new(dim: usize, ngram: usize, seed: u64) -> Self {
        assert!(dim > 0 && ngram > 0);
        let id = format!("hash-ngram{ngram}-d{dim}-s{seed:08x}");
        Self { dim, ngram, seed, id }
    }
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a(seed: u64, bytes: &[u8]) -> u64 {
    let mut hash = FNV_OFFSET ^ seed;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(FNV_PRIME);
    }
    hash
}

impl EmbeddingBackend for HashEmbedder {
    fn id(&self) -> &str {
        &self.id
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>, EmbedError> {
        let mut v = vec![0.0; self.dim];
        let norm = crate::canon::normalize_term(text);
        let chars: Vec<char> = norm.chars().collect();
        if chars.is_empty() {
            return Ok(v);
        }
        // Boundary padding so short tokens still produce n-grams.
        let mut padded = Vec::with_capacity(chars.len() + 2);
        padded.push('\u{2}');
        padded.extend_from_slice(&chars);
        padded.push('\u{3}');
        for window in padded.windows(self.ngram.min(padded.len())) {
            let gram: String = window.iter().collect();
            let h = fnv1a(self.seed, gram.as_bytes());
            let bucket = (h % self.dim as u64) as usize;
            let sign = if h & (1 << 63) == 0 { 1.0 } else { -1.0 };
            v[bucket] += sign;
        }
        let norm2: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm2 > 0.0 {
            for x in &mut v {
                *x /= norm2;
            }
        }
        Ok(v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_text_embeds_identically() {
        let e = HashEmbedder::default();
        let a = e.embed("Irregular menstrual cycles").unwrap();
        let b = e.embed("Irregular menstrual cycles").unwrap();
        assert_eq!(a, b);
        assert!((cosine(&a, &b) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn normalization_makes_case_irrelevant() {
        let e = HashEmbedder::default();
        let a = e.embed("POLYCYSTIC OVARIES").unwrap();
        let b = e.embed("polycystic  ovaries.").unwrap();
        assert!((cosine(&a, &b) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn different_text_is_not_identical() {
        let e = HashEmbedder::default();
        let a = e.embed("follicle count per ovary").unwrap();
        let b = e.embed("thyroid stimulating hormone").unwrap();
        assert!(cosine(&a, &b) < 0.9);
    }

    #[test]
    fn empty_text_is_zero_vector() {
        let e = HashEmbedder::default();
        let v = e.embed("").unwrap();
        assert!(v.iter().all(|x| *x == 0.0));
        assert_eq!(cosine(&v, &v), 0.0);
    }

    #[test]
    fn related_terms_score_higher_than_unrelated() {
        let e = HashEmbedder::default();
        let cycles = e.embed("irregular menstrual cycles").unwrap();
        let q = e.embed("irregular menstrual cycle definition").unwrap();
        let unrelated = e.embed("ovarian volume threshold").unwrap();
        assert!(cosine(&q, &cycles) > cosine(&q, &unrelated));
    }
}
