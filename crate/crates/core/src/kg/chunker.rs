//! Semantic chunking: split a document where adjacent paragraphs drift
//! apart in embedding space.
//!
//! A boundary is placed between two paragraphs when their cosine similarity
//! falls strictly below a per-document percentile of all adjacent-pair
//! similarities. The percentile knob makes the chunker robust to embedder
//! scale; a fixed cosine threshold would not be.

use serde::{Deserialize, Serialize};

use super::embedding::{cosine, EmbeddingBackend};
use super::{Chunk, KgError, ParagraphSpan};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChunkConfig {
    /// Percentile (0–100) of adjacent-pair similarities used as the
    /// breakpoint threshold.
    pub breakpoint_percentile: f64,
    /// Paragraphs of overlap context added on each side of a chunk's core
    /// span, recorded in `context_span`.
    pub buffer_paragraphs: usize,
}

impl Default for ChunkConfig {
    fn default() -> Self {
        Self { breakpoint_percentile: 25.0, buffer_paragraphs: 1 }
    }
}

/// Linear-interpolation percentile over a sorted slice.
fn percentile(sorted: &[f64], p: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let rank = (p.clamp(0.0, 100.0) / 100.0) * (sorted.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    if lo == hi {
        sorted[lo]
    } else {
        let frac = rank - lo as f64;
        sorted[lo] * (1.0 - frac) + sorted[hi] * frac
    }
}

/// Split paragraphs into document chunks at semantic discontinuities.
///
/// Core spans are contiguous, non-overlapping and cover the document;
/// context spans widen each core by `buffer_paragraphs` on both sides and
/// supply the chunk text.
pub fn semantic_chunk(
    doc_id: &str,
    paragraphs: &[String],
    embedder: &dyn EmbeddingBackend,
    cfg: &ChunkConfig,
) -> Result<Vec<Chunk>, KgError> {
    if paragraphs.is_empty() {
        return Err(KgError::EmptyDocument(doc_id.to_string()));
    }

    let mut boundaries = Vec::new(); // boundary after paragraph index i
    if paragraphs.len() > 1 {
        let refs: Vec<&str> = paragraphs.iter().map(|p| p.as_str()).collect();
        let embeddings = embedder.embed_batch(&refs).map_err(|e| KgError::Embed(e.to_string()))?;
        let sims: Vec<f64> = embeddings
            .windows(2)
            .map(|pair| cosine(&pair[0], &pair[1]))
            .collect();
        let mut sorted = sims.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).expect("similarities are finite"));
        let threshold = percentile(&sorted, cfg.breakpoint_percentile);
        for (i, sim) in sims.iter().enumerate() {
            if *sim < threshold {
                boundaries.push(i);
            }
        }
    }

    let mut chunks = Vec::new();
    let mut start = 0usize;
    let mut ordinal = 0usize;
    for boundary in boundaries.iter().copied().chain(std::iter::once(paragraphs.len() - 1)) {
        let end = boundary + 1; // half-open core span [start, end)
        let core = ParagraphSpan { start, end };
        let context = ParagraphSpan {
            start: start.saturating_sub(cfg.buffer_paragraphs),
            end: (end + cfg.buffer_paragraphs).min(paragraphs.len()),
        };
        chunks.push(Chunk {
            chunk_id: format!("{doc_id}:c{ordinal:03}"),
            doc_id: doc_id.to_string(),
            ordinal,
            text: paragraphs[context.start..context.end].join("\n\n"),
            paragraph_span: core,
            context_span: context,
        });
        start = end;
        ordinal += 1;
    }

    debug_assert_eq!(chunks.last().map(|c| c.paragraph_span.end), Some(paragraphs.len()));
    Ok(chunks)
}

/// Split document text into paragraphs on blank lines.
pub fn split_paragraphs(text: &str) -> Vec<String> {
    text.split("\n\n")
        .flat_map(|block| block.split("\r\n\r\n"))
        .map(|p| p.trim())
        .filter(|p| !p.is_empty())
        .map(|p| p.to_string())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kg::embedding::HashEmbedder;

    fn paragraphs(texts: &[&str]) -> Vec<String> {
        texts.iter().map(|t| t.to_string()).collect()
    }

    #[test]
    fn single_paragraph_is_one_chunk() {
        let embedder = HashEmbedder::default();
        let chunks =
            semantic_chunk("doc", &paragraphs(&["only one"]), &embedder, &ChunkConfig::default())
                .unwrap();
        assert_eq!(chunks.len(), 1);
        assert_eq!(chunks[0].paragraph_span, ParagraphSpan { start: 0, end: 1 });
        assert_eq!(chunks[0].text, "only one");
    }

    #[test]
    fn identical_paragraphs_form_one_chunk() {
        let embedder = HashEmbedder::default();
        let chunks = semantic_chunk(
            "doc",
            &paragraphs(&["same text here", "same text here", "same text here"]),
            &embedder,
            &ChunkConfig::default(),
        )
        .unwrap();
        assert_eq!(chunks.len(), 1, "no discontinuity, no breakpoints");
    }

    #[test]
    fn empty_document_is_an_error() {
        let embedder = HashEmbedder::default();
        assert!(matches!(
            semantic_chunk("doc", &[], &embedder, &ChunkConfig::default()),
            Err(KgError::EmptyDocument(_))
        ));
    }

    #[test]
    fn core_spans_are_contiguous_and_cover() {
        let embedder = HashEmbedder::default();
        let texts = paragraphs(&[
            "menstrual cycle length and frequency",
            "cycle irregularity beyond three years post menarche",
            "ovarian ultrasound follicle counting",
            "ovarian volume measurement on ultrasound",
            "thyroid stimulating hormone screening",
            "prolactin and pituitary assessment",
        ]);
        let chunks = semantic_chunk("doc", &texts, &embedder, &ChunkConfig::default()).unwrap();
        assert_eq!(chunks[0].paragraph_span.start, 0);
        for pair in chunks.windows(2) {
            assert_eq!(pair[0].paragraph_span.end, pair[1].paragraph_span.start);
        }
        assert_eq!(chunks.last().unwrap().paragraph_span.end, texts.len());
        for c in &chunks {
            assert!(c.context_span.start <= c.paragraph_span.start);
            assert!(c.context_span.end >= c.paragraph_span.end);
        }
    }

    #[test]
    fn chunking_is_deterministic() {
        let embedder = HashEmbedder::default();
        let texts = paragraphs(&[
            "alpha beta gamma",
            "alpha beta delta",
            "completely different subject matter",
            "yet another topic entirely",
        ]);
        let a = semantic_chunk("doc", &texts, &embedder, &ChunkConfig::default()).unwrap();
        let b = semantic_chunk("doc", &texts, &embedder, &ChunkConfig::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn split_paragraphs_trims_and_drops_blanks() {
        let text = "first para\n\n\n\nsecond para\n\n   \n\nthird";
        assert_eq!(split_paragraphs(text), vec!["first para", "second para", "third"]);
    }
}
