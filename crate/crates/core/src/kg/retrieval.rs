//! Two-stage graph retrieval.
//!
//! Stage 1 (top-down indexing) ranks the high-level concept set — the
//! dictionary-grounded middle-layer entities — by query similarity over
//! `name + context`. Stage 2 (contextual retrieval) expands each selected
//! concept to its one-hop graph neighbors and re-scores every candidate by
//! the mean of its concept's stage-1 score and its own context similarity.
//! Results carry chunk citations so every hit grounds back to source text.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::canon;

use super::embedding::{cosine, EmbeddingBackend};
use super::{Citation, Entity, KgError, KnowledgeGraph, Layer, LinkKind, RetrievalResult, RetrievedItem};

/// Retrieval knobs shared by the workflow and the query endpoint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetrievalParams {
    pub k: usize,
    /// Minimum cosine score for EHR linking.
    pub min_score: f64,
}

impl Default for RetrievalParams {
    fn default() -> Self {
        Self { k: 4, min_score: 0.25 }
    }
}

const EXCERPT_CHARS: usize = 240;

fn citations_for(graph: &KnowledgeGraph, entity: &Entity) -> Vec<Citation> {
    entity
        .source_chunks
        .iter()
        .filter_map(|chunk_id| graph.chunk(chunk_id))
        .map(|chunk| Citation {
            doc_id: chunk.doc_id.clone(),
            chunk_id: chunk.chunk_id.clone(),
            text_excerpt: canon::excerpt(&chunk.text, EXCERPT_CHARS),
        })
        .collect()
}

/// Two-stage retrieval over the graph. Deterministic: scores descending,
/// ties broken by ascending entity id.
pub fn u_retrieve(
    query: &str,
    graph: &KnowledgeGraph,
    embedder: &dyn EmbeddingBackend,
    k: usize,
) -> Result<RetrievalResult, KgError> {
    if graph.is_empty() {
        return Err(KgError::EmptyGraph);
    }
    if k == 0 {
        return Ok(RetrievalResult::default());
    }

    let query_embedding = embedder.embed(query).map_err(|e| KgError::Embed(e.to_string()))?;

    // Stage 1: concept set = dictionary-grounded middle entities. A corpus
    // whose extractions all miss the dictionary degrades to every middle
    // entity, keeping retrieval alive.
    let grounded: Vec<&str> = graph
        .cross_layer_links
        .iter()
        .filter(|l| l.link_kind == LinkKind::DictionaryGrounding)
        .map(|l| l.from_entity.as_str())
        .collect();
    let concepts: Vec<&Entity> = if grounded.is_empty() {
        graph.entities.iter().filter(|e| e.layer == Layer::Middle).collect()
    } else {
        graph
            .entities
            .iter()
            .filter(|e| e.layer == Layer::Middle && grounded.contains(&e.entity_id.as_str()))
            .collect()
    };
    if concepts.is_empty() {
        return Ok(RetrievalResult::default());
    }

    let mut concept_scores: Vec<(f64, &Entity)> = Vec::with_capacity(concepts.len());
    for concept in concepts {
        let emb = embedder
            .embed(&format!("{} {}", concept.name, concept.context))
            .map_err(|e| KgError::Embed(e.to_string()))?;
        concept_scores.push((cosine(&query_embedding, &emb), concept));
    }
    concept_scores.sort_by(|a, b| {
        b.0.partial_cmp(&a.0)
            .expect("finite scores")
            .then_with(|| a.1.entity_id.cmp(&b.1.entity_id))
    });
    concept_scores.truncate(k);

    // Stage 2: expand one hop, re-score by combined (concept score, context
    // similarity); keep the best path per candidate.
    let mut best: BTreeMap<String, f64> = BTreeMap::new();
    let mut context_sim_cache: BTreeMap<String, f64> = BTreeMap::new();
    let mut context_sim = |entity: &Entity| -> Result<f64, KgError> {
        if let Some(hit) = context_sim_cache.get(&entity.entity_id) {
            return Ok(*hit);
        }
        let emb = embedder.embed(&entity.context).map_err(|e| KgError::Embed(e.to_string()))?;
        let sim = cosine(&query_embedding, &emb);
        context_sim_cache.insert(entity.entity_id.clone(), sim);
        Ok(sim)
    };

    for &(concept_score, concept) in &concept_scores {
        let own = 0.5 * concept_score + 0.5 * context_sim(concept)?;
        best.entry(concept.entity_id.clone()).and_modify(|s| *s = s.max(own)).or_insert(own);
        for neighbor_id in graph.neighbors(&concept.entity_id) {
            let Some(neighbor) = graph.entity(neighbor_id) else { continue };
            if neighbor.layer != Layer::Middle {
                continue;
            }
            let combined = 0.5 * concept_score + 0.5 * context_sim(neighbor)?;
            best.entry(neighbor.entity_id.clone())
                .and_modify(|s| *s = s.max(combined))
                .or_insert(combined);
        }
    }

    let mut ranked: Vec<(f64, String)> = best.into_iter().map(|(id, s)| (s, id)).collect();
    ranked.sort_by(|a, b| {
        b.0.partial_cmp(&a.0).expect("finite scores").then_with(|| a.1.cmp(b.1))
    });
    ranked.truncate(k);

    let items = ranked
        .into_iter()
        .filter_map(|(score, id)| graph.entity(&id).map(|e| (score, e)))
        .map(|(score, entity)| RetrievedItem {
            entity_id: entity.entity_id.clone(),
            context: entity.context.clone(),
            score,
            citations: citations_for(graph, entity),
        })
        .collect();
    Ok(RetrievalResult { items })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::RuleOracleBackend;
    use crate::kg::embedding::HashEmbedder;
    use crate::kg::{build_graph, Dictionary, DictionaryEntry, KgBuildConfig, Ontology};
    use crate::rules::ThresholdConfig;

    fn dictionary() -> Dictionary {
        Dictionary {
            entries: vec![
                DictionaryEntry {
                    canonical_name: "Irregular Menstrual Cycles".into(),
                    aliases: vec!["irregular cycles".into(), "oligomenorrhea".into()],
                    entry_type: "Criterion".into(),
                    definition: "Cycle length outside expected bounds.".into(),
                },
                DictionaryEntry {
                    canonical_name: "Ovarian Volume".into(),
                    aliases: vec![],
                    entry_type: "ImagingFeature".into(),
                    definition: "Ultrasound-measured ovarian volume.".into(),
                },
                DictionaryEntry {
                    canonical_name: "Hirsutism".into(),
                    aliases: vec![],
                    entry_type: "Symptom".into(),
                    definition: "Excess terminal hair growth.".into(),
                },
            ],
        }
    }

    fn fixture_graph() -> KnowledgeGraph {
        let corpus = vec![(
            "guide.md".to_string(),
            "Irregular cycles are defined as fewer than 8 cycles per year.\n\n\
             Ovarian volume of 10 mL or more supports the morphology criterion.\n\n\
             Hirsutism is scored on clinical examination."
                .to_string(),
        )];
        let oracle = RuleOracleBackend::new(ThresholdConfig::default())
            .with_extraction_lexicon(&dictionary());
        build_graph(
            &corpus,
            &dictionary(),
            &Ontology::standard(),
            &HashEmbedder::default(),
            &oracle,
            &KgBuildConfig::default(),
        )
        .unwrap()
        .0
    }

    #[test]
    fn empty_graph_is_an_error() {
        let g = KnowledgeGraph::empty();
        assert!(matches!(
            u_retrieve("anything", &g, &HashEmbedder::default(), 3),
            Err(KgError::EmptyGraph)
        ));
    }

    #[test]
    fn k_zero_is_empty() {
        let g = fixture_graph();
        let r = u_retrieve("irregular cycles", &g, &HashEmbedder::default(), 0).unwrap();
        assert!(r.items.is_empty());
    }

    #[test]
    fn scores_non_increasing_and_cited() {
        let g = fixture_graph();
        let r = u_retrieve("irregular menstrual cycle definition", &g, &HashEmbedder::default(), 5)
            .unwrap();
        assert!(!r.items.is_empty());
        for pair in r.items.windows(2) {
            assert!(pair[0].score >= pair[1].score);
        }
        for item in &r.items {
            assert!(!item.citations.is_empty(), "{} lacks citations", item.entity_id);
        }
    }

    #[test]
    fn query_matching_entity_ranks_it_first() {
        let g = fixture_graph();
        let cycles = g
            .entities
            .iter()
            .find(|e| e.layer == Layer::Middle && e.name.to_lowercase().contains("irregular"))
            .unwrap();
        let query = format!("{} {}", cycles.name, cycles.context);
        let r = u_retrieve(&query, &g, &HashEmbedder::default(), 3).unwrap();
        assert_eq!(r.items[0].entity_id, cycles.entity_id);
    }

    #[test]
    fn insertion_order_does_not_change_results() {
        let g = fixture_graph();
        let mut permuted = g.clone();
        permuted.entities.reverse();
        permuted.relations.reverse();
        permuted.cross_layer_links.reverse();
        permuted.canonicalize();
        let embedder = HashEmbedder::default();
        let a = u_retrieve("ovarian volume threshold", &g, &embedder, 4).unwrap();
        let b = u_retrieve("ovarian volume threshold", &permuted, &embedder, 4).unwrap();
        assert_eq!(a, b);
    }
}
