//! Graph construction: per-chunk entity/relation extraction, cross-layer
//! linking, and subgraph merging.
//!
//! Extraction is chunk-local, so the per-chunk phase parallelizes freely;
//! the merge is a single-owner sequential step that applies canonical
//! ordering, making identical builds byte-identical.

use std::collections::BTreeMap;

use serde::Deserialize;
use serde_json::json;

use crate::agent::{assemble_extraction_prompt, AgentBackend, WorkflowStep};
use crate::canon;

use super::chunker::{semantic_chunk, split_paragraphs, ChunkConfig};
use super::embedding::{cosine, EmbeddingBackend};
use super::{
    BuildManifest, Chunk, CrossLayerLink, Dictionary, Entity, KgError, KnowledgeGraph, Layer,
    LinkKind, Ontology, Relation,
};

#[derive(Debug, Clone, Default)]
pub struct KgBuildConfig {
    pub chunk: ChunkConfig,
}

/// Per-chunk extraction output, merged later.
#[derive(Debug, Clone)]
pub struct ChunkSubgraph {
    pub chunk: Chunk,
    pub entities: Vec<Entity>,
    pub relations: Vec<Relation>,
}

/// Build statistics and everything that was dropped or left unlinked.
#[derive(Debug, Clone, Default, serde::Serialize)]
pub struct BuildReport {
    pub documents: usize,
    pub chunks: usize,
    pub middle_entities: usize,
    pub relations: usize,
    pub dictionary_links: usize,
    pub unmatched_entities: Vec<String>,
    pub dropped_entities: Vec<String>,
    pub dropped_relations: Vec<String>,
}

/// Materialize the dictionary as bottom-layer entities.
pub fn dictionary_entities(dictionary: &Dictionary) -> Vec<Entity> {
    let mut out: Vec<Entity> = dictionary
        .entries
        .iter()
        .map(|entry| Entity {
            entity_id: Entity::make_id(Layer::Bottom, &entry.canonical_name, &entry.entry_type),
            name: entry.canonical_name.clone(),
            entity_type: entry.entry_type.clone(),
            context: entry.definition.clone(),
            layer: Layer::Bottom,
            source_chunks: Vec::new(),
        })
        .collect();
    out.sort_by(|a, b| a.entity_id.cmp(&b.entity_id));
    out
}

fn ontology_guidelines(ontology: &Ontology) -> String {
    let mut lines = vec!["Valid entity types:".to_string()];
    for label in &ontology.labels {
        lines.push(format!("- {}: {}", label.label, label.description));
    }
    lines.join("\n")
}

#[derive(Deserialize)]
struct RawEntity {
    name: String,
    #[serde(rename = "type")]
    entity_type: String,
    context: String,
}

#[derive(Deserialize)]
struct EntityReply {
    entities: Vec<RawEntity>,
}

/// Extract ontology-constrained entities from one chunk via the backend.
///
/// Entities failing validation — name not verbatim in the chunk, type not
/// in the ontology, empty context — are dropped with a logged warning.
pub fn extract_entities(
    chunk: &Chunk,
    ontology: &Ontology,
    backend: &dyn AgentBackend,
    layer: Layer,
) -> Result<Vec<Entity>, KgError> {
    Ok(extract_entities_inner(chunk, ontology, backend, layer)?.0)
}

fn extract_entities_inner(
    chunk: &Chunk,
    ontology: &Ontology,
    backend: &dyn AgentBackend,
    layer: Layer,
) -> Result<(Vec<Entity>, Vec<String>), KgError> {
    let payload = json!({ "chunk_id": chunk.chunk_id, "text": chunk.text });
    let prompt = assemble_extraction_prompt(
        WorkflowStep::EntityExtraction,
        &payload,
        ontology_guidelines(ontology),
        "Output a single JSON object: {\"entities\": [{\"name\": \"...\", \"type\": \"...\", \"context\": \"...\"}]}"
            .to_string(),
    );
    let reply = backend.complete(&prompt).map_err(|e| KgError::Backend(e.to_string()))?;
    let parsed: EntityReply =
        serde_json::from_str(&reply.raw).map_err(|e| KgError::Backend(format!(
            "entity extraction reply is not valid JSON: {e}"
        )))?;

    let lower_text = chunk.text.to_lowercase();
    let mut entities = Vec::new();
    let mut dropped = Vec::new();
    let mut seen = BTreeMap::new();
    for raw in parsed.entities {
        let reason = if raw.name.trim().is_empty() {
            Some("empty name")
        } else if !lower_text.contains(&raw.name.to_lowercase()) {
            Some("name not verbatim in chunk text")
        } else if !ontology.contains(&raw.entity_type) {
            Some("type outside ontology")
        } else if raw.context.trim().is_empty() {
            Some("empty context")
        } else {
            None
        };
        if let Some(reason) = reason {
            log::warn!("dropping entity {:?} from {}: {reason}", raw.name, chunk.chunk_id);
            dropped.push(format!("{}:{} ({reason})", chunk.chunk_id, raw.name));
            continue;
        }
        let entity_id = Entity::make_id(layer, &raw.name, &raw.entity_type);
        if seen.insert(entity_id.clone(), ()).is_some() {
            continue; // duplicate mention inside one chunk
        }
        entities.push(Entity {
            entity_id,
            name: raw.name,
            entity_type: raw.entity_type,
            context: raw.context,
            layer,
            source_chunks: vec![chunk.chunk_id.clone()],
        });
    }
    Ok((entities, dropped))
}

#[derive(Deserialize)]
struct RawRelation {
    head: String,
    label: String,
    tail: String,
}

#[derive(Deserialize)]
struct RelationReply {
    relations: Vec<RawRelation>,
}

/// Extract directed relations strictly between the given chunk entities.
/// Relations referencing unknown entities (or looping) are dropped with a
/// warning.
pub fn extract_relations(
    chunk: &Chunk,
    chunk_entities: &[Entity],
    backend: &dyn AgentBackend,
) -> Result<Vec<Relation>, KgError> {
    Ok(extract_relations_inner(chunk, chunk_entities, backend)?.0)
}

fn extract_relations_inner(
    chunk: &Chunk,
    chunk_entities: &[Entity],
    backend: &dyn AgentBackend,
) -> Result<(Vec<Relation>, Vec<String>), KgError> {
    if chunk_entities.len() < 2 {
        return Ok((Vec::new(), Vec::new()));
    }
    let payload = json!({
        "chunk_id": chunk.chunk_id,
        "text": chunk.text,
        "entities": chunk_entities
            .iter()
            .map(|e| json!({ "entity_id": e.entity_id, "name": e.name, "type": e.entity_type }))
            .collect::<Vec<_>>(),
    });
    let prompt = assemble_extraction_prompt(
        WorkflowStep::RelationExtraction,
        &payload,
        "Relations must connect two distinct listed entities and reflect a dependency stated in this chunk."
            .to_string(),
        "Output a single JSON object: {\"relations\": [{\"head\": \"<entity_id>\", \"label\": \"...\", \"tail\": \"<entity_id>\"}]}"
            .to_string(),
    );
    let reply = backend.complete(&prompt).map_err(|e| KgError::Backend(e.to_string()))?;
    let parsed: RelationReply =
        serde_json::from_str(&reply.raw).map_err(|e| KgError::Backend(format!(
            "relation extraction reply is not valid JSON: {e}"
        )))?;

    let known: BTreeMap<&str, ()> =
        chunk_entities.iter().map(|e| (e.entity_id.as_str(), ())).collect();
    let mut relations = Vec::new();
    let mut dropped = Vec::new();
    for raw in parsed.relations {
        let reason = if raw.head == raw.tail {
            Some("head equals tail")
        } else if !known.contains_key(raw.head.as_str()) || !known.contains_key(raw.tail.as_str()) {
            Some("endpoint outside this chunk's entities")
        } else if raw.label.trim().is_empty() {
            Some("empty label")
        } else {
            None
        };
        if let Some(reason) = reason {
            log::warn!(
                "dropping relation {} -[{}]-> {} from {}: {reason}",
                raw.head,
                raw.label,
                raw.tail,
                chunk.chunk_id
            );
            dropped.push(format!("{}:{}->{} ({reason})", chunk.chunk_id, raw.head, raw.tail));
            continue;
        }
        relations.push(Relation {
            head: raw.head,
            relation_label: raw.label,
            tail: raw.tail,
            source_chunk: chunk.chunk_id.clone(),
        });
    }
    relations.sort();
    relations.dedup();
    Ok((relations, dropped))
}

/// Ground middle-layer entities in the dictionary: normalized name must
/// match a canonical name or alias *and* the ontology types must agree.
/// Each entity gains at most one grounding link; unmatched entities are
/// reported, not invented.
pub fn link_dictionary(
    entities: &[Entity],
    dictionary: &Dictionary,
) -> (Vec<CrossLayerLink>, Vec<String>) {
    let mut links = Vec::new();
    let mut unmatched = Vec::new();
    for entity in entities {
        if entity.layer != Layer::Middle {
            continue;
        }
        match dictionary.lookup(&entity.name) {
            Some(entry) if entry.entry_type == entity.entity_type => {
                links.push(CrossLayerLink {
                    from_entity: entity.entity_id.clone(),
                    to_entity: Entity::make_id(
                        Layer::Bottom,
                        &entry.canonical_name,
                        &entry.entry_type,
                    ),
                    link_kind: LinkKind::DictionaryGrounding,
                    score: 1.0,
                });
            }
            _ => unmatched.push(entity.entity_id.clone()),
        }
    }
    (links, unmatched)
}

/// Link top-layer (EHR) entities to their most similar middle-layer nodes
/// by cosine over `name + context` embeddings: top-k per entity, filtered
/// by `min_score`, ties broken by ascending entity id.
pub fn link_ehr(
    top_entities: &[Entity],
    graph: &KnowledgeGraph,
    embedder: &dyn EmbeddingBackend,
    k: usize,
    min_score: f64,
) -> Result<Vec<CrossLayerLink>, KgError> {
    let middles: Vec<&Entity> =
        graph.entities.iter().filter(|e| e.layer == Layer::Middle).collect();
    if middles.is_empty() {
        return Err(KgError::EmptyGraph);
    }
    let mut middle_embeddings = Vec::with_capacity(middles.len());
    for m in &middles {
        let text = format!("{} {}", m.name, m.context);
        middle_embeddings.push(embedder.embed(&text).map_err(|e| KgError::Embed(e.to_string()))?);
    }

    let mut links = Vec::new();
    for top in top_entities {
        if top.layer != Layer::Top {
            continue;
        }
        let query = embedder
            .embed(&format!("{} {}", top.name, top.context))
            .map_err(|e| KgError::Embed(e.to_string()))?;
        let mut scored: Vec<(f64, &str)> = middles
            .iter()
            .zip(middle_embeddings.iter())
            .map(|(m, emb)| (cosine(&query, emb), m.entity_id.as_str()))
            .collect();
        scored.sort_by(|a, b| {
            b.0.partial_cmp(&a.0).expect("finite scores").then_with(|| a.1.cmp(b.1))
        });
        for (score, middle_id) in scored.into_iter().take(k) {
            if score >= min_score {
                links.push(CrossLayerLink {
                    from_entity: top.entity_id.clone(),
                    to_entity: middle_id.to_string(),
                    link_kind: LinkKind::EmbeddingSimilarity,
                    score,
                });
            }
        }
    }
    Ok(links)
}

/// Merge per-chunk subgraphs into one graph fragment.
///
/// Entities with identical (layer, normalized name, type) — i.e. identical
/// deterministic ids — collapse into one node: contexts are concatenated in
/// chunk order with provenance preserved, relations deduplicate.
pub fn merge_subgraphs(subgraphs: &[ChunkSubgraph]) -> KnowledgeGraph {
    let mut graph = KnowledgeGraph::empty();
    let mut merged: BTreeMap<String, Entity> = BTreeMap::new();
    for sub in subgraphs {
        graph.chunks.push(sub.chunk.clone());
        for entity in &sub.entities {
            match merged.get_mut(&entity.entity_id) {
                Some(existing) => {
                    if !existing.context.split(" | ").any(|c| c == entity.context) {
                        existing.context.push_str(" | ");
                        existing.context.push_str(&entity.context);
                    }
                    existing.source_chunks.extend(entity.source_chunks.iter().cloned());
                }
                None => {
                    merged.insert(entity.entity_id.clone(), entity.clone());
                }
            }
        }
        graph.relations.extend(sub.relations.iter().cloned());
    }
    graph.entities = merged.into_values().collect();
    graph.canonicalize();
    graph
}

/// Full corpus build: chunk every document, extract entities and relations
/// per chunk, merge, ground in the dictionary, stamp the manifest.
pub fn build_graph(
    corpus: &[(String, String)],
    dictionary: &Dictionary,
    ontology: &Ontology,
    embedder: &dyn EmbeddingBackend,
    backend: &dyn AgentBackend,
    cfg: &KgBuildConfig,
) -> Result<(KnowledgeGraph, BuildReport), KgError> {
    if corpus.is_empty() {
        return Err(KgError::EmptyCorpus);
    }
    ontology.validate()?;
    dictionary.validate()?;

    let mut docs: Vec<&(String, String)> = corpus.iter().collect();
    docs.sort_by(|a, b| a.0.cmp(&b.0));

    let mut report = BuildReport { documents: docs.len(), ..BuildReport::default() };
    let mut subgraphs = Vec::new();
    for (doc_id, text) in docs.iter() {
        let paragraphs = split_paragraphs(text);
        let chunks = semantic_chunk(doc_id, &paragraphs, embedder, &cfg.chunk)?;
        for chunk in chunks {
            let (entities, dropped_entities) =
                extract_entities_inner(&chunk, ontology, backend, Layer::Middle)?;
            let (relations, dropped_relations) =
                extract_relations_inner(&chunk, &entities, backend)?;
            report.dropped_entities.extend(dropped_entities);
            report.dropped_relations.extend(dropped_relations);
            subgraphs.push(ChunkSubgraph { chunk, entities, relations });
        }
    }

    let mut graph = merge_subgraphs(&subgraphs);
    graph.entities.extend(dictionary_entities(dictionary));

    let (links, unmatched) = link_dictionary(
        &graph.entities.iter().filter(|e| e.layer == Layer::Middle).cloned().collect::<Vec<_>>(),
        dictionary,
    );
    report.dictionary_links = links.len();
    report.unmatched_entities = unmatched;
    graph.cross_layer_links.extend(links);

    graph.manifest = BuildManifest {
        engine_version: crate::ENGINE_VERSION.to_string(),
        corpus_hashes: docs
            .iter()
            .map(|(doc_id, text)| (doc_id.clone(), canon::sha256_hex(text.as_bytes())))
            .collect(),
        dictionary_hash: dictionary.hash(),
        ontology_hash: canon::hash_canonical(ontology),
        embedder_id: embedder.id().to_string(),
        chunk_config: cfg.chunk,
    };

    graph.canonicalize();
    report.chunks = graph.chunks.len();
    report.middle_entities = graph.entities.iter().filter(|e| e.layer == Layer::Middle).count();
    report.relations = graph.relations.len();
    graph.validate()?;
    Ok((graph, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::RuleOracleBackend;
    use crate::kg::embedding::HashEmbedder;
    use crate::kg::{DictionaryEntry, ParagraphSpan};
    use crate::rules::ThresholdConfig;

    fn dictionary() -> Dictionary {
        Dictionary {
            entries: vec![
                DictionaryEntry {
                    canonical_name: "Polycystic Ovarian Morphology".into(),
                    aliases: vec!["PCO".into(), "Polycystic Ovaries".into()],
                    entry_type: "ImagingFeature".into(),
                    definition: "Ovarian morphology with elevated follicle count or volume.".into(),
                },
                DictionaryEntry {
                    canonical_name: "Hirsutism".into(),
                    aliases: vec![],
                    entry_type: "Symptom".into(),
                    definition: "Excess terminal hair growth.".into(),
                },
                DictionaryEntry {
                    canonical_name: "Irregular Menstrual Cycles".into(),
                    aliases: vec!["irregular cycles".into(), "oligomenorrhea".into()],
                    entry_type: "Criterion".into(),
                    definition: "Cycle length outside expected bounds.".into(),
                },
                DictionaryEntry {
                    canonical_name: "Clinical Hyperandrogenism".into(),
                    aliases: vec![],
                    entry_type: "Criterion".into(),
                    definition: "Androgen excess established from clinical signs.".into(),
                },
            ],
        }
    }

    fn oracle() -> RuleOracleBackend {
        RuleOracleBackend::new(ThresholdConfig::default()).with_extraction_lexicon(&dictionary())
    }

    fn chunk(text: &str) -> Chunk {
        Chunk {
            chunk_id: "doc:c000".into(),
            doc_id: "doc".into(),
            ordinal: 0,
            text: text.into(),
            paragraph_span: ParagraphSpan { start: 0, end: 1 },
            context_span: ParagraphSpan { start: 0, end: 1 },
        }
    }

    #[test]
    fn entities_extracted_with_verbatim_names_and_ontology_types() {
        let c = chunk("Irregular cycles are defined as fewer than 8 cycles per year.");
        let entities =
            extract_entities(&c, &Ontology::standard(), &oracle(), Layer::Middle).unwrap();
        assert_eq!(entities.len(), 1, "{entities:?}");
        assert_eq!(entities[0].name, "Irregular cycles");
        assert_eq!(entities[0].entity_type, "Criterion");
        assert!(entities[0].context.contains("8 cycles per year"));
    }

    #[test]
    fn empty_chunk_extracts_nothing() {
        let c = chunk("");
        let entities =
            extract_entities(&c, &Ontology::standard(), &oracle(), Layer::Middle).unwrap();
        assert!(entities.is_empty());
    }

    #[test]
    fn relations_follow_type_pair_rules() {
        let c = chunk("Hirsutism indicates clinical hyperandrogenism in this assessment.");
        let entities =
            extract_entities(&c, &Ontology::standard(), &oracle(), Layer::Middle).unwrap();
        assert_eq!(entities.len(), 2, "{entities:?}");
        let relations = extract_relations(&c, &entities, &oracle()).unwrap();
        assert_eq!(relations.len(), 1, "{relations:?}");
        assert_eq!(relations[0].relation_label, "indicates");
        assert!(relations[0].head.contains("hirsutism"));
    }

    #[test]
    fn single_entity_chunk_has_no_relations() {
        let c = chunk("Hirsutism is assessed on examination.");
        let entities =
            extract_entities(&c, &Ontology::standard(), &oracle(), Layer::Middle).unwrap();
        assert_eq!(entities.len(), 1);
        let relations = extract_relations(&c, &entities, &oracle()).unwrap();
        assert!(relations.is_empty());
    }

    #[test]
    fn dictionary_linking_honors_aliases_and_types() {
        let entity = Entity {
            entity_id: Entity::make_id(Layer::Middle, "PCO", "ImagingFeature"),
            name: "PCO".into(),
            entity_type: "ImagingFeature".into(),
            context: "ctx".into(),
            layer: Layer::Middle,
            source_chunks: vec!["doc:c000".into()],
        };
        let (links, unmatched) = link_dictionary(&[entity.clone()], &dictionary());
        assert_eq!(links.len(), 1);
        assert!(unmatched.is_empty());
        assert_eq!(links[0].to_entity, "b:imagingfeature:polycystic-ovarian-morphology");

        // Same name, wrong type → unmatched.
        let mistyped = Entity {
            entity_id: Entity::make_id(Layer::Middle, "PCO", "Treatment"),
            entity_type: "Treatment".into(),
            ..entity
        };
        let (links, unmatched) = link_dictionary(&[mistyped], &dictionary());
        assert!(links.is_empty());
        assert_eq!(unmatched.len(), 1);
    }

    #[test]
    fn merge_collapses_identical_entities_across_chunks() {
        let make = |chunk_id: &str, ctx: &str| Entity {
            entity_id: Entity::make_id(Layer::Middle, "Hirsutism", "Symptom"),
            name: "Hirsutism".into(),
            entity_type: "Symptom".into(),
            context: ctx.into(),
            layer: Layer::Middle,
            source_chunks: vec![chunk_id.into()],
        };
        let mut c1 = chunk("a");
        let mut c2 = chunk("b");
        c1.chunk_id = "doc:c000".into();
        c2.chunk_id = "doc:c001".into();
        c2.ordinal = 1;
        let merged = merge_subgraphs(&[
            ChunkSubgraph { chunk: c1, entities: vec![make("doc:c000", "first")], relations: vec![] },
            ChunkSubgraph { chunk: c2, entities: vec![make("doc:c001", "second")], relations: vec![] },
        ]);
        assert_eq!(merged.entities.len(), 1);
        assert_eq!(merged.entities[0].source_chunks, vec!["doc:c000", "doc:c001"]);
        assert_eq!(merged.entities[0].context, "first | second");
    }

    #[test]
    fn link_ehr_identical_text_scores_one() {
        let corpus = vec![(
            "guide.md".to_string(),
            "Irregular cycles are defined as fewer than 8 cycles per year.\n\nHirsutism is scored on examination."
                .to_string(),
        )];
        let embedder = HashEmbedder::default();
        let (graph, _) = build_graph(
            &corpus,
            &dictionary(),
            &Ontology::standard(),
            &embedder,
            &oracle(),
            &KgBuildConfig::default(),
        )
        .unwrap();

        let middle = graph.entities.iter().find(|e| e.layer == Layer::Middle).unwrap();
        let top = Entity {
            entity_id: Entity::make_id(Layer::Top, &middle.name, &middle.entity_type),
            name: middle.name.clone(),
            entity_type: middle.entity_type.clone(),
            context: middle.context.clone(),
            layer: Layer::Top,
            source_chunks: vec![graph.chunks[0].chunk_id.clone()],
        };
        let links = link_ehr(&[top.clone()], &graph, &embedder, 3, 0.0).unwrap();
        assert!(!links.is_empty());
        assert_eq!(links[0].to_entity, middle.entity_id);
        assert!((links[0].score - 1.0).abs() < 1e-9);

        // An unreachable threshold yields zero links.
        let none = link_ehr(&[top], &graph, &embedder, 3, 1.01).unwrap();
        assert!(none.is_empty());
    }

    #[test]
    fn rebuilding_is_byte_identical() {
        let corpus = vec![
            (
                "guide.md".to_string(),
                "Irregular cycles are defined as fewer than 8 cycles per year.\n\nHirsutism supports clinical hyperandrogenism.\n\nPolycystic ovaries are assessed on ultrasound."
                    .to_string(),
            ),
            ("notes.md".to_string(), "Hirsutism is graded by score.".to_string()),
        ];
        let embedder = HashEmbedder::default();
        let build = || {
            build_graph(
                &corpus,
                &dictionary(),
                &Ontology::standard(),
                &embedder,
                &oracle(),
                &KgBuildConfig::default(),
            )
            .unwrap()
            .0
        };
        let a = build();
        let b = build();
        assert_eq!(a.to_canonical_file(), b.to_canonical_file());
        assert_eq!(a.manifest_hash(), b.manifest_hash());
    }

    #[test]
    fn empty_corpus_is_an_error() {
        let embedder = HashEmbedder::default();
        assert!(matches!(
            build_graph(
                &[],
                &dictionary(),
                &Ontology::standard(),
                &embedder,
                &oracle(),
                &KgBuildConfig::default()
            ),
            Err(KgError::EmptyCorpus)
        ));
    }
}
