//! Three-layer knowledge graph: dictionary bottom layer, guideline middle
//! layer, patient-data top layer.
//!
//! The graph file is one canonical JSON document with sorted arrays, so
//! identical builds are byte-identical and diffs stay readable. Provenance
//! is closed: every non-dictionary entity, every relation and every
//! retrieval citation resolves to a chunk stored in the graph.

mod build;
mod chunker;
pub mod embedding;
mod retrieval;

pub use build::{
    build_graph, dictionary_entities, extract_entities, extract_relations, link_dictionary,
    link_ehr, merge_subgraphs, BuildReport, ChunkSubgraph, KgBuildConfig,
};
pub use chunker::{semantic_chunk, ChunkConfig};
pub use retrieval::{u_retrieve, RetrievalParams};

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::canon;

#[derive(Debug, thiserror::Error)]
pub enum KgError {
    #[error("embedding backend failed: {0}")]
    Embed(String),
    #[error("agent backend failed during graph construction: {0}")]
    Backend(String),
    #[error("knowledge graph is empty")]
    EmptyGraph,
    #[error("document {0} has no paragraphs")]
    EmptyDocument(String),
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("graph invariant violated: {0}")]
    Invariant(String),
    #[error("cannot parse graph file: {0}")]
    Parse(String),
}

/// Half-open paragraph index range `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParagraphSpan {
    pub start: usize,
    pub end: usize,
}

impl ParagraphSpan {
    pub fn len(&self) -> usize {
        self.end.saturating_sub(self.start)
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }
}

/// A semantically coherent slice of a source document.
///
/// `paragraph_span` is the core span: core spans of a document are
/// contiguous, non-overlapping and cover it. `context_span` widens the core
/// by the configured buffer so the chunk text is self-contained; `text` is
/// the joined context span.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Chunk {
    pub chunk_id: String,
    pub doc_id: String,
    pub ordinal: usize,
    pub text: String,
    pub paragraph_span: ParagraphSpan,
    pub context_span: ParagraphSpan,
}

/// Graph layer of an entity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Layer {
    Bottom,
    Middle,
    Top,
}

impl Layer {
    pub fn id_prefix(self) -> &'static str {
        match self {
            Layer::Bottom => "b",
            Layer::Middle => "m",
            Layer::Top => "t",
        }
    }
}

/// A graph node: verbatim mention, ontology type, descriptive context.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Entity {
    pub entity_id: String,
    /// Verbatim mention string from the source text (dictionary canonical
    /// name for Bottom entities).
    pub name: String,
    /// Ontology label.
    pub entity_type: String,
    /// Descriptive summary; merged entities join their per-chunk contexts.
    pub context: String,
    pub layer: Layer,
    /// Provenance chunks. Empty for Bottom entities, non-empty elsewhere.
    #[serde(default)]
    pub source_chunks: Vec<String>,
}

impl Entity {
    /// Deterministic id from the merge key (layer, normalized name, type).
    pub fn make_id(layer: Layer, name: &str, entity_type: &str) -> String {
        format!("{}:{}:{}", layer.id_prefix(), canon::slug(entity_type), canon::slug(name))
    }
}

/// Ontology label with a human-readable description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OntologyLabel {
    pub label: String,
    pub description: String,
}

/// The closed label set entity types are constrained to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ontology {
    pub labels: Vec<OntologyLabel>,
}

impl Ontology {
    /// Default diagnostic ontology.
    pub fn standard() -> Self {
        let labels = [
            ("Symptom", "A clinical sign or patient-reported manifestation."),
            ("Criterion", "A diagnostic criterion or component of one."),
            ("Threshold", "A numeric cutoff used by a criterion."),
            ("LabMarker", "A laboratory analyte or derived index."),
            ("Condition", "A disorder, diagnosis or differential."),
            ("Treatment", "A management or treatment option."),
            ("ImagingFeature", "An ultrasound or other imaging measurement."),
        ];
        Ontology {
            labels: labels
                .into_iter()
                .map(|(label, description)| OntologyLabel {
                    label: label.to_string(),
                    description: description.to_string(),
                })
                .collect(),
        }
    }

    pub fn contains(&self, label: &str) -> bool {
        self.labels.iter().any(|l| l.label == label)
    }

    pub fn validate(&self) -> Result<(), KgError> {
        if self.labels.is_empty() {
            return Err(KgError::Invariant("ontology has no labels".into()));
        }
        let mut seen = BTreeSet::new();
        for l in &self.labels {
            if !seen.insert(&l.label) {
                return Err(KgError::Invariant(format!("duplicate ontology label {:?}", l.label)));
            }
        }
        Ok(())
    }
}

/// One dictionary entry: canonical term, aliases, type and definition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DictionaryEntry {
    pub canonical_name: String,
    #[serde(default)]
    pub aliases: Vec<String>,
    pub entry_type: String,
    pub definition: String,
}

/// The curated term dictionary anchoring the bottom layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dictionary {
    pub entries: Vec<DictionaryEntry>,
}

impl Dictionary {
    pub fn parse(json: &str) -> Result<Self, KgError> {
        let dict: Dictionary = serde_json::from_str(json).map_err(|e| KgError::Parse(e.to_string()))?;
        dict.validate()?;
        Ok(dict)
    }

    /// The alias map must be functional: after normalization each alias (and
    /// each canonical name) resolves to exactly one entry.
    pub fn validate(&self) -> Result<(), KgError> {
        let mut seen: BTreeMap<String, &str> = BTreeMap::new();
        for entry in &self.entries {
            for term in std::iter::once(&entry.canonical_name).chain(entry.aliases.iter()) {
                let norm = canon::normalize_term(term);
                if let Some(previous) = seen.insert(norm.clone(), &entry.canonical_name) {
                    if previous != entry.canonical_name {
                        return Err(KgError::Invariant(format!(
                            "alias {term:?} maps to both {previous:?} and {:?}",
                            entry.canonical_name
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Look up a normalized term among canonical names and aliases.
    pub fn lookup(&self, term: &str) -> Option<&DictionaryEntry> {
        let norm = canon::normalize_term(term);
        self.entries.iter().find(|entry| {
            canon::normalize_term(&entry.canonical_name) == norm
                || entry.aliases.iter().any(|a| canon::normalize_term(a) == norm)
        })
    }

    pub fn hash(&self) -> String {
        canon::hash_canonical(self)
    }
}

/// Directed diagnostic dependency between two entities, extracted strictly
/// within one chunk.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Relation {
    pub head: String,
    pub relation_label: String,
    pub tail: String,
    pub source_chunk: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum LinkKind {
    /// Middle → Bottom, via alias matching under type constraints.
    DictionaryGrounding,
    /// Top → Middle, via embedding similarity.
    EmbeddingSimilarity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossLayerLink {
    pub from_entity: String,
    pub to_entity: String,
    pub link_kind: LinkKind,
    pub score: f64,
}

/// Everything needed to reproduce a build: corpus hashes, chunking config,
/// embedder identity, dictionary hash.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BuildManifest {
    pub engine_version: String,
    pub corpus_hashes: BTreeMap<String, String>,
    pub dictionary_hash: String,
    pub ontology_hash: String,
    pub embedder_id: String,
    pub chunk_config: ChunkConfig,
}

/// The assembled graph. Arrays are canonically sorted; the struct is
/// immutable after construction and freely shared by concurrent retrievals.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct KnowledgeGraph {
    pub manifest: BuildManifest,
    pub chunks: Vec<Chunk>,
    pub entities: Vec<Entity>,
    pub relations: Vec<Relation>,
    pub cross_layer_links: Vec<CrossLayerLink>,
}

/// Citation resolving a retrieved item back to its source chunk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Citation {
    pub doc_id: String,
    pub chunk_id: String,
    pub text_excerpt: String,
}

/// One ranked retrieval hit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievedItem {
    pub entity_id: String,
    pub context: String,
    pub score: f64,
    pub citations: Vec<Citation>,
}

/// Ranked retrieval output: scores non-increasing, ties broken by ascending
/// entity id, every item carrying at least one citation.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RetrievalResult {
    pub items: Vec<RetrievedItem>,
}

impl KnowledgeGraph {
    /// An empty graph: diagnosis runs degrade to empty knowledge sections.
    pub fn empty() -> Self {
        KnowledgeGraph::default()
    }

    pub fn is_empty(&self) -> bool {
        self.entities.is_empty()
    }

    pub fn entity(&self, id: &str) -> Option<&Entity> {
        self.entities.binary_search_by(|e| e.entity_id.as_str().cmp(id)).ok().map(|i| &self.entities[i])
    }

    pub fn chunk(&self, id: &str) -> Option<&Chunk> {
        self.chunks.iter().find(|c| c.chunk_id == id)
    }

    /// Entity ids one relation hop away (either direction), ascending.
    pub fn neighbors(&self, entity_id: &str) -> Vec<&str> {
        let mut out = BTreeSet::new();
        for r in &self.relations {
            if r.head == entity_id {
                out.insert(r.tail.as_str());
            }
            if r.tail == entity_id {
                out.insert(r.head.as_str());
            }
        }
        out.into_iter().collect()
    }

    /// Canonical sort applied after construction or mutation.
    pub fn canonicalize(&mut self) {
        self.chunks.sort_by(|a, b| a.chunk_id.cmp(&b.chunk_id));
        self.entities.sort_by(|a, b| a.entity_id.cmp(&b.entity_id));
        for e in &mut self.entities {
            e.source_chunks.sort();
            e.source_chunks.dedup();
        }
        self.relations.sort();
        self.relations.dedup();
        self.cross_layer_links.sort_by(|a, b| {
            (&a.from_entity, &a.to_entity, a.link_kind).cmp(&(&b.from_entity, &b.to_entity, b.link_kind))
        });
    }

    /// Assert all graph invariants. Run on load and after every build.
    pub fn validate(&self) -> Result<(), KgError> {
        let chunk_ids: BTreeSet<&str> = self.chunks.iter().map(|c| c.chunk_id.as_str()).collect();
        let mut entity_ids = BTreeSet::new();
        for e in &self.entities {
            if !entity_ids.insert(e.entity_id.as_str()) {
                return Err(KgError::Invariant(format!("duplicate entity id {:?}", e.entity_id)));
            }
            if e.name.is_empty() {
                return Err(KgError::Invariant(format!("entity {:?} has empty name", e.entity_id)));
            }
            match e.layer {
                Layer::Bottom => {
                    if !e.source_chunks.is_empty() {
                        return Err(KgError::Invariant(format!(
                            "bottom entity {:?} carries source chunks",
                            e.entity_id
                        )));
                    }
                }
                Layer::Middle | Layer::Top => {
                    if e.source_chunks.is_empty() {
                        return Err(KgError::Invariant(format!(
                            "{:?} entity {:?} lacks source chunks",
                            e.layer, e.entity_id
                        )));
                    }
                    for c in &e.source_chunks {
                        if !chunk_ids.contains(c.as_str()) {
                            return Err(KgError::Invariant(format!(
                                "entity {:?} references unknown chunk {c:?}",
                                e.entity_id
                            )));
                        }
                    }
                }
            }
        }
        for r in &self.relations {
            if r.head == r.tail {
                return Err(KgError::Invariant(format!("self-relation on {:?}", r.head)));
            }
            for endpoint in [&r.head, &r.tail] {
                if !entity_ids.contains(endpoint.as_str()) {
                    return Err(KgError::Invariant(format!(
                        "relation references unknown entity {endpoint:?}"
                    )));
                }
            }
            if !chunk_ids.contains(r.source_chunk.as_str()) {
                return Err(KgError::Invariant(format!(
                    "relation sourced from unknown chunk {:?}",
                    r.source_chunk
                )));
            }
        }
        for link in &self.cross_layer_links {
            let from = self
                .entity(&link.from_entity)
                .ok_or_else(|| KgError::Invariant(format!("link from unknown {:?}", link.from_entity)))?;
            let to = self
                .entity(&link.to_entity)
                .ok_or_else(|| KgError::Invariant(format!("link to unknown {:?}", link.to_entity)))?;
            match link.link_kind {
                LinkKind::DictionaryGrounding => {
                    if from.layer != Layer::Middle || to.layer != Layer::Bottom {
                        return Err(KgError::Invariant(format!(
                            "dictionary grounding must go Middle→Bottom, got {:?}→{:?}",
                            from.layer, to.layer
                        )));
                    }
                }
                LinkKind::EmbeddingSimilarity => {
                    if from.layer != Layer::Top || to.layer != Layer::Middle {
                        return Err(KgError::Invariant(format!(
                            "embedding similarity must go Top→Middle, got {:?}→{:?}",
                            from.layer, to.layer
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Canonical file form (pretty, sorted, trailing newline).
    pub fn to_canonical_file(&self) -> String {
        canon::to_pretty_json(self)
    }

    pub fn parse(json: &str) -> Result<Self, KgError> {
        let graph: KnowledgeGraph =
            serde_json::from_str(json).map_err(|e| KgError::Parse(e.to_string()))?;
        graph.validate()?;
        Ok(graph)
    }

    /// Hash of the build manifest, stamped into reports for citation
    /// resolution.
    pub fn manifest_hash(&self) -> String {
        canon::hash_canonical(&self.manifest)
    }
}
