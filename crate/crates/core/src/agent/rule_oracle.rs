//! Deterministic rule-oracle backend.
//!
//! Answers diagnosis-step prompts by running the rule evaluators over the
//! prompt's own task payload, and extraction prompts with regex/lexicon
//! extractors. Zero tokens, bit-deterministic replies — the offline stand-in
//! for a live model on every decision path.

use regex::Regex;
use serde::Deserialize;
use serde_json::{json, Value};

use crate::canon;
use crate::kg::Dictionary;
use crate::patient::{ClinicalSigns, ImagingFindings, MenstrualHistory, PatientRecord};
use crate::rules::{self, CriterionResult, ThresholdConfig};

use super::{
    AgentBackend, BackendDescriptor, BackendError, BackendKind, BackendReply, PromptSpec,
    ReplySchema, Usage, WorkflowStep,
};

/// One extraction-lexicon term.
#[derive(Debug, Clone)]
struct LexTerm {
    normalized: String,
    entity_type: String,
}

pub struct RuleOracleBackend {
    cfg: ThresholdConfig,
    lexicon: Vec<LexTerm>,
    descriptor: BackendDescriptor,
}

impl RuleOracleBackend {
    pub fn new(cfg: ThresholdConfig) -> Self {
        Self {
            cfg,
            lexicon: Vec::new(),
            descriptor: BackendDescriptor {
                id: "rule-oracle-v1".to_string(),
                kind: BackendKind::RuleOracle,
                model_name: None,
            },
        }
    }

    /// Arm the entity-extraction path with dictionary terms.
    pub fn with_extraction_lexicon(mut self, dictionary: &Dictionary) -> Self {
        for entry in &dictionary.entries {
            for term in std::iter::once(&entry.canonical_name).chain(entry.aliases.iter()) {
                self.lexicon.push(LexTerm {
                    normalized: canon::normalize_term(term),
                    entity_type: entry.entry_type.clone(),
                });
            }
        }
        // Longer surface forms take precedence over their substrings.
        self.lexicon.sort_by(|a, b| {
            b.normalized.chars().count().cmp(&a.normalized.chars().count())
                .then_with(|| a.normalized.cmp(&b.normalized))
        });
        self.lexicon.dedup_by(|a, b| a.normalized == b.normalized);
        self
    }

    fn payload(prompt: &PromptSpec) -> Result<Value, BackendError> {
        let raw = prompt
            .task_payload()
            .ok_or_else(|| BackendError::Slice("task input carries no payload".to_string()))?;
        serde_json::from_str(raw).map_err(|e| BackendError::Slice(e.to_string()))
    }

    fn diagnosis_reply(&self, prompt: &PromptSpec) -> Result<String, BackendError> {
        let slice: SlicePayload = serde_json::from_value(Self::payload(prompt)?)
            .map_err(|e| BackendError::Slice(e.to_string()))?;
        let record = slice.into_record();
        let results: Vec<CriterionResult> = match prompt.step {
            WorkflowStep::Step1Clinical => vec![
                rules::eval_irregular_cycles(&record, &self.cfg),
                rules::eval_clinical_ha(&record, &self.cfg),
            ],
            WorkflowStep::Step2Biochemical => {
                vec![rules::eval_biochemical_ha(&record, &self.cfg)
                    .map_err(|e| BackendError::Oracle(e.to_string()))?]
            }
            WorkflowStep::Step3Imaging => vec![rules::eval_pcom(&record, &self.cfg)],
            WorkflowStep::Exclusion => rules::eval_exclusions(&record, &self.cfg),
            _ => unreachable!("diagnosis_reply only handles diagnosis steps"),
        };

        let schema = ReplySchema::for_step(prompt.step)
            .expect("diagnosis steps have reply schemas");
        let mut object = serde_json::Map::new();
        for ((key, criterion_id), result) in schema.keys.iter().zip(results.iter()) {
            debug_assert_eq!(*criterion_id, result.criterion_id);
            object.insert(
                key.to_string(),
                json!({ "status": result.status.as_str(), "reasoning": result.reasoning }),
            );
        }
        Ok(canon::to_canonical_json(&Value::Object(object)))
    }

    fn record_extraction_reply(&self, prompt: &PromptSpec) -> Result<String, BackendError> {
        #[derive(Deserialize)]
        struct NotePayload {
            note: String,
        }
        let payload: NotePayload = serde_json::from_value(Self::payload(prompt)?)
            .map_err(|e| BackendError::Slice(e.to_string()))?;
        let (record_value, evidence) = extract_record_fields(&payload.note);
        Ok(canon::to_canonical_json(&json!({ "record": record_value, "evidence": evidence })))
    }

    fn entity_extraction_reply(&self, prompt: &PromptSpec) -> Result<String, BackendError> {
        #[derive(Deserialize)]
        struct ChunkPayload {
            text: String,
        }
        let payload: ChunkPayload = serde_json::from_value(Self::payload(prompt)?)
            .map_err(|e| BackendError::Slice(e.to_string()))?;
        let entities = self.scan_entities(&payload.text);
        Ok(canon::to_canonical_json(&json!({ "entities": entities })))
    }

    /// Scan text for lexicon terms; one entity per distinct normalized term,
    /// named by its first verbatim occurrence and contextualized by the
    /// sentence containing it.
    fn scan_entities(&self, text: &str) -> Vec<Value> {
        let sentences = split_sentences(text);
        let mut found: Vec<(usize, Value)> = Vec::new();
        let mut seen_terms = std::collections::BTreeSet::new();
        let mut claimed: Vec<(usize, usize)> = Vec::new();

        for term in &self.lexicon {
            if seen_terms.contains(&term.normalized) {
                continue;
            }
            if let Some((start, end)) = find_term(text, &term.normalized) {
                if claimed.iter().any(|(s, e)| start < *e && end > *s) {
                    continue; // inside a longer, already-claimed mention
                }
                let verbatim = &text[start..end];
                let sentence = sentences
                    .iter()
                    .find(|(s_start, s_end, _)| start >= *s_start && start < *s_end)
                    .map(|(_, _, s)| s.as_str())
                    .unwrap_or(verbatim);
                found.push((
                    start,
                    json!({
                        "name": verbatim,
                        "type": term.entity_type,
                        "context": sentence.trim(),
                    }),
                ));
                claimed.push((start, end));
                seen_terms.insert(term.normalized.clone());
            }
        }
        found.sort_by_key(|(start, _)| *start);
        found.into_iter().map(|(_, v)| v).collect()
    }

    fn relation_extraction_reply(&self, prompt: &PromptSpec) -> Result<String, BackendError> {
        #[derive(Deserialize)]
        struct RelPayload {
            text: String,
            entities: Vec<RelEntity>,
        }
        #[derive(Deserialize)]
        struct RelEntity {
            entity_id: String,
            name: String,
            #[serde(rename = "type")]
            entity_type: String,
        }
        let payload: RelPayload = serde_json::from_value(Self::payload(prompt)?)
            .map_err(|e| BackendError::Slice(e.to_string()))?;

        let mut relations = Vec::new();
        for (_, _, sentence) in split_sentences(&payload.text) {
            // Entities mentioned in this sentence, ordered by first mention.
            let mut mentioned: Vec<(usize, &RelEntity)> = payload
                .entities
                .iter()
                .filter_map(|e| find_term(&sentence, &canon::normalize_term(&e.name)).map(|(s, _)| (s, e)))
                .collect();
            mentioned.sort_by_key(|(pos, _)| *pos);
            for i in 0..mentioned.len() {
                for j in 0..mentioned.len() {
                    if i == j {
                        continue;
                    }
                    let (pos_a, a) = mentioned[i];
                    let (pos_b, b) = mentioned[j];
                    if pos_a >= pos_b || a.entity_id == b.entity_id {
                        continue; // head precedes tail in the sentence
                    }
                    if let Some(label) = relation_label(&a.entity_type, &b.entity_type) {
                        relations.push(json!({
                            "head": a.entity_id,
                            "label": label,
                            "tail": b.entity_id,
                        }));
                    }
                }
            }
        }
        relations.sort_by_key(|r| canon::to_canonical_json(r));
        relations.dedup();
        Ok(canon::to_canonical_json(&json!({ "relations": relations })))
    }
}

impl AgentBackend for RuleOracleBackend {
    fn descriptor(&self) -> &BackendDescriptor {
        &self.descriptor
    }

    fn complete(&self, prompt: &PromptSpec) -> Result<BackendReply, BackendError> {
        let raw = match prompt.step {
            WorkflowStep::Step1Clinical
            | WorkflowStep::Step2Biochemical
            | WorkflowStep::Step3Imaging
            | WorkflowStep::Exclusion => self.diagnosis_reply(prompt)?,
            WorkflowStep::RecordExtraction => self.record_extraction_reply(prompt)?,
            WorkflowStep::EntityExtraction => self.entity_extraction_reply(prompt)?,
            WorkflowStep::RelationExtraction => self.relation_extraction_reply(prompt)?,
            WorkflowStep::Reporting => "{}".to_string(),
        };
        Ok(BackendReply { raw, usage: Usage::zero() })
    }
}

/// Directed relation label for an ordered type pair, when one applies.
fn relation_label(head_type: &str, tail_type: &str) -> Option<&'static str> {
    match (head_type, tail_type) {
        ("Symptom", "Criterion") | ("Symptom", "Condition") => Some("indicates"),
        ("LabMarker", "Criterion") => Some("supports"),
        ("LabMarker", "Condition") => Some("screens_for"),
        ("Threshold", "Criterion") | ("Threshold", "ImagingFeature") => Some("defines"),
        ("ImagingFeature", "Criterion") => Some("supports"),
        ("Criterion", "Condition") => Some("supports_diagnosis_of"),
        ("Treatment", "Condition") => Some("manages"),
        _ => None,
    }
}

/// Sentences as (char_start, char_end, text) on byte offsets.
fn split_sentences(text: &str) -> Vec<(usize, usize, String)> {
    let mut out = Vec::new();
    let mut start = 0usize;
    let bytes: Vec<char> = text.chars().collect();
    let mut byte_pos = 0usize;
    let mut sentence_start_byte = 0usize;
    for (i, c) in bytes.iter().enumerate() {
        byte_pos += c.len_utf8();
        let is_terminal = matches!(c, '.' | '!' | '?');
        let next_is_break = bytes.get(i + 1).map(|n| n.is_whitespace()).unwrap_or(true);
        if is_terminal && next_is_break {
            let sentence: String = bytes[start..=i].iter().collect();
            out.push((sentence_start_byte, byte_pos, sentence));
            start = i + 1;
            sentence_start_byte = byte_pos;
        }
    }
    if start < bytes.len() {
        let sentence: String = bytes[start..].iter().collect();
        if !sentence.trim().is_empty() {
            out.push((sentence_start_byte, text.len(), sentence));
        }
    }
    out
}

/// Case-insensitive whole-word search for a normalized term. Returns byte
/// offsets of the first match in the original text.
fn find_term(text: &str, normalized_term: &str) -> Option<(usize, usize)> {
    if normalized_term.is_empty() {
        return None;
    }
    let haystack = text.to_lowercase();
    // Lowercasing is length-preserving for the ASCII clinical corpus; guard
    // anyway so offsets cannot go out of sync on exotic input.
    if haystack.len() != text.len() {
        return None;
    }
    let needle = normalized_term;
    let mut from = 0usize;
    while let Some(rel) = haystack[from..].find(needle) {
        let start = from + rel;
        let end = start + needle.len();
        let before_ok = start == 0
            || !haystack[..start].chars().next_back().map(|c| c.is_alphanumeric()).unwrap_or(false);
        let after_ok = end >= haystack.len()
            || !haystack[end..].chars().next().map(|c| c.is_alphanumeric()).unwrap_or(false);
        if before_ok && after_ok {
            return Some((start, end));
        }
        from = start + 1;
    }
    None
}

#[derive(Debug, Default, Deserialize)]
struct SlicePayload {
    age_years: Option<f64>,
    years_post_menarche: Option<f64>,
    #[serde(default)]
    menstrual: MenstrualHistory,
    #[serde(default)]
    clinical_signs: ClinicalSigns,
    #[serde(default)]
    biochemistry: crate::patient::BiochemPanel,
    #[serde(default)]
    imaging: ImagingFindings,
}

impl SlicePayload {
    fn into_record(self) -> PatientRecord {
        let mut record = PatientRecord::empty("slice");
        record.age_years = self.age_years;
        record.years_post_menarche = self.years_post_menarche;
        record.menstrual = self.menstrual;
        record.clinical_signs = self.clinical_signs;
        record.biochemistry = self.biochemistry;
        record.imaging = self.imaging;
        record
    }
}

/// Regex extraction of record fields from a narrative note. Only values the
/// patterns actually match are emitted — nothing is inferred.
fn extract_record_fields(note: &str) -> (Value, Value) {
    let mut record = serde_json::Map::new();
    let mut menstrual = serde_json::Map::new();
    let mut clinical = serde_json::Map::new();
    let mut imaging = serde_json::Map::new();
    let mut evidence = serde_json::Map::new();

    let mut push_evidence = |field: &str, m: &regex::Match<'_>| {
        evidence.insert(field.to_string(), json!(m.as_str()));
    };

    // Cycle range: "cycles every 24–40 days" / "cycles every 24-40 days".
    let cycle_range = Regex::new(r"(?i)cycles?\s+(?:every\s+)?(\d{1,3})\s*[–-]\s*(\d{1,3})\s*days")
        .expect("static regex");
    if let Some(caps) = cycle_range.captures(note) {
        let m = caps.get(0).expect("whole match");
        menstrual.insert("typical_cycle_min_days".into(), json!(caps[1].parse::<u32>().ok()));
        menstrual.insert("typical_cycle_max_days".into(), json!(caps[2].parse::<u32>().ok()));
        push_evidence("menstrual.typical_cycle_min_days", &m);
        push_evidence("menstrual.typical_cycle_max_days", &m);
    }

    // "FG score 6" / "Ferriman-Gallwey score of 6" / "mF-G score 1".
    let fg = Regex::new(r"(?i)(?:m?F[-\s]?G|Ferriman[-\s]?Gallwey)\s*score\s*(?:of\s*)?(\d{1,2})")
        .expect("static regex");
    if let Some(caps) = fg.captures(note) {
        let m = caps.get(0).expect("whole match");
        clinical.insert("ferriman_gallwey_score".into(), json!(caps[1].parse::<u8>().ok()));
        push_evidence("clinical_signs.ferriman_gallwey_score", &m);
    }

    // "5 cycles per year".
    let cpy = Regex::new(r"(?i)(\d{1,2})\s*cycles?\s*(?:per|/)\s*year").expect("static regex");
    if let Some(caps) = cpy.captures(note) {
        let m = caps.get(0).expect("whole match");
        menstrual.insert("cycles_per_year".into(), json!(caps[1].parse::<u32>().ok()));
        push_evidence("menstrual.cycles_per_year", &m);
    }

    // "longest cycle 95 days".
    let longest =
        Regex::new(r"(?i)longest\s+(?:single\s+)?cycle\s+(?:of\s+)?(\d{1,3})\s*days").expect("static regex");
    if let Some(caps) = longest.captures(note) {
        let m = caps.get(0).expect("whole match");
        menstrual.insert("longest_single_cycle_days".into(), json!(caps[1].parse::<u32>().ok()));
        push_evidence("menstrual.longest_single_cycle_days", &m);
    }

    // "22 follicles in the right ovary".
    let follicles = Regex::new(r"(?i)(\d{1,3})\s+follicles?\s+(?:in|on)\s+the\s+(left|right)\s+ovary")
        .expect("static regex");
    for caps in follicles.captures_iter(note) {
        let m = caps.get(0).expect("whole match");
        let side = caps[2].to_lowercase();
        let field = format!("follicle_count_{side}");
        imaging.insert(field.clone(), json!(caps[1].parse::<u32>().ok()));
        evidence.insert(format!("imaging.{field}"), json!(m.as_str()));
    }

    // "left ovarian volume 12.5 mL".
    let volume = Regex::new(r"(?i)(left|right)\s+ovarian\s+volume\s+(?:of\s+)?(\d{1,3}(?:\.\d+)?)\s*mL")
        .expect("static regex");
    for caps in volume.captures_iter(note) {
        let m = caps.get(0).expect("whole match");
        let side = caps[1].to_lowercase();
        let field = format!("ovarian_volume_{side}_ml");
        imaging.insert(field.clone(), json!(caps[2].parse::<f64>().ok()));
        evidence.insert(format!("imaging.{field}"), json!(m.as_str()));
    }

    if !menstrual.is_empty() {
        record.insert("menstrual".into(), Value::Object(menstrual));
    }
    if !clinical.is_empty() {
        record.insert("clinical_signs".into(), Value::Object(clinical));
    }
    if !imaging.is_empty() {
        record.insert("imaging".into(), Value::Object(imaging));
    }
    (Value::Object(record), Value::Object(evidence))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::{assemble_prompt, parse_reply, slice_for_step, AgentRole};
    use crate::kg::RetrievalResult;
    use crate::patient::LabValue;
    use crate::rules::CriterionStatus;

    fn oracle() -> RuleOracleBackend {
        RuleOracleBackend::new(ThresholdConfig::default())
    }

    fn step1_prompt(record: &PatientRecord) -> PromptSpec {
        assemble_prompt(
            AgentRole::GynecologicalEndocrine,
            WorkflowStep::Step1Clinical,
            &slice_for_step(record, WorkflowStep::Step1Clinical),
            &ThresholdConfig::default(),
            &RetrievalResult::default(),
            true,
        )
        .unwrap()
    }

    #[test]
    fn oracle_reply_matches_direct_evaluation() {
        let mut record = PatientRecord::empty("p");
        record.years_post_menarche = Some(4.0);
        record.menstrual.typical_cycle_min_days = Some(24);
        record.menstrual.typical_cycle_max_days = Some(40);
        let reply = oracle().complete(&step1_prompt(&record)).unwrap();
        assert_eq!(reply.usage, Usage::zero());

        let schema = ReplySchema::for_step(WorkflowStep::Step1Clinical).unwrap();
        let parsed = parse_reply(&reply.raw, &schema).unwrap();
        let direct = rules::eval_irregular_cycles(&record, &ThresholdConfig::default());
        assert_eq!(parsed.criteria[0].status, direct.status);
        assert_eq!(parsed.criteria[0].reasoning, direct.reasoning);
        assert_eq!(parsed.criteria[1].status, CriterionStatus::Uncertain);
    }

    #[test]
    fn empty_slice_yields_all_uncertain() {
        let record = PatientRecord::empty("p");
        let reply = oracle().complete(&step1_prompt(&record)).unwrap();
        let schema = ReplySchema::for_step(WorkflowStep::Step1Clinical).unwrap();
        let parsed = parse_reply(&reply.raw, &schema).unwrap();
        assert!(parsed.criteria.iter().all(|c| c.status == CriterionStatus::Uncertain));
    }

    #[test]
    fn malformed_payload_is_a_slice_error() {
        let mut prompt = step1_prompt(&PatientRecord::empty("p"));
        prompt.task_input = "no payload marker here".to_string();
        assert!(matches!(oracle().complete(&prompt), Err(BackendError::Slice(_))));
    }

    #[test]
    fn exclusion_step_returns_three_screens() {
        let mut record = PatientRecord::empty("p");
        record.biochemistry.ohp_17 = Some(LabValue::new(250.0, "ng/dL"));
        record.biochemistry.tsh = Some(LabValue::new(2.0, "mIU/L"));
        record.biochemistry.prolactin = Some(LabValue::new(10.0, "ng/mL"));
        let prompt = assemble_prompt(
            AgentRole::Exclusion,
            WorkflowStep::Exclusion,
            &slice_for_step(&record, WorkflowStep::Exclusion),
            &ThresholdConfig::default(),
            &RetrievalResult::default(),
            true,
        )
        .unwrap();
        let reply = oracle().complete(&prompt).unwrap();
        let schema = ReplySchema::for_step(WorkflowStep::Exclusion).unwrap();
        let parsed = parse_reply(&reply.raw, &schema).unwrap();
        assert_eq!(parsed.criteria[0].status, CriterionStatus::Yes, "NCCAH suspected");
        assert_eq!(parsed.criteria[1].status, CriterionStatus::No);
        assert_eq!(parsed.criteria[2].status, CriterionStatus::No);
    }

    #[test]
    fn record_extraction_finds_cycles_and_fg() {
        let (record, evidence) =
            extract_record_fields("Patient reports cycles every 24–40 days, FG score 6.");
        assert_eq!(record["menstrual"]["typical_cycle_min_days"], json!(24));
        assert_eq!(record["menstrual"]["typical_cycle_max_days"], json!(40));
        assert_eq!(record["clinical_signs"]["ferriman_gallwey_score"], json!(6));
        assert!(evidence["menstrual.typical_cycle_min_days"]
            .as_str()
            .unwrap()
            .contains("24–40 days"));
    }

    #[test]
    fn record_extraction_of_nondiagnostic_note_is_empty() {
        let (record, evidence) = extract_record_fields("patient anxious");
        assert_eq!(record, json!({}));
        assert_eq!(evidence, json!({}));
    }

    #[test]
    fn find_term_respects_word_boundaries() {
        assert!(find_term("elevated prolactin level", "prolactin").is_some());
        assert!(find_term("hyperprolactinemia", "prolactin").is_none());
    }

    #[test]
    fn sentences_split_on_terminal_punctuation() {
        let s = split_sentences("First rule. Second rule applies? Third.");
        assert_eq!(s.len(), 3);
        assert!(s[1].2.contains("Second rule"));
    }
}
