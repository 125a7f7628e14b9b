//! Agent roles, prompt assembly and structured-reply parsing.
//!
//! Prompts follow the Role–Guideline–Task–Constraint paradigm: five sections
//! rendered in a fixed order, with every threshold number coming from the
//! active [`ThresholdConfig`](crate::rules::ThresholdConfig) — never from
//! hard-coded text — and retrieved knowledge injected with its citations.

mod backend;
mod remote;
mod replay;
mod rule_oracle;
pub mod scripted;
mod slices;

pub use backend::{AgentBackend, BackendDescriptor, BackendError, BackendKind, BackendReply, Usage};
pub use remote::{live_call_count, RemoteBackend, RemoteConfig};
pub use replay::{Cassette, CassetteEntry, RecordingBackend, ReplayBackend};
pub use rule_oracle::RuleOracleBackend;
pub use slices::{slice_for_step, validate_slice};

use serde::{Deserialize, Serialize};

use crate::canon;
use crate::kg::RetrievalResult;
use crate::rules::{CriterionId, CriterionStatus, ThresholdConfig};

/// The specialist roles of the diagnostic session.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AgentRole {
    Coordinator,
    GynecologicalEndocrine,
    Radiology,
    Exclusion,
    Reporting,
    Extraction,
}

impl AgentRole {
    pub fn preamble(self) -> &'static str {
        match self {
            AgentRole::Coordinator => {
                "You are the coordinating clinician of a structured diagnostic session. \
                 You route tasks to specialists and never diagnose directly."
            }
            AgentRole::GynecologicalEndocrine => {
                "You are a senior consultant gynecological endocrinologist. \
                 You assess structured patient data strictly against the diagnostic rules provided below."
            }
            AgentRole::Radiology => {
                "You are a consultant radiologist specializing in gynecological ultrasound. \
                 You assess imaging findings strictly against the thresholds provided below."
            }
            AgentRole::Exclusion => {
                "You are a differential-diagnosis specialist acting as the diagnostic safety gatekeeper. \
                 You rule mimicking conditions in or out strictly from laboratory evidence."
            }
            AgentRole::Reporting => {
                "You are the reporting clinician. You synthesize completed findings into a final \
                 structured report without re-evaluating them."
            }
            AgentRole::Extraction => {
                "You are a clinical data abstractor. You extract structured fields from narrative \
                 text without inferring values that are not stated."
            }
        }
    }
}

/// The steps a backend can be asked to complete.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum WorkflowStep {
    /// Irregular cycles and clinical hyperandrogenism.
    #[serde(rename = "step1")]
    Step1Clinical,
    /// Biochemical hyperandrogenism.
    #[serde(rename = "step2")]
    Step2Biochemical,
    /// Polycystic ovarian morphology.
    #[serde(rename = "step3")]
    Step3Imaging,
    #[serde(rename = "exclusion")]
    Exclusion,
    #[serde(rename = "report")]
    Reporting,
    #[serde(rename = "extract_record")]
    RecordExtraction,
    #[serde(rename = "extract_entities")]
    EntityExtraction,
    #[serde(rename = "extract_relations")]
    RelationExtraction,
}

impl WorkflowStep {
    pub fn agent_role(self) -> AgentRole {
        match self {
            WorkflowStep::Step1Clinical | WorkflowStep::Step2Biochemical => {
                AgentRole::GynecologicalEndocrine
            }
            WorkflowStep::Step3Imaging => AgentRole::Radiology,
            WorkflowStep::Exclusion => AgentRole::Exclusion,
            WorkflowStep::Reporting => AgentRole::Reporting,
            WorkflowStep::RecordExtraction
            | WorkflowStep::EntityExtraction
            | WorkflowStep::RelationExtraction => AgentRole::Extraction,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            WorkflowStep::Step1Clinical => "step1",
            WorkflowStep::Step2Biochemical => "step2",
            WorkflowStep::Step3Imaging => "step3",
            WorkflowStep::Exclusion => "exclusion",
            WorkflowStep::Reporting => "report",
            WorkflowStep::RecordExtraction => "extract_record",
            WorkflowStep::EntityExtraction => "extract_entities",
            WorkflowStep::RelationExtraction => "extract_relations",
        }
    }
}

/// Marker separating the task instruction from the serialized payload
/// inside the task-input section. The rule oracle and extraction parsers
/// rely on it to recover the payload from a rendered prompt.
pub const TASK_PAYLOAD_MARKER: &str = "Payload JSON: ";

/// A fully assembled prompt. Rendering is deterministic; the canonical hash
/// of the rendering keys replay cassettes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptSpec {
    pub role: AgentRole,
    pub step: WorkflowStep,
    pub role_preamble: String,
    pub task_input: String,
    pub static_guidelines: String,
    pub injected_knowledge: String,
    pub output_schema: String,
}

impl PromptSpec {
    /// Render the five sections in the fixed order
    /// Role → Task → Guidelines → Knowledge → Constraint. The knowledge
    /// section may be empty but its header is always emitted.
    pub fn render(&self) -> String {
        format!(
            "[SYSTEM ROLE]\n{}\n\n[TASK INPUT]\n{}\n\n[DIAGNOSTIC GUIDELINES (Static Rules)]\n{}\n\n[KNOWLEDGE BASE INFORMATION (Dynamic Injection)]\n{}\n\n[OUTPUT CONSTRAINT]\n{}\n",
            self.role_preamble,
            self.task_input,
            self.static_guidelines,
            self.injected_knowledge,
            self.output_schema
        )
    }

    /// Canonical hash of the rendering; the cassette key.
    pub fn hash(&self) -> String {
        canon::sha256_hex(self.render().as_bytes())
    }

    /// Serialized payload portion of the task input, when present.
    pub fn task_payload(&self) -> Option<&str> {
        self.task_input.split(TASK_PAYLOAD_MARKER).nth(1)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum PromptError {
    #[error("strict slice violation for {step:?}: {detail}")]
    SliceViolation { step: WorkflowStep, detail: String },
}

/// Expected reply schema for one step: ordered output keys mapped to the
/// criteria they carry.
#[derive(Debug, Clone, Copy)]
pub struct ReplySchema {
    pub step: WorkflowStep,
    pub keys: &'static [(&'static str, CriterionId)],
}

impl ReplySchema {
    pub fn for_step(step: WorkflowStep) -> Option<ReplySchema> {
        let keys: &'static [(&'static str, CriterionId)] = match step {
            WorkflowStep::Step1Clinical => &[
                ("Irregular_cycles", CriterionId::IrregularCycles),
                ("Clinical_hyperandrogenism", CriterionId::ClinicalHyperandrogenism),
            ],
            WorkflowStep::Step2Biochemical => {
                &[("Biochemical_hyperandrogenism", CriterionId::BiochemicalHyperandrogenism)]
            }
            WorkflowStep::Step3Imaging => &[("PCOM", CriterionId::Pcom)],
            WorkflowStep::Exclusion => &[
                ("NCCAH", CriterionId::ExclusionNccah),
                ("Thyroid_dysfunction", CriterionId::ExclusionThyroid),
                ("Hyperprolactinemia", CriterionId::ExclusionProlactin),
            ],
            _ => return None,
        };
        Some(ReplySchema { step, keys })
    }

    /// JSON skeleton rendered into the output-constraint section.
    pub fn render_constraint(&self) -> String {
        let mut out = String::from("Output a single JSON object with exactly these keys:\n{\n");
        for (i, (key, _)) in self.keys.iter().enumerate() {
            let comma = if i + 1 < self.keys.len() { "," } else { "" };
            out.push_str(&format!(
                "  \"{key}\": {{\"status\": \"Yes|No|Uncertain\", \"reasoning\": \"...\"}}{comma}\n"
            ));
        }
        out.push('}');
        out
    }
}

/// One criterion verdict inside a parsed reply.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplyCriterion {
    pub key: String,
    pub criterion_id: CriterionId,
    pub status: CriterionStatus,
    pub reasoning: String,
}

/// A structured reply after parsing and (at most syntactic) repair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentReply {
    pub criteria: Vec<ReplyCriterion>,
    /// Repairs applied and schema notes, for audit.
    pub parse_diagnostics: Vec<String>,
}

#[derive(Debug, thiserror::Error)]
pub enum ReplyError {
    #[error("reply is not valid JSON after repair: {0}")]
    Json(String),
    #[error("reply is not a JSON object")]
    NotAnObject,
    #[error("required key {0:?} missing from reply")]
    MissingKey(String),
    #[error("unexpected key {0:?} in reply")]
    UnexpectedKey(String),
    #[error("key {key:?}: status {status:?} is not one of Yes/No/Uncertain")]
    InvalidStatus { key: String, status: String },
    #[error("key {key:?}: {detail}")]
    MalformedCriterion { key: String, detail: String },
}

/// Render the static diagnostic rules for a step from the threshold config.
pub fn static_guidelines(step: WorkflowStep, cfg: &ThresholdConfig) -> String {
    match step {
        WorkflowStep::Step1Clinical => format!(
            "- Irregular cycles: more than {gate} years post-menarche, cycles are irregular if \
             shorter than {short} days or longer than {long} days, or fewer than {per_year} \
             cycles per year. Any single cycle longer than {single} days is irregular.\n\
             - Clinical hyperandrogenism: primary criterion is hirsutism with a Ferriman-Gallwey \
             score of {fg} or more. Acne or androgenic alopecia are secondary signs, weak when \
             isolated: alone they justify Uncertain, never Yes.",
            gate = trim_f64(cfg.post_menarche_years_gate),
            short = cfg.cycle_short_days,
            long = cfg.cycle_long_days,
            per_year = cfg.min_cycles_per_year,
            single = cfg.single_cycle_irregular_days,
            fg = cfg.fg_cutoff,
        ),
        WorkflowStep::Step2Biochemical => {
            let mut lines = vec![
                "- Biochemical hyperandrogenism is met when any androgen marker strictly exceeds \
                 its upper cutoff:"
                    .to_string(),
            ];
            for (name, cutoff) in [
                ("free testosterone", &cfg.free_testosterone_upper),
                ("total testosterone", &cfg.total_testosterone_upper),
                ("free androgen index", &cfg.fai_upper),
                ("DHEA-S", &cfg.dheas_upper),
            ] {
                if let Some(c) = cutoff {
                    lines.push(format!("  - {name}: upper cutoff {} {}", trim_f64(c.value), c.unit));
                }
            }
            lines.push(
                "- All markers present and within range rules the criterion out; a missing \
                 marker leaves it Uncertain."
                    .to_string(),
            );
            lines.join("\n")
        }
        WorkflowStep::Step3Imaging => format!(
            "- Polycystic ovarian morphology is met when either ovary shows a follicle count of \
             {fnpo} or more, or an ovarian volume of {vol} mL or more (inclusive thresholds, \
             either ovary suffices).",
            fnpo = cfg.follicle_count_per_ovary_min,
            vol = trim_f64(cfg.ovarian_volume_ml_min),
        ),
        WorkflowStep::Exclusion => {
            let mut lines = vec![
                "- Screen the differentials; Yes means the excluding condition is suspected:"
                    .to_string(),
            ];
            if let Some(c) = &cfg.ohp17_upper {
                lines.push(format!(
                    "  - NCCAH: 17-hydroxyprogesterone strictly above {} {}",
                    trim_f64(c.value),
                    c.unit
                ));
            }
            if let (Some(lo), Some(hi)) = (&cfg.tsh_lower, &cfg.tsh_upper) {
                lines.push(format!(
                    "  - Thyroid dysfunction: TSH outside [{}, {}] {}",
                    trim_f64(lo.value),
                    trim_f64(hi.value),
                    hi.unit
                ));
            }
            if let Some(c) = &cfg.prolactin_upper {
                lines.push(format!(
                    "  - Hyperprolactinemia: prolactin strictly above {} {}",
                    trim_f64(c.value),
                    c.unit
                ));
            }
            lines.push("- A missing lab leaves that screen Uncertain.".to_string());
            lines.join("\n")
        }
        _ => String::new(),
    }
}

fn trim_f64(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v}")
    }
}

/// Render retrieved knowledge with citations for prompt injection.
pub fn render_knowledge(knowledge: &RetrievalResult) -> String {
    let mut out = String::new();
    for item in &knowledge.items {
        let citations: Vec<String> = item
            .citations
            .iter()
            .map(|c| format!("{}#{}", c.doc_id, c.chunk_id))
            .collect();
        out.push_str(&format!(
            "- {} (score {:.4}): {} [cited: {}]\n",
            item.entity_id,
            item.score,
            item.context,
            citations.join(", ")
        ));
    }
    out.trim_end().to_string()
}

/// Per-step task instruction line.
fn task_instruction(step: WorkflowStep) -> &'static str {
    match step {
        WorkflowStep::Step1Clinical => {
            "Assess irregular menstrual cycles and clinical hyperandrogenism from the patient \
             slice below. This is one step of a two-of-three criteria evaluation, not the \
             definitive diagnosis."
        }
        WorkflowStep::Step2Biochemical => {
            "Assess biochemical hyperandrogenism from the androgen panel below."
        }
        WorkflowStep::Step3Imaging => {
            "Assess polycystic ovarian morphology from the ultrasound findings below."
        }
        WorkflowStep::Exclusion => {
            "Screen the differential diagnoses from the laboratory panel below before any \
             positive diagnosis is confirmed."
        }
        WorkflowStep::Reporting => "Synthesize the completed findings below into a report.",
        WorkflowStep::RecordExtraction => {
            "Extract structured patient fields from the narrative note below. Mark anything not \
             explicitly stated as absent."
        }
        WorkflowStep::EntityExtraction => {
            "Extract entities from the chunk below. Every entity name must appear verbatim in \
             the chunk text and its type must come from the ontology."
        }
        WorkflowStep::RelationExtraction => {
            "Extract directed relations strictly between the listed entities, strictly within \
             this chunk."
        }
    }
}

/// Assemble a diagnosis-step prompt from a patient slice.
///
/// In strict mode the slice is validated against the step's declared field
/// set first — data minimization is the coordinator's job, and this is the
/// assertion that it happened.
pub fn assemble_prompt(
    role: AgentRole,
    step: WorkflowStep,
    patient_slice: &serde_json::Value,
    cfg: &ThresholdConfig,
    knowledge: &RetrievalResult,
    strict: bool,
) -> Result<PromptSpec, PromptError> {
    if strict {
        validate_slice(step, patient_slice)?;
    }
    let schema = ReplySchema::for_step(step);
    Ok(PromptSpec {
        role,
        step,
        role_preamble: role.preamble().to_string(),
        task_input: format!(
            "{}\n{}{}",
            task_instruction(step),
            TASK_PAYLOAD_MARKER,
            canon::to_canonical_json(patient_slice)
        ),
        static_guidelines: static_guidelines(step, cfg),
        injected_knowledge: render_knowledge(knowledge),
        output_schema: schema
            .map(|s| s.render_constraint())
            .unwrap_or_else(|| "Output a single JSON object.".to_string()),
    })
}

/// Assemble an extraction-family prompt around an arbitrary payload.
pub fn assemble_extraction_prompt(
    step: WorkflowStep,
    payload: &serde_json::Value,
    guidelines: String,
    output_schema: String,
) -> PromptSpec {
    let role = step.agent_role();
    PromptSpec {
        role,
        step,
        role_preamble: role.preamble().to_string(),
        task_input: format!(
            "{}\n{}{}",
            task_instruction(step),
            TASK_PAYLOAD_MARKER,
            canon::to_canonical_json(payload)
        ),
        static_guidelines: guidelines,
        injected_knowledge: String::new(),
        output_schema,
    }
}

/// Parse a raw backend reply against the step's expected schema.
///
/// Repair is limited to two syntactic fixes — stripping markdown code
/// fences and removing trailing commas — each logged in the diagnostics.
/// Anything semantic (wrong keys, out-of-set statuses) is an error for the
/// caller's retry policy to handle.
pub fn parse_reply(raw: &str, schema: &ReplySchema) -> Result<AgentReply, ReplyError> {
    let mut diagnostics = Vec::new();
    let mut text = raw.trim().to_string();

    if text.starts_with("```") {
        if let Some(stripped) = strip_code_fences(&text) {
            text = stripped;
            diagnostics.push("stripped markdown code fences".to_string());
        }
    }

    let (without_commas, removed) = remove_trailing_commas(&text);
    if removed > 0 {
        text = without_commas;
        diagnostics.push(format!("removed {removed} trailing comma(s)"));
    }

    let value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| ReplyError::Json(e.to_string()))?;
    let object = value.as_object().ok_or(ReplyError::NotAnObject)?;

    for key in object.keys() {
        if !schema.keys.iter().any(|(k, _)| k == key) {
            return Err(ReplyError::UnexpectedKey(key.clone()));
        }
    }

    let mut criteria = Vec::new();
    for (key, criterion_id) in schema.keys {
        let entry = object.get(*key).ok_or_else(|| ReplyError::MissingKey(key.to_string()))?;
        let entry = entry.as_object().ok_or_else(|| ReplyError::MalformedCriterion {
            key: key.to_string(),
            detail: "value is not an object".to_string(),
        })?;
        let status_raw =
            entry.get("status").and_then(|v| v.as_str()).ok_or_else(|| {
                ReplyError::MalformedCriterion {
                    key: key.to_string(),
                    detail: "missing string field \"status\"".to_string(),
                }
            })?;
        let status = CriterionStatus::parse(status_raw).ok_or_else(|| ReplyError::InvalidStatus {
            key: key.to_string(),
            status: status_raw.to_string(),
        })?;
        if !status_raw.trim().eq(status.as_str()) {
            diagnostics.push(format!("canonicalized status {status_raw:?} for {key}"));
        }
        let reasoning = entry.get("reasoning").and_then(|v| v.as_str()).ok_or_else(|| {
            ReplyError::MalformedCriterion {
                key: key.to_string(),
                detail: "missing string field \"reasoning\"".to_string(),
            }
        })?;
        criteria.push(ReplyCriterion {
            key: key.to_string(),
            criterion_id: *criterion_id,
            status,
            reasoning: reasoning.to_string(),
        });
    }

    Ok(AgentReply { criteria, parse_diagnostics: diagnostics })
}

fn strip_code_fences(text: &str) -> Option<String> {
    let mut lines: Vec<&str> = text.lines().collect();
    if lines.len() < 2 || !lines[0].trim_start().starts_with("```") {
        return None;
    }
    if lines.last().map(|l| l.trim()) == Some("```") {
        lines.pop();
        lines.remove(0);
        return Some(lines.join("\n"));
    }
    None
}

/// Remove commas that immediately precede a closing brace/bracket,
/// respecting string literals. Returns the cleaned text and removal count.
fn remove_trailing_commas(text: &str) -> (String, usize) {
    let chars: Vec<char> = text.chars().collect();
    let mut out = String::with_capacity(text.len());
    let mut removed = 0usize;
    let mut in_string = false;
    let mut escaped = false;
    for (i, &c) in chars.iter().enumerate() {
        if in_string {
            out.push(c);
            if escaped {
                escaped = false;
            } else if c == '\\' {
                escaped = true;
            } else if c == '"' {
                in_string = false;
            }
            continue;
        }
        match c {
            '"' => {
                in_string = true;
                out.push(c);
            }
            ',' => {
                let mut j = i + 1;
                while j < chars.len() && chars[j].is_whitespace() {
                    j += 1;
                }
                if j < chars.len() && (chars[j] == '}' || chars[j] == ']') {
                    removed += 1;
                } else {
                    out.push(c);
                }
            }
            _ => out.push(c),
        }
    }
    (out, removed)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn step1_schema() -> ReplySchema {
        ReplySchema::for_step(WorkflowStep::Step1Clinical).unwrap()
    }

    fn valid_reply() -> String {
        r#"{
            "Irregular_cycles": {"status": "Yes", "reasoning": "cycle 40 > 35"},
            "Clinical_hyperandrogenism": {"status": "No", "reasoning": "FG 1, no signs"}
        }"#
        .to_string()
    }

    #[test]
    fn exact_schema_parses_cleanly() {
        let reply = parse_reply(&valid_reply(), &step1_schema()).unwrap();
        assert!(reply.parse_diagnostics.is_empty());
        assert_eq!(reply.criteria[0].status, CriterionStatus::Yes);
        assert_eq!(reply.criteria[1].criterion_id, CriterionId::ClinicalHyperandrogenism);
    }

    #[test]
    fn code_fences_are_repaired_and_logged() {
        let fenced = format!("```json\n{}\n```", valid_reply());
        let reply = parse_reply(&fenced, &step1_schema()).unwrap();
        assert_eq!(reply.parse_diagnostics, vec!["stripped markdown code fences"]);
    }

    #[test]
    fn trailing_commas_are_repaired_and_logged() {
        let raw = r#"{
            "Irregular_cycles": {"status": "Yes", "reasoning": "r",},
            "Clinical_hyperandrogenism": {"status": "No", "reasoning": "r"},
        }"#;
        let reply = parse_reply(raw, &step1_schema()).unwrap();
        assert_eq!(reply.parse_diagnostics, vec!["removed 2 trailing comma(s)"]);
    }

    #[test]
    fn out_of_set_status_is_an_error() {
        let raw = r#"{
            "Irregular_cycles": {"status": "maybe", "reasoning": "r"},
            "Clinical_hyperandrogenism": {"status": "No", "reasoning": "r"}
        }"#;
        assert!(matches!(
            parse_reply(raw, &step1_schema()),
            Err(ReplyError::InvalidStatus { .. })
        ));
    }

    #[test]
    fn missing_and_extra_keys_are_errors() {
        let missing = r#"{"Irregular_cycles": {"status": "Yes", "reasoning": "r"}}"#;
        assert!(matches!(parse_reply(missing, &step1_schema()), Err(ReplyError::MissingKey(_))));
        let extra = format!(
            r#"{{"Irregular_cycles": {{"status": "Yes", "reasoning": "r"}},
                "Clinical_hyperandrogenism": {{"status": "No", "reasoning": "r"}},
                "Bonus": {{"status": "Yes", "reasoning": "r"}}}}"#
        );
        assert!(matches!(parse_reply(&extra, &step1_schema()), Err(ReplyError::UnexpectedKey(_))));
    }

    #[test]
    fn statuses_canonicalize_case_insensitively() {
        let raw = r#"{
            "Irregular_cycles": {"status": "YES", "reasoning": "r"},
            "Clinical_hyperandrogenism": {"status": "uncertain", "reasoning": "r"}
        }"#;
        let reply = parse_reply(raw, &step1_schema()).unwrap();
        assert_eq!(reply.criteria[0].status, CriterionStatus::Yes);
        assert_eq!(reply.criteria[1].status, CriterionStatus::Uncertain);
        assert_eq!(reply.parse_diagnostics.len(), 2);
    }

    #[test]
    fn commas_inside_strings_survive_repair() {
        let raw = r#"{
            "Irregular_cycles": {"status": "Yes", "reasoning": "short, then long,"},
            "Clinical_hyperandrogenism": {"status": "No", "reasoning": "a, b"}
        }"#;
        let reply = parse_reply(raw, &step1_schema()).unwrap();
        assert_eq!(reply.criteria[0].reasoning, "short, then long,");
    }

    #[test]
    fn rendering_is_deterministic_and_ordered() {
        let cfg = ThresholdConfig::default();
        let record = crate::patient::PatientRecord::empty("p");
        let slice = slice_for_step(&record, WorkflowStep::Step1Clinical);
        let a = assemble_prompt(
            AgentRole::GynecologicalEndocrine,
            WorkflowStep::Step1Clinical,
            &slice,
            &cfg,
            &RetrievalResult::default(),
            true,
        )
        .unwrap();
        let b = assemble_prompt(
            AgentRole::GynecologicalEndocrine,
            WorkflowStep::Step1Clinical,
            &slice,
            &cfg,
            &RetrievalResult::default(),
            true,
        )
        .unwrap();
        assert_eq!(a.render(), b.render());
        assert_eq!(a.hash(), b.hash());

        let rendered = a.render();
        let role_pos = rendered.find("[SYSTEM ROLE]").unwrap();
        let task_pos = rendered.find("[TASK INPUT]").unwrap();
        let guide_pos = rendered.find("[DIAGNOSTIC GUIDELINES (Static Rules)]").unwrap();
        let knowledge_pos = rendered.find("[KNOWLEDGE BASE INFORMATION (Dynamic Injection)]").unwrap();
        let constraint_pos = rendered.find("[OUTPUT CONSTRAINT]").unwrap();
        assert!(role_pos < task_pos && task_pos < guide_pos);
        assert!(guide_pos < knowledge_pos && knowledge_pos < constraint_pos);
    }

    #[test]
    fn guideline_numbers_come_from_config() {
        let mut cfg = ThresholdConfig::default();
        cfg.cycle_long_days = 42;
        let text = static_guidelines(WorkflowStep::Step1Clinical, &cfg);
        assert!(text.contains("longer than 42 days"), "{text}");
        assert!(!text.contains("35"), "stale hard-coded threshold: {text}");
    }
}
