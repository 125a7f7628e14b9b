//! The diagnostic state machine.
//!
//! Phase 1 walks the Rotterdam steps in order, skipping everything the gate
//! has already decided: step 2 only runs when step 1 did not confirm
//! candidacy, step 3 only when candidacy is still undecided *and* the
//! two-of-three threshold is still reachable. Phase 2 (exclusion) runs only
//! for candidates, and a confirmed outcome is impossible without it.

use crate::agent::{
    assemble_prompt, parse_reply, slice_for_step, AgentBackend, BackendError, PromptSpec,
    ReplySchema, Usage, WorkflowStep,
};
use crate::kg::{u_retrieve, EmbeddingBackend, KnowledgeGraph, RetrievalParams, RetrievalResult};
use crate::patient::PatientRecord;
use crate::report::{generate_report, DiagnosticReport};
use crate::rules::{missing_inputs, relevant_inputs, CriterionId, CriterionResult, CriterionStatus, ThresholdConfig};

use super::audit::{AuditEvent, AuditSink};
use super::{
    DiagnosisOutcome, ExclusionCause, StepExecution, UncertainPolicy, WorkflowError, WorkflowState,
};

/// Shared, read-only dependencies of a diagnostic session.
pub struct RunContext<'a> {
    pub kg: &'a KnowledgeGraph,
    pub backend: &'a dyn AgentBackend,
    pub embedder: &'a dyn EmbeddingBackend,
    pub cfg: &'a ThresholdConfig,
    pub policy: UncertainPolicy,
    pub retrieval: RetrievalParams,
    pub audit: &'a dyn AuditSink,
}

/// A finished session: deterministic state plus the synthesized report.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct DiagnosisRun {
    pub state: WorkflowState,
    pub report: DiagnosticReport,
}

/// Two-of-three Rotterdam gate. Hyperandrogenism counts once, whether
/// established clinically or biochemically. Uncertain never counts as met —
/// under either policy; strictness changes the outcome classification, not
/// the gate.
pub fn gate_two_of_three(
    cycles: CriterionStatus,
    clinical: CriterionStatus,
    biochemical: CriterionStatus,
    pcom: CriterionStatus,
    _policy: UncertainPolicy,
) -> bool {
    let hyperandrogenism = clinical.is_met() || biochemical.is_met();
    let met = [cycles.is_met(), hyperandrogenism, pcom.is_met()];
    met.iter().filter(|m| **m).count() >= 2
}

/// True when no assignment of Yes to the not-yet-evaluated criteria can
/// make the gate pass. Evaluated criteria keep their status; only missing
/// evaluations are upgraded to the best case.
pub fn should_terminate_early(state: &WorkflowState) -> bool {
    let best_case = |criterion: CriterionId| {
        state.status_of(criterion).unwrap_or(CriterionStatus::Yes)
    };
    !gate_two_of_three(
        best_case(CriterionId::IrregularCycles),
        best_case(CriterionId::ClinicalHyperandrogenism),
        best_case(CriterionId::BiochemicalHyperandrogenism),
        best_case(CriterionId::Pcom),
        state.policy,
    )
}

fn gate_from_state(state: &WorkflowState) -> bool {
    gate_two_of_three(
        state.gate_status(CriterionId::IrregularCycles),
        state.gate_status(CriterionId::ClinicalHyperandrogenism),
        state.gate_status(CriterionId::BiochemicalHyperandrogenism),
        state.gate_status(CriterionId::Pcom),
        state.policy,
    )
}

fn step_query(step: WorkflowStep) -> &'static str {
    match step {
        WorkflowStep::Step1Clinical => {
            "definition of irregular menstrual cycles and clinical hyperandrogenism criteria"
        }
        WorkflowStep::Step2Biochemical => "biochemical hyperandrogenism androgen marker thresholds",
        WorkflowStep::Step3Imaging => {
            "polycystic ovarian morphology follicle count and ovarian volume thresholds"
        }
        WorkflowStep::Exclusion => {
            "exclusion of NCCAH thyroid dysfunction and hyperprolactinemia"
        }
        _ => "diagnostic assessment",
    }
}

/// Derive the deterministic session id from everything that shapes the run.
fn session_id(record: &PatientRecord, ctx: &RunContext<'_>) -> String {
    let material = format!(
        "{}|{}|{}|{}|{}|{}|{}",
        crate::canon::sha256_hex(&record.canonical_bytes()),
        ctx.cfg.hash(),
        ctx.kg.manifest_hash(),
        ctx.backend.descriptor().id,
        ctx.policy.as_str(),
        ctx.retrieval.k,
        ctx.retrieval.min_score,
    );
    format!("s-{}", &crate::canon::sha256_hex(material.as_bytes())[..24])
}

struct SessionRunner<'a, 'b> {
    record: &'a PatientRecord,
    ctx: &'a RunContext<'b>,
    state: WorkflowState,
    risk_flags: Vec<String>,
}

impl<'a, 'b> SessionRunner<'a, 'b> {
    fn audit(&self, event: AuditEvent) {
        self.ctx.audit.record(event);
    }

    fn retrieve_for(&mut self, step: WorkflowStep) -> RetrievalResult {
        if self.ctx.kg.is_empty() || self.ctx.retrieval.k == 0 {
            return RetrievalResult::default();
        }
        match u_retrieve(step_query(step), self.ctx.kg, self.ctx.embedder, self.ctx.retrieval.k) {
            Ok(result) => result,
            Err(error) => {
                // Retrieval failures degrade to an empty knowledge section
                // rather than aborting a clinical session.
                log::warn!("retrieval degraded for {step:?}: {error}");
                self.risk_flags.push(format!("retrieval_degraded:{}", step.as_str()));
                self.audit(
                    AuditEvent::new(&self.state.session_id, "retrieval_degraded").with_step(step),
                );
                RetrievalResult::default()
            }
        }
    }

    fn complete_logged(
        &mut self,
        step: WorkflowStep,
        prompt: &PromptSpec,
    ) -> Result<crate::agent::BackendReply, WorkflowError> {
        match self.ctx.backend.complete(prompt) {
            Ok(reply) => {
                let seq = self.state.steps_executed.len() as u64;
                self.state.steps_executed.push(StepExecution {
                    step,
                    agent_role: prompt.role,
                    seq,
                    usage: reply.usage,
                });
                self.audit(
                    AuditEvent::new(&self.state.session_id, "agent_call")
                        .with_step(step)
                        .with_payload_hash(prompt.hash())
                        .with_usage(reply.usage),
                );
                Ok(reply)
            }
            Err(source) => {
                self.audit(
                    AuditEvent::new(&self.state.session_id, "backend_error").with_step(step),
                );
                Err(WorkflowError::Backend {
                    step,
                    source,
                    state: Box::new(self.state.clone()),
                })
            }
        }
    }

    /// One agent call: retrieve knowledge, assemble the minimal prompt,
    /// complete, parse — with a single deterministic retry carrying a
    /// schema reminder when the reply does not parse.
    fn call_step(&mut self, step: WorkflowStep) -> Result<Vec<CriterionResult>, WorkflowError> {
        let knowledge = self.retrieve_for(step);
        let slice = slice_for_step(self.record, step);
        let role = step.agent_role();
        let prompt = assemble_prompt(role, step, &slice, self.ctx.cfg, &knowledge, true)?;
        let schema = ReplySchema::for_step(step).expect("diagnosis steps have schemas");

        let reply = self.complete_logged(step, &prompt)?;
        let parsed = match parse_reply(&reply.raw, &schema) {
            Ok(parsed) => parsed,
            Err(first_error) => {
                let mut reminder = prompt.clone();
                reminder
                    .output_schema
                    .push_str("\nReturn only the JSON object — no prose, no code fences.");
                let retry = self.complete_logged(step, &reminder)?;
                match parse_reply(&retry.raw, &schema) {
                    Ok(parsed) => parsed,
                    Err(_) => {
                        return Err(WorkflowError::Reply {
                            step,
                            source: first_error,
                            state: Box::new(self.state.clone()),
                        })
                    }
                }
            }
        };

        let mut evidence: Vec<String> = knowledge
            .items
            .iter()
            .flat_map(|item| item.citations.iter().map(|c| c.chunk_id.clone()))
            .collect();
        evidence.sort();
        evidence.dedup();

        let present = self.record.present_field_paths();
        let results = parsed
            .criteria
            .into_iter()
            .map(|c| CriterionResult {
                criterion_id: c.criterion_id,
                status: c.status,
                reasoning: c.reasoning,
                evidence: evidence.clone(),
                inputs_used: relevant_inputs(c.criterion_id)
                    .iter()
                    .filter(|path| present.contains(path))
                    .map(|path| path.to_string())
                    .collect(),
            })
            .collect();
        Ok(results)
    }

    fn record_results(&mut self, results: Vec<CriterionResult>) {
        for result in results {
            self.state.step_results.insert(result.criterion_id, result);
        }
    }

    /// Missing-field list behind the strict policy's INDETERMINATE: per
    /// Uncertain criterion, its absent inputs, or an `unresolved:` marker
    /// when the uncertainty is inherent rather than data-driven.
    fn indeterminate_missing(&self, criteria: &[CriterionId]) -> Vec<String> {
        let mut missing = Vec::new();
        for criterion in criteria {
            if self.state.status_of(*criterion) == Some(CriterionStatus::Uncertain) {
                let absent = missing_inputs(*criterion, self.record);
                if absent.is_empty() {
                    missing.push(format!("unresolved:{}", criterion.as_str()));
                } else {
                    missing.extend(absent);
                }
            }
        }
        missing.sort();
        missing.dedup();
        missing
    }

    fn classify_negative(&self) -> DiagnosisOutcome {
        if self.state.policy == UncertainPolicy::Strict {
            let upgraded = |criterion: CriterionId| match self.state.status_of(criterion) {
                Some(CriterionStatus::Uncertain) | None => CriterionStatus::Yes,
                Some(status) => status,
            };
            let decisive = gate_two_of_three(
                upgraded(CriterionId::IrregularCycles),
                upgraded(CriterionId::ClinicalHyperandrogenism),
                upgraded(CriterionId::BiochemicalHyperandrogenism),
                upgraded(CriterionId::Pcom),
                self.state.policy,
            );
            if decisive {
                let missing = self.indeterminate_missing(&CriterionId::ROTTERDAM);
                if !missing.is_empty() {
                    return DiagnosisOutcome::Indeterminate { missing };
                }
            }
        }
        DiagnosisOutcome::PcosExcluded
    }
}

/// Outcome of the mandatory exclusion phase.
#[derive(Debug, Clone, PartialEq)]
pub struct ExclusionOutcome {
    pub results: Vec<CriterionResult>,
    /// All screens returned No.
    pub passed: bool,
    /// Screens that fired, in fixed priority order.
    pub triggered: Vec<ExclusionCause>,
    /// Screens left Uncertain by missing labs.
    pub unexcluded: Vec<ExclusionCause>,
}

/// Run the exclusion phase against a candidate session, recording the agent
/// call into the state. Precondition: `state.candidate` is true.
pub fn run_exclusion_phase(
    record: &PatientRecord,
    ctx: &RunContext<'_>,
    state: &mut WorkflowState,
) -> Result<ExclusionOutcome, WorkflowError> {
    debug_assert!(state.candidate, "exclusion phase requires candidacy");
    let mut runner = SessionRunner {
        record,
        ctx,
        state: std::mem::replace(state, placeholder_state()),
        risk_flags: Vec::new(),
    };
    let outcome = runner.exclusion_phase();
    *state = runner.state;
    outcome
}

fn placeholder_state() -> WorkflowState {
    WorkflowState {
        session_id: String::new(),
        patient_id: String::new(),
        policy: UncertainPolicy::Conservative,
        step_results: Default::default(),
        steps_executed: Vec::new(),
        candidate: false,
        outcome: None,
    }
}

impl SessionRunner<'_, '_> {
    fn exclusion_phase(&mut self) -> Result<ExclusionOutcome, WorkflowError> {
        let results = self.call_step(WorkflowStep::Exclusion)?;
        self.record_results(results.clone());

        let status_of = |cause: ExclusionCause| {
            results
                .iter()
                .find(|r| r.criterion_id == cause.criterion())
                .map(|r| r.status)
                .unwrap_or(CriterionStatus::Uncertain)
        };
        let triggered: Vec<ExclusionCause> = ExclusionCause::PRIORITY
            .into_iter()
            .filter(|cause| status_of(*cause) == CriterionStatus::Yes)
            .collect();
        let unexcluded: Vec<ExclusionCause> = ExclusionCause::PRIORITY
            .into_iter()
            .filter(|cause| status_of(*cause) == CriterionStatus::Uncertain)
            .collect();
        let passed = triggered.is_empty() && unexcluded.is_empty();
        Ok(ExclusionOutcome { results, passed, triggered, unexcluded })
    }

    fn classify_exclusion(&mut self, exclusion: &ExclusionOutcome) -> DiagnosisOutcome {
        if let Some(primary) = exclusion.triggered.first() {
            for other in exclusion.triggered.iter().skip(1) {
                self.risk_flags.push(format!("also_triggered:{}", other.as_str()));
            }
            return DiagnosisOutcome::Alternative { cause: *primary };
        }
        if !exclusion.unexcluded.is_empty() {
            match self.state.policy {
                UncertainPolicy::Conservative => {
                    // Confirmed with caveats: the report flags what was not
                    // excluded.
                    for cause in &exclusion.unexcluded {
                        self.risk_flags.push(format!("unexcluded_differential:{}", cause.as_str()));
                    }
                    return DiagnosisOutcome::PcosConfirmed;
                }
                UncertainPolicy::Strict => {
                    let criteria: Vec<CriterionId> =
                        exclusion.unexcluded.iter().map(|c| c.criterion()).collect();
                    let mut missing = self.indeterminate_missing(&criteria);
                    if missing.is_empty() {
                        missing = criteria
                            .iter()
                            .map(|c| format!("unresolved:{}", c.as_str()))
                            .collect();
                    }
                    return DiagnosisOutcome::Indeterminate { missing };
                }
            }
        }
        DiagnosisOutcome::PcosConfirmed
    }
}

/// Execute the full diagnostic session.
///
/// Fail-fast preconditions: the config must validate, cover every lab
/// present in the record, and the record itself must pass its invariants.
/// Mid-run backend failures propagate with the partial state attached;
/// every executed call is already in the audit log.
pub fn run_diagnosis(
    record: &PatientRecord,
    ctx: &RunContext<'_>,
) -> Result<DiagnosisRun, WorkflowError> {
    ctx.cfg.validate()?;
    ctx.cfg.require_cutoffs_for(record)?;
    record.validate().map_err(WorkflowError::InvalidRecord)?;

    let mut runner = SessionRunner {
        record,
        ctx,
        state: WorkflowState {
            session_id: session_id(record, ctx),
            patient_id: record.patient_id.clone(),
            policy: ctx.policy,
            step_results: Default::default(),
            steps_executed: Vec::new(),
            candidate: false,
            outcome: None,
        },
        risk_flags: Vec::new(),
    };
    runner.audit(
        AuditEvent::new(&runner.state.session_id, "session_started")
            .with_payload_hash(crate::canon::sha256_hex(&record.canonical_bytes())),
    );

    // Phase 1: sequential Rotterdam assessment with conditional execution.
    let step1 = runner.call_step(WorkflowStep::Step1Clinical)?;
    runner.record_results(step1);
    runner.state.candidate = gate_from_state(&runner.state);

    if !runner.state.candidate {
        let step2 = runner.call_step(WorkflowStep::Step2Biochemical)?;
        runner.record_results(step2);
        runner.state.candidate = gate_from_state(&runner.state);

        if !runner.state.candidate {
            if should_terminate_early(&runner.state) {
                runner.audit(
                    AuditEvent::new(&runner.state.session_id, "early_termination")
                        .with_step(WorkflowStep::Step3Imaging),
                );
            } else {
                let step3 = runner.call_step(WorkflowStep::Step3Imaging)?;
                runner.record_results(step3);
                runner.state.candidate = gate_from_state(&runner.state);
            }
        }
    }

    // Phase 2: mandatory exclusion for candidates only.
    let outcome = if runner.state.candidate {
        let exclusion = runner.exclusion_phase()?;
        runner.classify_exclusion(&exclusion)
    } else {
        runner.classify_negative()
    };
    runner.state.outcome = Some(outcome);
    runner.audit(AuditEvent::new(&runner.state.session_id, "outcome_set"));

    let report = generate_report(
        &runner.state,
        record,
        ctx.cfg,
        ctx.kg,
        ctx.embedder,
        ctx.retrieval.k,
        ctx.backend.descriptor(),
        &runner.risk_flags,
    );
    runner.audit(AuditEvent::new(&runner.state.session_id, "report_generated"));

    Ok(DiagnosisRun { state: runner.state, report })
}
