//! Coordinator state machine: sequential Rotterdam assessment with
//! conditional step execution and early termination, then the mandatory
//! exclusion phase.

pub mod audit;
mod engine;

pub use audit::{AuditEvent, AuditSink, JsonLinesSink, NullSink, VecSink};
pub use engine::{
    gate_two_of_three, run_diagnosis, run_exclusion_phase, should_terminate_early, DiagnosisRun,
    ExclusionOutcome, RunContext,
};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::agent::{AgentRole, BackendError, PromptError, ReplyError, Usage, WorkflowStep};
use crate::patient::Violation;
use crate::rules::{ConfigError, CriterionId, CriterionResult, CriterionStatus};

/// How an Uncertain status on a decisive path maps into the final outcome.
///
/// Under the conservative default, Uncertain never counts toward candidacy
/// and unexcluded differentials surface as report flags. Under strict mode,
/// any Uncertain that could have changed the outcome yields
/// `INDETERMINATE` instead of a binary call.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UncertainPolicy {
    Conservative,
    Strict,
}

impl Default for UncertainPolicy {
    fn default() -> Self {
        UncertainPolicy::Conservative
    }
}

impl UncertainPolicy {
    pub fn as_str(self) -> &'static str {
        match self {
            UncertainPolicy::Conservative => "conservative",
            UncertainPolicy::Strict => "strict",
        }
    }

    /// Accepts "conservative" (alias "default") or "strict".
    pub fn parse(raw: &str) -> Option<Self> {
        match raw.trim().to_ascii_lowercase().as_str() {
            "conservative" | "default" => Some(UncertainPolicy::Conservative),
            "strict" => Some(UncertainPolicy::Strict),
            _ => None,
        }
    }
}

/// The differential that triggered an alternative diagnosis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ExclusionCause {
    #[serde(rename = "NCCAH")]
    Nccah,
    #[serde(rename = "Thyroid")]
    Thyroid,
    #[serde(rename = "Hyperprolactinemia")]
    Hyperprolactinemia,
}

impl ExclusionCause {
    /// Fixed priority order for picking the primary cause.
    pub const PRIORITY: [ExclusionCause; 3] =
        [ExclusionCause::Nccah, ExclusionCause::Thyroid, ExclusionCause::Hyperprolactinemia];

    pub fn criterion(self) -> CriterionId {
        match self {
            ExclusionCause::Nccah => CriterionId::ExclusionNccah,
            ExclusionCause::Thyroid => CriterionId::ExclusionThyroid,
            ExclusionCause::Hyperprolactinemia => CriterionId::ExclusionProlactin,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ExclusionCause::Nccah => "NCCAH",
            ExclusionCause::Thyroid => "Thyroid",
            ExclusionCause::Hyperprolactinemia => "Hyperprolactinemia",
        }
    }
}

/// Final session outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome")]
pub enum DiagnosisOutcome {
    #[serde(rename = "PCOS_CONFIRMED")]
    PcosConfirmed,
    #[serde(rename = "PCOS_EXCLUDED")]
    PcosExcluded,
    /// One primary cause by fixed priority; every triggered screen is still
    /// listed in the report's exclusion table.
    #[serde(rename = "ALTERNATIVE")]
    Alternative { cause: ExclusionCause },
    /// Strict-policy refusal to force a binary call on missing data.
    #[serde(rename = "INDETERMINATE")]
    Indeterminate { missing: Vec<String> },
}

impl DiagnosisOutcome {
    pub fn label(&self) -> String {
        match self {
            DiagnosisOutcome::PcosConfirmed => "PCOS_CONFIRMED".to_string(),
            DiagnosisOutcome::PcosExcluded => "PCOS_EXCLUDED".to_string(),
            DiagnosisOutcome::Alternative { cause } => format!("ALTERNATIVE:{}", cause.as_str()),
            DiagnosisOutcome::Indeterminate { .. } => "INDETERMINATE".to_string(),
        }
    }

    /// Outcome class without the cause/missing payload, for counting.
    pub fn class(&self) -> &'static str {
        match self {
            DiagnosisOutcome::PcosConfirmed => "PCOS_CONFIRMED",
            DiagnosisOutcome::PcosExcluded => "PCOS_EXCLUDED",
            DiagnosisOutcome::Alternative { .. } => "ALTERNATIVE",
            DiagnosisOutcome::Indeterminate { .. } => "INDETERMINATE",
        }
    }
}

/// One executed agent call. `seq` is the logical position within the
/// session, deterministic across reruns; wall-clock timing lives in the
/// audit log, not here.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepExecution {
    pub step: WorkflowStep,
    pub agent_role: AgentRole,
    pub seq: u64,
    pub usage: Usage,
}

/// Coordinator session state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkflowState {
    pub session_id: String,
    pub patient_id: String,
    pub policy: UncertainPolicy,
    pub step_results: BTreeMap<CriterionId, CriterionResult>,
    pub steps_executed: Vec<StepExecution>,
    pub candidate: bool,
    pub outcome: Option<DiagnosisOutcome>,
}

impl WorkflowState {
    pub fn status_of(&self, criterion: CriterionId) -> Option<CriterionStatus> {
        self.step_results.get(&criterion).map(|r| r.status)
    }

    /// Status for the gate: evaluated result, or Uncertain when the
    /// criterion has not been evaluated (yet).
    pub fn gate_status(&self, criterion: CriterionId) -> CriterionStatus {
        self.status_of(criterion).unwrap_or(CriterionStatus::Uncertain)
    }

    pub fn total_usage(&self) -> Usage {
        let mut total = Usage::zero();
        for step in &self.steps_executed {
            total.add(&step.usage);
        }
        total
    }
}

#[derive(Debug, thiserror::Error)]
pub enum WorkflowError {
    #[error("backend failed during {step:?}: {source}")]
    Backend {
        step: WorkflowStep,
        source: BackendError,
        /// Partial state for audit; every executed call is already logged.
        state: Box<WorkflowState>,
    },
    #[error("unusable reply for {step:?} after retry policy: {source}")]
    Reply { step: WorkflowStep, source: ReplyError, state: Box<WorkflowState> },
    #[error("threshold config rejected: {0}")]
    Config(#[from] ConfigError),
    #[error("prompt assembly failed: {0}")]
    Prompt(#[from] PromptError),
    #[error("patient record fails validation: {0:?}")]
    InvalidRecord(Vec<Violation>),
}

impl WorkflowError {
    /// Partial session state carried by mid-run failures.
    pub fn partial_state(&self) -> Option<&WorkflowState> {
        match self {
            WorkflowError::Backend { state, .. } | WorkflowError::Reply { state, .. } => {
                Some(state)
            }
            _ => None,
        }
    }
}
