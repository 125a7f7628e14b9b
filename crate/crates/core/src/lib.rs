//! Guideline-operationalized diagnostic engine for PCOS.
//!
//! The crate implements the full diagnostic pipeline as a set of composable
//! modules:
//!
//! - [`patient`] — the normalized patient record and ingestion from
//!   structured tables or free-text notes.
//! - [`rules`] — deterministic encodings of the diagnostic thresholds
//!   (Rotterdam criteria plus differential exclusion cutoffs), driven by a
//!   single versioned [`rules::ThresholdConfig`].
//! - [`kg`] — the three-layer knowledge graph (dictionary, guideline, EHR)
//!   with semantic chunking, entity/relation extraction, cross-layer linking
//!   and two-stage retrieval.
//! - [`agent`] — agent roles, prompt assembly, structured-reply parsing and
//!   the pluggable backend contract (remote, rule-oracle, record/replay).
//! - [`workflow`] — the coordinator state machine: sequential Rotterdam
//!   assessment with conditional step execution and early termination,
//!   followed by the mandatory exclusion phase.
//! - [`report`] — synthesis of a finished session into a structured
//!   diagnostic report with evidence citations and cost metadata.
//! - [`eval`] — cohort-level evaluation: batch runs, confusion-matrix
//!   metrics and run comparison tables.
//!
//! Every decision path is deterministic when driven by the rule-oracle or
//! replay backends, so the whole engine is testable offline.

pub mod agent;
pub mod canon;
pub mod eval;
pub mod kg;
pub mod patient;
pub mod report;
pub mod rules;
pub mod workflow;

/// Engine version stamped into reports and build manifests.
pub const ENGINE_VERSION: &str = env!("CARGO_PKG_VERSION");
