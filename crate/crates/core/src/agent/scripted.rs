//! Scripted, instrumented backend for tests and audits.
//!
//! Returns pre-decided statuses per step, counts calls per step, and can
//! report synthetic usage — the instrument behind the conditional-execution
//! and cost-accounting checks.

use std::collections::BTreeMap;
use std::sync::Mutex;

use serde_json::json;

use crate::canon;
use crate::rules::CriterionStatus;

use super::{
    AgentBackend, BackendDescriptor, BackendError, BackendKind, BackendReply, PromptSpec,
    ReplySchema, Usage, WorkflowStep,
};

/// Statuses the script answers with, one per criterion.
#[derive(Debug, Clone, Copy)]
pub struct Script {
    pub cycles: CriterionStatus,
    pub clinical: CriterionStatus,
    pub biochemical: CriterionStatus,
    pub pcom: CriterionStatus,
    /// NCCAH, thyroid, prolactin screens in order.
    pub exclusions: [CriterionStatus; 3],
}

impl Script {
    pub fn all_no() -> Self {
        Script {
            cycles: CriterionStatus::No,
            clinical: CriterionStatus::No,
            biochemical: CriterionStatus::No,
            pcom: CriterionStatus::No,
            exclusions: [CriterionStatus::No; 3],
        }
    }
}

pub struct ScriptedBackend {
    script: Script,
    usage_per_call: Usage,
    calls: Mutex<BTreeMap<WorkflowStep, u64>>,
    descriptor: BackendDescriptor,
}

impl ScriptedBackend {
    pub fn new(script: Script) -> Self {
        Self {
            script,
            usage_per_call: Usage::zero(),
            calls: Mutex::new(BTreeMap::new()),
            descriptor: BackendDescriptor {
                id: "scripted-v1".to_string(),
                kind: BackendKind::RuleOracle,
                model_name: None,
            },
        }
    }

    /// Report this synthetic usage on every call.
    pub fn with_usage(mut self, usage: Usage) -> Self {
        self.usage_per_call = usage;
        self
    }

    pub fn calls(&self, step: WorkflowStep) -> u64 {
        *self.calls.lock().expect("call counter lock").get(&step).unwrap_or(&0)
    }

    pub fn total_calls(&self) -> u64 {
        self.calls.lock().expect("call counter lock").values().sum()
    }

    fn status_for(&self, key: &str) -> CriterionStatus {
        match key {
            "Irregular_cycles" => self.script.cycles,
            "Clinical_hyperandrogenism" => self.script.clinical,
            "Biochemical_hyperandrogenism" => self.script.biochemical,
            "PCOM" => self.script.pcom,
            "NCCAH" => self.script.exclusions[0],
            "Thyroid_dysfunction" => self.script.exclusions[1],
            "Hyperprolactinemia" => self.script.exclusions[2],
            _ => CriterionStatus::Uncertain,
        }
    }
}

impl AgentBackend for ScriptedBackend {
    fn descriptor(&self) -> &BackendDescriptor {
        &self.descriptor
    }

    fn complete(&self, prompt: &PromptSpec) -> Result<BackendReply, BackendError> {
        *self.calls.lock().expect("call counter lock").entry(prompt.step).or_insert(0) += 1;
        let schema = ReplySchema::for_step(prompt.step)
            .ok_or_else(|| BackendError::Oracle(format!("unscripted step {:?}", prompt.step)))?;
        let mut object = serde_json::Map::new();
        for (key, _) in schema.keys {
            object.insert(
                key.to_string(),
                json!({ "status": self.status_for(key).as_str(), "reasoning": "scripted" }),
            );
        }
        Ok(BackendReply {
            raw: canon::to_canonical_json(&serde_json::Value::Object(object)),
            usage: self.usage_per_call,
        })
    }
}
