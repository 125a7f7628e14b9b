//! Record/replay backends.
//!
//! A cassette is a JSON-lines file of `{prompt_hash, role, step, reply,
//! usage}` entries keyed by the canonical hash of the rendered prompt.
//! Replay never falls through to a live call: a missing entry is a typed
//! `CassetteMiss`.

use std::collections::HashMap;
use std::io::{BufRead, Write};
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{
    AgentBackend, AgentRole, BackendDescriptor, BackendError, BackendKind, BackendReply,
    PromptSpec, Usage, WorkflowStep,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CassetteEntry {
    pub prompt_hash: String,
    pub role: AgentRole,
    pub step: WorkflowStep,
    pub reply: String,
    pub usage: Usage,
}

/// An ordered collection of recorded exchanges.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Cassette {
    pub entries: Vec<CassetteEntry>,
}

impl Cassette {
    pub fn load(path: &Path) -> Result<Self, BackendError> {
        let file = std::fs::File::open(path)
            .map_err(|e| BackendError::CassetteIo(format!("{}: {e}", path.display())))?;
        let mut entries = Vec::new();
        for (number, line) in std::io::BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| BackendError::CassetteIo(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let entry: CassetteEntry = serde_json::from_str(&line).map_err(|e| {
                BackendError::CassetteIo(format!("line {}: {e}", number + 1))
            })?;
            entries.push(entry);
        }
        Ok(Cassette { entries })
    }

    pub fn save(&self, path: &Path) -> Result<(), BackendError> {
        let mut file = std::fs::File::create(path)
            .map_err(|e| BackendError::CassetteIo(format!("{}: {e}", path.display())))?;
        for entry in &self.entries {
            let line = serde_json::to_string(entry)
                .map_err(|e| BackendError::CassetteIo(e.to_string()))?;
            writeln!(file, "{line}").map_err(|e| BackendError::CassetteIo(e.to_string()))?;
        }
        Ok(())
    }
}

/// Serves recorded replies keyed by prompt hash. The cassette is immutable;
/// concurrent reads are free.
pub struct ReplayBackend {
    map: HashMap<String, CassetteEntry>,
    descriptor: BackendDescriptor,
}

impl ReplayBackend {
    pub fn new(cassette: Cassette) -> Self {
        let mut map = HashMap::new();
        for entry in cassette.entries {
            if let Some(previous) = map.insert(entry.prompt_hash.clone(), entry) {
                log::warn!(
                    "cassette has duplicate entry for prompt hash {}; keeping the later one",
                    previous.prompt_hash
                );
            }
        }
        Self {
            map,
            descriptor: BackendDescriptor {
                id: "replay-v1".to_string(),
                kind: BackendKind::Replay,
                model_name: None,
            },
        }
    }

    pub fn from_path(path: &Path) -> Result<Self, BackendError> {
        Ok(Self::new(Cassette::load(path)?))
    }
}

impl AgentBackend for ReplayBackend {
    fn descriptor(&self) -> &BackendDescriptor {
        &self.descriptor
    }

    fn complete(&self, prompt: &PromptSpec) -> Result<BackendReply, BackendError> {
        let hash = prompt.hash();
        match self.map.get(&hash) {
            Some(entry) => {
                Ok(BackendReply { raw: entry.reply.clone(), usage: entry.usage })
            }
            None => Err(BackendError::CassetteMiss { prompt_hash: hash }),
        }
    }
}

/// Wraps another backend and records every exchange for later replay.
pub struct RecordingBackend<B> {
    inner: B,
    entries: Mutex<Vec<CassetteEntry>>,
}

impl<B: AgentBackend> RecordingBackend<B> {
    pub fn new(inner: B) -> Self {
        Self { inner, entries: Mutex::new(Vec::new()) }
    }

    pub fn cassette(&self) -> Cassette {
        Cassette { entries: self.entries.lock().expect("recorder lock").clone() }
    }

    pub fn save(&self, path: &Path) -> Result<(), BackendError> {
        self.cassette().save(path)
    }
}

impl<B: AgentBackend> AgentBackend for RecordingBackend<B> {
    fn descriptor(&self) -> &BackendDescriptor {
        self.inner.descriptor()
    }

    fn complete(&self, prompt: &PromptSpec) -> Result<BackendReply, BackendError> {
        let reply = self.inner.complete(prompt)?;
        self.entries.lock().expect("recorder lock").push(CassetteEntry {
            prompt_hash: prompt.hash(),
            role: prompt.role,
            step: prompt.step,
            reply: reply.raw.clone(),
            usage: reply.usage,
        });
        Ok(reply)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::{assemble_prompt, slice_for_step, RuleOracleBackend};
    use crate::kg::RetrievalResult;
    use crate::patient::PatientRecord;
    use crate::rules::ThresholdConfig;

    fn prompt(cycle_max: u32) -> PromptSpec {
        let mut record = PatientRecord::empty("p");
        record.years_post_menarche = Some(5.0);
        record.menstrual.typical_cycle_max_days = Some(cycle_max);
        assemble_prompt(
            crate::agent::AgentRole::GynecologicalEndocrine,
            WorkflowStep::Step1Clinical,
            &slice_for_step(&record, WorkflowStep::Step1Clinical),
            &ThresholdConfig::default(),
            &RetrievalResult::default(),
            true,
        )
        .unwrap()
    }

    #[test]
    fn record_then_replay_is_byte_identical() {
        let recorder = RecordingBackend::new(RuleOracleBackend::new(ThresholdConfig::default()));
        let p = prompt(40);
        let original = recorder.complete(&p).unwrap();

        let replay = ReplayBackend::new(recorder.cassette());
        let replayed_once = replay.complete(&p).unwrap();
        let replayed_twice = replay.complete(&p).unwrap();
        assert_eq!(original.raw.as_bytes(), replayed_once.raw.as_bytes());
        assert_eq!(replayed_once, replayed_twice);
        assert_eq!(original.usage, replayed_once.usage);
    }

    #[test]
    fn perturbed_prompt_is_a_cassette_miss() {
        let recorder = RecordingBackend::new(RuleOracleBackend::new(ThresholdConfig::default()));
        recorder.complete(&prompt(40)).unwrap();
        let replay = ReplayBackend::new(recorder.cassette());
        // One character of difference in the rendered prompt (41 vs 40).
        let err = replay.complete(&prompt(41)).unwrap_err();
        assert!(matches!(err, BackendError::CassetteMiss { .. }));
    }

    #[test]
    fn two_entries_serve_in_any_order() {
        let recorder = RecordingBackend::new(RuleOracleBackend::new(ThresholdConfig::default()));
        let a = prompt(40);
        let b = prompt(28);
        recorder.complete(&a).unwrap();
        recorder.complete(&b).unwrap();
        let replay = ReplayBackend::new(recorder.cassette());
        let rb = replay.complete(&b).unwrap();
        let ra = replay.complete(&a).unwrap();
        assert!(ra.raw.contains("40"));
        assert!(rb.raw != ra.raw);
    }

    #[test]
    fn cassette_round_trips_through_jsonl() {
        let recorder = RecordingBackend::new(RuleOracleBackend::new(ThresholdConfig::default()));
        recorder.complete(&prompt(40)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cassette.jsonl");
        recorder.save(&path).unwrap();
        let loaded = Cassette::load(&path).unwrap();
        assert_eq!(loaded, recorder.cassette());
    }
}
