//! Deterministic encoding of the diagnostic thresholds.
//!
//! Every numeric cutoff lives in [`ThresholdConfig`] — nothing is hard-coded
//! in the evaluators. The boundary semantics are fixed: strict `<`/`>` for
//! cycle bounds and exclusion uppers, inclusive `≥` for the Ferriman-Gallwey
//! and morphology thresholds.

mod evaluators;

pub use evaluators::{
    eval_biochemical_ha, eval_clinical_ha, eval_exclusions, eval_irregular_cycles, eval_pcom,
    missing_inputs, relevant_inputs,
};

use serde::{Deserialize, Serialize};

use crate::patient::units::{self, BiochemField};

/// Three-valued criterion status matching the agent output schema.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CriterionStatus {
    Yes,
    No,
    Uncertain,
}

impl CriterionStatus {
    pub const ALL: [CriterionStatus; 3] =
        [CriterionStatus::Yes, CriterionStatus::No, CriterionStatus::Uncertain];

    pub fn is_met(self) -> bool {
        self == CriterionStatus::Yes
    }

    /// Case-insensitive parse of the three-valued status.
    pub fn parse(raw: &str) -> Option<Self> {
        match raw.trim().to_ascii_lowercase().as_str() {
            "yes" => Some(CriterionStatus::Yes),
            "no" => Some(CriterionStatus::No),
            "uncertain" => Some(CriterionStatus::Uncertain),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            CriterionStatus::Yes => "Yes",
            CriterionStatus::No => "No",
            CriterionStatus::Uncertain => "Uncertain",
        }
    }
}

/// Identifier for each evaluated criterion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CriterionId {
    #[serde(rename = "IrregularCycles")]
    IrregularCycles,
    #[serde(rename = "ClinicalHA")]
    ClinicalHyperandrogenism,
    #[serde(rename = "BiochemicalHA")]
    BiochemicalHyperandrogenism,
    #[serde(rename = "PCOM")]
    Pcom,
    #[serde(rename = "Exclusion-NCCAH")]
    ExclusionNccah,
    #[serde(rename = "Exclusion-Thyroid")]
    ExclusionThyroid,
    #[serde(rename = "Exclusion-Prolactin")]
    ExclusionProlactin,
}

impl CriterionId {
    pub const ROTTERDAM: [CriterionId; 4] = [
        CriterionId::IrregularCycles,
        CriterionId::ClinicalHyperandrogenism,
        CriterionId::BiochemicalHyperandrogenism,
        CriterionId::Pcom,
    ];

    pub const EXCLUSIONS: [CriterionId; 3] = [
        CriterionId::ExclusionNccah,
        CriterionId::ExclusionThyroid,
        CriterionId::ExclusionProlactin,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            CriterionId::IrregularCycles => "IrregularCycles",
            CriterionId::ClinicalHyperandrogenism => "ClinicalHA",
            CriterionId::BiochemicalHyperandrogenism => "BiochemicalHA",
            CriterionId::Pcom => "PCOM",
            CriterionId::ExclusionNccah => "Exclusion-NCCAH",
            CriterionId::ExclusionThyroid => "Exclusion-Thyroid",
            CriterionId::ExclusionProlactin => "Exclusion-Prolactin",
        }
    }
}

/// Per-criterion evaluation outcome with its audit trail.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionResult {
    pub criterion_id: CriterionId,
    pub status: CriterionStatus,
    /// Deterministic rationale. Missing data is machine-readable as
    /// `missing:<field>` tokens.
    pub reasoning: String,
    /// Knowledge-graph citation ids (chunk ids) backing the evaluation.
    #[serde(default)]
    pub evidence: Vec<String>,
    /// Record fields that were present and consulted.
    #[serde(default)]
    pub inputs_used: Vec<String>,
}

/// A cutoff value with its unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnitValue {
    pub value: f64,
    pub unit: String,
}

impl UnitValue {
    pub fn new(value: f64, unit: impl Into<String>) -> Self {
        Self { value, unit: unit.into() }
    }
}

/// All diagnostic cutoffs in one versioned document.
///
/// The cycle, hirsutism and morphology defaults follow the assessment
/// guideline; the lab cutoffs ship as documented, modifiable defaults in the
/// bundled `thresholds.toml` rather than baked-in constants, because
/// reference ranges are assay-dependent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdConfig {
    pub version: u32,
    /// Cycles shorter than this many days are irregular (strict `<`).
    pub cycle_short_days: u32,
    /// Cycles longer than this many days are irregular (strict `>`).
    pub cycle_long_days: u32,
    /// Fewer than this many cycles per year is irregular (strict `<`).
    pub min_cycles_per_year: u32,
    /// Any single cycle longer than this is irregular (strict `>`).
    pub single_cycle_irregular_days: u32,
    /// Ferriman-Gallwey score at or above this meets the hirsutism
    /// criterion (inclusive `≥`). The shipped default follows the prompt
    /// template's literal cutoff; see the bundled config for discussion.
    pub fg_cutoff: u8,
    /// The cycle-irregularity rules apply only beyond this many years
    /// post-menarche (strict `>`).
    pub post_menarche_years_gate: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub free_testosterone_upper: Option<UnitValue>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub total_testosterone_upper: Option<UnitValue>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fai_upper: Option<UnitValue>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dheas_upper: Option<UnitValue>,
    /// Follicle number per ovary at or above this meets PCOM (inclusive).
    pub follicle_count_per_ovary_min: u32,
    /// Ovarian volume (mL) at or above this meets PCOM (inclusive).
    pub ovarian_volume_ml_min: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ohp17_upper: Option<UnitValue>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tsh_lower: Option<UnitValue>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tsh_upper: Option<UnitValue>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub prolactin_upper: Option<UnitValue>,
}

impl Default for ThresholdConfig {
    fn default() -> Self {
        Self {
            version: 1,
            cycle_short_days: 21,
            cycle_long_days: 35,
            min_cycles_per_year: 8,
            single_cycle_irregular_days: 90,
            fg_cutoff: 2,
            post_menarche_years_gate: 3.0,
            free_testosterone_upper: Some(UnitValue::new(8.5, "pg/mL")),
            total_testosterone_upper: Some(UnitValue::new(50.0, "ng/dL")),
            fai_upper: Some(UnitValue::new(5.0, "index")),
            dheas_upper: Some(UnitValue::new(350.0, "ug/dL")),
            follicle_count_per_ovary_min: 20,
            ovarian_volume_ml_min: 10.0,
            ohp17_upper: Some(UnitValue::new(200.0, "ng/dL")),
            tsh_lower: Some(UnitValue::new(0.4, "mIU/L")),
            tsh_upper: Some(UnitValue::new(4.0, "mIU/L")),
            prolactin_upper: Some(UnitValue::new(25.0, "ng/mL")),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot parse threshold config: {0}")]
    Parse(String),
    #[error("threshold config invalid: {0}")]
    Invalid(String),
    #[error("marker {field} is present in the record but has no configured cutoff {cutoff}")]
    MissingCutoff { field: String, cutoff: &'static str },
    #[error("cutoff {cutoff} is in {actual:?} but field expects {expected:?}")]
    UnitMismatch { cutoff: &'static str, actual: String, expected: String },
}

impl ThresholdConfig {
    /// Parse from TOML and check structural invariants.
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let cfg: ThresholdConfig =
            toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Structural invariants: orderings, positivity, unit agreement.
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.cycle_short_days >= self.cycle_long_days {
            return Err(ConfigError::Invalid(format!(
                "cycle_short_days {} must be < cycle_long_days {}",
                self.cycle_short_days, self.cycle_long_days
            )));
        }
        if let (Some(lo), Some(hi)) = (&self.tsh_lower, &self.tsh_upper) {
            if lo.value >= hi.value {
                return Err(ConfigError::Invalid(format!(
                    "tsh_lower {} must be < tsh_upper {}",
                    lo.value, hi.value
                )));
            }
        }
        for (name, v) in [
            ("cycle_short_days", self.cycle_short_days as f64),
            ("cycle_long_days", self.cycle_long_days as f64),
            ("min_cycles_per_year", self.min_cycles_per_year as f64),
            ("single_cycle_irregular_days", self.single_cycle_irregular_days as f64),
            ("post_menarche_years_gate", self.post_menarche_years_gate),
            ("follicle_count_per_ovary_min", self.follicle_count_per_ovary_min as f64),
            ("ovarian_volume_ml_min", self.ovarian_volume_ml_min),
        ] {
            if !(v > 0.0) {
                return Err(ConfigError::Invalid(format!("{name} must be positive, got {v}")));
            }
        }
        for (name, field, cutoff) in self.lab_cutoffs() {
            if let Some(cutoff) = cutoff {
                if !(cutoff.value > 0.0) {
                    return Err(ConfigError::Invalid(format!(
                        "{name} must be positive, got {}",
                        cutoff.value
                    )));
                }
                if units::normalize_unit(field, &cutoff.unit) != Some(units::canonical_unit(field))
                {
                    return Err(ConfigError::UnitMismatch {
                        cutoff: name,
                        actual: cutoff.unit.clone(),
                        expected: units::canonical_unit(field).to_string(),
                    });
                }
            }
        }
        Ok(())
    }

    /// Fail fast when `record` carries a lab the config has no cutoff for.
    pub fn require_cutoffs_for(
        &self,
        record: &crate::patient::PatientRecord,
    ) -> Result<(), ConfigError> {
        for (name, field, cutoff) in self.lab_cutoffs() {
            if record.biochemistry.get(field).is_some() && cutoff.is_none() {
                return Err(ConfigError::MissingCutoff {
                    field: format!("biochemistry.{}", field.path_segment()),
                    cutoff: name,
                });
            }
        }
        Ok(())
    }

    /// Strictest form: every lab cutoff must be configured. Used by the
    /// long-running service, which cannot know future records up front.
    pub fn require_all_cutoffs(&self) -> Result<(), ConfigError> {
        for (name, field, cutoff) in self.lab_cutoffs() {
            if cutoff.is_none() {
                return Err(ConfigError::MissingCutoff {
                    field: format!("biochemistry.{}", field.path_segment()),
                    cutoff: name,
                });
            }
        }
        Ok(())
    }

    fn lab_cutoffs(&self) -> [(&'static str, BiochemField, &Option<UnitValue>); 7] {
        [
            ("free_testosterone_upper", BiochemField::FreeTestosterone, &self.free_testosterone_upper),
            ("total_testosterone_upper", BiochemField::TotalTestosterone, &self.total_testosterone_upper),
            ("fai_upper", BiochemField::FreeAndrogenIndex, &self.fai_upper),
            ("dheas_upper", BiochemField::Dheas, &self.dheas_upper),
            ("ohp17_upper", BiochemField::Ohp17, &self.ohp17_upper),
            ("tsh_lower", BiochemField::Tsh, &self.tsh_lower),
            ("prolactin_upper", BiochemField::Prolactin, &self.prolactin_upper),
        ]
    }

    /// Hash of the canonical serialization, stamped into reports.
    pub fn hash(&self) -> String {
        crate::canon::hash_canonical(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_is_valid_and_complete() {
        let cfg = ThresholdConfig::default();
        cfg.validate().unwrap();
        cfg.require_all_cutoffs().unwrap();
    }

    #[test]
    fn inverted_cycle_bounds_rejected() {
        let mut cfg = ThresholdConfig::default();
        cfg.cycle_short_days = 40;
        assert!(matches!(cfg.validate(), Err(ConfigError::Invalid(_))));
    }

    #[test]
    fn inverted_tsh_window_rejected() {
        let mut cfg = ThresholdConfig::default();
        cfg.tsh_lower = Some(UnitValue::new(5.0, "mIU/L"));
        assert!(matches!(cfg.validate(), Err(ConfigError::Invalid(_))));
    }

    #[test]
    fn wrong_cutoff_unit_rejected() {
        let mut cfg = ThresholdConfig::default();
        cfg.prolactin_upper = Some(UnitValue::new(25.0, "mIU/L"));
        assert!(matches!(cfg.validate(), Err(ConfigError::UnitMismatch { .. })));
    }

    #[test]
    fn missing_cutoff_for_present_lab_fails_fast() {
        let mut cfg = ThresholdConfig::default();
        cfg.ohp17_upper = None;
        let mut record = crate::patient::PatientRecord::empty("p");
        record.biochemistry.ohp_17 =
            Some(crate::patient::LabValue::new(150.0, "ng/dL"));
        assert!(matches!(
            cfg.require_cutoffs_for(&record),
            Err(ConfigError::MissingCutoff { .. })
        ));
        record.biochemistry.ohp_17 = None;
        cfg.require_cutoffs_for(&record).unwrap();
    }

    #[test]
    fn criterion_ids_serialize_to_wire_names() {
        assert_eq!(
            serde_json::to_string(&CriterionId::ExclusionNccah).unwrap(),
            "\"Exclusion-NCCAH\""
        );
        assert_eq!(
            serde_json::to_string(&CriterionId::ClinicalHyperandrogenism).unwrap(),
            "\"ClinicalHA\""
        );
    }

    #[test]
    fn status_parse_is_case_insensitive_and_closed() {
        assert_eq!(CriterionStatus::parse("YES"), Some(CriterionStatus::Yes));
        assert_eq!(CriterionStatus::parse(" uncertain "), Some(CriterionStatus::Uncertain));
        assert_eq!(CriterionStatus::parse("maybe"), None);
    }
}
