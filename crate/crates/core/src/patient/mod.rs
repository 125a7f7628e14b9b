//! Normalized patient record and conversion from heterogeneous raw inputs.
//!
//! The canonical record format is a versioned JSON document where an absent
//! value is represented by omitting the field — never by a sentinel. All
//! numeric fields are either present-and-finite or absent, which keeps the
//! downstream rule evaluators honest about missing data.

mod extract;
mod ingest;
pub mod units;

pub use extract::{extract_from_text, ExtractError};
pub use ingest::{ingest_structured, FieldMapping, IngestError, SchemaMapping};

use serde::{Deserialize, Serialize};

use crate::canon;

/// Schema version stamped into every canonical record document.
pub const RECORD_SCHEMA_VERSION: u32 = 1;

/// A laboratory value with its unit. Units are validated against a fixed
/// per-field allowlist; the engine never converts units silently.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabValue {
    pub value: f64,
    pub unit: String,
}

impl LabValue {
    pub fn new(value: f64, unit: impl Into<String>) -> Self {
        Self { value, unit: unit.into() }
    }
}

/// Acne severity as recorded on skin examination. An unknown exam is
/// represented by leaving the field absent, not by a severity level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AcneSeverity {
    Absent,
    Mild,
    Moderate,
    Severe,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MenstrualHistory {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub typical_cycle_min_days: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub typical_cycle_max_days: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cycles_per_year: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub longest_single_cycle_days: Option<u32>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ClinicalSigns {
    /// Modified Ferriman-Gallwey hirsutism score, 0–36.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ferriman_gallwey_score: Option<u8>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub acne: Option<AcneSeverity>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub androgenic_alopecia: Option<bool>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BiochemPanel {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub total_testosterone: Option<LabValue>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub free_testosterone: Option<LabValue>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dheas: Option<LabValue>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub shbg: Option<LabValue>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub free_androgen_index: Option<LabValue>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub amh: Option<LabValue>,
    /// 17-hydroxyprogesterone, the NCCAH screening lab.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ohp_17: Option<LabValue>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tsh: Option<LabValue>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub prolactin: Option<LabValue>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ImagingFindings {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub follicle_count_left: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub follicle_count_right: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ovarian_volume_left_ml: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ovarian_volume_right_ml: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub narrative: Option<String>,
}

/// Normalized structured patient record.
///
/// Immutable after construction; safe to share across concurrent workers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatientRecord {
    #[serde(default = "default_schema_version")]
    pub schema_version: u32,
    pub patient_id: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub age_years: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub years_post_menarche: Option<f64>,
    #[serde(default)]
    pub menstrual: MenstrualHistory,
    #[serde(default)]
    pub clinical_signs: ClinicalSigns,
    #[serde(default)]
    pub biochemistry: BiochemPanel,
    #[serde(default)]
    pub imaging: ImagingFindings,
    /// Unparsed narrative plus provenance entries written by free-text
    /// extraction (`"<field> <= \"<source span>\""`).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub free_text_notes: Option<Vec<String>>,
}

fn default_schema_version() -> u32 {
    RECORD_SCHEMA_VERSION
}

/// A single invariant violation with the offending field path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub field: String,
    pub message: String,
}

#[derive(Debug, thiserror::Error)]
pub enum RecordError {
    #[error("record fails validation: {}", format_violations(.0))]
    Invalid(Vec<Violation>),
    #[error("record is not valid JSON: {0}")]
    Json(#[from] serde_json::Error),
}

fn format_violations(violations: &[Violation]) -> String {
    violations
        .iter()
        .map(|v| format!("{}: {}", v.field, v.message))
        .collect::<Vec<_>>()
        .join("; ")
}

impl PatientRecord {
    /// An empty record carrying only an identifier.
    pub fn empty(patient_id: impl Into<String>) -> Self {
        Self {
            schema_version: RECORD_SCHEMA_VERSION,
            patient_id: patient_id.into(),
            age_years: None,
            years_post_menarche: None,
            menstrual: MenstrualHistory::default(),
            clinical_signs: ClinicalSigns::default(),
            biochemistry: BiochemPanel::default(),
            imaging: ImagingFindings::default(),
            free_text_notes: None,
        }
    }

    /// Check all record invariants, returning every violation found.
    pub fn validate(&self) -> Result<(), Vec<Violation>> {
        let mut violations = Vec::new();
        let mut push = |field: &str, message: String| {
            violations.push(Violation { field: field.to_string(), message });
        };

        let mut check_finite = |field: &str, v: Option<f64>| {
            if let Some(x) = v {
                if !x.is_finite() {
                    push(field, "must be finite".to_string());
                } else if x < 0.0 {
                    push(field, "must be non-negative".to_string());
                }
            }
        };
        check_finite("age_years", self.age_years);
        check_finite("years_post_menarche", self.years_post_menarche);
        check_finite("imaging.ovarian_volume_left_ml", self.imaging.ovarian_volume_left_ml);
        check_finite("imaging.ovarian_volume_right_ml", self.imaging.ovarian_volume_right_ml);

        if let (Some(age), Some(ypm)) = (self.age_years, self.years_post_menarche) {
            if age < ypm {
                violations.push(Violation {
                    field: "years_post_menarche".to_string(),
                    message: format!("exceeds age_years ({ypm} > {age})"),
                });
            }
        }

        if let (Some(lo), Some(hi)) =
            (self.menstrual.typical_cycle_min_days, self.menstrual.typical_cycle_max_days)
        {
            if lo > hi {
                violations.push(Violation {
                    field: "menstrual.typical_cycle_min_days".to_string(),
                    message: format!("exceeds typical_cycle_max_days ({lo} > {hi})"),
                });
            }
        }
        for (field, v) in [
            ("menstrual.typical_cycle_min_days", self.menstrual.typical_cycle_min_days),
            ("menstrual.typical_cycle_max_days", self.menstrual.typical_cycle_max_days),
            ("menstrual.longest_single_cycle_days", self.menstrual.longest_single_cycle_days),
        ] {
            if v == Some(0) {
                violations.push(Violation {
                    field: field.to_string(),
                    message: "must be positive".to_string(),
                });
            }
        }

        if let Some(fg) = self.clinical_signs.ferriman_gallwey_score {
            if fg > 36 {
                violations.push(Violation {
                    field: "clinical_signs.ferriman_gallwey_score".to_string(),
                    message: format!("must be within 0–36, got {fg}"),
                });
            }
        }

        for (field, lab) in self.biochemistry.labs() {
            if let Some(lab) = lab {
                let path = format!("biochemistry.{}", field.path_segment());
                if !lab.value.is_finite() {
                    violations.push(Violation { field: path, message: "must be finite".into() });
                } else if lab.value < 0.0 {
                    violations
                        .push(Violation { field: path, message: "must be non-negative".into() });
                } else if units::normalize_unit(field, &lab.unit).is_none() {
                    violations.push(Violation {
                        field: path,
                        message: format!(
                            "unit {:?} not in allowlist {:?}",
                            lab.unit,
                            units::allowed_units(field)
                        ),
                    });
                }
            }
        }

        if violations.is_empty() {
            Ok(())
        } else {
            Err(violations)
        }
    }

    /// Parse and validate a canonical record document.
    pub fn parse(json: &str) -> Result<Self, RecordError> {
        let record: PatientRecord = serde_json::from_str(json)?;
        record.validate().map_err(RecordError::Invalid)?;
        Ok(record)
    }

    /// Canonical file form: pretty JSON with a trailing newline.
    pub fn to_canonical_file(&self) -> String {
        canon::to_pretty_json(self)
    }

    /// Compact canonical form used for hashing and session ids.
    pub fn canonical_bytes(&self) -> Vec<u8> {
        canon::to_canonical_json(self).into_bytes()
    }

    /// Dotted paths of all diagnostic fields currently present.
    pub fn present_field_paths(&self) -> Vec<&'static str> {
        let mut out = Vec::new();
        let m = &self.menstrual;
        let c = &self.clinical_signs;
        let b = &self.biochemistry;
        let i = &self.imaging;
        let checks: [(&'static str, bool); 20] = [
            ("age_years", self.age_years.is_some()),
            ("years_post_menarche", self.years_post_menarche.is_some()),
            ("menstrual.typical_cycle_min_days", m.typical_cycle_min_days.is_some()),
            ("menstrual.typical_cycle_max_days", m.typical_cycle_max_days.is_some()),
            ("menstrual.cycles_per_year", m.cycles_per_year.is_some()),
            ("menstrual.longest_single_cycle_days", m.longest_single_cycle_days.is_some()),
            ("clinical_signs.ferriman_gallwey_score", c.ferriman_gallwey_score.is_some()),
            ("clinical_signs.acne", c.acne.is_some()),
            ("clinical_signs.androgenic_alopecia", c.androgenic_alopecia.is_some()),
            ("biochemistry.total_testosterone", b.total_testosterone.is_some()),
            ("biochemistry.free_testosterone", b.free_testosterone.is_some()),
            ("biochemistry.dheas", b.dheas.is_some()),
            ("biochemistry.shbg", b.shbg.is_some()),
            ("biochemistry.free_androgen_index", b.free_androgen_index.is_some()),
            ("biochemistry.amh", b.amh.is_some()),
            ("biochemistry.ohp_17", b.ohp_17.is_some()),
            ("biochemistry.tsh", b.tsh.is_some()),
            ("biochemistry.prolactin", b.prolactin.is_some()),
            ("imaging.follicle_count_left", i.follicle_count_left.is_some()),
            ("imaging.follicle_count_right", i.follicle_count_right.is_some()),
        ];
        for (path, present) in checks {
            if present {
                out.push(path);
            }
        }
        if i.ovarian_volume_left_ml.is_some() {
            out.push("imaging.ovarian_volume_left_ml");
        }
        if i.ovarian_volume_right_ml.is_some() {
            out.push("imaging.ovarian_volume_right_ml");
        }
        out
    }

    /// Copy of the record with one field made absent; unknown paths are a
    /// no-op. Used by the monotone-missingness property tests.
    pub fn without_field(&self, path: &str) -> Self {
        let mut r = self.clone();
        match path {
            "age_years" => r.age_years = None,
            "years_post_menarche" => r.years_post_menarche = None,
            "menstrual.typical_cycle_min_days" => r.menstrual.typical_cycle_min_days = None,
            "menstrual.typical_cycle_max_days" => r.menstrual.typical_cycle_max_days = None,
            "menstrual.cycles_per_year" => r.menstrual.cycles_per_year = None,
            "menstrual.longest_single_cycle_days" => r.menstrual.longest_single_cycle_days = None,
            "clinical_signs.ferriman_gallwey_score" => {
                r.clinical_signs.ferriman_gallwey_score = None
            }
            "clinical_signs.acne" => r.clinical_signs.acne = None,
            "clinical_signs.androgenic_alopecia" => r.clinical_signs.androgenic_alopecia = None,
            "biochemistry.total_testosterone" => r.biochemistry.total_testosterone = None,
            "biochemistry.free_testosterone" => r.biochemistry.free_testosterone = None,
            "biochemistry.dheas" => r.biochemistry.dheas = None,
            "biochemistry.shbg" => r.biochemistry.shbg = None,
            "biochemistry.free_androgen_index" => r.biochemistry.free_androgen_index = None,
            "biochemistry.amh" => r.biochemistry.amh = None,
            "biochemistry.ohp_17" => r.biochemistry.ohp_17 = None,
            "biochemistry.tsh" => r.biochemistry.tsh = None,
            "biochemistry.prolactin" => r.biochemistry.prolactin = None,
            "imaging.follicle_count_left" => r.imaging.follicle_count_left = None,
            "imaging.follicle_count_right" => r.imaging.follicle_count_right = None,
            "imaging.ovarian_volume_left_ml" => r.imaging.ovarian_volume_left_ml = None,
            "imaging.ovarian_volume_right_ml" => r.imaging.ovarian_volume_right_ml = None,
            _ => {}
        }
        r
    }
}

impl BiochemPanel {
    /// All lab slots paired with their field identifiers.
    pub fn labs(&self) -> [(units::BiochemField, &Option<LabValue>); 9] {
        use units::BiochemField::*;
        [
            (TotalTestosterone, &self.total_testosterone),
            (FreeTestosterone, &self.free_testosterone),
            (Dheas, &self.dheas),
            (Shbg, &self.shbg),
            (FreeAndrogenIndex, &self.free_androgen_index),
            (Amh, &self.amh),
            (Ohp17, &self.ohp_17),
            (Tsh, &self.tsh),
            (Prolactin, &self.prolactin),
        ]
    }

    pub fn get(&self, field: units::BiochemField) -> &Option<LabValue> {
        use units::BiochemField::*;
        match field {
            TotalTestosterone => &self.total_testosterone,
            FreeTestosterone => &self.free_testosterone,
            Dheas => &self.dheas,
            Shbg => &self.shbg,
            FreeAndrogenIndex => &self.free_androgen_index,
            Amh => &self.amh,
            Ohp17 => &self.ohp_17,
            Tsh => &self.tsh,
            Prolactin => &self.prolactin,
        }
    }

    pub fn set(&mut self, field: units::BiochemField, value: Option<LabValue>) {
        use units::BiochemField::*;
        match field {
            TotalTestosterone => self.total_testosterone = value,
            FreeTestosterone => self.free_testosterone = value,
            Dheas => self.dheas = value,
            Shbg => self.shbg = value,
            FreeAndrogenIndex => self.free_androgen_index = value,
            Amh => self.amh = value,
            Ohp17 => self.ohp_17 = value,
            Tsh => self.tsh = value,
            Prolactin => self.prolactin = value,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> PatientRecord {
        let mut r = PatientRecord::empty("p-001");
        r.age_years = Some(27.0);
        r.years_post_menarche = Some(14.0);
        r.menstrual.typical_cycle_min_days = Some(24);
        r.menstrual.typical_cycle_max_days = Some(40);
        r.clinical_signs.ferriman_gallwey_score = Some(6);
        r.biochemistry.tsh = Some(LabValue::new(2.1, "mIU/L"));
        r
    }

    #[test]
    fn round_trip_is_identity() {
        let record = sample();
        let file = record.to_canonical_file();
        let parsed = PatientRecord::parse(&file).unwrap();
        assert_eq!(parsed.to_canonical_file(), file);
        assert_eq!(parsed, record);
    }

    #[test]
    fn absent_is_not_zero() {
        let with_zero_tsh = {
            let mut r = sample();
            r.biochemistry.tsh = Some(LabValue::new(0.0, "mIU/L"));
            r
        };
        let with_absent_tsh = {
            let mut r = sample();
            r.biochemistry.tsh = None;
            r
        };
        assert_ne!(with_zero_tsh, with_absent_tsh);
        assert_ne!(with_zero_tsh.canonical_bytes(), with_absent_tsh.canonical_bytes());
    }

    #[test]
    fn validation_catches_inconsistencies() {
        let mut r = sample();
        r.years_post_menarche = Some(30.0); // exceeds age 27
        r.clinical_signs.ferriman_gallwey_score = Some(40);
        r.menstrual.typical_cycle_min_days = Some(45); // exceeds max 40
        r.biochemistry.tsh = Some(LabValue::new(2.0, "furlongs"));
        let violations = r.validate().unwrap_err();
        let fields: Vec<_> = violations.iter().map(|v| v.field.as_str()).collect();
        assert!(fields.contains(&"years_post_menarche"));
        assert!(fields.contains(&"clinical_signs.ferriman_gallwey_score"));
        assert!(fields.contains(&"menstrual.typical_cycle_min_days"));
        assert!(fields.contains(&"biochemistry.tsh"));
    }

    #[test]
    fn unknown_fields_are_ignored_on_parse() {
        let json = r#"{"schema_version":1,"patient_id":"x","extension_field":42}"#;
        let record = PatientRecord::parse(json).unwrap();
        assert_eq!(record.patient_id, "x");
    }

    #[test]
    fn without_field_removes_exactly_one() {
        let record = sample();
        let paths = record.present_field_paths();
        assert!(paths.contains(&"biochemistry.tsh"));
        let removed = record.without_field("biochemistry.tsh");
        assert!(removed.biochemistry.tsh.is_none());
        assert_eq!(removed.present_field_paths().len(), paths.len() - 1);
    }
}
