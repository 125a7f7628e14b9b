//! Structured ingestion: map a row of named cells onto a [`PatientRecord`]
//! through a declarative schema mapping.
//!
//! The mapping declares, per record field, the source column and (for lab
//! fields) the unit the source values are expressed in. Unmapped columns are
//! ignored; blank cells become absent fields.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::units::{self, BiochemField};
use super::{AcneSeverity, LabValue, PatientRecord, Violation};

/// Mapping for a single record field.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FieldMapping {
    /// Source column name in the row.
    pub column: String,
    /// Unit the source column is expressed in. Required for lab fields,
    /// ignored elsewhere.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unit: Option<String>,
}

/// Declarative schema mapping: record field path → source column (+ unit).
///
/// Field paths use the record's dotted naming, e.g.
/// `menstrual.typical_cycle_min_days` or `biochemistry.tsh`.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SchemaMapping {
    pub fields: BTreeMap<String, FieldMapping>,
}

impl SchemaMapping {
    pub fn parse(json: &str) -> Result<Self, IngestError> {
        let mapping: SchemaMapping =
            serde_json::from_str(json).map_err(|e| IngestError::MappingSpec(e.to_string()))?;
        mapping.validate()?;
        Ok(mapping)
    }

    /// Reject mappings that name unknown fields or omit units for labs.
    pub fn validate(&self) -> Result<(), IngestError> {
        for (path, field) in &self.fields {
            if !KNOWN_FIELDS.contains(&path.as_str()) {
                return Err(IngestError::MappingSpec(format!("unknown record field {path:?}")));
            }
            if let Some(segment) = path.strip_prefix("biochemistry.") {
                let lab = BiochemField::from_path_segment(segment)
                    .expect("known biochemistry paths map to fields");
                let unit = field.unit.as_deref().ok_or_else(|| {
                    IngestError::MappingSpec(format!("lab field {path:?} requires a unit"))
                })?;
                if units::normalize_unit(lab, unit).is_none() {
                    return Err(IngestError::Unit {
                        field: path.clone(),
                        unit: unit.to_string(),
                        allowed: units::allowed_units(lab).iter().map(|s| s.to_string()).collect(),
                    });
                }
            }
        }
        Ok(())
    }
}

const KNOWN_FIELDS: &[&str] = &[
    "patient_id",
    "age_years",
    "years_post_menarche",
    "menstrual.typical_cycle_min_days",
    "menstrual.typical_cycle_max_days",
    "menstrual.cycles_per_year",
    "menstrual.longest_single_cycle_days",
    "clinical_signs.ferriman_gallwey_score",
    "clinical_signs.acne",
    "clinical_signs.androgenic_alopecia",
    "biochemistry.total_testosterone",
    "biochemistry.free_testosterone",
    "biochemistry.dheas",
    "biochemistry.shbg",
    "biochemistry.free_androgen_index",
    "biochemistry.amh",
    "biochemistry.ohp_17",
    "biochemistry.tsh",
    "biochemistry.prolactin",
    "imaging.follicle_count_left",
    "imaging.follicle_count_right",
    "imaging.ovarian_volume_left_ml",
    "imaging.ovarian_volume_right_ml",
    "imaging.narrative",
];

#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    #[error("invalid schema mapping: {0}")]
    MappingSpec(String),
    #[error("column {column:?} (mapped to {field}) missing from row")]
    Mapping { field: String, column: String },
    #[error("unit {unit:?} not recognized for {field} (allowed: {allowed:?})")]
    Unit { field: String, unit: String, allowed: Vec<String> },
    #[error("field {field}: cannot parse {raw:?} as {expected}")]
    Value { field: String, raw: String, expected: &'static str },
    #[error("ingested record fails validation: {0:?}")]
    Invalid(Vec<Violation>),
}

/// Convert one row of named cells into a validated [`PatientRecord`].
///
/// `fallback_id` is used when the mapping does not cover `patient_id`.
/// Blank or whitespace-only cells become absent fields.
pub fn ingest_structured(
    row: &BTreeMap<String, String>,
    mapping: &SchemaMapping,
    fallback_id: &str,
) -> Result<PatientRecord, IngestError> {
    mapping.validate()?;
    let mut record = PatientRecord::empty(fallback_id);

    for (path, field_mapping) in &mapping.fields {
        let cell = row.get(&field_mapping.column).ok_or_else(|| IngestError::Mapping {
            field: path.clone(),
            column: field_mapping.column.clone(),
        })?;
        let raw = cell.trim();
        if raw.is_empty() {
            continue; // blank cell → absent field
        }
        apply_cell(&mut record, path, raw, field_mapping.unit.as_deref())?;
    }

    record.validate().map_err(IngestError::Invalid)?;
    Ok(record)
}

fn apply_cell(
    record: &mut PatientRecord,
    path: &str,
    raw: &str,
    unit: Option<&str>,
) -> Result<(), IngestError> {
    match path {
        "patient_id" => record.patient_id = raw.to_string(),
        "age_years" => record.age_years = Some(parse_f64(path, raw)?),
        "years_post_menarche" => record.years_post_menarche = Some(parse_f64(path, raw)?),
        "menstrual.typical_cycle_min_days" => {
            record.menstrual.typical_cycle_min_days = Some(parse_u32(path, raw)?)
        }
        "menstrual.typical_cycle_max_days" => {
            record.menstrual.typical_cycle_max_days = Some(parse_u32(path, raw)?)
        }
        "menstrual.cycles_per_year" => {
            record.menstrual.cycles_per_year = Some(parse_u32(path, raw)?)
        }
        "menstrual.longest_single_cycle_days" => {
            record.menstrual.longest_single_cycle_days = Some(parse_u32(path, raw)?)
        }
        "clinical_signs.ferriman_gallwey_score" => {
            let n = parse_u32(path, raw)?;
            record.clinical_signs.ferriman_gallwey_score =
                Some(u8::try_from(n).map_err(|_| IngestError::Value {
                    field: path.to_string(),
                    raw: raw.to_string(),
                    expected: "integer 0–36",
                })?);
        }
        "clinical_signs.acne" => record.clinical_signs.acne = Some(parse_acne(path, raw)?),
        "clinical_signs.androgenic_alopecia" => {
            record.clinical_signs.androgenic_alopecia = Some(parse_bool(path, raw)?)
        }
        "imaging.follicle_count_left" => {
            record.imaging.follicle_count_left = Some(parse_u32(path, raw)?)
        }
        "imaging.follicle_count_right" => {
            record.imaging.follicle_count_right = Some(parse_u32(path, raw)?)
        }
        "imaging.ovarian_volume_left_ml" => {
            record.imaging.ovarian_volume_left_ml = Some(parse_f64(path, raw)?)
        }
        "imaging.ovarian_volume_right_ml" => {
            record.imaging.ovarian_volume_right_ml = Some(parse_f64(path, raw)?)
        }
        "imaging.narrative" => record.imaging.narrative = Some(raw.to_string()),
        lab_path => {
            let segment = lab_path
                .strip_prefix("biochemistry.")
                .expect("validated mapping only contains known fields");
            let field = BiochemField::from_path_segment(segment)
                .expect("validated mapping only contains known lab fields");
            let unit = unit.expect("validated mapping carries a unit for lab fields");
            let canonical = units::normalize_unit(field, unit).ok_or_else(|| IngestError::Unit {
                field: lab_path.to_string(),
                unit: unit.to_string(),
                allowed: units::allowed_units(field).iter().map(|s| s.to_string()).collect(),
            })?;
            let value = parse_f64(lab_path, raw)?;
            record.biochemistry.set(field, Some(LabValue::new(value, canonical)));
        }
    }
    Ok(())
}

fn parse_f64(field: &str, raw: &str) -> Result<f64, IngestError> {
    raw.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| IngestError::Value {
        field: field.to_string(),
        raw: raw.to_string(),
        expected: "finite number",
    })
}

fn parse_u32(field: &str, raw: &str) -> Result<u32, IngestError> {
    // Accept integer-valued decimals ("12.0") since spreadsheet exports
    // frequently format counts that way.
    if let Ok(n) = raw.parse::<u32>() {
        return Ok(n);
    }
    if let Ok(x) = raw.parse::<f64>() {
        if x.is_finite() && x >= 0.0 && x.fract() == 0.0 && x <= u32::MAX as f64 {
            return Ok(x as u32);
        }
    }
    Err(IngestError::Value {
        field: field.to_string(),
        raw: raw.to_string(),
        expected: "non-negative integer",
    })
}

fn parse_bool(field: &str, raw: &str) -> Result<bool, IngestError> {
    match raw.to_ascii_lowercase().as_str() {
        "1" | "y" | "yes" | "true" => Ok(true),
        "0" | "n" | "no" | "false" => Ok(false),
        _ => Err(IngestError::Value {
            field: field.to_string(),
            raw: raw.to_string(),
            expected: "boolean (1/0/y/n/yes/no/true/false)",
        }),
    }
}

fn parse_acne(field: &str, raw: &str) -> Result<AcneSeverity, IngestError> {
    // Binary-positive sources map to the weakest present severity: a bare
    // "yes" never fabricates a moderate or severe finding.
    match raw.to_ascii_lowercase().as_str() {
        "absent" | "none" | "0" | "n" | "no" | "false" => Ok(AcneSeverity::Absent),
        "mild" | "1" | "y" | "yes" | "true" => Ok(AcneSeverity::Mild),
        "moderate" => Ok(AcneSeverity::Moderate),
        "severe" => Ok(AcneSeverity::Severe),
        _ => Err(IngestError::Value {
            field: field.to_string(),
            raw: raw.to_string(),
            expected: "acne severity (absent/mild/moderate/severe or boolean)",
        }),
    }
}
