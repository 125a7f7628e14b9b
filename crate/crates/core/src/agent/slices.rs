//! Per-step patient slices.
//!
//! The coordinator sends each specialist only the fields its step needs.
//! `validate_slice` is the strict-mode assertion that a slice respects the
//! step's declared field set — the data-minimization contract the prompt
//! property tests scan for.

use serde_json::{json, Map, Value};

use crate::patient::PatientRecord;

use super::{PromptError, WorkflowStep};

/// Build the minimal slice of `record` a step is allowed to see.
pub fn slice_for_step(record: &PatientRecord, step: WorkflowStep) -> Value {
    match step {
        WorkflowStep::Step1Clinical => {
            let mut obj = Map::new();
            if let Some(age) = record.age_years {
                obj.insert("age_years".into(), json!(age));
            }
            if let Some(ypm) = record.years_post_menarche {
                obj.insert("years_post_menarche".into(), json!(ypm));
            }
            obj.insert(
                "menstrual".into(),
                serde_json::to_value(&record.menstrual).expect("serializable"),
            );
            obj.insert(
                "clinical_signs".into(),
                serde_json::to_value(&record.clinical_signs).expect("serializable"),
            );
            Value::Object(obj)
        }
        WorkflowStep::Step2Biochemical => {
            let mut labs = Map::new();
            for (field, lab) in record.biochemistry.labs() {
                let name = field.path_segment();
                if STEP2_LABS.contains(&name) {
                    if let Some(lab) = lab {
                        labs.insert(name.into(), serde_json::to_value(lab).expect("serializable"));
                    }
                }
            }
            json!({ "biochemistry": labs })
        }
        WorkflowStep::Step3Imaging => {
            json!({ "imaging": serde_json::to_value(&record.imaging).expect("serializable") })
        }
        WorkflowStep::Exclusion => {
            let mut labs = Map::new();
            for (field, lab) in record.biochemistry.labs() {
                let name = field.path_segment();
                if EXCLUSION_LABS.contains(&name) {
                    if let Some(lab) = lab {
                        labs.insert(name.into(), serde_json::to_value(lab).expect("serializable"));
                    }
                }
            }
            json!({ "biochemistry": labs })
        }
        // Non-diagnosis steps carry bespoke payloads, not patient slices.
        _ => Value::Object(Map::new()),
    }
}

const STEP2_LABS: [&str; 5] =
    ["total_testosterone", "free_testosterone", "dheas", "shbg", "free_androgen_index"];

const EXCLUSION_LABS: [&str; 3] = ["ohp_17", "tsh", "prolactin"];

const MENSTRUAL_FIELDS: [&str; 4] = [
    "typical_cycle_min_days",
    "typical_cycle_max_days",
    "cycles_per_year",
    "longest_single_cycle_days",
];

const CLINICAL_FIELDS: [&str; 3] = ["ferriman_gallwey_score", "acne", "androgenic_alopecia"];

const IMAGING_FIELDS: [&str; 5] = [
    "follicle_count_left",
    "follicle_count_right",
    "ovarian_volume_left_ml",
    "ovarian_volume_right_ml",
    "narrative",
];

/// Assert a slice stays within the step's declared field set.
pub fn validate_slice(step: WorkflowStep, slice: &Value) -> Result<(), PromptError> {
    let violation = |detail: String| PromptError::SliceViolation { step, detail };
    let object = slice
        .as_object()
        .ok_or_else(|| violation("slice must be a JSON object".to_string()))?;

    let check_nested = |key: &str, value: &Value, allowed: &[&str]| -> Result<(), PromptError> {
        let nested = value
            .as_object()
            .ok_or_else(|| violation(format!("{key} must be an object")))?;
        for field in nested.keys() {
            if !allowed.contains(&field.as_str()) {
                return Err(violation(format!("field {key}.{field} outside declared slice")));
            }
        }
        Ok(())
    };

    match step {
        WorkflowStep::Step1Clinical => {
            for (key, value) in object {
                match key.as_str() {
                    "age_years" | "years_post_menarche" => {}
                    "menstrual" => check_nested(key, value, &MENSTRUAL_FIELDS)?,
                    "clinical_signs" => check_nested(key, value, &CLINICAL_FIELDS)?,
                    other => {
                        return Err(violation(format!("field {other} outside declared slice")))
                    }
                }
            }
        }
        WorkflowStep::Step2Biochemical => {
            for (key, value) in object {
                match key.as_str() {
                    "biochemistry" => check_nested(key, value, &STEP2_LABS)?,
                    other => {
                        return Err(violation(format!("field {other} outside declared slice")))
                    }
                }
            }
        }
        WorkflowStep::Step3Imaging => {
            for (key, value) in object {
                match key.as_str() {
                    "imaging" => check_nested(key, value, &IMAGING_FIELDS)?,
                    other => {
                        return Err(violation(format!("field {other} outside declared slice")))
                    }
                }
            }
        }
        WorkflowStep::Exclusion => {
            for (key, value) in object {
                match key.as_str() {
                    "biochemistry" => check_nested(key, value, &EXCLUSION_LABS)?,
                    other => {
                        return Err(violation(format!("field {other} outside declared slice")))
                    }
                }
            }
        }
        _ => {}
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::patient::LabValue;

    fn full_record() -> PatientRecord {
        let mut r = PatientRecord::empty("p");
        r.age_years = Some(27.0);
        r.years_post_menarche = Some(14.0);
        r.menstrual.typical_cycle_min_days = Some(24);
        r.clinical_signs.ferriman_gallwey_score = Some(6);
        r.biochemistry.free_testosterone = Some(LabValue::new(12.0, "pg/mL"));
        r.biochemistry.tsh = Some(LabValue::new(2.0, "mIU/L"));
        r.imaging.follicle_count_left = Some(22);
        r
    }

    #[test]
    fn step1_slice_has_no_biochem_or_imaging() {
        let slice = slice_for_step(&full_record(), WorkflowStep::Step1Clinical);
        let text = slice.to_string();
        assert!(!text.contains("biochemistry"));
        assert!(!text.contains("imaging"));
        assert!(!text.contains("free_testosterone"));
        assert!(text.contains("typical_cycle_min_days"));
        validate_slice(WorkflowStep::Step1Clinical, &slice).unwrap();
    }

    #[test]
    fn step3_slice_has_no_menstrual_history() {
        let slice = slice_for_step(&full_record(), WorkflowStep::Step3Imaging);
        let text = slice.to_string();
        assert!(!text.contains("menstrual"));
        assert!(!text.contains("cycle"));
        assert!(text.contains("follicle_count_left"));
        validate_slice(WorkflowStep::Step3Imaging, &slice).unwrap();
    }

    #[test]
    fn exclusion_slice_carries_only_screening_labs() {
        let slice = slice_for_step(&full_record(), WorkflowStep::Exclusion);
        let text = slice.to_string();
        assert!(text.contains("tsh"));
        assert!(!text.contains("free_testosterone"));
        validate_slice(WorkflowStep::Exclusion, &slice).unwrap();
    }

    #[test]
    fn strict_validation_rejects_leaky_slices() {
        let leaky = serde_json::json!({
            "menstrual": {"typical_cycle_min_days": 24},
            "biochemistry": {"tsh": {"value": 2.0, "unit": "mIU/L"}}
        });
        let err = validate_slice(WorkflowStep::Step1Clinical, &leaky).unwrap_err();
        assert!(err.to_string().contains("biochemistry"), "{err}");
    }
}
