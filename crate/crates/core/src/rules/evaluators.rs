//! Criterion evaluators.
//!
//! All evaluators are total over valid records: missing data maps to
//! `Uncertain` with machine-readable `missing:<field>` tokens in the
//! reasoning, never to a panic or a fabricated status. Identical inputs
//! produce byte-identical reasoning strings.

use crate::patient::units::{self, BiochemField};
use crate::patient::{AcneSeverity, LabValue, PatientRecord};

use super::{ConfigError, CriterionId, CriterionResult, CriterionStatus, ThresholdConfig, UnitValue};

fn missing(path: &str) -> String {
    format!("missing:{path}")
}

fn result(
    criterion_id: CriterionId,
    status: CriterionStatus,
    reasoning: String,
    inputs_used: Vec<String>,
) -> CriterionResult {
    CriterionResult { criterion_id, status, reasoning, evidence: Vec::new(), inputs_used }
}

/// Record fields a criterion's evaluation consults.
pub fn relevant_inputs(criterion: CriterionId) -> &'static [&'static str] {
    match criterion {
        CriterionId::IrregularCycles => &[
            "years_post_menarche",
            "menstrual.typical_cycle_min_days",
            "menstrual.typical_cycle_max_days",
            "menstrual.cycles_per_year",
            "menstrual.longest_single_cycle_days",
        ],
        CriterionId::ClinicalHyperandrogenism => &[
            "clinical_signs.ferriman_gallwey_score",
            "clinical_signs.acne",
            "clinical_signs.androgenic_alopecia",
        ],
        CriterionId::BiochemicalHyperandrogenism => &[
            "biochemistry.free_testosterone",
            "biochemistry.total_testosterone",
            "biochemistry.free_androgen_index",
            "biochemistry.dheas",
        ],
        CriterionId::Pcom => &[
            "imaging.follicle_count_left",
            "imaging.follicle_count_right",
            "imaging.ovarian_volume_left_ml",
            "imaging.ovarian_volume_right_ml",
        ],
        CriterionId::ExclusionNccah => &["biochemistry.ohp_17"],
        CriterionId::ExclusionThyroid => &["biochemistry.tsh"],
        CriterionId::ExclusionProlactin => &["biochemistry.prolactin"],
    }
}

/// Record fields relevant to a criterion that are absent from the record.
/// Drives the `INDETERMINATE(missing: …)` outcome under the strict policy.
pub fn missing_inputs(criterion: CriterionId, record: &PatientRecord) -> Vec<String> {
    let present = record.present_field_paths();
    relevant_inputs(criterion)
        .iter()
        .filter(|p| !present.contains(p))
        .map(|p| p.to_string())
        .collect()
}

/// Irregular menstrual cycles.
///
/// Yes when any single cycle strictly exceeds the long-cycle cutoff, or —
/// beyond the post-menarche gate — when the typical cycle falls strictly
/// outside the configured bounds or the yearly count falls strictly below
/// the minimum. No when at least one cycle field is present and every
/// present cycle field is within range. Uncertain otherwise.
pub fn eval_irregular_cycles(p: &PatientRecord, cfg: &ThresholdConfig) -> CriterionResult {
    let m = &p.menstrual;
    let mut inputs = Vec::new();
    let mut yes_clauses = Vec::new();

    if let Some(longest) = m.longest_single_cycle_days {
        inputs.push("menstrual.longest_single_cycle_days".to_string());
        if longest > cfg.single_cycle_irregular_days {
            yes_clauses.push(format!(
                "longest_single_cycle_days {longest} > {}",
                cfg.single_cycle_irregular_days
            ));
        }
    }

    let gate_open = p.years_post_menarche.map(|y| y > cfg.post_menarche_years_gate);
    if p.years_post_menarche.is_some() {
        inputs.push("years_post_menarche".to_string());
    }

    let mut gated_clauses = Vec::new();
    if let Some(min) = m.typical_cycle_min_days {
        inputs.push("menstrual.typical_cycle_min_days".to_string());
        if min < cfg.cycle_short_days {
            gated_clauses.push(format!("typical_cycle_min_days {min} < {}", cfg.cycle_short_days));
        }
    }
    if let Some(max) = m.typical_cycle_max_days {
        inputs.push("menstrual.typical_cycle_max_days".to_string());
        if max > cfg.cycle_long_days {
            gated_clauses.push(format!("typical_cycle_max_days {max} > {}", cfg.cycle_long_days));
        }
    }
    if let Some(cpy) = m.cycles_per_year {
        inputs.push("menstrual.cycles_per_year".to_string());
        if cpy < cfg.min_cycles_per_year {
            gated_clauses.push(format!("cycles_per_year {cpy} < {}", cfg.min_cycles_per_year));
        }
    }

    if gate_open == Some(true) && !gated_clauses.is_empty() {
        for clause in &gated_clauses {
            yes_clauses.push(format!(
                "{clause} (years_post_menarche {} > {})",
                fmt_f64(p.years_post_menarche.unwrap()),
                fmt_f64(cfg.post_menarche_years_gate)
            ));
        }
    }

    if !yes_clauses.is_empty() {
        return result(
            CriterionId::IrregularCycles,
            CriterionStatus::Yes,
            yes_clauses.join("; "),
            inputs,
        );
    }

    // Ruling the criterion out demands the complete cycle picture: with a
    // partial panel, an absent field could still hide an irregularity, and a
    // No from partial data would let field-removal flip a Yes into a No.
    let all_cycle_fields_present = m.typical_cycle_min_days.is_some()
        && m.typical_cycle_max_days.is_some()
        && m.cycles_per_year.is_some()
        && m.longest_single_cycle_days.is_some();
    let any_out_of_range = !gated_clauses.is_empty();

    if all_cycle_fields_present && !any_out_of_range {
        let clauses = [
            format!(
                "typical_cycle_min_days {} ≥ {}",
                m.typical_cycle_min_days.unwrap(),
                cfg.cycle_short_days
            ),
            format!(
                "typical_cycle_max_days {} ≤ {}",
                m.typical_cycle_max_days.unwrap(),
                cfg.cycle_long_days
            ),
            format!("cycles_per_year {} ≥ {}", m.cycles_per_year.unwrap(), cfg.min_cycles_per_year),
            format!(
                "longest_single_cycle_days {} ≤ {}",
                m.longest_single_cycle_days.unwrap(),
                cfg.single_cycle_irregular_days
            ),
        ];
        return result(
            CriterionId::IrregularCycles,
            CriterionStatus::No,
            format!("all cycle fields within range ({})", clauses.join(", ")),
            inputs,
        );
    }

    // Out-of-range values behind a closed or unknown post-menarche gate, or
    // no cycle data at all.
    let mut clauses = Vec::new();
    if any_out_of_range {
        match gate_open {
            Some(false) => clauses.push(format!(
                "cycle values outside range but years_post_menarche {} ≤ {}",
                fmt_f64(p.years_post_menarche.unwrap()),
                fmt_f64(cfg.post_menarche_years_gate)
            )),
            None => clauses.push(
                "cycle values outside range but post-menarche gate unknown".to_string(),
            ),
            Some(true) => unreachable!("open gate with out-of-range values is a Yes"),
        }
    } else {
        clauses.push("insufficient cycle data".to_string());
    }
    for token in missing_inputs(CriterionId::IrregularCycles, p) {
        clauses.push(missing(&token.replace("missing:", "")));
    }
    result(CriterionId::IrregularCycles, CriterionStatus::Uncertain, clauses.join("; "), inputs)
}

/// Clinical hyperandrogenism.
///
/// The primary criterion is hirsutism (Ferriman-Gallwey at or above the
/// cutoff). Secondary signs — acne of any severity or androgenic alopecia —
/// are weak when isolated: they yield `Uncertain`, never `Yes`. `No`
/// requires a below-cutoff score *and* known-absent secondary signs.
pub fn eval_clinical_ha(p: &PatientRecord, cfg: &ThresholdConfig) -> CriterionResult {
    let c = &p.clinical_signs;
    let mut inputs = Vec::new();
    if c.ferriman_gallwey_score.is_some() {
        inputs.push("clinical_signs.ferriman_gallwey_score".to_string());
    }
    if c.acne.is_some() {
        inputs.push("clinical_signs.acne".to_string());
    }
    if c.androgenic_alopecia.is_some() {
        inputs.push("clinical_signs.androgenic_alopecia".to_string());
    }

    if let Some(fg) = c.ferriman_gallwey_score {
        if fg >= cfg.fg_cutoff {
            return result(
                CriterionId::ClinicalHyperandrogenism,
                CriterionStatus::Yes,
                format!("ferriman_gallwey_score {fg} ≥ {}", cfg.fg_cutoff),
                inputs,
            );
        }
    }

    let mut secondary = Vec::new();
    if let Some(acne) = c.acne {
        if acne != AcneSeverity::Absent {
            secondary.push(format!("acne {}", acne_label(acne)));
        }
    }
    if c.androgenic_alopecia == Some(true) {
        secondary.push("androgenic_alopecia".to_string());
    }

    if !secondary.is_empty() {
        let fg_clause = match c.ferriman_gallwey_score {
            Some(fg) => format!("ferriman_gallwey_score {fg} < {}", cfg.fg_cutoff),
            None => missing("clinical_signs.ferriman_gallwey_score"),
        };
        return result(
            CriterionId::ClinicalHyperandrogenism,
            CriterionStatus::Uncertain,
            format!(
                "secondary signs only ({}); weak when isolated, never sufficient alone; {fg_clause}",
                secondary.join(", ")
            ),
            inputs,
        );
    }

    let fg_below = c.ferriman_gallwey_score.map(|fg| fg < cfg.fg_cutoff).unwrap_or(false);
    let acne_known_absent = c.acne == Some(AcneSeverity::Absent);
    let alopecia_known_false = c.androgenic_alopecia == Some(false);
    if fg_below && acne_known_absent && alopecia_known_false {
        return result(
            CriterionId::ClinicalHyperandrogenism,
            CriterionStatus::No,
            format!(
                "ferriman_gallwey_score {} < {}; acne absent; no androgenic alopecia",
                c.ferriman_gallwey_score.unwrap(),
                cfg.fg_cutoff
            ),
            inputs,
        );
    }

    let mut clauses = vec!["insufficient clinical sign data".to_string()];
    for token in missing_inputs(CriterionId::ClinicalHyperandrogenism, p) {
        clauses.push(missing(&token.replace("missing:", "")));
    }
    result(CriterionId::ClinicalHyperandrogenism, CriterionStatus::Uncertain, clauses.join("; "), inputs)
}

fn acne_label(a: AcneSeverity) -> &'static str {
    match a {
        AcneSeverity::Absent => "absent",
        AcneSeverity::Mild => "mild",
        AcneSeverity::Moderate => "moderate",
        AcneSeverity::Severe => "severe",
    }
}

const ANDROGEN_MARKERS: [BiochemField; 4] = [
    BiochemField::FreeTestosterone,
    BiochemField::TotalTestosterone,
    BiochemField::FreeAndrogenIndex,
    BiochemField::Dheas,
];

fn androgen_cutoff<'a>(
    cfg: &'a ThresholdConfig,
    field: BiochemField,
) -> (&'static str, &'a Option<UnitValue>) {
    match field {
        BiochemField::FreeTestosterone => ("free_testosterone_upper", &cfg.free_testosterone_upper),
        BiochemField::TotalTestosterone => ("total_testosterone_upper", &cfg.total_testosterone_upper),
        BiochemField::FreeAndrogenIndex => ("fai_upper", &cfg.fai_upper),
        BiochemField::Dheas => ("dheas_upper", &cfg.dheas_upper),
        _ => unreachable!("not an androgen marker"),
    }
}

/// Biochemical hyperandrogenism over the configured androgen markers.
///
/// Yes when any present marker strictly exceeds its upper cutoff; No when
/// all markers are present and within range; Uncertain when markers are
/// missing. A present marker without a configured cutoff is a
/// [`ConfigError`].
pub fn eval_biochemical_ha(
    p: &PatientRecord,
    cfg: &ThresholdConfig,
) -> Result<CriterionResult, ConfigError> {
    let mut inputs = Vec::new();
    let mut elevated = Vec::new();
    let mut in_range = Vec::new();
    let mut absent = Vec::new();

    for field in ANDROGEN_MARKERS {
        let path = format!("biochemistry.{}", field.path_segment());
        match p.biochemistry.get(field) {
            Some(lab) => {
                inputs.push(path.clone());
                let (cutoff_name, cutoff) = androgen_cutoff(cfg, field);
                let cutoff = cutoff.as_ref().ok_or(ConfigError::MissingCutoff {
                    field: path.clone(),
                    cutoff: cutoff_name,
                })?;
                check_units(field, lab, cutoff, cutoff_name)?;
                if lab.value > cutoff.value {
                    elevated.push(format!(
                        "{} {} {} > {}",
                        field.path_segment(),
                        fmt_f64(lab.value),
                        lab.unit,
                        fmt_f64(cutoff.value)
                    ));
                } else {
                    in_range.push(format!(
                        "{} {} ≤ {}",
                        field.path_segment(),
                        fmt_f64(lab.value),
                        fmt_f64(cutoff.value)
                    ));
                }
            }
            None => absent.push(path),
        }
    }

    let criterion = CriterionId::BiochemicalHyperandrogenism;
    if !elevated.is_empty() {
        return Ok(result(criterion, CriterionStatus::Yes, elevated.join("; "), inputs));
    }
    if absent.is_empty() {
        return Ok(result(
            criterion,
            CriterionStatus::No,
            format!("all androgen markers within range ({})", in_range.join(", ")),
            inputs,
        ));
    }
    let mut clauses = if in_range.is_empty() {
        vec!["no androgen markers available".to_string()]
    } else {
        vec![format!("present markers within range ({}), panel incomplete", in_range.join(", "))]
    };
    for path in &absent {
        clauses.push(missing(path));
    }
    Ok(result(criterion, CriterionStatus::Uncertain, clauses.join("; "), inputs))
}

fn check_units(
    field: BiochemField,
    lab: &LabValue,
    cutoff: &UnitValue,
    cutoff_name: &'static str,
) -> Result<(), ConfigError> {
    let lab_unit = units::normalize_unit(field, &lab.unit);
    let cutoff_unit = units::normalize_unit(field, &cutoff.unit);
    if lab_unit.is_none() || lab_unit != cutoff_unit {
        return Err(ConfigError::UnitMismatch {
            cutoff: cutoff_name,
            actual: cutoff.unit.clone(),
            expected: lab.unit.clone(),
        });
    }
    Ok(())
}

/// Polycystic ovarian morphology. Either ovary suffices; thresholds are
/// inclusive (`≥`).
pub fn eval_pcom(p: &PatientRecord, cfg: &ThresholdConfig) -> CriterionResult {
    let i = &p.imaging;
    let mut inputs = Vec::new();
    let mut yes_clauses = Vec::new();
    let mut below = Vec::new();

    for (path, count) in [
        ("imaging.follicle_count_left", i.follicle_count_left),
        ("imaging.follicle_count_right", i.follicle_count_right),
    ] {
        if let Some(n) = count {
            inputs.push(path.to_string());
            if n >= cfg.follicle_count_per_ovary_min {
                yes_clauses.push(format!(
                    "{} {n} ≥ {}",
                    path.trim_start_matches("imaging."),
                    cfg.follicle_count_per_ovary_min
                ));
            } else {
                below.push(format!(
                    "{} {n} < {}",
                    path.trim_start_matches("imaging."),
                    cfg.follicle_count_per_ovary_min
                ));
            }
        }
    }
    for (path, volume) in [
        ("imaging.ovarian_volume_left_ml", i.ovarian_volume_left_ml),
        ("imaging.ovarian_volume_right_ml", i.ovarian_volume_right_ml),
    ] {
        if let Some(v) = volume {
            inputs.push(path.to_string());
            if v >= cfg.ovarian_volume_ml_min {
                yes_clauses.push(format!(
                    "{} {} mL ≥ {}",
                    path.trim_start_matches("imaging."),
                    fmt_f64(v),
                    fmt_f64(cfg.ovarian_volume_ml_min)
                ));
            } else {
                below.push(format!(
                    "{} {} mL < {}",
                    path.trim_start_matches("imaging."),
                    fmt_f64(v),
                    fmt_f64(cfg.ovarian_volume_ml_min)
                ));
            }
        }
    }

    if !yes_clauses.is_empty() {
        return result(CriterionId::Pcom, CriterionStatus::Yes, yes_clauses.join("; "), inputs);
    }
    if below.len() == 4 {
        return result(
            CriterionId::Pcom,
            CriterionStatus::No,
            format!("all imaging measurements below thresholds ({})", below.join(", ")),
            inputs,
        );
    }
    let mut clauses = vec!["insufficient imaging data".to_string()];
    for token in missing_inputs(CriterionId::Pcom, p) {
        clauses.push(missing(&token.replace("missing:", "")));
    }
    result(CriterionId::Pcom, CriterionStatus::Uncertain, clauses.join("; "), inputs)
}

/// Differential exclusion screens. `Yes` means the excluding condition is
/// suspected. Total: a missing lab or missing cutoff yields `Uncertain`.
pub fn eval_exclusions(p: &PatientRecord, cfg: &ThresholdConfig) -> Vec<CriterionResult> {
    let nccah = screen_upper(
        p,
        CriterionId::ExclusionNccah,
        BiochemField::Ohp17,
        "ohp17_upper",
        &cfg.ohp17_upper,
    );
    let thyroid = screen_tsh_window(p, cfg);
    let prolactin = screen_upper(
        p,
        CriterionId::ExclusionProlactin,
        BiochemField::Prolactin,
        "prolactin_upper",
        &cfg.prolactin_upper,
    );
    vec![nccah, thyroid, prolactin]
}

fn screen_upper(
    p: &PatientRecord,
    criterion: CriterionId,
    field: BiochemField,
    cutoff_name: &'static str,
    cutoff: &Option<UnitValue>,
) -> CriterionResult {
    let path = format!("biochemistry.{}", field.path_segment());
    match (p.biochemistry.get(field), cutoff) {
        (Some(lab), Some(cutoff)) => {
            let inputs = vec![path];
            if lab.value > cutoff.value {
                result(
                    criterion,
                    CriterionStatus::Yes,
                    format!(
                        "{} {} {} > {}",
                        field.path_segment(),
                        fmt_f64(lab.value),
                        lab.unit,
                        fmt_f64(cutoff.value)
                    ),
                    inputs,
                )
            } else {
                result(
                    criterion,
                    CriterionStatus::No,
                    format!(
                        "{} {} {} ≤ {}",
                        field.path_segment(),
                        fmt_f64(lab.value),
                        lab.unit,
                        fmt_f64(cutoff.value)
                    ),
                    inputs,
                )
            }
        }
        (Some(_), None) => result(
            criterion,
            CriterionStatus::Uncertain,
            format!("missing_config:{cutoff_name}"),
            vec![path],
        ),
        (None, _) => {
            result(criterion, CriterionStatus::Uncertain, missing(&path), Vec::new())
        }
    }
}

fn screen_tsh_window(p: &PatientRecord, cfg: &ThresholdConfig) -> CriterionResult {
    let criterion = CriterionId::ExclusionThyroid;
    let path = "biochemistry.tsh".to_string();
    match (&p.biochemistry.tsh, &cfg.tsh_lower, &cfg.tsh_upper) {
        (Some(lab), Some(lo), Some(hi)) => {
            let inputs = vec![path];
            if lab.value < lo.value || lab.value > hi.value {
                result(
                    criterion,
                    CriterionStatus::Yes,
                    format!(
                        "tsh {} {} outside [{}, {}]",
                        fmt_f64(lab.value),
                        lab.unit,
                        fmt_f64(lo.value),
                        fmt_f64(hi.value)
                    ),
                    inputs,
                )
            } else {
                result(
                    criterion,
                    CriterionStatus::No,
                    format!(
                        "tsh {} {} within [{}, {}]",
                        fmt_f64(lab.value),
                        lab.unit,
                        fmt_f64(lo.value),
                        fmt_f64(hi.value)
                    ),
                    inputs,
                )
            }
        }
        (Some(_), _, _) => result(
            criterion,
            CriterionStatus::Uncertain,
            "missing_config:tsh_lower/tsh_upper".to_string(),
            vec![path],
        ),
        (None, _, _) => result(criterion, CriterionStatus::Uncertain, missing(&path), Vec::new()),
    }
}

/// Shortest decimal rendering without trailing `.0` noise for integers.
fn fmt_f64(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::patient::PatientRecord;

    fn cfg() -> ThresholdConfig {
        ThresholdConfig::default()
    }

    fn record() -> PatientRecord {
        PatientRecord::empty("t")
    }

    // --- irregular cycles ---

    #[test]
    fn cycle_40_beyond_gate_is_yes() {
        let mut p = record();
        p.years_post_menarche = Some(4.0);
        p.menstrual.typical_cycle_min_days = Some(24);
        p.menstrual.typical_cycle_max_days = Some(40);
        let r = eval_irregular_cycles(&p, &cfg());
        assert_eq!(r.status, CriterionStatus::Yes);
        assert!(r.reasoning.contains("typical_cycle_max_days 40 > 35"), "{}", r.reasoning);
    }

    #[test]
    fn regular_cycles_are_no() {
        let mut p = record();
        p.menstrual.typical_cycle_min_days = Some(28);
        p.menstrual.typical_cycle_max_days = Some(28);
        p.menstrual.cycles_per_year = Some(12);
        p.menstrual.longest_single_cycle_days = Some(30);
        assert_eq!(eval_irregular_cycles(&p, &cfg()).status, CriterionStatus::No);
    }

    #[test]
    fn single_cycle_91_is_yes_even_without_gate() {
        let mut p = record();
        p.menstrual.longest_single_cycle_days = Some(91);
        assert_eq!(eval_irregular_cycles(&p, &cfg()).status, CriterionStatus::Yes);
    }

    #[test]
    fn single_cycle_exactly_90_does_not_trigger() {
        let mut p = record();
        p.menstrual.longest_single_cycle_days = Some(90);
        // The strict > clause does not fire; alone it cannot rule out either.
        let r = eval_irregular_cycles(&p, &cfg());
        assert_eq!(r.status, CriterionStatus::Uncertain);

        // With the full cycle panel in range, 90 exactly is a clean No.
        p.menstrual.typical_cycle_min_days = Some(28);
        p.menstrual.typical_cycle_max_days = Some(30);
        p.menstrual.cycles_per_year = Some(12);
        assert_eq!(eval_irregular_cycles(&p, &cfg()).status, CriterionStatus::No);
    }

    #[test]
    fn abnormal_cycles_behind_closed_gate_are_uncertain() {
        let mut p = record();
        p.years_post_menarche = Some(2.0);
        p.menstrual.typical_cycle_min_days = Some(24);
        p.menstrual.typical_cycle_max_days = Some(40);
        let r = eval_irregular_cycles(&p, &cfg());
        assert_eq!(r.status, CriterionStatus::Uncertain);
        assert!(r.reasoning.contains("years_post_menarche 2 ≤ 3"), "{}", r.reasoning);
    }

    #[test]
    fn no_cycle_data_is_uncertain_with_missing_tokens() {
        let r = eval_irregular_cycles(&record(), &cfg());
        assert_eq!(r.status, CriterionStatus::Uncertain);
        assert!(r.reasoning.contains("missing:menstrual.typical_cycle_min_days"));
    }

    #[test]
    fn cycle_boundaries_follow_strict_inequalities() {
        let run = |min: u32, max: u32| {
            let mut p = record();
            p.years_post_menarche = Some(5.0);
            p.menstrual.typical_cycle_min_days = Some(min);
            p.menstrual.typical_cycle_max_days = Some(max);
            p.menstrual.cycles_per_year = Some(12);
            p.menstrual.longest_single_cycle_days = Some(40);
            eval_irregular_cycles(&p, &cfg()).status
        };
        assert_eq!(run(20, 30), CriterionStatus::Yes, "20 < 21");
        assert_eq!(run(21, 30), CriterionStatus::No, "21 is in range");
        assert_eq!(run(25, 35), CriterionStatus::No, "35 is in range");
        assert_eq!(run(25, 36), CriterionStatus::Yes, "36 > 35");
    }

    // --- clinical hyperandrogenism ---

    #[test]
    fn fg_6_is_yes() {
        let mut p = record();
        p.clinical_signs.ferriman_gallwey_score = Some(6);
        assert_eq!(eval_clinical_ha(&p, &cfg()).status, CriterionStatus::Yes);
    }

    #[test]
    fn fg_boundary_is_inclusive() {
        let run = |fg: u8| {
            let mut p = record();
            p.clinical_signs.ferriman_gallwey_score = Some(fg);
            p.clinical_signs.acne = Some(AcneSeverity::Absent);
            p.clinical_signs.androgenic_alopecia = Some(false);
            eval_clinical_ha(&p, &cfg()).status
        };
        assert_eq!(run(2), CriterionStatus::Yes, "2 ≥ 2");
        assert_eq!(run(1), CriterionStatus::No, "1 < 2 with no secondary signs");
    }

    #[test]
    fn mild_acne_with_low_fg_is_uncertain_never_yes() {
        let mut p = record();
        p.clinical_signs.ferriman_gallwey_score = Some(1);
        p.clinical_signs.acne = Some(AcneSeverity::Mild);
        p.clinical_signs.androgenic_alopecia = Some(false);
        let r = eval_clinical_ha(&p, &cfg());
        assert_eq!(r.status, CriterionStatus::Uncertain);
        assert!(r.reasoning.contains("weak when isolated"), "{}", r.reasoning);
    }

    #[test]
    fn all_signs_absent_is_uncertain() {
        assert_eq!(eval_clinical_ha(&record(), &cfg()).status, CriterionStatus::Uncertain);
    }

    #[test]
    fn alopecia_alone_is_uncertain() {
        let mut p = record();
        p.clinical_signs.androgenic_alopecia = Some(true);
        assert_eq!(eval_clinical_ha(&p, &cfg()).status, CriterionStatus::Uncertain);
    }

    // --- biochemical hyperandrogenism ---

    fn full_panel_at(fraction_of_cutoff: f64) -> PatientRecord {
        let c = cfg();
        let mut p = record();
        p.biochemistry.free_testosterone = Some(LabValue::new(
            c.free_testosterone_upper.as_ref().unwrap().value * fraction_of_cutoff,
            "pg/mL",
        ));
        p.biochemistry.total_testosterone = Some(LabValue::new(
            c.total_testosterone_upper.as_ref().unwrap().value * fraction_of_cutoff,
            "ng/dL",
        ));
        p.biochemistry.free_androgen_index =
            Some(LabValue::new(c.fai_upper.as_ref().unwrap().value * fraction_of_cutoff, "index"));
        p.biochemistry.dheas =
            Some(LabValue::new(c.dheas_upper.as_ref().unwrap().value * fraction_of_cutoff, "ug/dL"));
        p
    }

    #[test]
    fn elevated_free_testosterone_is_yes() {
        let mut p = record();
        p.biochemistry.free_testosterone = Some(LabValue::new(12.0, "pg/mL"));
        let r = eval_biochemical_ha(&p, &cfg()).unwrap();
        assert_eq!(r.status, CriterionStatus::Yes);
    }

    #[test]
    fn markers_exactly_at_cutoffs_are_no() {
        let p = full_panel_at(1.0);
        assert_eq!(eval_biochemical_ha(&p, &cfg()).unwrap().status, CriterionStatus::No);
    }

    #[test]
    fn empty_panel_is_uncertain() {
        let r = eval_biochemical_ha(&record(), &cfg()).unwrap();
        assert_eq!(r.status, CriterionStatus::Uncertain);
        assert!(r.reasoning.contains("missing:biochemistry.free_testosterone"));
    }

    #[test]
    fn partial_normal_panel_is_uncertain() {
        let mut p = record();
        p.biochemistry.total_testosterone = Some(LabValue::new(30.0, "ng/dL"));
        let r = eval_biochemical_ha(&p, &cfg()).unwrap();
        assert_eq!(r.status, CriterionStatus::Uncertain);
    }

    #[test]
    fn present_marker_without_cutoff_is_config_error() {
        let mut c = cfg();
        c.dheas_upper = None;
        let mut p = record();
        p.biochemistry.dheas = Some(LabValue::new(300.0, "ug/dL"));
        assert!(matches!(
            eval_biochemical_ha(&p, &c),
            Err(ConfigError::MissingCutoff { .. })
        ));
    }

    // --- PCOM ---

    #[test]
    fn follicle_count_at_minimum_is_yes_inclusive() {
        let mut p = record();
        p.imaging.follicle_count_right = Some(20);
        assert_eq!(eval_pcom(&p, &cfg()).status, CriterionStatus::Yes);
    }

    #[test]
    fn all_below_defaults_is_no() {
        let mut p = record();
        p.imaging.follicle_count_left = Some(8);
        p.imaging.follicle_count_right = Some(9);
        p.imaging.ovarian_volume_left_ml = Some(5.0);
        p.imaging.ovarian_volume_right_ml = Some(6.0);
        assert_eq!(eval_pcom(&p, &cfg()).status, CriterionStatus::No);
    }

    #[test]
    fn volume_boundary_is_inclusive() {
        let mut p = record();
        p.imaging.ovarian_volume_left_ml = Some(10.0);
        assert_eq!(eval_pcom(&p, &cfg()).status, CriterionStatus::Yes);
        p.imaging.ovarian_volume_left_ml = Some(9.9);
        assert_eq!(eval_pcom(&p, &cfg()).status, CriterionStatus::Uncertain, "single below-threshold measurement cannot rule out");
    }

    #[test]
    fn no_imaging_is_uncertain() {
        assert_eq!(eval_pcom(&record(), &cfg()).status, CriterionStatus::Uncertain);
    }

    // --- exclusions ---

    fn normal_exclusion_labs(p: &mut PatientRecord) {
        p.biochemistry.ohp_17 = Some(LabValue::new(100.0, "ng/dL"));
        p.biochemistry.tsh = Some(LabValue::new(2.0, "mIU/L"));
        p.biochemistry.prolactin = Some(LabValue::new(15.0, "ng/mL"));
    }

    #[test]
    fn all_normal_exclusion_labs_yield_three_no() {
        let mut p = record();
        normal_exclusion_labs(&mut p);
        let results = eval_exclusions(&p, &cfg());
        assert!(results.iter().all(|r| r.status == CriterionStatus::No));
        assert_eq!(results.len(), 3);
    }

    #[test]
    fn elevated_ohp17_flags_nccah() {
        let mut p = record();
        normal_exclusion_labs(&mut p);
        p.biochemistry.ohp_17 = Some(LabValue::new(250.0, "ng/dL"));
        let results = eval_exclusions(&p, &cfg());
        assert_eq!(results[0].criterion_id, CriterionId::ExclusionNccah);
        assert_eq!(results[0].status, CriterionStatus::Yes);
        assert_eq!(results[1].status, CriterionStatus::No);
        assert_eq!(results[2].status, CriterionStatus::No);
    }

    #[test]
    fn absent_tsh_is_uncertain_others_no() {
        let mut p = record();
        normal_exclusion_labs(&mut p);
        p.biochemistry.tsh = None;
        let results = eval_exclusions(&p, &cfg());
        assert_eq!(results[0].status, CriterionStatus::No);
        assert_eq!(results[1].status, CriterionStatus::Uncertain);
        assert!(results[1].reasoning.contains("missing:biochemistry.tsh"));
        assert_eq!(results[2].status, CriterionStatus::No);
    }

    #[test]
    fn tsh_window_bounds_are_inclusive_inside() {
        let run = |v: f64| {
            let mut p = record();
            p.biochemistry.tsh = Some(LabValue::new(v, "mIU/L"));
            eval_exclusions(&p, &cfg())[1].status
        };
        assert_eq!(run(0.4), CriterionStatus::No, "lower bound is inside");
        assert_eq!(run(4.0), CriterionStatus::No, "upper bound is inside");
        assert_eq!(run(0.3), CriterionStatus::Yes);
        assert_eq!(run(4.1), CriterionStatus::Yes);
    }

    #[test]
    fn exclusion_cutoff_boundaries_are_strict() {
        let run = |v: f64| {
            let mut p = record();
            p.biochemistry.ohp_17 = Some(LabValue::new(v, "ng/dL"));
            eval_exclusions(&p, &cfg())[0].status
        };
        assert_eq!(run(200.0), CriterionStatus::No, "at cutoff is not above");
        assert_eq!(run(200.1), CriterionStatus::Yes);
    }

    // --- determinism ---

    #[test]
    fn identical_inputs_yield_identical_reasoning_bytes() {
        let mut p = record();
        p.years_post_menarche = Some(4.0);
        p.menstrual.typical_cycle_max_days = Some(40);
        let a = eval_irregular_cycles(&p, &cfg());
        let b = eval_irregular_cycles(&p, &cfg());
        assert_eq!(a, b);
        assert_eq!(a.reasoning.as_bytes(), b.reasoning.as_bytes());
    }
}
