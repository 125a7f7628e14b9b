//! Per-field unit allowlists for the biochemistry panel.
//!
//! Values must arrive in a field's canonical unit (or a spelled-differently
//! alias of it). There is no automatic unit conversion: a mapping spec that
//! supplies values in non-canonical units is rejected rather than converted.

use serde::{Deserialize, Serialize};

/// Identifier for each lab slot in the biochemistry panel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BiochemField {
    TotalTestosterone,
    FreeTestosterone,
    Dheas,
    Shbg,
    FreeAndrogenIndex,
    Amh,
    Ohp17,
    Tsh,
    Prolactin,
}

impl BiochemField {
    pub const ALL: [BiochemField; 9] = [
        BiochemField::TotalTestosterone,
        BiochemField::FreeTestosterone,
        BiochemField::Dheas,
        BiochemField::Shbg,
        BiochemField::FreeAndrogenIndex,
        BiochemField::Amh,
        BiochemField::Ohp17,
        BiochemField::Tsh,
        BiochemField::Prolactin,
    ];

    /// Path segment inside `biochemistry.*`.
    pub fn path_segment(self) -> &'static str {
        match self {
            BiochemField::TotalTestosterone => "total_testosterone",
            BiochemField::FreeTestosterone => "free_testosterone",
            BiochemField::Dheas => "dheas",
            BiochemField::Shbg => "shbg",
            BiochemField::FreeAndrogenIndex => "free_androgen_index",
            BiochemField::Amh => "amh",
            BiochemField::Ohp17 => "ohp_17",
            BiochemField::Tsh => "tsh",
            BiochemField::Prolactin => "prolactin",
        }
    }

    pub fn from_path_segment(segment: &str) -> Option<Self> {
        BiochemField::ALL.into_iter().find(|f| f.path_segment() == segment)
    }
}

/// Canonical unit for a lab field — the spelling stored in records.
pub fn canonical_unit(field: BiochemField) -> &'static str {
    match field {
        BiochemField::TotalTestosterone => "ng/dL",
        BiochemField::FreeTestosterone => "pg/mL",
        BiochemField::Dheas => "ug/dL",
        BiochemField::Shbg => "nmol/L",
        BiochemField::FreeAndrogenIndex => "index",
        BiochemField::Amh => "ng/mL",
        BiochemField::Ohp17 => "ng/dL",
        BiochemField::Tsh => "mIU/L",
        BiochemField::Prolactin => "ng/mL",
    }
}

/// Accepted spellings per field. Aliases denote the *same* magnitude as the
/// canonical unit — never a convertible one.
pub fn allowed_units(field: BiochemField) -> &'static [&'static str] {
    match field {
        BiochemField::TotalTestosterone => &["ng/dL"],
        BiochemField::FreeTestosterone => &["pg/mL"],
        BiochemField::Dheas => &["ug/dL", "µg/dL", "mcg/dL"],
        BiochemField::Shbg => &["nmol/L"],
        BiochemField::FreeAndrogenIndex => &["index", "ratio"],
        BiochemField::Amh => &["ng/mL"],
        BiochemField::Ohp17 => &["ng/dL"],
        // 1 µIU/mL equals 1 mIU/L, so both spellings are accepted verbatim.
        BiochemField::Tsh => &["mIU/L", "uIU/mL", "µIU/mL"],
        BiochemField::Prolactin => &["ng/mL"],
    }
}

/// Resolve a raw unit string to the field's canonical unit, if allowed.
/// Matching is case-insensitive over the allowlist.
pub fn normalize_unit(field: BiochemField, raw: &str) -> Option<&'static str> {
    let raw = raw.trim();
    allowed_units(field)
        .iter()
        .find(|u| u.eq_ignore_ascii_case(raw))
        .map(|_| canonical_unit(field))
}
