//! Canonical serialization and normalization helpers.
//!
//! Everything that gets hashed, diffed or replayed goes through this module:
//! canonical JSON (stable field order, compact separators), SHA-256 digests,
//! and the term normalization used for entity merging and alias lookup.

use serde::Serialize;
use sha2::{Digest, Sha256};

/// Compact canonical JSON. Struct fields serialize in declaration order and
/// all map-like data in this crate uses `BTreeMap`, so the output is stable.
pub fn to_canonical_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string(value).expect("canonical serialization cannot fail")
}

/// Pretty canonical JSON used for files meant to be read and diffed.
pub fn to_pretty_json<T: Serialize>(value: &T) -> String {
    let mut out = serde_json::to_string_pretty(value).expect("canonical serialization cannot fail");
    out.push('\n');
    out
}

/// Hex-encoded SHA-256 digest of raw bytes.
pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Hex-encoded SHA-256 of a value's canonical JSON.
pub fn hash_canonical<T: Serialize>(value: &T) -> String {
    sha256_hex(to_canonical_json(value).as_bytes())
}

/// Term normalization for entity merging and dictionary alias lookup:
/// lowercase, collapse internal whitespace, strip terminal punctuation.
pub fn normalize_term(raw: &str) -> String {
    let lowered = raw.to_lowercase();
    let collapsed = lowered.split_whitespace().collect::<Vec<_>>().join(" ");
    collapsed
        .trim_end_matches(|c: char| matches!(c, '.' | ',' | ';' | ':' | '!' | '?'))
        .to_string()
}

/// Identifier-safe slug: normalized term with non-alphanumerics folded to `-`.
pub fn slug(raw: &str) -> String {
    let norm = normalize_term(raw);
    let mut out = String::with_capacity(norm.len());
    let mut last_dash = true;
    for c in norm.chars() {
        if c.is_ascii_alphanumeric() {
            out.push(c);
            last_dash = false;
        } else if !last_dash {
            out.push('-');
            last_dash = true;
        }
    }
    while out.ends_with('-') {
        out.pop();
    }
    out
}

/// Truncate to at most `max_chars` characters on a char boundary, appending
/// an ellipsis marker when text was cut.
pub fn excerpt(text: &str, max_chars: usize) -> String {
    if text.chars().count() <= max_chars {
        return text.to_string();
    }
    let cut: String = text.chars().take(max_chars).collect();
    format!("{}…", cut.trim_end())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalize_collapses_and_strips() {
        assert_eq!(normalize_term("  Polycystic   Ovaries. "), "polycystic ovaries");
        assert_eq!(normalize_term("PCO"), "pco");
        assert_eq!(normalize_term("hirsutism;"), "hirsutism");
    }

    #[test]
    fn slug_is_identifier_safe() {
        assert_eq!(slug("Ferriman-Gallwey Score"), "ferriman-gallwey-score");
        assert_eq!(slug("17-Hydroxyprogesterone (17-OHP)"), "17-hydroxyprogesterone-17-ohp");
    }

    #[test]
    fn sha256_is_stable() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn excerpt_cuts_on_char_boundary() {
        assert_eq!(excerpt("short", 10), "short");
        let cut = excerpt("a".repeat(300).as_str(), 5);
        assert!(cut.starts_with("aaaaa") && cut.ends_with('…'));
    }
}
