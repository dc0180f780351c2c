//! Extraction of announced stabilizations and deprecations from release notes.
//!
//! A line yields a signal when it carries one of the verb stems `Stabilize`,
//! `stabilized`, `Deprecate` or `deprecated`, and at least one backtick-quoted
//! path that contains `::` or names a known item. The first such path is the
//! API; on deprecation lines a second one is taken as the replacement.

use std::collections::{BTreeSet, HashSet};

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::model::{ApiIdentity, ChangeKind, ItemKind, VersionId};

/// One announcement found in a release-notes body.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChangelogSignal {
    pub api: ApiIdentity,
    pub kind: ChangeKind,
    pub version: VersionId,
    pub note: String,
    pub replacement: Option<ApiIdentity>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct NotesDiagnostics {
    pub lines: usize,
    pub matched: usize,
    /// Non-empty lines that produced no signal.
    pub skipped: usize,
    /// Lines with an announcement verb but no usable path.
    pub unresolved: usize,
    pub duplicates: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct NotesParse {
    pub signals: Vec<ChangelogSignal>,
    pub diagnostics: NotesDiagnostics,
}

const PRIMITIVES: [&str; 20] = [
    "slice", "str", "array", "bool", "char", "u8", "u16", "u32", "u64", "u128", "usize", "i8", "i16", "i32", "i64",
    "i128", "isize", "f32", "f64", "pointer",
];

/// File name of the notes for one release.
pub fn notes_file_name(version: VersionId) -> String {
    format!("RELEASES-{version}.md")
}

pub fn parse_release_notes(notes_text: &str, version: VersionId) -> NotesParse {
    parse_release_notes_with(notes_text, version, &BTreeSet::new())
}

/// Like [`parse_release_notes`], additionally accepting single-segment
/// names listed in `known_items`.
pub fn parse_release_notes_with(notes_text: &str, version: VersionId, known_items: &BTreeSet<String>) -> NotesParse {
    let backticks = Regex::new(r"`([^`]+)`").expect("valid regex");
    let mut out = NotesParse::default();
    let mut seen = HashSet::new();

    for raw_line in notes_text.lines() {
        let line = raw_line.trim();
        if line.is_empty() {
            continue;
        }
        out.diagnostics.lines += 1;
        let Some(kind) = announced_kind(line) else {
            out.diagnostics.skipped += 1;
            continue;
        };
        let mut paths = backticks.captures_iter(line).filter_map(|c| normalize_api(&c[1], known_items));
        let Some(api) = paths.next() else {
            out.diagnostics.unresolved += 1;
            out.diagnostics.skipped += 1;
            continue;
        };
        let replacement = if kind == ChangeKind::Deprecation { paths.next() } else { None };
        if !seen.insert((api.canonical(), kind)) {
            out.diagnostics.duplicates += 1;
            continue;
        }
        out.diagnostics.matched += 1;
        out.signals.push(ChangelogSignal {
            api,
            kind,
            version,
            note: line.trim_start_matches(['-', '*', '+']).trim().to_string(),
            replacement,
        });
    }
    out
}

fn announced_kind(line: &str) -> Option<ChangeKind> {
    let stems = [
        ("Stabilize", ChangeKind::Stabilization),
        ("stabilized", ChangeKind::Stabilization),
        ("Deprecate", ChangeKind::Deprecation),
        ("deprecated", ChangeKind::Deprecation),
    ];
    stems
        .iter()
        .filter_map(|(stem, kind)| line.find(stem).map(|pos| (pos, *kind)))
        .min_by_key(|(pos, _)| *pos)
        .map(|(_, kind)| kind)
}

/// Turns a quoted span such as `<[T]>::first_chunk_mut` or
/// `core::iter::from_fn()` into an identity, or `None` if it is not a path.
pub fn normalize_api(span: &str, known_items: &BTreeSet<String>) -> Option<ApiIdentity> {
    let mut text = span.trim().to_string();
    for (prefix, replacement) in [("<[T]>::", "slice::"), ("[T]::", "slice::"), ("<str>::", "str::")] {
        if let Some(rest) = text.strip_prefix(prefix) {
            text = format!("{replacement}{rest}");
        }
    }
    let mut is_macro = false;
    if let Some(t) = text.strip_suffix("()") {
        text = t.to_string();
    }
    if let Some(t) = text.strip_suffix('!') {
        text = t.to_string();
        is_macro = true;
    }
    let text = strip_generics(&text)?;
    if text.is_empty() || !text.split("::").all(is_identifier) {
        return None;
    }
    if !text.contains("::") && !known_items.contains(&text) {
        return None;
    }
    let mut segments: Vec<String> = text.split("::").map(str::to_string).collect();
    let crate_name = match segments.first().map(String::as_str) {
        Some("std" | "core" | "alloc") if segments.len() > 1 => segments.remove(0),
        _ => "std".to_string(),
    };
    let kind = if is_macro {
        ItemKind::Macro
    } else if segments.len() >= 2 && is_type_like(&segments[segments.len() - 2]) {
        ItemKind::Method
    } else {
        ItemKind::Function
    };
    ApiIdentity::new(crate_name, segments, kind).ok()
}

fn is_type_like(segment: &str) -> bool {
    segment.chars().next().is_some_and(char::is_uppercase) || PRIMITIVES.contains(&segment)
}

fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    chars.next().is_some_and(|c| c == '_' || c.is_alphabetic()) && chars.all(|c| c == '_' || c.is_alphanumeric())
}

fn strip_generics(text: &str) -> Option<String> {
    let mut out = String::new();
    let mut depth = 0i32;
    for c in text.chars() {
        match c {
            '<' => depth += 1,
            '>' => {
                depth -= 1;
                if depth < 0 {
                    return None;
                }
            }
            _ if depth == 0 => out.push(c),
            _ => {}
        }
    }
    (depth == 0).then(|| out.replace("::::", "::").trim_end_matches("::").to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    const V: VersionId = VersionId::new(1, 77, 0);

    #[test]
    fn stabilize_line() {
        let parsed = parse_release_notes("- Stabilize `slice::first_chunk_mut`", V);
        assert_eq!(parsed.signals.len(), 1);
        let s = &parsed.signals[0];
        assert_eq!(s.kind, ChangeKind::Stabilization);
        assert_eq!(s.api.canonical(), "std::slice::first_chunk_mut");
        assert_eq!(s.api.item_kind, ItemKind::Method);
        assert_eq!(s.version, V);
    }

    #[test]
    fn empty_notes() {
        let parsed = parse_release_notes("", V);
        assert!(parsed.signals.is_empty());
        assert_eq!(parsed.diagnostics, NotesDiagnostics::default());
    }

    #[test]
    fn deprecation_with_replacement() {
        let parsed =
            parse_release_notes("* Deprecate `core::mem::uninitialized` in favor of `mem::MaybeUninit::uninit`.", V);
        let s = &parsed.signals[0];
        assert_eq!(s.kind, ChangeKind::Deprecation);
        assert_eq!(s.api.canonical(), "core::mem::uninitialized");
        assert_eq!(s.api.item_kind, ItemKind::Function);
        assert_eq!(s.replacement.as_ref().unwrap().canonical(), "std::mem::MaybeUninit::uninit");
    }

    #[test]
    fn span_normalization() {
        let none = BTreeSet::new();
        assert_eq!(normalize_api("<[T]>::first_chunk", &none).unwrap().canonical(), "std::slice::first_chunk");
        assert_eq!(normalize_api("Vec::<T>::pop_if()", &none).unwrap().canonical(), "std::Vec::pop_if");
        assert_eq!(normalize_api("std::ptr::addr_of!", &none).unwrap().item_kind, ItemKind::Macro);
        assert!(normalize_api("impl Send for Foo", &none).is_none());
        assert!(normalize_api("matches", &none).is_none());
        let known: BTreeSet<String> = ["matches".to_string()].into();
        assert!(normalize_api("matches!", &known).is_some());
    }

    #[test]
    fn noise_and_duplicates() {
        let text = "\
Language
- Stabilize the `#[diagnostic]` namespace
- Stabilize `slice::first_chunk_mut`
- Stabilize `slice::first_chunk_mut`
- Fixed a bug in `Vec::push`
";
        let parsed = parse_release_notes(text, V);
        assert_eq!(parsed.signals.len(), 1);
        assert_eq!(parsed.diagnostics.duplicates, 1);
        assert_eq!(parsed.diagnostics.unresolved, 1);
        assert_eq!(parsed.diagnostics.skipped, 3);
    }

    #[test]
    fn idempotent_and_version_bound() {
        let text = "Stabilize `a::b`\nDeprecate `c::d`\n";
        let a = parse_release_notes(text, V);
        let b = parse_release_notes(text, V);
        assert_eq!(a, b);
        assert!(a.signals.iter().all(|s| s.version == V));
    }
}
