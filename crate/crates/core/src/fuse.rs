//! Merging miner signals into categorized change records, and the stable
//! control set.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::doc_diff::{normalize_doc_body, DocDiffSignal, DocItem, DocTree, Stability};
use crate::model::{ApiIdentity, ApiSignature, ChangeKind, ChangeRecord, ItemKind, Provenance, SourceClass, VersionId};
use crate::release_notes::ChangelogSignal;
use crate::source::{replacement_hint, SourceSignal};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error, Serialize, Deserialize)]
pub enum FuseError {
    #[error("{api}: deprecation signals name different replacements {candidates:?}")]
    ConflictingReplacement { api: String, candidates: Vec<String> },
    #[error("{api}: signal version {version} outside ({from}, {to}]")]
    SignalOutOfRange { api: String, version: VersionId, from: VersionId, to: VersionId },
    #[error("only {found} stable candidates, {needed} requested")]
    InsufficientCandidates { needed: usize, found: usize },
}

/// A record kept out of the main output, with the reason.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SideRecord {
    pub reason: String,
    pub record: ChangeRecord,
}

#[derive(Debug, Clone, Default)]
pub struct FuseOutput {
    pub records: Vec<ChangeRecord>,
    pub low_confidence: Vec<SideRecord>,
    /// Non-fatal problems; affected records are still emitted.
    pub warnings: Vec<FuseError>,
}

#[derive(Default)]
struct Group<'a> {
    api: Option<ApiIdentity>,
    changelog: Vec<&'a ChangelogSignal>,
    docdiff: Vec<&'a DocDiffSignal>,
    srcdiff: Vec<&'a SourceSignal>,
}

impl Group<'_> {
    fn kinds(&self) -> impl Iterator<Item = (ChangeKind, Provenance)> + '_ {
        self.changelog
            .iter()
            .map(|s| (s.kind, Provenance::Changelog))
            .chain(self.docdiff.iter().map(|s| (s.kind, Provenance::Docdiff)))
            .chain(self.srcdiff.iter().map(|s| (s.kind, Provenance::Srcdiff)))
    }

    fn doc_items(&self, kind: ChangeKind) -> (Option<&DocItem>, Option<&DocItem>) {
        // prefer the signal of the winning kind, then any doc signal
        let ordered =
            self.docdiff.iter().filter(|s| s.kind == kind).chain(self.docdiff.iter().filter(|s| s.kind != kind));
        let mut old = None;
        let mut new = None;
        for s in ordered {
            old = old.or(s.old_item.as_ref());
            new = new.or(s.new_item.as_ref());
        }
        (old, new)
    }
}

/// Resolves a replacement hint relative to the deprecated API: a bare name
/// is a sibling, a path starting with a known crate is absolute, and other
/// paths attach at the first matching segment of the API's parent path.
pub fn resolve_replacement(api: &ApiIdentity, hint: &str) -> Option<ApiIdentity> {
    let segments: Vec<String> = hint.split("::").map(|s| s.trim().to_string()).collect();
    if segments.iter().any(|s| s.is_empty() || !s.chars().all(|c| c.is_alphanumeric() || c == '_')) {
        return None;
    }
    if segments.len() == 1 {
        return Some(api.sibling(&segments[0]));
    }
    let crates = ["std", "core", "alloc", api.crate_name.as_str()];
    let (crate_name, path) = if crates.contains(&segments[0].as_str()) {
        (segments[0].clone(), segments[1..].to_vec())
    } else {
        let parent = &api.path[..api.path.len() - 1];
        let prefix = match parent.iter().position(|p| *p == segments[0]) {
            Some(pos) => &parent[..pos],
            None => parent,
        };
        (api.crate_name.clone(), prefix.iter().cloned().chain(segments).collect())
    };
    let kind = match path.len() {
        n if n >= 2 && path[n - 2].starts_with(|c: char| c.is_uppercase()) => ItemKind::Method,
        _ => api.item_kind,
    };
    ApiIdentity::new(crate_name, path, kind).ok()
}

fn in_range(v: VersionId, from: VersionId, to: VersionId) -> bool {
    from < v && v <= to
}

/// Fuses the three miners' signals for one release pair into at most one
/// record per API.
pub fn fuse(
    changelog: &[ChangelogSignal],
    docdiff: &[DocDiffSignal],
    srcdiff: &[SourceSignal],
    from_v: VersionId,
    to_v: VersionId,
) -> FuseOutput {
    let mut out = FuseOutput::default();
    let mut groups: BTreeMap<String, Group> = BTreeMap::new();
    let mut out_of_range = |api: &ApiIdentity, version: VersionId| {
        out.warnings.push(FuseError::SignalOutOfRange { api: api.canonical(), version, from: from_v, to: to_v });
    };

    for s in changelog {
        if !in_range(s.version, from_v, to_v) {
            out_of_range(&s.api, s.version);
            continue;
        }
        let g = groups.entry(s.api.canonical()).or_default();
        g.api.get_or_insert_with(|| s.api.clone());
        g.changelog.push(s);
    }
    for s in srcdiff {
        if !in_range(s.version, from_v, to_v) {
            out_of_range(&s.api, s.version);
            continue;
        }
        let g = groups.entry(s.api.canonical()).or_default();
        g.srcdiff.push(s);
        // source items know their kind better than a changelog guess
        if g.api.is_none() || g.docdiff.is_empty() {
            g.api = Some(s.api.clone());
        }
    }
    for s in docdiff {
        // doc signals are produced per tree pair, so they carry no version
        let g = groups.entry(s.api.canonical()).or_default();
        g.api = Some(s.api.clone());
        g.docdiff.push(s);
    }

    for group in groups.values() {
        let api = group.api.clone().expect("every group has an API");
        let kind = group.kinds().map(|(k, _)| k).max_by_key(|k| k.precedence()).expect("group is non-empty");
        let provenance: BTreeSet<Provenance> = group.kinds().filter(|(k, _)| *k == kind).map(|(_, p)| p).collect();

        let (old_item, new_item) = group.doc_items(kind);
        let src_sig =
            group.srcdiff.iter().find(|s| s.kind == kind).or(group.srcdiff.first()).and_then(|s| s.signature.clone());
        let new_signature: Option<ApiSignature> = new_item.map(|i| i.signature.clone()).or_else(|| src_sig.clone());
        let old_signature = match (old_item, kind) {
            (Some(i), _) => Some(i.signature.clone()),
            (None, ChangeKind::BehavioralChange) => src_sig.clone(),
            _ => None,
        };

        let mut record =
            ChangeRecord::new(api.clone(), kind, Some(from_v), to_v, old_signature, new_signature, provenance.clone());
        record.old_doc = old_item.map(|i| i.doc_body.clone());
        record.new_doc = new_item.map(|i| i.doc_body.clone());
        record.changelog_note =
            group.changelog.iter().find(|s| s.kind == kind).or(group.changelog.first()).map(|s| s.note.clone());

        if kind == ChangeKind::Deprecation {
            let mut candidates: BTreeMap<String, ApiIdentity> = BTreeMap::new();
            let mut add = |id: ApiIdentity| {
                candidates.entry(id.canonical()).or_insert(id);
            };
            group.changelog.iter().filter_map(|s| s.replacement.clone()).for_each(&mut add);
            group
                .srcdiff
                .iter()
                .filter(|s| s.kind == kind)
                .filter_map(|s| s.replacement_hint.as_deref())
                .filter_map(|h| resolve_replacement(&api, h))
                .for_each(&mut add);
            for item in group.docdiff.iter().filter_map(|s| s.new_item.as_ref()) {
                if let Stability::DeprecatedSince { note, .. } = &item.stability {
                    if let Some(id) = replacement_hint(note).and_then(|h| resolve_replacement(&api, &h)) {
                        add(id);
                    }
                }
            }
            match candidates.len() {
                0 => {}
                1 => record.replacement = candidates.into_values().next(),
                _ => out.warnings.push(FuseError::ConflictingReplacement {
                    api: api.canonical(),
                    candidates: candidates.into_keys().collect(),
                }),
            }
        }

        if kind == ChangeKind::BehavioralChange && provenance.len() == 1 && provenance.contains(&Provenance::Srcdiff) {
            out.low_confidence.push(SideRecord { reason: "behavioral change seen only in source".into(), record });
            continue;
        }
        match record.validate() {
            Ok(()) => out.records.push(record),
            Err(e) => out.low_confidence.push(SideRecord { reason: e.to_string(), record }),
        }
    }
    let order = |r: &ChangeRecord| (r.api.canonical(), r.to_version);
    out.records.sort_by_key(order);
    out.low_confidence.sort_by_key(|s| order(&s.record));
    out
}

/// Official items stabilized before `cutoff` whose signature and doc body
/// never change across the catalog's releases at or after `cutoff`; the
/// first `n` by canonical path.
pub fn select_stable_controls(catalog: &[DocTree], cutoff: VersionId, n: usize) -> Result<Vec<ApiIdentity>, FuseError> {
    if n == 0 {
        return Ok(Vec::new());
    }
    let mut covered: Vec<&DocTree> = catalog.iter().filter(|t| t.version >= cutoff).collect();
    covered.sort_by_key(|t| t.version);
    let Some(first) = covered.first() else {
        return Err(FuseError::InsufficientCandidates { needed: n, found: 0 });
    };
    let stable_before =
        |item: &DocItem| matches!(item.stability, Stability::StableSince { version } if version < cutoff);
    let mut chosen = Vec::new();
    // BTreeMap keys iterate in canonical order
    for (key, item) in &first.items {
        if item.api.source_class() != SourceClass::Official || !stable_before(item) {
            continue;
        }
        let body = normalize_doc_body(&item.doc_body);
        let unchanged = covered[1..].iter().all(|t| {
            t.items.get(key).is_some_and(|other| {
                stable_before(other)
                    && other.signature.raw_text == item.signature.raw_text
                    && normalize_doc_body(&other.doc_body) == body
            })
        });
        if unchanged {
            chosen.push(item.api.clone());
            if chosen.len() == n {
                return Ok(chosen);
            }
        }
    }
    Err(FuseError::InsufficientCandidates { needed: n, found: chosen.len() })
}
