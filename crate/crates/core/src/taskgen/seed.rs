use std::cmp::Reverse;
use std::collections::BTreeMap;

use crate::model::{ApiIdentity, ChangeKind, ChangeRecord, UsageExample, VersionId};
use crate::program::CheckStanza;

/// Most usage examples carried into a seed.
pub const MAX_SEED_USAGES: usize = 3;

/// Model-facing view of one change record, with separate pre- and
/// post-change sections when a pre-change state exists.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SeedBundle {
    pub change_id: String,
    pub api: ApiIdentity,
    pub kind: ChangeKind,
    pub replacement: Option<ApiIdentity>,
    pub target_version: VersionId,
    pub signature_old: Option<String>,
    pub signature_new: Option<String>,
    pub doc_old: Option<String>,
    pub doc_new: Option<String>,
    pub note: Option<String>,
    pub usages: Vec<UsageExample>,
}

pub fn prepare_seed(change: &ChangeRecord, usages: &[UsageExample]) -> SeedBundle {
    let key = change.api.canonical();
    let mut picked: Vec<&UsageExample> = usages.iter().filter(|u| u.api.canonical() == key).collect();
    picked.sort_by(|a, b| {
        (Reverse(a.verification_tier), &a.example_id).cmp(&(Reverse(b.verification_tier), &b.example_id))
    });
    picked.truncate(MAX_SEED_USAGES);
    SeedBundle {
        change_id: change.change_id.clone(),
        api: change.api.clone(),
        kind: change.kind,
        replacement: change.replacement.clone(),
        target_version: change.to_version,
        signature_old: change.old_signature.as_ref().map(|s| s.raw_text.clone()),
        signature_new: change.new_signature.as_ref().map(|s| s.raw_text.clone()),
        doc_old: change.old_doc.clone(),
        doc_new: change.new_doc.clone(),
        note: change.changelog_note.clone(),
        usages: picked.into_iter().cloned().collect(),
    }
}

impl SeedBundle {
    pub fn has_pre_state(&self) -> bool {
        self.signature_old.is_some() || self.doc_old.is_some()
    }

    /// Static-check constraints for tasks built from this seed.
    pub fn stanza(&self) -> CheckStanza {
        let target = self.api.path_string();
        match (self.kind, &self.replacement) {
            (ChangeKind::Deprecation, Some(r)) if r.final_segment() != self.api.final_segment() => {
                CheckStanza { require: vec![r.path_string()], forbid: vec![target] }
            }
            (ChangeKind::Deprecation, _) => CheckStanza { require: vec![], forbid: vec![target] },
            _ => CheckStanza { require: vec![target], forbid: vec![] },
        }
    }

    fn doc_section(&self) -> String {
        let mut out = String::new();
        if self.has_pre_state() {
            out.push_str(&format!(
                "Pre-change:\n{}\n{}\n\n",
                self.signature_old.as_deref().unwrap_or("(signature unchanged)"),
                self.doc_old.as_deref().unwrap_or("(no documentation)")
            ));
        }
        out.push_str(&format!(
            "Post-change ({}):\n{}\n{}",
            self.target_version,
            self.signature_new.as_deref().unwrap_or("(no signature recorded)"),
            self.doc_new.as_deref().unwrap_or("(no documentation)")
        ));
        if let Some(note) = &self.note {
            out.push_str(&format!("\n\nRelease note: {note}"));
        }
        out
    }

    fn usage_section(&self) -> String {
        if self.usages.is_empty() {
            return "(none)".into();
        }
        self.usages
            .iter()
            .map(|u| format!("From {} ({}, line {}):\n{}", u.repo_url, u.file_path, u.hit_line, u.snippet))
            .collect::<Vec<_>>()
            .join("\n\n")
    }

    /// Placeholder values shared by every stage.
    pub fn bindings(&self) -> BTreeMap<&'static str, String> {
        BTreeMap::from([
            ("api_path", self.api.canonical()),
            ("change_kind", self.kind.to_string()),
            ("replacement", self.replacement.as_ref().map(ApiIdentity::canonical).unwrap_or_else(|| "none".into())),
            ("signature_old", self.signature_old.clone().unwrap_or_else(|| "(none)".into())),
            ("signature_new", self.signature_new.clone().unwrap_or_else(|| "(none)".into())),
            ("doc", self.doc_section()),
            ("usage_examples", self.usage_section()),
        ])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ApiSignature, ItemKind, Provenance, VerificationTier};
    use std::collections::BTreeSet;

    fn record(kind: ChangeKind, old: Option<&str>) -> ChangeRecord {
        let api = ApiIdentity::parse("std::slice::first_chunk_mut", ItemKind::Method).unwrap();
        let new =
            ApiSignature::parse("pub fn first_chunk_mut<const N: usize>(&mut self) -> Option<&mut [T; N]>").unwrap();
        ChangeRecord::new(
            api,
            kind,
            Some(VersionId::new(1, 76, 0)),
            VersionId::new(1, 77, 0),
            old.map(|o| ApiSignature::parse(o).unwrap()),
            Some(new),
            BTreeSet::from([Provenance::Docdiff]),
        )
    }

    fn usage(id: &str, tier: VerificationTier) -> UsageExample {
        UsageExample {
            example_id: id.into(),
            api: ApiIdentity::parse("std::slice::first_chunk_mut", ItemKind::Method).unwrap(),
            repo_url: "https://example.org/r".into(),
            file_path: "src/lib.rs".into(),
            hit_line: 3,
            snippet: "buf.first_chunk_mut::<4>()".into(),
            resolved_version: VersionId::new(1, 77, 0),
            verification_tier: tier,
            repo_updated_on: "2024-05-01".parse().unwrap(),
        }
    }

    #[test]
    fn stabilization_has_post_state_only() {
        let seed = prepare_seed(&record(ChangeKind::Stabilization, None), &[usage("u1", VerificationTier::Static)]);
        assert!(!seed.has_pre_state());
        let doc = &seed.bindings()["doc"];
        assert!(!doc.contains("Pre-change") && doc.contains("Post-change (1.77.0)"));
        assert_eq!(seed.usages.len(), 1);
    }

    #[test]
    fn signature_change_has_both_sections() {
        let seed = prepare_seed(
            &record(ChangeKind::SignatureChange, Some("pub fn first_chunk_mut(&mut self) -> Option<&mut [T]>")),
            &[],
        );
        let doc = &seed.bindings()["doc"];
        assert!(doc.contains("Pre-change:\npub fn first_chunk_mut(&mut self)") && doc.contains("Post-change"));
    }

    #[test]
    fn keeps_three_highest_tier_usages() {
        let usages = vec![
            usage("a", VerificationTier::Manifest),
            usage("b", VerificationTier::Compiled),
            usage("c", VerificationTier::Static),
            usage("d", VerificationTier::Manifest),
            usage("e", VerificationTier::Compiled),
        ];
        let seed = prepare_seed(&record(ChangeKind::Stabilization, None), &usages);
        let ids: Vec<_> = seed.usages.iter().map(|u| u.example_id.as_str()).collect();
        assert_eq!(ids, vec!["b", "e", "c"]);
    }

    #[test]
    fn deprecation_stanza() {
        let mut r = record(ChangeKind::Deprecation, None);
        r.replacement = Some(ApiIdentity::parse("std::slice::first_chunk", ItemKind::Method).unwrap());
        let s = prepare_seed(&r, &[]).stanza();
        assert_eq!(s.require, vec!["slice::first_chunk"]);
        assert_eq!(s.forbid, vec!["slice::first_chunk_mut"]);
    }
}
