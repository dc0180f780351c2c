use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::api::{ApiIdentity, ApiSignature, SourceClass};
use super::version::VersionId;
use super::ModelError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ChangeKind {
    Stabilization,
    SignatureChange,
    BehavioralChange,
    Deprecation,
}

impl ChangeKind {
    pub const ALL: [ChangeKind; 4] =
        [ChangeKind::Stabilization, ChangeKind::SignatureChange, ChangeKind::BehavioralChange, ChangeKind::Deprecation];

    /// Directory name used for per-kind prompt templates.
    pub fn slug(self) -> &'static str {
        match self {
            ChangeKind::Stabilization => "stabilization",
            ChangeKind::SignatureChange => "signature_change",
            ChangeKind::BehavioralChange => "behavioral_change",
            ChangeKind::Deprecation => "deprecation",
        }
    }

    /// Conflict-resolution rank; higher wins.
    pub fn precedence(self) -> u8 {
        match self {
            ChangeKind::Deprecation => 4,
            ChangeKind::SignatureChange => 3,
            ChangeKind::Stabilization => 2,
            ChangeKind::BehavioralChange => 1,
        }
    }
}

impl fmt::Display for ChangeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            ChangeKind::Stabilization => "Stabilization",
            ChangeKind::SignatureChange => "SignatureChange",
            ChangeKind::BehavioralChange => "BehavioralChange",
            ChangeKind::Deprecation => "Deprecation",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Changelog,
    Docdiff,
    Srcdiff,
}

/// One categorized API-evolution event between two releases.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChangeRecord {
    pub change_id: String,
    pub api: ApiIdentity,
    pub kind: ChangeKind,
    pub from_version: Option<VersionId>,
    pub to_version: VersionId,
    pub old_signature: Option<ApiSignature>,
    pub new_signature: Option<ApiSignature>,
    pub old_doc: Option<String>,
    pub new_doc: Option<String>,
    pub changelog_note: Option<String>,
    pub replacement: Option<ApiIdentity>,
    pub provenance: BTreeSet<Provenance>,
    pub source_class: SourceClass,
}

/// First 16 hex chars of SHA-256 over the identifying fields.
pub fn compute_change_id(
    api: &ApiIdentity,
    kind: ChangeKind,
    from_version: Option<VersionId>,
    to_version: VersionId,
    new_signature: Option<&ApiSignature>,
) -> String {
    let canonical = format!(
        "{}\n{}\n{}\n{}\n{}",
        api.canonical(),
        kind,
        from_version.map(|v| v.to_string()).unwrap_or_else(|| "-".into()),
        to_version,
        new_signature.map(|s| s.raw_text.as_str()).unwrap_or(""),
    );
    short_hash(canonical.as_bytes())
}

pub(crate) fn short_hash(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    hex::encode(&digest[..8])
}

impl ChangeRecord {
    /// Builds a record, filling `change_id` and `source_class`.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        api: ApiIdentity,
        kind: ChangeKind,
        from_version: Option<VersionId>,
        to_version: VersionId,
        old_signature: Option<ApiSignature>,
        new_signature: Option<ApiSignature>,
        provenance: BTreeSet<Provenance>,
    ) -> Self {
        let change_id = compute_change_id(&api, kind, from_version, to_version, new_signature.as_ref());
        let source_class = api.source_class();
        ChangeRecord {
            change_id,
            api,
            kind,
            from_version,
            to_version,
            old_signature,
            new_signature,
            old_doc: None,
            new_doc: None,
            changelog_note: None,
            replacement: None,
            provenance,
            source_class,
        }
    }

    pub fn expected_change_id(&self) -> String {
        compute_change_id(&self.api, self.kind, self.from_version, self.to_version, self.new_signature.as_ref())
    }

    /// Checks the per-kind invariants.
    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |why: &str| Err(ModelError::InvalidRecord(format!("{}: {why}", self.api)));
        if self.provenance.is_empty() {
            return bad("empty provenance");
        }
        if self.replacement.is_some() && self.kind != ChangeKind::Deprecation {
            return bad("replacement on a non-deprecation record");
        }
        for sig in [&self.old_signature, &self.new_signature].into_iter().flatten() {
            sig.validate()?;
        }
        match self.kind {
            ChangeKind::Stabilization if self.new_signature.is_none() => bad("stabilization without new signature"),
            ChangeKind::SignatureChange => match (&self.old_signature, &self.new_signature) {
                (Some(old), Some(new)) if old.raw_text != new.raw_text => Ok(()),
                (Some(_), Some(_)) => bad("signature change with identical signatures"),
                _ => bad("signature change needs both signatures"),
            },
            ChangeKind::BehavioralChange => match (&self.old_signature, &self.new_signature) {
                (Some(old), Some(new)) if old.raw_text != new.raw_text => {
                    bad("behavioral change with differing signatures")
                }
                _ => Ok(()),
            },
            _ => Ok(()),
        }?;
        if self.source_class != self.api.source_class() {
            return bad("source_class does not match crate");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerificationTier {
    Manifest,
    Static,
    Compiled,
}

/// A real-world excerpt demonstrating an API, with the strongest
/// version check it passed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UsageExample {
    pub example_id: String,
    pub api: ApiIdentity,
    pub repo_url: String,
    pub file_path: String,
    pub hit_line: usize,
    pub snippet: String,
    pub resolved_version: VersionId,
    pub verification_tier: VerificationTier,
    pub repo_updated_on: NaiveDate,
}

impl UsageExample {
    pub fn example_id_for(api: &ApiIdentity, repo_url: &str, file_path: &str, hit_line: usize) -> String {
        short_hash(format!("{}\n{repo_url}\n{file_path}\n{hit_line}", api.canonical()).as_bytes())
    }
}

/// A generated benchmark item.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskSpec {
    pub task_id: String,
    pub change_id: String,
    pub query: String,
    pub function_signature: String,
    pub reference_solution: String,
    pub test_program: String,
    pub test_cases: Vec<String>,
    pub target_version: VersionId,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    NoInfo,
    Rag,
    OracleInfo,
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Condition::NoInfo => "no_info",
            Condition::Rag => "rag",
            Condition::OracleInfo => "oracle_info",
        })
    }
}

/// The result of running one candidate solution against one task.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalOutcome {
    pub task_id: String,
    pub model_id: String,
    pub condition: Condition,
    pub sample_index: u32,
    pub compiled: bool,
    pub static_check_passed: bool,
    pub cases_passed: u32,
    pub cases_total: u32,
}

impl EvalOutcome {
    /// Compiled, statically valid and green on every case.
    pub fn is_correct(&self) -> bool {
        self.compiled && self.static_check_passed && self.cases_passed == self.cases_total
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.cases_total == 0 {
            return Err(ModelError::InvalidRecord(format!("{}: cases_total is 0", self.task_id)));
        }
        if self.cases_passed > self.cases_total {
            return Err(ModelError::InvalidRecord(format!("{}: cases_passed > cases_total", self.task_id)));
        }
        if !self.compiled && self.cases_passed != 0 {
            return Err(ModelError::InvalidRecord(format!("{}: uncompiled sample passed cases", self.task_id)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CutoffGroup {
    Before,
    After,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KindMetrics {
    pub pass_at_1: f64,
    pub aua: f64,
    pub coverage: f64,
}

/// Aggregated metrics for one (model, condition) run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricReport {
    pub pass_at_k: BTreeMap<u32, f64>,
    pub aua: f64,
    pub coverage: f64,
    pub by_kind: BTreeMap<ChangeKind, KindMetrics>,
    #[serde(default)]
    pub by_cutoff: BTreeMap<CutoffGroup, f64>,
}

impl MetricReport {
    pub fn validate(&self) -> Result<(), ModelError> {
        let in_unit = |x: f64| (0.0..=1.0).contains(&x);
        let all = self
            .pass_at_k
            .values()
            .copied()
            .chain([self.aua, self.coverage])
            .chain(self.by_kind.values().flat_map(|m| [m.pass_at_1, m.aua, m.coverage]))
            .chain(self.by_cutoff.values().copied());
        for x in all {
            if !in_unit(x) {
                return Err(ModelError::InvalidRecord(format!("metric {x} outside [0, 1]")));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::api::ItemKind;

    fn api() -> ApiIdentity {
        ApiIdentity::parse("std::slice::first_chunk_mut", ItemKind::Method).unwrap()
    }

    fn sig(text: &str) -> ApiSignature {
        ApiSignature::parse(text).unwrap()
    }

    #[test]
    fn change_id_is_stable_and_short() {
        let v = VersionId::new(1, 77, 0);
        let s = sig("pub fn first_chunk_mut<const N: usize>(&mut self) -> Option<&mut [T; N]>");
        let a = compute_change_id(&api(), ChangeKind::Stabilization, Some(VersionId::new(1, 76, 0)), v, Some(&s));
        let b = compute_change_id(&api(), ChangeKind::Stabilization, Some(VersionId::new(1, 76, 0)), v, Some(&s));
        assert_eq!(a, b);
        assert_eq!(a.len(), 16);
        assert!(a.chars().all(|c| c.is_ascii_hexdigit()));
        let c = compute_change_id(&api(), ChangeKind::Deprecation, Some(VersionId::new(1, 76, 0)), v, Some(&s));
        assert_ne!(a, c);
    }

    #[test]
    fn change_id_ignores_provenance_order() {
        let v = VersionId::new(1, 77, 0);
        let s = Some(sig("pub fn f()"));
        let mut p1 = BTreeSet::new();
        p1.insert(Provenance::Srcdiff);
        p1.insert(Provenance::Changelog);
        let mut p2 = BTreeSet::new();
        p2.insert(Provenance::Changelog);
        p2.insert(Provenance::Srcdiff);
        let a = ChangeRecord::new(api(), ChangeKind::Stabilization, None, v, None, s.clone(), p1);
        let b = ChangeRecord::new(api(), ChangeKind::Stabilization, None, v, None, s, p2);
        assert_eq!(a.change_id, b.change_id);
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    }

    #[test]
    fn record_invariants() {
        let v = VersionId::new(1, 77, 0);
        let prov: BTreeSet<_> = [Provenance::Docdiff].into();
        let stab = ChangeRecord::new(api(), ChangeKind::Stabilization, None, v, None, None, prov.clone());
        assert!(stab.validate().is_err());

        let same = ChangeRecord::new(
            api(),
            ChangeKind::SignatureChange,
            None,
            v,
            Some(sig("fn a(x: u8)")),
            Some(sig("fn a(x:   u8)")),
            prov.clone(),
        );
        assert!(same.validate().is_err());

        let behav = ChangeRecord::new(
            api(),
            ChangeKind::BehavioralChange,
            None,
            v,
            Some(sig("fn a(x: u8)")),
            Some(sig("fn a(x: u16)")),
            prov.clone(),
        );
        assert!(behav.validate().is_err());

        let mut stab_ok = ChangeRecord::new(api(), ChangeKind::Stabilization, None, v, None, Some(sig("fn a()")), prov);
        assert!(stab_ok.validate().is_ok());
        stab_ok.replacement = Some(api().sibling("b"));
        assert!(stab_ok.validate().is_err());

        let empty = ChangeRecord::new(api(), ChangeKind::Deprecation, None, v, None, None, BTreeSet::new());
        assert!(empty.validate().is_err());
    }

    #[test]
    fn outcome_invariants() {
        let mut o = EvalOutcome {
            task_id: "t".into(),
            model_id: "m".into(),
            condition: Condition::NoInfo,
            sample_index: 0,
            compiled: true,
            static_check_passed: true,
            cases_passed: 4,
            cases_total: 4,
        };
        assert!(o.validate().is_ok() && o.is_correct());
        o.compiled = false;
        assert!(o.validate().is_err());
        o.cases_passed = 0;
        assert!(o.validate().is_ok() && !o.is_correct());
        o.cases_passed = 5;
        o.compiled = true;
        assert!(o.validate().is_err());
    }

    #[test]
    fn tier_order() {
        assert!(VerificationTier::Manifest < VerificationTier::Static);
        assert!(VerificationTier::Static < VerificationTier::Compiled);
    }
}
