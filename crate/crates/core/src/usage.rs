//! Real-world usage examples: repo selection, hit finding, context windows
//! and version verification.

use std::cmp::Reverse;
use std::fs;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use rayon::prelude::*;
use semver::VersionReq;
use serde::{Deserialize, Serialize};
use walkdir::WalkDir;

use crate::lexer::{tokenize, usage_lines, Token, TokenKind};
use crate::model::{ApiIdentity, ItemKind, SourceClass, UsageExample, VerificationTier, VersionId};
use crate::sandbox::{CrateType, Job, Sandbox};

#[derive(Debug, thiserror::Error)]
pub enum UsageError {
    #[error("line {line} outside 1..={lines}")]
    LineOutOfRange { line: usize, lines: usize },
    #[error("malformed manifest: {0}")]
    MalformedManifest(String),
}

/// One line of the repo index.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RepoEntry {
    pub repo_url: String,
    pub updated_on: NaiveDate,
    pub local_path: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct UsageHit {
    /// Relative to the repo root, `/`-separated.
    pub file_path: String,
    pub hit_line: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Rejection {
    /// The declared requirement does not admit the target version.
    ManifestExcludes { requirement: String },
    /// The manifest does not depend on the API's crate.
    NotDeclared,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Verification {
    Verified(VerificationTier),
    Rejected(Rejection),
}

/// Repos updated strictly after `release_date`, in index order.
pub fn select_repos(index: &[RepoEntry], release_date: NaiveDate) -> Vec<String> {
    index.iter().filter(|r| r.updated_on > release_date).map(|r| r.repo_url.clone()).collect()
}

/// Lines of `.rs` files where the API's final segment is used in call or
/// path position, sorted by (file, line).
pub fn find_usages(repo_dir: &Path, api: &ApiIdentity) -> Vec<UsageHit> {
    let name = api.final_segment();
    let mut hits: Vec<UsageHit> = WalkDir::new(repo_dir)
        .into_iter()
        .filter_map(Result::ok)
        .filter(|e| e.file_type().is_file() && e.path().extension().is_some_and(|x| x == "rs"))
        .filter_map(|e| {
            let text = fs::read_to_string(e.path()).ok()?;
            let rel = e.path().strip_prefix(repo_dir).ok()?;
            let rel = rel.components().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/");
            Some((rel, text))
        })
        .flat_map(|(rel, text)| {
            usage_lines(&tokenize(&text), name)
                .into_iter()
                .map(move |hit_line| UsageHit { file_path: rel.clone(), hit_line })
        })
        .collect();
    hits.sort();
    hits.dedup();
    hits
}

/// Lines `hit_line-10 ..= hit_line+10`, clipped to the file.
pub fn extract_context(file_text: &str, hit_line: usize) -> Result<String, UsageError> {
    let lines: Vec<&str> = file_text.lines().collect();
    if hit_line == 0 || hit_line > lines.len() {
        return Err(UsageError::LineOutOfRange { line: hit_line, lines: lines.len() });
    }
    let start = hit_line.saturating_sub(10).max(1);
    let end = (hit_line + 10).min(lines.len());
    Ok(lines[start - 1..end].join("\n"))
}

/// True when the snippet uses the API's final segment and ties it to the
/// API: any method call for methods, otherwise a `Parent::name` path or a
/// `use` declaration naming it.
pub fn resolves_api(tokens: &[Token], api: &ApiIdentity) -> bool {
    let name = api.final_segment();
    if usage_lines(tokens, name).is_empty() {
        return false;
    }
    if api.item_kind == ItemKind::Method || api.path.len() == 1 {
        return true;
    }
    let parent = &api.path[api.path.len() - 2];
    let qualified = tokens.windows(3).any(|w| w[0].is_ident(parent) && w[1].is_punct("::") && w[2].is_ident(name));
    if qualified {
        return true;
    }
    // `use a::parent::name;` or `use a::parent::{x, name};`
    let mut in_use = false;
    let mut saw_parent = false;
    for t in tokens {
        if t.is_ident("use") {
            in_use = true;
            saw_parent = false;
        } else if in_use && t.is_punct(";") {
            in_use = false;
        } else if in_use && t.kind == TokenKind::Ident {
            if t.text == *parent {
                saw_parent = true;
            } else if saw_parent && t.text == name {
                return true;
            }
        }
    }
    false
}

fn normalize_crate(name: &str) -> String {
    name.replace('-', "_")
}

/// Requirement strings for `crate_name` across the dependency tables.
fn declared_requirements(manifest: &toml::Table, crate_name: &str) -> Vec<Option<String>> {
    let wanted = normalize_crate(crate_name);
    let mut tables: Vec<&toml::Table> = ["dependencies", "dev-dependencies", "build-dependencies"]
        .iter()
        .filter_map(|k| manifest.get(*k).and_then(toml::Value::as_table))
        .collect();
    if let Some(ws) = manifest.get("workspace").and_then(|w| w.get("dependencies")).and_then(toml::Value::as_table) {
        tables.push(ws);
    }
    let mut found = Vec::new();
    for table in tables {
        for (key, value) in table {
            let package = value.get("package").and_then(toml::Value::as_str).unwrap_or(key);
            if normalize_crate(package) != wanted {
                continue;
            }
            let req = match value {
                toml::Value::String(s) => Some(s.clone()),
                other => other.get("version").and_then(toml::Value::as_str).map(String::from),
            };
            found.push(req);
        }
    }
    found
}

fn admits(requirement: &str, target: VersionId) -> Result<bool, UsageError> {
    let req = VersionReq::parse(requirement.trim())
        .map_err(|e| UsageError::MalformedManifest(format!("requirement {requirement:?}: {e}")))?;
    Ok(req.matches(&target.to_semver()))
}

/// Manifest-level check only.
pub fn check_manifest(
    manifest_text: &str,
    target: VersionId,
    api: &ApiIdentity,
) -> Result<Option<Rejection>, UsageError> {
    let manifest: toml::Table =
        manifest_text.parse().map_err(|e: toml::de::Error| UsageError::MalformedManifest(e.message().to_string()))?;
    if api.source_class() == SourceClass::Official {
        let rust_version = manifest.get("package").and_then(|p| p.get("rust-version")).and_then(toml::Value::as_str);
        return match rust_version {
            Some(rv) if !admits(rv, target)? => Ok(Some(Rejection::ManifestExcludes { requirement: rv.to_string() })),
            _ => Ok(None),
        };
    }
    let reqs = declared_requirements(&manifest, &api.crate_name);
    if reqs.is_empty() {
        return Ok(Some(Rejection::NotDeclared));
    }
    let mut excluded = None;
    for req in reqs {
        match req {
            // path or git dependency without a version: nothing to exclude
            None => return Ok(None),
            Some(r) if admits(&r, target)? => return Ok(None),
            Some(r) => excluded = Some(r),
        }
    }
    Ok(excluded.map(|requirement| Rejection::ManifestExcludes { requirement }))
}

/// Strongest tier the snippet reaches: manifest, then static resolution,
/// then a probe build under the pinned toolchain when a sandbox is given.
pub fn verify_version(
    snippet: &str,
    manifest_text: &str,
    target: VersionId,
    api: &ApiIdentity,
    compile_hook: Option<&dyn Sandbox>,
) -> Result<Verification, UsageError> {
    if let Some(rejection) = check_manifest(manifest_text, target, api)? {
        return Ok(Verification::Rejected(rejection));
    }
    if !resolves_api(&tokenize(snippet), api) {
        return Ok(Verification::Verified(VerificationTier::Manifest));
    }
    let Some(sandbox) = compile_hook else {
        return Ok(Verification::Verified(VerificationTier::Static));
    };
    let job = Job { source: snippet, version: target, crate_type: CrateType::Lib, run: false };
    let compiled = sandbox.execute(&job).map(|r| r.compiled).unwrap_or(false);
    Ok(Verification::Verified(if compiled { VerificationTier::Compiled } else { VerificationTier::Static }))
}

/// An API to collect examples for, with the release it changed in.
#[derive(Debug, Clone)]
pub struct UsageTarget {
    pub api: ApiIdentity,
    pub version: VersionId,
    pub release_date: NaiveDate,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct UsageDiagnostics {
    pub repos_scanned: usize,
    pub hits: usize,
    pub rejected: usize,
    pub malformed_manifests: usize,
}

/// Collects at most `max_per_api` examples per target, strongest tier
/// first, then by (repo, file, line).
pub fn mine_usages(
    repos: &[RepoEntry],
    targets: &[UsageTarget],
    compile_hook: Option<&dyn Sandbox>,
    max_per_api: usize,
) -> (Vec<UsageExample>, UsageDiagnostics) {
    let mut diagnostics = UsageDiagnostics::default();
    let mut all = Vec::new();
    for target in targets {
        let recent = select_repos(repos, target.release_date);
        let per_repo: Vec<(Vec<UsageExample>, UsageDiagnostics)> = repos
            .par_iter()
            .filter(|r| recent.contains(&r.repo_url))
            .map(|repo| scan_repo(repo, target, compile_hook))
            .collect();
        let mut found = Vec::new();
        for (examples, d) in per_repo {
            diagnostics.repos_scanned += d.repos_scanned;
            diagnostics.hits += d.hits;
            diagnostics.rejected += d.rejected;
            diagnostics.malformed_manifests += d.malformed_manifests;
            found.extend(examples);
        }
        found.sort_by(|a, b| {
            (Reverse(a.verification_tier), &a.repo_url, &a.file_path, a.hit_line).cmp(&(
                Reverse(b.verification_tier),
                &b.repo_url,
                &b.file_path,
                b.hit_line,
            ))
        });
        found.truncate(max_per_api);
        all.extend(found);
    }
    all.sort_by(|a, b| (a.api.canonical(), &a.example_id).cmp(&(b.api.canonical(), &b.example_id)));
    (all, diagnostics)
}

fn scan_repo(
    repo: &RepoEntry,
    target: &UsageTarget,
    hook: Option<&dyn Sandbox>,
) -> (Vec<UsageExample>, UsageDiagnostics) {
    let mut d = UsageDiagnostics { repos_scanned: 1, ..Default::default() };
    let manifest = fs::read_to_string(repo.local_path.join("Cargo.toml")).unwrap_or_default();
    let mut out = Vec::new();
    for hit in find_usages(&repo.local_path, &target.api) {
        d.hits += 1;
        let Ok(text) = fs::read_to_string(repo.local_path.join(&hit.file_path)) else { continue };
        let Ok(snippet) = extract_context(&text, hit.hit_line) else { continue };
        match verify_version(&snippet, &manifest, target.version, &target.api, hook) {
            Ok(Verification::Verified(tier)) => out.push(UsageExample {
                example_id: UsageExample::example_id_for(&target.api, &repo.repo_url, &hit.file_path, hit.hit_line),
                api: target.api.clone(),
                repo_url: repo.repo_url.clone(),
                file_path: hit.file_path,
                hit_line: hit.hit_line,
                snippet,
                resolved_version: target.version,
                verification_tier: tier,
                repo_updated_on: repo.updated_on,
            }),
            Ok(Verification::Rejected(_)) => d.rejected += 1,
            Err(_) => {
                d.malformed_manifests += 1;
                break;
            }
        }
    }
    (out, d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sandbox::{ExecResult, SandboxError};

    fn date(s: &str) -> NaiveDate {
        s.parse().unwrap()
    }

    fn fcm() -> ApiIdentity {
        ApiIdentity::parse("std::slice::first_chunk_mut", ItemKind::Method).unwrap()
    }

    fn repo(url: &str, updated: &str) -> RepoEntry {
        RepoEntry { repo_url: url.into(), updated_on: date(updated), local_path: PathBuf::from(url) }
    }

    #[test]
    fn repo_recency_is_strict() {
        let index =
            vec![repo("a", "2024-03-20"), repo("b", "2024-03-21"), repo("c", "2024-04-01"), repo("d", "2025-01-01")];
        assert_eq!(select_repos(&index, date("2024-03-21")), vec!["c", "d"]);
        assert!(select_repos(&[], date("2024-03-21")).is_empty());
    }

    #[test]
    fn usage_hits_use_token_boundaries() {
        let dir = tempfile::tempdir().unwrap();
        fs::create_dir_all(dir.path().join("src")).unwrap();
        fs::write(
            dir.path().join("src/lib.rs"),
            "fn a(buf: &mut [u8]) {\n    let h = buf.first_chunk_mut::<4>();\n    // first_chunk_mut in a comment\n    let s = \"first_chunk_mut\";\n    first_chunk_mut_extra();\n}\n",
        )
        .unwrap();
        fs::write(dir.path().join("data.bin"), [0u8, 159, 146, 150]).unwrap();
        let hits = find_usages(dir.path(), &fcm());
        assert_eq!(hits, vec![UsageHit { file_path: "src/lib.rs".into(), hit_line: 2 }]);
    }

    #[test]
    fn context_windows() {
        let text: String = (1..=100).map(|i| format!("line{i}\n")).collect();
        let ctx = extract_context(&text, 50).unwrap();
        assert_eq!(ctx.lines().next(), Some("line40"));
        assert_eq!(ctx.lines().last(), Some("line60"));
        assert_eq!(ctx.lines().count(), 21);
        assert_eq!(extract_context("a\nb\nc\nd\ne", 3).unwrap(), "a\nb\nc\nd\ne");
        let top = extract_context(&text, 1).unwrap();
        assert_eq!((top.lines().next(), top.lines().last()), (Some("line1"), Some("line11")));
        assert!(matches!(extract_context("a", 2), Err(UsageError::LineOutOfRange { .. })));
        assert!(matches!(extract_context("a", 0), Err(UsageError::LineOutOfRange { .. })));
    }

    fn serde_api() -> ApiIdentity {
        ApiIdentity::parse("serde::de::Deserializer::deserialize_any", ItemKind::Method).unwrap()
    }

    #[test]
    fn caret_and_exact_requirements() {
        let target = VersionId::new(1, 0, 210);
        let snippet = "d.deserialize_any(v)";
        let caret = verify_version(snippet, "[dependencies]\nserde = \"1.0\"\n", target, &serde_api(), None).unwrap();
        assert_eq!(caret, Verification::Verified(VerificationTier::Static));
        let pinned =
            verify_version(snippet, "[dependencies]\nserde = { version = \"=1.0.100\" }\n", target, &serde_api(), None)
                .unwrap();
        assert!(matches!(pinned, Verification::Rejected(Rejection::ManifestExcludes { .. })));
        let absent = verify_version(snippet, "[dependencies]\nrand = \"0.8\"\n", target, &serde_api(), None).unwrap();
        assert_eq!(absent, Verification::Rejected(Rejection::NotDeclared));
        assert!(matches!(
            verify_version(snippet, "[dependencies\n", target, &serde_api(), None),
            Err(UsageError::MalformedManifest(_))
        ));
    }

    #[test]
    fn std_uses_rust_version() {
        let v77 = VersionId::new(1, 77, 0);
        let snippet = "let h = buf.first_chunk_mut::<4>();";
        let m = "[package]\nname = \"x\"\nrust-version = \"1.77\"\n";
        assert_eq!(
            verify_version(snippet, m, v77, &fcm(), None).unwrap(),
            Verification::Verified(VerificationTier::Static)
        );
        let newer = "[package]\nname = \"x\"\nrust-version = \"1.80\"\n";
        assert!(matches!(verify_version(snippet, newer, v77, &fcm(), None).unwrap(), Verification::Rejected(_)));
        assert_eq!(
            verify_version("no use here", "", v77, &fcm(), None).unwrap(),
            Verification::Verified(VerificationTier::Manifest)
        );
    }

    struct FixedSandbox(bool);

    impl Sandbox for FixedSandbox {
        fn execute(&self, _job: &Job<'_>) -> Result<ExecResult, SandboxError> {
            Ok(ExecResult { compiled: self.0, ..Default::default() })
        }
    }

    #[test]
    fn tiers_are_monotone() {
        let v77 = VersionId::new(1, 77, 0);
        let snippet = "pub fn f(b: &mut [u8]) { let _ = b.first_chunk_mut::<4>(); }";
        let ok = verify_version(snippet, "", v77, &fcm(), Some(&FixedSandbox(true))).unwrap();
        assert_eq!(ok, Verification::Verified(VerificationTier::Compiled));
        let fails = verify_version(snippet, "", v77, &fcm(), Some(&FixedSandbox(false))).unwrap();
        assert_eq!(fails, Verification::Verified(VerificationTier::Static));
        // no static resolution means no probe either
        let unresolved = verify_version("nothing", "", v77, &fcm(), Some(&FixedSandbox(true))).unwrap();
        assert_eq!(unresolved, Verification::Verified(VerificationTier::Manifest));
    }

    #[test]
    fn free_functions_need_qualification_or_import() {
        let take = ApiIdentity::parse("std::mem::take", ItemKind::Function).unwrap();
        assert!(resolves_api(&tokenize("let x = mem::take(&mut v);"), &take));
        assert!(resolves_api(&tokenize("use std::mem::take;\nlet x = take(&mut v);"), &take));
        assert!(resolves_api(&tokenize("use std::mem::{swap, take};\nlet x = take(&mut v);"), &take));
        assert!(!resolves_api(&tokenize("let x = take(&mut v);"), &take));
    }
}
