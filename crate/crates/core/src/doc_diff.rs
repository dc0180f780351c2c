//! Parsing of rendered per-item documentation and diffing between releases.
//!
//! The parser reads a minimal HTML dialect, one file per item, laid out as
//! `docs/<version>/<crate>/<path with '__' separators>.html`:
//!
//! ```html
//! <html><head><title>std::slice::first_chunk_mut</title></head><body>
//! <pre class="item-decl">pub fn first_chunk_mut&lt;const N: usize&gt;(&amp;mut self) -&gt; ...</pre>
//! <div class="stability">stable since 1.77.0</div>
//! <div class="docblock"><p>Returns a mutable array reference ...</p></div>
//! </body></html>
//! ```
//!
//! The stability banner reads `stable since X`, `unstable`, or
//! `deprecated since X: note`. A missing banner means the item is stable in
//! the tree's own version (third-party docs carry no banners).

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use rayon::prelude::*;
use regex::Regex;
use scraper::{Html, Selector};
use serde::{Deserialize, Serialize};
use walkdir::WalkDir;

use crate::model::{normalize_whitespace, parse_version, ApiIdentity, ApiSignature, ChangeKind, VersionId};

#[derive(Debug, thiserror::Error)]
pub enum DocDiffError {
    #[error("no documented items parsed under {0}")]
    EmptyTree(PathBuf),
    #[error("malformed doc file {path}: {reason}")]
    MalformedDocFile { path: PathBuf, reason: String },
    #[error("old tree version {old} is not older than new tree version {new}")]
    VersionOrder { old: VersionId, new: VersionId },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "status")]
pub enum Stability {
    StableSince { version: VersionId },
    Unstable,
    DeprecatedSince { version: VersionId, note: String },
}

impl Stability {
    fn banner(&self) -> String {
        match self {
            Stability::StableSince { version } => format!("stable since {version}"),
            Stability::Unstable => "unstable".into(),
            Stability::DeprecatedSince { version, note } if note.is_empty() => format!("deprecated since {version}"),
            Stability::DeprecatedSince { version, note } => format!("deprecated since {version}: {note}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocItem {
    pub api: ApiIdentity,
    pub signature: ApiSignature,
    pub doc_body: String,
    pub stability: Stability,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DocTree {
    pub version: VersionId,
    /// Keyed by canonical path.
    pub items: BTreeMap<String, DocItem>,
}

#[derive(Debug)]
pub struct DocTreeParse {
    pub tree: DocTree,
    pub malformed: Vec<DocDiffError>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocDiffSignal {
    pub api: ApiIdentity,
    pub kind: ChangeKind,
    pub old_item: Option<DocItem>,
    pub new_item: Option<DocItem>,
}

/// Maps `<crate>/<a__b__c>.html` (relative to a version root) to `crate::a::b::c`.
pub fn identity_from_path(relative: &Path) -> Option<(String, Vec<String>)> {
    let mut comps = relative.components().map(|c| c.as_os_str().to_string_lossy().into_owned());
    let crate_name = comps.next()?;
    let file = comps.next()?;
    if comps.next().is_some() {
        return None;
    }
    let stem = file.strip_suffix(".html")?;
    let path: Vec<String> = stem.split("__").map(str::to_string).collect();
    if path.iter().any(String::is_empty) {
        return None;
    }
    Some((crate_name, path))
}

/// File name for an item under its crate directory.
pub fn file_name_for(api: &ApiIdentity) -> String {
    format!("{}.html", api.path.join("__"))
}

fn selector(css: &str) -> Selector {
    Selector::parse(css).expect("static selector")
}

fn stability_patterns() -> &'static (Regex, Regex) {
    static PATTERNS: OnceLock<(Regex, Regex)> = OnceLock::new();
    PATTERNS.get_or_init(|| {
        (
            Regex::new(r"(?i)^stable since (\S+)$").unwrap(),
            Regex::new(r"(?i)^deprecated since (\d+\.\d+\.\d+)(?::\s*(.*))?$").unwrap(),
        )
    })
}

pub fn parse_stability(banner: &str) -> Option<Stability> {
    let text = normalize_whitespace(banner);
    let (stable, deprecated) = stability_patterns();
    if let Some(c) = stable.captures(&text) {
        return Some(Stability::StableSince { version: parse_version(&c[1]).ok()? });
    }
    if let Some(c) = deprecated.captures(&text) {
        return Some(Stability::DeprecatedSince {
            version: parse_version(&c[1]).ok()?,
            note: c.get(2).map(|m| m.as_str().trim().to_string()).unwrap_or_default(),
        });
    }
    let lower = text.to_lowercase();
    (lower == "unstable" || lower.contains("nightly-only") || lower.contains("experimental"))
        .then_some(Stability::Unstable)
}

/// Parses one item file. `relative` is the path below the version root.
pub fn parse_doc_file(html: &str, relative: &Path, version: VersionId) -> Result<DocItem, String> {
    let (crate_name, path) = identity_from_path(relative).ok_or("path does not follow <crate>/<a__b>.html")?;
    let doc = Html::parse_document(html);
    let text_of = |css: &str| doc.select(&selector(css)).next().map(|e| e.text().collect::<String>());

    let title = text_of("title").ok_or("missing <title>")?;
    let expected = format!("{crate_name}::{}", path.join("::"));
    if title.trim() != expected {
        return Err(format!("title {:?} does not match file path {expected:?}", title.trim()));
    }
    let decl = text_of("pre.item-decl").ok_or("missing signature block")?;
    let signature = ApiSignature::parse(&decl).map_err(|e| e.to_string())?;
    let stability = match text_of("div.stability") {
        Some(banner) => parse_stability(&banner).ok_or_else(|| format!("unrecognized stability banner {banner:?}"))?,
        None => Stability::StableSince { version },
    };
    if let Stability::StableSince { version: since } | Stability::DeprecatedSince { version: since, .. } = &stability {
        if *since > version {
            return Err(format!("stability version {since} is newer than tree version {version}"));
        }
    }
    let doc_body = doc
        .select(&selector("div.docblock"))
        .next()
        .map(|block| {
            block.text().flat_map(str::lines).map(str::trim).filter(|l| !l.is_empty()).collect::<Vec<_>>().join("\n")
        })
        .unwrap_or_default();
    let item_kind = signature.infer_kind();
    let api = ApiIdentity::new(crate_name, path, item_kind).map_err(|e| e.to_string())?;
    Ok(DocItem { api, signature, doc_body, stability })
}

/// Parses every `.html` file below `root_dir` (the directory for one version).
pub fn parse_doc_tree(root_dir: &Path, version: VersionId) -> Result<DocTreeParse, DocDiffError> {
    if !root_dir.is_dir() {
        return Err(DocDiffError::Io {
            path: root_dir.to_path_buf(),
            source: std::io::Error::new(std::io::ErrorKind::NotFound, "doc root not found"),
        });
    }
    let mut files: Vec<PathBuf> = WalkDir::new(root_dir)
        .into_iter()
        .filter_map(Result::ok)
        .filter(|e| e.file_type().is_file() && e.path().extension().is_some_and(|x| x == "html"))
        .map(|e| e.into_path())
        .collect();
    files.sort();

    let parsed: Vec<Result<DocItem, DocDiffError>> = files
        .par_iter()
        .map(|file| {
            let relative = file.strip_prefix(root_dir).unwrap_or(file);
            let html = fs::read_to_string(file).map_err(|e| DocDiffError::Io { path: file.clone(), source: e })?;
            parse_doc_file(&html, relative, version)
                .map_err(|reason| DocDiffError::MalformedDocFile { path: file.clone(), reason })
        })
        .collect();

    let mut items = BTreeMap::new();
    let mut malformed = Vec::new();
    for result in parsed {
        match result {
            Ok(item) => {
                items.insert(item.api.canonical(), item);
            }
            Err(e) => malformed.push(e),
        }
    }
    if items.is_empty() {
        return Err(DocDiffError::EmptyTree(root_dir.to_path_buf()));
    }
    Ok(DocTreeParse { tree: DocTree { version, items }, malformed })
}

/// Renders an item in the fixture dialect accepted by [`parse_doc_file`].
pub fn render_doc_html(item: &DocItem) -> String {
    let esc = |s: &str| s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;");
    let paragraphs: String =
        item.doc_body.split("\n\n").filter(|p| !p.trim().is_empty()).map(|p| format!("<p>{}</p>\n", esc(p))).collect();
    format!(
        "<!DOCTYPE html>\n<html>\n<head><title>{}</title></head>\n<body>\n<pre class=\"item-decl\">{}</pre>\n<div class=\"stability\">{}</div>\n<div class=\"docblock\">\n{}</div>\n</body>\n</html>\n",
        esc(&item.api.canonical()),
        esc(&item.signature.raw_text),
        esc(&item.stability.banner()),
        paragraphs
    )
}

fn banner_line() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"(?i)^\s*(stable since\b|deprecated since\b|unstable\b|this is a nightly-only experimental api)")
            .unwrap()
    })
}

/// Doc body with banner lines removed and whitespace runs collapsed.
pub fn normalize_doc_body(body: &str) -> String {
    let kept: Vec<&str> = body.lines().filter(|l| !banner_line().is_match(l)).collect();
    normalize_whitespace(&kept.join(" "))
}

/// Emits change candidates between two releases' trees.
///
/// Signature and behavior candidates are only produced for items that were
/// already stable in `old`; edits to unstable items are part of their
/// stabilization.
pub fn diff_doc_trees(old: &DocTree, new: &DocTree) -> Result<Vec<DocDiffSignal>, DocDiffError> {
    if old.version >= new.version {
        return Err(DocDiffError::VersionOrder { old: old.version, new: new.version });
    }
    let mut keys: Vec<&String> = old.items.keys().chain(new.items.keys()).collect();
    keys.sort();
    keys.dedup();

    let mut signals = Vec::new();
    for key in keys {
        let (before, after) = (old.items.get(key), new.items.get(key));
        let emit = |kind: ChangeKind| DocDiffSignal {
            api: after.or(before).map(|i| i.api.clone()).expect("key from one tree"),
            kind,
            old_item: before.cloned(),
            new_item: after.cloned(),
        };
        match (before, after) {
            (Some(b), Some(a)) => {
                let was_unstable = b.stability == Stability::Unstable;
                if was_unstable && matches!(a.stability, Stability::StableSince { .. }) {
                    signals.push(emit(ChangeKind::Stabilization));
                }
                if !was_unstable {
                    if b.signature.raw_text != a.signature.raw_text {
                        signals.push(emit(ChangeKind::SignatureChange));
                    } else if normalize_doc_body(&b.doc_body) != normalize_doc_body(&a.doc_body) {
                        signals.push(emit(ChangeKind::BehavioralChange));
                    }
                }
                let was_deprecated = matches!(b.stability, Stability::DeprecatedSince { .. });
                if !was_deprecated && matches!(a.stability, Stability::DeprecatedSince { .. }) {
                    signals.push(emit(ChangeKind::Deprecation));
                }
            }
            (None, Some(a)) if a.stability == (Stability::StableSince { version: new.version }) => {
                signals.push(emit(ChangeKind::Stabilization));
            }
            _ => {}
        }
    }
    Ok(signals)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ItemKind;

    const V76: VersionId = VersionId::new(1, 76, 0);
    const V77: VersionId = VersionId::new(1, 77, 0);

    fn item(path: &str, sig: &str, body: &str, stability: Stability) -> DocItem {
        let signature = ApiSignature::parse(sig).unwrap();
        let api = ApiIdentity::parse(path, signature.infer_kind()).unwrap();
        DocItem { api, signature, doc_body: body.into(), stability }
    }

    fn stable(v: VersionId) -> Stability {
        Stability::StableSince { version: v }
    }

    fn tree(version: VersionId, items: Vec<DocItem>) -> DocTree {
        DocTree { version, items: items.into_iter().map(|i| (i.api.canonical(), i)).collect() }
    }

    const FIRST_CHUNK: &str = "pub const fn first_chunk_mut<const N: usize>(&mut self) -> Option<&mut [T; N]>";

    #[test]
    fn banner_parsing() {
        assert_eq!(parse_stability("stable since 1.77.0"), Some(stable(V77)));
        assert_eq!(parse_stability("  Stable since\n 1.77.0 "), Some(stable(V77)));
        assert_eq!(parse_stability("unstable"), Some(Stability::Unstable));
        assert_eq!(
            parse_stability("deprecated since 1.81.0: use `new_fn` instead"),
            Some(Stability::DeprecatedSince { version: VersionId::new(1, 81, 0), note: "use `new_fn` instead".into() })
        );
        assert_eq!(parse_stability("stable since soon"), None);
    }

    #[test]
    fn html_round_trip() {
        let original = item(
            "std::slice::first_chunk_mut",
            FIRST_CHUNK,
            "Returns the first N items.\n\nReturns None when short.",
            stable(V77),
        );
        let html = render_doc_html(&original);
        let parsed = parse_doc_file(&html, Path::new("std/slice__first_chunk_mut.html"), V77).unwrap();
        assert_eq!(parsed.api, original.api);
        assert_eq!(parsed.api.item_kind, ItemKind::Method);
        assert_eq!(parsed.signature, original.signature);
        assert_eq!(parsed.stability, stable(V77));
        assert_eq!(normalize_doc_body(&parsed.doc_body), normalize_doc_body(&original.doc_body));
    }

    #[test]
    fn malformed_files_are_reported() {
        let good = item("std::a::f", "pub fn f()", "body", stable(V76));
        let html = render_doc_html(&good);
        assert!(parse_doc_file(&html, Path::new("std/a__g.html"), V77).unwrap_err().contains("title"));
        let future = render_doc_html(&item("std::a::f", "pub fn f()", "body", stable(VersionId::new(1, 90, 0))));
        assert!(parse_doc_file(&future, Path::new("std/a__f.html"), V77).is_err());
        assert!(parse_doc_file("<html><title>std::a::f</title></html>", Path::new("std/a__f.html"), V77).is_err());
    }

    #[test]
    fn identical_trees_have_no_diff() {
        let t = tree(V76, vec![item("std::a::f", "pub fn f()", "body", stable(V76))]);
        let mut t2 = t.clone();
        t2.version = V77;
        assert!(diff_doc_trees(&t, &t2).unwrap().is_empty());
    }

    #[test]
    fn version_order_enforced() {
        let t = tree(V77, vec![]);
        assert!(matches!(diff_doc_trees(&t, &t), Err(DocDiffError::VersionOrder { .. })));
    }

    #[test]
    fn new_stable_item_is_a_stabilization() {
        let old = tree(V76, vec![]);
        let new = tree(V77, vec![item("std::slice::first_chunk_mut", FIRST_CHUNK, "doc", stable(V77))]);
        let diff = diff_doc_trees(&old, &new).unwrap();
        assert_eq!(diff.len(), 1);
        assert_eq!(diff[0].kind, ChangeKind::Stabilization);
        assert_eq!(diff[0].api.canonical(), "std::slice::first_chunk_mut");
    }

    #[test]
    fn new_item_with_older_since_is_ignored() {
        let old = tree(V76, vec![]);
        let new = tree(V77, vec![item("std::a::f", "pub fn f()", "doc", stable(VersionId::new(1, 50, 0)))]);
        assert!(diff_doc_trees(&old, &new).unwrap().is_empty());
    }

    #[test]
    fn whitespace_and_banner_edits_are_silent() {
        let old = tree(V76, vec![item("std::a::f", "pub fn f(x: u8)", "Adds one.\nSaturates.", stable(V76))]);
        let new = tree(
            V77,
            vec![item(
                "std::a::f",
                "pub fn  f(x:   u8)",
                "Stable since 1.76.0\n  Adds   one.  Saturates. ",
                stable(V76),
            )],
        );
        assert!(diff_doc_trees(&old, &new).unwrap().is_empty());
    }

    #[test]
    fn signature_change_suppresses_behavioral() {
        let old = tree(V76, vec![item("std::a::f", "pub fn f(x: u8)", "old text", stable(V76))]);
        let new = tree(V77, vec![item("std::a::f", "pub fn f(x: u16)", "new text", stable(V76))]);
        let diff = diff_doc_trees(&old, &new).unwrap();
        assert_eq!(diff.len(), 1);
        assert_eq!(diff[0].kind, ChangeKind::SignatureChange);
    }

    #[test]
    fn unstable_to_stable_and_deprecation() {
        let old = tree(
            V76,
            vec![
                item("std::a::f", "pub fn f(x: u8)", "d", Stability::Unstable),
                item("std::a::g", "pub fn g()", "d", stable(V76)),
            ],
        );
        let new = tree(
            V77,
            vec![
                item("std::a::f", "pub fn f(x: u16)", "changed", stable(V77)),
                item(
                    "std::a::g",
                    "pub fn g()",
                    "d",
                    Stability::DeprecatedSince { version: V77, note: "use `h`".into() },
                ),
            ],
        );
        let kinds: Vec<_> =
            diff_doc_trees(&old, &new).unwrap().into_iter().map(|s| (s.api.canonical(), s.kind)).collect();
        assert_eq!(
            kinds,
            vec![
                ("std::a::f".to_string(), ChangeKind::Stabilization),
                ("std::a::g".to_string(), ChangeKind::Deprecation),
            ]
        );
    }
}
