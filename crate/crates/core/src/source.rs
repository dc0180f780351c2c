//! Source snapshot analysis: stability/deprecation attributes and
//! implementation-only edits.
//!
//! Items are found with a block scanner over [`crate::lexer`] tokens: item
//! keywords are matched at the current nesting level and bodies are skipped
//! by balancing braces. `impl`, `trait` and inline `mod` blocks are entered
//! so their items get qualified paths.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use rayon::prelude::*;
use regex::Regex;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use walkdir::WalkDir;

use crate::lexer::{tokenize, Token, TokenKind};
use crate::model::{parse_version, ApiIdentity, ApiSignature, ChangeKind, ItemKind, VersionId};

#[derive(Debug, thiserror::Error)]
pub enum SourceError {
    #[error("no items found in the {0} snapshot")]
    ParseFailure(&'static str),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceSignal {
    pub api: ApiIdentity,
    pub kind: ChangeKind,
    pub version: VersionId,
    pub replacement_hint: Option<String>,
    pub body_hash_old: Option<String>,
    pub body_hash_new: Option<String>,
    /// Declaration parsed from the item header, when it is a declaration we understand.
    pub signature: Option<ApiSignature>,
}

/// Crate and module an analyzed file belongs to.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SourceContext {
    pub crate_name: String,
    pub module: Vec<String>,
}

impl Default for SourceContext {
    fn default() -> Self {
        Self { crate_name: "std".into(), module: Vec::new() }
    }
}

impl SourceContext {
    /// `std/collections/linked_list.rs` → crate `std`, module `collections::linked_list`.
    /// `lib.rs` and `mod.rs` name their parent directory.
    pub fn from_relative_path(relative: &Path) -> Option<Self> {
        let mut comps: Vec<String> =
            relative.components().map(|c| c.as_os_str().to_string_lossy().into_owned()).collect();
        if comps.len() < 2 {
            return None;
        }
        let crate_name = comps.remove(0);
        let file = comps.pop()?;
        let stem = file.strip_suffix(".rs")?;
        if stem != "lib" && stem != "mod" {
            comps.push(stem.to_string());
        }
        Some(Self { crate_name, module: comps })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Attribute {
    Stable { since: Option<String> },
    Deprecated { since: Option<String>, note: Option<String> },
    Other,
}

/// One item found by the scanner.
#[derive(Debug, Clone)]
pub struct SourceItem {
    pub api: ApiIdentity,
    /// Declaration as written, whitespace-normalized.
    pub header_text: String,
    /// Declaration token stream joined by single spaces.
    pub header_key: String,
    pub body_hash: Option<String>,
    pub line: usize,
    attributes: Vec<Attribute>,
}

#[derive(Debug, Clone, Default)]
pub struct ItemScan {
    pub items: Vec<SourceItem>,
    /// Tokens at item level the scanner could not attribute to an item.
    pub skipped: usize,
    pub duplicates: usize,
}

struct Scanner<'a> {
    tokens: &'a [Token],
    chars: Vec<char>,
    crate_name: String,
    out: ItemScan,
    seen: std::collections::HashSet<String>,
}

const PRIMITIVE_TYPES: [&str; 17] = [
    "str", "bool", "char", "u8", "u16", "u32", "u64", "u128", "usize", "i8", "i16", "i32", "i64", "i128", "isize",
    "f32", "f64",
];

impl<'a> Scanner<'a> {
    fn text(&self, from: usize, to: usize) -> String {
        // from/to are token indices, inclusive..exclusive
        if from >= to {
            return String::new();
        }
        let start = self.tokens[from].span.0;
        let end = self.tokens[to - 1].span.1;
        self.chars[start..end].iter().collect()
    }

    fn key(&self, from: usize, to: usize) -> String {
        self.tokens[from..to].iter().map(|t| t.text.as_str()).collect::<Vec<_>>().join(" ")
    }

    /// Index of the token closing the delimiter opened at `open`.
    fn close_of(&self, open: usize) -> usize {
        let (o, c) = match self.tokens[open].text.as_str() {
            "(" => ("(", ")"),
            "[" => ("[", "]"),
            _ => ("{", "}"),
        };
        let mut depth = 0usize;
        for (i, t) in self.tokens.iter().enumerate().skip(open) {
            if t.is_punct(o) {
                depth += 1;
            } else if t.is_punct(c) {
                depth -= 1;
                if depth == 0 {
                    return i;
                }
            }
        }
        self.tokens.len() - 1
    }

    /// First `{` or `;` at paren/bracket depth zero from `from`.
    fn find_body_or_semi(&self, from: usize, end: usize) -> usize {
        let mut depth = 0i32;
        for i in from..end {
            let t = &self.tokens[i];
            if t.kind != TokenKind::Punct {
                continue;
            }
            match t.text.as_str() {
                "(" | "[" => depth += 1,
                ")" | "]" => depth -= 1,
                "{" | ";" if depth == 0 => return i,
                _ => {}
            }
        }
        end
    }

    fn parse_attribute(&self, open: usize, close: usize) -> Attribute {
        let inner = &self.tokens[open + 1..close];
        let Some(name) = inner.first().filter(|t| t.kind == TokenKind::Ident) else {
            return Attribute::Other;
        };
        let mut fields = BTreeMap::new();
        let mut direct = None;
        if inner.get(1).is_some_and(|t| t.is_punct("=")) {
            direct = inner.get(2).and_then(Token::string_value);
        }
        for w in inner.windows(3) {
            if w[0].kind == TokenKind::Ident && w[1].is_punct("=") {
                if let Some(v) = w[2].string_value() {
                    fields.entry(w[0].text.clone()).or_insert(v);
                }
            }
        }
        match name.text.as_str() {
            "stable" => Attribute::Stable { since: fields.get("since").cloned() },
            "deprecated" | "rustc_deprecated" => Attribute::Deprecated {
                since: fields.get("since").cloned(),
                note: fields.get("note").or(fields.get("suggestion")).cloned().or(direct),
            },
            _ => Attribute::Other,
        }
    }

    fn push(
        &mut self,
        path: &[String],
        name: &str,
        kind: Option<ItemKind>,
        span: (usize, usize),
        body: Option<(usize, usize)>,
        attrs: Vec<Attribute>,
    ) {
        let mut full = path.to_vec();
        full.push(name.to_string());
        let header_text = crate::model::normalize_whitespace(&self.text(span.0, span.1));
        let kind = kind
            .unwrap_or_else(|| ApiSignature::parse(&header_text).map(|s| s.infer_kind()).unwrap_or(ItemKind::Function));
        let Ok(api) = ApiIdentity::new(self.crate_name.clone(), full, kind) else {
            self.out.skipped += 1;
            return;
        };
        if !self.seen.insert(api.canonical()) {
            self.out.duplicates += 1;
            return;
        }
        let body_hash = body.map(|(o, c)| {
            let stream = self.key(o + 1, c);
            hex::encode(Sha256::digest(stream.as_bytes()))
        });
        let item = SourceItem {
            api,
            header_key: self.key(span.0, span.1),
            header_text,
            body_hash,
            line: self.tokens[span.0].line,
            attributes: attrs,
        };
        self.out.items.push(item);
    }

    fn scan(&mut self, mut i: usize, end: usize, path: &[String]) {
        let mut attrs = Vec::new();
        while i < end {
            let t = &self.tokens[i];
            // attributes
            if t.is_punct("#") {
                let inner = self.tokens.get(i + 1).is_some_and(|n| n.is_punct("!"));
                let open = if inner { i + 2 } else { i + 1 };
                if self.tokens.get(open).is_some_and(|n| n.is_punct("[")) {
                    let close = self.close_of(open);
                    if !inner {
                        attrs.push(self.parse_attribute(open, close));
                    }
                    i = close + 1;
                    continue;
                }
            }
            if t.is_punct(";") {
                i += 1;
                continue;
            }
            let item_start = i;
            // qualifiers
            let mut j = i;
            while let Some(q) = self.tokens.get(j) {
                let const_fn = q.is_ident("const")
                    && self.tokens.get(j + 1).is_some_and(|n| {
                        n.is_ident("fn") || n.is_ident("unsafe") || n.is_ident("async") || n.is_ident("extern")
                    });
                if q.is_ident("pub") {
                    j += 1;
                    if self.tokens.get(j).is_some_and(|n| n.is_punct("(")) {
                        j = self.close_of(j) + 1;
                    }
                } else if q.is_ident("unsafe") || q.is_ident("async") || q.is_ident("default") || const_fn {
                    j += 1;
                } else if q.is_ident("extern")
                    && self.tokens.get(j + 1).is_some_and(|n| n.kind == TokenKind::Literal || n.is_ident("fn"))
                {
                    j += if self.tokens[j + 1].kind == TokenKind::Literal { 2 } else { 1 };
                } else {
                    break;
                }
            }
            let Some(kw) = self.tokens.get(j).filter(|k| k.kind == TokenKind::Ident) else {
                self.out.skipped += 1;
                i += 1;
                attrs.clear();
                continue;
            };
            let name_tok = self.tokens.get(j + 1).filter(|n| n.kind == TokenKind::Ident).map(|n| n.text.clone());
            match kw.text.as_str() {
                "fn" => {
                    let stop = self.find_body_or_semi(j, end);
                    let body = (stop < end && self.tokens[stop].is_punct("{")).then(|| (stop, self.close_of(stop)));
                    if let Some(name) = name_tok {
                        self.push(path, &name, None, (item_start, stop), body, std::mem::take(&mut attrs));
                    }
                    i = body.map(|(_, c)| c + 1).unwrap_or(stop + 1);
                }
                "struct" | "enum" | "union" | "type" | "const" | "static" => {
                    let kind =
                        if matches!(kw.text.as_str(), "const" | "static") { ItemKind::Const } else { ItemKind::Type };
                    let mut stop = self.find_body_or_semi(j, end);
                    let mut header_end = stop;
                    if stop < end && self.tokens[stop].is_punct("{") {
                        let close = self.close_of(stop);
                        // `const X: T = { .. };` keeps going to the semicolon
                        stop = if matches!(kw.text.as_str(), "const" | "static") {
                            header_end = self.find_eq(j, stop).unwrap_or(stop);
                            self.find_body_or_semi(close + 1, end)
                        } else {
                            close
                        };
                    } else if matches!(kw.text.as_str(), "const" | "static") {
                        header_end = self.find_eq(j, stop).unwrap_or(stop);
                    }
                    if let Some(name) = name_tok.filter(|n| n != "_") {
                        self.push(path, &name, Some(kind), (item_start, header_end), None, std::mem::take(&mut attrs));
                    }
                    i = stop + 1;
                }
                "trait" => {
                    let stop = self.find_body_or_semi(j, end);
                    let Some(name) = name_tok else {
                        i = stop + 1;
                        continue;
                    };
                    self.push(path, &name, Some(ItemKind::Trait), (item_start, stop), None, std::mem::take(&mut attrs));
                    if stop < end && self.tokens[stop].is_punct("{") {
                        let close = self.close_of(stop);
                        let mut inner = path.to_vec();
                        inner.push(name);
                        self.scan(stop + 1, close, &inner);
                        i = close + 1;
                    } else {
                        i = stop + 1;
                    }
                }
                "impl" => {
                    attrs.clear();
                    let stop = self.find_body_or_semi(j, end);
                    if stop >= end || !self.tokens[stop].is_punct("{") {
                        i = stop + 1;
                        continue;
                    }
                    let close = self.close_of(stop);
                    let mut inner = path.to_vec();
                    if let Some(seg) = self.impl_segment(j + 1, stop, path) {
                        inner.push(seg);
                    }
                    self.scan(stop + 1, close, &inner);
                    i = close + 1;
                }
                "mod" => {
                    attrs.clear();
                    let stop = self.find_body_or_semi(j, end);
                    if stop < end && self.tokens[stop].is_punct("{") {
                        let close = self.close_of(stop);
                        let mut inner = path.to_vec();
                        if let Some(name) = name_tok {
                            inner.push(name);
                        }
                        self.scan(stop + 1, close, &inner);
                        i = close + 1;
                    } else {
                        i = stop + 1;
                    }
                }
                "macro_rules" => {
                    let name = self.tokens.get(j + 2).filter(|n| n.kind == TokenKind::Ident).map(|n| n.text.clone());
                    let open = j + 3;
                    let close = if open < end && (self.tokens[open].is_punct("{") || self.tokens[open].is_punct("(")) {
                        self.close_of(open)
                    } else {
                        open
                    };
                    if let Some(name) = name {
                        self.push(
                            path,
                            &name,
                            Some(ItemKind::Macro),
                            (item_start, (j + 3).min(end)),
                            None,
                            std::mem::take(&mut attrs),
                        );
                    }
                    i = close + 1;
                }
                "use" | "extern" => {
                    attrs.clear();
                    i = self.find_body_or_semi(j, end) + 1;
                }
                _ => {
                    self.out.skipped += 1;
                    attrs.clear();
                    i = j + 1;
                }
            }
        }
    }

    fn find_eq(&self, from: usize, to: usize) -> Option<usize> {
        (from..to).find(|&k| self.tokens[k].is_punct("="))
    }

    /// Path segment contributed by an `impl` header (tokens in `from..to`).
    fn impl_segment(&self, from: usize, to: usize, path: &[String]) -> Option<String> {
        let mut k = from;
        // skip generics
        if self.tokens.get(k).is_some_and(|t| t.is_punct("<")) {
            let mut depth = 0i32;
            while k < to {
                let t = &self.tokens[k];
                if t.is_punct("<") {
                    depth += 1;
                } else if t.is_punct(">") {
                    depth -= 1;
                    if depth == 0 {
                        k += 1;
                        break;
                    }
                }
                k += 1;
            }
        }
        let header = &self.tokens[k..to];
        let where_at = header.iter().position(|t| t.is_ident("where")).unwrap_or(header.len());
        let header = &header[..where_at];
        let self_ty = match header.iter().position(|t| t.is_ident("for")) {
            Some(p) => &header[p + 1..],
            None => header,
        };
        let first = self_ty.iter().find(|t| {
            !(t.is_punct("&")
                || t.is_ident("mut")
                || t.is_ident("dyn")
                || t.kind == TokenKind::Lifetime
                || t.is_punct("<"))
        })?;
        let segment = if first.is_punct("[") {
            "slice".to_string()
        } else if first.kind == TokenKind::Ident {
            // last segment of a path type such as `alloc::vec::Vec<T>`
            let mut name = first.text.clone();
            let start = self_ty.iter().position(|t| std::ptr::eq(t, first)).unwrap_or(0);
            let mut idx = start;
            while idx + 2 < self_ty.len()
                && self_ty[idx + 1].is_punct("::")
                && self_ty[idx + 2].kind == TokenKind::Ident
            {
                name = self_ty[idx + 2].text.clone();
                idx += 2;
            }
            name
        } else {
            return None;
        };
        let is_primitive = segment == "slice" || PRIMITIVE_TYPES.contains(&segment.as_str());
        if is_primitive && path.last().is_some_and(|l| *l == segment) {
            return None;
        }
        Some(segment)
    }
}

/// Finds the items of one file.
pub fn extract_items(source_text: &str, ctx: &SourceContext) -> ItemScan {
    let tokens = tokenize(source_text);
    let mut scanner = Scanner {
        tokens: &tokens,
        chars: source_text.chars().collect(),
        crate_name: ctx.crate_name.clone(),
        out: ItemScan::default(),
        seen: Default::default(),
    };
    scanner.scan(0, tokens.len(), &ctx.module);
    scanner.out
}

fn since_version(since: Option<&String>, scan_version: VersionId) -> Option<VersionId> {
    match since.map(String::as_str) {
        Some("CURRENT_RUSTC_VERSION") => Some(scan_version),
        Some(s) => parse_version(s).ok(),
        None => None,
    }
}

/// First backtick-quoted path in a deprecation note, else the target of a "use X" phrase.
pub fn replacement_hint(note: &str) -> Option<String> {
    static RE: OnceLock<(Regex, Regex)> = OnceLock::new();
    let (tick, use_phrase) = RE.get_or_init(|| {
        (
            Regex::new(r"`([^`]+)`").unwrap(),
            Regex::new(r"\buse\s+([A-Za-z_][A-Za-z0-9_]*(?:::[A-Za-z_][A-Za-z0-9_]*)*)").unwrap(),
        )
    });
    let raw = tick.captures(note).or_else(|| use_phrase.captures(note))?[1].to_string();
    let cleaned = raw.trim().trim_end_matches("()").trim_end_matches('!').to_string();
    (!cleaned.is_empty()).then_some(cleaned)
}

/// Stabilization candidates for items whose stability attribute names
/// `version`, and a deprecation candidate for every deprecation attribute
/// (versioned by its `since`, falling back to `version`).
pub fn scan_attributes(source_text: &str, version: VersionId) -> Vec<SourceSignal> {
    scan_attributes_in(source_text, &SourceContext::default(), version).0
}

/// Like [`scan_attributes`] for a file at a known crate/module; also returns
/// the count of skipped item-level tokens.
pub fn scan_attributes_in(source_text: &str, ctx: &SourceContext, version: VersionId) -> (Vec<SourceSignal>, usize) {
    let scan = extract_items(source_text, ctx);
    let mut signals = Vec::new();
    for item in &scan.items {
        for attr in &item.attributes {
            let (kind, at, hint) = match attr {
                Attribute::Stable { since } => match since_version(since.as_ref(), version) {
                    Some(v) if v == version => (ChangeKind::Stabilization, v, None),
                    _ => continue,
                },
                Attribute::Deprecated { since, note } => (
                    ChangeKind::Deprecation,
                    since_version(since.as_ref(), version).unwrap_or(version),
                    note.as_deref().and_then(replacement_hint),
                ),
                Attribute::Other => continue,
            };
            signals.push(SourceSignal {
                api: item.api.clone(),
                kind,
                version: at,
                replacement_hint: hint,
                body_hash_old: None,
                body_hash_new: item.body_hash.clone(),
                signature: ApiSignature::parse(&item.header_text).ok(),
            });
        }
    }
    signals.sort_by_key(|a| (a.api.canonical(), a.kind));
    (signals, scan.skipped)
}

pub fn diff_item_bodies(
    old_source: &str,
    new_source: &str,
    version: VersionId,
) -> Result<Vec<SourceSignal>, SourceError> {
    diff_item_bodies_in(old_source, new_source, &SourceContext::default(), version)
}

/// BehavioralChange candidates for items whose header is unchanged but whose
/// body token stream hashes differently.
pub fn diff_item_bodies_in(
    old_source: &str,
    new_source: &str,
    ctx: &SourceContext,
    version: VersionId,
) -> Result<Vec<SourceSignal>, SourceError> {
    let old = extract_items(old_source, ctx);
    let new = extract_items(new_source, ctx);
    if old.items.is_empty() {
        return Err(SourceError::ParseFailure("old"));
    }
    if new.items.is_empty() {
        return Err(SourceError::ParseFailure("new"));
    }
    let old_by_key: BTreeMap<String, &SourceItem> = old.items.iter().map(|i| (i.api.canonical(), i)).collect();
    let mut signals = Vec::new();
    for item in &new.items {
        let Some(prev) = old_by_key.get(&item.api.canonical()) else { continue };
        if prev.header_key != item.header_key {
            continue;
        }
        if let (Some(h_old), Some(h_new)) = (&prev.body_hash, &item.body_hash) {
            if h_old != h_new {
                signals.push(SourceSignal {
                    api: item.api.clone(),
                    kind: ChangeKind::BehavioralChange,
                    version,
                    replacement_hint: None,
                    body_hash_old: Some(h_old.clone()),
                    body_hash_new: Some(h_new.clone()),
                    signature: ApiSignature::parse(&item.header_text).ok(),
                });
            }
        }
    }
    signals.sort_by_key(|s| s.api.canonical());
    Ok(signals)
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SnapshotDiagnostics {
    pub files_scanned: usize,
    pub files_without_items: usize,
    pub skipped_tokens: usize,
}

#[derive(Debug, Default)]
pub struct SnapshotAnalysis {
    pub signals: Vec<SourceSignal>,
    pub diagnostics: SnapshotDiagnostics,
}

fn rust_files(root: &Path, crates: &[String]) -> Vec<PathBuf> {
    let mut files: Vec<PathBuf> = WalkDir::new(root)
        .into_iter()
        .filter_map(Result::ok)
        .filter(|e| e.file_type().is_file() && e.path().extension().is_some_and(|x| x == "rs"))
        .filter_map(|e| e.path().strip_prefix(root).ok().map(Path::to_path_buf))
        .filter(|rel| {
            crates.is_empty()
                || rel.components().next().is_some_and(|c| crates.iter().any(|k| c.as_os_str() == k.as_str()))
        })
        .collect();
    files.sort();
    files
}

/// Runs attribute scanning on `new_root` and body diffing against `old_root`
/// for every `.rs` file of the listed crates (all crates when empty).
pub fn analyze_snapshots(
    old_root: &Path,
    new_root: &Path,
    version: VersionId,
    crates: &[String],
) -> Result<SnapshotAnalysis, SourceError> {
    let files = rust_files(new_root, crates);
    type FileScan = (Vec<SourceSignal>, usize, bool);
    let per_file: Vec<Result<FileScan, SourceError>> = files
        .par_iter()
        .map(|rel| {
            let ctx = SourceContext::from_relative_path(rel).unwrap_or_default();
            let new_path = new_root.join(rel);
            let new_text = fs::read_to_string(&new_path).map_err(|e| SourceError::Io { path: new_path, source: e })?;
            let (mut signals, skipped) = scan_attributes_in(&new_text, &ctx, version);
            let old_path = old_root.join(rel);
            let mut empty = false;
            if let Ok(old_text) = fs::read_to_string(&old_path) {
                match diff_item_bodies_in(&old_text, &new_text, &ctx, version) {
                    Ok(body) => signals.extend(body),
                    Err(SourceError::ParseFailure(_)) => empty = true,
                    Err(e) => return Err(e),
                }
            }
            Ok((signals, skipped, empty))
        })
        .collect();
    let mut out = SnapshotAnalysis::default();
    for r in per_file {
        let (signals, skipped, empty) = r?;
        out.diagnostics.files_scanned += 1;
        out.diagnostics.skipped_tokens += skipped;
        out.diagnostics.files_without_items += usize::from(empty);
        out.signals.extend(signals);
    }
    out.signals.sort_by_key(|a| (a.api.canonical(), a.kind));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    const V77: VersionId = VersionId::new(1, 77, 0);

    const SLICE_SRC: &str = r#"
use crate::mem;

impl<T> [T] {
    /// Returns the first `N` elements.
    #[stable(feature = "slice_first_last_chunk", since = "1.77.0")]
    #[inline]
    pub const fn first_chunk_mut<const N: usize>(&mut self) -> Option<&mut [T; N]> {
        if self.len() < N { None } else { Some(unsafe { &mut *(self.as_mut_ptr().cast::<[T; N]>()) }) }
    }

    #[stable(feature = "rust1", since = "1.0.0")]
    pub fn len(&self) -> usize { self.len }
}

#[deprecated(since = "1.81.0", note = "use new_fn instead")]
pub fn old_fn(x: u32) -> u32 { x + 1 }

pub fn new_fn(x: u32) -> u32 { x.saturating_add(1) }
"#;

    #[test]
    fn file_context_from_path() {
        let ctx = SourceContext::from_relative_path(Path::new("std/collections/linked_list.rs")).unwrap();
        assert_eq!(ctx.crate_name, "std");
        assert_eq!(ctx.module, vec!["collections", "linked_list"]);
        let lib = SourceContext::from_relative_path(Path::new("serde/lib.rs")).unwrap();
        assert!(lib.module.is_empty());
    }

    #[test]
    fn extracts_qualified_items() {
        let ctx = SourceContext { crate_name: "std".into(), module: vec!["slice".into()] };
        let scan = extract_items(SLICE_SRC, &ctx);
        let names: Vec<_> = scan.items.iter().map(|i| (i.api.canonical(), i.api.item_kind)).collect();
        assert_eq!(
            names,
            vec![
                ("std::slice::first_chunk_mut".to_string(), ItemKind::Method),
                ("std::slice::len".to_string(), ItemKind::Method),
                ("std::slice::old_fn".to_string(), ItemKind::Function),
                ("std::slice::new_fn".to_string(), ItemKind::Function),
            ]
        );
        let first = &scan.items[0];
        assert_eq!(first.header_text, "pub const fn first_chunk_mut<const N: usize>(&mut self) -> Option<&mut [T; N]>");
    }

    #[test]
    fn stabilization_attribute_matches_version() {
        let ctx = SourceContext { crate_name: "std".into(), module: vec!["slice".into()] };
        let (signals, _) = scan_attributes_in(SLICE_SRC, &ctx, V77);
        let stab: Vec<_> = signals.iter().filter(|s| s.kind == ChangeKind::Stabilization).collect();
        assert_eq!(stab.len(), 1);
        assert_eq!(stab[0].api.canonical(), "std::slice::first_chunk_mut");
        assert_eq!(stab[0].version, V77);
        assert!(stab[0].signature.is_some());
    }

    #[test]
    fn deprecation_attribute_with_hint() {
        let signals = scan_attributes(SLICE_SRC, V77);
        let dep: Vec<_> = signals.iter().filter(|s| s.kind == ChangeKind::Deprecation).collect();
        assert_eq!(dep.len(), 1);
        assert_eq!(dep[0].api.canonical(), "std::old_fn");
        assert_eq!(dep[0].version, VersionId::new(1, 81, 0));
        assert_eq!(dep[0].replacement_hint.as_deref(), Some("new_fn"));
    }

    #[test]
    fn hint_from_backticks() {
        assert_eq!(replacement_hint("superseded by `Iterator::map_while`").as_deref(), Some("Iterator::map_while"));
        assert_eq!(replacement_hint("no replacement"), None);
    }

    #[test]
    fn no_attributes_no_signals() {
        assert!(scan_attributes("pub fn a() {}\nstruct B;", V77).is_empty());
    }

    #[test]
    fn scan_is_idempotent_and_sorted() {
        let src = "#[deprecated(since = \"1.2.0\")] pub fn z() {}\n#[deprecated(since = \"1.2.0\")] pub fn a() {}";
        let a = scan_attributes(src, V77);
        assert_eq!(a, scan_attributes(src, V77));
        assert_eq!(a[0].api.final_segment(), "a");
        assert_eq!(a[1].api.final_segment(), "z");
    }

    #[test]
    fn body_edits() {
        let old = "pub fn f(x: u32) -> u32 { x + 1 }\npub fn g() {}";
        assert!(diff_item_bodies(old, old, V77).unwrap().is_empty());

        let reformatted = "pub fn f(x: u32)\n    -> u32\n{\n    x   +   1\n}\npub fn g() {}";
        assert!(diff_item_bodies(old, reformatted, V77).unwrap().is_empty());

        let edited = "pub fn f(x: u32) -> u32 { x.saturating_add(1) }\npub fn g() {}";
        let signals = diff_item_bodies(old, edited, V77).unwrap();
        assert_eq!(signals.len(), 1);
        assert_eq!(signals[0].kind, ChangeKind::BehavioralChange);
        assert_ne!(signals[0].body_hash_old, signals[0].body_hash_new);

        let header_changed = "pub fn f(x: u64) -> u64 { x.saturating_add(1) }\npub fn g() {}";
        assert!(diff_item_bodies(old, header_changed, V77).unwrap().is_empty());
    }

    #[test]
    fn empty_snapshot_is_a_parse_failure() {
        assert!(matches!(diff_item_bodies("// nothing", "pub fn a() {}", V77), Err(SourceError::ParseFailure("old"))));
        assert!(matches!(diff_item_bodies("pub fn a() {}", "", V77), Err(SourceError::ParseFailure("new"))));
    }

    #[test]
    fn nested_modules_traits_and_macros() {
        let src = r#"
pub mod inner {
    pub trait Shape { fn area(&self) -> f64; }
    impl Shape for crate::geo::Square { fn area(&self) -> f64 { self.0 * self.0 } }
}
macro_rules! my_macro { ($e:expr) => { $e } }
pub const LIMIT: usize = { 4 + 4 };
pub(crate) unsafe extern "C" fn ffi(x: i32) -> i32 { x }
"#;
        let scan = extract_items(src, &SourceContext { crate_name: "geo".into(), module: vec![] });
        let names: Vec<_> = scan.items.iter().map(|i| i.api.canonical()).collect();
        assert_eq!(
            names,
            vec![
                "geo::inner::Shape",
                "geo::inner::Shape::area",
                "geo::inner::Square::area",
                "geo::my_macro",
                "geo::LIMIT",
                "geo::ffi",
            ]
        );
        assert_eq!(scan.items[3].api.item_kind, ItemKind::Macro);
        assert_eq!(scan.items[4].api.item_kind, ItemKind::Const);
    }
}
