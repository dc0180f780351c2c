use std::fmt;

use serde::{Deserialize, Serialize};

use super::ModelError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ItemKind {
    Function,
    Method,
    Trait,
    Type,
    Macro,
    Const,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceClass {
    Official,
    ThirdParty,
}

impl SourceClass {
    /// The standard library crates count as official, everything else as third party.
    pub fn of_crate(crate_name: &str) -> Self {
        match crate_name {
            "std" | "core" | "alloc" => SourceClass::Official,
            _ => SourceClass::ThirdParty,
        }
    }
}

/// Names an API item: owning crate, path inside the crate, and item kind.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ApiIdentity {
    pub crate_name: String,
    pub path: Vec<String>,
    pub item_kind: ItemKind,
}

impl ApiIdentity {
    pub fn new(crate_name: impl Into<String>, path: Vec<String>, item_kind: ItemKind) -> Result<Self, ModelError> {
        let crate_name = crate_name.into();
        if crate_name.is_empty() || path.is_empty() || path.iter().any(|s| s.is_empty()) {
            return Err(ModelError::InvalidApiPath(format!("{crate_name}::{}", path.join("::"))));
        }
        Ok(Self { crate_name, path, item_kind })
    }

    /// Parses the canonical form `crate::seg::...::seg`.
    pub fn parse(canonical: &str, item_kind: ItemKind) -> Result<Self, ModelError> {
        let mut segments = canonical.split("::").map(|s| s.trim().to_string());
        let crate_name = segments.next().unwrap_or_default();
        Self::new(crate_name, segments.collect(), item_kind)
    }

    /// `crate::path::to::item`.
    pub fn canonical(&self) -> String {
        format!("{}::{}", self.crate_name, self.path_string())
    }

    /// The in-crate path, e.g. `slice::first_chunk_mut`.
    pub fn path_string(&self) -> String {
        self.path.join("::")
    }

    pub fn final_segment(&self) -> &str {
        self.path.last().map(String::as_str).unwrap_or_default()
    }

    pub fn source_class(&self) -> SourceClass {
        SourceClass::of_crate(&self.crate_name)
    }

    /// A path in the same parent module with the last segment replaced.
    pub fn sibling(&self, name: &str) -> Self {
        let mut path = self.path.clone();
        path.pop();
        path.push(name.to_string());
        Self { crate_name: self.crate_name.clone(), path, item_kind: self.item_kind }
    }
}

impl fmt::Display for ApiIdentity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.canonical())
    }
}

/// A declaration of the subject language, split into the parts that the
/// change categories care about.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ApiSignature {
    pub raw_text: String,
    pub param_count: usize,
    pub param_types: Vec<String>,
    pub return_type: String,
    pub generic_constraints: Vec<String>,
}

/// Collapses every whitespace run to one space and trims the ends.
pub fn normalize_whitespace(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

impl ApiSignature {
    /// Parses a declaration such as
    /// `pub fn first_chunk_mut<const N: usize>(&mut self) -> Option<&mut [T; N]>`.
    ///
    /// `raw_text` is stored whitespace-normalized. Declarations other than
    /// functions get no parameters; `const`/`static` items record their type
    /// as the return type.
    pub fn parse(text: &str) -> Result<Self, ModelError> {
        let raw_text = normalize_whitespace(text).trim_end_matches(['{', ';']).trim_end().to_string();
        if raw_text.is_empty() {
            return Err(ModelError::EmptySignature);
        }
        let mut sig = ApiSignature {
            raw_text: raw_text.clone(),
            param_count: 0,
            param_types: Vec::new(),
            return_type: String::new(),
            generic_constraints: Vec::new(),
        };

        let words: Vec<&str> = raw_text.split(' ').collect();
        let keyword_at = |kw: &str| words.iter().position(|w| *w == kw || w.starts_with(&format!("{kw}<")));

        if let Some(fn_pos) = find_keyword(&raw_text, "fn") {
            let after_fn = raw_text[fn_pos + 2..].trim_start();
            let name_end = after_fn.find(|c: char| !(c == '_' || c.is_alphanumeric())).unwrap_or(after_fn.len());
            let mut rest = &after_fn[name_end..];
            if rest.trim_start().starts_with('<') {
                let rs = rest.trim_start();
                let close = matching_close(rs, 0).ok_or(ModelError::UnbalancedSignature)?;
                sig.generic_constraints.extend(generic_bounds(&rs[1..close]));
                rest = &rs[close + 1..];
            }
            let rs = rest.trim_start();
            if rs.starts_with('(') {
                let close = matching_close(rs, 0).ok_or(ModelError::UnbalancedSignature)?;
                let params = &rs[1..close];
                sig.param_types = split_top_level(params, ',')
                    .into_iter()
                    .filter(|p| !p.is_empty())
                    .map(|p| param_type(&p))
                    .collect();
                sig.param_count = sig.param_types.len();
                rest = &rs[close + 1..];
            }
            let (ret_part, where_part) = split_where(rest);
            if let Some(ret) = ret_part.trim().strip_prefix("->") {
                sig.return_type = ret.trim().to_string();
            }
            if let Some(w) = where_part {
                sig.generic_constraints.extend(split_top_level(w, ',').into_iter().filter(|s| !s.is_empty()));
            }
        } else {
            let decl_kw =
                ["struct", "enum", "trait", "type", "union"].iter().find_map(|kw| keyword_at(kw).map(|_| *kw));
            if let Some(kw) = decl_kw {
                let pos = find_keyword(&raw_text, kw).unwrap_or(0);
                let after = raw_text[pos + kw.len()..].trim_start();
                let name_end = after.find(|c: char| !(c == '_' || c.is_alphanumeric())).unwrap_or(after.len());
                let rest = after[name_end..].trim_start();
                let mut tail = rest;
                if rest.starts_with('<') {
                    if let Some(close) = matching_close(rest, 0) {
                        sig.generic_constraints.extend(generic_bounds(&rest[1..close]));
                        tail = &rest[close + 1..];
                    }
                }
                if let (_, Some(w)) = split_where(tail) {
                    sig.generic_constraints.extend(split_top_level(w, ',').into_iter().filter(|s| !s.is_empty()));
                }
            } else if keyword_at("const").is_some() || keyword_at("static").is_some() {
                if let Some(colon) = raw_text.find(':') {
                    let ty = raw_text[colon + 1..].split('=').next().unwrap_or("").trim();
                    sig.return_type = ty.to_string();
                }
            }
        }
        Ok(sig)
    }

    /// Infers the item kind from the declaration keyword.
    pub fn infer_kind(&self) -> ItemKind {
        let text = &self.raw_text;
        if text.contains("macro_rules!") || find_keyword(text, "macro").is_some() {
            ItemKind::Macro
        } else if find_keyword(text, "fn").is_some() {
            let first = self.param_types.first().map(String::as_str).unwrap_or("");
            if first.ends_with("Self") || first.ends_with("self") || first.starts_with("Self") {
                ItemKind::Method
            } else {
                ItemKind::Function
            }
        } else if find_keyword(text, "trait").is_some() {
            ItemKind::Trait
        } else if ["struct", "enum", "union", "type"].iter().any(|kw| find_keyword(text, kw).is_some()) {
            ItemKind::Type
        } else {
            ItemKind::Const
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.raw_text.is_empty() {
            return Err(ModelError::EmptySignature);
        }
        if self.param_count != self.param_types.len() {
            return Err(ModelError::ParamCountMismatch { count: self.param_count, types: self.param_types.len() });
        }
        Ok(())
    }
}

/// Byte offset of `kw` as a whole word outside any brackets.
fn find_keyword(text: &str, kw: &str) -> Option<usize> {
    let bytes = text.as_bytes();
    let mut depth = 0i32;
    for (i, ch) in text.char_indices() {
        match ch {
            '(' | '[' | '<' => depth += 1,
            ')' | ']' => depth -= 1,
            '>' if i > 0 && bytes[i - 1] != b'-' => depth -= 1,
            _ => {}
        }
        if depth == 0 && text[i..].starts_with(kw) {
            let before_ok = i == 0 || !is_word_byte(bytes[i - 1]);
            let after = i + kw.len();
            let after_ok = after >= bytes.len() || !is_word_byte(bytes[after]);
            if before_ok && after_ok {
                return Some(i);
            }
        }
    }
    None
}

fn is_word_byte(b: u8) -> bool {
    b == b'_' || b.is_ascii_alphanumeric()
}

/// Index of the bracket closing the one opened at `open`.
fn matching_close(text: &str, open: usize) -> Option<usize> {
    let bytes = text.as_bytes();
    let mut depth = 0i32;
    for (i, ch) in text.char_indices().skip_while(|(i, _)| *i < open) {
        match ch {
            '(' | '[' | '<' | '{' => depth += 1,
            ')' | ']' | '}' => depth -= 1,
            '>' if i > 0 && bytes[i - 1] != b'-' => depth -= 1,
            _ => {}
        }
        if depth == 0 {
            return Some(i);
        }
    }
    None
}

/// Splits on `sep` at bracket depth zero; parts are trimmed.
fn split_top_level(text: &str, sep: char) -> Vec<String> {
    let bytes = text.as_bytes();
    let mut parts = Vec::new();
    let mut depth = 0i32;
    let mut start = 0;
    for (i, ch) in text.char_indices() {
        match ch {
            '(' | '[' | '<' | '{' => depth += 1,
            ')' | ']' | '}' => depth -= 1,
            '>' if i > 0 && bytes[i - 1] != b'-' => depth -= 1,
            c if c == sep && depth == 0 => {
                parts.push(text[start..i].trim().to_string());
                start = i + c.len_utf8();
            }
            _ => {}
        }
    }
    parts.push(text[start..].trim().to_string());
    parts
}

fn split_where(text: &str) -> (&str, Option<&str>) {
    match find_keyword(text, "where") {
        Some(pos) => (&text[..pos], Some(text[pos + 5..].trim())),
        None => (text, None),
    }
}

/// Bounded generic parameters (`T: Ord`, `'a: 'b`); bare and const params are skipped.
fn generic_bounds(params: &str) -> Vec<String> {
    split_top_level(params, ',')
        .into_iter()
        .filter(|p| !p.is_empty() && !p.starts_with("const ") && p.contains(':'))
        .collect()
}

/// The declared type of one parameter; receivers are kept as written.
fn param_type(param: &str) -> String {
    let p = param.trim();
    let receiver = p.trim_start_matches("mut ").trim();
    if matches!(receiver, "self" | "&self" | "&mut self") || receiver.starts_with('&') && receiver.ends_with(" self") {
        return receiver.to_string();
    }
    match top_level_colon(p) {
        Some(colon) => p[colon + 1..].trim().to_string(),
        None => p.to_string(),
    }
}

fn top_level_colon(text: &str) -> Option<usize> {
    let bytes = text.as_bytes();
    let mut depth = 0i32;
    for (i, ch) in text.char_indices() {
        match ch {
            '(' | '[' | '<' | '{' => depth += 1,
            ')' | ']' | '}' => depth -= 1,
            '>' if i > 0 && bytes[i - 1] != b'-' => depth -= 1,
            ':' if depth == 0 => {
                let next_colon = bytes.get(i + 1) == Some(&b':');
                let prev_colon = i > 0 && bytes[i - 1] == b':';
                if !next_colon && !prev_colon {
                    return Some(i);
                }
            }
            _ => {}
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_round_trip() {
        let api = ApiIdentity::parse("std::slice::first_chunk_mut", ItemKind::Method).unwrap();
        assert_eq!(api.crate_name, "std");
        assert_eq!(api.path, vec!["slice", "first_chunk_mut"]);
        assert_eq!(api.canonical(), "std::slice::first_chunk_mut");
        assert_eq!(api.path_string(), "slice::first_chunk_mut");
        assert_eq!(api.final_segment(), "first_chunk_mut");
        assert_eq!(ApiIdentity::parse(&api.canonical(), api.item_kind).unwrap(), api);
    }

    #[test]
    fn empty_path_rejected() {
        assert!(ApiIdentity::parse("std", ItemKind::Function).is_err());
        assert!(ApiIdentity::parse("std::a::::b", ItemKind::Function).is_err());
    }

    #[test]
    fn source_class_by_crate() {
        assert_eq!(SourceClass::of_crate("core"), SourceClass::Official);
        assert_eq!(SourceClass::of_crate("alloc"), SourceClass::Official);
        assert_eq!(SourceClass::of_crate("serde"), SourceClass::ThirdParty);
    }

    #[test]
    fn parses_method_signature() {
        let sig = ApiSignature::parse("pub const fn first_chunk_mut<const N: usize>(&mut self) -> Option<&mut [T; N]>")
            .unwrap();
        assert_eq!(sig.param_count, 1);
        assert_eq!(sig.param_types, vec!["&mut self"]);
        assert_eq!(sig.return_type, "Option<&mut [T; N]>");
        assert!(sig.generic_constraints.is_empty());
        assert_eq!(sig.infer_kind(), ItemKind::Method);
    }

    #[test]
    fn parses_bounds_and_where_clauses() {
        let sig = ApiSignature::parse(
            "pub fn retain<F: FnMut(&T) -> bool>(&mut self,\n   f: F, limit: Option<usize>) where T: Clone, F: Send",
        )
        .unwrap();
        assert_eq!(sig.param_types, vec!["&mut self", "F", "Option<usize>"]);
        assert_eq!(sig.param_count, 3);
        assert_eq!(sig.return_type, "");
        assert_eq!(sig.generic_constraints, vec!["F: FnMut(&T) -> bool", "T: Clone", "F: Send"]);
        assert!(!sig.raw_text.contains('\n'));
    }

    #[test]
    fn free_function_and_other_items() {
        let f = ApiSignature::parse("pub fn from_fn<T, F>(cb: F) -> FromFn<F> where F: FnMut() -> Option<T>").unwrap();
        assert_eq!(f.infer_kind(), ItemKind::Function);
        assert_eq!(f.return_type, "FromFn<F>");
        assert_eq!(f.generic_constraints, vec!["F: FnMut() -> Option<T>"]);

        let t = ApiSignature::parse("pub trait Iterator { ... }").unwrap();
        assert_eq!(t.infer_kind(), ItemKind::Trait);
        let s = ApiSignature::parse("pub struct LazyCell<T, F = fn() -> T>").unwrap();
        assert_eq!(s.infer_kind(), ItemKind::Type);
        let c = ApiSignature::parse("pub const MAX: u32 = 4294967295;").unwrap();
        assert_eq!(c.infer_kind(), ItemKind::Const);
        assert_eq!(c.return_type, "u32");
        let m = ApiSignature::parse("macro_rules! matches { ... }").unwrap();
        assert_eq!(m.infer_kind(), ItemKind::Macro);
    }

    #[test]
    fn path_typed_params() {
        let sig = ApiSignature::parse("fn f(x: std::io::Result<u8>, (a, b): (u8, u8))").unwrap();
        assert_eq!(sig.param_types, vec!["std::io::Result<u8>", "(u8, u8)"]);
    }

    #[test]
    fn empty_signature_rejected() {
        assert!(matches!(ApiSignature::parse("   "), Err(ModelError::EmptySignature)));
    }
}
