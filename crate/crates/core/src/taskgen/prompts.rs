//! Prompt templates and the `{placeholder}` renderer.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::model::ChangeKind;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RenderError {
    #[error("placeholder {{{0}}} is not bound")]
    UnboundPlaceholder(String),
    #[error("malformed template near byte {0}")]
    Malformed(usize),
}

#[derive(Debug, thiserror::Error)]
pub enum TemplateError {
    #[error("{path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Invalid {
        path: std::path::PathBuf,
        #[source]
        source: RenderError,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Query,
    Solution,
    TestProgram,
    Augment,
    Judge,
}

impl Stage {
    pub const ALL: [Stage; 5] = [Stage::Query, Stage::Solution, Stage::TestProgram, Stage::Augment, Stage::Judge];

    pub fn file_stem(self) -> &'static str {
        match self {
            Stage::Query => "query",
            Stage::Solution => "solution",
            Stage::TestProgram => "test_program",
            Stage::Augment => "augment",
            Stage::Judge => "judge",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.file_stem())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    pub change_kind: ChangeKind,
    pub stage: Stage,
    pub body: String,
}

enum Piece<'a> {
    Text(&'a str),
    Brace(char),
    Name(&'a str),
}

fn pieces(body: &str) -> Result<Vec<Piece<'_>>, RenderError> {
    let bytes = body.as_bytes();
    let mut out = Vec::new();
    let mut start = 0;
    let mut i = 0;
    while i < bytes.len() {
        match bytes[i] {
            b'{' | b'}' if bytes.get(i + 1) == Some(&bytes[i]) => {
                out.push(Piece::Text(&body[start..i]));
                out.push(Piece::Brace(bytes[i] as char));
                i += 2;
                start = i;
            }
            b'{' => {
                let close = body[i + 1..].find('}').map(|c| i + 1 + c).ok_or(RenderError::Malformed(i))?;
                let name = &body[i + 1..close];
                if name.is_empty() || !name.bytes().all(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || b == b'_') {
                    return Err(RenderError::Malformed(i));
                }
                out.push(Piece::Text(&body[start..i]));
                out.push(Piece::Name(name));
                i = close + 1;
                start = i;
            }
            b'}' => return Err(RenderError::Malformed(i)),
            _ => i += 1,
        }
    }
    out.push(Piece::Text(&body[start..]));
    Ok(out)
}

/// Substitutes `{name}` placeholders; `{{` and `}}` are literal braces.
/// Values are inserted verbatim and not re-scanned.
pub fn render(body: &str, bindings: &BTreeMap<&str, String>) -> Result<String, RenderError> {
    let mut out = String::with_capacity(body.len());
    for piece in pieces(body)? {
        match piece {
            Piece::Text(t) => out.push_str(t),
            Piece::Brace(c) => out.push(c),
            Piece::Name(n) => {
                out.push_str(bindings.get(n).ok_or_else(|| RenderError::UnboundPlaceholder(n.to_string()))?)
            }
        }
    }
    Ok(out)
}

/// Placeholder names referenced by a template body.
pub fn placeholders(body: &str) -> Result<Vec<String>, RenderError> {
    let mut names: Vec<String> = pieces(body)?
        .into_iter()
        .filter_map(|p| if let Piece::Name(n) = p { Some(n.to_string()) } else { None })
        .collect();
    names.sort();
    names.dedup();
    Ok(names)
}

macro_rules! builtin {
    ($kind:literal) => {
        [
            include_str!(concat!("../../prompts/", $kind, "/query.txt")),
            include_str!(concat!("../../prompts/", $kind, "/solution.txt")),
            include_str!(concat!("../../prompts/", $kind, "/test_program.txt")),
            include_str!(concat!("../../prompts/", $kind, "/augment.txt")),
            include_str!(concat!("../../prompts/", $kind, "/judge.txt")),
        ]
    };
}

/// Per-kind stage templates plus the shared summarize and eval prompts.
#[derive(Debug, Clone)]
pub struct PromptSet {
    templates: BTreeMap<(ChangeKind, Stage), PromptTemplate>,
    pub summarize: String,
    pub eval: String,
}

impl PromptSet {
    /// Templates compiled into the binary.
    pub fn builtin() -> Self {
        let bodies = [
            (ChangeKind::Stabilization, builtin!("stabilization")),
            (ChangeKind::SignatureChange, builtin!("signature_change")),
            (ChangeKind::BehavioralChange, builtin!("behavioral_change")),
            (ChangeKind::Deprecation, builtin!("deprecation")),
        ];
        let mut templates = BTreeMap::new();
        for (kind, stage_bodies) in bodies {
            for (stage, body) in Stage::ALL.into_iter().zip(stage_bodies) {
                templates.insert((kind, stage), PromptTemplate { change_kind: kind, stage, body: body.to_string() });
            }
        }
        Self {
            templates,
            summarize: include_str!("../../prompts/shared/summarize.txt").to_string(),
            eval: include_str!("../../prompts/shared/eval.txt").to_string(),
        }
    }

    /// Builtin templates with any `<dir>/<kind>/<stage>.txt` or
    /// `<dir>/shared/{summarize,eval}.txt` files taking precedence.
    pub fn with_overrides(dir: &Path) -> Result<Self, TemplateError> {
        let mut set = Self::builtin();
        let read = |path: &Path| -> Result<Option<String>, TemplateError> {
            if !path.is_file() {
                return Ok(None);
            }
            let body =
                fs::read_to_string(path).map_err(|e| TemplateError::Io { path: path.to_path_buf(), source: e })?;
            placeholders(&body).map_err(|e| TemplateError::Invalid { path: path.to_path_buf(), source: e })?;
            Ok(Some(body))
        };
        for ((kind, stage), template) in set.templates.iter_mut() {
            if let Some(body) = read(&dir.join(kind.slug()).join(format!("{}.txt", stage.file_stem())))? {
                template.body = body;
            }
        }
        if let Some(body) = read(&dir.join("shared/summarize.txt"))? {
            set.summarize = body;
        }
        if let Some(body) = read(&dir.join("shared/eval.txt"))? {
            set.eval = body;
        }
        Ok(set)
    }

    pub fn get(&self, kind: ChangeKind, stage: Stage) -> &PromptTemplate {
        &self.templates[&(kind, stage)]
    }
}
