//! Retrieval over change-record documentation: a BM25 index, top-k
//! retrieval, summarization and the per-condition prompt context.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::model::{ChangeRecord, Condition, ModelError, TaskSpec};
use crate::taskgen::client::ModelClient;
use crate::taskgen::prompts::render;

pub const INDEX_FILE: &str = "kb.index.json";
pub const K1: f64 = 1.2;
pub const B: f64 = 0.75;

#[derive(Debug, thiserror::Error)]
pub enum RagError {
    #[error("duplicate change_id {0} in knowledge base")]
    IndexConflict(String),
    #[error("retrieve needs k >= 1")]
    InvalidK,
    #[error("summarize needs at least one document")]
    EmptyDocs,
    #[error("summary generation exhausted: {0}")]
    GenerationExhausted(String),
    #[error("no knowledge-base document for change {0}")]
    MissingDoc(String),
    #[error("condition rag needs a retrieval index")]
    MissingIndex,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("index file: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KbDoc {
    pub doc_id: String,
    pub change_id: String,
    pub text: String,
}

fn opt(label: &str, value: Option<&str>) -> String {
    value.map(|v| format!("{label}: {v}\n")).unwrap_or_default()
}

/// Renders a record as a knowledge-base document. The first line is a
/// one-line header (`api: ... | kind: ... | versions: ...`).
pub fn kb_doc(record: &ChangeRecord) -> KbDoc {
    let mut header = format!("api: {} | kind: {}", record.api.canonical(), record.kind);
    if let Some(r) = &record.replacement {
        header.push_str(&format!(" | replacement: {}", r.canonical()));
    }
    let from = record.from_version.map(|v| v.to_string()).unwrap_or_else(|| "-".into());
    header.push_str(&format!(" | versions: {from} -> {}", record.to_version));
    let text = format!(
        "{header}\n{}{}{}{}{}",
        opt("signature_old", record.old_signature.as_ref().map(|s| s.raw_text.as_str())),
        opt("signature_new", record.new_signature.as_ref().map(|s| s.raw_text.as_str())),
        opt("doc_old", record.old_doc.as_deref()),
        opt("doc_new", record.new_doc.as_deref()),
        opt("note", record.changelog_note.as_deref()),
    );
    KbDoc { doc_id: record.change_id.clone(), change_id: record.change_id.clone(), text: text.trim_end().to_string() }
}

/// Lowercased alphanumeric runs; `::`, `_` and punctuation separate tokens.
pub fn tokenize_text(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric()).filter(|t| !t.is_empty()).map(str::to_lowercase).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct IndexedDoc {
    doc: KbDoc,
    length: usize,
    term_freqs: BTreeMap<String, u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bm25Index {
    docs: Vec<IndexedDoc>,
    doc_freqs: BTreeMap<String, u32>,
    avg_length: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scored {
    pub doc: KbDoc,
    pub score: f64,
}

pub fn build_index(records: &[ChangeRecord]) -> Result<Bm25Index, RagError> {
    Bm25Index::from_docs(records.iter().map(kb_doc).collect())
}

impl Bm25Index {
    pub fn from_docs(docs: Vec<KbDoc>) -> Result<Self, RagError> {
        let mut seen = BTreeSet::new();
        let mut indexed = Vec::with_capacity(docs.len());
        let mut doc_freqs: BTreeMap<String, u32> = BTreeMap::new();
        for doc in docs {
            if !seen.insert(doc.change_id.clone()) {
                return Err(RagError::IndexConflict(doc.change_id));
            }
            let tokens = tokenize_text(&doc.text);
            let mut term_freqs: BTreeMap<String, u32> = BTreeMap::new();
            for t in &tokens {
                *term_freqs.entry(t.clone()).or_default() += 1;
            }
            for t in term_freqs.keys() {
                *doc_freqs.entry(t.clone()).or_default() += 1;
            }
            indexed.push(IndexedDoc { doc, length: tokens.len(), term_freqs });
        }
        let total: usize = indexed.iter().map(|d| d.length).sum();
        let avg_length = if indexed.is_empty() { 0.0 } else { total as f64 / indexed.len() as f64 };
        Ok(Self { docs: indexed, doc_freqs, avg_length })
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    pub fn doc(&self, change_id: &str) -> Option<&KbDoc> {
        self.docs.iter().map(|d| &d.doc).find(|d| d.change_id == change_id)
    }

    /// `ln(1 + (N - df + 0.5) / (df + 0.5))`.
    pub fn idf(&self, term: &str) -> f64 {
        let n = self.docs.len() as f64;
        let df = f64::from(self.doc_freqs.get(term).copied().unwrap_or(0));
        (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
    }

    fn score_doc(&self, doc: &IndexedDoc, query_terms: &[String]) -> f64 {
        let norm = if self.avg_length > 0.0 { doc.length as f64 / self.avg_length } else { 0.0 };
        query_terms
            .iter()
            .map(|t| {
                let tf = f64::from(doc.term_freqs.get(t).copied().unwrap_or(0));
                if tf == 0.0 {
                    return 0.0;
                }
                self.idf(t) * tf * (K1 + 1.0) / (tf + K1 * (1.0 - B + B * norm))
            })
            .sum()
    }

    /// BM25 score of every document for `query`, in index order.
    pub fn scores(&self, query: &str) -> Vec<(String, f64)> {
        let terms = tokenize_text(query);
        self.docs.iter().map(|d| (d.doc.doc_id.clone(), self.score_doc(d, &terms))).collect()
    }

    /// Top `k` documents by score, ties broken by `doc_id`.
    pub fn retrieve(&self, query: &str, k: usize) -> Result<Vec<Scored>, RagError> {
        if k == 0 {
            return Err(RagError::InvalidK);
        }
        let terms = tokenize_text(query);
        let mut scored: Vec<Scored> =
            self.docs.iter().map(|d| Scored { doc: d.doc.clone(), score: self.score_doc(d, &terms) }).collect();
        scored.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.doc.doc_id.cmp(&b.doc.doc_id)));
        scored.truncate(k);
        Ok(scored)
    }

    pub fn save(&self, path: &Path) -> Result<(), RagError> {
        let mut text = serde_json::to_string(self)?;
        text.push('\n');
        fs::write(path, text).map_err(|e| ModelError::Io { path: path.to_path_buf(), source: e })?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, RagError> {
        let text = fs::read_to_string(path).map_err(|e| ModelError::Io { path: path.to_path_buf(), source: e })?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Cuts `text` to at most `budget` whitespace-separated tokens, marking a
/// cut with `...`. Line breaks between kept tokens are preserved.
pub fn truncate_to_budget(text: &str, budget: usize) -> String {
    let mut count = 0;
    let mut out_lines = Vec::new();
    for line in text.lines() {
        let words: Vec<&str> = line.split_whitespace().collect();
        if count + words.len() <= budget {
            count += words.len();
            out_lines.push(line.trim_end().to_string());
            continue;
        }
        let keep = budget - count;
        let mut cut = words[..keep].join(" ");
        if !cut.is_empty() {
            cut.push(' ');
        }
        cut.push_str("...");
        out_lines.push(cut);
        return out_lines.join("\n");
    }
    out_lines.join("\n")
}

/// Asks the client to summarize retrieved docs, then enforces the budget.
pub fn summarize(
    docs: &[KbDoc],
    query: &str,
    client: &dyn ModelClient,
    template: &str,
    token_budget: usize,
) -> Result<String, RagError> {
    if docs.is_empty() {
        return Err(RagError::EmptyDocs);
    }
    let bindings = BTreeMap::from([
        ("query", query.to_string()),
        ("docs", docs.iter().map(|d| d.text.as_str()).collect::<Vec<_>>().join("\n\n")),
        ("token_budget", token_budget.to_string()),
    ]);
    let prompt = render(template, &bindings).map_err(|e| RagError::GenerationExhausted(e.to_string()))?;
    let mut last = String::from("empty summary");
    for _ in 0..3 {
        match client.generate(&prompt, 0.0, (token_budget as u32).saturating_mul(2).max(16)) {
            Ok(text) if !text.trim().is_empty() => return Ok(truncate_to_budget(text.trim(), token_budget)),
            Ok(_) => {}
            Err(e) => last = e.to_string(),
        }
    }
    Err(RagError::GenerationExhausted(last))
}

/// Inputs for building per-condition context.
pub struct ContextSource<'a> {
    pub records: &'a BTreeMap<String, ChangeRecord>,
    pub index: Option<&'a Bm25Index>,
    pub client: &'a dyn ModelClient,
    pub summarize_template: &'a str,
    pub k: usize,
    pub token_budget: usize,
}

impl ContextSource<'_> {
    /// Nothing for `no_info`, the task's own record for `oracle_info`, and a
    /// summary of retrieved records for `rag`.
    pub fn context(&self, condition: Condition, task: &TaskSpec) -> Result<String, RagError> {
        match condition {
            Condition::NoInfo => Ok(String::new()),
            Condition::OracleInfo => {
                let record =
                    self.records.get(&task.change_id).ok_or_else(|| RagError::MissingDoc(task.change_id.clone()))?;
                Ok(format!("Relevant API documentation:\n{}\n", kb_doc(record).text))
            }
            Condition::Rag => {
                let index = self.index.ok_or(RagError::MissingIndex)?;
                let hits = index.retrieve(&task.query, self.k)?;
                let docs: Vec<KbDoc> = hits.into_iter().map(|s| s.doc).collect();
                let summary = summarize(&docs, &task.query, self.client, self.summarize_template, self.token_budget)?;
                Ok(format!("Retrieved API documentation:\n{summary}\n"))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::taskgen::client::{MockClient, MockConfig};
    use crate::taskgen::prompts::PromptSet;

    fn doc(id: &str, text: &str) -> KbDoc {
        KbDoc { doc_id: id.into(), change_id: id.into(), text: text.into() }
    }

    #[test]
    fn tokenizer_splits_paths() {
        assert_eq!(
            tokenize_text("std::slice::first_chunk_mut() -> Option<&mut [T; N]>"),
            vec!["std", "slice", "first", "chunk", "mut", "option", "mut", "t", "n"]
        );
    }

    #[test]
    fn rare_term_ranks_first() {
        let idx = Bm25Index::from_docs(vec![
            doc("a", "vector push capacity"),
            doc("b", "vector chunk capacity"),
            doc("c", "vector pop capacity"),
        ])
        .unwrap();
        let hits = idx.retrieve("chunk vector", 3).unwrap();
        assert_eq!(hits[0].doc.doc_id, "b");
        // a and c tie; doc_id breaks the tie
        assert_eq!(hits[1].doc.doc_id, "a");
        assert_eq!(idx.retrieve("x", 10).unwrap().len(), 3);
        assert!(matches!(idx.retrieve("x", 0), Err(RagError::InvalidK)));
    }

    #[test]
    fn duplicates_conflict() {
        assert!(matches!(Bm25Index::from_docs(vec![doc("a", "x"), doc("a", "y")]), Err(RagError::IndexConflict(_))));
        assert!(Bm25Index::from_docs(vec![]).unwrap().is_empty());
    }

    #[test]
    fn truncation() {
        assert_eq!(truncate_to_budget("a b c\nd e", 10), "a b c\nd e");
        assert_eq!(truncate_to_budget("a b c\nd e", 4), "a b c\nd ...");
        assert_eq!(truncate_to_budget("api: x | kind: y", 2), "api: x ...");
        assert_eq!(truncate_to_budget("a b", 0), "...");
    }

    #[test]
    fn mock_summary_is_headers() {
        let client = MockClient::new("mock", None, MockConfig::default());
        let prompts = PromptSet::builtin();
        let docs = vec![
            doc("a", "api: std::a::f | kind: Stabilization\nsignature_new: pub fn f()"),
            doc("b", "api: std::b::g | kind: Deprecation\nnote: gone"),
        ];
        let s = summarize(&docs, "q", &client, &prompts.summarize, 100).unwrap();
        assert_eq!(s, "api: std::a::f | kind: Stabilization\napi: std::b::g | kind: Deprecation");
        assert!(matches!(summarize(&[], "q", &client, &prompts.summarize, 100), Err(RagError::EmptyDocs)));
        assert_eq!(summarize(&docs[..1], "q", &client, &prompts.summarize, 3).unwrap(), "api: std::a::f | ...");
    }

    #[test]
    fn index_round_trips_through_json() {
        let dir = tempfile::tempdir().unwrap();
        let idx = Bm25Index::from_docs(vec![doc("a", "x y"), doc("b", "y z")]).unwrap();
        let path = dir.path().join(INDEX_FILE);
        idx.save(&path).unwrap();
        assert_eq!(Bm25Index::load(&path).unwrap(), idx);
    }
}
