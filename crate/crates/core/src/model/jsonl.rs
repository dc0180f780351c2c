//! JSON-Lines reading and writing for the dataset files.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use super::ModelError;

pub const CHANGES_FILE: &str = "changes.jsonl";
pub const LOW_CONFIDENCE_FILE: &str = "changes.low_confidence.jsonl";
pub const USAGES_FILE: &str = "usages.jsonl";
pub const TASKS_FILE: &str = "tasks.jsonl";
pub const OUTCOMES_FILE: &str = "outcomes.jsonl";

pub fn to_jsonl_string<T: Serialize>(items: &[T]) -> Result<String, ModelError> {
    let mut out = String::new();
    for item in items {
        out.push_str(&serde_json::to_string(item).map_err(|e| ModelError::Json { line: 0, source: e })?);
        out.push('\n');
    }
    Ok(out)
}

pub fn from_jsonl_str<T: DeserializeOwned>(text: &str) -> Result<Vec<T>, ModelError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| ModelError::Json { line: i + 1, source: e }))
        .collect()
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<(), ModelError> {
    let text = to_jsonl_string(items)?;
    let mut file = fs::File::create(path).map_err(|e| ModelError::io(path, e))?;
    file.write_all(text.as_bytes()).map_err(|e| ModelError::io(path, e))
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, ModelError> {
    let file = fs::File::open(path).map_err(|e| ModelError::io(path, e))?;
    let mut items = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| ModelError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        items.push(serde_json::from_str(&line).map_err(|e| ModelError::Json { line: i + 1, source: e })?);
    }
    Ok(items)
}
