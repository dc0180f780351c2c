//! Shared domain types, the JSON-Lines dataset schema and dataset statistics.

mod api;
mod dates;
pub mod jsonl;
mod records;
mod stats;
mod version;

use std::path::{Path, PathBuf};

pub use api::{normalize_whitespace, ApiIdentity, ApiSignature, ItemKind, SourceClass};
pub use dates::{VersionDate, VersionDateTable};
pub use records::{
    compute_change_id, ChangeKind, ChangeRecord, Condition, CutoffGroup, EvalOutcome, KindMetrics, MetricReport,
    Provenance, TaskSpec, UsageExample, VerificationTier,
};
pub use stats::{
    avg_cases_per_task, dataset_stats, round_f64_half_up, round_half_up, stats_from_counts, DatasetStats, Ratio, Share,
};
pub use version::{parse_version, VersionId};

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("malformed version {0:?}, expected major.minor.patch")]
    MalformedVersion(String),
    #[error("invalid API path {0:?}")]
    InvalidApiPath(String),
    #[error("empty signature text")]
    EmptySignature,
    #[error("unbalanced brackets in signature")]
    UnbalancedSignature,
    #[error("param_count {count} does not match {types} param types")]
    ParamCountMismatch { count: usize, types: usize },
    #[error("invalid record: {0}")]
    InvalidRecord(String),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("no release date known for version {0}")]
    UnknownVersionDate(VersionId),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("JSON error at line {line}: {source}")]
    Json {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
}

impl ModelError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        ModelError::Io { path: path.to_path_buf(), source }
    }
}
