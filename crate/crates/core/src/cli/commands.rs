use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::Serialize;
use sha2::{Digest, Sha256};

use super::config::{Backend, LoadedConfig};
use super::report::{comparison_table, ComparisonTable, RunMetadata, RunReport};
use super::CliError;
use crate::doc_diff::{diff_doc_trees, parse_doc_tree, DocTree};
use crate::eval::{build_report, split_by_cutoff, CandidateSource, EvalError, EvalRun};
use crate::fuse::{fuse, select_stable_controls, FuseError, SideRecord};
use crate::model::jsonl::{read_jsonl, write_jsonl};
use crate::model::{ApiIdentity, ChangeKind, ChangeRecord, Condition, EvalOutcome, TaskSpec, UsageExample, VersionId};
use crate::rag::{build_index, Bm25Index, ContextSource, INDEX_FILE};
use crate::release_notes::{notes_file_name, parse_release_notes_with, NotesDiagnostics};
use crate::sandbox::{RustcSandbox, Sandbox};
use crate::source::{analyze_snapshots, SnapshotDiagnostics};
use crate::taskgen::client::{MockClient, ModelClient, RemoteClient};
use crate::taskgen::prompts::PromptSet;
use crate::taskgen::{GenerationStats, Generator};
use crate::usage::{mine_usages, RepoEntry, UsageDiagnostics, UsageTarget};

pub const CHANGES_FILE: &str = "changes.jsonl";
pub const LOW_CONFIDENCE_FILE: &str = "changes.low_confidence.jsonl";
pub const MINE_DIAGNOSTICS_FILE: &str = "mine.diagnostics.json";
pub const USAGES_FILE: &str = "usages.jsonl";
pub const TASKS_FILE: &str = "tasks.jsonl";
pub const GENERATION_STATS_FILE: &str = "generation.stats.json";
pub const OUTCOMES_FILE: &str = "outcomes.jsonl";
pub const REPORT_FILE: &str = "report.json";
pub const REPORT_CSV_FILE: &str = "report.csv";
pub const REPORT_TEXT_FILE: &str = "report.txt";
pub const CONTROLS_FILE: &str = "controls.jsonl";

fn require(path: PathBuf) -> Result<PathBuf, CliError> {
    if path.exists() {
        Ok(path)
    } else {
        Err(CliError::MissingInput(path))
    }
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| CliError::Io { path: parent.to_path_buf(), source: e })?;
    }
    fs::write(path, text).map_err(|e| CliError::Io { path: path.to_path_buf(), source: e })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    write_text(path, &(serde_json::to_string_pretty(value).expect("serializable") + "\n"))
}

fn write_lines<T: Serialize>(path: &Path, items: &[T]) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| CliError::Io { path: parent.to_path_buf(), source: e })?;
    }
    write_jsonl(path, items).map_err(CliError::from)
}

fn read_lines<T: serde::de::DeserializeOwned>(path: PathBuf) -> Result<Vec<T>, CliError> {
    let path = require(path)?;
    read_jsonl(&path).map_err(|e| CliError::SchemaMismatch { path, reason: e.to_string() })
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct MineDiagnostics {
    pub notes: BTreeMap<String, NotesDiagnostics>,
    pub malformed_doc_files: Vec<String>,
    pub source: BTreeMap<String, SnapshotDiagnostics>,
    pub warnings: Vec<FuseError>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MineSummary {
    pub records: Vec<ChangeRecord>,
    pub low_confidence: Vec<SideRecord>,
    pub diagnostics: MineDiagnostics,
}

fn load_tree(cfg: &LoadedConfig, version: VersionId, diags: &mut MineDiagnostics) -> Result<DocTree, CliError> {
    let root = require(cfg.resolve(&cfg.config.staging_paths.docs).join(version.to_string()))?;
    let parsed = parse_doc_tree(&root, version).map_err(|e| CliError::Input(e.to_string()))?;
    diags.malformed_doc_files.extend(parsed.malformed.iter().map(ToString::to_string));
    Ok(parsed.tree)
}

/// Runs every miner and the fuser over each configured release pair.
pub fn cmd_mine(cfg: &LoadedConfig, out_dir: &Path) -> Result<MineSummary, CliError> {
    let c = &cfg.config;
    let mut diags = MineDiagnostics::default();
    let mut records = Vec::new();
    let mut low = Vec::new();
    for &(from, to) in &c.versions.pairs {
        let notes_path = require(cfg.resolve(&c.staging_paths.notes).join(notes_file_name(to)))?;
        let old = load_tree(cfg, from, &mut diags)?;
        let new = load_tree(cfg, to, &mut diags)?;
        let src = cfg.resolve(&c.staging_paths.src);
        let (old_src, new_src) = (require(src.join(from.to_string()))?, require(src.join(to.to_string()))?);

        let notes_text =
            fs::read_to_string(&notes_path).map_err(|e| CliError::Io { path: notes_path.clone(), source: e })?;
        let known: BTreeSet<String> = new.items.values().map(|i| i.api.final_segment().to_string()).collect();
        let notes = parse_release_notes_with(&notes_text, to, &known);
        let docs = diff_doc_trees(&old, &new).map_err(|e| CliError::Input(e.to_string()))?;
        let source =
            analyze_snapshots(&old_src, &new_src, to, &c.crates).map_err(|e| CliError::Input(e.to_string()))?;

        let fused = fuse(&notes.signals, &docs, &source.signals, from, to);
        diags.notes.insert(to.to_string(), notes.diagnostics);
        diags.source.insert(to.to_string(), source.diagnostics);
        diags.warnings.extend(fused.warnings);
        records.extend(fused.records);
        low.extend(fused.low_confidence);
    }
    records.sort_by(|a, b| {
        (a.api.canonical(), a.to_version, &a.change_id).cmp(&(b.api.canonical(), b.to_version, &b.change_id))
    });
    records.dedup_by(|a, b| a.change_id == b.change_id);
    low.sort_by_key(|a| (a.record.api.canonical(), a.record.to_version));

    write_lines(&out_dir.join(CHANGES_FILE), &records)?;
    write_lines(&out_dir.join(LOW_CONFIDENCE_FILE), &low)?;
    write_json(&out_dir.join(MINE_DIAGNOSTICS_FILE), &diags)?;
    Ok(MineSummary { records, low_confidence: low, diagnostics: diags })
}

fn sandbox(cfg: &LoadedConfig) -> RustcSandbox {
    RustcSandbox::new(cfg.config.sandbox.clone())
}

/// Usage examples for every mined change from repositories in the index.
pub fn cmd_usages(cfg: &LoadedConfig, out_dir: &Path) -> Result<(Vec<UsageExample>, UsageDiagnostics), CliError> {
    let records: Vec<ChangeRecord> = read_lines(out_dir.join(CHANGES_FILE))?;
    let index_rel = cfg
        .config
        .staging_paths
        .repo_index
        .as_ref()
        .ok_or_else(|| CliError::Config("staging_paths.repo_index is not set".into()))?;
    let index_path = cfg.resolve(index_rel);
    let mut repos: Vec<RepoEntry> = read_lines(index_path.clone())?;
    let index_dir = index_path.parent().map(Path::to_path_buf).unwrap_or_default();
    for r in &mut repos {
        if r.local_path.is_relative() {
            r.local_path = index_dir.join(&r.local_path);
        }
    }
    let dates = cfg.dates()?;
    let mut targets = Vec::new();
    for r in &records {
        let release_date = dates.date_of(r.to_version).map_err(|e| CliError::Input(e.to_string()))?;
        targets.push(UsageTarget { api: r.api.clone(), version: r.to_version, release_date });
    }
    let probe = cfg.config.usages.compile_probe.then(|| sandbox(cfg));
    let (examples, diags) =
        mine_usages(&repos, &targets, probe.as_ref().map(|s| s as &dyn Sandbox), cfg.config.usages.max_per_api);
    write_lines(&out_dir.join(USAGES_FILE), &examples)?;
    Ok((examples, diags))
}

pub fn model_client(cfg: &LoadedConfig) -> Result<Box<dyn ModelClient>, CliError> {
    let m = &cfg.config.model;
    Ok(match m.backend {
        Backend::Mock => Box::new(MockClient::new(m.model_id.clone(), m.cutoff_date, m.mock.clone())),
        Backend::Remote => Box::new(
            RemoteClient::from_env(&m.model_id, m.cutoff_date, cfg.config.seed, &m.remote)
                .map_err(|e| CliError::Backend(e.to_string()))?,
        ),
    })
}

fn prompts(cfg: &LoadedConfig) -> Result<PromptSet, CliError> {
    match &cfg.config.model.prompts_dir {
        None => Ok(PromptSet::builtin()),
        Some(dir) => {
            let dir = require(cfg.resolve(dir))?;
            PromptSet::with_overrides(&dir).map_err(|e| CliError::Config(e.to_string()))
        }
    }
}

/// Drafts, judges and (unless `no_sandbox`) compile-checks one task per change.
pub fn cmd_generate(cfg: &LoadedConfig, out_dir: &Path, no_sandbox: bool) -> Result<GenerationStats, CliError> {
    let records: Vec<ChangeRecord> = read_lines(out_dir.join(CHANGES_FILE))?;
    let usages: Vec<UsageExample> = read_lines(out_dir.join(USAGES_FILE))?;
    let client = model_client(cfg)?;
    let prompts = prompts(cfg)?;
    let generator = Generator::new(client.as_ref(), &prompts, cfg.config.model.gen_config());
    let sb = (!no_sandbox).then(|| sandbox(cfg));
    let run = generator
        .generate_tasks(&records, &usages, sb.as_ref().map(|s| s as &dyn Sandbox))
        .map_err(CliError::from_gen)?;
    let mut tasks = run.released();
    tasks.sort_by(|a, b| a.task_id.cmp(&b.task_id));
    let stats = run.stats();
    write_lines(&out_dir.join(TASKS_FILE), &tasks)?;
    write_json(&out_dir.join(GENERATION_STATS_FILE), &stats)?;
    Ok(stats)
}

pub fn cmd_rag_index(out_dir: &Path) -> Result<Bm25Index, CliError> {
    let records: Vec<ChangeRecord> = read_lines(out_dir.join(CHANGES_FILE))?;
    let index = build_index(&records).map_err(|e| CliError::Input(e.to_string()))?;
    let path = out_dir.join(INDEX_FILE);
    index.save(&path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    Ok(index)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EvaluateOptions {
    pub condition: Condition,
    pub cutoff: Option<NaiveDate>,
    /// Extra Pass@k to report besides Pass@1.
    pub k: Option<u32>,
    pub no_sandbox: bool,
    /// Score each task's reference solution instead of model output.
    pub reference: bool,
}

impl Default for EvaluateOptions {
    fn default() -> Self {
        Self { condition: Condition::NoInfo, cutoff: None, k: None, no_sandbox: false, reference: false }
    }
}

pub fn sha256_file(path: &Path) -> Result<String, CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::Io { path: path.to_path_buf(), source: e })?;
    Ok(hex::encode(Sha256::digest(bytes)))
}

/// Scores candidates for every task under one condition.
pub fn cmd_evaluate(cfg: &LoadedConfig, out_dir: &Path, opts: &EvaluateOptions) -> Result<RunReport, CliError> {
    let tasks_path = require(out_dir.join(TASKS_FILE))?;
    let tasks: Vec<TaskSpec> = read_lines(tasks_path.clone())?;
    let records: Vec<ChangeRecord> = read_lines(out_dir.join(CHANGES_FILE))?;
    let records: BTreeMap<String, ChangeRecord> = records.into_iter().map(|r| (r.change_id.clone(), r)).collect();
    let index = match opts.condition {
        Condition::Rag => {
            let path = require(out_dir.join(INDEX_FILE))?;
            Some(Bm25Index::load(&path).map_err(|e| CliError::SchemaMismatch { path, reason: e.to_string() })?)
        }
        _ => None,
    };
    let mut task_kinds: BTreeMap<String, ChangeKind> = BTreeMap::new();
    for t in &tasks {
        let r = records
            .get(&t.change_id)
            .ok_or_else(|| CliError::Input(format!("task {} has no change record", t.task_id)))?;
        task_kinds.insert(t.task_id.clone(), r.kind);
    }

    let sb = if opts.no_sandbox {
        None
    } else {
        let sb = sandbox(cfg);
        let versions: BTreeSet<VersionId> = tasks.iter().map(|t| t.target_version).collect();
        for v in versions {
            sb.resolve_toolchain(v).map_err(|e| CliError::Backend(e.to_string()))?;
        }
        Some(sb)
    };

    let m = &cfg.config.model;
    let client = model_client(cfg)?;
    let prompts = prompts(cfg)?;
    let samples = m.samples.max(opts.k.unwrap_or(1));
    let source = if opts.reference {
        CandidateSource::Reference
    } else {
        CandidateSource::Model {
            client: client.as_ref(),
            template: &prompts.eval,
            temperature: m.temperature,
            max_tokens: m.max_tokens,
        }
    };
    let run = EvalRun { source, condition: opts.condition, samples, sandbox: sb.as_ref().map(|s| s as &dyn Sandbox) };
    let ctx = ContextSource {
        records: &records,
        index: index.as_ref(),
        client: client.as_ref(),
        summarize_template: &prompts.summarize,
        k: cfg.config.rag.k,
        token_budget: cfg.config.rag.token_budget,
    };
    let outcomes: Vec<EvalOutcome> = run
        .run(&tasks, |t| ctx.context(opts.condition, t).map_err(|e| EvalError::Context(e.to_string())))
        .map_err(CliError::from_eval)?;

    let mut ks = vec![1];
    ks.extend(opts.k.filter(|&k| k > 1));
    let split = match opts.cutoff {
        Some(date) => Some(split_by_cutoff(&tasks, &cfg.dates()?, date).map_err(CliError::from_eval)?),
        None => None,
    };
    let metrics = build_report(&outcomes, &task_kinds, &ks, split.as_ref()).map_err(CliError::from_eval)?;
    let assumed_params = match opts.condition {
        Condition::Rag => BTreeMap::from([
            ("rag_k".to_string(), cfg.config.rag.k as u64),
            ("rag_token_budget".to_string(), cfg.config.rag.token_budget as u64),
        ]),
        _ => BTreeMap::new(),
    };
    let report = RunReport {
        metrics,
        metadata: RunMetadata {
            model_id: run.model_id().to_string(),
            condition: opts.condition,
            dataset_hash: sha256_file(&tasks_path)?,
            config_hash: cfg.hash.clone(),
            dry_run: sb.is_none(),
            samples,
            assumed_params,
        },
    };
    write_lines(&out_dir.join(OUTCOMES_FILE), &outcomes)?;
    write_text(&out_dir.join(REPORT_FILE), &report.to_json())?;
    Ok(report)
}

/// Comparison table over several `report.json` files, written as CSV and text.
pub fn cmd_report(paths: &[PathBuf], out_dir: &Path) -> Result<ComparisonTable, CliError> {
    if paths.is_empty() {
        return Err(CliError::Input("report needs at least one report.json".into()));
    }
    let reports = paths.iter().map(|p| Ok((p.clone(), RunReport::load(p)?))).collect::<Result<Vec<_>, CliError>>()?;
    let table = comparison_table(&reports)?;
    write_text(&out_dir.join(REPORT_CSV_FILE), &table.to_csv())?;
    write_text(&out_dir.join(REPORT_TEXT_FILE), &table.to_text())?;
    Ok(table)
}

/// Unchanged official items usable as a control set.
pub fn cmd_control_set(cfg: &LoadedConfig, out_dir: &Path, n: Option<usize>) -> Result<Vec<ApiIdentity>, CliError> {
    let c = &cfg.config;
    let cutoff =
        c.versions.control_cutoff.ok_or_else(|| CliError::Config("versions.control_cutoff is not set".into()))?;
    let versions: BTreeSet<VersionId> =
        c.versions.pairs.iter().flat_map(|&(a, b)| [a, b]).filter(|v| *v >= cutoff).collect();
    let mut ignored = MineDiagnostics::default();
    let trees = versions.into_iter().map(|v| load_tree(cfg, v, &mut ignored)).collect::<Result<Vec<_>, _>>()?;
    let controls = select_stable_controls(&trees, cutoff, n.unwrap_or(c.versions.control_n))
        .map_err(|e| CliError::Input(e.to_string()))?;
    write_lines(&out_dir.join(CONTROLS_FILE), &controls)?;
    Ok(controls)
}
