//! Subcommands run against synthetic staging corpora.

mod common;

use std::collections::BTreeSet;

use common::{rustc_available, Fixture};
use evoforge::cli::commands::{
    cmd_control_set, cmd_evaluate, cmd_generate, cmd_mine, cmd_usages, EvaluateOptions, CHANGES_FILE, REPORT_FILE,
    TASKS_FILE, USAGES_FILE,
};
use evoforge::cli::CliError;
use evoforge::model::jsonl::{from_jsonl_str, to_jsonl_string};
use evoforge::model::{ChangeRecord, Condition, TaskSpec};

#[test]
fn mine_recovers_twelve_planted_events() {
    let fx = Fixture::new(3);
    let summary = cmd_mine(&fx.config(), &fx.out()).unwrap();
    assert_eq!(summary.records.len(), 12);
    let got: Vec<(String, _)> = summary.records.iter().map(|r| (r.api.canonical(), r.kind)).collect();
    let want: Vec<(String, _)> = fx.manifest.events.iter().map(|e| (e.api.clone(), e.kind)).collect();
    assert_eq!(got, want);
    let low: Vec<String> = summary.low_confidence.iter().map(|s| s.record.api.canonical()).collect();
    assert_eq!(low, fx.manifest.low_confidence);
    for r in &summary.records {
        r.validate().unwrap();
    }
}

#[test]
fn mine_is_rerun_safe() {
    let fx = Fixture::new(3);
    cmd_mine(&fx.config(), &fx.out()).unwrap();
    let first = fx.read_out(CHANGES_FILE);
    cmd_mine(&fx.config(), &fx.out()).unwrap();
    assert_eq!(fx.read_out(CHANGES_FILE), first);
}

#[test]
fn empty_staging_is_missing_input() {
    let fx = Fixture::new(1);
    std::fs::remove_dir_all(fx.dir.path().join("staging")).unwrap();
    assert!(matches!(cmd_mine(&fx.config(), &fx.out()), Err(CliError::MissingInput(_))));
    let run = fx.cli(&["mine"]);
    assert_eq!(run.code, 2, "{}", run.stderr);
    assert!(run.stderr.contains("missing input"), "{}", run.stderr);
}

#[test]
fn usages_come_only_from_recent_admitting_repos() {
    let fx = Fixture::new(3);
    cmd_mine(&fx.config(), &fx.out()).unwrap();
    let (examples, diags) = cmd_usages(&fx.config(), &fx.out()).unwrap();
    let got: BTreeSet<(String, String)> = examples.iter().map(|e| (e.repo_url.clone(), e.api.canonical())).collect();
    let want: BTreeSet<(String, String)> = fx
        .manifest
        .usages
        .iter()
        .flat_map(|(repo, apis)| apis.iter().map(move |a| (repo.clone(), a.clone())))
        .collect();
    assert_eq!(got, want);
    // the rust-version 1.80 repo is recent but excludes 1.77.0
    assert!(diags.rejected > 0);
    assert!(examples.iter().all(|e| e.snippet.lines().count() <= 21));
}

#[test]
fn control_set_matches_exhaustive_scan() {
    let fx = Fixture::new(3);
    let n = fx.manifest.controls.len();
    let got = cmd_control_set(&fx.config(), &fx.out(), Some(n)).unwrap();
    let got: Vec<String> = got.iter().map(|a| a.canonical()).collect();
    assert_eq!(got, fx.manifest.controls);
    assert!(matches!(cmd_control_set(&fx.config(), &fx.out(), Some(n + 1)), Err(CliError::Input(_))));
}

fn keep_first_changes(fx: &Fixture, n: usize) {
    let path = fx.out().join(CHANGES_FILE);
    let records: Vec<ChangeRecord> = from_jsonl_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    std::fs::write(&path, to_jsonl_string(&records[..n]).unwrap()).unwrap();
}

#[test]
fn generate_releases_one_task_per_change() {
    let fx = Fixture::new(3);
    cmd_mine(&fx.config(), &fx.out()).unwrap();
    cmd_usages(&fx.config(), &fx.out()).unwrap();
    keep_first_changes(&fx, 10);
    let stats = cmd_generate(&fx.config(), &fx.out(), true).unwrap();
    assert_eq!(stats.released, 10);
    assert!(stats.compile_qc_skipped);
    let tasks: Vec<TaskSpec> = from_jsonl_str(&String::from_utf8(fx.read_out(TASKS_FILE)).unwrap()).unwrap();
    assert_eq!(tasks.len(), 10);
}

#[test]
fn broken_seeds_lower_retention() {
    if !rustc_available() {
        eprintln!("rustc not found; compile QC cannot run");
        return;
    }
    let probe = Fixture::new(3);
    cmd_mine(&probe.config(), &probe.out()).unwrap();
    let records: Vec<ChangeRecord> = from_jsonl_str(&String::from_utf8(probe.read_out(CHANGES_FILE)).unwrap()).unwrap();
    let broken: Vec<String> = records[..2].iter().map(|r| r.api.canonical()).collect();

    let fx = Fixture::with_config(3, |c| c.model.mock.broken_apis = broken.clone());
    cmd_mine(&fx.config(), &fx.out()).unwrap();
    cmd_usages(&fx.config(), &fx.out()).unwrap();
    keep_first_changes(&fx, 10);
    let stats = cmd_generate(&fx.config(), &fx.out(), false).unwrap();
    assert_eq!((stats.released, stats.drafts), (8, 10));
    assert_eq!(stats.retention_percent, 80.0);
    let run = fx.cli(&["generate"]);
    assert_eq!(run.code, 0, "{}", run.stderr);
    assert!(run.stdout.contains("released: 8/10 drafts (80.0%)"), "{}", run.stdout);
}

#[test]
fn generate_needs_changes() {
    let fx = Fixture::new(1);
    assert!(
        matches!(cmd_generate(&fx.config(), &fx.out(), true), Err(CliError::MissingInput(p)) if p.ends_with(CHANGES_FILE))
    );
    assert_eq!(fx.cli(&["generate", "--no-sandbox"]).code, 2);
}

fn prepare_tasks(fx: &Fixture) {
    cmd_mine(&fx.config(), &fx.out()).unwrap();
    cmd_usages(&fx.config(), &fx.out()).unwrap();
    cmd_generate(&fx.config(), &fx.out(), true).unwrap();
}

#[test]
fn rag_without_index_is_missing_input() {
    let fx = Fixture::new(1);
    prepare_tasks(&fx);
    let opts = EvaluateOptions { condition: Condition::Rag, no_sandbox: true, ..Default::default() };
    assert!(
        matches!(cmd_evaluate(&fx.config(), &fx.out(), &opts), Err(CliError::MissingInput(p)) if p.ends_with("kb.index.json"))
    );
    assert_eq!(fx.cli(&["evaluate", "--condition", "rag", "--no-sandbox"]).code, 2);
    assert_eq!(fx.cli(&["rag-index"]).code, 0);
    assert_eq!(fx.cli(&["evaluate", "--condition", "rag", "--no-sandbox"]).code, 0);
}

#[test]
fn report_metadata_and_cutoff_split() {
    let fx = Fixture::new(2);
    prepare_tasks(&fx);
    let opts = EvaluateOptions {
        condition: Condition::OracleInfo,
        cutoff: chrono::NaiveDate::from_ymd_opt(2024, 7, 1),
        no_sandbox: true,
        ..Default::default()
    };
    let report = cmd_evaluate(&fx.config(), &fx.out(), &opts).unwrap();
    assert!(report.metadata.dry_run);
    assert_eq!(report.metadata.model_id, "mock");
    assert_eq!(report.metadata.dataset_hash.len(), 64);
    // every synthetic task targets 1.77.0, released before the cutoff
    assert_eq!(report.metrics.by_cutoff.len(), 1);
    let text = String::from_utf8(fx.read_out(REPORT_FILE)).unwrap();
    assert!(text.contains("\"metadata\"") && !text.contains("timestamp"));
}

#[test]
fn reference_solutions_pass_in_the_sandbox() {
    if !rustc_available() {
        eprintln!("rustc not found; skipping sandboxed self-consistency");
        return;
    }
    let fx = Fixture::new(1);
    prepare_tasks(&fx);
    let opts = EvaluateOptions { reference: true, ..Default::default() };
    let r = cmd_evaluate(&fx.config(), &fx.out(), &opts).unwrap();
    assert_eq!((r.metrics.pass_at_k[&1], r.metrics.aua, r.metrics.coverage), (1.0, 1.0, 1.0));
    assert!(!r.metadata.dry_run);
}

#[test]
fn pass_at_k_draws_enough_samples() {
    let fx = Fixture::new(1);
    prepare_tasks(&fx);
    let opts = EvaluateOptions { condition: Condition::OracleInfo, k: Some(3), no_sandbox: true, ..Default::default() };
    let r = cmd_evaluate(&fx.config(), &fx.out(), &opts).unwrap();
    assert_eq!(r.metadata.samples, 3);
    assert_eq!(r.metrics.pass_at_k.keys().copied().collect::<Vec<_>>(), vec![1, 3]);
}

#[test]
fn remote_backend_without_endpoint_is_a_backend_error() {
    let fx = Fixture::with_config(1, |c| c.model.backend = evoforge::cli::config::Backend::Remote);
    assert_eq!(fx.cli(&["mine"]).code, 0);
    assert_eq!(fx.cli(&["usages"]).code, 0);
    let run = std::process::Command::new(env!("CARGO_BIN_EXE_evoforge"))
        .args(["--config", fx.config_path().to_str().unwrap(), "generate", "--no-sandbox"])
        .env_remove("EVO_MODEL_ENDPOINT")
        .output()
        .unwrap();
    assert_eq!(run.status.code(), Some(3));
}

#[test]
fn unknown_config_keys_fail_fast() {
    let fx = Fixture::new(1);
    let path = fx.config_path();
    let mut v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    v["rag"]["top_k"] = serde_json::json!(9);
    std::fs::write(&path, v.to_string()).unwrap();
    let run = fx.cli(&["mine"]);
    assert_eq!(run.code, 2);
    assert!(run.stderr.contains("top_k"), "{}", run.stderr);
}

#[test]
fn usages_file_lists_examples() {
    let fx = Fixture::new(1);
    cmd_mine(&fx.config(), &fx.out()).unwrap();
    let run = fx.cli(&["usages"]);
    assert_eq!(run.code, 0, "{}", run.stderr);
    assert!(fx.out().join(USAGES_FILE).is_file());
}
