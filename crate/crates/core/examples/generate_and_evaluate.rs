//! Synthesizes tasks from two change records with the mock backend, then
//! scores the same backend with and without oracle documentation.
//!
//! Runs without a sandbox, so only the static API check is scored; the mock
//! names the right API exactly when the context tells it which one to use.

use std::collections::{BTreeMap, BTreeSet};

use evoforge::cli::report::{comparison_table, RunMetadata, RunReport};
use evoforge::eval::{build_report, CandidateSource, EvalError, EvalRun};
use evoforge::model::{
    ApiIdentity, ApiSignature, ChangeKind, ChangeRecord, Condition, ItemKind, Provenance, VersionId,
};
use evoforge::rag::ContextSource;
use evoforge::taskgen::client::{MockClient, MockConfig};
use evoforge::taskgen::prompts::PromptSet;
use evoforge::taskgen::{GenConfig, Generator};

fn record(path: &str, kind: ChangeKind, old: Option<&str>, new: &str) -> ChangeRecord {
    ChangeRecord::new(
        ApiIdentity::parse(path, ItemKind::Function).unwrap(),
        kind,
        Some(VersionId::new(1, 76, 0)),
        VersionId::new(1, 77, 0),
        old.map(|s| ApiSignature::parse(s).unwrap()),
        Some(ApiSignature::parse(new).unwrap()),
        BTreeSet::from([Provenance::Changelog, Provenance::Docdiff]),
    )
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let records = vec![
        record(
            "std::slice::first_chunk",
            ChangeKind::Stabilization,
            None,
            "pub fn first_chunk(xs: &[u8]) -> Option<&[u8; 2]>",
        ),
        record(
            "std::iter::repeat_n",
            ChangeKind::SignatureChange,
            Some("pub fn repeat_n(x: u16) -> u16"),
            "pub fn repeat_n(x: u32) -> u32",
        ),
    ];
    let client = MockClient::new("mock-model", None, MockConfig::default());
    let prompts = PromptSet::builtin();
    let run = Generator::new(&client, &prompts, GenConfig::default()).generate_tasks(&records, &[], None)?;
    let tasks = run.released();
    let stats = run.stats();
    println!("released {}/{} tasks, {:?} cases per task", stats.released, stats.records, stats.avg_cases_per_task);
    for t in &tasks {
        println!("  {} targets {}: {}", t.task_id, t.target_version, t.query.lines().next().unwrap_or(""));
    }

    let by_change: BTreeMap<String, ChangeRecord> = records.iter().map(|r| (r.change_id.clone(), r.clone())).collect();
    let kinds: BTreeMap<String, ChangeKind> =
        tasks.iter().map(|t| (t.task_id.clone(), by_change[&t.change_id].kind)).collect();
    let ctx = ContextSource {
        records: &by_change,
        index: None,
        client: &client,
        summarize_template: &prompts.summarize,
        k: 3,
        token_budget: 512,
    };

    let mut reports = Vec::new();
    for condition in [Condition::NoInfo, Condition::OracleInfo] {
        let eval = EvalRun {
            source: CandidateSource::Model {
                client: &client,
                template: &prompts.eval,
                temperature: 0.0,
                max_tokens: 512,
            },
            condition,
            samples: 1,
            sandbox: None,
        };
        let outcomes =
            eval.run(&tasks, |t| ctx.context(condition, t).map_err(|e| EvalError::Context(e.to_string())))?;
        let metrics = build_report(&outcomes, &kinds, &[1], None)?;
        let metadata = RunMetadata {
            model_id: eval.model_id().into(),
            condition,
            dataset_hash: String::new(),
            config_hash: String::new(),
            dry_run: true,
            samples: 1,
            assumed_params: BTreeMap::new(),
        };
        reports.push((format!("{condition}.json").into(), RunReport { metrics, metadata }));
    }
    print!("{}", comparison_table(&reports)?.to_text());
    Ok(())
}
