//! Four-stage task synthesis (query, solution, test program, augmentation)
//! with judge-based and compile-based quality control.
//!
//! Each stage function takes only the inputs it needs, so no stage sees
//! another stage's prompt.

pub mod client;
pub mod prompts;
mod seed;

use std::collections::BTreeMap;
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::model::{ApiIdentity, ChangeRecord, Ratio, TaskSpec, UsageExample};
use crate::program::{assemble_test_program, run_candidate, split_support, strip_code_fence};
use crate::sandbox::{Sandbox, SandboxError};
use crate::source::extract_items;
use client::{ClientError, ModelClient};
use prompts::{render, PromptSet, RenderError, Stage};
pub use seed::{prepare_seed, SeedBundle, MAX_SEED_USAGES};

#[derive(Debug, thiserror::Error)]
pub enum GenError {
    #[error("{stage} stage exhausted after {attempts} attempts: {reason}")]
    GenerationExhausted { stage: Stage, attempts: u32, reason: String },
    #[error("judge reply not understood: {0:?}")]
    JudgeUnparseable(String),
    #[error(transparent)]
    Client(#[from] ClientError),
    #[error(transparent)]
    Render(#[from] RenderError),
    #[error(transparent)]
    Sandbox(#[from] SandboxError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenConfig {
    /// Attempts per stage, and judge rounds per change.
    pub retries: u32,
    pub temperature: f64,
    pub max_tokens: u32,
    /// Minimum test cases after augmentation.
    pub augment_target: usize,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self { retries: 3, temperature: 0.7, max_tokens: 2048, augment_target: 4 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    ApiMentioned,
    Misaligned,
    TechnicalError,
    LowCoverage,
}

impl fmt::Display for RejectReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RejectReason::ApiMentioned => "api_mentioned",
            RejectReason::Misaligned => "misaligned",
            RejectReason::TechnicalError => "technical_error",
            RejectReason::LowCoverage => "low_coverage",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Accept,
    Reject(RejectReason),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QcStage {
    SolutionCompile,
    TestsRun,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CompileVerdict {
    Pass,
    Fail(QcStage),
}

/// True when `query` contains the API's canonical or in-crate path, or its
/// final segment as a standalone identifier.
pub fn query_mentions_api(query: &str, api: &ApiIdentity) -> bool {
    if query.contains(&api.canonical()) || query.contains(&api.path_string()) {
        return true;
    }
    let name = api.final_segment();
    query.split(|c: char| !(c.is_alphanumeric() || c == '_')).any(|tok| tok == name)
}

/// Parses a judge reply: first non-empty line `ACCEPT` or `REJECT:<reason>`.
pub fn parse_verdict(reply: &str) -> Result<Verdict, GenError> {
    let line = reply.lines().map(str::trim).find(|l| !l.is_empty()).unwrap_or_default();
    if line == "ACCEPT" {
        return Ok(Verdict::Accept);
    }
    let reason =
        line.strip_prefix("REJECT:").map(str::trim).ok_or_else(|| GenError::JudgeUnparseable(line.to_string()))?;
    let reason = match reason {
        "api_mentioned" => RejectReason::ApiMentioned,
        "misaligned" => RejectReason::Misaligned,
        "technical_error" => RejectReason::TechnicalError,
        "low_coverage" => RejectReason::LowCoverage,
        other => return Err(GenError::JudgeUnparseable(other.to_string())),
    };
    Ok(Verdict::Reject(reason))
}

fn parse_cases(reply: &str) -> Vec<String> {
    let mut cases: Vec<String> = Vec::new();
    for line in reply.lines() {
        if let Some(case) = line.trim().strip_prefix("CASE:") {
            let case = case.trim().to_string();
            if !case.is_empty() && !cases.contains(&case) {
                cases.push(case);
            }
        }
    }
    cases
}

/// Header of the solution's `solve` function, else of its first function.
fn entry_signature(solution: &str) -> Option<String> {
    let scan = extract_items(solution, &Default::default());
    let fns: Vec<_> = scan.items.iter().filter(|i| i.header_text.contains("fn ")).collect();
    fns.iter().find(|i| i.api.final_segment() == "solve").or(fns.first()).map(|i| i.header_text.clone())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Augmented {
    pub test_cases: Vec<String>,
    /// Augmentation failed and the draft's cases were kept.
    pub flagged: bool,
}

pub struct Generator<'a> {
    pub client: &'a dyn ModelClient,
    pub prompts: &'a PromptSet,
    pub config: GenConfig,
}

impl<'a> Generator<'a> {
    pub fn new(client: &'a dyn ModelClient, prompts: &'a PromptSet, config: GenConfig) -> Self {
        Self { client, prompts, config }
    }

    fn call(
        &self,
        seed: &SeedBundle,
        stage: Stage,
        extra: &[(&'static str, String)],
        feedback: Option<&str>,
    ) -> Result<String, GenError> {
        let mut bindings = seed.bindings();
        bindings.extend(extra.iter().cloned());
        let mut prompt = render(&self.prompts.get(seed.kind, stage).body, &bindings)?;
        if let Some(note) = feedback {
            prompt.push_str(&format!("\n\nA previous attempt was rejected: {note}\n"));
        }
        Ok(self.client.generate(&prompt, self.config.temperature, self.config.max_tokens)?)
    }

    fn attempts(&self) -> u32 {
        self.config.retries.max(1)
    }

    /// A query that does not name the target API.
    pub fn gen_query(&self, seed: &SeedBundle, feedback: Option<&str>) -> Result<String, GenError> {
        let mut reason = String::new();
        for _ in 0..self.attempts() {
            let query = self.call(seed, Stage::Query, &[], feedback)?.trim().to_string();
            if query.is_empty() {
                reason = "empty query".into();
            } else if query_mentions_api(&query, &seed.api) {
                reason = "query mentions the target API".into();
            } else {
                return Ok(query);
            }
        }
        Err(GenError::GenerationExhausted { stage: Stage::Query, attempts: self.attempts(), reason })
    }

    /// A reference solution that satisfies the task's static check.
    pub fn gen_solution(&self, query: &str, seed: &SeedBundle) -> Result<String, GenError> {
        let stanza = seed.stanza();
        let mut reason = String::new();
        for _ in 0..self.attempts() {
            let solution =
                strip_code_fence(&self.call(seed, Stage::Solution, &[("query", query.to_string())], None)?);
            if solution.is_empty() {
                reason = "empty solution".into();
            } else if !stanza.check(&solution) {
                reason = format!("solution fails static check `{stanza}`");
            } else {
                return Ok(solution);
            }
        }
        Err(GenError::GenerationExhausted { stage: Stage::Solution, attempts: self.attempts(), reason })
    }

    /// Test program (stanza, support code, harness) and its initial cases.
    pub fn gen_test_program(
        &self,
        query: &str,
        solution: &str,
        seed: &SeedBundle,
    ) -> Result<(String, Vec<String>), GenError> {
        let extra = [("query", query.to_string()), ("solution", solution.to_string())];
        for _ in 0..self.attempts() {
            let reply = self.call(seed, Stage::TestProgram, &extra, None)?;
            let cases = parse_cases(&reply);
            if cases.is_empty() {
                continue;
            }
            let support = if reply.contains("```") { strip_code_fence(&reply) } else { String::new() };
            return Ok((assemble_test_program(&seed.stanza(), &support, &cases), cases));
        }
        Err(GenError::GenerationExhausted {
            stage: Stage::TestProgram,
            attempts: self.attempts(),
            reason: "no test cases".into(),
        })
    }

    /// Expands the draft's cases toward the configured target, dropping
    /// textual duplicates. Failure keeps the draft's cases and flags it.
    pub fn augment_tests(&self, draft: &TaskSpec, seed: &SeedBundle) -> Augmented {
        let unchanged = Augmented { test_cases: draft.test_cases.clone(), flagged: true };
        let target = self.config.augment_target.max(draft.test_cases.len());
        if draft.test_cases.len() >= target {
            return Augmented { test_cases: draft.test_cases.clone(), flagged: false };
        }
        let listed: String = draft.test_cases.iter().map(|c| format!("CASE: {c}\n")).collect();
        let extra = [
            ("query", draft.query.clone()),
            ("solution", draft.reference_solution.clone()),
            ("test_cases", listed),
            ("target_cases", target.to_string()),
        ];
        let Ok(reply) = self.call(seed, Stage::Augment, &extra, None) else { return unchanged };
        let mut cases = draft.test_cases.clone();
        for case in parse_cases(&reply) {
            if cases.len() >= target {
                break;
            }
            if !cases.contains(&case) {
                cases.push(case);
            }
        }
        if cases.len() == draft.test_cases.len() {
            return unchanged;
        }
        Augmented { test_cases: cases, flagged: false }
    }

    /// Mechanical checks first (API mention, empty case list), then the
    /// judge model. An unparseable reply counts as a technical error.
    pub fn judge_qc(&self, task: &TaskSpec, seed: &SeedBundle) -> Result<Verdict, GenError> {
        if query_mentions_api(&task.query, &seed.api) {
            return Ok(Verdict::Reject(RejectReason::ApiMentioned));
        }
        if task.test_cases.is_empty() {
            return Ok(Verdict::Reject(RejectReason::LowCoverage));
        }
        let extra = [
            ("query", task.query.clone()),
            ("solution", task.reference_solution.clone()),
            ("test_program", task.test_program.clone()),
        ];
        let reply = self.call(seed, Stage::Judge, &extra, None)?;
        match parse_verdict(&reply) {
            Ok(v) => Ok(v),
            Err(GenError::JudgeUnparseable(_)) => Ok(Verdict::Reject(RejectReason::TechnicalError)),
            Err(e) => Err(e),
        }
    }

    /// Runs all stages for one change, regenerating from scratch with the
    /// reject reason appended when the judge rejects a draft.
    pub fn draft_task(&self, seed: &SeedBundle) -> Result<DraftOutcome, GenError> {
        let mut feedback: Option<String> = None;
        let mut last = RejectReason::TechnicalError;
        for round in 0..self.attempts() {
            let stages = (|| -> Result<(TaskSpec, bool), GenError> {
                let query = self.gen_query(seed, feedback.as_deref())?;
                let solution = self.gen_solution(&query, seed)?;
                let (program, cases) = self.gen_test_program(&query, &solution, seed)?;
                let mut draft = TaskSpec {
                    task_id: format!("{}-{round}", seed.change_id),
                    change_id: seed.change_id.clone(),
                    query,
                    function_signature: entry_signature(&solution).unwrap_or_default(),
                    reference_solution: solution,
                    test_program: program,
                    test_cases: cases,
                    target_version: seed.target_version,
                };
                let augmented = self.augment_tests(&draft, seed);
                if augmented.test_cases != draft.test_cases {
                    let support = split_support(&draft.test_program).to_string();
                    draft.test_program = assemble_test_program(&seed.stanza(), &support, &augmented.test_cases);
                    draft.test_cases = augmented.test_cases;
                }
                Ok((draft, augmented.flagged))
            })();
            let (draft, flagged) = match stages {
                Ok(d) => d,
                Err(GenError::GenerationExhausted { stage, .. }) => return Ok(DraftOutcome::Exhausted(stage)),
                Err(e) => return Err(e),
            };
            match self.judge_qc(&draft, seed)? {
                Verdict::Accept => return Ok(DraftOutcome::Accepted { task: draft, augment_flagged: flagged }),
                Verdict::Reject(reason) => {
                    last = reason;
                    feedback = Some(reason.to_string());
                }
            }
        }
        Ok(DraftOutcome::Rejected(last))
    }

    /// Runs the pipeline over every record; compile QC runs when a sandbox
    /// is given.
    pub fn generate_tasks(
        &self,
        records: &[ChangeRecord],
        usages: &[UsageExample],
        sandbox: Option<&dyn Sandbox>,
    ) -> Result<GenerationRun, GenError> {
        let results: Vec<Result<(String, RecordOutcome), GenError>> = records
            .par_iter()
            .map(|record| {
                let seed = prepare_seed(record, usages);
                let outcome = match self.draft_task(&seed)? {
                    DraftOutcome::Exhausted(stage) => RecordOutcome::Exhausted(stage),
                    DraftOutcome::Rejected(reason) => RecordOutcome::JudgeRejected(reason),
                    DraftOutcome::Accepted { task, augment_flagged } => {
                        let verdict = match sandbox {
                            Some(sb) => Some(compile_qc(&task, sb)?),
                            None => None,
                        };
                        match verdict {
                            Some(CompileVerdict::Fail(stage)) => RecordOutcome::FailedQc { task, stage },
                            _ => RecordOutcome::Released { task, augment_flagged },
                        }
                    }
                };
                Ok((record.change_id.clone(), outcome))
            })
            .collect();
        let mut run = GenerationRun { compile_qc_skipped: sandbox.is_none(), ..Default::default() };
        for r in results {
            let (change_id, outcome) = r?;
            run.outcomes.push((change_id, outcome));
        }
        run.records = records.len();
        Ok(run)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DraftOutcome {
    Accepted { task: TaskSpec, augment_flagged: bool },
    Rejected(RejectReason),
    Exhausted(Stage),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RecordOutcome {
    Released { task: TaskSpec, augment_flagged: bool },
    FailedQc { task: TaskSpec, stage: QcStage },
    JudgeRejected(RejectReason),
    Exhausted(Stage),
}

/// Builds the reference solution against its own test program.
pub fn compile_qc(task: &TaskSpec, sandbox: &dyn Sandbox) -> Result<CompileVerdict, SandboxError> {
    let run = run_candidate(
        sandbox,
        &task.reference_solution,
        &task.test_program,
        task.test_cases.len(),
        task.target_version,
    )?;
    Ok(if !run.compiled {
        CompileVerdict::Fail(QcStage::SolutionCompile)
    } else if run.cases_passed < task.test_cases.len() {
        CompileVerdict::Fail(QcStage::TestsRun)
    } else {
        CompileVerdict::Pass
    })
}

#[derive(Debug, Clone, Default)]
pub struct GenerationRun {
    pub records: usize,
    /// Per record, in input order.
    pub outcomes: Vec<(String, RecordOutcome)>,
    pub compile_qc_skipped: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationStats {
    pub records: usize,
    /// Judge-accepted drafts that reached compile QC.
    pub drafts: usize,
    pub released: usize,
    pub retention: Ratio,
    pub retention_percent: f64,
    pub exhausted: BTreeMap<String, usize>,
    pub judge_rejected: BTreeMap<String, usize>,
    pub failed_qc: BTreeMap<String, usize>,
    pub augment_flagged: usize,
    pub compile_qc_skipped: bool,
    pub avg_cases_per_task: Option<f64>,
}

impl GenerationRun {
    pub fn released(&self) -> Vec<TaskSpec> {
        self.outcomes
            .iter()
            .filter_map(|(_, o)| if let RecordOutcome::Released { task, .. } = o { Some(task.clone()) } else { None })
            .collect()
    }

    pub fn stats(&self) -> GenerationStats {
        let mut stats = GenerationStats {
            records: self.records,
            drafts: 0,
            released: 0,
            retention: Ratio::new(0, 0),
            retention_percent: 0.0,
            exhausted: BTreeMap::new(),
            judge_rejected: BTreeMap::new(),
            failed_qc: BTreeMap::new(),
            augment_flagged: 0,
            compile_qc_skipped: self.compile_qc_skipped,
            avg_cases_per_task: None,
        };
        for (_, outcome) in &self.outcomes {
            match outcome {
                RecordOutcome::Released { augment_flagged, .. } => {
                    stats.drafts += 1;
                    stats.released += 1;
                    stats.augment_flagged += usize::from(*augment_flagged);
                }
                RecordOutcome::FailedQc { stage, .. } => {
                    stats.drafts += 1;
                    let key =
                        serde_json::to_value(stage).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default();
                    *stats.failed_qc.entry(key).or_default() += 1;
                }
                RecordOutcome::JudgeRejected(reason) => {
                    *stats.judge_rejected.entry(reason.to_string()).or_default() += 1
                }
                RecordOutcome::Exhausted(stage) => *stats.exhausted.entry(stage.to_string()).or_default() += 1,
            }
        }
        stats.retention = Ratio::new(stats.released as u64, stats.drafts as u64);
        stats.retention_percent = stats.retention.percent_1dp();
        stats.avg_cases_per_task = crate::model::avg_cases_per_task(&self.released()).ok();
        stats
    }
}
