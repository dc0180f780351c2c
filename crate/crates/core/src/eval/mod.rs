//! Running candidates against tasks, and the Pass@k, API Usage Accuracy
//! and Test Coverage metrics.

use std::collections::{BTreeMap, BTreeSet};

use chrono::NaiveDate;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::model::{
    ChangeKind, Condition, CutoffGroup, EvalOutcome, KindMetrics, MetricReport, ModelError, Ratio, TaskSpec,
    VersionDateTable,
};
use crate::program::{run_candidate, strip_code_fence, CheckStanza, ProgramError};
use crate::sandbox::{Sandbox, SandboxError};
use crate::taskgen::client::{ClientError, ModelClient};
use crate::taskgen::prompts::{render, RenderError};

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error(transparent)]
    SandboxUnavailable(#[from] SandboxError),
    #[error("task {task_id} has {have} samples below index {k}, needs {k}")]
    InsufficientSamples { task_id: String, have: usize, k: u32 },
    #[error("no test cases to measure coverage over")]
    DivisionByZero,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("task {task_id}: {source}")]
    Program {
        task_id: String,
        #[source]
        source: ProgramError,
    },
    #[error(transparent)]
    Client(#[from] ClientError),
    #[error(transparent)]
    Render(#[from] RenderError),
    #[error("building prompt context: {0}")]
    Context(String),
}

/// Identifies one sample of one run.
#[derive(Debug, Clone, Copy)]
pub struct SampleKey<'a> {
    pub model_id: &'a str,
    pub condition: Condition,
    pub sample_index: u32,
}

/// Static check of the candidate source, then (with a sandbox) a build and
/// run against the task's test program. Without a sandbox only the static
/// check is performed and the sample counts as not compiled.
pub fn run_sample(
    task: &TaskSpec,
    candidate: &str,
    sandbox: Option<&dyn Sandbox>,
    key: SampleKey<'_>,
) -> Result<EvalOutcome, EvalError> {
    let stanza = CheckStanza::parse(&task.test_program)
        .map_err(|source| EvalError::Program { task_id: task.task_id.clone(), source })?;
    let total = task.test_cases.len().max(1);
    let (compiled, cases_passed) = match sandbox {
        Some(sb) => {
            let run = run_candidate(sb, candidate, &task.test_program, total, task.target_version)?;
            (run.compiled, run.cases_passed)
        }
        None => (false, 0),
    };
    Ok(EvalOutcome {
        task_id: task.task_id.clone(),
        model_id: key.model_id.to_string(),
        condition: key.condition,
        sample_index: key.sample_index,
        compiled,
        static_check_passed: stanza.check(candidate),
        cases_passed: cases_passed as u32,
        cases_total: total as u32,
    })
}

fn by_task(outcomes: &[EvalOutcome]) -> BTreeMap<&str, Vec<&EvalOutcome>> {
    let mut map: BTreeMap<&str, Vec<&EvalOutcome>> = BTreeMap::new();
    for o in outcomes {
        map.entry(o.task_id.as_str()).or_default().push(o);
    }
    map
}

/// Fraction of tasks with at least one correct sample among indices `< k`.
pub fn pass_at_k(outcomes: &[EvalOutcome], k: u32) -> Result<Ratio, EvalError> {
    let groups = by_task(outcomes);
    let mut passed = 0;
    for (task_id, samples) in &groups {
        let first_k: BTreeSet<u32> = samples.iter().map(|o| o.sample_index).filter(|&i| i < k).collect();
        if (first_k.len() as u32) < k {
            return Err(EvalError::InsufficientSamples { task_id: task_id.to_string(), have: first_k.len(), k });
        }
        if samples.iter().any(|o| o.sample_index < k && o.is_correct()) {
            passed += 1;
        }
    }
    Ok(Ratio::new(passed, groups.len() as u64))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AuaBreakdown {
    pub overall: Ratio,
    pub by_kind: BTreeMap<ChangeKind, Ratio>,
}

/// Fraction of samples whose source passes the static check, overall and
/// per change kind (`task_kinds` maps task ids to kinds).
pub fn api_usage_accuracy(outcomes: &[EvalOutcome], task_kinds: &BTreeMap<String, ChangeKind>) -> AuaBreakdown {
    let mut overall = Ratio::new(0, 0);
    let mut by_kind: BTreeMap<ChangeKind, Ratio> = BTreeMap::new();
    for o in outcomes {
        let hit = u64::from(o.static_check_passed);
        overall.num += hit;
        overall.den += 1;
        if let Some(kind) = task_kinds.get(&o.task_id) {
            let r = by_kind.entry(*kind).or_insert(Ratio::new(0, 0));
            r.num += hit;
            r.den += 1;
        }
    }
    AuaBreakdown { overall, by_kind }
}

/// Passed cases over total cases, first samples only.
pub fn test_coverage(outcomes: &[EvalOutcome]) -> Result<Ratio, EvalError> {
    let (passed, total) = outcomes
        .iter()
        .filter(|o| o.sample_index == 0)
        .fold((0u64, 0u64), |(p, t), o| (p + u64::from(o.cases_passed), t + u64::from(o.cases_total)));
    if total == 0 {
        return Err(EvalError::DivisionByZero);
    }
    Ok(Ratio::new(passed, total))
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CutoffSplit {
    pub before: BTreeSet<String>,
    pub after: BTreeSet<String>,
}

/// Task ids whose target release is on or before `cutoff`, and the rest.
pub fn split_by_cutoff(
    tasks: &[TaskSpec],
    dates: &VersionDateTable,
    cutoff: NaiveDate,
) -> Result<CutoffSplit, EvalError> {
    let mut split = CutoffSplit::default();
    for t in tasks {
        let released = dates.date_of(t.target_version)?;
        if released <= cutoff {
            split.before.insert(t.task_id.clone());
        } else {
            split.after.insert(t.task_id.clone());
        }
    }
    Ok(split)
}

/// Aggregates outcomes into a report. `ks` lists the Pass@k values wanted;
/// kinds or cutoff groups with no outcomes are left out.
pub fn build_report(
    outcomes: &[EvalOutcome],
    task_kinds: &BTreeMap<String, ChangeKind>,
    ks: &[u32],
    split: Option<&CutoffSplit>,
) -> Result<MetricReport, EvalError> {
    let mut pass = BTreeMap::new();
    for &k in ks {
        pass.insert(k, pass_at_k(outcomes, k)?.value());
    }
    let aua = api_usage_accuracy(outcomes, task_kinds);
    let mut by_kind = BTreeMap::new();
    for kind in ChangeKind::ALL {
        let subset: Vec<EvalOutcome> =
            outcomes.iter().filter(|o| task_kinds.get(&o.task_id) == Some(&kind)).cloned().collect();
        if subset.is_empty() {
            continue;
        }
        by_kind.insert(
            kind,
            KindMetrics {
                pass_at_1: pass_at_k(&subset, 1)?.value(),
                aua: aua.by_kind[&kind].value(),
                coverage: test_coverage(&subset)?.value(),
            },
        );
    }
    let mut by_cutoff = BTreeMap::new();
    if let Some(split) = split {
        for (group, ids) in [(CutoffGroup::Before, &split.before), (CutoffGroup::After, &split.after)] {
            let subset: Vec<EvalOutcome> = outcomes.iter().filter(|o| ids.contains(&o.task_id)).cloned().collect();
            if !subset.is_empty() {
                by_cutoff.insert(group, pass_at_k(&subset, 1)?.value());
            }
        }
    }
    let report = MetricReport {
        pass_at_k: pass,
        aua: aua.overall.value(),
        coverage: test_coverage(outcomes)?.value(),
        by_kind,
        by_cutoff,
    };
    report.validate()?;
    Ok(report)
}

/// Where candidate solutions come from.
pub enum CandidateSource<'a> {
    /// Each task's own reference solution.
    Reference,
    /// A model prompted with the shared eval template.
    Model { client: &'a dyn ModelClient, template: &'a str, temperature: f64, max_tokens: u32 },
}

/// Evaluation of `samples` candidates per task. `context` supplies the
/// condition-specific prompt context for a task.
pub struct EvalRun<'a> {
    pub source: CandidateSource<'a>,
    pub condition: Condition,
    pub samples: u32,
    pub sandbox: Option<&'a dyn Sandbox>,
}

impl EvalRun<'_> {
    pub fn model_id(&self) -> &str {
        match &self.source {
            CandidateSource::Reference => "reference",
            CandidateSource::Model { client, .. } => client.model_id(),
        }
    }

    fn candidate(&self, task: &TaskSpec, context: &str) -> Result<String, EvalError> {
        match &self.source {
            CandidateSource::Reference => Ok(task.reference_solution.clone()),
            CandidateSource::Model { client, template, temperature, max_tokens } => {
                let bindings = BTreeMap::from([
                    ("query", task.query.clone()),
                    ("function_signature", task.function_signature.clone()),
                    ("context", context.to_string()),
                ]);
                let prompt = render(template, &bindings)?;
                Ok(strip_code_fence(&client.generate(&prompt, *temperature, *max_tokens)?))
            }
        }
    }

    /// Outcomes sorted by (task_id, sample_index).
    pub fn run<F>(&self, tasks: &[TaskSpec], context: F) -> Result<Vec<EvalOutcome>, EvalError>
    where
        F: Fn(&TaskSpec) -> Result<String, EvalError> + Sync,
    {
        let jobs: Vec<(&TaskSpec, u32)> =
            tasks.iter().flat_map(|t| (0..self.samples.max(1)).map(move |i| (t, i))).collect();
        let model_id = self.model_id().to_string();
        let mut outcomes = jobs
            .par_iter()
            .map(|(task, i)| {
                let ctx = context(task)?;
                let candidate = self.candidate(task, &ctx)?;
                let key = SampleKey { model_id: &model_id, condition: self.condition, sample_index: *i };
                run_sample(task, &candidate, self.sandbox, key)
            })
            .collect::<Result<Vec<_>, _>>()?;
        outcomes.sort_by(|a, b| (&a.task_id, a.sample_index).cmp(&(&b.task_id, b.sample_index)));
        Ok(outcomes)
    }
}
