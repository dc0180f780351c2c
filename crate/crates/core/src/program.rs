//! Test program layout shared by generation and evaluation.
//!
//! A test program starts with a static-check stanza, then optional support
//! code, then a generated `main` that runs each assertion case under
//! `catch_unwind` and prints one `EVO-CASE <i> PASS|FAIL` line per case:
//!
//! ```text
//! // EVO-CHECK require=slice::first_chunk_mut forbid=
//! fn main() { ... }
//! ```
//!
//! The candidate solution is prepended before building.

use std::collections::BTreeSet;
use std::fmt;

use crate::lexer::{tokenize, usage_lines};
use crate::model::VersionId;
use crate::sandbox::{CrateType, Job, Sandbox, SandboxError};

const STANZA_PREFIX: &str = "// EVO-CHECK";
const CASE_PREFIX: &str = "EVO-CASE";
const MAIN_MARKER: &str = "\nfn main() {\n    std::panic::set_hook";

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ProgramError {
    #[error("test program does not start with an EVO-CHECK stanza")]
    MissingStanza,
    #[error("malformed EVO-CHECK stanza: {0}")]
    MalformedStanza(String),
}

/// API paths a candidate must use and must avoid.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CheckStanza {
    pub require: Vec<String>,
    pub forbid: Vec<String>,
}

impl fmt::Display for CheckStanza {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{STANZA_PREFIX} require={} forbid={}", self.require.join(","), self.forbid.join(","))
    }
}

fn valid_path(p: &str) -> bool {
    !p.is_empty() && p.split("::").all(|s| !s.is_empty() && s.chars().all(|c| c.is_alphanumeric() || c == '_'))
}

impl CheckStanza {
    /// Reads the stanza from the first line of a test program.
    pub fn parse(test_program: &str) -> Result<Self, ProgramError> {
        let first = test_program.lines().next().unwrap_or_default().trim();
        let rest = first.strip_prefix(STANZA_PREFIX).ok_or(ProgramError::MissingStanza)?;
        let mut stanza = CheckStanza::default();
        let mut seen = BTreeSet::new();
        for field in rest.split_whitespace() {
            let (key, value) = field.split_once('=').ok_or_else(|| ProgramError::MalformedStanza(field.to_string()))?;
            if !seen.insert(key) {
                return Err(ProgramError::MalformedStanza(format!("repeated key {key}")));
            }
            let paths: Vec<String> = value.split(',').filter(|p| !p.is_empty()).map(String::from).collect();
            if let Some(bad) = paths.iter().find(|p| !valid_path(p)) {
                return Err(ProgramError::MalformedStanza(format!("bad path {bad:?}")));
            }
            match key {
                "require" => stanza.require = paths,
                "forbid" => stanza.forbid = paths,
                other => return Err(ProgramError::MalformedStanza(format!("unknown key {other}"))),
            }
        }
        Ok(stanza)
    }

    /// Token scan of the candidate: every required path's final segment is
    /// used in call/path position and no forbidden one is. Comments and
    /// string literals do not count.
    pub fn check(&self, candidate: &str) -> bool {
        let tokens = tokenize(candidate);
        let used = |path: &String| {
            let last = path.rsplit("::").next().unwrap_or(path);
            !usage_lines(&tokens, last).is_empty()
        };
        self.require.iter().all(used) && !self.forbid.iter().any(used)
    }
}

/// Builds a test program from its stanza, support code and assertion cases.
pub fn assemble_test_program(stanza: &CheckStanza, support: &str, cases: &[String]) -> String {
    let mut out = format!("{stanza}\n");
    if !support.trim().is_empty() {
        out.push_str(support.trim_end());
        out.push('\n');
    }
    out.push_str("\nfn main() {\n    std::panic::set_hook(Box::new(|_| {}));\n    let cases: Vec<fn()> = vec![\n");
    for case in cases {
        out.push_str("        (|| {\n");
        for line in case.lines() {
            out.push_str("            ");
            out.push_str(line);
            out.push('\n');
        }
        out.push_str("        }) as fn(),\n");
    }
    out.push_str(
        "    ];\n    for (i, case) in cases.into_iter().enumerate() {\n        \
         let verdict = if std::panic::catch_unwind(case).is_ok() { \"PASS\" } else { \"FAIL\" };\n        \
         println!(\"EVO-CASE {i} {verdict}\");\n    }\n}\n",
    );
    out
}

/// Support code between the stanza and the generated `main`.
pub fn split_support(test_program: &str) -> &str {
    let body = test_program.split_once('\n').map(|(_, rest)| rest).unwrap_or_default();
    let end = body.find(MAIN_MARKER).unwrap_or(body.len());
    body[..end].trim_end()
}

/// Candidate followed by the test program.
pub fn assemble_executable(candidate: &str, test_program: &str) -> String {
    format!("{}\n\n{}", candidate.trim_end(), test_program)
}

/// Number of distinct case indices below `total` reported as passing.
pub fn count_passed_cases(stdout: &str, total: usize) -> usize {
    let passed: BTreeSet<usize> = stdout
        .lines()
        .filter_map(|l| {
            let mut parts = l.split_whitespace();
            (parts.next()? == CASE_PREFIX).then_some(())?;
            let idx: usize = parts.next()?.parse().ok()?;
            (parts.next()? == "PASS" && idx < total).then_some(idx)
        })
        .collect();
    passed.len()
}

/// Result of building and running one candidate against a test program.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CandidateRun {
    pub compiled: bool,
    pub cases_passed: usize,
    pub timed_out: bool,
}

pub fn run_candidate(
    sandbox: &dyn Sandbox,
    candidate: &str,
    test_program: &str,
    cases_total: usize,
    version: VersionId,
) -> Result<CandidateRun, SandboxError> {
    let source = assemble_executable(candidate, test_program);
    let result = sandbox.execute(&Job { source: &source, version, crate_type: CrateType::Bin, run: true })?;
    Ok(CandidateRun {
        compiled: result.compiled,
        cases_passed: if result.compiled { count_passed_cases(&result.stdout, cases_total) } else { 0 },
        timed_out: result.compile_timed_out || result.run_timed_out,
    })
}

/// Removes a surrounding Markdown code fence, if any.
pub fn strip_code_fence(text: &str) -> String {
    let trimmed = text.trim();
    if let Some(start) = trimmed.find("```") {
        let after = &trimmed[start + 3..];
        let body_start = after.find('\n').map(|i| i + 1).unwrap_or(after.len());
        let body = &after[body_start..];
        let end = body.find("```").unwrap_or(body.len());
        return body[..end].trim_end().to_string();
    }
    trimmed.to_string()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn stanza_round_trip() {
        let s =
            CheckStanza { require: vec!["iter::map_while".into()], forbid: vec!["a::old".into(), "b::older".into()] };
        let text = s.to_string();
        assert_eq!(text, "// EVO-CHECK require=iter::map_while forbid=a::old,b::older");
        assert_eq!(CheckStanza::parse(&format!("{text}\nfn main() {{}}")).unwrap(), s);
        assert_eq!(CheckStanza::parse("// EVO-CHECK require= forbid=").unwrap(), CheckStanza::default());
        assert_eq!(CheckStanza::parse("fn main() {}"), Err(ProgramError::MissingStanza));
        assert!(matches!(CheckStanza::parse("// EVO-CHECK need=x"), Err(ProgramError::MalformedStanza(_))));
    }

    #[test]
    fn static_check_scans_tokens() {
        let s = CheckStanza { require: vec!["slice::first_chunk_mut".into()], forbid: vec!["a::old_fn".into()] };
        assert!(s.check("fn f(b: &mut [u8]) { b.first_chunk_mut::<4>(); }"));
        assert!(!s.check("fn f(b: &mut [u8]) { /* first_chunk_mut */ }"));
        assert!(!s.check("fn f(b: &mut [u8]) { b.first_chunk_mut::<4>(); a::old_fn(); }"));
        assert!(s.check("fn f(b: &mut [u8]) { b.first_chunk_mut::<4>(); let s = \"old_fn()\"; }"));
    }

    #[test]
    fn case_counting() {
        let out = "EVO-CASE 0 PASS\nEVO-CASE 1 FAIL\nnoise\nEVO-CASE 2 PASS\nEVO-CASE 2 PASS\nEVO-CASE 9 PASS\n";
        assert_eq!(count_passed_cases(out, 4), 2);
        assert_eq!(count_passed_cases("", 4), 0);
    }

    #[test]
    fn fences() {
        assert_eq!(strip_code_fence("```rust\nfn a() {}\n```\n"), "fn a() {}");
        assert_eq!(strip_code_fence("fn a() {}"), "fn a() {}");
        assert_eq!(strip_code_fence("Here:\n```\nx\n```"), "x");
    }

    #[test]
    fn program_shape() {
        let stanza = CheckStanza { require: vec!["m::f".into()], forbid: vec![] };
        let p = assemble_test_program(&stanza, "", &["assert_eq!(solve(1), 3);".into(), "assert!(true);".into()]);
        assert!(p.starts_with("// EVO-CHECK require=m::f forbid=\n"));
        assert_eq!(p.matches("as fn()").count(), 2);
        assert_eq!(CheckStanza::parse(&p).unwrap(), stanza);
        assert_eq!(split_support(&p), "");
        let with = assemble_test_program(&stanza, "fn helper() -> i64 { 3 }\n", &["assert_eq!(helper(), 3);".into()]);
        assert_eq!(split_support(&with), "fn helper() -> i64 { 3 }");
    }

    proptest! {
        #[test]
        fn stanza_parse_inverts_format(
            require in proptest::collection::vec("[a-z_]{1,8}(::[a-z_]{1,8}){0,2}", 0..4),
            forbid in proptest::collection::vec("[a-z_]{1,8}(::[a-z_]{1,8}){0,2}", 0..4),
        ) {
            let s = CheckStanza { require, forbid };
            prop_assert_eq!(CheckStanza::parse(&s.to_string()).unwrap(), s);
        }
    }
}
