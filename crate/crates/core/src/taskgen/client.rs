//! Text-generation backends: the [`ModelClient`] trait, a deterministic
//! offline mock and a chat-completion HTTP client.

use std::sync::Mutex;
use std::time::{Duration, Instant};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ClientError {
    #[error("model backend unavailable: {0}")]
    Unavailable(String),
    #[error("model backend returned HTTP {status}: {body}")]
    Http { status: u16, body: String },
    #[error("unexpected model response: {0}")]
    BadResponse(String),
}

pub trait ModelClient: Send + Sync {
    fn generate(&self, prompt: &str, temperature: f64, max_tokens: u32) -> Result<String, ClientError>;
    fn model_id(&self) -> &str;
    fn cutoff_date(&self) -> Option<NaiveDate>;
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MockConfig {
    /// Canonical paths whose generated queries name the API.
    pub leak_apis: Vec<String>,
    /// Canonical paths whose reference solutions do not type-check.
    pub broken_apis: Vec<String>,
    /// Canonical paths whose reference solutions compute the wrong value.
    pub failing_apis: Vec<String>,
    /// Repeat one existing case in augmentation output.
    pub duplicate_case: bool,
}

impl Default for MockConfig {
    fn default() -> Self {
        Self { leak_apis: Vec::new(), broken_apis: Vec::new(), failing_apis: Vec::new(), duplicate_case: true }
    }
}

/// Deterministic client that answers from fields it reads in the prompt
/// (`Stage:`, `Target API:`, `Replacement:`, `api:` header lines).
///
/// Every task it writes asks for `pub fn solve(x: i64) -> i64` returning
/// `2x + 1`; the solution routes through a local function named after the
/// target API so the static check sees the API token.
#[derive(Debug, Clone)]
pub struct MockClient {
    model_id: String,
    cutoff: Option<NaiveDate>,
    config: MockConfig,
}

pub const MOCK_SIGNATURE: &str = "pub fn solve(x: i64) -> i64";
const CASE_INPUTS: [i64; 8] = [1, 2, 0, -3, 7, 100, -50, 12345];

impl MockClient {
    pub fn new(model_id: impl Into<String>, cutoff: Option<NaiveDate>, config: MockConfig) -> Self {
        Self { model_id: model_id.into(), cutoff, config }
    }

    fn field<'a>(prompt: &'a str, key: &str) -> Option<&'a str> {
        prompt.lines().find_map(|l| l.strip_prefix(key)).map(str::trim).filter(|v| !v.is_empty())
    }

    fn segment(path: &str) -> &str {
        path.rsplit("::").next().unwrap_or(path)
    }

    /// Name the solution should call: the replacement for deprecations.
    fn target_segment(api: &str, kind: &str, replacement: Option<&str>) -> String {
        match replacement {
            Some(r) if kind == "Deprecation" && r != "none" => Self::segment(r).to_string(),
            _ => Self::segment(api).to_string(),
        }
    }

    fn solution(seg: &str, body: &str) -> String {
        format!(
            "```rust\n#[allow(non_snake_case, dead_code)]\nfn {seg}(x: i64) -> i64 {{\n    {body}\n}}\n\n{MOCK_SIGNATURE} {{\n    {seg}(x)\n}}\n```\n"
        )
    }

    fn case(x: i64) -> String {
        format!("CASE: assert_eq!(solve({x}), {});", x.wrapping_mul(2).wrapping_add(1))
    }

    fn query(&self, api: &str, kind: &str) -> String {
        let tag = hex::encode(&Sha256::digest(api.as_bytes())[..4]);
        let slant = match kind {
            "Stabilization" => "Prefer the facility that the standard library most recently made stable for this job.",
            "SignatureChange" => "Write it against the current parameter and return conventions of the library.",
            "BehavioralChange" => "Rely on the current observable behavior of the library routine involved.",
            "Deprecation" => "Use the currently recommended library routine rather than an outdated one.",
            _ => "",
        };
        let mut q = format!(
            "Task {tag}: implement `{MOCK_SIGNATURE}` so that it returns two times x plus one, with wrapping arithmetic. {slant}"
        );
        if self.config.leak_apis.iter().any(|a| a == api) {
            q.push_str(&format!(" Use `{api}`."));
        }
        q
    }
}

impl ModelClient for MockClient {
    fn generate(&self, prompt: &str, _temperature: f64, _max_tokens: u32) -> Result<String, ClientError> {
        let stage =
            Self::field(prompt, "Stage:").ok_or_else(|| ClientError::BadResponse("prompt has no Stage line".into()))?;
        let api = Self::field(prompt, "Target API:").unwrap_or_default();
        let kind = Self::field(prompt, "Change kind:").unwrap_or_default();
        let replacement = Self::field(prompt, "Replacement:");
        let seg = Self::target_segment(api, kind, replacement);
        match stage {
            "query" => Ok(self.query(api, kind)),
            "solution" => {
                let body = if self.config.broken_apis.iter().any(|a| a == api) {
                    "let y: i64 = \"broken\";\n    y"
                } else if self.config.failing_apis.iter().any(|a| a == api) {
                    "x.wrapping_mul(2)"
                } else {
                    "x.wrapping_mul(2).wrapping_add(1)"
                };
                Ok(Self::solution(&seg, body))
            }
            "test_program" => Ok(CASE_INPUTS[..2].iter().map(|&x| Self::case(x)).collect::<Vec<_>>().join("\n")),
            "augment" => {
                let target = prompt
                    .split_whitespace()
                    .collect::<Vec<_>>()
                    .windows(3)
                    .find_map(|w| (w[0] == "to" && w[2] == "cases").then(|| w[1].parse::<usize>().ok()).flatten())
                    .unwrap_or(4)
                    .min(CASE_INPUTS.len());
                let mut lines: Vec<String> = CASE_INPUTS[..target].iter().map(|&x| Self::case(x)).collect();
                if self.config.duplicate_case {
                    lines.push(Self::case(CASE_INPUTS[0]));
                }
                Ok(lines.join("\n"))
            }
            "judge" => Ok("ACCEPT".into()),
            "summarize" => Ok(prompt.lines().filter(|l| l.starts_with("api:")).collect::<Vec<_>>().join("\n")),
            "eval" => {
                let header = prompt.lines().find(|l| l.starts_with("api:"));
                match header {
                    Some(h) => {
                        let fields: Vec<(&str, &str)> = h
                            .split(" | ")
                            .filter_map(|f| f.split_once(':'))
                            .map(|(k, v)| (k.trim(), v.trim()))
                            .collect();
                        let get = |k: &str| fields.iter().find(|(key, _)| *key == k).map(|(_, v)| *v);
                        let seg = Self::target_segment(
                            get("api").unwrap_or_default(),
                            get("kind").unwrap_or_default(),
                            get("replacement"),
                        );
                        Ok(Self::solution(&seg, "x.wrapping_mul(2).wrapping_add(1)"))
                    }
                    None => {
                        Ok(format!("```rust\n{MOCK_SIGNATURE} {{\n    x.wrapping_mul(2).wrapping_add(1)\n}}\n```\n"))
                    }
                }
            }
            other => Err(ClientError::BadResponse(format!("unknown stage {other:?}"))),
        }
    }

    fn model_id(&self) -> &str {
        &self.model_id
    }

    fn cutoff_date(&self) -> Option<NaiveDate> {
        self.cutoff
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RemoteConfig {
    /// Overrides `EVO_MODEL_ENDPOINT`.
    pub endpoint: Option<String>,
    pub timeout_secs: u64,
    /// Minimum spacing between requests.
    pub min_interval_ms: u64,
}

impl Default for RemoteConfig {
    fn default() -> Self {
        Self { endpoint: None, timeout_secs: 120, min_interval_ms: 0 }
    }
}

/// Chat-completion client. Calls are serialized through a rate limiter so
/// the client can be shared across worker threads.
pub struct RemoteClient {
    endpoint: String,
    key: Option<String>,
    model_id: String,
    cutoff: Option<NaiveDate>,
    seed: u64,
    agent: ureq::Agent,
    min_interval: Duration,
    last_call: Mutex<Option<Instant>>,
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: [ChatMessage<'a>; 1],
    temperature: f64,
    max_tokens: u32,
    seed: u64,
}

#[derive(Serialize)]
struct ChatMessage<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatReply,
}

#[derive(Deserialize)]
struct ChatReply {
    content: String,
}

impl RemoteClient {
    /// Endpoint from `config` or `EVO_MODEL_ENDPOINT`, key from `EVO_MODEL_KEY`.
    pub fn from_env(
        model_id: &str,
        cutoff: Option<NaiveDate>,
        seed: u64,
        config: &RemoteConfig,
    ) -> Result<Self, ClientError> {
        let endpoint = config
            .endpoint
            .clone()
            .or_else(|| std::env::var("EVO_MODEL_ENDPOINT").ok())
            .ok_or_else(|| ClientError::Unavailable("EVO_MODEL_ENDPOINT is not set".into()))?;
        let key = std::env::var("EVO_MODEL_KEY").ok();
        Ok(Self::new(endpoint, key, model_id, cutoff, seed, config))
    }

    pub fn new(
        endpoint: impl Into<String>,
        key: Option<String>,
        model_id: &str,
        cutoff: Option<NaiveDate>,
        seed: u64,
        config: &RemoteConfig,
    ) -> Self {
        let agent = ureq::AgentBuilder::new().timeout(Duration::from_secs(config.timeout_secs)).build();
        Self {
            endpoint: endpoint.into(),
            key,
            model_id: model_id.to_string(),
            cutoff,
            seed,
            agent,
            min_interval: Duration::from_millis(config.min_interval_ms),
            last_call: Mutex::new(None),
        }
    }
}

impl ModelClient for RemoteClient {
    fn generate(&self, prompt: &str, temperature: f64, max_tokens: u32) -> Result<String, ClientError> {
        let mut last = self.last_call.lock().unwrap_or_else(|p| p.into_inner());
        if let Some(prev) = *last {
            let since = prev.elapsed();
            if since < self.min_interval {
                std::thread::sleep(self.min_interval - since);
            }
        }
        let body = ChatRequest {
            model: &self.model_id,
            messages: [ChatMessage { role: "user", content: prompt }],
            temperature,
            max_tokens,
            seed: self.seed,
        };
        let mut request = self.agent.post(&self.endpoint).set("Content-Type", "application/json");
        if let Some(key) = &self.key {
            request = request.set("Authorization", &format!("Bearer {key}"));
        }
        let result = request.send_json(&body);
        *last = Some(Instant::now());
        drop(last);
        let response = match result {
            Ok(r) => r,
            Err(ureq::Error::Status(status, r)) => {
                return Err(ClientError::Http { status, body: r.into_string().unwrap_or_default() })
            }
            Err(e) => return Err(ClientError::Unavailable(e.to_string())),
        };
        let parsed: ChatResponse = response.into_json().map_err(|e| ClientError::BadResponse(e.to_string()))?;
        parsed
            .choices
            .into_iter()
            .next()
            .map(|c| c.message.content)
            .ok_or_else(|| ClientError::BadResponse("no choices in response".into()))
    }

    fn model_id(&self) -> &str {
        &self.model_id
    }

    fn cutoff_date(&self) -> Option<NaiveDate> {
        self.cutoff
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mock() -> MockClient {
        MockClient::new("mock", None, MockConfig { leak_apis: vec!["std::a::leaky".into()], ..Default::default() })
    }

    fn prompt(stage: &str, api: &str, kind: &str, replacement: &str) -> String {
        format!("Stage: {stage}\nChange kind: {kind}\nTarget API: {api}\nReplacement: {replacement}\n\nbody")
    }

    #[test]
    fn mock_is_deterministic() {
        let p = prompt("query", "std::slice::first_chunk_mut", "Stabilization", "none");
        assert_eq!(mock().generate(&p, 0.7, 100).unwrap(), mock().generate(&p, 0.0, 5).unwrap());
    }

    #[test]
    fn mock_query_hides_api_unless_leaking() {
        let q = mock()
            .generate(&prompt("query", "std::slice::first_chunk_mut", "Stabilization", "none"), 0.7, 100)
            .unwrap();
        assert!(!q.contains("first_chunk_mut"));
        let leak = mock().generate(&prompt("query", "std::a::leaky", "Stabilization", "none"), 0.7, 100).unwrap();
        assert!(leak.contains("std::a::leaky"));
    }

    #[test]
    fn mock_solution_uses_replacement_for_deprecations() {
        let s =
            mock().generate(&prompt("solution", "std::a::old_fn", "Deprecation", "std::a::new_fn"), 0.7, 100).unwrap();
        assert!(s.contains("fn new_fn(") && !s.contains("old_fn"));
    }

    #[test]
    fn mock_eval_reads_header_lines() {
        let with = mock()
            .generate("Stage: eval\napi: std::m::f | kind: Stabilization | versions: 1.76.0 -> 1.77.0", 0.7, 100)
            .unwrap();
        assert!(with.contains("fn f("));
        let without = mock().generate("Stage: eval\nTask: x", 0.7, 100).unwrap();
        assert!(without.contains("pub fn solve") && !without.contains("fn f("));
    }

    #[test]
    fn unknown_stage_is_an_error() {
        assert!(mock().generate("hello", 0.7, 10).is_err());
    }
}
