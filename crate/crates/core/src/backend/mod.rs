//! Pluggable cognition backends and the response grammars every role must
//! follow.

mod remote;
mod scripted;

use std::fmt;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use remote::{RemoteBackend, RemoteConfig, ENV_TOKEN, ENV_URL};
pub use scripted::ScriptedBackend;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Role {
    Planner,
    Guardian,
    Reflector,
    GoalWriter,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Planner => "planner",
            Role::Guardian => "guardian",
            Role::Reflector => "reflector",
            Role::GoalWriter => "goal-writer",
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRequest {
    pub role: Role,
    pub prompt: String,
    pub max_length: u32,
    pub temperature: f64,
    pub seed: u64,
}

impl GenerationRequest {
    pub fn new(role: Role, prompt: String, seed: u64) -> Self {
        Self {
            role,
            prompt,
            max_length: 1024,
            temperature: 0.0,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationResponse {
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BackendError {
    #[error("backend unavailable: {0}")]
    Unavailable(String),
    #[error("malformed backend response: {0}")]
    Protocol(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Health {
    pub healthy: bool,
    pub latency: Option<Duration>,
    pub reason: Option<String>,
}

impl Health {
    pub fn ok(latency: Option<Duration>) -> Self {
        Self {
            healthy: true,
            latency,
            reason: None,
        }
    }

    pub fn down(reason: impl Into<String>) -> Self {
        Self {
            healthy: false,
            latency: None,
            reason: Some(reason.into()),
        }
    }
}

/// A source of generations. Must tolerate concurrent callers.
pub trait CognitionBackend: Send + Sync {
    fn name(&self) -> &str;
    fn generate(&self, request: &GenerationRequest) -> Result<GenerationResponse, BackendError>;
    fn healthcheck(&self) -> Health;
}

/// Guardian verdict grammar: `sound`, `minor-defect: <directive>` or
/// `unsound: <reason>` on the first non-empty line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Sound,
    MinorDefect(String),
    Unsound(String),
}

impl Verdict {
    pub fn parse(text: &str) -> Result<Verdict, BackendError> {
        let line = text.lines().map(str::trim).find(|l| !l.is_empty()).unwrap_or("");
        let lower = line.to_ascii_lowercase();
        let rest = |prefix: &str| line[prefix.len()..].trim_start_matches(':').trim().to_string();
        if lower.starts_with("minor-defect") {
            Ok(Verdict::MinorDefect(rest("minor-defect")))
        } else if lower.starts_with("unsound") {
            Ok(Verdict::Unsound(rest("unsound")))
        } else if lower.starts_with("sound") {
            Ok(Verdict::Sound)
        } else {
            Err(BackendError::Protocol(format!("unrecognised guardian verdict `{line}`")))
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Verdict::Sound => f.write_str("sound"),
            Verdict::MinorDefect(d) => write!(f, "minor-defect: {d}"),
            Verdict::Unsound(r) => write!(f, "unsound: {r}"),
        }
    }
}

/// Child-plan grammar for tree expansion: lines `- [score] plan text`.
pub fn parse_children(text: &str) -> Result<Vec<(f64, String)>, BackendError> {
    let mut out = Vec::new();
    for line in text.lines().map(str::trim).filter(|l| l.starts_with("- [")) {
        let body = &line[3..];
        let (score, plan) = body
            .split_once(']')
            .ok_or_else(|| BackendError::Protocol(format!("unterminated score in `{line}`")))?;
        let score: f64 = score
            .trim()
            .parse()
            .map_err(|_| BackendError::Protocol(format!("bad score in `{line}`")))?;
        if !(0.0..=1.0).contains(&score) {
            return Err(BackendError::Protocol(format!("score {score} outside [0, 1]")));
        }
        out.push((score, plan.trim().to_string()));
    }
    if out.is_empty() {
        return Err(BackendError::Protocol("no child plans in response".into()));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn verdict_grammar() {
        assert_eq!(Verdict::parse("sound").unwrap(), Verdict::Sound);
        assert_eq!(
            Verdict::parse("\nminor-defect: re-verify\n").unwrap(),
            Verdict::MinorDefect("re-verify".into())
        );
        assert_eq!(Verdict::parse("unsound: violates creed").unwrap(), Verdict::Unsound("violates creed".into()));
        assert!(Verdict::parse("maybe").is_err());
        for v in [Verdict::Sound, Verdict::MinorDefect("x".into()), Verdict::Unsound("y".into())] {
            assert_eq!(Verdict::parse(&v.to_string()).unwrap(), v);
        }
    }

    #[test]
    fn child_grammar() {
        let kids = parse_children("preamble\n- [0.5] a\n- [0.92] b -> c\n").unwrap();
        assert_eq!(kids, vec![(0.5, "a".to_string()), (0.92, "b -> c".to_string())]);
        assert!(parse_children("- [1.5] x").is_err());
        assert!(parse_children("nothing").is_err());
    }

    #[test]
    fn role_wire_names() {
        assert_eq!(serde_json::to_string(&Role::GoalWriter).unwrap(), "\"goal-writer\"");
    }
}
