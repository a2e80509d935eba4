//! Reflex layer: observation encoding, command actuation and extrinsic
//! outcome signals. The actuator is a fixed rule table.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kernel::{Command, GoalId, Goal, Seconds};
use crate::sandbox::{EnvState, Observation, VerifierReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PerceptSource {
    Page,
    Feed,
    Verifier,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Tag {
    pub key: String,
    pub value: String,
}

impl Tag {
    pub fn new(key: impl Into<String>, value: impl fmt::Display) -> Self {
        Self {
            key: key.into(),
            value: value.to_string(),
        }
    }
}

impl fmt::Display for Tag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.key, self.value)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PerceptEvent {
    /// Virtual seconds of the observation this percept was encoded from.
    pub timestamp: Seconds,
    pub source: PerceptSource,
    pub tags: Vec<Tag>,
    pub text: String,
}

impl PerceptEvent {
    pub fn tag(&self, key: &str) -> Option<&str> {
        self.tags.iter().find(|t| t.key == key).map(|t| t.value.as_str())
    }

    /// One-line digest used in prompts.
    pub fn digest(&self) -> String {
        let tags: Vec<String> = self.tags.iter().map(Tag::to_string).collect();
        let source = match self.source {
            PerceptSource::Page => "page",
            PerceptSource::Feed => "feed",
            PerceptSource::Verifier => "verifier",
        };
        format!("[{source} {}] {}", tags.join(" "), first_line(&self.text))
    }
}

fn first_line(text: &str) -> &str {
    text.lines().next().unwrap_or("")
}

/// Encodes the delta carried by an observation. Total and deterministic.
pub fn encode(obs: &Observation) -> Vec<PerceptEvent> {
    let mut out = Vec::new();
    for entry in &obs.feed {
        out.push(PerceptEvent {
            timestamp: obs.at_seconds,
            source: PerceptSource::Feed,
            tags: vec![
                Tag::new("emotion", entry.emotion),
                Tag::new("activity", entry.activity),
                Tag::new("idle", entry.idle_minutes),
            ],
            text: entry.to_json(),
        });
    }
    let touched = obs.page_changed || obs.extracted.is_some() || !obs.search_results.is_empty();
    if let Some(failure) = &obs.failure {
        out.push(PerceptEvent {
            timestamp: obs.at_seconds,
            source: PerceptSource::Page,
            tags: vec![Tag::new("page", &obs.page), Tag::new("outcome", "failure")],
            text: failure.clone(),
        });
    } else if touched {
        let mut tags = vec![Tag::new("page", &obs.page), Tag::new("outcome", "ok")];
        let text = if let Some(x) = &obs.extracted {
            tags.push(Tag::new("extracted", &x.element));
            x.text.clone()
        } else if let Some(top) = obs.search_results.first() {
            tags.push(Tag::new("top", top));
            format!("search results: {}", obs.search_results.join(", "))
        } else if obs.page_title.is_empty() {
            obs.page_text.clone()
        } else {
            format!("{}\n{}", obs.page_title, obs.page_text)
        };
        out.push(PerceptEvent {
            timestamp: obs.at_seconds,
            source: PerceptSource::Page,
            tags,
            text,
        });
    }
    if let Some(report) = &obs.verifier {
        out.push(verifier_percept(report));
    }
    out
}

pub fn verifier_percept(report: &VerifierReport) -> PerceptEvent {
    let mut tags = vec![Tag::new("success", report.success)];
    if let Some(task) = &report.task_id {
        tags.push(Tag::new("task", task));
    }
    PerceptEvent {
        timestamp: report.at_seconds,
        source: PerceptSource::Verifier,
        tags,
        text: report.message.clone(),
    }
}

/// Primitive sandbox actions for a command: `noop` expands to nothing,
/// every other verb to exactly one action.
pub fn expand(command: &Command) -> Vec<Command> {
    match command {
        Command::Noop => Vec::new(),
        other => vec![other.clone()],
    }
}

pub fn arity(command: &Command) -> usize {
    match command {
        Command::Noop => 0,
        _ => 1,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionRecord {
    pub at_seconds: Seconds,
    pub goal_id: GoalId,
    pub command: Command,
    pub ok: bool,
    pub detail: Option<String>,
}

/// Append-only log of executed primitive actions.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ActionLog {
    records: Vec<ActionRecord>,
}

impl ActionLog {
    pub fn records(&self) -> &[ActionRecord] {
        &self.records
    }

    pub fn for_goal(&self, goal: GoalId) -> impl Iterator<Item = &ActionRecord> {
        self.records.iter().filter(move |r| r.goal_id == goal)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    fn push(&mut self, record: ActionRecord) {
        self.records.push(record);
    }
}

#[derive(Debug, Clone)]
pub struct Actuation {
    pub state: EnvState,
    pub observations: Vec<Observation>,
    pub reports: Vec<VerifierReport>,
    /// First failure text, if any primitive action failed.
    pub failure: Option<String>,
}

/// Applies the expansion of `command` to the sandbox in order, logging each
/// primitive action. Failures stay in the observation stream.
pub fn actuate(state: &EnvState, command: &Command, goal: GoalId, log: &mut ActionLog) -> Actuation {
    let mut state = state.clone();
    let mut observations = Vec::new();
    let mut reports = Vec::new();
    let mut failure = None;
    for action in expand(command) {
        let step = state.step(&action);
        log.push(ActionRecord {
            at_seconds: step.observation.at_seconds,
            goal_id: goal,
            command: action,
            ok: step.observation.failure.is_none(),
            detail: step.observation.failure.clone(),
        });
        if failure.is_none() {
            failure = step.observation.failure.clone();
        }
        reports.extend(step.report);
        observations.push(step.observation);
        state = step.state;
        if failure.is_some() {
            break;
        }
    }
    Actuation {
        state,
        observations,
        reports,
        failure,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtrinsicReward {
    pub goal_id: GoalId,
    pub task_id: Option<String>,
    pub success: bool,
    pub latency_secs: Seconds,
    /// Primitive actions executed for the goal.
    pub cost: u32,
    pub message: String,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum System1Error {
    #[error("verifier report for task {report:?} does not belong to goal {goal} (task {expected:?})")]
    TaskMismatch {
        goal: GoalId,
        expected: Option<String>,
        report: Option<String>,
    },
    #[error("verifier report at {report}s precedes goal adoption at {adopted}s")]
    ReportBeforeAdoption { report: Seconds, adopted: Seconds },
}

pub fn extrinsic_outcome(goal: &Goal, report: &VerifierReport, log: &ActionLog) -> Result<ExtrinsicReward, System1Error> {
    if goal.task != report.task_id {
        return Err(System1Error::TaskMismatch {
            goal: goal.id,
            expected: goal.task.clone(),
            report: report.task_id.clone(),
        });
    }
    let latency_secs = report
        .at_seconds
        .checked_sub(goal.adopted_at)
        .ok_or(System1Error::ReportBeforeAdoption {
            report: report.at_seconds,
            adopted: goal.adopted_at,
        })?;
    Ok(ExtrinsicReward {
        goal_id: goal.id,
        task_id: report.task_id.clone(),
        success: report.success,
        latency_secs,
        cost: log.for_goal(goal.id).count() as u32,
        message: report.message.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::Origin;
    use crate::sandbox::{Activity, Emotion, UserFeedEntry};

    fn empty_obs() -> Observation {
        Observation {
            at_seconds: 51_600,
            page: "home".into(),
            page_title: String::new(),
            page_text: String::new(),
            elements: vec![],
            links: vec![],
            page_changed: false,
            feed: vec![],
            failure: None,
            extracted: None,
            search_results: vec![],
            verifier: None,
        }
    }

    #[test]
    fn empty_delta_encodes_to_nothing() {
        assert!(encode(&empty_obs()).is_empty());
    }

    #[test]
    fn stress_entry_becomes_one_tagged_feed_percept() {
        let mut obs = empty_obs();
        obs.feed.push(UserFeedEntry {
            timestamp: 860,
            emotion: Emotion::Stressed,
            activity: Activity::Idle,
            idle_minutes: 60,
        });
        let p = encode(&obs);
        assert_eq!(p.len(), 1);
        assert_eq!(p[0].source, PerceptSource::Feed);
        assert_eq!(p[0].tag("emotion"), Some("stressed"));
        assert_eq!(p[0].tag("idle"), Some("60"));
        assert_eq!(p[0].timestamp, obs.at_seconds);
        assert_eq!(encode(&obs), p);
    }

    #[test]
    fn failure_observation_becomes_failure_percept() {
        let mut obs = empty_obs();
        obs.failure = Some("element not found: #x".into());
        let p = encode(&obs);
        assert_eq!(p.len(), 1);
        assert_eq!(p[0].tag("outcome"), Some("failure"));
    }

    #[test]
    fn expansion_arity() {
        assert!(expand(&Command::Noop).is_empty());
        assert_eq!(expand(&Command::open("note-pad/new").unwrap()), vec![Command::open("note-pad/new").unwrap()]);
        assert_eq!(arity(&Command::wait(180).unwrap()), 1);
    }

    #[test]
    fn outcome_from_log() {
        let mut goal = Goal::new(GoalId(1), "breathe", Origin::Intrinsic, "stress-relief");
        goal.task = Some("stress-relief".into());
        goal.adopted_at = 100;
        let mut log = ActionLog::default();
        for i in 0..3 {
            log.push(ActionRecord {
                at_seconds: 100 + i,
                goal_id: GoalId(1),
                command: Command::Noop,
                ok: true,
                detail: None,
            });
        }
        log.push(ActionRecord {
            at_seconds: 120,
            goal_id: GoalId(2),
            command: Command::Noop,
            ok: true,
            detail: None,
        });
        let report = VerifierReport {
            task_id: Some("stress-relief".into()),
            success: true,
            message: "ok".into(),
            at_seconds: 300,
        };
        let r = extrinsic_outcome(&goal, &report, &log).unwrap();
        assert_eq!((r.success, r.latency_secs, r.cost), (true, 200, 3));

        let wrong = VerifierReport {
            task_id: Some("other".into()),
            ..report
        };
        assert!(matches!(extrinsic_outcome(&goal, &wrong, &log), Err(System1Error::TaskMismatch { .. })));
    }
}
