//! Task specifications and the declarative verifier.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::kernel::{Seconds, Tier};

/// Condition over the progress of the current task attempt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Predicate {
    Opened { page: String },
    Clicked { page: String, element: String },
    /// Accumulated completed-timer seconds on a page.
    Activity { page: String, seconds: Seconds },
    Extracted { page: String, element: String },
    Typed {
        page: String,
        #[serde(default)]
        contains: Option<String>,
    },
    All(Vec<Predicate>),
    Any(Vec<Predicate>),
}

impl Predicate {
    pub fn holds(&self, p: &Progress) -> bool {
        match self {
            Predicate::Opened { page } => p.opened.contains(page),
            Predicate::Clicked { page, element } => p.clicked.contains(&(page.clone(), element.clone())),
            Predicate::Activity { page, seconds } => p.activity.get(page).copied().unwrap_or(0) >= *seconds,
            Predicate::Extracted { page, element } => p.extracted.contains(&(page.clone(), element.clone())),
            Predicate::Typed { page, contains } => match (p.typed.get(page), contains) {
                (Some(text), Some(needle)) => text.to_lowercase().contains(&needle.to_lowercase()),
                (Some(_), None) => true,
                (None, _) => false,
            },
            Predicate::All(ps) => ps.iter().all(|q| q.holds(p)),
            Predicate::Any(ps) => ps.iter().any(|q| q.holds(p)),
        }
    }

    /// Every page referenced by the predicate, for schema validation.
    pub fn pages(&self) -> Vec<&str> {
        match self {
            Predicate::Opened { page }
            | Predicate::Clicked { page, .. }
            | Predicate::Activity { page, .. }
            | Predicate::Extracted { page, .. }
            | Predicate::Typed { page, .. } => vec![page.as_str()],
            Predicate::All(ps) | Predicate::Any(ps) => ps.iter().flat_map(Predicate::pages).collect(),
        }
    }
}

/// What the agent has done since the current attempt began.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Progress {
    pub opened: BTreeSet<String>,
    pub clicked: BTreeSet<(String, String)>,
    pub activity: BTreeMap<String, Seconds>,
    pub extracted: BTreeSet<(String, String)>,
    pub typed: BTreeMap<String, String>,
}

/// What makes the executive adopt a task.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Trigger {
    /// Issued by the user through a scheduled directive.
    Directive,
    /// Stress streak above the alert threshold.
    Stress,
    /// User switched to reading documentation.
    ReadingDocs,
    /// Remedial task for a detected capability gap.
    Gap { skill: String },
    /// Novel page worth exploring while the user is idle.
    Curiosity { page: String },
    /// Background upkeep while idle.
    Housekeeping,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CapabilityGrant {
    pub name: String,
    pub note: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub id: String,
    pub description: String,
    pub template: String,
    pub min_steps: u32,
    pub tier: Tier,
    /// Skill exercised by the task; failures feed the self-model's gap detector.
    pub skill: Option<String>,
    pub grants: Option<CapabilityGrant>,
    pub creed: Vec<u8>,
    pub trigger: Trigger,
    pub verifier: Predicate,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerifierReport {
    /// `None` for internal objectives that never touch the sandbox.
    pub task_id: Option<String>,
    pub success: bool,
    pub message: String,
    pub at_seconds: Seconds,
}

impl VerifierReport {
    pub fn success(task: &TaskSpec, at_seconds: Seconds) -> Self {
        Self {
            task_id: Some(task.id.clone()),
            success: true,
            message: format!("Verifier: task \"{}\" completed successfully.", task.description),
            at_seconds,
        }
    }

    pub fn failure(task: &TaskSpec, reason: &str, at_seconds: Seconds) -> Self {
        Self {
            task_id: Some(task.id.clone()),
            success: false,
            message: format!("Verifier: task \"{}\" not completed ({reason}).", task.description),
            at_seconds,
        }
    }

    pub fn internal(description: &str, success: bool, at_seconds: Seconds) -> Self {
        let message = if success {
            format!("Internal objective \"{description}\" completed.")
        } else {
            format!("Internal objective \"{description}\" abandoned.")
        };
        Self {
            task_id: None,
            success,
            message,
            at_seconds,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nested_predicates() {
        let pred = Predicate::All(vec![
            Predicate::Clicked { page: "g".into(), element: "#b".into() },
            Predicate::Any(vec![
                Predicate::Activity { page: "g".into(), seconds: 180 },
                Predicate::Typed { page: "n".into(), contains: Some("ArXiv".into()) },
            ]),
        ]);
        let mut p = Progress::default();
        assert!(!pred.holds(&p));
        p.clicked.insert(("g".into(), "#b".into()));
        assert!(!pred.holds(&p));
        p.typed.insert("n".into(), "see sandbox://arxiv/x".into());
        assert!(pred.holds(&p));
        assert_eq!(pred.pages(), vec!["g", "g", "n"]);
    }

    #[test]
    fn activity_threshold_is_inclusive() {
        let pred = Predicate::Activity { page: "g".into(), seconds: 180 };
        let mut p = Progress::default();
        p.activity.insert("g".into(), 179);
        assert!(!pred.holds(&p));
        p.activity.insert("g".into(), 180);
        assert!(pred.holds(&p));
    }
}
