//! Goal drafting from user directives, feed patterns, capability gaps,
//! curiosity and housekeeping.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::kernel::{Minutes, Origin, Tier};
use crate::models::{SelfModel, UserModel};
use crate::sandbox::{Activity, Scenario, TaskSpec, Trigger};

/// Stress streak (minutes) above which a care goal fires.
pub const STRESS_ALERT_MINUTES: Minutes = 45;
/// Minimum spacing between remedial goals for the same gap.
pub const GAP_COOLDOWN_MINUTES: Minutes = 30;
pub const HOUSEKEEPING_TEMPLATE: &str = "memory-summary";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GoalTrigger {
    Directive,
    Stress,
    ReadingDocs,
    Gap { skill: String },
    Curiosity { page: String },
    Housekeeping,
}

impl GoalTrigger {
    pub fn as_str(&self) -> &'static str {
        match self {
            GoalTrigger::Directive => "directive",
            GoalTrigger::Stress => "stress",
            GoalTrigger::ReadingDocs => "reading-docs",
            GoalTrigger::Gap { .. } => "gap",
            GoalTrigger::Curiosity { .. } => "curiosity",
            GoalTrigger::Housekeeping => "housekeeping",
        }
    }
}

impl fmt::Display for GoalTrigger {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Goal before the goal writer phrases it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoalDraft {
    pub trigger: GoalTrigger,
    pub origin: Origin,
    pub task: Option<String>,
    pub template: String,
    pub headline: String,
    pub creed: Vec<u8>,
    pub tier: Option<Tier>,
    /// Substituted for `{target}` in plan scripts.
    pub target: Option<String>,
}

impl GoalDraft {
    pub fn for_task(task: &TaskSpec, trigger: GoalTrigger, origin: Origin, headline: Option<&str>) -> Self {
        let target = match &task.trigger {
            Trigger::Curiosity { page } => Some(page.clone()),
            _ => None,
        };
        Self {
            trigger,
            origin,
            task: Some(task.id.clone()),
            template: task.template.clone(),
            headline: headline.unwrap_or(&task.description).to_string(),
            creed: task.creed.clone(),
            tier: Some(task.tier),
            target,
        }
    }

    pub fn directive(task: &TaskSpec, text: Option<&str>) -> Self {
        Self::for_task(task, GoalTrigger::Directive, Origin::Extrinsic, text)
    }

    /// Internal upkeep goal with no sandbox task.
    pub fn housekeeping() -> Self {
        Self {
            trigger: GoalTrigger::Housekeeping,
            origin: Origin::Intrinsic,
            task: None,
            template: HOUSEKEEPING_TEMPLATE.to_string(),
            headline: "Summarise recent episodic memories into the journal".to_string(),
            creed: vec![5],
            tier: Some(Tier::Easy),
            target: None,
        }
    }
}

/// State the generator reads.
#[derive(Clone, Copy)]
pub struct GoalInputs<'a> {
    pub now: Minutes,
    pub scenario: &'a Scenario,
    pub user: &'a UserModel,
    pub self_model: &'a SelfModel,
    /// Pages the agent has opened so far.
    pub visited: &'a BTreeSet<String>,
    /// False under the reactive ablation.
    pub intrinsic_enabled: bool,
}

/// Tracks one-shot feed triggers and pacing of idle-time goals.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct GoalGenerator {
    stress_fired: bool,
    docs_armed: bool,
    last_activity: Option<Activity>,
    last_idle_goal: Option<Minutes>,
    gap_ready_at: Minutes,
    housekeeping_next: usize,
}

impl GoalGenerator {
    pub fn new() -> Self {
        Self::default()
    }

    /// Call after every user-model update.
    pub fn observe_user(&mut self, user: &UserModel) {
        if user.stress_streak == 0 {
            self.stress_fired = false;
        }
        if user.activity == Some(Activity::ReadingDocs) && self.last_activity != Some(Activity::ReadingDocs) {
            self.docs_armed = true;
        }
        self.last_activity = user.activity;
    }

    fn stress_due(&self, i: &GoalInputs<'_>) -> bool {
        !self.stress_fired && i.user.stress_streak > STRESS_ALERT_MINUTES && task_for(i.scenario, |t| t == &Trigger::Stress).is_some()
    }

    fn docs_due(&self, i: &GoalInputs<'_>) -> bool {
        self.docs_armed && task_for(i.scenario, |t| t == &Trigger::ReadingDocs).is_some()
    }

    fn gap_task<'s>(&self, i: &GoalInputs<'s>) -> Option<(&'s TaskSpec, String)> {
        if i.now < self.gap_ready_at {
            return None;
        }
        let gap = i.self_model.detect_gap()?;
        let task = task_for(i.scenario, |t| matches!(t, Trigger::Gap { skill } if *skill == gap.skill))?;
        Some((task, gap.target))
    }

    fn idle_due(&self, i: &GoalInputs<'_>) -> bool {
        let Some(interval) = i.scenario.intrinsic_interval_minutes else {
            return false;
        };
        i.user.idle_minutes >= i.scenario.idle_threshold_minutes
            && self.last_idle_goal.map_or(true, |t| i.now >= t + interval)
    }

    /// Whether any trigger is ready this tick.
    pub fn due(&self, i: &GoalInputs<'_>) -> bool {
        i.intrinsic_enabled && (self.stress_due(i) || self.docs_due(i) || self.gap_task(i).is_some() || self.idle_due(i))
    }

    /// Drafts the highest-priority intrinsic goal: feed-pattern rules, then
    /// capability gaps, then curiosity, then housekeeping.
    pub fn generate(&mut self, i: &GoalInputs<'_>) -> GoalDraft {
        if self.stress_due(i) {
            self.stress_fired = true;
            let task = task_for(i.scenario, |t| t == &Trigger::Stress).expect("checked by stress_due");
            return GoalDraft::for_task(task, GoalTrigger::Stress, Origin::Intrinsic, None);
        }
        if self.docs_due(i) {
            self.docs_armed = false;
            let task = task_for(i.scenario, |t| t == &Trigger::ReadingDocs).expect("checked by docs_due");
            return GoalDraft::for_task(task, GoalTrigger::ReadingDocs, Origin::Intrinsic, None);
        }
        if let Some((task, target)) = self.gap_task(i) {
            self.gap_ready_at = i.now + GAP_COOLDOWN_MINUTES;
            let skill = match &task.trigger {
                Trigger::Gap { skill } => skill.clone(),
                _ => unreachable!(),
            };
            let headline = format!("{target}: {}", task.description);
            return GoalDraft::for_task(task, GoalTrigger::Gap { skill }, Origin::Intrinsic, Some(&headline));
        }
        self.last_idle_goal = Some(i.now);
        let curious = i.scenario.tasks.iter().find(|t| match &t.trigger {
            Trigger::Curiosity { page } => !i.visited.contains(page),
            _ => false,
        });
        if let Some(task) = curious {
            let page = match &task.trigger {
                Trigger::Curiosity { page } => page.clone(),
                _ => unreachable!(),
            };
            return GoalDraft::for_task(task, GoalTrigger::Curiosity { page }, Origin::Intrinsic, None);
        }
        let chores: Vec<&TaskSpec> = i.scenario.tasks.iter().filter(|t| t.trigger == Trigger::Housekeeping).collect();
        if chores.is_empty() {
            return GoalDraft::housekeeping();
        }
        let task = chores[self.housekeeping_next % chores.len()];
        self.housekeeping_next += 1;
        GoalDraft::for_task(task, GoalTrigger::Housekeeping, Origin::Intrinsic, None)
    }
}

fn task_for(scenario: &Scenario, pred: impl Fn(&Trigger) -> bool) -> Option<&TaskSpec> {
    scenario.tasks.iter().find(|t| pred(&t.trigger))
}
