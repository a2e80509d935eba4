//! Executive monitor: goal generation, thought search under guardian
//! supervision, and post-episode reflection.

mod goals;
mod tree;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use goals::{
    GoalDraft, GoalGenerator, GoalInputs, GoalTrigger, GAP_COOLDOWN_MINUTES, HOUSEKEEPING_TEMPLATE, STRESS_ALERT_MINUTES,
};
pub use tree::{
    expand, select, select_leaf, supervise, Halt, NodeId, NodeStatus, SearchBudget, SearchContext, SearchOutcome,
    ThoughtNode, ThoughtTree, GUARDIAN_FAILSAFE,
};

use crate::backend::{BackendError, CognitionBackend, GenerationRequest, Role};
use crate::kernel::{ExecutiveContext, Goal, GoalId, Origin};
use crate::models::{check_creed, creed_markers, Creed};
use crate::prompts::{self, Tags};
use crate::reward::{parse_beta_directive, BetaDirective, DriveWeights};
use crate::system2::creed_section;

/// Nodes whose estimate misses the realised reward by more than this are patched.
pub const PATCH_TOLERANCE: f64 = 0.3;
/// τ reduction for the single retry after an empty frontier.
pub const TAU_RELAXATION: f64 = 0.2;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum System3Error {
    #[error("every leaf of the thought tree was pruned")]
    EmptyFrontier,
    #[error("goal rejected: `{text}` references no creed sentence")]
    CreedViolation { text: String },
    #[error("unknown thought node {0}")]
    UnknownNode(NodeId),
    #[error("cannot expand pruned node {0}")]
    PrunedParent(NodeId),
    #[error("invalid search budget (max {max_expansions}, branching {branching}, τ {tau_util})")]
    InvalidBudget {
        max_expansions: u32,
        branching: u32,
        tau_util: f64,
    },
    #[error(transparent)]
    Backend(#[from] BackendError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntrinsicSpec {
    pub weights: DriveWeights,
    pub rationale: String,
}

/// The (goal, intrinsic-reward spec, β) triple plus the search that chose
/// the plan.
#[derive(Debug, Clone, PartialEq)]
pub struct MetaDecision {
    pub goal: Goal,
    pub intrinsic: IntrinsicSpec,
    pub beta: f64,
    /// Selected root-to-leaf steps joined by ` -> `.
    pub plan: String,
    /// V̂ of the selected leaf.
    pub predicted: f64,
    pub path: Vec<NodeId>,
    pub tree: ThoughtTree,
    pub search: SearchOutcome,
    /// τ was relaxed after an empty frontier.
    pub relaxed: bool,
    /// The original draft was replaced by housekeeping.
    pub fell_back: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValuePair {
    pub node: NodeId,
    pub predicted: f64,
    pub realized: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReflectionReport {
    pub episode: u64,
    pub pairs: Vec<ValuePair>,
    pub patches: Vec<ValuePair>,
    pub heuristics: Vec<String>,
    pub beta_directive: Option<BetaDirective>,
    pub rationale: String,
}

/// What reflection needs from a finished episode.
#[derive(Debug, Clone, Copy)]
pub struct EpisodeSummary<'a> {
    pub episode: u64,
    pub goal: &'a Goal,
    pub success: bool,
    pub realized: f64,
    pub skill: Option<&'a str>,
    pub commands: &'a [String],
    pub outcome: &'a str,
}

/// Executive monitor bound to a backend, creed and search budget.
#[derive(Clone, Copy)]
pub struct Monitor<'a> {
    pub backend: &'a dyn CognitionBackend,
    pub creed: &'a Creed,
    pub budget: SearchBudget,
    pub seed: u64,
}

impl<'a> Monitor<'a> {
    pub fn new(backend: &'a dyn CognitionBackend, creed: &'a Creed, budget: SearchBudget, seed: u64) -> Self {
        Self {
            backend,
            creed,
            budget,
            seed,
        }
    }

    fn seed_for(&self, goal: GoalId, salt: u64) -> u64 {
        self.seed ^ goal.0.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ salt
    }

    /// Creed gate: a goal whose text names no creed sentence is rejected.
    pub fn admit(&self, mut goal: Goal) -> Result<Goal, System3Error> {
        let refs = check_creed(&goal.text).map_err(|_| System3Error::CreedViolation { text: goal.text.clone() })?;
        goal.creed_refs = refs;
        Ok(goal)
    }

    /// Phrases a draft through the goal writer and admits it.
    pub fn write_goal(&self, draft: &GoalDraft, id: GoalId, adopted_at: u64) -> Result<Goal, System3Error> {
        let creed_ids = draft.creed.iter().map(u8::to_string).collect::<Vec<_>>().join("|");
        let tags = Tags::new()
            .with("trigger", draft.trigger.as_str())
            .with("headline", &draft.headline)
            .with("creed", &creed_ids);
        let creed_text = draft
            .creed
            .iter()
            .filter_map(|c| self.creed.sentence(*c).map(|s| format!("[creed:{c}] {s}")))
            .collect::<Vec<_>>()
            .join("\n");
        let prompt = prompts::render(
            &prompts::GOAL_WRITER,
            &[
                ("tags", &tags.render()),
                ("identity", "persistent assistant"),
                ("creed", &creed_text),
                ("trigger", draft.trigger.as_str()),
                ("headline", &draft.headline),
            ],
        );
        let text = self
            .backend
            .generate(&GenerationRequest::new(Role::GoalWriter, prompt, self.seed_for(id, 1)))?
            .text
            .trim()
            .to_string();
        let mut goal = Goal::new(id, text, draft.origin, &draft.template);
        goal.task = draft.task.clone();
        goal.difficulty = draft.tier;
        goal.parent_goal = Some(GoalId(0));
        goal.adopted_at = adopted_at;
        self.admit(goal)
    }

    /// Search then select; on an empty frontier retry once with τ relaxed.
    pub fn deliberate(&self, goal: &Goal, tags: &Tags) -> Result<(ThoughtTree, NodeId, SearchOutcome, bool), System3Error> {
        let mut relaxed = false;
        let mut budget = self.budget;
        for attempt in 0..2u64 {
            let ctx = SearchContext {
                goal,
                creed: self.creed,
                backend: self.backend,
                tags,
                seed: self.seed_for(goal.id, 2 + attempt),
            };
            let mut tree = ThoughtTree::new(goal.text.clone(), 0.0);
            let outcome = expand(&mut tree, &ctx, &budget);
            match select(&mut tree) {
                Ok(leaf) => return Ok((tree, leaf, outcome, relaxed)),
                Err(System3Error::EmptyFrontier) if attempt == 0 => {
                    log::info!("empty frontier for {}; relaxing τ", goal.id);
                    relaxed = true;
                    budget = budget.relaxed(TAU_RELAXATION);
                }
                Err(e) => return Err(e),
            }
        }
        Err(System3Error::EmptyFrontier)
    }

    /// Goal, plan and β for the next episode. The draft falls back to
    /// housekeeping when its search leaves no unpruned leaf.
    pub fn meta_step(
        &self,
        ctx: &ExecutiveContext,
        draft: &GoalDraft,
        id: GoalId,
        tags: &Tags,
    ) -> Result<MetaDecision, System3Error> {
        let now = ctx.clock.now_seconds();
        let goal = self.write_goal(draft, id, now)?;
        let (goal, (tree, leaf, search, relaxed), fell_back) = match self.deliberate(&goal, tags) {
            Ok(found) => (goal, found, false),
            Err(System3Error::EmptyFrontier) if draft.trigger != GoalTrigger::Housekeeping => {
                log::warn!("{} abandoned after relaxed retry; falling back to housekeeping", goal.id);
                let fallback = self.write_goal(&GoalDraft::housekeeping(), id, now)?;
                let found = self.deliberate(&fallback, tags)?;
                (fallback, found, true)
            }
            Err(e) => return Err(e),
        };
        let node = tree.node(leaf).expect("selected node exists");
        let rationale = format!(
            "Equal weight on curiosity, mastery and coherence while pursuing {} {}",
            goal.template,
            creed_markers(goal.creed_refs.iter().copied())
        );
        let path = tree.path(leaf);
        let steps: Vec<&str> = path[1..]
            .iter()
            .filter_map(|id| tree.node(*id))
            .map(|n| n.plan.as_str())
            .collect();
        let plan = if steps.is_empty() { node.plan.clone() } else { steps.join(" -> ") };
        Ok(MetaDecision {
            plan,
            predicted: node.value,
            path,
            intrinsic: IntrinsicSpec {
                weights: DriveWeights::default(),
                rationale,
            },
            beta: ctx.beta.clamp(0.0, 1.0),
            goal,
            tree,
            search,
            relaxed,
            fell_back,
        })
    }

    /// Compares plan-node estimates with the realised reward, patches
    /// outliers, distils heuristics and reads a β directive from the
    /// reflector's rationale. Backend failures leave those parts empty.
    pub fn reflect(&self, episode: &EpisodeSummary<'_>, tree: Option<(&mut ThoughtTree, &[NodeId])>) -> ReflectionReport {
        let mut pairs = Vec::new();
        let mut patches = Vec::new();
        if let Some((tree, path)) = tree {
            for id in path.iter().filter(|id| **id != ThoughtTree::ROOT) {
                let Some(node) = tree.node(*id) else { continue };
                let pair = ValuePair {
                    node: *id,
                    predicted: node.value,
                    realized: episode.realized,
                };
                if (pair.predicted - pair.realized).abs() > PATCH_TOLERANCE {
                    tree.patch_value(*id, pair.realized);
                    patches.push(pair);
                }
                pairs.push(pair);
            }
        }
        let goal = episode.goal;
        let creed_ids = goal.creed_refs.iter().map(u8::to_string).collect::<Vec<_>>().join("|");
        let base = Tags::new()
            .with("template", &goal.template)
            .with("success", episode.success)
            .with("skill", episode.skill.unwrap_or(""))
            .with("creed", &creed_ids);
        let commands = episode.commands.join("\n");
        let seed = self.seed_for(goal.id, 7);

        let tags = base.clone().with("mode", "rationale");
        let prompt = prompts::render(
            &prompts::REFLECTOR,
            &[
                ("tags", &tags.render()),
                ("goal", &goal.text),
                ("creed", &creed_section(self.creed, goal)),
                ("outcome", episode.outcome),
                ("commands", &commands),
            ],
        );
        let mut rationale = match self.backend.generate(&GenerationRequest::new(Role::Reflector, prompt, seed)) {
            Ok(r) => r.text.trim().to_string(),
            Err(e) => {
                log::warn!("reflector unavailable: {e}");
                String::new()
            }
        };
        if check_creed(&rationale).is_err() {
            let markers = creed_markers(goal.creed_refs.iter().copied());
            let markers = if markers.is_empty() { "[creed:1]".to_string() } else { markers };
            rationale = format!("{} {markers}", if rationale.is_empty() { "Episode reviewed." } else { &rationale });
        }

        let tags = base.with("mode", "heuristics");
        let prompt = prompts::render(
            &prompts::HEURISTICS,
            &[
                ("tags", &tags.render()),
                ("goal", &goal.text),
                ("outcome", episode.outcome),
                ("errors", &patches.len().to_string()),
            ],
        );
        let heuristics = match self.backend.generate(&GenerationRequest::new(Role::Reflector, prompt, seed)) {
            Ok(r) => r
                .text
                .lines()
                .filter_map(|l| l.trim().strip_prefix("- "))
                .map(str::to_string)
                .collect(),
            Err(e) => {
                log::warn!("heuristic distillation unavailable: {e}");
                Vec::new()
            }
        };
        ReflectionReport {
            episode: episode.episode,
            pairs,
            patches,
            heuristics,
            beta_directive: parse_beta_directive(&rationale),
            rationale,
        }
    }
}

/// Extrinsic directives pass through unchanged; everything else is intrinsic.
pub fn origin_for(trigger: &GoalTrigger) -> Origin {
    match trigger {
        GoalTrigger::Directive => Origin::Extrinsic,
        _ => Origin::Intrinsic,
    }
}
