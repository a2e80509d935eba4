//! End-to-end runner: drives the cognitive loop over a scenario in virtual
//! time, journals everything, and computes metrics.

mod metrics;

use std::collections::{BTreeSet, VecDeque};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

pub use metrics::{
    aggregate, compute_metrics, export_csv, run_minutes, task_records, tasks_in, RunMetrics, SegmentCount, StepSeries,
    TaskRecord, TierRate, CHECKPOINT_HALF_WINDOW, DEFAULT_CHECKPOINTS, SEGMENT_MINUTES,
};

use crate::backend::CognitionBackend;
use crate::error::{Error, Result};
use crate::journal::{self, GrowthJournal, JournalEntry, JournalKind, RecordFile};
use crate::kernel::{
    Command, Directive, EventBroker, EventPayload, ExecutiveContext, GoalId, Minutes, Origin, PerceptWindow,
    ReflectionReason, VirtualClock, MINUTES_PER_DAY,
};
use crate::memory::{EpisodeLog, EpisodicStore, TraceSignature, DEFAULT_THETA_REL, DEFAULT_TOP_K};
use crate::models::{check_creed, Creed, SelfModel, UserModel};
use crate::prompts::Tags;
use crate::reward::{adjust_beta, evaluate_intrinsic, extrinsic_scalar, fuse, HybridReward, IntrinsicInputs, IntrinsicReward};
use crate::sandbox::{EnvState, Scenario, Trigger, VerifierReport};
use crate::system1::{actuate, encode, extrinsic_outcome, ActionLog, ExtrinsicReward};
use crate::system2::{plan_or_reuse, EpisodeReasoner, NextStep, PlanSource, PromptContext, DEFAULT_PAD_BOUND};
use crate::system3::{EpisodeSummary, GoalDraft, GoalGenerator, GoalInputs, MetaDecision, Monitor, NodeStatus, SearchBudget};

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    /// Virtual minutes to run; `None` uses the scenario's duration.
    pub duration_minutes: Option<Minutes>,
    /// Disables intrinsic goal generation (reactive baseline).
    pub intrinsic: bool,
    pub out: PathBuf,
    /// Continue from an existing journal in `out`.
    pub resume: bool,
    pub budget: SearchBudget,
    pub theta_rel: f64,
    pub top_k: usize,
    pub percept_window: usize,
    pub pad_bound: usize,
    pub max_commands_per_tick: usize,
    pub episode_timeout_minutes: Minutes,
}

impl RunConfig {
    pub fn new(out: impl Into<PathBuf>) -> Self {
        Self {
            seed: 7,
            duration_minutes: None,
            intrinsic: true,
            out: out.into(),
            resume: false,
            budget: SearchBudget::default(),
            theta_rel: DEFAULT_THETA_REL,
            top_k: DEFAULT_TOP_K,
            percept_window: 32,
            pad_bound: DEFAULT_PAD_BOUND,
            max_commands_per_tick: 16,
            episode_timeout_minutes: 30,
        }
    }
}

/// Counts of the runtime checks performed during a run. Any failed check
/// aborts the run, so these record how much was verified.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunAudit {
    pub goals: u64,
    pub intrinsic_rewards: u64,
    pub critiques: u64,
    pub retrievals: u64,
    pub raw_loads: u64,
    pub selected_paths: u64,
    pub reflections: u64,
    pub reused_episodes: u64,
    /// (minute, new β) for every β change.
    pub beta_changes: Vec<(Minutes, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub metrics: RunMetrics,
    pub journal_dir: PathBuf,
    pub audit: RunAudit,
    pub self_model: SelfModel,
}

struct Episode {
    number: u64,
    decision: MetaDecision,
    reasoner: EpisodeReasoner,
    signature: TraceSignature,
    skill: Option<String>,
    grants: Option<(String, String, Option<String>)>,
    seen_before: BTreeSet<String>,
    pages: Vec<String>,
    observations: Vec<String>,
    commands: Vec<Command>,
    record: usize,
}

struct Closing {
    episode: Episode,
    report: VerifierReport,
    steps: u32,
    reason: ReflectionReason,
    reward: Option<(ExtrinsicReward, HybridReward, IntrinsicReward)>,
}

struct Executive<'a> {
    scenario: Arc<Scenario>,
    backend: &'a dyn CognitionBackend,
    config: &'a RunConfig,
    creed: Creed,
    broker: EventBroker,
    env: EnvState,
    journal: GrowthJournal,
    memory: EpisodicStore,
    self_model: SelfModel,
    user: UserModel,
    goals: GoalGenerator,
    percepts: PerceptWindow,
    log: ActionLog,
    visited: BTreeSet<String>,
    directives: VecDeque<Directive>,
    active: Option<Episode>,
    closing: Option<Closing>,
    next_goal: u64,
    next_episode: u64,
    tasks: Vec<TaskRecord>,
    audit: RunAudit,
}

/// Runs `scenario` to the configured duration and returns live metrics,
/// which are checked against metrics recomputed from the journal.
pub fn run_scenario(scenario: Arc<Scenario>, backend: Arc<dyn CognitionBackend>, config: &RunConfig) -> Result<RunOutcome> {
    let duration = config.duration_minutes.unwrap_or(scenario.duration_minutes);
    let mut exec = Executive::start(scenario, backend.as_ref(), config)?;
    let mut now = exec.broker.clock().now();
    while now < duration {
        now = exec.tick()?;
        if (now + 1) % MINUTES_PER_DAY == 0 && now < duration {
            exec.critique(now / MINUTES_PER_DAY, now, None)?;
        }
    }
    exec.critique(duration / MINUTES_PER_DAY, duration.max(now), Some(duration))?;
    exec.journal.write_self_model(&exec.self_model.to_properties())?;
    exec.finish(duration)
}

fn fmt_f(v: f64) -> String {
    format!("{v:.4}")
}

impl<'a> Executive<'a> {
    fn start(scenario: Arc<Scenario>, backend: &'a dyn CognitionBackend, config: &'a RunConfig) -> Result<Self> {
        let creed = Creed::new(scenario.creed.clone());
        let journal = GrowthJournal::create(&config.out)?;
        let resume_at = if config.resume { journal.last_timestamp() } else { None };
        if !config.resume && journal.last_timestamp().is_some() {
            return Err(Error::invariant(
                "journal",
                format!("{} already holds a journal; pass resume to continue it", config.out.display()),
            ));
        }
        let start = resume_at.unwrap_or(0);
        let clock = VirtualClock::starting_at(start, 1)?;
        let env = if start == 0 {
            EnvState::reset(scenario.clone(), config.seed)
        } else {
            EnvState::reset_at(scenario.clone(), config.seed, start)
        };
        let mut exec = Executive {
            self_model: SelfModel::new(creed.clone(), scenario.initial_beta),
            creed,
            backend,
            config,
            broker: EventBroker::new(clock),
            env,
            journal,
            memory: EpisodicStore::new(),
            user: UserModel::new("user-1"),
            goals: GoalGenerator::new(),
            percepts: PerceptWindow::new(config.percept_window),
            log: ActionLog::default(),
            visited: BTreeSet::new(),
            directives: VecDeque::new(),
            active: None,
            closing: None,
            next_goal: 1,
            next_episode: 1,
            tasks: Vec::new(),
            audit: RunAudit::default(),
            scenario,
        };
        if resume_at.is_some() {
            exec.restore()?;
        }
        Ok(exec)
    }

    /// Rebuilds persistent state from the journal directory.
    fn restore(&mut self) -> Result<()> {
        let root = self.journal.root().to_path_buf();
        let entries = journal::load(&root)?;
        for c in journal::replay_capabilities(&entries) {
            self.self_model.add_capability(&c.name, &c.note, c.acquired_at, None);
        }
        if let Some(beta) = entries
            .iter()
            .filter(|e| e.kind == JournalKind::Reflection)
            .filter_map(|e| e.field("beta")?.parse::<f64>().ok())
            .last()
        {
            self.self_model.set_beta(beta);
        }
        for r in journal::load_records(&root)? {
            self.next_episode = self.next_episode.max(r.id + 1);
            self.memory
                .restore(r.id, r.timestamp, r.markers.into_iter().collect(), r.summary, r.raw)?;
        }
        self.visited = entries
            .iter()
            .filter(|e| e.kind == JournalKind::Action)
            .filter_map(|e| e.field("page").map(str::to_string))
            .collect();
        self.next_goal = entries.iter().filter_map(|e| e.goal_id).map(|g| g.0 + 1).max().unwrap_or(1);
        self.tasks = task_records(&entries)?;
        Ok(())
    }

    fn now(&self) -> Minutes {
        self.broker.clock().now()
    }

    fn append(&mut self, entry: JournalEntry) -> Result<()> {
        self.journal.append(&entry)?;
        Ok(())
    }

    fn tick(&mut self) -> Result<Minutes> {
        let tick = self.broker.advance_clock()?;
        let now = tick.now;
        let (env, reports) = self.env.advance(60);
        self.env = env;
        for r in reports {
            self.broker.publish(now, EventPayload::Verifier(r))?;
        }
        if tick.feed_due {
            self.env = self.env.feed_tick(&self.broker.clock())?;
        }
        let (obs, env) = self.env.observe();
        self.env = env;
        for entry in &obs.feed {
            self.broker.publish(now, EventPayload::Feed(*entry))?;
        }
        for p in encode(&obs) {
            self.broker.publish(now, EventPayload::Percept(p))?;
        }
        let due: Vec<Directive> = self
            .scenario
            .directives
            .iter()
            .filter(|d| d.at == now)
            .filter_map(|d| {
                let task = self.scenario.task(&d.task)?;
                Some(Directive {
                    task_id: task.id.clone(),
                    text: d.text.clone().unwrap_or_else(|| task.description.clone()),
                })
            })
            .collect();
        for d in due {
            self.broker.publish(now, EventPayload::Directive(d))?;
        }

        self.drain()?;
        if self.active.is_none() && self.closing.is_none() {
            self.adopt()?;
        }
        self.drive()?;
        self.drain()?;
        Ok(now)
    }

    fn drain(&mut self) -> Result<()> {
        while let Some(event) = self.broker.next_event() {
            match event.payload {
                EventPayload::Feed(entry) => {
                    self.user.update(&entry)?;
                    self.goals.observe_user(&self.user);
                }
                EventPayload::Percept(p) => self.percepts.push(p),
                EventPayload::Directive(d) => self.directives.push_back(d),
                EventPayload::Verifier(report) => self.on_verifier(report)?,
                EventPayload::Reward(ext) => self.on_reward(ext)?,
                EventPayload::ReflectionDue { goal_id, reason } => self.on_reflection(goal_id, reason)?,
            }
        }
        Ok(())
    }

    fn caps(&self) -> String {
        self.self_model
            .capabilities()
            .iter()
            .map(|c| c.name.as_str())
            .collect::<Vec<_>>()
            .join("|")
    }

    fn adopt(&mut self) -> Result<()> {
        let now = self.now();
        let draft = if let Some(d) = self.directives.pop_front() {
            let task = self.scenario.task(&d.task_id).expect("directive task validated");
            GoalDraft::directive(task, Some(&d.text))
        } else {
            let inputs = GoalInputs {
                now,
                scenario: &self.scenario,
                user: &self.user,
                self_model: &self.self_model,
                visited: &self.visited,
                intrinsic_enabled: self.config.intrinsic,
            };
            if !self.goals.due(&inputs) {
                return Ok(());
            }
            self.goals.generate(&inputs)
        };
        let tags = Tags::new()
            .with("caps", self.caps())
            .with("target", draft.target.as_deref().unwrap_or(""));
        let ctx = ExecutiveContext {
            clock: self.broker.clock(),
            pending: self.broker.pending_ids(),
            active_goal: None,
            percepts: self.percepts.clone(),
            beta: self.self_model.beta(),
        };
        let monitor = Monitor::new(self.backend, &self.creed, self.config.budget, self.config.seed);
        let id = GoalId(self.next_goal);
        let decision = match monitor.meta_step(&ctx, &draft, id, &tags) {
            Ok(d) => d,
            Err(e) => {
                log::warn!("minute {now}: no goal adopted for {} draft: {e}", draft.trigger);
                return Ok(());
            }
        };
        self.next_goal += 1;
        self.check_decision(&decision)?;

        let goal = &decision.goal;
        let signature = TraceSignature::new(goal, self.user.last_entry());
        let reasoner = plan_or_reuse(goal, &signature, &self.memory, self.config.pad_bound);
        if let Some(task) = &goal.task {
            self.env = self.env.begin_attempt(task)?;
        }
        let task = goal.task.as_deref().and_then(|t| self.scenario.task(t));
        let skill = task.and_then(|t| t.skill.clone());
        let grants = task.and_then(|t| {
            let g = t.grants.as_ref()?;
            let remedies = match &t.trigger {
                Trigger::Gap { skill } => Some(skill.clone()),
                _ => None,
            };
            Some((g.name.clone(), g.note.clone(), remedies))
        });

        let mut body = format!("{}\n", goal.text);
        let fields: [(&str, String); 11] = [
            ("origin", goal.origin().as_str().to_string()),
            ("trigger", draft.trigger.to_string()),
            ("template", goal.template.clone()),
            ("task", goal.task.clone().unwrap_or_else(|| "-".into())),
            ("tier", goal.difficulty.map_or("-", |t| t.as_str()).to_string()),
            ("creed", goal.creed_refs.iter().map(u8::to_string).collect::<Vec<_>>().join(",")),
            ("plan", decision.plan.clone()),
            ("predicted", fmt_f(decision.predicted)),
            ("search", format!("{} after {} expansions", decision.search.halt, decision.search.expansions)),
            ("signature", signature.to_string()),
            ("source", reasoner.source().as_str().to_string()),
        ];
        for (k, v) in fields {
            let _ = writeln!(body, "- {k}: {v}");
        }
        if decision.relaxed {
            body.push_str("- relaxed: true\n");
        }
        body.push_str(&format!("- beta: {}", fmt_f(decision.beta)));
        self.append(JournalEntry::new(now, JournalKind::Goal, Some(goal.id), body))?;

        self.tasks.push(TaskRecord {
            goal_id: goal.id,
            adopted_at: now,
            origin: goal.origin(),
            tier: goal.difficulty,
            template: goal.template.clone(),
            success: None,
            steps: None,
        });
        self.audit.goals += 1;
        if reasoner.reused() {
            self.audit.reused_episodes += 1;
        }
        let number = self.next_episode;
        self.next_episode += 1;
        self.active = Some(Episode {
            number,
            seen_before: self.visited.clone(),
            decision,
            reasoner,
            signature,
            skill,
            grants,
            pages: Vec::new(),
            observations: Vec::new(),
            commands: Vec::new(),
            record: self.tasks.len() - 1,
        });
        Ok(())
    }

    fn check_decision(&mut self, d: &MetaDecision) -> Result<()> {
        if d.goal.creed_refs.is_empty() || check_creed(&d.goal.text).is_err() {
            return Err(Error::invariant("system3", format!("goal {} carries no creed reference", d.goal.id)));
        }
        if !(0.0..=1.0).contains(&d.beta) {
            return Err(Error::invariant("system3", format!("β {} outside [0, 1]", d.beta)));
        }
        let leaf = *d.path.last().expect("path includes the root");
        let leaf_node = d.tree.node(leaf).expect("selected node exists");
        if leaf_node.status != NodeStatus::Selected || !leaf_node.is_leaf() {
            return Err(Error::invariant("system3", format!("selected node {leaf} is not a selected leaf")));
        }
        if d.path.iter().any(|n| d.tree.node(*n).is_none_or(|n| n.is_pruned())) {
            return Err(Error::invariant("system3", format!("selected path for {} contains a pruned node", d.goal.id)));
        }
        self.audit.selected_paths += 1;
        Ok(())
    }

    fn drive(&mut self) -> Result<()> {
        let now = self.now();
        let Some(mut ep) = self.active.take() else { return Ok(()) };
        if now.saturating_sub(ep.decision.goal.adopted_at / 60) >= self.config.episode_timeout_minutes {
            self.active = Some(ep);
            return self.abandon("timed out", ReflectionReason::EpisodeEnd);
        }
        if self.env.has_pending_timer() {
            self.active = Some(ep);
            return Ok(());
        }
        let memories = self.recall(&ep)?;
        let seed = self.config.seed ^ ep.number.wrapping_mul(0x2545_f491_4f6c_dd1d);
        let tags = Tags::new()
            .with("caps", self.caps())
            .with("target", ep.decision.goal.task.as_deref().and_then(|t| self.scenario.task(t)).and_then(|t| match &t.trigger {
                Trigger::Curiosity { page } => Some(page.clone()),
                _ => None,
            }).unwrap_or_default());
        for _ in 0..self.config.max_commands_per_tick {
            let reuse = if ep.reasoner.source() == PlanSource::Cached {
                self.memory.trace(&ep.signature).cloned()
            } else {
                None
            };
            let ctx = PromptContext {
                creed: &self.creed,
                percepts: &self.percepts,
                memories: &memories,
                plan: &ep.decision.plan,
                reuse: reuse.as_ref(),
            };
            let step = match ep.reasoner.next(self.backend, &ctx, &tags, seed) {
                Ok(s) => s,
                Err(e) => {
                    self.active = Some(ep);
                    return self.abandon(&format!("backend unavailable: {e}"), ReflectionReason::EpisodeEnd);
                }
            };
            let command = match step {
                NextStep::Command(c) => c,
                NextStep::Exhausted => {
                    self.active = Some(ep);
                    return self.exhausted();
                }
                NextStep::Fallback(e) => {
                    self.active = Some(ep);
                    return self.abandon(&format!("planner output unparseable: {e}"), ReflectionReason::ParseFailures);
                }
            };
            let goal_id = ep.decision.goal.id;
            let act = actuate(&self.env, &command, goal_id, &mut self.log);
            self.env = act.state;
            let page = self.env.current_page().to_string();
            self.visited.insert(page.clone());
            ep.pages.push(page.clone());
            ep.commands.push(command.clone());
            for obs in &act.observations {
                for p in encode(obs) {
                    ep.observations.push(p.digest());
                    self.broker.publish(now, EventPayload::Percept(p))?;
                }
            }
            let mut body = format!("{command}\n- ok: {}\n- page: {page}", act.failure.is_none());
            if let Some(f) = &act.failure {
                body.push_str(&format!("\n- detail: {f}"));
            }
            self.append(JournalEntry::new(now, JournalKind::Action, Some(goal_id), body))?;
            let reported = !act.reports.is_empty();
            for r in act.reports {
                self.broker.publish(now, EventPayload::Verifier(r))?;
            }
            if reported {
                self.active = Some(ep);
                return Ok(());
            }
            if let Some(failure) = act.failure {
                if ep.reasoner.source() == PlanSource::Cached {
                    ep.reasoner.abort_reuse(&failure);
                    continue;
                }
                self.active = Some(ep);
                return self.abandon(&failure, ReflectionReason::EpisodeEnd);
            }
            if matches!(command, Command::Wait(_)) {
                break;
            }
        }
        self.active = Some(ep);
        Ok(())
    }

    fn recall(&mut self, ep: &Episode) -> Result<Vec<String>> {
        if self.memory.is_empty() {
            return Ok(Vec::new());
        }
        let d = &ep.decision;
        // Shaped like a record summary so recurring templates score high.
        let query = format!("{} goal {} {} | plan: {}", d.goal.origin().as_str(), d.goal.template, d.goal.text, d.plan);
        let result = self.memory.retrieve(&query, self.config.top_k, self.config.theta_rel)?;
        self.audit.retrievals += 1;
        self.audit.raw_loads += result.hits.iter().filter(|h| h.raw_loaded()).count() as u64;
        if !result.lazy_law_holds() {
            return Err(Error::invariant("memory", "raw trace loaded against the relevance threshold"));
        }
        Ok(result
            .hits
            .iter()
            .map(|h| match &h.raw {
                Some(log) => format!("({:.2}) {} | outcome: {}", h.score, h.record.summary, log.message),
                None => format!("({:.2}) {}", h.score, h.record.summary),
            })
            .collect())
    }

    /// Plan ran out of commands: internal goals complete, sandbox tasks fail
    /// unless the verifier already passed them.
    fn exhausted(&mut self) -> Result<()> {
        let ep = self.active.as_ref().expect("active episode");
        if ep.decision.goal.task.is_none() {
            let report = VerifierReport::internal(&ep.decision.goal.text, true, self.env.elapsed_seconds());
            self.broker.publish(self.now(), EventPayload::Verifier(report))?;
            return Ok(());
        }
        self.abandon("plan exhausted before the task was verified", ReflectionReason::EpisodeEnd)
    }

    fn abandon(&mut self, reason: &str, why: ReflectionReason) -> Result<()> {
        let now = self.now();
        let ep = self.active.as_ref().expect("active episode");
        let report = if ep.decision.goal.task.is_some() {
            let (env, report) = self.env.conclude_attempt(reason);
            self.env = env;
            report
        } else {
            Some(VerifierReport::internal(&ep.decision.goal.text, false, self.env.elapsed_seconds()))
        };
        if let Some(mut r) = report {
            if why == ReflectionReason::ParseFailures {
                r.message.push_str(" [parse-failures]");
            }
            self.broker.publish(now, EventPayload::Verifier(r))?;
        }
        Ok(())
    }

    fn on_verifier(&mut self, report: VerifierReport) -> Result<()> {
        let matches = self
            .active
            .as_ref()
            .is_some_and(|ep| ep.decision.goal.task == report.task_id);
        if !matches {
            log::debug!("ignoring verifier report with no active goal: {}", report.message);
            return Ok(());
        }
        let mut episode = self.active.take().expect("checked above");
        if self.env.attempt_task().is_some() {
            let (env, late) = self.env.conclude_attempt("closed after report");
            self.env = env;
            if late.is_some() {
                return Err(Error::invariant("sandbox-env", "attempt produced a second report"));
            }
        }
        let steps = episode.reasoner.finish();
        let reason = if report.message.ends_with("[parse-failures]") {
            ReflectionReason::ParseFailures
        } else {
            ReflectionReason::EpisodeEnd
        };
        let ext = extrinsic_outcome(&episode.decision.goal, &report, &self.log)?;
        self.closing = Some(Closing {
            episode,
            report,
            steps,
            reason,
            reward: None,
        });
        self.broker.publish(self.now(), EventPayload::Reward(ext))?;
        Ok(())
    }

    fn on_reward(&mut self, ext: ExtrinsicReward) -> Result<()> {
        let now = self.now();
        let Some(closing) = self.closing.as_mut() else {
            return Err(Error::invariant("reward", format!("reward for {} with no closing episode", ext.goal_id)));
        };
        let ep = &closing.episode;
        let before = ep.skill.as_deref().map_or(0.0, |s| self.self_model.proficiency(s));
        if let Some(skill) = &ep.skill {
            self.self_model.record_attempt(skill, ext.success);
        }
        let after = ep.skill.as_deref().map_or(0.0, |s| self.self_model.proficiency(s));
        let clean = ep
            .decision
            .path
            .iter()
            .skip(1)
            .filter(|n| ep.decision.tree.node(**n).is_some_and(|n| n.directive.is_none()))
            .count();
        let int = evaluate_intrinsic(
            &IntrinsicInputs {
                pages: &ep.pages,
                seen_before: Some(&ep.seen_before),
                mastery_delta: after - before,
                plan_nodes: ep.decision.path.len().saturating_sub(1),
                clean_nodes: clean,
            },
            ep.decision.intrinsic.weights,
            ep.decision.intrinsic.rationale.clone(),
        );
        if check_creed(&int.rationale).is_err() {
            return Err(Error::invariant("reward", "intrinsic reward rationale carries no creed reference"));
        }
        self.audit.intrinsic_rewards += 1;
        self.self_model.update_drives(int.curiosity, int.mastery, int.coherence);
        let scalar = extrinsic_scalar(&ext);
        let hybrid = fuse(scalar, &int, self.self_model.beta(), &ext.message);
        if !(0.0..=1.0).contains(&hybrid.fused) || !hybrid.text.contains(ext.message.trim()) {
            return Err(Error::invariant("reward", "fused reward out of range or missing verifier text"));
        }
        let mut body = format!("{}\n", hybrid.text);
        let fields: [(&str, String); 13] = [
            ("task", ext.task_id.clone().unwrap_or_else(|| "-".into())),
            ("success", ext.success.to_string()),
            ("extrinsic", fmt_f(hybrid.extrinsic)),
            ("intrinsic", fmt_f(hybrid.intrinsic)),
            ("curiosity", fmt_f(int.curiosity)),
            ("mastery", fmt_f(int.mastery)),
            ("coherence", fmt_f(int.coherence)),
            ("beta", fmt_f(hybrid.beta)),
            ("fused", fmt_f(hybrid.fused)),
            ("latency_secs", ext.latency_secs.to_string()),
            ("cost", ext.cost.to_string()),
            ("steps", closing.steps.to_string()),
            ("source", ep.reasoner.source().as_str().to_string()),
        ];
        for (k, v) in fields {
            let _ = writeln!(body, "- {k}: {v}");
        }
        body.pop();
        let goal_id = ext.goal_id;
        let record = ep.record;
        let reason = closing.reason;
        let steps = closing.steps;
        closing.reward = Some((ext.clone(), hybrid, int));
        self.tasks[record].success = Some(ext.success);
        self.tasks[record].steps = Some(steps);
        self.append(JournalEntry::new(now, JournalKind::Reward, Some(goal_id), body))?;
        self.broker.publish(now, EventPayload::ReflectionDue { goal_id, reason })?;
        Ok(())
    }

    fn on_reflection(&mut self, goal_id: GoalId, reason: ReflectionReason) -> Result<()> {
        let now = self.now();
        let Some(mut closing) = self.closing.take() else {
            return Err(Error::invariant("system3", format!("reflection due for {goal_id} with no closing episode")));
        };
        let (ext, hybrid, _) = closing.reward.take().ok_or_else(|| Error::invariant("system3", "reflection before reward"))?;
        let ep = &mut closing.episode;
        let monitor = Monitor::new(self.backend, &self.creed, self.config.budget, self.config.seed);
        let commands: Vec<String> = ep.commands.iter().map(Command::to_string).collect();
        let goal = ep.decision.goal.clone();
        let summary = EpisodeSummary {
            episode: ep.number,
            goal: &goal,
            success: ext.success,
            realized: hybrid.fused,
            skill: ep.skill.as_deref(),
            commands: &commands,
            outcome: &closing.report.message,
        };
        let path = ep.decision.path.clone();
        let report = monitor.reflect(&summary, Some((&mut ep.decision.tree, &path)));
        if check_creed(&report.rationale).is_err() {
            return Err(Error::invariant("system3", "reflection rationale carries no creed reference"));
        }
        self.audit.reflections += 1;

        let beta_before = self.self_model.beta();
        if let Some(directive) = report.beta_directive {
            self.self_model.set_beta(adjust_beta(beta_before, directive));
        }
        let beta = self.self_model.beta();
        if !(0.0..=1.0).contains(&beta) {
            return Err(Error::invariant("reward", format!("β {beta} outside [0, 1]")));
        }
        if beta != beta_before {
            self.audit.beta_changes.push((now, beta));
        }

        let log = EpisodeLog {
            episode: ep.number,
            goal: goal.clone(),
            observations: ep.observations.clone(),
            commands: ep.commands.clone(),
            rewards: vec![hybrid.fused],
            chain: ep.reasoner.chain().to_vec(),
            success: ext.success,
            message: closing.report.message.clone(),
        };
        let markers: BTreeSet<String> = [
            format!("signature:{}", ep.signature),
            format!("origin:{}", goal.origin().as_str()),
            format!("template:{}", goal.template),
        ]
        .into_iter()
        .collect();
        if let Some(rec) = self.memory.commit(log, closing.report.at_seconds, ep.signature.clone(), markers) {
            self.journal.write_record(&RecordFile {
                id: rec.id,
                timestamp: rec.timestamp,
                markers: rec.markers.iter().cloned().collect(),
                summary: rec.summary.clone(),
                raw: rec.raw_json().to_string(),
            })?;
        }

        let mut body = format!("{}\n", report.rationale);
        let _ = writeln!(body, "- episode: {}", report.episode);
        let _ = writeln!(body, "- reason: {}", match reason {
            ReflectionReason::EpisodeEnd => "episode-end",
            ReflectionReason::ParseFailures => "parse-failures",
        });
        let _ = writeln!(body, "- realized: {}", fmt_f(hybrid.fused));
        for p in &report.pairs {
            let _ = writeln!(body, "- pair: {} predicted {} realized {}", p.node, fmt_f(p.predicted), fmt_f(p.realized));
        }
        let _ = writeln!(body, "- patches: {}", report.patches.len());
        for h in &report.heuristics {
            let _ = writeln!(body, "- heuristic: {h}");
        }
        let _ = writeln!(body, "- beta_before: {}", fmt_f(beta_before));
        let _ = write!(body, "- beta: {}", fmt_f(beta));
        self.append(JournalEntry::new(now, JournalKind::Reflection, Some(goal_id), body))?;

        if ext.success {
            if let Some((name, note, remedies)) = ep.grants.clone() {
                let at = closing.report.at_seconds;
                if self.self_model.add_capability(&name, &note, at, remedies.as_deref()) {
                    let body = format!(
                        "Acquired capability {name}: {note} [creed:3]\n- name: {name}\n- note: {note}\n- acquired_at: {at}\n- remedies: {}",
                        remedies.as_deref().unwrap_or("-")
                    );
                    self.append(JournalEntry::new(now, JournalKind::Capability, Some(goal_id), body))?;
                    self.journal.write_self_model(&self.self_model.to_properties())?;
                }
            }
        }
        Ok(())
    }

    fn critique(&mut self, day: u64, at: Minutes, run_minutes: Option<Minutes>) -> Result<()> {
        let entry = self
            .journal
            .nightly_critique(day, at, self.backend, &self.creed, run_minutes, self.config.seed)?;
        if check_creed(&entry.body).is_err() {
            return Err(Error::invariant("journal", format!("critique for day {day} carries no creed reference")));
        }
        self.audit.critiques += 1;
        Ok(())
    }

    fn finish(self, duration: Minutes) -> Result<RunOutcome> {
        let metrics = aggregate(&self.tasks, duration, &DEFAULT_CHECKPOINTS);
        let audited = compute_metrics(self.journal.root())?;
        if audited != metrics {
            return Err(Error::invariant("harness", "metrics recomputed from the journal differ from the live run"));
        }
        Ok(RunOutcome {
            metrics,
            journal_dir: self.journal.root().to_path_buf(),
            audit: self.audit,
            self_model: self.self_model,
        })
    }
}

/// Loads a scenario file and runs it.
pub fn run_scenario_file(path: impl AsRef<Path>, backend: Arc<dyn CognitionBackend>, config: &RunConfig) -> Result<RunOutcome> {
    let scenario = Scenario::load(path)?;
    run_scenario(Arc::new(scenario), backend, config)
}

/// Origin of each task adopted in `[from, to)`.
pub fn origins_in(metrics_records: &[TaskRecord], from: Minutes, to: Minutes) -> Vec<Origin> {
    tasks_in(metrics_records, from, to).map(|r| r.origin).collect()
}
