//! Deliberate reasoner: prompt assembly, generation parsing and cached
//! trace replay. Holds no learnable parameters; behaviour changes only
//! through memory contents.

use std::collections::VecDeque;
use std::fmt::Write as _;

use thiserror::Error;

use crate::backend::{BackendError, CognitionBackend, GenerationRequest, Role};
use crate::kernel::{Command, CommandError, Goal, PerceptWindow};
use crate::memory::{EpisodicStore, ReasoningTrace, TraceSignature};
use crate::models::Creed;
use crate::prompts::{self, Tags};

pub const DEFAULT_PAD_BOUND: usize = 64;
pub const PARSE_FAILURE_LIMIT: u32 = 3;

/// Goal-scoped reasoning lines. The step counter counts every append,
/// including lines that fell out of the bounded window.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScratchPad {
    bound: usize,
    lines: VecDeque<String>,
    steps: u32,
}

impl ScratchPad {
    pub fn new(bound: usize) -> Self {
        Self {
            bound: bound.max(1),
            lines: VecDeque::new(),
            steps: 0,
        }
    }

    pub fn push(&mut self, line: impl Into<String>) {
        if self.lines.len() == self.bound {
            self.lines.pop_front();
        }
        self.lines.push_back(line.into());
        self.steps += 1;
    }

    pub fn steps(&self) -> u32 {
        self.steps
    }

    pub fn lines(&self) -> impl Iterator<Item = &str> {
        self.lines.iter().map(String::as_str)
    }

    pub fn is_empty(&self) -> bool {
        self.lines.is_empty()
    }

    pub fn clear(&mut self) {
        self.lines.clear();
        self.steps = 0;
    }
}

impl Default for ScratchPad {
    fn default() -> Self {
        Self::new(DEFAULT_PAD_BOUND)
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ParseError {
    #[error("generation has no ```action block")]
    NoActionBlock,
    #[error("action block is empty")]
    EmptyBlock,
    #[error("action block holds {0} commands; exactly one expected")]
    MultipleCommands(usize),
    #[error("unknown verb `{0}`")]
    UnknownVerb(String),
    #[error("malformed command `{0}`")]
    Syntax(String),
    #[error(transparent)]
    Invalid(#[from] CommandError),
}

/// Parses a single command such as `open("search")`, `open(topResult)`,
/// `type(summary + paperlink)`, `wait(180s)` or `noop()`.
pub fn parse_command_line(line: &str) -> Result<Command, ParseError> {
    let line = line.trim().trim_end_matches(';').trim();
    let syntax = || ParseError::Syntax(line.to_string());
    let open = line.find('(').ok_or_else(syntax)?;
    if !line.ends_with(')') {
        return Err(syntax());
    }
    let verb = line[..open].trim();
    let arg = line[open + 1..line.len() - 1].trim();
    if arg.contains('\n') {
        return Err(syntax());
    }
    match verb {
        "open" => Ok(Command::open(argument(arg).ok_or_else(syntax)?)?),
        "click" => Ok(Command::click(argument(arg).ok_or_else(syntax)?)?),
        "extract" => Ok(Command::extract(argument(arg).ok_or_else(syntax)?)?),
        "search" => Ok(Command::search(argument(arg).ok_or_else(syntax)?)?),
        "type" => Ok(Command::type_text(arg)?),
        "wait" => Ok(Command::wait(duration(arg).ok_or_else(syntax)?)?),
        "noop" if arg.is_empty() => Ok(Command::Noop),
        "noop" => Err(syntax()),
        other => Err(ParseError::UnknownVerb(other.to_string())),
    }
}

/// Quoted string (with `\"` and `\\` escapes) or a bare symbol.
fn argument(arg: &str) -> Option<String> {
    if let Some(inner) = arg.strip_prefix('"') {
        let inner = inner.strip_suffix('"')?;
        let mut out = String::with_capacity(inner.len());
        let mut chars = inner.chars();
        while let Some(c) = chars.next() {
            match c {
                '\\' => out.push(chars.next()?),
                '"' => return None,
                other => out.push(other),
            }
        }
        Some(out)
    } else {
        Some(arg.to_string())
    }
}

fn duration(arg: &str) -> Option<u64> {
    if let Some(m) = arg.strip_suffix('m') {
        m.trim().parse::<u64>().ok().map(|m| m * 60)
    } else {
        arg.strip_suffix('s').unwrap_or(arg).trim().parse().ok()
    }
}

/// Extracts the command from the first fenced action block. Reasoning lines
/// outside the block are appended to the pad only when parsing succeeds.
pub fn parse_command(raw: &str, pad: &mut ScratchPad) -> Result<Command, ParseError> {
    let mut reasoning = Vec::new();
    let mut block: Option<Vec<&str>> = None;
    let mut in_block = false;
    for line in raw.lines() {
        let t = line.trim();
        if in_block {
            if t.starts_with("```") {
                in_block = false;
            } else if !t.is_empty() {
                block.as_mut().expect("open block").push(t);
            }
        } else if t.starts_with("```action") && block.is_none() {
            in_block = true;
            block = Some(Vec::new());
        } else if !t.is_empty() && !t.starts_with("```") {
            reasoning.push(t);
        }
    }
    let lines = block.ok_or(ParseError::NoActionBlock)?;
    let command = match lines.as_slice() {
        [] => return Err(ParseError::EmptyBlock),
        [one] => parse_command_line(one)?,
        many => return Err(ParseError::MultipleCommands(many.len())),
    };
    for line in reasoning {
        pad.push(line);
    }
    Ok(command)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum GuardOutcome {
    Parsed(Command),
    Retry(ParseError),
    /// Limit reached: fall back to `noop` and flag a reflection.
    Fallback(ParseError),
}

/// Counts consecutive parse failures on one goal.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ParseGuard {
    consecutive: u32,
}

impl ParseGuard {
    pub fn observe(&mut self, result: Result<Command, ParseError>) -> GuardOutcome {
        match result {
            Ok(c) => {
                self.consecutive = 0;
                GuardOutcome::Parsed(c)
            }
            Err(e) => {
                self.consecutive += 1;
                if self.consecutive >= PARSE_FAILURE_LIMIT {
                    self.consecutive = 0;
                    GuardOutcome::Fallback(e)
                } else {
                    GuardOutcome::Retry(e)
                }
            }
        }
    }
}

/// Everything the planner prompt draws on besides the goal and the pad.
#[derive(Debug, Clone, Copy)]
pub struct PromptContext<'a> {
    pub creed: &'a Creed,
    pub percepts: &'a PerceptWindow,
    pub memories: &'a [String],
    pub plan: &'a str,
    pub reuse: Option<&'a ReasoningTrace>,
}

pub fn creed_section(creed: &Creed, goal: &Goal) -> String {
    let lines: Vec<String> = goal
        .creed_refs
        .iter()
        .filter_map(|id| creed.sentence(*id).map(|s| format!("[creed:{id}] {s}")))
        .collect();
    if lines.is_empty() {
        "(none)".to_string()
    } else {
        lines.join("\n")
    }
}

fn or_none(s: String, empty: &str) -> String {
    if s.trim().is_empty() {
        empty.to_string()
    } else {
        s
    }
}

pub fn assemble_prompt(goal: &Goal, pad: &ScratchPad, ctx: &PromptContext<'_>, tags: &Tags) -> String {
    let pad_text = or_none(pad.lines().map(|l| format!("- {l}")).collect::<Vec<_>>().join("\n"), "(empty)");
    let percepts = or_none(ctx.percepts.iter().map(|p| format!("- {}", p.digest())).collect::<Vec<_>>().join("\n"), "(none)");
    let memories = or_none(ctx.memories.iter().map(|m| format!("- {m}")).collect::<Vec<_>>().join("\n"), "(none)");
    let reuse = match ctx.reuse {
        None => String::new(),
        Some(trace) => {
            let mut s = format!("\n## Reuse prior plan\nsignature: {}\n", trace.signature);
            for (i, c) in trace.commands.iter().enumerate() {
                let _ = writeln!(s, "{}. {c}", i + 1);
            }
            s
        }
    };
    prompts::render(
        &prompts::PLANNER,
        &[
            ("tags", &tags.render()),
            ("goal", &goal.text),
            ("creed", &creed_section(ctx.creed, goal)),
            ("plan", &or_none(ctx.plan.to_string(), "(none)")),
            ("pad", &pad_text),
            ("percepts", &percepts),
            ("memories", &memories),
            ("reuse", &reuse),
        ],
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PlanSource {
    Cached,
    Fresh,
}

impl PlanSource {
    pub fn as_str(self) -> &'static str {
        match self {
            PlanSource::Cached => "cached",
            PlanSource::Fresh => "fresh",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum NextStep {
    Command(Command),
    /// The plan has no further commands.
    Exhausted,
    /// Parse-failure limit hit: execute `noop` and raise reflection-due.
    Fallback(ParseError),
}

/// Per-episode reasoning state: where the plan comes from and how far it
/// has progressed.
#[derive(Debug, Clone)]
pub struct EpisodeReasoner {
    goal: Goal,
    source: PlanSource,
    reused: bool,
    cached: VecDeque<Command>,
    pad: ScratchPad,
    guard: ParseGuard,
    fresh_step: u32,
    chain: Vec<String>,
    commands: Vec<Command>,
}

/// Starts an episode: replays a trace whose signature matches exactly,
/// otherwise plans fresh.
pub fn plan_or_reuse(goal: &Goal, signature: &TraceSignature, memory: &EpisodicStore, pad_bound: usize) -> EpisodeReasoner {
    let mut reasoner = EpisodeReasoner {
        goal: goal.clone(),
        source: PlanSource::Fresh,
        reused: false,
        cached: VecDeque::new(),
        pad: ScratchPad::new(pad_bound),
        guard: ParseGuard::default(),
        fresh_step: 0,
        chain: Vec::new(),
        commands: Vec::new(),
    };
    if let Some(trace) = memory.trace(signature) {
        reasoner.source = PlanSource::Cached;
        reasoner.reused = true;
        reasoner.cached = trace.commands.iter().cloned().collect();
        reasoner.push_line(format!("retrieval: trace signature {signature} matches a stored success"));
        reasoner.push_line(format!(
            "decision: reuse prior plan of {} commands without new deliberation",
            trace.commands.len()
        ));
        reasoner.push_line(format!("check: stored outcome was verified ({})", trace.outcome.message));
    }
    reasoner
}

impl EpisodeReasoner {
    pub fn source(&self) -> PlanSource {
        self.source
    }

    /// True while a cached plan is being replayed without fallback.
    pub fn reused(&self) -> bool {
        self.reused
    }

    pub fn steps(&self) -> u32 {
        self.pad.steps()
    }

    pub fn pad(&self) -> &ScratchPad {
        &self.pad
    }

    pub fn commands(&self) -> &[Command] {
        &self.commands
    }

    /// Full chain of thought, including lines that left the bounded pad.
    pub fn chain(&self) -> &[String] {
        &self.chain
    }

    pub fn cached_plan(&self) -> Option<Vec<Command>> {
        (self.source == PlanSource::Cached).then(|| self.cached.iter().cloned().collect())
    }

    /// Abandons a failed replay and switches to fresh planning.
    pub fn abort_reuse(&mut self, failure: &str) {
        if self.source == PlanSource::Cached {
            self.push_line(format!("replay failed ({failure}); planning afresh"));
            self.source = PlanSource::Fresh;
            self.reused = false;
            self.cached.clear();
            self.fresh_step = 0;
        }
    }

    fn push_line(&mut self, line: String) {
        self.chain.push(line.clone());
        self.pad.push(line);
    }

    pub fn next(
        &mut self,
        backend: &dyn CognitionBackend,
        ctx: &PromptContext<'_>,
        base_tags: &Tags,
        seed: u64,
    ) -> Result<NextStep, BackendError> {
        if self.source == PlanSource::Cached {
            return Ok(match self.cached.pop_front() {
                Some(c) => {
                    self.commands.push(c.clone());
                    NextStep::Command(c)
                }
                None => NextStep::Exhausted,
            });
        }
        loop {
            let tags = base_tags
                .clone()
                .with("mode", "act")
                .with("template", &self.goal.template)
                .with("step", self.fresh_step);
            let prompt = assemble_prompt(&self.goal, &self.pad, ctx, &tags);
            let response = backend.generate(&GenerationRequest::new(Role::Planner, prompt, seed))?;
            let mut scratch = ScratchPad::new(usize::MAX);
            let parsed = parse_command(&response.text, &mut scratch);
            for line in scratch.lines() {
                self.push_line(line.to_string());
            }
            match self.guard.observe(parsed) {
                GuardOutcome::Parsed(Command::Noop) => return Ok(NextStep::Exhausted),
                GuardOutcome::Parsed(c) => {
                    self.fresh_step += 1;
                    self.commands.push(c.clone());
                    return Ok(NextStep::Command(c));
                }
                GuardOutcome::Retry(e) => log::debug!("planner output rejected: {e}"),
                GuardOutcome::Fallback(e) => return Ok(NextStep::Fallback(e)),
            }
        }
    }

    /// Ends the episode, returning the step count and clearing the pad.
    pub fn finish(&mut self) -> u32 {
        let steps = self.pad.steps();
        self.pad.clear();
        steps
    }
}

/// Interface for gradient-based policy updates. Runtime learning is disabled:
/// no implementation exists and the executive never calls it.
pub trait PolicyUpdateHook {
    fn update(&mut self, trace: &ReasoningTrace, advantage: f64);
}
