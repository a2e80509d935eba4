//! Deterministic offline browser sandbox.
//!
//! [`EnvState`] values are immutable snapshots: every transition returns a
//! new state, and a transition is a pure function of the prior state, the
//! action and the seeded generator carried inside the state.

mod feed;
mod scenario;
mod verifier;

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use feed::{Activity, Emotion, FeedSegment, FeedTrack, FillMode, UserFeedEntry};
pub use scenario::{
    DirectiveSpec, Element, ElementKind, Page, PageGraph, Scenario, ScenarioError, ScriptSpec, DEFAULT_CREED,
    DEFAULT_IDENTITY_GOAL,
};
pub use verifier::{CapabilityGrant, Predicate, Progress, TaskSpec, Trigger, VerifierReport};

use crate::kernel::{Command, Minutes, Seconds, VirtualClock, FEED_CADENCE};

/// Symbolic argument resolved to the first result of the latest search.
pub const TOP_RESULT: &str = "topResult";
pub const OCR_PREFIX: &str = "ocr:";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EnvError {
    #[error("unknown task `{0}`")]
    UnknownTask(String),
    #[error("a task attempt is already open")]
    AttemptOpen,
    #[error("feed tick at minute {0} is off the five-minute cadence")]
    Cadence(u64),
    #[error("feed entry for minute {0} already appended")]
    DuplicateFeed(u64),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct PendingTimer {
    page: String,
    remaining: Seconds,
    total: Seconds,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct Attempt {
    task_id: String,
    progress: Progress,
    reported: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Extraction {
    pub page: String,
    pub element: String,
    pub text: String,
}

/// Projection of the sandbox handed to System 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub at_seconds: Seconds,
    pub page: String,
    pub page_title: String,
    pub page_text: String,
    pub elements: Vec<String>,
    pub links: Vec<String>,
    /// True when this observation delivers a page the agent has not seen yet.
    pub page_changed: bool,
    pub feed: Vec<UserFeedEntry>,
    pub failure: Option<String>,
    pub extracted: Option<Extraction>,
    pub search_results: Vec<String>,
    pub verifier: Option<VerifierReport>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    pub state: EnvState,
    pub observation: Observation,
    pub report: Option<VerifierReport>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvState {
    scenario: Arc<Scenario>,
    current_page: String,
    elapsed: Seconds,
    timers: Vec<PendingTimer>,
    feed_log: Vec<UserFeedEntry>,
    delivered: usize,
    rng: ChaCha8Rng,
    attempt: Option<Attempt>,
    last_search: Vec<String>,
    last_extract: Option<Extraction>,
    page_unseen: bool,
}

impl EnvState {
    pub fn reset(scenario: Arc<Scenario>, seed: u64) -> Self {
        let home = scenario.graph.home().to_string();
        Self {
            scenario,
            current_page: home,
            elapsed: 0,
            timers: Vec::new(),
            feed_log: Vec::new(),
            delivered: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
            attempt: None,
            last_search: Vec::new(),
            last_extract: None,
            page_unseen: true,
        }
    }

    /// State of a run resumed at `minute`: the feed up to that minute is
    /// regenerated and marked delivered, the sandbox is otherwise fresh.
    pub fn reset_at(scenario: Arc<Scenario>, seed: u64, minute: Minutes) -> Self {
        let mut state = Self::reset(scenario, seed);
        let mut t = FEED_CADENCE;
        while t <= minute {
            let entry = state.scenario.feed.entry_at(t, state.feed_log.last(), &mut state.rng);
            state.feed_log.push(entry);
            t += FEED_CADENCE;
        }
        state.delivered = state.feed_log.len();
        state.elapsed = minute * 60;
        state
    }

    pub fn scenario(&self) -> &Arc<Scenario> {
        &self.scenario
    }

    pub fn current_page(&self) -> &str {
        &self.current_page
    }

    pub fn elapsed_seconds(&self) -> Seconds {
        self.elapsed
    }

    pub fn feed_log(&self) -> &[UserFeedEntry] {
        &self.feed_log
    }

    pub fn has_pending_timer(&self) -> bool {
        !self.timers.is_empty()
    }

    pub fn attempt_task(&self) -> Option<&str> {
        self.attempt.as_ref().map(|a| a.task_id.as_str())
    }

    /// Progress of the open attempt, for independent predicate checks.
    pub fn attempt_progress(&self) -> Option<&Progress> {
        self.attempt.as_ref().map(|a| &a.progress)
    }

    pub fn begin_attempt(&self, task_id: &str) -> Result<EnvState, EnvError> {
        if self.attempt.is_some() {
            return Err(EnvError::AttemptOpen);
        }
        if self.scenario.task(task_id).is_none() {
            return Err(EnvError::UnknownTask(task_id.to_string()));
        }
        let mut next = self.clone();
        next.attempt = Some(Attempt {
            task_id: task_id.to_string(),
            progress: Progress::default(),
            reported: false,
        });
        next.timers.clear();
        Ok(next)
    }

    /// Closes the open attempt. Emits a failure report unless the attempt
    /// already produced its single report.
    pub fn conclude_attempt(&self, reason: &str) -> (EnvState, Option<VerifierReport>) {
        let mut next = self.clone();
        next.timers.clear();
        let report = next.attempt.take().and_then(|a| {
            if a.reported {
                None
            } else {
                let task = self.scenario.task(&a.task_id).expect("attempt task exists");
                Some(VerifierReport::failure(task, reason, self.elapsed))
            }
        });
        (next, report)
    }

    pub fn step(&self, action: &Command) -> Step {
        let mut next = self.clone();
        let mut failure = None;
        let mut extracted = None;
        let mut page_changed = false;
        let mut results = Vec::new();

        match action {
            Command::Open(target) => match next.resolve_target(target) {
                Some(page) => {
                    next.navigate(&page);
                    page_changed = true;
                }
                None if target == TOP_RESULT => failure = Some("no search results to open".to_string()),
                None => failure = Some(format!("page not found: {target}")),
            },
            Command::Click(selector) => {
                if next.page().element(selector).is_some() {
                    let page = next.current_page.clone();
                    next.progress_mut(|p| {
                        p.clicked.insert((page, selector.clone()));
                    });
                } else {
                    failure = Some(format!("element not found: {selector}"));
                }
            }
            Command::Type(expr) => {
                if next.page().has_input() {
                    let text = next.eval_text(expr);
                    let page = next.current_page.clone();
                    if next.page().search {
                        results = next.scenario.graph.search(&text);
                        next.last_search = results.clone();
                    }
                    next.progress_mut(|p| {
                        p.typed.insert(page, text);
                    });
                } else {
                    failure = Some(format!("no input field on page: {}", next.current_page));
                }
            }
            Command::Wait(seconds) => next.timers.push(PendingTimer {
                page: next.current_page.clone(),
                remaining: *seconds,
                total: *seconds,
            }),
            Command::Extract(selector) => match next.extract(selector) {
                Ok(x) => {
                    let key = (x.page.clone(), x.element.clone());
                    next.progress_mut(|p| {
                        p.extracted.insert(key);
                    });
                    next.last_extract = Some(x.clone());
                    extracted = Some(x);
                }
                Err(why) => failure = Some(why),
            },
            Command::Search(query) => match next.scenario.graph.search_page().map(str::to_string) {
                Some(search) => {
                    next.navigate(&search);
                    page_changed = true;
                    results = next.scenario.graph.search(query);
                    next.last_search = results.clone();
                    next.progress_mut(|p| {
                        p.typed.insert(search, query.clone());
                    });
                }
                None => failure = Some("no search page in this sandbox".to_string()),
            },
            Command::Noop => {}
        }

        let report = next.check_attempt();
        if page_changed {
            next.page_unseen = false;
        }
        let mut observation = next.project(page_changed);
        observation.failure = failure;
        observation.extracted = extracted;
        observation.search_results = results;
        observation.verifier = report.clone();
        Step {
            state: next,
            observation,
            report,
        }
    }

    /// Lets virtual time pass, completing timers whose duration elapsed.
    pub fn advance(&self, seconds: Seconds) -> (EnvState, Vec<VerifierReport>) {
        let mut next = self.clone();
        next.elapsed += seconds;
        let mut done = Vec::new();
        next.timers.retain_mut(|t| {
            t.remaining = t.remaining.saturating_sub(seconds);
            if t.remaining == 0 {
                done.push((t.page.clone(), t.total));
                false
            } else {
                true
            }
        });
        for (page, total) in done {
            next.progress_mut(|p| *p.activity.entry(page).or_insert(0) += total);
        }
        let reports = next.check_attempt().into_iter().collect();
        (next, reports)
    }

    pub fn feed_tick(&self, clock: &VirtualClock) -> Result<EnvState, EnvError> {
        let now = clock.now();
        if now == 0 || now % FEED_CADENCE != 0 {
            return Err(EnvError::Cadence(now));
        }
        if self.feed_log.last().is_some_and(|e| e.timestamp >= now) {
            return Err(EnvError::DuplicateFeed(now));
        }
        let mut next = self.clone();
        let entry = next.scenario.feed.entry_at(now, self.feed_log.last(), &mut next.rng);
        next.feed_log.push(entry);
        Ok(next)
    }

    /// Read-only projection plus the state with unread feed entries and the
    /// current page marked as delivered.
    pub fn observe(&self) -> (Observation, EnvState) {
        let mut obs = self.project(self.page_unseen);
        obs.feed = self.feed_log[self.delivered..].to_vec();
        let mut next = self.clone();
        next.delivered = self.feed_log.len();
        next.page_unseen = false;
        (obs, next)
    }

    fn project(&self, page_changed: bool) -> Observation {
        let page = self.page();
        Observation {
            at_seconds: self.elapsed,
            page: page.id.clone(),
            page_title: page.title.clone(),
            page_text: page.text.clone(),
            elements: page.elements.iter().map(|e| e.name.clone()).collect(),
            links: page.links.clone(),
            page_changed,
            feed: Vec::new(),
            failure: None,
            extracted: None,
            search_results: Vec::new(),
            verifier: None,
        }
    }

    fn page(&self) -> &Page {
        self.scenario
            .graph
            .page(&self.current_page)
            .expect("current page is in the immutable graph")
    }

    fn resolve_target(&self, target: &str) -> Option<String> {
        if target == TOP_RESULT {
            return self.last_search.first().cloned();
        }
        self.scenario.graph.page(target).map(|p| p.id.clone())
    }

    fn navigate(&mut self, page: &str) {
        self.current_page = page.to_string();
        self.page_unseen = true;
        let page = page.to_string();
        self.progress_mut(|p| {
            p.opened.insert(page);
        });
    }

    fn extract(&self, selector: &str) -> Result<Extraction, String> {
        let (ocr, name) = match selector.strip_prefix(OCR_PREFIX) {
            Some(rest) => (true, rest),
            None => (false, selector),
        };
        let el = self
            .page()
            .element(name)
            .ok_or_else(|| format!("element not found: {name}"))?;
        if el.kind == ElementKind::Image && !ocr {
            return Err(format!("element has no text layer: {name}"));
        }
        Ok(Extraction {
            page: self.current_page.clone(),
            element: selector.to_string(),
            text: el.text.clone(),
        })
    }

    /// Evaluates a `type` expression: `+`-joined parts, quoted literals,
    /// and the symbols `summary` (last extraction) and `paperlink`.
    fn eval_text(&self, expr: &str) -> String {
        split_plus(expr)
            .into_iter()
            .map(|part| {
                let part = part.trim();
                if let Some(lit) = part.strip_prefix('"').and_then(|p| p.strip_suffix('"')) {
                    return lit.replace("\\\"", "\"").replace("\\\\", "\\");
                }
                match part {
                    "summary" => self.last_extract.as_ref().map(|x| x.text.clone()).unwrap_or_default(),
                    "paperlink" => self
                        .last_extract
                        .as_ref()
                        .map(|x| format!("sandbox://{}", x.page))
                        .unwrap_or_default(),
                    other => other.to_string(),
                }
            })
            .collect::<Vec<_>>()
            .join(" ")
    }

    fn progress_mut(&mut self, f: impl FnOnce(&mut Progress)) {
        if let Some(a) = self.attempt.as_mut() {
            f(&mut a.progress);
        }
    }

    fn check_attempt(&mut self) -> Option<VerifierReport> {
        let attempt = self.attempt.as_mut()?;
        if attempt.reported {
            return None;
        }
        let task = self.scenario.task(&attempt.task_id).expect("attempt task exists");
        if task.verifier.holds(&attempt.progress) {
            attempt.reported = true;
            Some(VerifierReport::success(task, self.elapsed))
        } else {
            None
        }
    }
}

fn split_plus(expr: &str) -> Vec<&str> {
    let mut parts = Vec::new();
    let mut start = 0;
    let mut quoted = false;
    let mut escaped = false;
    for (i, c) in expr.char_indices() {
        match c {
            _ if escaped => escaped = false,
            '\\' if quoted => escaped = true,
            '"' => quoted = !quoted,
            '+' if !quoted => {
                parts.push(&expr[start..i]);
                start = i + 1;
            }
            _ => {}
        }
    }
    parts.push(&expr[start..]);
    parts
}

#[cfg(test)]
mod tests {
    use super::*;

    const SCENARIO: &str = r##"
name = "unit"
duration_minutes = 120

[[pages]]
id = "home"
text = "Welcome"
links = ["search", "wellness/breathing-game"]

[[pages]]
id = "search"
search = true
elements = [{ name = "query", kind = "input" }]

[[pages]]
id = "wellness/breathing-game"
title = "Breathing game"
elements = [{ name = "#start-btn", kind = "button" }]

[[pages]]
id = "arxiv/rl-survey"
title = "Reinforcement Learning: A Survey"
elements = [{ name = "abstract", kind = "text", text = "We survey reinforcement learning." }]

[[pages]]
id = "note-pad/new"
elements = [{ name = "body", kind = "input" }]

[[pages]]
id = "reports/scan"
elements = [{ name = "scan", kind = "image", text = "Q3 revenue grew." }]

[[tasks]]
id = "stress-relief"
description = "run the breathing exercise for three minutes"
min_steps = 3
trigger = { kind = "stress" }
verifier = { all = [
  { clicked = { page = "wellness/breathing-game", element = "#start-btn" } },
  { activity = { page = "wellness/breathing-game", seconds = 180 } },
] }

[[tasks]]
id = "knowledge-push"
description = "share an RL paper"
min_steps = 6
trigger = { kind = "reading_docs" }
verifier = { all = [
  { extracted = { page = "arxiv/rl-survey", element = "abstract" } },
  { typed = { page = "note-pad/new", contains = "arxiv" } },
] }

[[feed]]
from = 815
to = 900
emotion = "stressed"

[[feed]]
from = 805
to = 900
activity = "idle"

[[feed]]
from = 0
to = 800
activity = "typing"

[[feed]]
from = 545
to = 560
activity = "reading_docs"
"##;

    fn scenario() -> Arc<Scenario> {
        Arc::new(Scenario::from_toml_str(SCENARIO).unwrap())
    }

    fn run(state: &EnvState, cmds: &[Command]) -> (EnvState, Vec<Observation>, Vec<VerifierReport>) {
        let mut s = state.clone();
        let mut obs = Vec::new();
        let mut reports = Vec::new();
        for c in cmds {
            let step = s.step(c);
            s = step.state;
            obs.push(step.observation);
            reports.extend(step.report);
        }
        (s, obs, reports)
    }

    fn tick_to(mut s: EnvState, minute: u64) -> EnvState {
        let mut clock = VirtualClock::default();
        let broker = crate::kernel::EventBroker::new(clock);
        while clock.now() < minute {
            let t = broker.advance_clock().unwrap();
            clock = broker.clock();
            s = s.advance(60).0;
            if t.feed_due {
                s = s.feed_tick(&clock).unwrap();
            }
        }
        s
    }

    #[test]
    fn reset_is_deterministic() {
        let a = EnvState::reset(scenario(), 42);
        let b = EnvState::reset(scenario(), 42);
        assert_eq!(a, b);
        assert_eq!(a.current_page(), "home");
        assert!(a.feed_log().is_empty());
    }

    #[test]
    fn stress_sequence_satisfies_verifier_after_timer() {
        let s = EnvState::reset(scenario(), 1).begin_attempt("stress-relief").unwrap();
        let (s, obs, reports) = run(
            &s,
            &[
                Command::open("wellness/breathing-game").unwrap(),
                Command::click("#start-btn").unwrap(),
                Command::wait(180).unwrap(),
            ],
        );
        assert!(reports.is_empty());
        assert!(obs.iter().all(|o| o.failure.is_none()));
        let (s, r1) = s.advance(60);
        let (s, r2) = s.advance(60);
        assert!(r1.is_empty() && r2.is_empty());
        let (s, r3) = s.advance(60);
        assert_eq!(r3.len(), 1);
        assert!(r3[0].success);
        assert_eq!(r3[0].at_seconds, 180);
        assert!(s.attempt_progress().map(|p| scenario().task("stress-relief").unwrap().verifier.holds(p)).unwrap());
        // Exactly one report per attempt.
        let (_, again) = s.conclude_attempt("done");
        assert!(again.is_none());
    }

    #[test]
    fn missing_element_is_a_failure_observation() {
        let s = EnvState::reset(scenario(), 1);
        let step = s.step(&Command::click("#nope").unwrap());
        assert_eq!(step.observation.failure.as_deref(), Some("element not found: #nope"));
        assert!(step.report.is_none());
    }

    #[test]
    fn search_lists_top_result_and_symbols_resolve() {
        let s = EnvState::reset(scenario(), 1).begin_attempt("knowledge-push").unwrap();
        let step = s.step(&Command::search("Reinforcement learning").unwrap());
        assert_eq!(step.observation.search_results.first().map(String::as_str), Some("arxiv/rl-survey"));
        let (s, obs, reports) = run(
            &step.state,
            &[
                Command::open(TOP_RESULT).unwrap(),
                Command::extract("abstract").unwrap(),
                Command::open("note-pad/new").unwrap(),
                Command::type_text("summary + paperlink").unwrap(),
            ],
        );
        assert!(obs[0].elements.contains(&"abstract".to_string()));
        assert_eq!(obs[1].extracted.as_ref().unwrap().text, "We survey reinforcement learning.");
        assert_eq!(reports.len(), 1);
        assert!(reports[0].success);
        let typed = &s.attempt_progress().unwrap().typed["note-pad/new"];
        assert_eq!(typed, "We survey reinforcement learning. sandbox://arxiv/rl-survey");
    }

    #[test]
    fn scanned_image_needs_ocr() {
        let s = EnvState::reset(scenario(), 1);
        let s = s.step(&Command::open("reports/scan").unwrap()).state;
        let plain = s.step(&Command::extract("scan").unwrap());
        assert_eq!(plain.observation.failure.as_deref(), Some("element has no text layer: scan"));
        let ocr = s.step(&Command::extract("ocr:scan").unwrap());
        assert_eq!(ocr.observation.extracted.unwrap().text, "Q3 revenue grew.");
    }

    #[test]
    fn feed_track_at_scripted_timestamps() {
        let s = tick_to(EnvState::reset(scenario(), 3), 860);
        let log = s.feed_log();
        assert_eq!(log.len(), 172);
        let at = |m| log.iter().find(|e| e.timestamp == m).copied().unwrap();
        let e = at(860);
        assert_eq!((e.emotion, e.activity, e.idle_minutes), (Emotion::Stressed, Activity::Idle, 60));
        assert_eq!(at(545).activity, Activity::ReadingDocs);
        for w in log.windows(2) {
            assert_eq!(w[1].timestamp - w[0].timestamp, 5);
        }
    }

    #[test]
    fn feed_tick_rejects_off_cadence() {
        let broker = crate::kernel::EventBroker::default();
        broker.advance_clock().unwrap();
        let s = EnvState::reset(scenario(), 1);
        assert_eq!(s.feed_tick(&broker.clock()), Err(EnvError::Cadence(1)));
    }

    #[test]
    fn observe_delivers_feed_once() {
        let s = tick_to(EnvState::reset(scenario(), 3), 10);
        let (first, s) = s.observe();
        assert_eq!(first.feed.len(), 2);
        assert!(first.page_changed);
        let (second, _) = s.observe();
        assert!(second.feed.is_empty());
        assert!(!second.page_changed);
    }

    #[test]
    fn type_needs_an_input() {
        let s = EnvState::reset(scenario(), 1);
        let step = s.step(&Command::type_text("\"hi\"").unwrap());
        assert!(step.observation.failure.unwrap().starts_with("no input field"));
    }

    #[test]
    fn split_plus_respects_quotes() {
        assert_eq!(split_plus(r#""a + b" + summary"#), vec![r#""a + b" "#, " summary"]);
    }
}
