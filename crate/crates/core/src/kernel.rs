//! Virtual clock, event broker and the domain types shared by every layer.
//!
//! The broker is a priority queue ordered by `(priority, id)`: lower priority
//! values are more urgent and ids break ties in publication order, so the
//! dequeue sequence of any published multiset is unique.

use std::cmp::Ordering;
use std::collections::{BTreeSet, BinaryHeap, VecDeque};
use std::fmt;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sandbox::{UserFeedEntry, VerifierReport};
use crate::system1::{ExtrinsicReward, PerceptEvent};

/// Virtual minutes since the scenario epoch.
pub type Minutes = u64;
/// Virtual seconds since the scenario epoch.
pub type Seconds = u64;

pub const FEED_CADENCE: Minutes = 5;
pub const MINUTES_PER_DAY: Minutes = 1440;
pub const MAX_PRIORITY: u8 = 9;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum KernelError {
    #[error("event timestamp {timestamp} is in the future of the clock ({now})")]
    FutureTimestamp { timestamp: Minutes, now: Minutes },
    #[error("priority {0} outside [0, {MAX_PRIORITY}]")]
    InvalidPriority(u8),
    #[error("cannot advance the clock with {0} due event(s) pending")]
    DueEventsPending(usize),
    #[error("tick size must be at least one virtual minute")]
    ZeroTick,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VirtualClock {
    now: Minutes,
    tick_size: Minutes,
}

impl VirtualClock {
    pub fn new(tick_size: Minutes) -> Result<Self, KernelError> {
        if tick_size == 0 {
            return Err(KernelError::ZeroTick);
        }
        Ok(Self { now: 0, tick_size })
    }

    /// Clock resuming at minute `now`.
    pub fn starting_at(now: Minutes, tick_size: Minutes) -> Result<Self, KernelError> {
        Ok(Self { now, ..Self::new(tick_size)? })
    }

    pub fn now(&self) -> Minutes {
        self.now
    }

    pub fn now_seconds(&self) -> Seconds {
        self.now * 60
    }

    pub fn tick_size(&self) -> Minutes {
        self.tick_size
    }

    /// True when the user-behaviour feed is due at the current minute.
    pub fn feed_due(&self) -> bool {
        self.now > 0 && self.now % FEED_CADENCE == 0
    }

    fn advance(&mut self) -> Minutes {
        self.now += self.tick_size;
        self.now
    }
}

impl Default for VirtualClock {
    fn default() -> Self {
        Self { now: 0, tick_size: 1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EventKind {
    Percept,
    Reward,
    Verifier,
    Feed,
    Directive,
    ReflectionDue,
}

impl EventKind {
    /// Fixed urgency band: safety-relevant verifier output first, housekeeping last.
    pub fn default_priority(self) -> u8 {
        match self {
            EventKind::Verifier => 0,
            EventKind::Reward => 1,
            EventKind::Feed => 2,
            EventKind::Percept => 3,
            EventKind::Directive => 4,
            EventKind::ReflectionDue => 5,
        }
    }
}

/// A user-issued task request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Directive {
    pub task_id: String,
    pub text: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReflectionReason {
    EpisodeEnd,
    ParseFailures,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum EventPayload {
    Percept(PerceptEvent),
    Reward(ExtrinsicReward),
    Verifier(VerifierReport),
    Feed(UserFeedEntry),
    Directive(Directive),
    ReflectionDue { goal_id: GoalId, reason: ReflectionReason },
}

impl EventPayload {
    pub fn kind(&self) -> EventKind {
        match self {
            EventPayload::Percept(_) => EventKind::Percept,
            EventPayload::Reward(_) => EventKind::Reward,
            EventPayload::Verifier(_) => EventKind::Verifier,
            EventPayload::Feed(_) => EventKind::Feed,
            EventPayload::Directive(_) => EventKind::Directive,
            EventPayload::ReflectionDue { .. } => EventKind::ReflectionDue,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct EventId(pub u64);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventEnvelope {
    pub id: EventId,
    pub timestamp: Minutes,
    pub kind: EventKind,
    pub priority: u8,
    pub payload: EventPayload,
}

impl EventEnvelope {
    pub fn key(&self) -> (u8, EventId) {
        (self.priority, self.id)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Ack {
    pub id: EventId,
    pub priority: u8,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Tick {
    pub now: Minutes,
    pub feed_due: bool,
}

struct Queued(EventEnvelope);

impl PartialEq for Queued {
    fn eq(&self, other: &Self) -> bool {
        self.0.key() == other.0.key()
    }
}

impl Eq for Queued {}

impl PartialOrd for Queued {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Queued {
    // BinaryHeap is a max-heap; invert so the smallest key pops first.
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.key().cmp(&self.0.key())
    }
}

struct BrokerState {
    clock: VirtualClock,
    next_id: u64,
    heap: BinaryHeap<Queued>,
}

/// Event broker with the virtual clock it guards.
///
/// `publish` may be called from any thread; `next_event` and `advance_clock`
/// belong to the single executive consumer.
pub struct EventBroker {
    state: Mutex<BrokerState>,
}

impl EventBroker {
    pub fn new(clock: VirtualClock) -> Self {
        Self {
            state: Mutex::new(BrokerState {
                clock,
                next_id: 1,
                heap: BinaryHeap::new(),
            }),
        }
    }

    pub fn clock(&self) -> VirtualClock {
        self.lock().clock
    }

    pub fn publish(&self, timestamp: Minutes, payload: EventPayload) -> Result<Ack, KernelError> {
        let priority = payload.kind().default_priority();
        self.publish_with_priority(timestamp, priority, payload)
    }

    pub fn publish_with_priority(
        &self,
        timestamp: Minutes,
        priority: u8,
        payload: EventPayload,
    ) -> Result<Ack, KernelError> {
        if priority > MAX_PRIORITY {
            return Err(KernelError::InvalidPriority(priority));
        }
        let mut state = self.lock();
        if timestamp > state.clock.now {
            return Err(KernelError::FutureTimestamp {
                timestamp,
                now: state.clock.now,
            });
        }
        let id = EventId(state.next_id);
        state.next_id += 1;
        state.heap.push(Queued(EventEnvelope {
            id,
            timestamp,
            kind: payload.kind(),
            priority,
            payload,
        }));
        Ok(Ack { id, priority })
    }

    pub fn next_event(&self) -> Option<EventEnvelope> {
        self.lock().heap.pop().map(|q| q.0)
    }

    pub fn pending(&self) -> usize {
        self.lock().heap.len()
    }

    /// Ids of queued events in dequeue order.
    pub fn pending_ids(&self) -> Vec<EventId> {
        let state = self.lock();
        let mut keys: Vec<_> = state.heap.iter().map(|q| q.0.key()).collect();
        keys.sort_unstable();
        keys.into_iter().map(|(_, id)| id).collect()
    }

    /// Moves virtual time forward by one tick. Every queued event is due
    /// (timestamps never exceed `now`), so the queue must be empty.
    pub fn advance_clock(&self) -> Result<Tick, KernelError> {
        let mut state = self.lock();
        if !state.heap.is_empty() {
            return Err(KernelError::DueEventsPending(state.heap.len()));
        }
        let now = state.clock.advance();
        Ok(Tick {
            now,
            feed_due: state.clock.feed_due(),
        })
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, BrokerState> {
        self.state.lock().unwrap_or_else(|e| e.into_inner())
    }
}

impl Default for EventBroker {
    fn default() -> Self {
        Self::new(VirtualClock::default())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct GoalId(pub u64);

impl fmt::Display for GoalId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "g-{:04}", self.0)
    }
}

impl std::str::FromStr for GoalId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.strip_prefix("g-")
            .and_then(|n| n.parse().ok())
            .map(GoalId)
            .ok_or_else(|| format!("invalid goal id `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Origin {
    Extrinsic,
    Intrinsic,
}

impl Origin {
    pub fn as_str(self) -> &'static str {
        match self {
            Origin::Extrinsic => "extrinsic",
            Origin::Intrinsic => "intrinsic",
        }
    }
}

impl std::str::FromStr for Origin {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "extrinsic" => Ok(Origin::Extrinsic),
            "intrinsic" => Ok(Origin::Intrinsic),
            other => Err(format!("unknown origin `{other}`")),
        }
    }
}

/// Difficulty band by minimum solving steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tier {
    Easy,
    Medium,
    Hard,
}

impl Tier {
    pub const ALL: [Tier; 3] = [Tier::Easy, Tier::Medium, Tier::Hard];

    pub fn from_min_steps(steps: u32) -> Tier {
        match steps {
            0..=3 => Tier::Easy,
            4..=8 => Tier::Medium,
            _ => Tier::Hard,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Tier::Easy => "easy",
            Tier::Medium => "medium",
            Tier::Hard => "hard",
        }
    }
}

impl std::str::FromStr for Tier {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "easy" => Ok(Tier::Easy),
            "medium" => Ok(Tier::Medium),
            "hard" => Ok(Tier::Hard),
            other => Err(format!("unknown tier `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Goal {
    pub id: GoalId,
    pub text: String,
    origin: Origin,
    pub creed_refs: BTreeSet<u8>,
    /// `None` when the difficulty is unknown.
    pub difficulty: Option<Tier>,
    pub parent_goal: Option<GoalId>,
    /// Template id used for plan scripts and trace signatures.
    pub template: String,
    /// Sandbox task this goal is verified against, if any.
    pub task: Option<String>,
    pub adopted_at: Seconds,
}

impl Goal {
    pub fn new(id: GoalId, text: impl Into<String>, origin: Origin, template: impl Into<String>) -> Self {
        Self {
            id,
            text: text.into(),
            origin,
            creed_refs: BTreeSet::new(),
            difficulty: None,
            parent_goal: None,
            template: template.into(),
            task: None,
            adopted_at: 0,
        }
    }

    pub fn origin(&self) -> Origin {
        self.origin
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CommandError {
    #[error("wait duration must be positive")]
    ZeroWait,
    #[error("`{0}` requires a non-empty argument")]
    EmptyArgument(&'static str),
}

/// A machine-executable high-level command.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Command {
    Open(String),
    Click(String),
    /// Raw argument expression as written: quoted literals, or bare
    /// symbols such as `summary + paperlink` resolved by the sandbox.
    Type(String),
    Wait(Seconds),
    Extract(String),
    Search(String),
    Noop,
}

impl Command {
    pub fn open(target: impl Into<String>) -> Result<Self, CommandError> {
        non_empty("open", target.into()).map(Command::Open)
    }

    pub fn click(selector: impl Into<String>) -> Result<Self, CommandError> {
        non_empty("click", selector.into()).map(Command::Click)
    }

    pub fn extract(selector: impl Into<String>) -> Result<Self, CommandError> {
        non_empty("extract", selector.into()).map(Command::Extract)
    }

    pub fn type_text(expr: impl Into<String>) -> Result<Self, CommandError> {
        non_empty("type", expr.into()).map(Command::Type)
    }

    pub fn search(query: impl Into<String>) -> Result<Self, CommandError> {
        non_empty("search", query.into()).map(Command::Search)
    }

    pub fn wait(seconds: Seconds) -> Result<Self, CommandError> {
        if seconds == 0 {
            Err(CommandError::ZeroWait)
        } else {
            Ok(Command::Wait(seconds))
        }
    }

    pub fn verb(&self) -> &'static str {
        match self {
            Command::Open(_) => "open",
            Command::Click(_) => "click",
            Command::Type(_) => "type",
            Command::Wait(_) => "wait",
            Command::Extract(_) => "extract",
            Command::Search(_) => "search",
            Command::Noop => "noop",
        }
    }

    pub fn validate(&self) -> Result<(), CommandError> {
        match self {
            Command::Wait(0) => Err(CommandError::ZeroWait),
            Command::Open(a) | Command::Click(a) | Command::Extract(a) | Command::Type(a) | Command::Search(a)
                if a.trim().is_empty() =>
            {
                Err(CommandError::EmptyArgument(self.verb()))
            }
            _ => Ok(()),
        }
    }
}

fn non_empty(verb: &'static str, arg: String) -> Result<String, CommandError> {
    if arg.trim().is_empty() {
        Err(CommandError::EmptyArgument(verb))
    } else {
        Ok(arg)
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Command::Open(a) => write!(f, "open({})", quote(a)),
            Command::Click(a) => write!(f, "click({})", quote(a)),
            Command::Extract(a) => write!(f, "extract({})", quote(a)),
            Command::Search(a) => write!(f, "search({})", quote(a)),
            Command::Type(expr) => write!(f, "type({expr})"),
            Command::Wait(s) => write!(f, "wait({s}s)"),
            Command::Noop => f.write_str("noop()"),
        }
    }
}

fn quote(arg: &str) -> String {
    format!("\"{}\"", arg.replace('\\', "\\\\").replace('"', "\\\""))
}

/// Bounded window of the most recent percepts.
#[derive(Debug, Clone, PartialEq)]
pub struct PerceptWindow {
    bound: usize,
    items: VecDeque<PerceptEvent>,
}

impl PerceptWindow {
    pub fn new(bound: usize) -> Self {
        Self {
            bound: bound.max(1),
            items: VecDeque::with_capacity(bound.max(1)),
        }
    }

    pub fn push(&mut self, percept: PerceptEvent) {
        if self.items.len() == self.bound {
            self.items.pop_front();
        }
        self.items.push_back(percept);
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn bound(&self) -> usize {
        self.bound
    }

    pub fn iter(&self) -> impl Iterator<Item = &PerceptEvent> {
        self.items.iter()
    }
}

/// Snapshot handed to the executive monitor on each meta step.
#[derive(Debug, Clone)]
pub struct ExecutiveContext {
    pub clock: VirtualClock,
    pub pending: Vec<EventId>,
    pub active_goal: Option<Goal>,
    pub percepts: PerceptWindow,
    pub beta: f64,
}
