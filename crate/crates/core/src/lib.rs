//! Persistent meta-cognitive agent runtime.
//!
//! The crate is organised as a three-layer cognitive stack driven by a single
//! executive loop:
//!
//! - [`system1`] encodes sandbox observations into typed percepts and expands
//!   commands into primitive sandbox actions.
//! - [`system2`] assembles chain-of-thought prompts, parses generations into
//!   commands and replays cached reasoning traces.
//! - [`system3`] is the executive monitor: tree-of-thought search with
//!   guardian supervision, goal generation, and post-episode reflection.
//!
//! Supporting services live in [`memory`], [`models`] and [`reward`]; all
//! persistence goes through the Growth-Journal facade in [`journal`]. The
//! deterministic browser sandbox is in [`sandbox`], cognition backends in
//! [`backend`], and the end-to-end runner with metrics in [`harness`].

pub mod backend;
pub mod error;
pub mod harness;
pub mod journal;
pub mod kernel;
pub mod memory;
pub mod models;
pub mod prompts;
pub mod reward;
pub mod sandbox;
pub mod system1;
pub mod system2;
pub mod system3;

pub use backend::{CognitionBackend, GenerationRequest, GenerationResponse, Role, ScriptedBackend};
pub use error::{Error, Result};
pub use harness::{run_scenario, RunConfig, RunMetrics, RunOutcome};
pub use journal::{GrowthJournal, JournalEntry, JournalKind};
pub use kernel::{Command, EventBroker, Goal, GoalId, Origin, Tier, VirtualClock};
pub use memory::{EpisodicStore, TraceSignature};
pub use models::{Creed, SelfModel, UserModel};
pub use reward::{HybridReward, IntrinsicReward};
pub use sandbox::{EnvState, Scenario};
pub use system3::{MetaDecision, SearchBudget, ThoughtTree};
