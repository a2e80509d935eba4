//! Scenario descriptor: page graph, tasks, feed track, directives and the
//! rule table for the scripted cognition backend.
//!
//! Scenarios are TOML documents; see `scenarios/README.md` for the schema.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::feed::{FeedSegment, FeedTrack, FillMode};
use super::verifier::{CapabilityGrant, Predicate, TaskSpec, Trigger};
use crate::kernel::{Minutes, Tier};
use crate::system2::parse_command_line;

pub const DEFAULT_IDENTITY_GOAL: &str =
    "Grow from a novice sprite into a knowledgeable and trustworthy desk companion";

pub const DEFAULT_CREED: [&str; 5] = [
    "I grow from a novice into a knowledgeable companion through honest practice.",
    "I care for the wellbeing of the person I accompany before my own agenda.",
    "I share knowledge accurately and say where it comes from.",
    "I learn from every failure and turn gaps into new skills.",
    "I keep a transparent record of my capabilities and my reasoning.",
];

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ScenarioError {
    #[error("scenario does not parse: {0}")]
    Parse(String),
    #[error("scenario has no page graph (`pages` is missing or empty)")]
    MissingPages,
    #[error("invalid field `{field}`: {reason}")]
    Invalid { field: String, reason: String },
    #[error("cannot read scenario {path}: {reason}")]
    Io { path: String, reason: String },
}

fn invalid(field: impl Into<String>, reason: impl Into<String>) -> ScenarioError {
    ScenarioError::Invalid {
        field: field.into(),
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ElementKind {
    Button,
    Input,
    Text,
    /// Scanned image: readable only through the OCR tool (`ocr:` prefix).
    Image,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Element {
    pub name: String,
    pub kind: ElementKind,
    #[serde(default)]
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Page {
    pub id: String,
    #[serde(default)]
    pub title: String,
    #[serde(default)]
    pub text: String,
    #[serde(default)]
    pub links: Vec<String>,
    #[serde(default)]
    pub elements: Vec<Element>,
    /// Marks the search page; typing into it runs a query.
    #[serde(default)]
    pub search: bool,
}

impl Page {
    pub fn element(&self, name: &str) -> Option<&Element> {
        self.elements.iter().find(|e| e.name == name)
    }

    pub fn has_input(&self) -> bool {
        self.elements.iter().any(|e| e.kind == ElementKind::Input)
    }
}

/// Finite directed page graph; immutable for the duration of a run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PageGraph {
    pages: BTreeMap<String, Page>,
    home: String,
    search_page: Option<String>,
}

impl PageGraph {
    pub fn page(&self, id: &str) -> Option<&Page> {
        self.pages.get(id)
    }

    pub fn home(&self) -> &str {
        &self.home
    }

    pub fn search_page(&self) -> Option<&str> {
        self.search_page.as_deref()
    }

    pub fn len(&self) -> usize {
        self.pages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pages.is_empty()
    }

    /// Pages ranked by query-term hits (title weighted 3x), ties by id.
    pub fn search(&self, query: &str) -> Vec<String> {
        let terms: Vec<String> = query
            .split(|c: char| !c.is_alphanumeric())
            .filter(|t| !t.is_empty())
            .map(str::to_lowercase)
            .collect();
        if terms.is_empty() {
            return Vec::new();
        }
        let mut scored: Vec<(usize, &str)> = self
            .pages
            .values()
            .filter(|p| !p.search)
            .filter_map(|p| {
                let title = p.title.to_lowercase();
                let text = p.text.to_lowercase();
                let score: usize = terms
                    .iter()
                    .map(|t| 3 * title.matches(t.as_str()).count() + text.matches(t.as_str()).count())
                    .sum();
                (score > 0).then_some((score, p.id.as_str()))
            })
            .collect();
        scored.sort_by(|a, b| b.0.cmp(&a.0).then_with(|| a.1.cmp(b.1)));
        scored.into_iter().map(|(_, id)| id.to_string()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DirectiveSpec {
    pub at: Minutes,
    pub task: String,
    #[serde(default)]
    pub text: Option<String>,
}

/// Scripted-backend rule for one goal template.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptSpec {
    pub template: String,
    /// Reasoning lines emitted on the first fresh planning call.
    #[serde(default)]
    pub deliberation: Vec<String>,
    pub commands: Vec<String>,
    /// Capability the correct plan depends on.
    #[serde(default)]
    pub requires: Option<String>,
    /// Plan emitted while `requires` is missing from the self-model.
    #[serde(default)]
    pub fallback: Vec<String>,
    /// Intrinsic-reward rationale on success.
    #[serde(default)]
    pub rationale: Option<String>,
    #[serde(default)]
    pub heuristics: Vec<String>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct TaskFile {
    id: String,
    description: String,
    #[serde(default)]
    template: Option<String>,
    min_steps: u32,
    #[serde(default)]
    tier: Option<Tier>,
    #[serde(default)]
    skill: Option<String>,
    #[serde(default)]
    grants: Option<CapabilityGrant>,
    #[serde(default)]
    creed: Vec<u8>,
    trigger: Trigger,
    verifier: Predicate,
}

fn default_beta() -> f64 {
    0.5
}

fn default_idle_threshold() -> u32 {
    30
}

fn default_identity() -> String {
    DEFAULT_IDENTITY_GOAL.to_string()
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    name: String,
    #[serde(default)]
    description: String,
    duration_minutes: Minutes,
    #[serde(default)]
    home: Option<String>,
    #[serde(default = "default_identity")]
    identity_goal: String,
    #[serde(default)]
    creed: Vec<String>,
    #[serde(default = "default_beta")]
    initial_beta: f64,
    #[serde(default)]
    feed_fill: FillMode,
    #[serde(default)]
    intrinsic_interval_minutes: Option<Minutes>,
    #[serde(default = "default_idle_threshold")]
    idle_threshold_minutes: u32,
    #[serde(default)]
    pages: Vec<Page>,
    #[serde(default)]
    tasks: Vec<TaskFile>,
    #[serde(default)]
    feed: Vec<FeedSegment>,
    #[serde(default)]
    directives: Vec<DirectiveSpec>,
    #[serde(default)]
    scripts: Vec<ScriptSpec>,
}

/// A validated scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub description: String,
    pub duration_minutes: Minutes,
    pub identity_goal: String,
    pub creed: [String; 5],
    pub initial_beta: f64,
    /// Minimum spacing between idle-time intrinsic goals; `None` disables them.
    pub intrinsic_interval_minutes: Option<Minutes>,
    pub idle_threshold_minutes: u32,
    pub graph: PageGraph,
    pub tasks: Vec<TaskSpec>,
    pub feed: FeedTrack,
    pub directives: Vec<DirectiveSpec>,
    pub scripts: Vec<ScriptSpec>,
}

impl Scenario {
    pub fn from_toml_str(source: &str) -> Result<Self, ScenarioError> {
        let file: ScenarioFile = toml::from_str(source).map_err(|e| ScenarioError::Parse(e.to_string()))?;
        Self::validate(file)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ScenarioError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| ScenarioError::Io {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?;
        Self::from_toml_str(&text)
    }

    pub fn task(&self, id: &str) -> Option<&TaskSpec> {
        self.tasks.iter().find(|t| t.id == id)
    }

    pub fn script(&self, template: &str) -> Option<&ScriptSpec> {
        self.scripts.iter().find(|s| s.template == template)
    }

    fn validate(file: ScenarioFile) -> Result<Self, ScenarioError> {
        if file.pages.is_empty() {
            return Err(ScenarioError::MissingPages);
        }
        if file.duration_minutes == 0 {
            return Err(invalid("duration_minutes", "must be positive"));
        }
        if !(0.0..=1.0).contains(&file.initial_beta) {
            return Err(invalid("initial_beta", "must lie in [0, 1]"));
        }
        if file.intrinsic_interval_minutes == Some(0) {
            return Err(invalid("intrinsic_interval_minutes", "must be positive"));
        }

        let mut pages = BTreeMap::new();
        for (i, page) in file.pages.into_iter().enumerate() {
            if page.id.trim().is_empty() {
                return Err(invalid(format!("pages[{i}].id"), "must be non-empty"));
            }
            let mut names = BTreeSet::new();
            for (j, el) in page.elements.iter().enumerate() {
                if el.name.trim().is_empty() || !names.insert(el.name.as_str()) {
                    return Err(invalid(
                        format!("pages[{i}].elements[{j}].name"),
                        "must be non-empty and unique within the page",
                    ));
                }
            }
            if let Some(prev) = pages.insert(page.id.clone(), page) {
                return Err(invalid(format!("pages[{i}].id"), format!("duplicate page `{}`", prev.id)));
            }
        }
        for (i, page) in pages.values().enumerate() {
            for link in &page.links {
                if !pages.contains_key(link) {
                    return Err(invalid(format!("pages[{i}].links"), format!("unknown page `{link}`")));
                }
            }
        }
        let home = file.home.unwrap_or_else(|| "home".to_string());
        if !pages.contains_key(&home) {
            return Err(invalid("home", format!("unknown page `{home}`")));
        }
        let search_pages: Vec<&String> = pages.values().filter(|p| p.search).map(|p| &p.id).collect();
        if search_pages.len() > 1 {
            return Err(invalid("pages.search", "at most one search page"));
        }
        let search_page = search_pages.first().map(|s| s.to_string());

        let creed: [String; 5] = if file.creed.is_empty() {
            DEFAULT_CREED.map(String::from)
        } else {
            let n = file.creed.len();
            file.creed
                .try_into()
                .map_err(|_| invalid("creed", format!("exactly five sentences required, found {n}")))?
        };
        if creed.iter().any(|c| c.trim().is_empty()) {
            return Err(invalid("creed", "sentences must be non-empty"));
        }

        let mut tasks = Vec::with_capacity(file.tasks.len());
        let mut ids = BTreeSet::new();
        for (i, t) in file.tasks.into_iter().enumerate() {
            let field = |f: &str| format!("tasks[{i}].{f}");
            if !ids.insert(t.id.clone()) {
                return Err(invalid(field("id"), format!("duplicate task `{}`", t.id)));
            }
            if t.min_steps == 0 {
                return Err(invalid(field("min_steps"), "must be at least 1"));
            }
            let tier = Tier::from_min_steps(t.min_steps);
            if let Some(declared) = t.tier {
                if declared != tier {
                    return Err(invalid(
                        field("tier"),
                        format!("{} steps bands as {}", t.min_steps, tier.as_str()),
                    ));
                }
            }
            for page in t.verifier.pages() {
                if !pages.contains_key(page) {
                    return Err(invalid(field("verifier"), format!("unknown page `{page}`")));
                }
            }
            if let Trigger::Curiosity { page } = &t.trigger {
                if !pages.contains_key(page) {
                    return Err(invalid(field("trigger.page"), format!("unknown page `{page}`")));
                }
            }
            let creed_ids = if t.creed.is_empty() { vec![1] } else { t.creed };
            if let Some(bad) = creed_ids.iter().find(|c| !(1..=5).contains(*c)) {
                return Err(invalid(field("creed"), format!("creed id {bad} outside 1..=5")));
            }
            tasks.push(TaskSpec {
                template: t.template.unwrap_or_else(|| t.id.clone()),
                id: t.id,
                description: t.description,
                min_steps: t.min_steps,
                tier,
                skill: t.skill,
                grants: t.grants,
                creed: creed_ids,
                trigger: t.trigger,
                verifier: t.verifier,
            });
        }

        for (i, seg) in file.feed.iter().enumerate() {
            if seg.from > seg.to {
                return Err(invalid(format!("feed[{i}]"), "`from` must not exceed `to`"));
            }
        }
        for (i, d) in file.directives.iter().enumerate() {
            match tasks.iter().find(|t| t.id == d.task) {
                None => return Err(invalid(format!("directives[{i}].task"), format!("unknown task `{}`", d.task))),
                Some(t) if t.trigger != Trigger::Directive => {
                    return Err(invalid(format!("directives[{i}].task"), "task is not directive-triggered"))
                }
                _ => {}
            }
        }
        let mut templates = BTreeSet::new();
        for (i, s) in file.scripts.iter().enumerate() {
            if !templates.insert(s.template.as_str()) {
                return Err(invalid(format!("scripts[{i}].template"), "duplicate template"));
            }
            for (j, c) in s.commands.iter().chain(&s.fallback).enumerate() {
                let c = c.replace("{target}", "placeholder");
                parse_command_line(&c)
                    .map_err(|e| invalid(format!("scripts[{i}].commands[{j}]"), e.to_string()))?;
            }
            if s.requires.is_some() && s.fallback.is_empty() {
                return Err(invalid(format!("scripts[{i}].fallback"), "required when `requires` is set"));
            }
        }

        Ok(Self {
            name: file.name,
            description: file.description,
            duration_minutes: file.duration_minutes,
            identity_goal: file.identity_goal,
            creed,
            initial_beta: file.initial_beta,
            intrinsic_interval_minutes: file.intrinsic_interval_minutes,
            idle_threshold_minutes: file.idle_threshold_minutes,
            graph: PageGraph {
                pages,
                home,
                search_page,
            },
            tasks,
            feed: FeedTrack {
                segments: file.feed,
                fill: file.feed_fill,
            },
            directives: file.directives,
            scripts: file.scripts,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r##"
name = "mini"
duration_minutes = 60

[[pages]]
id = "home"
links = ["game"]

[[pages]]
id = "game"
title = "Breathing game"
elements = [{ name = "#start-btn", kind = "button" }]
"##;

    #[test]
    fn minimal_scenario_gets_defaults() {
        let s = Scenario::from_toml_str(MINIMAL).unwrap();
        assert_eq!(s.graph.home(), "home");
        assert_eq!(s.creed[0], DEFAULT_CREED[0]);
        assert_eq!(s.identity_goal, DEFAULT_IDENTITY_GOAL);
        assert_eq!(s.initial_beta, 0.5);
    }

    #[test]
    fn missing_pages_is_named() {
        let err = Scenario::from_toml_str("name = \"x\"\nduration_minutes = 10\n").unwrap_err();
        assert_eq!(err, ScenarioError::MissingPages);
    }

    #[test]
    fn dangling_link_names_the_field() {
        let src = MINIMAL.replace("links = [\"game\"]", "links = [\"nowhere\"]");
        match Scenario::from_toml_str(&src).unwrap_err() {
            ScenarioError::Invalid { field, reason } => {
                assert_eq!(field, "pages[1].links");
                assert!(reason.contains("nowhere"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn declared_tier_must_match_steps() {
        let src = format!(
            "{MINIMAL}\n[[tasks]]\nid = \"t\"\ndescription = \"d\"\nmin_steps = 9\ntier = \"easy\"\ntrigger = {{ kind = \"directive\" }}\nverifier = {{ opened = {{ page = \"game\" }} }}\n"
        );
        match Scenario::from_toml_str(&src).unwrap_err() {
            ScenarioError::Invalid { field, .. } => assert_eq!(field, "tasks[0].tier"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let src = format!("{MINIMAL}\nbogus = 1\n");
        assert!(matches!(Scenario::from_toml_str(&src), Err(ScenarioError::Parse(_))));
    }

    #[test]
    fn search_ranks_title_hits_first() {
        let src = r#"
name = "s"
duration_minutes = 5
[[pages]]
id = "home"
[[pages]]
id = "search"
search = true
[[pages]]
id = "a"
title = "Notes"
text = "reinforcement learning mentioned once"
[[pages]]
id = "b"
title = "Reinforcement Learning survey"
"#;
        let s = Scenario::from_toml_str(src).unwrap();
        assert_eq!(s.graph.search("Reinforcement learning"), vec!["b", "a"]);
        assert!(s.graph.search("  ").is_empty());
    }
}
