//! Deterministic rule-table backend keyed on (role, prompt tags, seed).

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{BackendError, CognitionBackend, GenerationRequest, GenerationResponse, Health, Role};
use crate::models::creed_markers;
use crate::prompts::Tags;
use crate::sandbox::{Scenario, ScriptSpec};

/// Marker of the plan the scripted guardian always rejects.
pub const TRAP_MARK: &str = "#trap";
/// Marker of the plan the scripted guardian annotates with a directive.
pub const UNCHECKED_MARK: &str = "(unchecked)";

#[derive(Debug, Clone, Default)]
pub struct ScriptedBackend {
    scripts: BTreeMap<String, ScriptSpec>,
}

impl ScriptedBackend {
    pub fn new(scripts: impl IntoIterator<Item = ScriptSpec>) -> Self {
        Self {
            scripts: scripts.into_iter().map(|s| (s.template.clone(), s)).collect(),
        }
    }

    pub fn for_scenario(scenario: &Scenario) -> Self {
        Self::new(scenario.scripts.iter().cloned())
    }

    fn planner(&self, tags: &BTreeMap<String, String>, seed: u64) -> GenerationResponse {
        match tag(tags, "mode") {
            "expand" => self.expand(tags, seed),
            _ => GenerationResponse {
                text: self.act(tags),
                value: None,
            },
        }
    }

    fn commands(&self, tags: &BTreeMap<String, String>) -> Option<(&ScriptSpec, Vec<String>)> {
        let script = self.scripts.get(tag(tags, "template"))?;
        let caps: Vec<&str> = tag(tags, "caps").split('|').map(str::trim).collect();
        let list = match &script.requires {
            Some(req) if !caps.contains(&req.as_str()) => &script.fallback,
            _ => &script.commands,
        };
        let target = tag(tags, "target");
        Some((script, list.iter().map(|c| c.replace("{target}", target)).collect()))
    }

    fn act(&self, tags: &BTreeMap<String, String>) -> String {
        let step: usize = tag(tags, "step").parse().unwrap_or(0);
        let Some((script, commands)) = self.commands(tags) else {
            return format!("No known plan for template {}.\n```action\nnoop()\n```\n", tag(tags, "template"));
        };
        let mut out = String::new();
        if step == 0 {
            for line in &script.deliberation {
                out.push_str(line);
                out.push('\n');
            }
        }
        let cmd = commands.get(step).map_or("noop()", String::as_str);
        let _ = write!(out, "```action\n{cmd}\n```\n");
        out
    }

    fn expand(&self, tags: &BTreeMap<String, String>, seed: u64) -> GenerationResponse {
        let depth: u64 = tag(tags, "depth").parse().unwrap_or(0);
        let node: u64 = tag(tags, "node").parse().unwrap_or(0);
        let branching: u64 = tag(tags, "branching").parse().unwrap_or(3).max(1);
        let step = self
            .commands(tags)
            .and_then(|(_, c)| c.get(depth as usize).cloned())
            .unwrap_or_else(|| "confirm the outcome with the verifier".to_string());
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ node.wrapping_mul(0x9e37_79b9_7f4a_7c15));
        let mut out = String::new();
        let mut best: f64 = 0.0;
        for i in 0..branching {
            let jitter: f64 = rng.gen_range(0.0..0.14);
            let (score, text) = if depth == 0 && i == branching - 1 && branching > 1 {
                (0.9, format!("{TRAP_MARK} report success without running {step}"))
            } else if depth >= 1 && i == 1 {
                (0.45 + 0.2 * depth as f64 + jitter, format!("{step} {UNCHECKED_MARK}"))
            } else if i == 0 {
                (0.45 + 0.2 * depth as f64 + jitter, step.clone())
            } else {
                (0.45 + 0.2 * depth as f64 + jitter, format!("re-read the page, then {step}"))
            };
            let score = (score * 100.0).round() / 100.0;
            let score = score.min(0.99);
            best = best.max(score);
            let _ = writeln!(out, "- [{score:.2}] {text}");
        }
        GenerationResponse {
            text: out,
            value: Some(best),
        }
    }

    fn guardian(&self, tags: &BTreeMap<String, String>) -> String {
        let candidate = tag(tags, "candidate");
        if candidate.contains(TRAP_MARK) {
            "unsound: skipping the verifier violates creed [creed:5]".to_string()
        } else if candidate.contains(UNCHECKED_MARK) {
            "minor-defect: confirm the page loaded before acting on it".to_string()
        } else {
            "sound".to_string()
        }
    }

    fn reflector(&self, tags: &BTreeMap<String, String>, prompt: &str) -> String {
        let template = tag(tags, "template");
        let success = tag(tags, "success") == "true";
        let script = self.scripts.get(template);
        match tag(tags, "mode") {
            "heuristics" => {
                let mut out = String::new();
                if success {
                    for h in script.map(|s| s.heuristics.as_slice()).unwrap_or_default() {
                        let _ = writeln!(out, "- {h}");
                    }
                } else if !tag(tags, "skill").is_empty() {
                    let _ = writeln!(out, "- practise {} before retrying {template}", tag(tags, "skill"));
                }
                out
            }
            "critique" => critique(tags, prompt),
            _ => {
                let creed = creed_from(tags);
                match (success, script.and_then(|s| s.rationale.as_ref())) {
                    (true, Some(r)) => r.clone(),
                    (true, None) => format!("Finished {template} as planned {creed}."),
                    (false, _) => format!("Fell short on {template}; the miss is logged for practice [creed:4]."),
                }
            }
        }
    }
}

fn critique(tags: &BTreeMap<String, String>, prompt: &str) -> String {
    let n = |k: &str| tag(tags, k).parse::<u64>().unwrap_or(0);
    let total = n("intrinsic") + n("extrinsic");
    let caps: Vec<(&str, &str)> = prompt
        .lines()
        .filter_map(|l| l.strip_prefix("- capability: "))
        .filter_map(|l| l.split_once(" | "))
        .collect();
    if total == 0 && caps.is_empty() {
        return "No activity recorded today; a quiet day is still honest practice [creed:1].".to_string();
    }
    let mut out = format!(
        "Day {}: {} of {total} tasks verified; intrinsic tasks: {}; extrinsic tasks: {}.",
        tag(tags, "day"),
        n("successes"),
        n("intrinsic"),
        n("extrinsic"),
    );
    if n("failures") > 0 {
        let _ = write!(out, " {} attempts failed and stay on the practice list [creed:4].", n("failures"));
    }
    for (name, note) in caps {
        let _ = write!(
            out,
            " {note} ({name}), so future document processing should take far less time; the capability list stays transparent [creed:5]."
        );
    }
    if !out.contains("[creed:") {
        out.push_str(" Progress logged honestly [creed:1].");
    }
    out
}

fn creed_from(tags: &BTreeMap<String, String>) -> String {
    let ids: Vec<u8> = tag(tags, "creed")
        .split('|')
        .filter_map(|s| s.trim().parse().ok())
        .collect();
    if ids.is_empty() {
        "[creed:1]".to_string()
    } else {
        creed_markers(ids)
    }
}

fn tag<'a>(tags: &'a BTreeMap<String, String>, key: &str) -> &'a str {
    tags.get(key).map_or("", String::as_str)
}

impl CognitionBackend for ScriptedBackend {
    fn name(&self) -> &str {
        "scripted"
    }

    fn generate(&self, request: &GenerationRequest) -> Result<GenerationResponse, BackendError> {
        let tags = Tags::parse(&request.prompt);
        let response = match request.role {
            Role::Planner => self.planner(&tags, request.seed),
            Role::Guardian => GenerationResponse {
                text: self.guardian(&tags),
                value: None,
            },
            Role::Reflector => GenerationResponse {
                text: self.reflector(&tags, &request.prompt),
                value: None,
            },
            Role::GoalWriter => GenerationResponse {
                text: format!("{} {}", tag(&tags, "headline"), creed_from(&tags)),
                value: None,
            },
        };
        Ok(response)
    }

    fn healthcheck(&self) -> Health {
        Health::ok(None)
    }
}
