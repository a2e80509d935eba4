//! Versioned prompt templates and the `[tags]` header shared by every
//! prompt. Placeholders are written `{{name}}`.

use std::collections::BTreeMap;
use std::fmt::Write as _;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Template {
    pub name: &'static str,
    pub version: u32,
    pub text: &'static str,
}

macro_rules! template {
    ($name:literal, $file:literal) => {
        Template {
            name: $name,
            version: 1,
            text: include_str!(concat!("../assets/prompts/", $file)),
        }
    };
}

pub const PLANNER: Template = template!("planner", "planner.v1.txt");
pub const EXPAND: Template = template!("expand", "expand.v1.txt");
pub const GUARDIAN: Template = template!("guardian", "guardian.v1.txt");
pub const REFLECTOR: Template = template!("reflector", "reflector.v1.txt");
pub const HEURISTICS: Template = template!("heuristics", "heuristics.v1.txt");
pub const CRITIQUE: Template = template!("critique", "critique.v1.txt");
pub const GOAL_WRITER: Template = template!("goal_writer", "goal_writer.v1.txt");

pub const ALL: [Template; 7] = [PLANNER, EXPAND, GUARDIAN, REFLECTOR, HEURISTICS, CRITIQUE, GOAL_WRITER];

/// Fills every `{{key}}` placeholder; unknown placeholders are left intact.
pub fn render(template: &Template, vars: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.text.len() + 256);
    let mut rest = template.text;
    while let Some(start) = rest.find("{{") {
        out.push_str(&rest[..start]);
        let after = &rest[start + 2..];
        match after.find("}}") {
            Some(end) => {
                let key = &after[..end];
                match vars.iter().find(|(k, _)| *k == key) {
                    Some((_, v)) => out.push_str(v),
                    None => {
                        out.push_str("{{");
                        out.push_str(key);
                        out.push_str("}}");
                    }
                }
                rest = &after[end + 2..];
            }
            None => {
                out.push_str(&rest[start..]);
                rest = "";
            }
        }
    }
    out.push_str(rest);
    out
}

/// Placeholder names used by a template, in order of first appearance.
pub fn placeholders(template: &Template) -> Vec<&'static str> {
    let mut names = Vec::new();
    let mut rest = template.text;
    while let Some(start) = rest.find("{{") {
        let after = &rest[start + 2..];
        let Some(end) = after.find("}}") else { break };
        if !names.contains(&&after[..end]) {
            names.push(&after[..end]);
        }
        rest = &after[end + 2..];
    }
    names
}

/// Ordered `key=value` pairs rendered on the first prompt line. Values are
/// sanitised so the header always parses back.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Tags(Vec<(String, String)>);

impl Tags {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, key: &str, value: impl ToString) -> Self {
        self.set(key, value);
        self
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        let value: String = value
            .to_string()
            .chars()
            .map(|c| match c {
                ';' | '\n' | '\r' => ',',
                other => other,
            })
            .collect();
        match self.0.iter_mut().find(|(k, _)| k == key) {
            Some(slot) => slot.1 = value.trim().to_string(),
            None => self.0.push((key.to_string(), value.trim().to_string())),
        }
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for (i, (k, v)) in self.0.iter().enumerate() {
            if i > 0 {
                out.push_str("; ");
            }
            let _ = write!(out, "{k}={v}");
        }
        out
    }

    /// Parses the `[tags]` header of a prompt, if present.
    pub fn parse(prompt: &str) -> BTreeMap<String, String> {
        let Some(line) = prompt.lines().find_map(|l| l.strip_prefix("[tags]")) else {
            return BTreeMap::new();
        };
        line.split(';')
            .filter_map(|pair| {
                let (k, v) = pair.split_once('=')?;
                Some((k.trim().to_string(), v.trim().to_string()))
            })
            .collect()
    }
}
