//! Self-model (creed, capabilities, intrinsic state, skill windows) and the
//! single-user belief state.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kernel::{Minutes, Seconds};
use crate::sandbox::{Activity, Emotion, UserFeedEntry};

pub const SKILL_WINDOW: usize = 10;
pub const GAP_FAILURES: usize = 3;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ModelError {
    #[error("text references no creed (expected a `[creed:N]` marker with N in 1..=5)")]
    CreedViolation,
    #[error("feed entry at minute {got} is not newer than the last processed entry ({last})")]
    OutOfOrder { got: Minutes, last: Minutes },
    #[error("malformed self-model property `{0}`")]
    Property(String),
}

/// Creed ids referenced through `[creed:N]` markers; an empty set is a
/// violation.
pub fn check_creed(text: &str) -> Result<BTreeSet<u8>, ModelError> {
    let mut ids = BTreeSet::new();
    let mut rest = text;
    while let Some(pos) = rest.find("[creed:") {
        rest = &rest[pos + "[creed:".len()..];
        let Some(end) = rest.find(']') else { break };
        if let Ok(n) = rest[..end].trim().parse::<u8>() {
            if (1..=5).contains(&n) {
                ids.insert(n);
            }
        }
        rest = &rest[end..];
    }
    if ids.is_empty() {
        Err(ModelError::CreedViolation)
    } else {
        Ok(ids)
    }
}

pub fn creed_markers(ids: impl IntoIterator<Item = u8>) -> String {
    ids.into_iter().map(|n| format!("[creed:{n}]")).collect::<Vec<_>>().join(" ")
}

/// Five identity sentences, fixed at construction.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Creed {
    sentences: [String; 5],
}

impl Creed {
    pub fn new(sentences: [String; 5]) -> Self {
        Self { sentences }
    }

    /// Sentence by 1-based id.
    pub fn sentence(&self, id: u8) -> Option<&str> {
        (1..=5)
            .contains(&id)
            .then(|| self.sentences[usize::from(id) - 1].as_str())
    }

    pub fn sentences(&self) -> &[String; 5] {
        &self.sentences
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Capability {
    pub name: String,
    pub note: String,
    pub acquired_at: Seconds,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Drives {
    pub curiosity: f64,
    pub mastery: f64,
    pub relatedness: f64,
}

impl Default for Drives {
    fn default() -> Self {
        Self {
            curiosity: 0.5,
            mastery: 0.5,
            relatedness: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CapabilityGap {
    pub skill: String,
    pub failures: usize,
    pub attempts: usize,
    pub target: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelfModel {
    creed: Creed,
    capabilities: Vec<Capability>,
    beta: f64,
    drives: Drives,
    skills: BTreeMap<String, VecDeque<bool>>,
}

impl SelfModel {
    pub fn new(creed: Creed, beta: f64) -> Self {
        Self {
            creed,
            capabilities: Vec::new(),
            beta: beta.clamp(0.0, 1.0),
            drives: Drives::default(),
            skills: BTreeMap::new(),
        }
    }

    pub fn creed(&self) -> &Creed {
        &self.creed
    }

    pub fn capabilities(&self) -> &[Capability] {
        &self.capabilities
    }

    pub fn has_capability(&self, name: &str) -> bool {
        self.capabilities.iter().any(|c| c.name == name)
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn set_beta(&mut self, beta: f64) {
        self.beta = beta.clamp(0.0, 1.0);
    }

    pub fn drives(&self) -> Drives {
        self.drives
    }

    /// Nudges drive levels towards the latest intrinsic components.
    pub fn update_drives(&mut self, curiosity: f64, mastery: f64, relatedness: f64) {
        let mix = |old: f64, new: f64| (0.8 * old + 0.2 * new.clamp(0.0, 1.0)).clamp(0.0, 1.0);
        self.drives = Drives {
            curiosity: mix(self.drives.curiosity, curiosity),
            mastery: mix(self.drives.mastery, mastery),
            relatedness: mix(self.drives.relatedness, relatedness),
        };
    }

    pub fn record_attempt(&mut self, skill: &str, success: bool) {
        let w = self.skills.entry(skill.to_string()).or_default();
        if w.len() == SKILL_WINDOW {
            w.pop_front();
        }
        w.push_back(success);
    }

    /// Success rate over the sliding window; 0 for unseen skills.
    pub fn proficiency(&self, skill: &str) -> f64 {
        match self.skills.get(skill) {
            Some(w) if !w.is_empty() => w.iter().filter(|s| **s).count() as f64 / w.len() as f64,
            _ => 0.0,
        }
    }

    /// First skill (by name) with at least three failures in its window.
    pub fn detect_gap(&self) -> Option<CapabilityGap> {
        self.skills.iter().find_map(|(skill, w)| {
            let failures = w.iter().filter(|s| !**s).count();
            (failures >= GAP_FAILURES).then(|| CapabilityGap {
                skill: skill.clone(),
                failures,
                attempts: w.len(),
                target: format!("master the {skill}"),
            })
        })
    }

    /// Appends a capability; duplicates are ignored with a warning. The
    /// window of the skill it remedies starts over.
    pub fn add_capability(&mut self, name: &str, note: &str, at: Seconds, remedies: Option<&str>) -> bool {
        if self.has_capability(name) {
            log::warn!("capability `{name}` already present; ignoring");
            return false;
        }
        self.capabilities.push(Capability {
            name: name.to_string(),
            note: note.to_string(),
            acquired_at: at,
        });
        if let Some(skill) = remedies {
            self.skills.remove(skill);
        }
        true
    }

    /// Property-dictionary rendering persisted in the journal.
    pub fn to_properties(&self) -> String {
        let mut out = String::from("# Self-model\n\n");
        for (i, s) in self.creed.sentences.iter().enumerate() {
            let _ = writeln!(out, "- creed.{}: {s}", i + 1);
        }
        let _ = writeln!(out, "- beta: {:.4}", self.beta);
        let _ = writeln!(out, "- drive.curiosity: {:.4}", self.drives.curiosity);
        let _ = writeln!(out, "- drive.mastery: {:.4}", self.drives.mastery);
        let _ = writeln!(out, "- drive.relatedness: {:.4}", self.drives.relatedness);
        for c in &self.capabilities {
            let _ = writeln!(out, "- capability: {} | {} | {}", c.name, c.acquired_at, c.note);
        }
        for (skill, w) in &self.skills {
            let bits: String = w.iter().map(|s| if *s { '1' } else { '0' }).collect();
            let _ = writeln!(out, "- skill.{skill}: {bits}");
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KnowledgeLevel {
    Novice,
    Intermediate,
    Expert,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserModel {
    pub user_id: String,
    pub inferred_goals: Vec<String>,
    pub knowledge: KnowledgeLevel,
    pub emotion: Option<Emotion>,
    pub activity: Option<Activity>,
    pub idle_minutes: u32,
    pub stress_streak: Minutes,
    pub notes: Vec<String>,
    last: Option<UserFeedEntry>,
    docs_sessions: u32,
}

impl UserModel {
    pub fn new(user_id: impl Into<String>) -> Self {
        Self {
            user_id: user_id.into(),
            inferred_goals: Vec::new(),
            knowledge: KnowledgeLevel::Novice,
            emotion: None,
            activity: None,
            idle_minutes: 0,
            stress_streak: 0,
            notes: Vec::new(),
            last: None,
            docs_sessions: 0,
        }
    }

    pub fn last_entry(&self) -> Option<&UserFeedEntry> {
        self.last.as_ref()
    }

    pub fn update(&mut self, entry: &UserFeedEntry) -> Result<(), ModelError> {
        let spacing = match &self.last {
            Some(prev) if entry.timestamp <= prev.timestamp => {
                return Err(ModelError::OutOfOrder {
                    got: entry.timestamp,
                    last: prev.timestamp,
                })
            }
            Some(prev) => entry.timestamp - prev.timestamp,
            None => crate::kernel::FEED_CADENCE,
        };
        if entry.emotion == Emotion::Stressed {
            self.stress_streak += spacing;
        } else {
            self.stress_streak = 0;
        }
        let was_reading = self.activity == Some(Activity::ReadingDocs);
        if entry.activity == Activity::ReadingDocs && !was_reading {
            self.docs_sessions += 1;
            self.inferred_goals
                .push(format!("learning interest: reading documentation at minute {}", entry.timestamp));
            if self.docs_sessions >= 3 && self.knowledge == KnowledgeLevel::Novice {
                self.knowledge = KnowledgeLevel::Intermediate;
                self.notes.push("user studies documentation regularly".to_string());
            }
        }
        self.emotion = Some(entry.emotion);
        self.activity = Some(entry.activity);
        self.idle_minutes = entry.idle_minutes;
        self.last = Some(*entry);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sandbox::DEFAULT_CREED;

    fn model() -> SelfModel {
        SelfModel::new(Creed::new(DEFAULT_CREED.map(String::from)), 0.5)
    }

    fn entry(t: Minutes, emotion: Emotion, activity: Activity) -> UserFeedEntry {
        UserFeedEntry {
            timestamp: t,
            emotion,
            activity,
            idle_minutes: 0,
        }
    }

    #[test]
    fn creed_markers_parse_as_a_set() {
        assert_eq!(check_creed("I acted with care [creed:2] today").unwrap(), BTreeSet::from([2]));
        assert_eq!(check_creed("[creed:1][creed:1] and [creed:3]").unwrap(), BTreeSet::from([1, 3]));
        assert_eq!(check_creed("no marker here"), Err(ModelError::CreedViolation));
        assert_eq!(check_creed("[creed:9] [creed:x]"), Err(ModelError::CreedViolation));
    }

    #[test]
    fn creed_sentences_are_one_based() {
        let m = model();
        assert_eq!(m.creed().sentence(3), Some(DEFAULT_CREED[2]));
        assert_eq!(m.creed().sentence(0), None);
        assert_eq!(m.creed().sentence(6), None);
    }

    #[test]
    fn gap_needs_three_failures_in_window() {
        let mut m = model();
        m.record_attempt("new API", false);
        m.record_attempt("new API", false);
        assert!(m.detect_gap().is_none());
        m.record_attempt("new API", false);
        let gap = m.detect_gap().unwrap();
        assert_eq!(gap.target, "master the new API");
        assert_eq!(gap.failures, 3);

        let mut ok = model();
        for _ in 0..10 {
            ok.record_attempt("search", true);
        }
        assert!(ok.detect_gap().is_none());
    }

    #[test]
    fn failures_slide_out_of_the_window() {
        let mut m = model();
        for _ in 0..3 {
            m.record_attempt("ocr", false);
        }
        for _ in 0..8 {
            m.record_attempt("ocr", true);
        }
        assert!(m.detect_gap().is_none());
    }

    #[test]
    fn capabilities_are_append_only_and_deduplicated() {
        let mut m = model();
        assert!(m.add_capability("OCR API proficiency", "reads scans", 10, None));
        assert!(!m.add_capability("OCR API proficiency", "again", 20, None));
        assert_eq!(m.capabilities().len(), 1);
        assert!(m.to_properties().contains("- capability: OCR API proficiency | 10 | reads scans"));
    }

    #[test]
    fn granting_a_capability_clears_its_gap() {
        let mut m = model();
        for _ in 0..3 {
            m.record_attempt("OCR API", false);
        }
        assert!(m.detect_gap().is_some());
        m.add_capability("OCR API proficiency", "reads scans", 10, Some("OCR API"));
        assert!(m.detect_gap().is_none());
    }

    #[test]
    fn beta_is_clamped() {
        let mut m = model();
        m.set_beta(1.7);
        assert_eq!(m.beta(), 1.0);
    }

    #[test]
    fn stress_streak_accumulates_and_resets() {
        let mut u = UserModel::new("user");
        for t in (815..=870).step_by(5) {
            u.update(&entry(t, Emotion::Stressed, Activity::Idle)).unwrap();
        }
        assert_eq!(u.stress_streak, 60);
        u.update(&entry(875, Emotion::Calm, Activity::Idle)).unwrap();
        assert_eq!(u.stress_streak, 0);
    }

    #[test]
    fn out_of_order_is_rejected() {
        let mut u = UserModel::new("user");
        u.update(&entry(10, Emotion::Calm, Activity::Idle)).unwrap();
        assert_eq!(
            u.update(&entry(10, Emotion::Calm, Activity::Idle)),
            Err(ModelError::OutOfOrder { got: 10, last: 10 })
        );
    }

    #[test]
    fn reading_docs_adds_a_learning_note() {
        let mut u = UserModel::new("user");
        u.update(&entry(545, Emotion::Neutral, Activity::ReadingDocs)).unwrap();
        u.update(&entry(550, Emotion::Neutral, Activity::ReadingDocs)).unwrap();
        assert_eq!(u.inferred_goals.len(), 1);
        assert!(u.inferred_goals[0].starts_with("learning interest"));
    }
}
