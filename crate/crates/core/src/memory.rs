//! Episodic store: resident summaries with hashed bag-of-words embeddings,
//! raw episode logs deserialized only for relevant hits, successful
//! reasoning traces indexed by signature, and a task-scoped cache.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kernel::{Command, Goal, GoalId, Seconds};
use crate::sandbox::{Activity, Emotion, UserFeedEntry};

pub const EMBED_DIM: usize = 256;
pub const DEFAULT_THETA_REL: f64 = 0.75;
pub const DEFAULT_TOP_K: usize = 5;
pub const IDLE_BUCKET_MINUTES: u32 = 15;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MemoryError {
    #[error("top-k must be at least 1")]
    ZeroK,
    #[error("raw trace of record {id} is unreadable: {reason}")]
    CorruptRaw { id: u64, reason: String },
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes
        .iter()
        .fold(FNV_OFFSET, |h, b| (h ^ u64::from(*b)).wrapping_mul(FNV_PRIME))
}

pub fn tokens(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
}

/// Hashed bag-of-words vector, L2-normalised unless all-zero.
pub fn embed(text: &str) -> Vec<f64> {
    let mut v = vec![0.0; EMBED_DIM];
    for tok in tokens(text) {
        v[(fnv1a(tok.as_bytes()) % EMBED_DIM as u64) as usize] += 1.0;
    }
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
    v
}

/// Cosine similarity clamped to [0, 1]; zero when either side is zero.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        (dot / (na * nb)).clamp(0.0, 1.0)
    }
}

/// Matching key for reusable reasoning traces.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TraceSignature {
    pub template: String,
    pub emotion: Option<Emotion>,
    pub activity: Option<Activity>,
    pub idle_bucket: u32,
}

impl TraceSignature {
    pub fn new(goal: &Goal, feed: Option<&UserFeedEntry>) -> Self {
        Self {
            template: goal.template.clone(),
            emotion: feed.map(|f| f.emotion),
            activity: feed.map(|f| f.activity),
            idle_bucket: feed.map_or(0, |f| f.idle_minutes / IDLE_BUCKET_MINUTES),
        }
    }
}

impl fmt::Display for TraceSignature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let emotion = self.emotion.map_or("-", Emotion::as_str);
        let activity = self.activity.map_or("-", Activity::as_str);
        write!(f, "{}/{}/{}/idle-{}", self.template, emotion, activity, self.idle_bucket)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceOutcome {
    pub success: bool,
    pub message: String,
    pub fused: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReasoningTrace {
    pub goal: Goal,
    pub context: String,
    pub chain: Vec<String>,
    pub commands: Vec<Command>,
    pub outcome: TraceOutcome,
    pub signature: TraceSignature,
}

/// Raw log of a finished episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLog {
    pub episode: u64,
    pub goal: Goal,
    pub observations: Vec<String>,
    pub commands: Vec<Command>,
    pub rewards: Vec<f64>,
    pub chain: Vec<String>,
    pub success: bool,
    pub message: String,
}

/// Resident part of a memory record; the raw log stays serialized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodicRecord {
    pub id: u64,
    pub timestamp: Seconds,
    pub markers: BTreeSet<String>,
    pub summary: String,
    #[serde(skip)]
    pub embedding: Vec<f64>,
    raw: String,
}

impl EpisodicRecord {
    pub fn load_raw(&self) -> Result<EpisodeLog, MemoryError> {
        serde_json::from_str(&self.raw).map_err(|e| MemoryError::CorruptRaw {
            id: self.id,
            reason: e.to_string(),
        })
    }

    pub fn raw_json(&self) -> &str {
        &self.raw
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Hit {
    pub record: EpisodicRecord,
    pub score: f64,
    /// Present iff `score >= θ_rel`.
    pub raw: Option<EpisodeLog>,
}

impl Hit {
    pub fn raw_loaded(&self) -> bool {
        self.raw.is_some()
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RetrievalResult {
    pub hits: Vec<Hit>,
    pub theta_rel: f64,
}

impl RetrievalResult {
    pub fn is_empty(&self) -> bool {
        self.hits.is_empty()
    }

    /// Lazy-load law over every hit.
    pub fn lazy_law_holds(&self) -> bool {
        self.hits.iter().all(|h| h.raw_loaded() == (h.score >= self.theta_rel))
    }
}

#[derive(Debug, Clone, Default)]
pub struct EpisodicStore {
    records: Vec<EpisodicRecord>,
    ids: BTreeSet<u64>,
    traces: BTreeMap<TraceSignature, ReasoningTrace>,
}

impl EpisodicStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[EpisodicRecord] {
        &self.records
    }

    pub fn trace(&self, signature: &TraceSignature) -> Option<&ReasoningTrace> {
        self.traces.get(signature)
    }

    pub fn trace_count(&self) -> usize {
        self.traces.len()
    }

    /// Appends one record for a finished episode. Successful episodes also
    /// index their reasoning trace. Re-committing an episode id is a no-op
    /// and returns `None`.
    pub fn commit(
        &mut self,
        log: EpisodeLog,
        timestamp: Seconds,
        signature: TraceSignature,
        markers: BTreeSet<String>,
    ) -> Option<&EpisodicRecord> {
        if !self.ids.insert(log.episode) {
            return None;
        }
        let summary = summarize(&log);
        if log.success {
            self.traces.insert(
                signature.clone(),
                ReasoningTrace {
                    goal: log.goal.clone(),
                    context: signature.to_string(),
                    chain: log.chain.clone(),
                    commands: log.commands.clone(),
                    outcome: TraceOutcome {
                        success: true,
                        message: log.message.clone(),
                        fused: log.rewards.last().copied().unwrap_or(0.0),
                    },
                    signature,
                },
            );
        }
        let raw = serde_json::to_string(&log).expect("episode log serializes");
        self.records.push(EpisodicRecord {
            id: log.episode,
            timestamp,
            markers,
            embedding: embed(&summary),
            summary,
            raw,
        });
        self.records.last()
    }

    /// Reinstates a persisted record, e.g. on resume.
    pub fn restore(&mut self, id: u64, timestamp: Seconds, markers: BTreeSet<String>, summary: String, raw: String) -> Result<(), MemoryError> {
        if !self.ids.insert(id) {
            return Ok(());
        }
        let record = EpisodicRecord {
            id,
            timestamp,
            markers,
            embedding: embed(&summary),
            summary,
            raw,
        };
        let log = record.load_raw()?;
        if log.success {
            let feed = record.markers.iter().find_map(|m| m.strip_prefix("signature:"));
            if let Some(sig) = feed.and_then(parse_signature) {
                self.traces.insert(
                    sig.clone(),
                    ReasoningTrace {
                        goal: log.goal.clone(),
                        context: sig.to_string(),
                        chain: log.chain.clone(),
                        commands: log.commands.clone(),
                        outcome: TraceOutcome {
                            success: true,
                            message: log.message.clone(),
                            fused: log.rewards.last().copied().unwrap_or(0.0),
                        },
                        signature: sig,
                    },
                );
            }
        }
        self.records.push(record);
        Ok(())
    }

    /// Top-k records by cosine relevance, ties by record id.
    pub fn retrieve(&self, query: &str, k: usize, theta_rel: f64) -> Result<RetrievalResult, MemoryError> {
        if k == 0 {
            return Err(MemoryError::ZeroK);
        }
        let q = embed(query);
        let mut scored: Vec<(f64, &EpisodicRecord)> = self.records.iter().map(|r| (cosine(&q, &r.embedding), r)).collect();
        scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.id.cmp(&b.1.id)));
        let hits = scored
            .into_iter()
            .take(k)
            .map(|(score, r)| {
                let raw = if score >= theta_rel { Some(r.load_raw()?) } else { None };
                Ok(Hit {
                    record: r.clone(),
                    score,
                    raw,
                })
            })
            .collect::<Result<_, MemoryError>>()?;
        Ok(RetrievalResult { hits, theta_rel })
    }
}

fn parse_signature(s: &str) -> Option<TraceSignature> {
    let mut parts = s.rsplitn(4, '/');
    let idle = parts.next()?.strip_prefix("idle-")?.parse().ok()?;
    let activity = parts.next()?;
    let emotion = parts.next()?;
    let template = parts.next()?;
    let parse_e = |e: &str| serde_json::from_str::<Emotion>(&format!("\"{e}\"")).ok();
    let parse_a = |a: &str| serde_json::from_str::<Activity>(&format!("\"{a}\"")).ok();
    Some(TraceSignature {
        template: template.to_string(),
        emotion: if emotion == "-" { None } else { Some(parse_e(emotion)?) },
        activity: if activity == "-" { None } else { Some(parse_a(activity)?) },
        idle_bucket: idle,
    })
}

pub fn summarize(log: &EpisodeLog) -> String {
    let outcome = if log.success { "succeeded" } else { "failed" };
    let plan: Vec<String> = log.commands.iter().map(Command::to_string).collect();
    format!(
        "{} goal {} {outcome}: {} | plan: {}",
        log.goal.origin().as_str(),
        log.goal.template,
        strip_markers(&log.goal.text),
        if plan.is_empty() { "none".to_string() } else { plan.join(" -> ") }
    )
}

fn strip_markers(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut rest = text;
    while let Some(start) = rest.find("[creed:") {
        out.push_str(&rest[..start]);
        match rest[start..].find(']') {
            Some(end) => rest = &rest[start + end + 1..],
            None => {
                rest = &rest[start..];
                break;
            }
        }
    }
    out.push_str(rest);
    out.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Working records of active goals, evicted wholesale at goal completion.
#[derive(Debug, Clone)]
pub struct TaskCache {
    capacity: usize,
    entries: BTreeMap<GoalId, Vec<u64>>,
}

impl TaskCache {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity: capacity.max(1),
            entries: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, goal: GoalId, records: impl IntoIterator<Item = u64>) {
        if !self.entries.contains_key(&goal) && self.entries.len() == self.capacity {
            let oldest = *self.entries.keys().next().expect("cache at capacity is non-empty");
            self.entries.remove(&oldest);
        }
        let slot = self.entries.entry(goal).or_default();
        for id in records {
            if !slot.contains(&id) {
                slot.push(id);
            }
        }
    }

    pub fn get(&self, goal: GoalId) -> Option<&[u64]> {
        self.entries.get(&goal).map(Vec::as_slice)
    }

    pub fn evict(&mut self, goal: GoalId) -> Option<Vec<u64>> {
        self.entries.remove(&goal)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::Origin;

    fn log(id: u64, text: &str, success: bool) -> EpisodeLog {
        EpisodeLog {
            episode: id,
            goal: Goal::new(GoalId(id), text, Origin::Intrinsic, "stress-relief"),
            observations: vec![],
            commands: vec![Command::open("wellness/breathing-game").unwrap()],
            rewards: vec![0.9],
            chain: vec!["look at the feed".into()],
            success,
            message: "done".into(),
        }
    }

    fn feed(emotion: Emotion, idle: u32) -> UserFeedEntry {
        UserFeedEntry {
            timestamp: 860,
            emotion,
            activity: Activity::Idle,
            idle_minutes: idle,
        }
    }

    #[test]
    fn empty_text_embeds_to_zero() {
        assert!(embed("").iter().all(|x| *x == 0.0));
        assert_eq!(embed("breathing game"), embed("breathing game"));
    }

    #[test]
    fn related_phrases_score_higher() {
        let g = embed("breathing game");
        assert!(cosine(&g, &embed("breathing exercise")) > cosine(&g, &embed("arxiv paper")));
    }

    #[test]
    fn signatures_bucket_idle_time() {
        let goal = Goal::new(GoalId(1), "x", Origin::Intrinsic, "stress-relief");
        let a = TraceSignature::new(&goal, Some(&feed(Emotion::Stressed, 60)));
        assert_eq!(a, TraceSignature::new(&goal, Some(&feed(Emotion::Stressed, 62))));
        assert_ne!(a, TraceSignature::new(&goal, Some(&feed(Emotion::Calm, 60))));
        assert_eq!(parse_signature(&a.to_string()), Some(a));
    }

    #[test]
    fn commit_indexes_only_successes_and_is_idempotent() {
        let goal = Goal::new(GoalId(1), "x", Origin::Intrinsic, "stress-relief");
        let sig = TraceSignature::new(&goal, Some(&feed(Emotion::Stressed, 60)));
        let mut store = EpisodicStore::new();
        assert!(store.commit(log(1, "fail", false), 10, sig.clone(), BTreeSet::new()).is_some());
        assert!(store.trace(&sig).is_none());
        assert!(store.commit(log(2, "ok", true), 20, sig.clone(), BTreeSet::new()).is_some());
        assert_eq!(store.trace(&sig).unwrap().commands.len(), 1);
        assert!(store.commit(log(2, "ok", true), 20, sig, BTreeSet::new()).is_none());
        assert_eq!(store.len(), 2);
    }

    #[test]
    fn self_query_scores_one_and_loads_raw() {
        let goal = Goal::new(GoalId(1), "x", Origin::Intrinsic, "stress-relief");
        let sig = TraceSignature::new(&goal, None);
        let mut store = EpisodicStore::new();
        assert!(store.retrieve("anything", 5, 0.75).unwrap().is_empty());
        assert_eq!(store.retrieve("anything", 0, 0.75), Err(MemoryError::ZeroK));
        let summary = store.commit(log(7, "calm the user", true), 1, sig, BTreeSet::new()).unwrap().summary.clone();
        let r = store.retrieve(&summary, 5, 0.75).unwrap();
        assert_eq!(r.hits[0].record.id, 7);
        assert!((r.hits[0].score - 1.0).abs() < 1e-12);
        assert!(r.hits[0].raw_loaded());
        assert_eq!(r.hits[0].raw.as_ref().unwrap().episode, 7);
        assert!(r.lazy_law_holds());
    }

    #[test]
    fn summaries_drop_creed_markers() {
        assert_eq!(strip_markers("help [creed:2] the user [creed:1]"), "help the user");
    }

    #[test]
    fn task_cache_is_bounded() {
        let mut c = TaskCache::new(2);
        c.insert(GoalId(1), [1, 2]);
        c.insert(GoalId(2), [3]);
        c.insert(GoalId(3), [4]);
        assert_eq!(c.len(), 2);
        assert!(c.get(GoalId(1)).is_none());
        assert_eq!(c.evict(GoalId(2)), Some(vec![3]));
        assert_eq!(c.len(), 1);
    }
}
