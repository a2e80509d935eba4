//! Growth-Journal: the single filesystem facade. Every file the runtime
//! persists lives under the journal root and is written through
//! [`GrowthJournal`].
//!
//! Day files `day-NNN.md` hold entries in this exact layout (UTF-8, LF):
//!
//! ```text
//! ---
//! timestamp: 860
//! kind: goal
//! goal_id: g-0003
//! ---
//! body line 1
//! body line 2
//! ```
//!
//! `goal_id` is `-` when absent. The body is split on `\n` and every line is
//! written followed by `\n`; a body line starting with `---` or `\` gets an
//! extra leading `\`. Structured facts are body lines of the form
//! `- key: value`.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::{self, OpenOptions};
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{CognitionBackend, GenerationRequest, Role};
use crate::kernel::{GoalId, Minutes, MINUTES_PER_DAY};
use crate::models::{check_creed, Capability, Creed};
use crate::prompts::{self, Tags};

pub const RECORD_DIR: &str = "memory";
pub const SELF_MODEL_FILE: &str = "self-model.md";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum JournalError {
    #[error("journal directory {path} is not writable: {reason}")]
    Unwritable { path: String, reason: String },
    #[error("i/o on {path}: {reason}")]
    Io { path: String, reason: String },
    #[error("{file}:{line}: {reason}")]
    Parse { file: String, line: usize, reason: String },
    #[error("entry at minute {got} precedes the last entry of {file} (minute {last})")]
    OutOfOrder { file: String, got: Minutes, last: Minutes },
}

fn io_err(path: &Path, e: std::io::Error) -> JournalError {
    JournalError::Io {
        path: path.display().to_string(),
        reason: e.to_string(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JournalKind {
    Goal,
    Action,
    Reward,
    Reflection,
    Critique,
    Capability,
}

impl JournalKind {
    pub const ALL: [JournalKind; 6] = [
        JournalKind::Goal,
        JournalKind::Action,
        JournalKind::Reward,
        JournalKind::Reflection,
        JournalKind::Critique,
        JournalKind::Capability,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            JournalKind::Goal => "goal",
            JournalKind::Action => "action",
            JournalKind::Reward => "reward",
            JournalKind::Reflection => "reflection",
            JournalKind::Critique => "critique",
            JournalKind::Capability => "capability",
        }
    }
}

impl fmt::Display for JournalKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for JournalKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        JournalKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown entry kind `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JournalEntry {
    pub timestamp: Minutes,
    pub kind: JournalKind,
    pub goal_id: Option<GoalId>,
    pub body: String,
}

impl JournalEntry {
    pub fn new(timestamp: Minutes, kind: JournalKind, goal_id: Option<GoalId>, body: impl Into<String>) -> Self {
        Self {
            timestamp,
            kind,
            goal_id,
            body: body.into(),
        }
    }

    /// `- key: value` lines of the body; later keys override earlier ones.
    pub fn fields(&self) -> BTreeMap<&str, &str> {
        self.body
            .lines()
            .filter_map(|l| l.strip_prefix("- "))
            .filter_map(|l| l.split_once(": "))
            .collect()
    }

    pub fn field(&self, key: &str) -> Option<&str> {
        self.fields().get(key).copied()
    }

    /// All values of a repeated key, in order.
    pub fn field_all<'a>(&'a self, key: &'a str) -> impl Iterator<Item = &'a str> + 'a {
        self.body
            .lines()
            .filter_map(|l| l.strip_prefix("- "))
            .filter_map(move |l| l.split_once(": ").filter(|(k, _)| *k == key).map(|(_, v)| v))
    }

    pub fn day(&self) -> u64 {
        self.timestamp / MINUTES_PER_DAY
    }

    pub fn render(&self) -> String {
        let goal = self.goal_id.map_or("-".to_string(), |g| g.to_string());
        let mut out = format!("---\ntimestamp: {}\nkind: {}\ngoal_id: {goal}\n---\n", self.timestamp, self.kind);
        for line in self.body.split('\n') {
            if line.starts_with("---") || line.starts_with('\\') {
                out.push('\\');
            }
            out.push_str(line);
            out.push('\n');
        }
        out
    }
}

pub fn day_file_name(day: u64) -> String {
    format!("day-{day:03}.md")
}

fn parse_goal_id(s: &str) -> Option<GoalId> {
    s.strip_prefix("g-")?.parse().ok().map(GoalId)
}

/// Parses the entries of one day file.
pub fn parse_day(file: &str, text: &str) -> Result<Vec<JournalEntry>, JournalError> {
    let err = |line: usize, reason: String| JournalError::Parse {
        file: file.to_string(),
        line,
        reason,
    };
    let mut lines: Vec<&str> = text.split('\n').collect();
    if lines.last() == Some(&"") {
        lines.pop();
    } else if !text.is_empty() {
        return Err(err(lines.len(), "file does not end with a newline".into()));
    }
    let mut out = Vec::new();
    let mut i = 0;
    while i < lines.len() {
        if lines[i] != "---" {
            return Err(err(i + 1, format!("expected `---`, found `{}`", lines[i])));
        }
        if i + 4 >= lines.len() {
            return Err(err(i + 1, "truncated front-matter".into()));
        }
        let header = |offset: usize, key: &str| -> Result<&str, JournalError> {
            lines[i + offset]
                .strip_prefix(key)
                .and_then(|r| r.strip_prefix(": "))
                .ok_or_else(|| err(i + offset + 1, format!("expected `{key}: ...`")))
        };
        let timestamp: Minutes = header(1, "timestamp")?
            .parse()
            .map_err(|_| err(i + 2, "timestamp is not an integer".into()))?;
        let kind: JournalKind = header(2, "kind")?.parse().map_err(|e: String| err(i + 3, e))?;
        let goal = header(3, "goal_id")?;
        let goal_id = if goal == "-" {
            None
        } else {
            Some(parse_goal_id(goal).ok_or_else(|| err(i + 4, format!("bad goal id `{goal}`")))?)
        };
        if lines[i + 4] != "---" {
            return Err(err(i + 5, "front-matter not closed by `---`".into()));
        }
        i += 5;
        let mut body = Vec::new();
        while i < lines.len() && lines[i] != "---" {
            let l = lines[i];
            body.push(l.strip_prefix('\\').unwrap_or(l));
            i += 1;
        }
        if body.is_empty() {
            return Err(err(i, "entry has no body line".into()));
        }
        if let Some(prev) = out.last().map(|e: &JournalEntry| e.timestamp) {
            if timestamp < prev {
                return Err(err(i, format!("timestamp {timestamp} decreases (previous {prev})")));
            }
        }
        out.push(JournalEntry {
            timestamp,
            kind,
            goal_id,
            body: body.join("\n"),
        });
    }
    Ok(out)
}

/// Persisted episodic-memory record.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RecordFile {
    pub id: u64,
    pub timestamp: u64,
    pub markers: Vec<String>,
    pub summary: String,
    pub raw: String,
}

impl RecordFile {
    pub fn render(&self) -> String {
        format!(
            "# Memory record {:06}\n\n- id: {}\n- timestamp: {}\n- markers: {}\n\n## Summary\n{}\n\n## Raw trace\n```json\n{}\n```\n",
            self.id,
            self.id,
            self.timestamp,
            self.markers.join(" | "),
            self.summary,
            self.raw
        )
    }

    pub fn parse(file: &str, text: &str) -> Result<Self, JournalError> {
        let err = |reason: &str| JournalError::Parse {
            file: file.to_string(),
            line: 0,
            reason: reason.to_string(),
        };
        let field = |key: &str| {
            text.lines()
                .find_map(|l| l.strip_prefix(&format!("- {key}: ")).map(str::to_string))
                .or_else(|| text.lines().any(|l| l == format!("- {key}:")).then(String::new))
                .ok_or_else(|| err(&format!("missing `{key}`")))
        };
        let id = field("id")?.parse().map_err(|_| err("bad id"))?;
        let timestamp = field("timestamp")?.parse().map_err(|_| err("bad timestamp"))?;
        let markers = field("markers")?;
        let markers = markers
            .split(" | ")
            .filter(|m| !m.is_empty())
            .map(str::to_string)
            .collect();
        let (_, rest) = text.split_once("\n## Summary\n").ok_or_else(|| err("missing summary"))?;
        let (summary, rest) = rest
            .split_once("\n\n## Raw trace\n```json\n")
            .ok_or_else(|| err("missing raw trace"))?;
        let raw = rest.strip_suffix("\n```\n").ok_or_else(|| err("unterminated raw trace"))?;
        Ok(Self {
            id,
            timestamp,
            markers,
            summary: summary.to_string(),
            raw: raw.to_string(),
        })
    }
}

#[derive(Debug)]
pub struct GrowthJournal {
    root: PathBuf,
    last: BTreeMap<u64, Minutes>,
}

impl GrowthJournal {
    /// Opens (creating if needed) a journal directory and proves it is
    /// writable. Existing day files are kept, so a run can resume.
    pub fn create(root: impl AsRef<Path>) -> Result<Self, JournalError> {
        let root = root.as_ref().to_path_buf();
        let unwritable = |e: std::io::Error| JournalError::Unwritable {
            path: root.display().to_string(),
            reason: e.to_string(),
        };
        fs::create_dir_all(root.join(RECORD_DIR)).map_err(unwritable)?;
        let probe = root.join(".write-probe");
        fs::write(&probe, b"").map_err(unwritable)?;
        fs::remove_file(&probe).map_err(unwritable)?;
        let mut last = BTreeMap::new();
        for e in load(&root)? {
            last.insert(e.day(), e.timestamp);
        }
        Ok(Self { root, last })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Timestamp of the newest entry.
    pub fn last_timestamp(&self) -> Option<Minutes> {
        self.last.values().max().copied()
    }

    pub fn append(&mut self, entry: &JournalEntry) -> Result<PathBuf, JournalError> {
        let day = entry.day();
        let name = day_file_name(day);
        if let Some(&last) = self.last.get(&day) {
            if entry.timestamp < last {
                return Err(JournalError::OutOfOrder {
                    file: name,
                    got: entry.timestamp,
                    last,
                });
            }
        }
        let path = self.root.join(&name);
        let mut f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| io_err(&path, e))?;
        f.write_all(entry.render().as_bytes()).map_err(|e| io_err(&path, e))?;
        self.last.insert(day, entry.timestamp);
        Ok(path)
    }

    pub fn write_record(&self, record: &RecordFile) -> Result<PathBuf, JournalError> {
        let path = self.root.join(RECORD_DIR).join(format!("record-{:06}.md", record.id));
        fs::write(&path, record.render()).map_err(|e| io_err(&path, e))?;
        Ok(path)
    }

    pub fn write_self_model(&self, properties: &str) -> Result<PathBuf, JournalError> {
        let path = self.root.join(SELF_MODEL_FILE);
        fs::write(&path, properties).map_err(|e| io_err(&path, e))?;
        Ok(path)
    }

    /// Writes the self-critique for `day`, computed from that day's entries.
    /// The body always carries at least one creed marker.
    #[allow(clippy::too_many_arguments)]
    pub fn nightly_critique(
        &mut self,
        day: u64,
        at: Minutes,
        backend: &dyn CognitionBackend,
        creed: &Creed,
        run_minutes: Option<Minutes>,
        seed: u64,
    ) -> Result<JournalEntry, JournalError> {
        let entries = self.load_day(day)?;
        let tally = DayTally::from_entries(&entries);
        let caps: Vec<String> = entries
            .iter()
            .filter(|e| e.kind == JournalKind::Capability)
            .filter_map(|e| Some(format!("- capability: {} | {}", e.field("name")?, e.field("note")?)))
            .collect();
        let tags = Tags::new()
            .with("mode", "critique")
            .with("day", day)
            .with("intrinsic", tally.intrinsic)
            .with("extrinsic", tally.extrinsic)
            .with("successes", tally.successes)
            .with("failures", tally.failures);
        let creed_text = (1..=5u8)
            .filter_map(|i| creed.sentence(i).map(|s| format!("[creed:{i}] {s}")))
            .collect::<Vec<_>>()
            .join("\n");
        let summary = format!(
            "- tasks: {}\n- intrinsic: {}\n- extrinsic: {}\n- successes: {}\n- failures: {}",
            tally.intrinsic + tally.extrinsic,
            tally.intrinsic,
            tally.extrinsic,
            tally.successes,
            tally.failures
        );
        let prompt = prompts::render(
            &prompts::CRITIQUE,
            &[
                ("tags", &tags.render()),
                ("day", &day.to_string()),
                ("creed", &creed_text),
                ("summary", &summary),
                ("capabilities", &if caps.is_empty() { "(none)".to_string() } else { caps.join("\n") }),
            ],
        );
        let mut text = match backend.generate(&GenerationRequest::new(Role::Reflector, prompt, seed ^ day)) {
            Ok(r) => r.text.trim().to_string(),
            Err(e) => {
                log::warn!("critique backend unavailable: {e}");
                String::new()
            }
        };
        if check_creed(&text).is_err() {
            text = format!(
                "{}Day {day} closed with {} intrinsic and {} extrinsic tasks [creed:1].",
                if text.is_empty() { String::new() } else { format!("{text} ") },
                tally.intrinsic,
                tally.extrinsic
            );
        }
        let mut body = format!("{text}\n{summary}\n- day: {day}");
        if let Some(m) = run_minutes {
            body.push_str(&format!("\n- run_minutes: {m}"));
        }
        let entry = JournalEntry::new(at, JournalKind::Critique, None, body);
        self.append(&entry)?;
        Ok(entry)
    }

    pub fn load_day(&self, day: u64) -> Result<Vec<JournalEntry>, JournalError> {
        let name = day_file_name(day);
        let path = self.root.join(&name);
        match fs::read_to_string(&path) {
            Ok(text) => parse_day(&name, &text),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(Vec::new()),
            Err(e) => Err(io_err(&path, e)),
        }
    }
}

/// Task tallies over a set of entries.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct DayTally {
    pub intrinsic: u64,
    pub extrinsic: u64,
    pub successes: u64,
    pub failures: u64,
}

impl DayTally {
    pub fn from_entries(entries: &[JournalEntry]) -> Self {
        let mut t = DayTally::default();
        for e in entries {
            match e.kind {
                JournalKind::Goal => match e.field("origin") {
                    Some("intrinsic") => t.intrinsic += 1,
                    Some("extrinsic") => t.extrinsic += 1,
                    _ => {}
                },
                JournalKind::Reward => match e.field("success") {
                    Some("true") => t.successes += 1,
                    Some("false") => t.failures += 1,
                    _ => {}
                },
                _ => {}
            }
        }
        t
    }
}

/// Day files of a journal directory in day order.
pub fn day_files(root: &Path) -> Result<Vec<PathBuf>, JournalError> {
    let mut files: Vec<PathBuf> = match fs::read_dir(root) {
        Ok(rd) => rd
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| {
                p.file_name()
                    .and_then(|n| n.to_str())
                    .is_some_and(|n| n.starts_with("day-") && n.ends_with(".md"))
            })
            .collect(),
        Err(e) => return Err(io_err(root, e)),
    };
    files.sort();
    Ok(files)
}

/// Every entry in (file, position) order.
pub fn load(root: impl AsRef<Path>) -> Result<Vec<JournalEntry>, JournalError> {
    let mut out = Vec::new();
    for path in day_files(root.as_ref())? {
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default().to_string();
        let text = fs::read_to_string(&path).map_err(|e| io_err(&path, e))?;
        out.extend(parse_day(&name, &text)?);
    }
    Ok(out)
}

/// Persisted memory records in id order.
pub fn load_records(root: impl AsRef<Path>) -> Result<Vec<RecordFile>, JournalError> {
    let dir = root.as_ref().join(RECORD_DIR);
    let mut paths: Vec<PathBuf> = match fs::read_dir(&dir) {
        Ok(rd) => rd.filter_map(|e| e.ok().map(|e| e.path())).collect(),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(io_err(&dir, e)),
    };
    paths.sort();
    let mut out = Vec::new();
    for p in paths {
        let name = p.display().to_string();
        let text = fs::read_to_string(&p).map_err(|e| io_err(&p, e))?;
        out.push(RecordFile::parse(&name, &text)?);
    }
    Ok(out)
}

/// Capabilities acquired so far, replayed from capability entries.
pub fn replay_capabilities(entries: &[JournalEntry]) -> Vec<Capability> {
    entries
        .iter()
        .filter(|e| e.kind == JournalKind::Capability)
        .filter_map(|e| {
            Some(Capability {
                name: e.field("name")?.to_string(),
                note: e.field("note")?.to_string(),
                acquired_at: e.field("acquired_at")?.parse().ok()?,
            })
        })
        .collect()
}
