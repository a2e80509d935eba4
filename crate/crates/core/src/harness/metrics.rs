//! Run metrics: task provenance per 6-hour segment, per-tier success at
//! checkpoints, and reasoning steps of recurring templates. Metrics are
//! computed from [`TaskRecord`]s, which the live run builds in memory and
//! [`compute_metrics`] rebuilds from the journal alone.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::journal::{self, JournalEntry, JournalKind};
use crate::kernel::{GoalId, Minutes, Origin, Tier};

pub const SEGMENT_MINUTES: Minutes = 360;
/// Half-width of the window sampled around each checkpoint.
pub const CHECKPOINT_HALF_WINDOW: Minutes = 360;
pub const DEFAULT_CHECKPOINTS: [Minutes; 4] = [0, 720, 1440, 2160];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskRecord {
    pub goal_id: GoalId,
    pub adopted_at: Minutes,
    pub origin: Origin,
    pub tier: Option<Tier>,
    pub template: String,
    /// `None` while the episode has not finished.
    pub success: Option<bool>,
    pub steps: Option<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentCount {
    pub segment_start: Minutes,
    pub extrinsic: u64,
    pub intrinsic: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TierRate {
    pub checkpoint: Minutes,
    pub tier: Tier,
    pub tasks: u64,
    pub successes: u64,
    /// First-attempt success rate; 0 when the window holds no task of the tier.
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepSeries {
    pub template: String,
    pub steps: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub duration_minutes: Minutes,
    pub total_tasks: u64,
    pub segments: Vec<SegmentCount>,
    pub tiers: Vec<TierRate>,
    pub steps: Vec<StepSeries>,
}

impl RunMetrics {
    pub fn empty(duration_minutes: Minutes) -> Self {
        aggregate(&[], duration_minutes, &DEFAULT_CHECKPOINTS)
    }

    pub fn segment_at(&self, minute: Minutes) -> Option<&SegmentCount> {
        self.segments.iter().find(|s| s.segment_start <= minute && minute < s.segment_start + SEGMENT_MINUTES)
    }

    pub fn tier_rate(&self, checkpoint: Minutes, tier: Tier) -> Option<&TierRate> {
        self.tiers.iter().find(|t| t.checkpoint == checkpoint && t.tier == tier)
    }

    pub fn step_series(&self, template: &str) -> Option<&[u32]> {
        self.steps.iter().find(|s| s.template == template).map(|s| s.steps.as_slice())
    }
}

/// Tasks adopted in `[from, to)`.
pub fn tasks_in(records: &[TaskRecord], from: Minutes, to: Minutes) -> impl Iterator<Item = &TaskRecord> {
    records.iter().filter(move |r| from <= r.adopted_at && r.adopted_at < to)
}

pub fn aggregate(records: &[TaskRecord], duration: Minutes, checkpoints: &[Minutes]) -> RunMetrics {
    let n_segments = duration.div_ceil(SEGMENT_MINUTES).max(1);
    let mut segments: Vec<SegmentCount> = (0..n_segments)
        .map(|i| SegmentCount {
            segment_start: i * SEGMENT_MINUTES,
            extrinsic: 0,
            intrinsic: 0,
        })
        .collect();
    for r in records {
        let i = ((r.adopted_at / SEGMENT_MINUTES) as usize).min(segments.len() - 1);
        match r.origin {
            Origin::Extrinsic => segments[i].extrinsic += 1,
            Origin::Intrinsic => segments[i].intrinsic += 1,
        }
    }

    let mut tiers = Vec::new();
    for &c in checkpoints.iter().filter(|c| **c <= duration) {
        let from = c.saturating_sub(CHECKPOINT_HALF_WINDOW);
        let to = (c + CHECKPOINT_HALF_WINDOW).min(duration + 1);
        for tier in Tier::ALL {
            let done: Vec<bool> = tasks_in(records, from, to)
                .filter(|r| r.tier == Some(tier))
                .filter_map(|r| r.success)
                .collect();
            let tasks = done.len() as u64;
            let successes = done.iter().filter(|s| **s).count() as u64;
            tiers.push(TierRate {
                checkpoint: c,
                tier,
                tasks,
                successes,
                rate: if tasks == 0 { 0.0 } else { successes as f64 / tasks as f64 },
            });
        }
    }

    let mut by_template: BTreeMap<&str, Vec<(Minutes, GoalId, u32)>> = BTreeMap::new();
    for r in records {
        if let Some(s) = r.steps {
            by_template.entry(&r.template).or_default().push((r.adopted_at, r.goal_id, s));
        }
    }
    let steps = by_template
        .into_iter()
        .filter(|(_, v)| v.len() >= 2)
        .map(|(t, mut v)| {
            v.sort();
            StepSeries {
                template: t.to_string(),
                steps: v.into_iter().map(|(_, _, s)| s).collect(),
            }
        })
        .collect();

    RunMetrics {
        duration_minutes: duration,
        total_tasks: records.len() as u64,
        segments,
        tiers,
        steps,
    }
}

fn bad(entry: &JournalEntry, what: &str) -> Error {
    Error::invariant(
        "harness",
        format!("{} entry at minute {} has no valid `{what}` field", entry.kind, entry.timestamp),
    )
}

/// Rebuilds task records from goal and reward entries.
pub fn task_records(entries: &[JournalEntry]) -> Result<Vec<TaskRecord>> {
    let mut records: Vec<TaskRecord> = Vec::new();
    let mut index: BTreeMap<GoalId, usize> = BTreeMap::new();
    for e in entries {
        match e.kind {
            JournalKind::Goal => {
                let goal_id = e.goal_id.ok_or_else(|| bad(e, "goal_id"))?;
                let origin = match e.field("origin") {
                    Some("intrinsic") => Origin::Intrinsic,
                    Some("extrinsic") => Origin::Extrinsic,
                    _ => return Err(bad(e, "origin")),
                };
                let tier = match e.field("tier") {
                    Some("-") | None => None,
                    Some(t) => Some(t.parse().map_err(|_| bad(e, "tier"))?),
                };
                let template = e.field("template").ok_or_else(|| bad(e, "template"))?.to_string();
                index.insert(goal_id, records.len());
                records.push(TaskRecord {
                    goal_id,
                    adopted_at: e.timestamp,
                    origin,
                    tier,
                    template,
                    success: None,
                    steps: None,
                });
            }
            JournalKind::Reward => {
                let goal_id = e.goal_id.ok_or_else(|| bad(e, "goal_id"))?;
                let i = *index.get(&goal_id).ok_or_else(|| bad(e, "goal_id"))?;
                records[i].success = Some(e.field("success").ok_or_else(|| bad(e, "success"))? == "true");
                records[i].steps = Some(e.field("steps").and_then(|s| s.parse().ok()).ok_or_else(|| bad(e, "steps"))?);
            }
            _ => {}
        }
    }
    Ok(records)
}

/// Run length recorded by the final critique, else the newest timestamp.
pub fn run_minutes(entries: &[JournalEntry]) -> Minutes {
    entries
        .iter()
        .rev()
        .find_map(|e| (e.kind == JournalKind::Critique).then(|| e.field("run_minutes")?.parse().ok()).flatten())
        .or_else(|| entries.iter().map(|e| e.timestamp).max())
        .unwrap_or(0)
}

/// Metrics recomputed from a journal directory alone.
pub fn compute_metrics(dir: impl AsRef<Path>) -> Result<RunMetrics> {
    let entries = journal::load(dir)?;
    let records = task_records(&entries)?;
    Ok(aggregate(&records, run_minutes(&entries), &DEFAULT_CHECKPOINTS))
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("metrics");
    path.with_file_name(format!("{stem}.{suffix}.csv"))
}

fn csv_err(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Io {
        path: path.display().to_string(),
        source: std::io::Error::other(e.to_string()),
    }
}

/// Writes `path` (`segment_start,extrinsic,intrinsic`) plus
/// `<stem>.tiers.csv` (`checkpoint,tier,tasks,successes,rate`) and
/// `<stem>.steps.csv` (`template,episode,steps`). Returns the three paths.
pub fn export_csv(metrics: &RunMetrics, path: impl AsRef<Path>) -> Result<[PathBuf; 3]> {
    let path = path.as_ref();
    let tiers_path = sibling(path, "tiers");
    let steps_path = sibling(path, "steps");

    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(["segment_start", "extrinsic", "intrinsic"]).map_err(|e| csv_err(path, e))?;
    for s in &metrics.segments {
        if s.extrinsic + s.intrinsic == 0 && metrics.total_tasks == 0 {
            continue;
        }
        w.write_record([s.segment_start.to_string(), s.extrinsic.to_string(), s.intrinsic.to_string()])
            .map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| csv_err(path, e))?;

    let mut w = csv::Writer::from_path(&tiers_path).map_err(|e| csv_err(&tiers_path, e))?;
    w.write_record(["checkpoint", "tier", "tasks", "successes", "rate"])
        .map_err(|e| csv_err(&tiers_path, e))?;
    for t in metrics.tiers.iter().filter(|_| metrics.total_tasks > 0) {
        w.write_record([
            t.checkpoint.to_string(),
            t.tier.as_str().to_string(),
            t.tasks.to_string(),
            t.successes.to_string(),
            format!("{:.4}", t.rate),
        ])
        .map_err(|e| csv_err(&tiers_path, e))?;
    }
    w.flush().map_err(|e| csv_err(&tiers_path, e))?;

    let mut w = csv::Writer::from_path(&steps_path).map_err(|e| csv_err(&steps_path, e))?;
    w.write_record(["template", "episode", "steps"]).map_err(|e| csv_err(&steps_path, e))?;
    for s in &metrics.steps {
        for (i, n) in s.steps.iter().enumerate() {
            w.write_record([s.template.clone(), (i + 1).to_string(), n.to_string()])
                .map_err(|e| csv_err(&steps_path, e))?;
        }
    }
    w.flush().map_err(|e| csv_err(&steps_path, e))?;
    Ok([path.to_path_buf(), tiers_path, steps_path])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(id: u64, at: Minutes, origin: Origin, tier: Tier, success: bool, steps: u32) -> TaskRecord {
        TaskRecord {
            goal_id: GoalId(id),
            adopted_at: at,
            origin,
            tier: Some(tier),
            template: "t".into(),
            success: Some(success),
            steps: Some(steps),
        }
    }

    #[test]
    fn no_tasks_gives_zeroed_metrics() {
        let m = RunMetrics::empty(2160);
        assert_eq!(m.total_tasks, 0);
        assert_eq!(m.segments.len(), 6);
        assert!(m.segments.iter().all(|s| s.extrinsic + s.intrinsic == 0));
        assert!(m.tiers.iter().all(|t| t.tasks == 0 && t.rate == 0.0));
        assert!(m.steps.is_empty());
    }

    #[test]
    fn segments_sum_to_total_and_windows_clip() {
        let records = vec![
            rec(1, 10, Origin::Extrinsic, Tier::Easy, true, 3),
            rec(2, 800, Origin::Intrinsic, Tier::Hard, false, 12),
            rec(3, 2160, Origin::Intrinsic, Tier::Hard, true, 4),
        ];
        let m = aggregate(&records, 2160, &DEFAULT_CHECKPOINTS);
        let sum: u64 = m.segments.iter().map(|s| s.extrinsic + s.intrinsic).sum();
        assert_eq!(sum, m.total_tasks);
        assert_eq!(m.segments[5].intrinsic, 1);
        assert_eq!(m.tier_rate(0, Tier::Easy).unwrap().rate, 1.0);
        assert_eq!(m.tier_rate(720, Tier::Hard).unwrap().tasks, 1);
        assert_eq!(m.tier_rate(2160, Tier::Hard).unwrap().rate, 1.0);
        assert_eq!(m.step_series("t").unwrap(), &[3, 12, 4]);
    }

    #[test]
    fn empty_metrics_write_header_only_files() {
        let dir = tempfile::tempdir().unwrap();
        let paths = export_csv(&RunMetrics::empty(60), dir.path().join("m.csv")).unwrap();
        assert_eq!(std::fs::read_to_string(&paths[0]).unwrap(), "segment_start,extrinsic,intrinsic\n");
        assert_eq!(std::fs::read_to_string(&paths[1]).unwrap(), "checkpoint,tier,tasks,successes,rate\n");
        assert_eq!(std::fs::read_to_string(&paths[2]).unwrap(), "template,episode,steps\n");
        assert!(paths[1].ends_with("m.tiers.csv"));
    }
}
