//! Synthetic user-behaviour feed.

use std::fmt;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::kernel::{Minutes, FEED_CADENCE};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Emotion {
    Calm,
    Stressed,
    Neutral,
}

impl Emotion {
    pub fn as_str(self) -> &'static str {
        match self {
            Emotion::Calm => "calm",
            Emotion::Stressed => "stressed",
            Emotion::Neutral => "neutral",
        }
    }
}

impl fmt::Display for Emotion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activity {
    Idle,
    ReadingDocs,
    Typing,
    Away,
}

impl Activity {
    pub fn as_str(self) -> &'static str {
        match self {
            Activity::Idle => "idle",
            Activity::ReadingDocs => "reading_docs",
            Activity::Typing => "typing",
            Activity::Away => "away",
        }
    }

    /// Idle time accrues while the user is not interacting.
    pub fn accrues_idle(self) -> bool {
        matches!(self, Activity::Idle | Activity::Away)
    }
}

impl fmt::Display for Activity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One JSON object of the feed: `{"timestamp", "emotion", "activity", "idle_minutes"}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct UserFeedEntry {
    pub timestamp: Minutes,
    pub emotion: Emotion,
    pub activity: Activity,
    pub idle_minutes: u32,
}

impl UserFeedEntry {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("feed entry serializes")
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FillMode {
    /// Unspecified fields become neutral/idle.
    #[default]
    Default,
    /// Unspecified emotions are drawn from the seeded generator.
    Random,
}

/// A scripted span of the feed; later segments override earlier ones.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeedSegment {
    pub from: Minutes,
    pub to: Minutes,
    #[serde(default)]
    pub emotion: Option<Emotion>,
    #[serde(default)]
    pub activity: Option<Activity>,
    #[serde(default)]
    pub idle_minutes: Option<u32>,
}

impl FeedSegment {
    fn covers(&self, t: Minutes) -> bool {
        self.from <= t && t <= self.to
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FeedTrack {
    pub segments: Vec<FeedSegment>,
    pub fill: FillMode,
}

impl FeedTrack {
    /// Builds the entry due at `t`. Emotion and activity are resolved
    /// independently from the newest segment specifying each field.
    pub fn entry_at(&self, t: Minutes, prev: Option<&UserFeedEntry>, rng: &mut ChaCha8Rng) -> UserFeedEntry {
        let covering = || self.segments.iter().rev().filter(move |s| s.covers(t));
        let emotion = covering().find_map(|s| s.emotion);
        let activity = covering().find_map(|s| s.activity).unwrap_or(Activity::Idle);
        let idle = covering().find_map(|s| s.idle_minutes);

        let emotion = match (emotion, self.fill) {
            (Some(e), _) => e,
            (None, FillMode::Default) => Emotion::Neutral,
            (None, FillMode::Random) => {
                if rng.gen_bool(0.5) {
                    Emotion::Calm
                } else {
                    Emotion::Neutral
                }
            }
        };
        let idle_minutes = idle.unwrap_or_else(|| {
            if activity.accrues_idle() {
                prev.map_or(0, |p| p.idle_minutes) + FEED_CADENCE as u32
            } else {
                0
            }
        });
        UserFeedEntry {
            timestamp: t,
            emotion,
            activity,
            idle_minutes,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn json_field_names() {
        let e = UserFeedEntry {
            timestamp: 860,
            emotion: Emotion::Stressed,
            activity: Activity::ReadingDocs,
            idle_minutes: 60,
        };
        assert_eq!(
            e.to_json(),
            r#"{"timestamp":860,"emotion":"stressed","activity":"reading_docs","idle_minutes":60}"#
        );
    }

    #[test]
    fn empty_track_uses_default_fill() {
        let track = FeedTrack::default();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let first = track.entry_at(5, None, &mut rng);
        assert_eq!((first.emotion, first.activity, first.idle_minutes), (Emotion::Neutral, Activity::Idle, 5));
        let second = track.entry_at(10, Some(&first), &mut rng);
        assert_eq!(second.idle_minutes, 10);
    }

    #[test]
    fn later_segments_override_per_field() {
        let track = FeedTrack {
            segments: vec![
                FeedSegment { from: 0, to: 100, emotion: None, activity: Some(Activity::Typing), idle_minutes: None },
                FeedSegment { from: 50, to: 60, emotion: Some(Emotion::Stressed), activity: None, idle_minutes: None },
            ],
            fill: FillMode::Default,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let e = track.entry_at(55, None, &mut rng);
        assert_eq!((e.emotion, e.activity, e.idle_minutes), (Emotion::Stressed, Activity::Typing, 0));
    }
}
