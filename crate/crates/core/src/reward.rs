//! Intrinsic evaluation, convex β-fusion with extrinsic feedback, and β
//! adjustment from reflection directives.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::system1::ExtrinsicReward;

/// Relative weights of the intrinsic drives.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriveWeights {
    pub curiosity: f64,
    pub mastery: f64,
    pub coherence: f64,
}

impl Default for DriveWeights {
    fn default() -> Self {
        Self {
            curiosity: 1.0 / 3.0,
            mastery: 1.0 / 3.0,
            coherence: 1.0 / 3.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntrinsicReward {
    pub curiosity: f64,
    pub mastery: f64,
    pub coherence: f64,
    pub scalar: f64,
    pub rationale: String,
}

/// Episode facts needed by the intrinsic evaluator.
#[derive(Debug, Clone, Default)]
pub struct IntrinsicInputs<'a> {
    /// Pages touched during the episode, in order, possibly repeated.
    pub pages: &'a [String],
    /// Pages visited before the episode started.
    pub seen_before: Option<&'a BTreeSet<String>>,
    /// Proficiency change of the exercised skill.
    pub mastery_delta: f64,
    pub plan_nodes: usize,
    pub clean_nodes: usize,
}

pub fn evaluate_intrinsic(inputs: &IntrinsicInputs<'_>, weights: DriveWeights, rationale: String) -> IntrinsicReward {
    let distinct: BTreeSet<&String> = inputs.pages.iter().collect();
    let curiosity = if distinct.is_empty() {
        0.0
    } else {
        let novel = distinct
            .iter()
            .filter(|p| !inputs.seen_before.is_some_and(|s| s.contains(p.as_str())))
            .count();
        novel as f64 / distinct.len() as f64
    };
    let mastery = inputs.mastery_delta.clamp(0.0, 1.0);
    let coherence = if inputs.plan_nodes == 0 {
        1.0
    } else {
        inputs.clean_nodes.min(inputs.plan_nodes) as f64 / inputs.plan_nodes as f64
    };
    let total = weights.curiosity + weights.mastery + weights.coherence;
    let scalar = if total > 0.0 {
        (weights.curiosity * curiosity + weights.mastery * mastery + weights.coherence * coherence) / total
    } else {
        0.0
    };
    IntrinsicReward {
        curiosity,
        mastery,
        coherence,
        scalar: scalar.clamp(0.0, 1.0),
        rationale,
    }
}

/// Success flag shaped by cost and latency, clamped to [0, 1].
pub fn extrinsic_scalar(ext: &ExtrinsicReward) -> f64 {
    let success = if ext.success { 1.0 } else { 0.0 };
    let cost = (f64::from(ext.cost) / 20.0).min(1.0);
    let latency = (ext.latency_secs as f64 / 600.0).min(1.0);
    (success - 0.1 * cost - 0.1 * latency).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HybridReward {
    pub extrinsic: f64,
    pub intrinsic: f64,
    pub beta: f64,
    pub fused: f64,
    pub text: String,
}

/// `fused = β·ext + (1−β)·int`. β outside [0, 1] is clamped with a warning.
pub fn fuse(ext: f64, int: &IntrinsicReward, beta: f64, verifier_message: &str) -> HybridReward {
    let b = clamp_beta(beta);
    HybridReward {
        extrinsic: ext,
        intrinsic: int.scalar,
        beta: b,
        fused: b * ext + (1.0 - b) * int.scalar,
        text: format!("{} {}", int.rationale.trim(), verifier_message.trim()),
    }
}

fn clamp_beta(beta: f64) -> f64 {
    if (0.0..=1.0).contains(&beta) {
        beta
    } else {
        log::warn!("β = {beta} outside [0, 1]; clamping");
        if beta.is_nan() {
            0.5
        } else {
            beta.clamp(0.0, 1.0)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum BetaDirective {
    Target(f64),
    Delta(f64),
}

/// Reads a β directive from rationale text: "β to 0.68", "beta to 0.6",
/// "β by +0.1" or "β by -0.05".
pub fn parse_beta_directive(text: &str) -> Option<BetaDirective> {
    let lower = text.to_lowercase();
    for key in ["β", "beta"] {
        let mut from = 0;
        while let Some(pos) = lower[from..].find(key) {
            let after = lower[from + pos + key.len()..].trim_start();
            if let Some(rest) = after.strip_prefix("to ") {
                if let Some(v) = leading_number(rest) {
                    return Some(BetaDirective::Target(v));
                }
            } else if let Some(rest) = after.strip_prefix("by ") {
                if let Some(v) = leading_number(rest) {
                    return Some(BetaDirective::Delta(v));
                }
            }
            from += pos + key.len();
        }
    }
    None
}

fn leading_number(s: &str) -> Option<f64> {
    let s = s.trim_start();
    let end = s
        .char_indices()
        .find(|(i, c)| !(c.is_ascii_digit() || *c == '.' || (*i == 0 && (*c == '+' || *c == '-'))))
        .map_or(s.len(), |(i, _)| i);
    s[..end].trim_end_matches('.').parse().ok()
}

pub fn adjust_beta(current: f64, directive: BetaDirective) -> f64 {
    match directive {
        BetaDirective::Target(t) => t,
        BetaDirective::Delta(d) => current + d,
    }
    .clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn int(scalar: f64) -> IntrinsicReward {
        IntrinsicReward {
            curiosity: scalar,
            mastery: scalar,
            coherence: scalar,
            scalar,
            rationale: "kept my word [creed:1]".into(),
        }
    }

    #[test]
    fn familiar_clean_episode_is_one_third() {
        let pages = vec!["a".to_string(), "b".to_string()];
        let seen = BTreeSet::from(["a".to_string(), "b".to_string()]);
        let r = evaluate_intrinsic(
            &IntrinsicInputs {
                pages: &pages,
                seen_before: Some(&seen),
                mastery_delta: 0.0,
                plan_nodes: 3,
                clean_nodes: 3,
            },
            DriveWeights::default(),
            "x [creed:1]".into(),
        );
        assert_eq!((r.curiosity, r.mastery, r.coherence), (0.0, 0.0, 1.0));
        assert!((r.scalar - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn empty_episode() {
        let r = evaluate_intrinsic(&IntrinsicInputs::default(), DriveWeights::default(), "x".into());
        assert_eq!((r.curiosity, r.mastery, r.coherence), (0.0, 0.0, 1.0));
    }

    #[test]
    fn fusion_arithmetic_and_boundaries() {
        let h = fuse(1.0, &int(0.5), 0.68, "Verifier: done.");
        assert!((h.fused - 0.84).abs() < 1e-12);
        assert_eq!(fuse(0.3, &int(0.9), 1.0, "").fused, 0.3);
        assert_eq!(fuse(0.3, &int(0.9), 0.0, "").fused, 0.9);
        assert_eq!(fuse(0.3, &int(0.9), 1.5, "").beta, 1.0);
        assert!(h.text.contains("Verifier: done.") && h.text.contains("[creed:1]"));
    }

    #[test]
    fn extrinsic_shaping() {
        let ext = ExtrinsicReward {
            goal_id: crate::kernel::GoalId(1),
            task_id: None,
            success: true,
            latency_secs: 300,
            cost: 10,
            message: String::new(),
        };
        assert!((extrinsic_scalar(&ext) - 0.9).abs() < 1e-12);
        assert_eq!(extrinsic_scalar(&ExtrinsicReward { success: false, ..ext }), 0.0);
    }

    #[test]
    fn beta_directives() {
        assert_eq!(
            parse_beta_directive("Stepped in for the user; raising β to 0.68 so care comes first."),
            Some(BetaDirective::Target(0.68))
        );
        assert_eq!(parse_beta_directive("Reduced β to 0.60."), Some(BetaDirective::Target(0.60)));
        assert_eq!(parse_beta_directive("nudge beta by -0.05"), Some(BetaDirective::Delta(-0.05)));
        assert_eq!(parse_beta_directive("no directive"), None);
        assert_eq!(adjust_beta(0.5, BetaDirective::Target(0.68)), 0.68);
        assert_eq!(adjust_beta(0.9, BetaDirective::Delta(0.5)), 1.0);
    }
}
