mod common;

use std::sync::Arc;

use common::{config, run_with, scenario, scenario_path};
use metacog_core::harness::{compute_metrics, export_csv, task_records, tasks_in};
use metacog_core::journal::{self, JournalKind};
use metacog_core::kernel::Origin;
use metacog_core::sandbox::{EnvState, Scenario, ScenarioError};

const SCENARIOS: [&str; 4] = ["paper-36h", "recurring-stress", "curriculum", "demo"];

#[test]
fn bundled_scenarios_validate() {
    for name in SCENARIOS {
        let s = Scenario::load(scenario_path(name)).unwrap();
        assert_eq!(s.name, name);
        for t in &s.tasks {
            assert!(s.script(&t.template).is_some(), "{name}: no script for {}", t.template);
        }
    }
}

#[test]
fn reset_is_deterministic_and_starts_home() {
    let demo = scenario("demo");
    assert_eq!(EnvState::reset(demo.clone(), 42), EnvState::reset(demo, 42));
    let paper = EnvState::reset(scenario("paper-36h"), 1);
    assert_eq!(paper.current_page(), "home");
    assert!(paper.feed_log().is_empty());
}

#[test]
fn missing_pages_are_rejected() {
    let err = Scenario::from_toml_str("name = \"x\"\nduration_minutes = 10\n").unwrap_err();
    assert_eq!(err, ScenarioError::MissingPages);
}

#[test]
fn live_metrics_equal_the_journal_audit_and_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_with("paper-36h", &config(&dir.path().join("j"), 7)).unwrap();
    assert_eq!(compute_metrics(&out.journal_dir).unwrap(), out.metrics);

    let total: u64 = out.metrics.segments.iter().map(|s| s.extrinsic + s.intrinsic).sum();
    assert_eq!(total, out.metrics.total_tasks);
    assert!(out.metrics.tiers.iter().all(|t| (0.0..=1.0).contains(&t.rate)));

    let [seg, tiers, steps] = export_csv(&out.metrics, dir.path().join("m.csv")).unwrap();
    let mut r = csv::Reader::from_path(&seg).unwrap();
    assert_eq!(r.headers().unwrap(), vec!["segment_start", "extrinsic", "intrinsic"]);
    let rows: Vec<(u64, u64, u64)> = r.deserialize().map(Result::unwrap).collect();
    let want: Vec<(u64, u64, u64)> = out
        .metrics
        .segments
        .iter()
        .map(|s| (s.segment_start, s.extrinsic, s.intrinsic))
        .collect();
    assert_eq!(rows, want);

    let rows: Vec<(u64, String, u64, u64, f64)> =
        csv::Reader::from_path(&tiers).unwrap().deserialize().map(Result::unwrap).collect();
    assert_eq!(rows.len(), out.metrics.tiers.len());
    for (row, t) in rows.iter().zip(&out.metrics.tiers) {
        assert_eq!((row.0, row.1.as_str(), row.2, row.3), (t.checkpoint, t.tier.as_str(), t.tasks, t.successes));
        assert!((row.4 - t.rate).abs() < 1e-4);
    }

    let rows: Vec<(String, usize, u32)> = csv::Reader::from_path(&steps).unwrap().deserialize().map(Result::unwrap).collect();
    for s in &out.metrics.steps {
        let mine: Vec<u32> = rows.iter().filter(|r| r.0 == s.template).map(|r| r.2).collect();
        assert_eq!(mine, s.steps);
    }
}

#[test]
fn empty_run_exports_header_only_csv() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = config(&dir.path().join("j"), 7);
    c.duration_minutes = Some(5);
    let out = run_with("demo", &c).unwrap();
    assert_eq!(out.metrics.total_tasks, 0);
    for file in export_csv(&out.metrics, dir.path().join("m.csv")).unwrap() {
        let text = std::fs::read_to_string(file).unwrap();
        assert_eq!(text.lines().count(), 1, "{text}");
    }
}

#[test]
fn reactive_baseline_only_runs_directives() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = config(dir.path(), 7);
    c.intrinsic = false;
    let out = run_with("paper-36h", &c).unwrap();
    let records = task_records(&journal::load(dir.path()).unwrap()).unwrap();
    assert!(!records.is_empty());
    assert!(records.iter().all(|r| r.origin == Origin::Extrinsic));
    assert_eq!(tasks_in(&records, 720, 1080).count(), 0);
    assert!(out.self_model.capabilities().is_empty());
}

#[test]
fn seeds_change_the_feed_but_not_the_schedule() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let ra = run_with("paper-36h", &config(a.path(), 1)).unwrap();
    let rb = run_with("paper-36h", &config(b.path(), 2)).unwrap();
    assert_eq!(ra.metrics.total_tasks, rb.metrics.total_tasks);
    assert_ne!(common::tree_bytes(a.path()), common::tree_bytes(b.path()));
}

#[test]
fn existing_journal_needs_resume() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = config(dir.path(), 7);
    c.duration_minutes = Some(30);
    run_with("demo", &c).unwrap();
    let err = run_with("demo", &c).unwrap_err();
    assert!(err.is_invariant(), "{err}");
}

#[test]
fn resume_keeps_beta_memory_and_trace_reuse() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = config(dir.path(), 7);
    c.duration_minutes = Some(1000);
    let first = run_with("paper-36h", &c).unwrap();
    c.resume = true;
    c.duration_minutes = None;
    let rest = run_with("paper-36h", &c).unwrap();
    assert_eq!(rest.self_model.capabilities(), first.self_model.capabilities());

    let entries = journal::load(dir.path()).unwrap();
    let resumed_goals: Vec<_> = entries
        .iter()
        .filter(|e| e.kind == JournalKind::Goal && e.timestamp > 1000)
        .collect();
    assert!(!resumed_goals.is_empty());
    let stress = resumed_goals
        .iter()
        .find(|e| e.field("template") == Some("stress-relief"))
        .expect("second stress spell");
    assert_eq!(stress.field("source"), Some("cached"));
    let first_beta = entries
        .iter()
        .find(|e| e.kind == JournalKind::Goal && e.timestamp > 1000)
        .and_then(|e| e.field("beta"))
        .unwrap();
    assert_eq!(first_beta, format!("{:.4}", first.self_model.beta()));
    assert_eq!(compute_metrics(dir.path()).unwrap(), rest.metrics);
}

#[test]
fn unwritable_output_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("plain-file");
    std::fs::write(&file, "x").unwrap();
    let s = scenario("demo");
    let backend = Arc::new(metacog_core::ScriptedBackend::for_scenario(&s));
    assert!(metacog_core::run_scenario(s, backend, &config(&file, 7)).is_err());
}
