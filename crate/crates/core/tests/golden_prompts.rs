//! Prompt snapshots. Regenerate with `METACOG_BLESS=1 cargo test --test golden_prompts`.

mod common;

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::Mutex;

use metacog_core::backend::{BackendError, CognitionBackend, GenerationRequest, GenerationResponse, Health};
use metacog_core::journal::GrowthJournal;
use metacog_core::kernel::{ExecutiveContext, GoalId, Origin, PerceptWindow, VirtualClock};
use metacog_core::models::Creed;
use metacog_core::prompts::{self, Tags};
use metacog_core::system2::{assemble_prompt, PromptContext, ScratchPad};
use metacog_core::system3::{EpisodeSummary, GoalDraft, GoalTrigger, Monitor, SearchBudget};
use metacog_core::ScriptedBackend;

struct Recorder {
    inner: ScriptedBackend,
    seen: Mutex<Vec<GenerationRequest>>,
}

impl CognitionBackend for Recorder {
    fn name(&self) -> &str {
        "recorder"
    }

    fn generate(&self, request: &GenerationRequest) -> Result<GenerationResponse, BackendError> {
        self.seen.lock().unwrap().push(request.clone());
        self.inner.generate(request)
    }

    fn healthcheck(&self) -> Health {
        Health::ok(None)
    }
}

fn golden_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests").join("golden")
}

/// First prompt (smallest text, since guardian calls race) per role and mode.
fn snapshots(seen: &[GenerationRequest]) -> BTreeMap<String, String> {
    let mut out: BTreeMap<String, String> = BTreeMap::new();
    for r in seen {
        let tags = Tags::parse(&r.prompt);
        let mode = tags.get("mode").map_or("default", String::as_str);
        let key = format!("{}-{mode}", r.role);
        match out.get(&key) {
            Some(prev) if prev <= &r.prompt => {}
            _ => {
                out.insert(key, r.prompt.clone());
            }
        }
    }
    out
}

#[test]
fn prompts_match_their_snapshots() {
    let scenario = common::scenario("recurring-stress");
    let backend = Recorder {
        inner: ScriptedBackend::for_scenario(&scenario),
        seen: Mutex::new(Vec::new()),
    };
    let creed = Creed::new(scenario.creed.clone());
    let monitor = Monitor::new(&backend, &creed, SearchBudget::default(), 7);
    let task = scenario.task("stress-relief").unwrap();
    let draft = GoalDraft::for_task(task, GoalTrigger::Stress, Origin::Intrinsic, None);
    let ctx = ExecutiveContext {
        clock: VirtualClock::starting_at(860, 1).unwrap(),
        pending: Vec::new(),
        active_goal: None,
        percepts: PerceptWindow::new(8),
        beta: 0.5,
    };
    let decision = monitor.meta_step(&ctx, &draft, GoalId(1), &Tags::new()).unwrap();

    let pad = ScratchPad::new(64);
    let memories = vec!["(0.81) intrinsic goal stress-relief succeeded".to_string()];
    let pctx = PromptContext {
        creed: &creed,
        percepts: &ctx.percepts,
        memories: &memories,
        plan: &decision.plan,
        reuse: None,
    };
    let tags = Tags::new().with("mode", "act").with("template", "stress-relief").with("step", 0);
    let planner = assemble_prompt(&decision.goal, &pad, &pctx, &tags);
    backend.generate(&GenerationRequest::new(metacog_core::Role::Planner, planner, 7)).unwrap();

    let commands = vec!["open(\"wellness/breathing-game\")".to_string()];
    monitor.reflect(
        &EpisodeSummary {
            episode: 1,
            goal: &decision.goal,
            success: true,
            realized: 0.8,
            skill: None,
            commands: &commands,
            outcome: "Verifier: done.",
        },
        None,
    );
    let dir = tempfile::tempdir().unwrap();
    let mut journal = GrowthJournal::create(dir.path()).unwrap();
    journal.nightly_critique(0, 1439, &backend, &creed, None, 7).unwrap();

    let got = snapshots(&backend.seen.lock().unwrap());
    let names: Vec<&str> = got.keys().map(String::as_str).collect();
    assert!(names.len() >= 6, "roles covered: {names:?}");

    let dir = golden_dir();
    if std::env::var_os("METACOG_BLESS").is_some() {
        std::fs::create_dir_all(&dir).unwrap();
        for (k, v) in &got {
            std::fs::write(dir.join(format!("{k}.txt")), v).unwrap();
        }
        return;
    }
    for (k, v) in &got {
        let path = dir.join(format!("{k}.txt"));
        let want = std::fs::read_to_string(&path).unwrap_or_else(|_| panic!("missing snapshot {}", path.display()));
        assert_eq!(v, &want, "prompt {k} drifted from its snapshot");
    }
}

#[test]
fn every_template_placeholder_is_known() {
    for t in prompts::ALL {
        for p in prompts::placeholders(&t) {
            assert!(
                p.chars().all(|c| c.is_ascii_lowercase() || c == '_'),
                "{}: odd placeholder {p}",
                t.name
            );
        }
        assert_eq!(t.version, 1);
    }
}
