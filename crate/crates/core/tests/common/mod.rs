#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use metacog_core::harness::{run_scenario, RunConfig, RunOutcome};
use metacog_core::{Scenario, ScriptedBackend};

pub fn scenario_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios").join(format!("{name}.toml"))
}

pub fn scenario(name: &str) -> Arc<Scenario> {
    Arc::new(Scenario::load(scenario_path(name)).unwrap_or_else(|e| panic!("{name}: {e}")))
}

pub fn config(out: &Path, seed: u64) -> RunConfig {
    let mut c = RunConfig::new(out);
    c.seed = seed;
    c
}

pub fn run_with(name: &str, config: &RunConfig) -> metacog_core::Result<RunOutcome> {
    let s = scenario(name);
    let backend = Arc::new(ScriptedBackend::for_scenario(&s));
    run_scenario(s, backend, config)
}

/// Every file under `root`, keyed by its relative path.
pub fn tree_bytes(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(root).unwrap().to_path_buf();
                out.insert(rel, std::fs::read(&path).unwrap());
            }
        }
    }
    out
}
