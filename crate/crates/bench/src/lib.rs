//! Fixtures shared by the criterion benches.

use std::path::PathBuf;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Path of a bundled scenario file.
pub fn scenario_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../core/scenarios")
        .join(format!("{name}.toml"))
}

const WORDS: [&str; 16] = [
    "open", "breathing", "exercise", "scan", "archive", "user", "stressed", "docs", "summary", "report", "calm",
    "ocr", "notes", "search", "verify", "page",
];

/// Seeded pseudo-sentences for embedding and retrieval benches.
pub fn sentences(n: usize, seed: u64) -> Vec<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| (0..8).map(|_| *WORDS.choose(&mut rng).unwrap()).collect::<Vec<_>>().join(" "))
        .collect()
}
