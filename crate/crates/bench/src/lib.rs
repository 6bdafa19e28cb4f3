//! Seeded inputs shared by the benchmarks.

use hitl_core::corpus::LabelSet;
use hitl_core::seeding;
use hitl_core::triage::{EnsembleDecision, EnsembleScore};
use hitl_core::PairManifest;
use rand::Rng;

/// Per-worker accuracies on the k/32 grid, one group per condition.
pub fn accuracy_groups(k: usize, per_group: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = seeding::stream(seed);
    (0..k)
        .map(|_| {
            (0..per_group)
                .map(|_| rng.random_range(16..=32) as f64 / 32.0)
                .collect()
        })
        .collect()
}

pub fn ensemble_scores(n: usize, seed: u64) -> Vec<EnsembleScore> {
    let mut rng = seeding::stream(seed);
    (0..n)
        .map(|i| EnsembleScore {
            pair_id: format!("p{i:06}"),
            median_confidence: rng.random(),
            ensemble_decision: match rng.random_range(0..5) {
                0 => EnsembleDecision::Tie,
                1 | 2 => EnsembleDecision::Match,
                _ => EnsembleDecision::NonMatch,
            },
            model_count: 5,
        })
        .collect()
}

pub fn manifest(pairs_per_race: usize) -> PairManifest {
    hitl_core::simlab::synthetic_manifest(&LabelSet::default(), pairs_per_race)
}
