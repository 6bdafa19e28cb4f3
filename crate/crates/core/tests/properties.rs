use chrono::{DateTime, Utc};
use hitl_core::aggregate::{majority_vote, percentage_difference, PanelOutcome};
use hitl_core::assignment::{
    build_control_assignments, build_same_race_assignments, code_race, BuildParams, RaceCodingTable,
};
use hitl_core::corpus::{balance_strata, parse_manifest, ImagePair, PairManifest};
use hitl_core::simlab::{self, SimConfig};
use hitl_core::stats::{chi_square_sf, kruskal_wallis, median, normal_cdf};
use hitl_core::triage::{ensemble_score, ModelVerdict};
use hitl_core::{Condition, GroundTruth, HumanVerdict, LabelSet, RaceLabel, WorkerProfile};
use proptest::prelude::*;
use std::collections::{BTreeMap, BTreeSet};

fn truth() -> impl Strategy<Value = GroundTruth> {
    prop_oneof![Just(GroundTruth::Match), Just(GroundTruth::NonMatch)]
}

/// Manifest over the default labels with per-race stratum sizes from `sizes`.
fn manifest_with(sizes: &[usize], truths: &[GroundTruth]) -> PairManifest {
    let labels = LabelSet::default();
    let mut pairs = Vec::new();
    let mut t = truths.iter().cycle();
    for (label, &n) in labels.labels().iter().zip(sizes) {
        for i in 0..n {
            let id = format!("{}-{i:03}", label.to_lowercase());
            pairs.push(ImagePair {
                image_ref_a: format!("img/{id}-a.jpg"),
                image_ref_b: format!("img/{id}-b.jpg"),
                pair_id: id,
                race: RaceLabel::canonical(label.clone()),
                truth: *t.next().unwrap(),
            });
        }
    }
    PairManifest::from_pairs(pairs, labels, "prop").unwrap()
}

fn manifest_strategy() -> impl Strategy<Value = PairManifest> {
    (prop::collection::vec(1usize..30, 4), prop::collection::vec(truth(), 1..8))
        .prop_map(|(sizes, truths)| manifest_with(&sizes, &truths))
}

fn pair_ids(m: &PairManifest) -> BTreeSet<String> {
    m.index().keys().map(|k| k.to_string()).collect()
}

fn groups_strategy() -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec((0u32..15).prop_map(|v| v as f64 / 4.0), 3..20), 2..5)
        .prop_filter("needs two distinct values", |g| {
            let first = g[0][0];
            g.iter().flatten().any(|&v| v != first)
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn balancing_is_idempotent_and_never_fabricates(m in manifest_strategy(), seed in any::<u64>()) {
        let once = balance_strata(&m, seed).unwrap();
        let twice = balance_strata(&once, seed).unwrap();
        prop_assert_eq!(&once, &twice);
        prop_assert!(pair_ids(&once).is_subset(&pair_ids(&m)));
        let smallest = m.stratum_sizes().iter().map(|(_, n)| *n).min().unwrap();
        for (_, n) in once.stratum_sizes() {
            prop_assert_eq!(n, smallest);
        }
    }

    #[test]
    fn manifest_text_round_trips(m in manifest_strategy()) {
        let again = parse_manifest(&m.to_jsonl(), &LabelSet::default(), "again").unwrap();
        prop_assert_eq!(m, again);
    }

    #[test]
    fn ensemble_median_is_order_free_and_bounded(
        confs in prop::collection::vec(0.0f64..=1.0, 1..9),
        decisions in prop::collection::vec(truth(), 9),
        rotate in 0usize..9,
    ) {
        let verdicts: Vec<ModelVerdict> = confs
            .iter()
            .zip(&decisions)
            .enumerate()
            .map(|(i, (&confidence, &decision))| ModelVerdict {
                model_id: format!("m{i}"),
                pair_id: "p".into(),
                decision,
                confidence,
            })
            .collect();
        let mut shuffled = verdicts.clone();
        shuffled.rotate_left(rotate % verdicts.len());
        shuffled.reverse();
        let a = ensemble_score(&verdicts).unwrap();
        let b = ensemble_score(&shuffled).unwrap();
        prop_assert_eq!(&a, &b);
        let lo = confs.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = confs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(lo <= a.median_confidence && a.median_confidence <= hi);
    }

    #[test]
    fn builders_are_deterministic_and_draw_from_the_pool(
        m in manifest_strategy(),
        races in prop::collection::vec(0usize..4, 1..6),
        seed in any::<u64>(),
    ) {
        let labels = LabelSet::default();
        let smallest = m.stratum_sizes().iter().map(|(_, n)| *n).min().unwrap();
        let quota = smallest.min(6);
        let workers: Vec<WorkerProfile> = races
            .iter()
            .enumerate()
            .map(|(i, &r)| WorkerProfile {
                worker_id: format!("w{i}"),
                self_identified_race: labels.labels()[r].clone(),
                coded_race: RaceLabel::canonical(labels.labels()[r].clone()),
                prior_experience: false,
                condition: Condition::Ip,
            })
            .collect();
        let params = BuildParams::new(quota, seed);
        let a = build_same_race_assignments(&workers, &m, &params).unwrap();
        let b = build_same_race_assignments(&workers, &m, &params).unwrap();
        prop_assert_eq!(
            hitl_core::assignment::assignments_to_jsonl(&a),
            hitl_core::assignment::assignments_to_jsonl(&b)
        );
        let pool = pair_ids(&m);
        for x in &a {
            let unique: BTreeSet<&String> = x.pair_ids.iter().collect();
            prop_assert_eq!(unique.len(), x.pair_ids.len());
            prop_assert!(x.pair_ids.iter().all(|id| pool.contains(id)));
        }
        let control_quota = 4 * quota;
        if control_quota / 4 <= smallest {
            let params = BuildParams::new(control_quota, seed);
            let c = build_control_assignments(&workers, &m, &params).unwrap();
            let d = build_control_assignments(&workers, &m, &params).unwrap();
            prop_assert_eq!(&c, &d);
        }
    }

    #[test]
    fn coding_canonical_text_is_idempotent(label in prop::sample::select(vec!["African", "Asian", "Caucasian", "Indian"])) {
        let table = RaceCodingTable::default();
        let coded = code_race(label, &table);
        prop_assert_eq!(coded.as_canonical(), Some(label));
        let recoded = code_race(coded.as_canonical().unwrap(), &table);
        prop_assert_eq!(recoded, coded);
    }

    #[test]
    fn votes_are_conserved(decisions in prop::collection::vec(truth(), 1..15)) {
        let at = DateTime::<Utc>::UNIX_EPOCH;
        let verdicts: Vec<HumanVerdict> = decisions
            .iter()
            .enumerate()
            .map(|(i, &decision)| HumanVerdict {
                worker_id: format!("w{i}"),
                pair_id: "p".into(),
                decision,
                elapsed_ms: 1000,
                submitted_at: at,
            })
            .collect();
        let panel = majority_vote(&verdicts).unwrap();
        prop_assert_eq!(panel.votes_match + panel.votes_nonmatch, decisions.len());
        if decisions.iter().all(|&d| d == decisions[0]) {
            let expected = match decisions[0] {
                GroundTruth::Match => PanelOutcome::Match,
                GroundTruth::NonMatch => PanelOutcome::NonMatch,
            };
            prop_assert_eq!(panel.decision, expected);
            prop_assert_eq!(panel.votes_match.min(panel.votes_nonmatch), 0);
        }
    }

    #[test]
    fn percentage_difference_is_zero_on_equal_and_increasing(c in 1.0f64..100.0, a in 0.0f64..100.0, b in 0.0f64..100.0) {
        prop_assert_eq!(percentage_difference(c, c).unwrap(), 0.0);
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        prop_assume!(lo < hi);
        prop_assert!(percentage_difference(c, lo).unwrap() < percentage_difference(c, hi).unwrap());
    }

    #[test]
    fn median_is_bounded_and_order_free(mut values in prop::collection::vec(-1e6f64..1e6, 1..40)) {
        let m = median(&values).unwrap();
        let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(lo <= m && m <= hi);
        values.reverse();
        prop_assert_eq!(median(&values).unwrap(), m);
    }

    #[test]
    fn kruskal_wallis_depends_only_on_ranks(groups in groups_strategy()) {
        let base = kruskal_wallis(&groups).unwrap();
        prop_assert!(base.h >= 0.0);
        let transformed: Vec<Vec<f64>> = groups
            .iter()
            .map(|g| g.iter().map(|&x| (x * 0.7).exp() + 3.0 * x).collect())
            .collect();
        let t = kruskal_wallis(&transformed).unwrap();
        prop_assert!((t.h - base.h).abs() <= 1e-12);
        prop_assert!((t.p_value - base.p_value).abs() <= 1e-12);
    }

    #[test]
    fn kruskal_wallis_ignores_order(groups in groups_strategy()) {
        let base = kruskal_wallis(&groups).unwrap();
        let mut permuted: Vec<Vec<f64>> = groups
            .iter()
            .map(|g| {
                let mut g = g.clone();
                g.reverse();
                g
            })
            .collect();
        permuted.reverse();
        let p = kruskal_wallis(&permuted).unwrap();
        prop_assert_eq!(p.h, base.h);
        prop_assert_eq!(p.df, base.df);
    }

    #[test]
    fn chi_square_tail_decreases(df in 1u32..10, x in 0.0f64..60.0, step in 0.001f64..5.0) {
        prop_assert!(chi_square_sf(x + step, df).unwrap() <= chi_square_sf(x, df).unwrap());
    }

    #[test]
    fn chi_square_one_df_matches_normal_tail(x in 0.0f64..=25.0) {
        let direct = chi_square_sf(x, 1).unwrap();
        let via_normal = 2.0 * (1.0 - normal_cdf(x.sqrt()));
        prop_assert!((direct - via_normal).abs() <= 1e-6, "x={} {} vs {}", x, direct, via_normal);
    }
}

#[test]
fn raising_own_race_accuracy_never_lowers_the_ip_median() {
    let labels = LabelSet::default();
    let manifest = simlab::synthetic_manifest(&labels, 400);
    let mut previous: BTreeMap<String, f64> = BTreeMap::new();
    for own in [0.70, 0.78, 0.86] {
        let config = SimConfig {
            own_race_accuracy: own,
            cross_race_accuracy: 0.70,
            n_runs: 40,
            pairs_per_race: 400,
            ..SimConfig::default()
        };
        let summary = simlab::monte_carlo(&config, &manifest).unwrap();
        for r in &summary.races {
            if let Some(&before) = previous.get(&r.race) {
                assert!(
                    r.mean_ip_median >= before,
                    "{}: IP median fell from {before} to {} at own={own}",
                    r.race,
                    r.mean_ip_median
                );
            }
            previous.insert(r.race.clone(), r.mean_ip_median);
        }
    }
}
