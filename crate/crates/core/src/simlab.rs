//! Synthetic crowdworkers with own-race bias and seeded Monte Carlo
//! replications of the control-versus-same-race experiment.
//!
//! Each synthetic worker answers a pair correctly with probability
//! `accuracy_matrix[pair race]`. Runs are independent: run `i` draws every
//! random number from streams derived from `(seed, i)`, so results do not
//! depend on whether runs execute serially or in parallel.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::path::PathBuf;

use chrono::{DateTime, Duration, Utc};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::aggregate::{self, AggregateError, ExperimentReport, HumanVerdict, Screening};
use crate::assignment::{
    self, AssignmentError, AssignmentPolicy, BuildParams, GoldReserve, TaskAssignment,
    WorkerProfile,
};
use crate::config::{ConfigError, KeyValues};
use crate::corpus::{CorpusError, GroundTruth, ImagePair, LabelSet, PairIndex, PairManifest, RaceLabel};
use crate::records;
use crate::seeding::{self, Stream};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error(transparent)]
    Assignment(#[from] AssignmentError),
    #[error(transparent)]
    Aggregate(#[from] AggregateError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("pair {0:?} is not in the manifest")]
    UnknownPair(String),
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
    #[error("worker model does not cover label {0:?}")]
    UncoveredLabel(String),
}

/// P(correct | face race) for one synthetic worker.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkerModel {
    pub race: RaceLabel,
    pub accuracy_matrix: BTreeMap<String, f64>,
}

impl WorkerModel {
    pub fn new(race: RaceLabel, accuracy_matrix: BTreeMap<String, f64>, labels: &LabelSet) -> Result<Self, SimError> {
        for label in labels.labels() {
            match accuracy_matrix.get(label) {
                Some(p) if (0.0..=1.0).contains(p) => {}
                Some(p) => return Err(SimError::InvalidConfig(format!("probability {p} for {label}"))),
                None => return Err(SimError::UncoveredLabel(label.clone())),
            }
        }
        Ok(WorkerModel { race, accuracy_matrix })
    }

    /// `own` on faces of the worker's race, `cross` on every other label.
    pub fn own_race(race: &RaceLabel, labels: &LabelSet, own: f64, cross: f64) -> Result<Self, SimError> {
        let matrix = labels
            .labels()
            .iter()
            .map(|l| {
                let p = if race.as_canonical() == Some(l.as_str()) { own } else { cross };
                (l.clone(), p)
            })
            .collect();
        WorkerModel::new(race.clone(), matrix, labels)
    }

    /// Same accuracy on every label.
    pub fn uniform(race: &RaceLabel, labels: &LabelSet, p: f64) -> Result<Self, SimError> {
        WorkerModel::own_race(race, labels, p, p)
    }

    fn accuracy_for(&self, race: &RaceLabel) -> Option<f64> {
        race.as_canonical().and_then(|l| self.accuracy_matrix.get(l)).copied()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub workers_per_race: usize,
    pub quota: usize,
    pub gold_count: usize,
    pub own_race_accuracy: f64,
    pub cross_race_accuracy: f64,
    pub policies: Vec<AssignmentPolicy>,
    pub seed: u64,
    pub n_runs: usize,
    /// Size of each stratum of the generated manifest when no manifest file
    /// is given.
    pub pairs_per_race: usize,
    pub manifest: Option<PathBuf>,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            workers_per_race: 20,
            quota: assignment::DEFAULT_QUOTA,
            gold_count: assignment::DEFAULT_GOLD_COUNT,
            own_race_accuracy: 0.82,
            cross_race_accuracy: 0.70,
            policies: vec![AssignmentPolicy::BalancedAcrossRaces, AssignmentPolicy::SameRace],
            seed: 20_240_501,
            n_runs: 1000,
            pairs_per_race: 2000,
            manifest: None,
        }
    }
}

const SIM_KEYS: &[&str] = &[
    "workers_per_race",
    "quota",
    "gold_count",
    "own_race_accuracy",
    "cross_race_accuracy",
    "policies",
    "seed",
    "n_runs",
    "pairs_per_race",
    "manifest",
];

impl SimConfig {
    /// Reads a `key = value` file; absent keys keep their defaults.
    pub fn from_key_values(kv: &KeyValues) -> Result<Self, SimError> {
        kv.restrict(SIM_KEYS)?;
        let d = SimConfig::default();
        let policies = match kv.list("policies") {
            Some(items) => items
                .iter()
                .map(|s| s.parse::<AssignmentPolicy>().map_err(SimError::InvalidConfig))
                .collect::<Result<Vec<_>, _>>()?,
            None => d.policies.clone(),
        };
        let config = SimConfig {
            workers_per_race: kv.get_or("workers_per_race", d.workers_per_race)?,
            quota: kv.get_or("quota", d.quota)?,
            gold_count: kv.get_or("gold_count", d.gold_count)?,
            own_race_accuracy: kv.get_or("own_race_accuracy", d.own_race_accuracy)?,
            cross_race_accuracy: kv.get_or("cross_race_accuracy", d.cross_race_accuracy)?,
            policies,
            seed: kv.get_or("seed", d.seed)?,
            n_runs: kv.get_or("n_runs", d.n_runs)?,
            pairs_per_race: kv.get_or("pairs_per_race", d.pairs_per_race)?,
            manifest: kv.raw("manifest").map(PathBuf::from),
        };
        config.validate()?;
        Ok(config)
    }

    pub fn parse(text: &str) -> Result<Self, SimError> {
        SimConfig::from_key_values(&KeyValues::parse(text)?)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let prob = |name: &str, p: f64| {
            if (0.0..=1.0).contains(&p) {
                Ok(())
            } else {
                Err(SimError::InvalidConfig(format!("{name} = {p} outside [0, 1]")))
            }
        };
        prob("own_race_accuracy", self.own_race_accuracy)?;
        prob("cross_race_accuracy", self.cross_race_accuracy)?;
        if self.workers_per_race == 0 || self.quota == 0 || self.n_runs == 0 {
            return Err(SimError::InvalidConfig(
                "workers_per_race, quota and n_runs must be positive".into(),
            ));
        }
        if self.policies.is_empty() {
            return Err(SimError::InvalidConfig("no policies".into()));
        }
        Ok(())
    }

    pub fn to_key_values(&self) -> String {
        let policies: Vec<&str> = self.policies.iter().map(|p| p.as_str()).collect();
        let mut out = String::new();
        let _ = writeln!(out, "workers_per_race = {}", self.workers_per_race);
        let _ = writeln!(out, "quota = {}", self.quota);
        let _ = writeln!(out, "gold_count = {}", self.gold_count);
        let _ = writeln!(out, "own_race_accuracy = {}", self.own_race_accuracy);
        let _ = writeln!(out, "cross_race_accuracy = {}", self.cross_race_accuracy);
        let _ = writeln!(out, "policies = {}", policies.join(","));
        let _ = writeln!(out, "seed = {}", self.seed);
        let _ = writeln!(out, "n_runs = {}", self.n_runs);
        let _ = writeln!(out, "pairs_per_race = {}", self.pairs_per_race);
        if let Some(m) = &self.manifest {
            let _ = writeln!(out, "manifest = {}", m.display());
        }
        out
    }
}

/// A balanced manifest with `pairs_per_race` pairs per label, alternating
/// match and non-match. Image references are placeholders.
pub fn synthetic_manifest(labels: &LabelSet, pairs_per_race: usize) -> PairManifest {
    let mut pairs = Vec::with_capacity(labels.len() * pairs_per_race);
    for label in labels.labels() {
        for i in 0..pairs_per_race {
            let id = format!("{}-{i:05}", label.to_lowercase());
            pairs.push(ImagePair {
                image_ref_a: format!("synthetic://{id}/a"),
                image_ref_b: format!("synthetic://{id}/b"),
                pair_id: id,
                race: RaceLabel::canonical(label.clone()),
                truth: if i % 2 == 0 { GroundTruth::Match } else { GroundTruth::NonMatch },
            });
        }
    }
    PairManifest::from_pairs(pairs, labels.clone(), "synthetic").expect("generated ids are unique")
}

/// Answers every pair of `assignment` by drawing from `stream`.
pub fn simulate_worker(
    model: &WorkerModel,
    assignment: &TaskAssignment,
    manifest: &PairManifest,
    stream: &mut Stream,
) -> Result<Vec<HumanVerdict>, SimError> {
    simulate_worker_indexed(model, assignment, &manifest.index(), stream)
}

pub fn simulate_worker_indexed(
    model: &WorkerModel,
    assignment: &TaskAssignment,
    index: &PairIndex<'_>,
    stream: &mut Stream,
) -> Result<Vec<HumanVerdict>, SimError> {
    let mut clock = assignment.created_at;
    assignment
        .pair_ids
        .iter()
        .map(|id| {
            let pair = index.get(id.as_str()).ok_or_else(|| SimError::UnknownPair(id.clone()))?;
            let p = model
                .accuracy_for(&pair.race)
                .ok_or_else(|| SimError::UncoveredLabel(pair.race.to_string()))?;
            let correct = stream.random::<f64>() < p;
            let elapsed_ms = stream.random_range(800..6000u64);
            clock += Duration::milliseconds(elapsed_ms as i64);
            Ok(HumanVerdict {
                worker_id: assignment.worker_id.clone(),
                pair_id: id.clone(),
                decision: if correct { pair.truth } else { pair.truth.flipped() },
                elapsed_ms,
                submitted_at: clock,
            })
        })
        .collect()
}

// Stream keys.
const GOLD_RESERVE: u64 = 1;
const ASSIGN: u64 = 2;
const GOLD_INJECT: u64 = 3;

/// Precomputed state shared by every run of one configuration: the gold
/// reserve per race and the routed pool the assignments draw from.
pub struct SimPlan<'m> {
    config: SimConfig,
    labels: LabelSet,
    reserve: GoldReserve,
    index: PairIndex<'m>,
}

impl<'m> SimPlan<'m> {
    /// Reserves `gold_count` pairs per race as gold (seeded by the master
    /// seed) and keeps the rest as the routed pool.
    pub fn new(config: &SimConfig, manifest: &'m PairManifest) -> Result<Self, SimError> {
        config.validate()?;
        let reserve = assignment::reserve_gold(
            manifest,
            config.gold_count,
            seeding::derive(config.seed, &[GOLD_RESERVE]),
        )?;
        Ok(SimPlan {
            config: config.clone(),
            labels: manifest.labels.clone(),
            reserve,
            index: manifest.index(),
        })
    }

    fn registry(&self) -> Vec<WorkerProfile> {
        let mut workers = Vec::new();
        for policy in &self.config.policies {
            let condition = policy.condition();
            for label in self.labels.labels() {
                for i in 0..self.config.workers_per_race {
                    workers.push(WorkerProfile {
                        worker_id: format!("{condition}-{}-{i:03}", label.to_lowercase()),
                        self_identified_race: label.clone(),
                        coded_race: RaceLabel::canonical(label.clone()),
                        prior_experience: false,
                        condition,
                    });
                }
            }
        }
        workers
    }

    /// Runs replication `run_index` end to end.
    pub fn run(&self, run_index: u64) -> Result<ExperimentReport, SimError> {
        let run_seed = run_seed(self.config.seed, run_index);
        let workers = self.registry();
        let params = BuildParams {
            quota: self.config.quota,
            seed: seeding::derive(run_seed, &[ASSIGN]),
            created_at: DateTime::<Utc>::UNIX_EPOCH,
        };
        let gold_seed = seeding::derive(run_seed, &[GOLD_INJECT]);

        let mut scores = Vec::with_capacity(workers.len());
        let mut screenings = BTreeMap::new();
        for policy in &self.config.policies {
            let cohort: Vec<WorkerProfile> = workers
                .iter()
                .filter(|w| w.condition == policy.condition())
                .cloned()
                .collect();
            let built = match policy {
                AssignmentPolicy::SameRace => {
                    assignment::build_same_race_assignments(&cohort, &self.reserve.routed, &params)?
                }
                AssignmentPolicy::BalancedAcrossRaces => {
                    assignment::build_control_assignments(&cohort, &self.reserve.routed, &params)?
                }
            };
            for (worker, base) in cohort.iter().zip(built) {
                let gold = self.reserve.pool_for(worker);
                let count = self.config.gold_count.min(gold.len());
                let task = assignment::inject_gold(&base, &worker.coded_race, &gold, count, gold_seed)?;
                let model = WorkerModel::own_race(
                    &worker.coded_race,
                    &self.labels,
                    self.config.own_race_accuracy,
                    self.config.cross_race_accuracy,
                )?;
                let mut stream = seeding::stream(seeding::derive_str(run_seed, "worker", &worker.worker_id));
                let verdicts = simulate_worker_indexed(&model, &task, &self.index, &mut stream)?;
                scores.push(aggregate::score_worker_indexed(&verdicts, &task, worker, &self.index)?);
                let screening = aggregate::screen_gold_indexed(&verdicts, &task, &self.index)?;
                if let Screening::Fail(_) = screening {
                    screenings.insert(worker.worker_id.clone(), screening);
                }
            }
        }
        Ok(aggregate::build_report(&scores, &screenings, &self.labels, &[])?)
    }
}

/// Seed of run `run_index`.
pub fn run_seed(master: u64, run_index: u64) -> u64 {
    seeding::derive(master, &[run_index])
}

/// One full control-versus-IP replication.
pub fn run_experiment(
    config: &SimConfig,
    manifest: &PairManifest,
    run_index: u64,
) -> Result<ExperimentReport, SimError> {
    SimPlan::new(config, manifest)?.run(run_index)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RaceSimSummary {
    pub race: String,
    /// Fraction of runs with IP median strictly above control median.
    pub ip_beats_control: f64,
    pub mean_difference: f64,
    pub sd_difference: f64,
    pub mean_control_median: f64,
    pub mean_ip_median: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimSummary {
    pub config: SimConfig,
    pub n_runs: usize,
    pub races: Vec<RaceSimSummary>,
    pub reports: Vec<ExperimentReport>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Execution {
    Serial,
    Parallel,
}

/// `config.n_runs` independent replications folded in run order.
pub fn monte_carlo(config: &SimConfig, manifest: &PairManifest) -> Result<SimSummary, SimError> {
    monte_carlo_with(config, manifest, Execution::Parallel)
}

pub fn monte_carlo_with(
    config: &SimConfig,
    manifest: &PairManifest,
    execution: Execution,
) -> Result<SimSummary, SimError> {
    let plan = SimPlan::new(config, manifest)?;
    let runs = 0..config.n_runs as u64;
    let reports: Vec<ExperimentReport> = match execution {
        Execution::Serial => runs.map(|i| plan.run(i)).collect::<Result<_, _>>()?,
        Execution::Parallel => runs
            .into_par_iter()
            .map(|i| plan.run(i))
            .collect::<Result<_, _>>()?,
    };
    Ok(summarize(config, &plan.labels, reports))
}

fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn summarize(config: &SimConfig, labels: &LabelSet, reports: Vec<ExperimentReport>) -> SimSummary {
    let races = labels
        .labels()
        .iter()
        .filter_map(|race| {
            let comps: Vec<_> = reports.iter().filter_map(|r| r.comparison(race)).collect();
            if comps.is_empty() {
                return None;
            }
            let wins = comps.iter().filter(|c| c.ip_median > c.control_median).count();
            let diffs: Vec<f64> = comps.iter().map(|c| c.percentage_difference).collect();
            let (mean_difference, sd_difference) = mean_sd(&diffs);
            let n = comps.len() as f64;
            Some(RaceSimSummary {
                race: race.clone(),
                ip_beats_control: wins as f64 / n,
                mean_difference,
                sd_difference,
                mean_control_median: comps.iter().map(|c| c.control_median).sum::<f64>() / n,
                mean_ip_median: comps.iter().map(|c| c.ip_median).sum::<f64>() / n,
            })
        })
        .collect();
    SimSummary {
        config: config.clone(),
        n_runs: reports.len(),
        races,
        reports,
    }
}

/// Machine-readable per-run record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run_index: usize,
    pub run_seed: u64,
    pub excluded: usize,
    pub races: Vec<RunRace>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRace {
    pub race: String,
    pub control_median: f64,
    pub ip_median: f64,
    pub percentage_difference: f64,
    pub h: Option<f64>,
    pub p_value: Option<f64>,
}

impl SimSummary {
    pub fn run_records(&self) -> Vec<RunRecord> {
        self.reports
            .iter()
            .enumerate()
            .map(|(i, r)| RunRecord {
                run_index: i,
                run_seed: run_seed(self.config.seed, i as u64),
                excluded: r.excluded_workers.len(),
                races: r
                    .comparisons
                    .iter()
                    .map(|c| RunRace {
                        race: c.race.clone(),
                        control_median: c.control_median,
                        ip_median: c.ip_median,
                        percentage_difference: c.percentage_difference,
                        h: c.kw.map(|k| k.h),
                        p_value: c.kw.map(|k| k.p_value),
                    })
                    .collect(),
            })
            .collect()
    }

    pub fn run_log(&self) -> String {
        records::encode_all(self.run_records())
    }

    /// Config echo, per-race summary, then the first run's full report.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str("# config\n");
        out.push_str(&self.config.to_key_values());
        let _ = writeln!(out, "\n# summary ({} runs)", self.n_runs);
        out.push_str("race\tip_beats_control\tmean_diff_pct\tsd_diff_pct\tmean_control_pct\tmean_ip_pct\n");
        for r in &self.races {
            let _ = writeln!(
                out,
                "{}\t{:.4}\t{:+.4}\t{:.4}\t{:.4}\t{:.4}",
                r.race,
                r.ip_beats_control,
                r.mean_difference,
                r.sd_difference,
                r.mean_control_median * 100.0,
                r.mean_ip_median * 100.0
            );
        }
        if let Some(first) = self.reports.first() {
            out.push_str("\n# run 0\n");
            out.push_str(&first.to_text());
        }
        out
    }

    pub fn race(&self, race: &str) -> Option<&RaceSimSummary> {
        self.races.iter().find(|r| r.race == race)
    }
}

/// Count of correct answers per pair id, for tests and diagnostics.
pub fn correct_count(verdicts: &[HumanVerdict], manifest_index: &HashMap<&str, &ImagePair>) -> usize {
    verdicts
        .iter()
        .filter(|v| manifest_index.get(v.pair_id.as_str()).is_some_and(|p| p.truth == v.decision))
        .count()
}
