//! Worker registration, race coding, and construction of task assignments
//! under the same-race and balanced-control policies.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use chrono::{DateTime, Utc};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{ImagePair, LabelSet, PairManifest, RaceLabel};
use crate::records;
use crate::seeding;

/// Scored pairs per worker unless configured otherwise.
pub const DEFAULT_QUOTA: usize = 32;
/// Hidden gold pairs added on top of the quota.
pub const DEFAULT_GOLD_COUNT: usize = 2;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AssignmentError {
    #[error("race {race}: have {have} pairs, need {need}")]
    InsufficientPairs { race: String, have: usize, need: usize },
    #[error("worker {0:?} has no canonical race")]
    UnmappedWorker(String),
    #[error("quota {quota} is not divisible by {label_count} labels")]
    QuotaNotDivisible { quota: usize, label_count: usize },
    #[error("quota must be positive")]
    InvalidQuota,
    #[error("gold pair {0:?} does not match the worker's race")]
    GoldRaceMismatch(String),
    #[error("need {need} gold pairs, have {have}")]
    NotEnoughGold { have: usize, need: usize },
    #[error("gold pair {0:?} is already part of the assignment")]
    GoldOverlap(String),
    #[error("duplicate worker id {0:?}")]
    DuplicateWorker(String),
    #[error("line {line}: {reason}")]
    ParseError { line: usize, reason: String },
    #[error("coding table maps to unknown label {0:?}")]
    UnknownLabel(String),
    #[error("duplicate coding pattern {0:?}")]
    DuplicatePattern(String),
    #[error("i/o error on {path}: {message}")]
    Io { path: String, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    Control,
    Ip,
    Unassigned,
}

impl Condition {
    pub fn as_str(self) -> &'static str {
        match self {
            Condition::Control => "control",
            Condition::Ip => "ip",
            Condition::Unassigned => "unassigned",
        }
    }

    /// The assignment policy a condition works under.
    pub fn policy(self) -> Option<AssignmentPolicy> {
        match self {
            Condition::Control => Some(AssignmentPolicy::BalancedAcrossRaces),
            Condition::Ip => Some(AssignmentPolicy::SameRace),
            Condition::Unassigned => None,
        }
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorkerProfile {
    pub worker_id: String,
    pub self_identified_race: String,
    pub coded_race: RaceLabel,
    pub prior_experience: bool,
    pub condition: Condition,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AssignmentPolicy {
    SameRace,
    BalancedAcrossRaces,
}

impl AssignmentPolicy {
    pub fn as_str(self) -> &'static str {
        match self {
            AssignmentPolicy::SameRace => "same_race",
            AssignmentPolicy::BalancedAcrossRaces => "balanced_across_races",
        }
    }

    pub fn condition(self) -> Condition {
        match self {
            AssignmentPolicy::SameRace => Condition::Ip,
            AssignmentPolicy::BalancedAcrossRaces => Condition::Control,
        }
    }
}

impl fmt::Display for AssignmentPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AssignmentPolicy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "same_race" | "ip" => Ok(AssignmentPolicy::SameRace),
            "balanced_across_races" | "balanced" | "control" => {
                Ok(AssignmentPolicy::BalancedAcrossRaces)
            }
            other => Err(format!("unknown assignment policy {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskAssignment {
    pub assignment_id: String,
    pub worker_id: String,
    pub policy: AssignmentPolicy,
    pub pair_ids: Vec<String>,
    pub gold_pair_ids: Vec<String>,
    pub created_at: DateTime<Utc>,
}

impl TaskAssignment {
    pub fn is_gold(&self, pair_id: &str) -> bool {
        self.gold_pair_ids.iter().any(|g| g == pair_id)
    }

    pub fn contains(&self, pair_id: &str) -> bool {
        self.pair_ids.iter().any(|p| p == pair_id)
    }

    /// Pairs that count towards the worker's accuracy.
    pub fn scored_pair_ids(&self) -> impl Iterator<Item = &String> {
        self.pair_ids.iter().filter(|p| !self.is_gold(p))
    }
}

/// On-disk form of an assignment.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssignmentRecord {
    pub assignment_id: String,
    pub worker_id: String,
    pub policy: AssignmentPolicy,
    pub pair_ids: Vec<String>,
    pub gold_pair_ids: Vec<String>,
}

impl From<&TaskAssignment> for AssignmentRecord {
    fn from(a: &TaskAssignment) -> Self {
        AssignmentRecord {
            assignment_id: a.assignment_id.clone(),
            worker_id: a.worker_id.clone(),
            policy: a.policy,
            pair_ids: a.pair_ids.clone(),
            gold_pair_ids: a.gold_pair_ids.clone(),
        }
    }
}

pub fn assignments_to_jsonl(assignments: &[TaskAssignment]) -> String {
    records::encode_all(assignments.iter().map(AssignmentRecord::from))
}

/// Lowercases, trims and collapses inner whitespace.
pub fn normalize(text: &str) -> String {
    text.split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}

/// Ordered mapping from normalized self-identification text to labels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RaceCodingTable {
    entries: Vec<(String, String)>,
}

const DEFAULT_CODING: &[(&str, &str)] = &[
    ("african", "African"),
    ("black or african american", "African"),
    ("black", "African"),
    ("african american", "African"),
    ("african-american", "African"),
    ("black african", "African"),
    ("asian", "Asian"),
    ("east asian", "Asian"),
    ("asian american", "Asian"),
    ("southeast asian", "Asian"),
    ("caucasian", "Caucasian"),
    ("white", "Caucasian"),
    ("white or caucasian", "Caucasian"),
    ("european", "Caucasian"),
    ("indian", "Indian"),
    ("asian indian", "Indian"),
    ("south asian", "Indian"),
];

impl RaceCodingTable {
    pub fn new<P: AsRef<str>, L: Into<String>>(
        entries: impl IntoIterator<Item = (P, L)>,
        labels: &LabelSet,
    ) -> Result<Self, AssignmentError> {
        let mut seen = HashSet::new();
        let mut out = Vec::new();
        for (pattern, label) in entries {
            let pattern = normalize(pattern.as_ref());
            let label = label.into();
            if !labels.contains(&label) {
                return Err(AssignmentError::UnknownLabel(label));
            }
            if !seen.insert(pattern.clone()) {
                return Err(AssignmentError::DuplicatePattern(pattern));
            }
            out.push((pattern, label));
        }
        Ok(RaceCodingTable { entries: out })
    }

    /// Parses `pattern = label` lines; `#` starts a comment line.
    pub fn parse(text: &str, labels: &LabelSet) -> Result<Self, AssignmentError> {
        let mut entries = Vec::new();
        for (idx, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (pattern, label) = line.rsplit_once('=').ok_or(AssignmentError::ParseError {
                line: idx + 1,
                reason: "expected `pattern = label`".into(),
            })?;
            if pattern.trim().is_empty() {
                return Err(AssignmentError::ParseError {
                    line: idx + 1,
                    reason: "empty pattern".into(),
                });
            }
            entries.push((pattern.to_string(), label.trim().to_string()));
        }
        RaceCodingTable::new(entries, labels)
    }

    pub fn load(path: &Path, labels: &LabelSet) -> Result<Self, AssignmentError> {
        let text = std::fs::read_to_string(path).map_err(|e| AssignmentError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        RaceCodingTable::parse(&text, labels)
    }

    pub fn entries(&self) -> &[(String, String)] {
        &self.entries
    }
}

impl Default for RaceCodingTable {
    fn default() -> Self {
        RaceCodingTable::new(DEFAULT_CODING.iter().copied(), &LabelSet::default())
            .expect("default coding table is valid")
    }
}

/// Codes free-text self-identification to a canonical label; the first
/// exactly matching normalized pattern wins.
pub fn code_race(self_id: &str, table: &RaceCodingTable) -> RaceLabel {
    let key = normalize(self_id);
    table
        .entries
        .iter()
        .find(|(pattern, _)| *pattern == key)
        .map(|(_, label)| RaceLabel::canonical(label.clone()))
        .unwrap_or_else(|| RaceLabel::unmapped(self_id))
}

/// Single-writer registry of worker profiles, in registration order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct WorkerRegistry {
    workers: Vec<WorkerProfile>,
    index: HashMap<String, usize>,
}

impl WorkerRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, profile: WorkerProfile) -> Result<&WorkerProfile, AssignmentError> {
        if self.index.contains_key(&profile.worker_id) {
            return Err(AssignmentError::DuplicateWorker(profile.worker_id));
        }
        self.index.insert(profile.worker_id.clone(), self.workers.len());
        self.workers.push(profile);
        Ok(self.workers.last().expect("just pushed"))
    }

    pub fn get(&self, worker_id: &str) -> Option<&WorkerProfile> {
        self.index.get(worker_id).map(|&i| &self.workers[i])
    }

    pub fn workers(&self) -> &[WorkerProfile] {
        &self.workers
    }

    pub fn len(&self) -> usize {
        self.workers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.workers.is_empty()
    }
}

/// Parameters shared by the assignment builders.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BuildParams {
    pub quota: usize,
    pub seed: u64,
    pub created_at: DateTime<Utc>,
}

impl BuildParams {
    pub fn new(quota: usize, seed: u64) -> Self {
        BuildParams {
            quota,
            seed,
            created_at: DateTime::<Utc>::UNIX_EPOCH,
        }
    }
}

pub fn assignment_id(worker_id: &str) -> String {
    format!("asg-{worker_id}")
}

fn strata_by_label(routed: &PairManifest) -> HashMap<&str, Vec<&ImagePair>> {
    let mut strata: HashMap<&str, Vec<&ImagePair>> = HashMap::new();
    for pair in &routed.pairs {
        if let Some(label) = pair.race.as_canonical() {
            strata.entry(label).or_default().push(pair);
        }
    }
    strata
}

fn sample_ids(stratum: &[&ImagePair], k: usize, rng: &mut seeding::Stream) -> Vec<String> {
    let mut idx: Vec<usize> = (0..stratum.len()).collect();
    let (chosen, _) = idx.partial_shuffle(rng, k);
    chosen.iter().map(|&i| stratum[i].pair_id.clone()).collect()
}

fn worker_stream(seed: u64, policy: AssignmentPolicy, worker_id: &str) -> seeding::Stream {
    seeding::stream(seeding::derive_str(seed, policy.as_str(), worker_id))
}

/// Builds one same-race assignment for `worker`.
pub fn same_race_assignment(
    worker: &WorkerProfile,
    routed: &PairManifest,
    params: &BuildParams,
) -> Result<TaskAssignment, AssignmentError> {
    build_same_race_assignments(std::slice::from_ref(worker), routed, params)
        .map(|mut v| v.remove(0))
}

/// One assignment per worker holding `quota` pairs of the worker's coded
/// race, sampled without replacement from the routed set.
pub fn build_same_race_assignments(
    workers: &[WorkerProfile],
    routed: &PairManifest,
    params: &BuildParams,
) -> Result<Vec<TaskAssignment>, AssignmentError> {
    if params.quota == 0 {
        return Err(AssignmentError::InvalidQuota);
    }
    let strata = strata_by_label(routed);
    let empty = Vec::new();
    workers
        .iter()
        .map(|worker| {
            let race = worker
                .coded_race
                .as_canonical()
                .ok_or_else(|| AssignmentError::UnmappedWorker(worker.worker_id.clone()))?;
            let stratum = strata.get(race).unwrap_or(&empty);
            if stratum.len() < params.quota {
                return Err(AssignmentError::InsufficientPairs {
                    race: race.to_string(),
                    have: stratum.len(),
                    need: params.quota,
                });
            }
            let mut rng = worker_stream(params.seed, AssignmentPolicy::SameRace, &worker.worker_id);
            Ok(TaskAssignment {
                assignment_id: assignment_id(&worker.worker_id),
                worker_id: worker.worker_id.clone(),
                policy: AssignmentPolicy::SameRace,
                pair_ids: sample_ids(stratum, params.quota, &mut rng),
                gold_pair_ids: Vec::new(),
                created_at: params.created_at,
            })
        })
        .collect()
}

pub fn control_assignment(
    worker: &WorkerProfile,
    routed: &PairManifest,
    params: &BuildParams,
) -> Result<TaskAssignment, AssignmentError> {
    build_control_assignments(std::slice::from_ref(worker), routed, params)
        .map(|mut v| v.remove(0))
}

/// One assignment per worker with `quota / |labels|` pairs from every race,
/// presented in a shuffled order.
pub fn build_control_assignments(
    workers: &[WorkerProfile],
    routed: &PairManifest,
    params: &BuildParams,
) -> Result<Vec<TaskAssignment>, AssignmentError> {
    if params.quota == 0 {
        return Err(AssignmentError::InvalidQuota);
    }
    let labels = routed.labels.labels();
    if params.quota % labels.len() != 0 {
        return Err(AssignmentError::QuotaNotDivisible {
            quota: params.quota,
            label_count: labels.len(),
        });
    }
    let per_race = params.quota / labels.len();
    let strata = strata_by_label(routed);
    let empty = Vec::new();
    for label in labels {
        let have = strata.get(label.as_str()).map_or(0, Vec::len);
        if have < per_race {
            return Err(AssignmentError::InsufficientPairs {
                race: label.clone(),
                have,
                need: per_race,
            });
        }
    }

    Ok(workers
        .iter()
        .map(|worker| {
            let mut rng = worker_stream(
                params.seed,
                AssignmentPolicy::BalancedAcrossRaces,
                &worker.worker_id,
            );
            let mut pair_ids = Vec::with_capacity(params.quota);
            for label in labels {
                let stratum = strata.get(label.as_str()).unwrap_or(&empty);
                pair_ids.extend(sample_ids(stratum, per_race, &mut rng));
            }
            pair_ids.shuffle(&mut rng);
            TaskAssignment {
                assignment_id: assignment_id(&worker.worker_id),
                worker_id: worker.worker_id.clone(),
                policy: AssignmentPolicy::BalancedAcrossRaces,
                pair_ids,
                gold_pair_ids: Vec::new(),
                created_at: params.created_at,
            }
        })
        .collect())
}

/// Inserts `count` gold pairs, drawn from `gold`, at seeded random positions.
/// `worker_race` is the coded race of the assignee; same-race assignments
/// only accept gold of that race.
pub fn inject_gold(
    assignment: &TaskAssignment,
    worker_race: &RaceLabel,
    gold: &[ImagePair],
    count: usize,
    seed: u64,
) -> Result<TaskAssignment, AssignmentError> {
    if count == 0 {
        return Ok(assignment.clone());
    }
    if count > gold.len() {
        return Err(AssignmentError::NotEnoughGold {
            have: gold.len(),
            need: count,
        });
    }
    let existing: HashSet<&str> = assignment.pair_ids.iter().map(String::as_str).collect();
    for pair in gold {
        if existing.contains(pair.pair_id.as_str()) {
            return Err(AssignmentError::GoldOverlap(pair.pair_id.clone()));
        }
        if assignment.policy == AssignmentPolicy::SameRace && &pair.race != worker_race {
            return Err(AssignmentError::GoldRaceMismatch(pair.pair_id.clone()));
        }
    }

    let mut rng = seeding::stream(seeding::derive_str(seed, "gold", &assignment.assignment_id));
    let mut idx: Vec<usize> = (0..gold.len()).collect();
    let (chosen, _) = idx.partial_shuffle(&mut rng, count);
    let chosen: Vec<&str> = chosen.iter().map(|&i| gold[i].pair_id.as_str()).collect();

    let mut pair_ids = assignment.pair_ids.clone();
    for id in &chosen {
        let pos = rng.random_range(0..=pair_ids.len());
        pair_ids.insert(pos, id.to_string());
    }
    let gold_set: HashSet<&str> = chosen.iter().copied().collect();
    let gold_pair_ids = pair_ids
        .iter()
        .filter(|p| gold_set.contains(p.as_str()))
        .cloned()
        .collect();

    Ok(TaskAssignment {
        pair_ids,
        gold_pair_ids,
        ..assignment.clone()
    })
}

/// Gold pairs set aside per race, and the routed pool left for assignments.
#[derive(Debug, Clone, PartialEq)]
pub struct GoldReserve {
    pub routed: PairManifest,
    pub gold_by_race: BTreeMap<String, Vec<ImagePair>>,
}

impl GoldReserve {
    /// Gold a worker may be shown: own race under IP, every race otherwise.
    pub fn pool_for(&self, worker: &WorkerProfile) -> Vec<ImagePair> {
        match worker.condition {
            Condition::Ip => worker
                .coded_race
                .as_canonical()
                .and_then(|l| self.gold_by_race.get(l))
                .cloned()
                .unwrap_or_default(),
            _ => self.gold_by_race.values().flatten().cloned().collect(),
        }
    }
}

/// Draws `per_race` gold pairs from every stratum; the rest stay routed.
pub fn reserve_gold(manifest: &PairManifest, per_race: usize, seed: u64) -> Result<GoldReserve, AssignmentError> {
    let mut gold_by_race = BTreeMap::new();
    let mut reserved = HashSet::new();
    for (i, label) in manifest.labels.labels().iter().enumerate() {
        let mut members: Vec<&ImagePair> = manifest
            .pairs
            .iter()
            .filter(|p| p.race.as_canonical() == Some(label.as_str()))
            .collect();
        if members.len() < per_race {
            return Err(AssignmentError::NotEnoughGold {
                have: members.len(),
                need: per_race,
            });
        }
        let mut rng = seeding::stream(seeding::derive(seed, &[i as u64]));
        let (chosen, _) = members.partial_shuffle(&mut rng, per_race);
        let gold: Vec<ImagePair> = chosen.iter().map(|p| (*p).clone()).collect();
        reserved.extend(gold.iter().map(|p| p.pair_id.clone()));
        gold_by_race.insert(label.clone(), gold);
    }
    let routed_pairs = manifest
        .pairs
        .iter()
        .filter(|p| !reserved.contains(&p.pair_id))
        .cloned()
        .collect();
    let routed = PairManifest::from_pairs(routed_pairs, manifest.labels.clone(), "routed")
        .expect("subset of a valid manifest");
    Ok(GoldReserve { routed, gold_by_race })
}

/// Checks an assignment against its structural and policy invariants.
pub fn audit_assignment(
    assignment: &TaskAssignment,
    worker: &WorkerProfile,
    manifest: &PairManifest,
) -> Result<(), String> {
    let mut seen = HashSet::new();
    for id in &assignment.pair_ids {
        if !seen.insert(id.as_str()) {
            return Err(format!("pair {id} appears twice"));
        }
    }
    if let Some(g) = assignment.gold_pair_ids.iter().find(|g| !seen.contains(g.as_str())) {
        return Err(format!("gold pair {g} not in pair list"));
    }
    let index = manifest.index();
    let mut per_race: HashMap<&RaceLabel, usize> = HashMap::new();
    for id in assignment.scored_pair_ids() {
        let pair = index
            .get(id.as_str())
            .ok_or_else(|| format!("pair {id} not in manifest"))?;
        *per_race.entry(&pair.race).or_default() += 1;
        if assignment.policy == AssignmentPolicy::SameRace && pair.race != worker.coded_race {
            return Err(format!("pair {id} is {} but worker is {}", pair.race, worker.coded_race));
        }
    }
    if assignment.policy == AssignmentPolicy::BalancedAcrossRaces {
        let counts: Vec<usize> = manifest
            .labels
            .iter()
            .map(|l| per_race.get(&l).copied().unwrap_or(0))
            .collect();
        if counts.windows(2).any(|w| w[0] != w[1]) {
            return Err(format!("unbalanced control assignment: {counts:?}"));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::tests::{manifest_with_sizes, pair};
    use crate::corpus::GroundTruth;

    fn worker(id: &str, race: RaceLabel, condition: Condition) -> WorkerProfile {
        WorkerProfile {
            worker_id: id.into(),
            self_identified_race: race.to_string(),
            coded_race: race,
            prior_experience: false,
            condition,
        }
    }

    #[test]
    fn coding_examples() {
        let table = RaceCodingTable::default();
        assert_eq!(code_race("Black or African American", &table), RaceLabel::canonical("African"));
        assert_eq!(code_race("  ASIAN ", &table), RaceLabel::canonical("Asian"));
        assert_eq!(code_race("Martian", &table), RaceLabel::unmapped("Martian"));
        for label in LabelSet::default().labels() {
            assert_eq!(code_race(label, &table), RaceLabel::canonical(label.clone()));
        }
    }

    #[test]
    fn coding_table_file_format() {
        let labels = LabelSet::default();
        let table = RaceCodingTable::parse("# custom\nHispanic  White = Caucasian\n\nblack=African\n", &labels).unwrap();
        assert_eq!(code_race("hispanic white", &table), RaceLabel::canonical("Caucasian"));
        assert_eq!(code_race("Asian", &table), RaceLabel::unmapped("Asian"));
        assert!(matches!(
            RaceCodingTable::parse("black African", &labels),
            Err(AssignmentError::ParseError { line: 1, .. })
        ));
        assert_eq!(
            RaceCodingTable::parse("x = Martian", &labels).unwrap_err(),
            AssignmentError::UnknownLabel("Martian".into())
        );
        assert_eq!(
            RaceCodingTable::parse("Black = African\nblack = African", &labels).unwrap_err(),
            AssignmentError::DuplicatePattern("black".into())
        );
    }

    #[test]
    fn same_race_assignments_for_twenty_workers() {
        let manifest = manifest_with_sizes(&[2000, 2000, 2000, 2000]);
        let workers: Vec<_> = (0..20)
            .map(|i| worker(&format!("w{i}"), RaceLabel::canonical("Asian"), Condition::Ip))
            .collect();
        let out = build_same_race_assignments(&workers, &manifest, &BuildParams::new(32, 9)).unwrap();
        assert_eq!(out.len(), 20);
        for (a, w) in out.iter().zip(&workers) {
            assert_eq!(a.pair_ids.len(), 32);
            audit_assignment(a, w, &manifest).unwrap();
        }
        assert_ne!(out[0].pair_ids, out[1].pair_ids);
    }

    #[test]
    fn same_race_errors() {
        let manifest = manifest_with_sizes(&[3, 3, 3, 3]);
        let unmapped = worker("u", RaceLabel::unmapped("Martian"), Condition::Control);
        assert_eq!(
            build_same_race_assignments(&[unmapped], &manifest, &BuildParams::new(2, 0)).unwrap_err(),
            AssignmentError::UnmappedWorker("u".into())
        );
        let w = worker("w", RaceLabel::canonical("Indian"), Condition::Ip);
        assert_eq!(
            build_same_race_assignments(&[w], &manifest, &BuildParams::new(5, 0)).unwrap_err(),
            AssignmentError::InsufficientPairs {
                race: "Indian".into(),
                have: 3,
                need: 5
            }
        );
    }

    #[test]
    fn gold_reserve_is_disjoint_and_per_race() {
        let manifest = manifest_with_sizes(&[10, 10, 10, 10]);
        let reserve = reserve_gold(&manifest, 2, 4).unwrap();
        assert_eq!(reserve.routed.len(), 32);
        for (race, gold) in &reserve.gold_by_race {
            assert_eq!(gold.len(), 2);
            for g in gold {
                assert_eq!(g.race.as_canonical(), Some(race.as_str()));
                assert!(reserve.routed.get(&g.pair_id).is_none());
            }
        }
        assert_eq!(reserve, reserve_gold(&manifest, 2, 4).unwrap());
        let ip = worker("w", RaceLabel::canonical("Asian"), Condition::Ip);
        assert!(reserve.pool_for(&ip).iter().all(|p| p.race == ip.coded_race));
        let control = worker("c", RaceLabel::canonical("Asian"), Condition::Control);
        assert_eq!(reserve.pool_for(&control).len(), 8);
        assert_eq!(
            reserve_gold(&manifest, 11, 4).unwrap_err(),
            AssignmentError::NotEnoughGold { have: 10, need: 11 }
        );
    }

    #[test]
    fn control_assignments_are_balanced() {
        let manifest = manifest_with_sizes(&[50, 50, 50, 50]);
        let w = worker("w", RaceLabel::canonical("Asian"), Condition::Control);
        let a = control_assignment(&w, &manifest, &BuildParams::new(32, 1)).unwrap();
        assert_eq!(a.pair_ids.len(), 32);
        let index = manifest.index();
        for label in manifest.labels.iter() {
            let n = a.pair_ids.iter().filter(|id| index[id.as_str()].race == label).count();
            assert_eq!(n, 8);
        }
    }

    #[test]
    fn control_errors_and_boundary() {
        let manifest = manifest_with_sizes(&[1, 1, 1, 1]);
        let w = worker("w", RaceLabel::unmapped("?"), Condition::Control);
        assert_eq!(
            control_assignment(&w, &manifest, &BuildParams::new(30, 1)).unwrap_err(),
            AssignmentError::QuotaNotDivisible {
                quota: 30,
                label_count: 4
            }
        );
        let a = control_assignment(&w, &manifest, &BuildParams::new(4, 1)).unwrap();
        let mut ids = a.pair_ids.clone();
        ids.sort();
        let mut all: Vec<_> = manifest.pairs.iter().map(|p| p.pair_id.clone()).collect();
        all.sort();
        assert_eq!(ids, all);
        assert!(matches!(
            control_assignment(&w, &manifest, &BuildParams::new(8, 1)),
            Err(AssignmentError::InsufficientPairs { have: 1, need: 2, .. })
        ));
    }

    #[test]
    fn builders_are_deterministic() {
        let manifest = manifest_with_sizes(&[40, 40, 40, 40]);
        let workers: Vec<_> = ["a", "b", "c"]
            .iter()
            .map(|id| worker(id, RaceLabel::canonical("Caucasian"), Condition::Ip))
            .collect();
        let p = BuildParams::new(8, 77);
        let x = assignments_to_jsonl(&build_same_race_assignments(&workers, &manifest, &p).unwrap());
        let y = assignments_to_jsonl(&build_same_race_assignments(&workers, &manifest, &p).unwrap());
        assert_eq!(x, y);
        let c1 = assignments_to_jsonl(&build_control_assignments(&workers, &manifest, &p).unwrap());
        let c2 = assignments_to_jsonl(&build_control_assignments(&workers, &manifest, &p).unwrap());
        assert_eq!(c1, c2);
    }

    #[test]
    fn gold_injection() {
        let manifest = manifest_with_sizes(&[40, 40, 40, 40]);
        let w = worker("w", RaceLabel::canonical("Asian"), Condition::Ip);
        let base = same_race_assignment(&w, &manifest, &BuildParams::new(32, 5)).unwrap();
        let gold = vec![
            pair("g1", "Asian", GroundTruth::Match),
            pair("g2", "Asian", GroundTruth::NonMatch),
            pair("g3", "Asian", GroundTruth::Match),
        ];
        let with_gold = inject_gold(&base, &w.coded_race, &gold, 2, 5).unwrap();
        assert_eq!(with_gold.pair_ids.len(), 34);
        assert_eq!(with_gold.gold_pair_ids.len(), 2);
        let kept: Vec<_> = with_gold.scored_pair_ids().cloned().collect();
        assert_eq!(kept, base.pair_ids);

        assert_eq!(inject_gold(&base, &w.coded_race, &gold, 0, 5).unwrap(), base);

        let caucasian = vec![pair("g9", "Caucasian", GroundTruth::Match)];
        assert_eq!(
            inject_gold(&base, &w.coded_race, &caucasian, 1, 5).unwrap_err(),
            AssignmentError::GoldRaceMismatch("g9".into())
        );
        assert_eq!(
            inject_gold(&base, &w.coded_race, &gold, 4, 5).unwrap_err(),
            AssignmentError::NotEnoughGold { have: 3, need: 4 }
        );
        let overlapping = vec![manifest.get(&base.pair_ids[0]).unwrap().clone()];
        assert!(matches!(
            inject_gold(&base, &w.coded_race, &overlapping, 1, 5),
            Err(AssignmentError::GoldOverlap(_))
        ));
    }

    #[test]
    fn registry_rejects_duplicates() {
        let mut reg = WorkerRegistry::new();
        reg.register(worker("w1", RaceLabel::canonical("Asian"), Condition::Ip)).unwrap();
        assert_eq!(
            reg.register(worker("w1", RaceLabel::canonical("Asian"), Condition::Ip)).unwrap_err(),
            AssignmentError::DuplicateWorker("w1".into())
        );
        assert_eq!(reg.len(), 1);
        assert!(reg.get("w1").is_some());
    }
}
