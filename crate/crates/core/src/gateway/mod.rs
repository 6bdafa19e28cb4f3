//! The worker-facing task service: registration, assignment claiming,
//! verdict submission and report retrieval over a durable event log.
//!
//! All writes go through one commit path. An event is validated against the
//! current state, appended (and synced) to the log, and only then applied
//! in memory and acknowledged. Restarting replays the log.

pub mod http;
mod state;
mod store;

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use chrono::{DateTime, Utc};
use parking_lot::{Mutex, RwLock};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::aggregate::{self, AggregateError, ExperimentReport, Exclusion, HumanVerdict, Screening};
use crate::assignment::{
    self, AssignmentError, AssignmentPolicy, BuildParams, Condition, GoldReserve, RaceCodingTable,
    TaskAssignment, WorkerProfile,
};
use crate::config::{ConfigError, KeyValues};
use crate::corpus::{self, CorpusError, GroundTruth, ImagePair, LabelSet, PairManifest, RaceLabel};
use crate::seeding;
use crate::triage::RoutingPolicy;

pub use state::{State, WorkerEntry};
pub use store::{Event, Fingerprint, LogEntry, RegistryEntry, Status, EVENTS_FILE, REGISTRY_FILE, SNAPSHOT_FILE};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GatewayError {
    #[error("experiment is closed")]
    ExperimentClosed,
    #[error("experiment is not open yet")]
    ExperimentNotOpen,
    #[error("experiment is still open and has incomplete assignments")]
    ExperimentStillOpen,
    #[error("unknown experiment {0:?}")]
    UnknownExperiment(String),
    #[error("worker with prior facial-verification experience is not eligible")]
    IneligibleWorker,
    #[error("unknown worker {0:?}")]
    UnknownWorker(String),
    #[error("worker {0:?} has no canonical race and cannot join the same-race condition")]
    UnmappedWorker(String),
    #[error("pair {pair_id:?} is not assigned to {worker_id:?}")]
    PairNotAssigned { worker_id: String, pair_id: String },
    #[error("verdict for ({worker_id}, {pair_id}) already recorded")]
    DuplicateVerdict { worker_id: String, pair_id: String },
    #[error("unknown pair {0:?}")]
    UnknownPair(String),
    #[error("cannot move experiment from {from} to {to}")]
    InvalidTransition { from: Status, to: Status },
    #[error("stored experiment does not match the configuration: {0}")]
    ConfigMismatch(String),
    #[error("report unavailable: {0}")]
    Report(#[from] AggregateError),
    #[error(transparent)]
    Assignment(#[from] AssignmentError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("corrupt log at line {line}: {reason}")]
    Corrupt { line: usize, reason: String },
    #[error("storage failure: {0}")]
    Storage(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Workers with prior experience are turned away.
    Replication,
    Production,
}

impl std::str::FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "replication" => Ok(Mode::Replication),
            "production" => Ok(Mode::Production),
            other => Err(format!("unknown mode {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub experiment_id: String,
    pub manifest: PathBuf,
    pub labels: LabelSet,
    pub coding_table: Option<PathBuf>,
    pub routing_policy: RoutingPolicy,
    pub policies: Vec<AssignmentPolicy>,
    pub quota: usize,
    pub gold_count: usize,
    pub seed: u64,
    pub mode: Mode,
    pub state_dir: PathBuf,
    /// Sync each append to disk before acknowledging it.
    pub fsync: bool,
    /// Write a snapshot every this many events; 0 disables snapshots.
    pub snapshot_every: u64,
}

const EXPERIMENT_KEYS: &[&str] = &[
    "experiment_id",
    "manifest",
    "labels",
    "coding_table",
    "routing_policy",
    "policies",
    "quota",
    "gold_count",
    "seed",
    "mode",
    "state_dir",
    "fsync",
    "snapshot_every",
];

impl ExperimentConfig {
    pub fn new(experiment_id: impl Into<String>, manifest: impl Into<PathBuf>, state_dir: impl Into<PathBuf>) -> Self {
        ExperimentConfig {
            experiment_id: experiment_id.into(),
            manifest: manifest.into(),
            labels: LabelSet::default(),
            coding_table: None,
            routing_policy: RoutingPolicy::default(),
            policies: vec![AssignmentPolicy::BalancedAcrossRaces, AssignmentPolicy::SameRace],
            quota: assignment::DEFAULT_QUOTA,
            gold_count: assignment::DEFAULT_GOLD_COUNT,
            seed: 0,
            mode: Mode::Replication,
            state_dir: state_dir.into(),
            fsync: true,
            snapshot_every: 0,
        }
    }

    /// Relative paths in the file resolve against `base`.
    pub fn from_key_values(kv: &KeyValues, base: &Path) -> Result<Self, GatewayError> {
        kv.restrict(EXPERIMENT_KEYS)?;
        let required = |key: &str| kv.raw(key).ok_or_else(|| ConfigError::MissingKey(key.to_string()));
        let experiment_id = required("experiment_id")?.to_string();
        let resolve = |p: &str| base.join(p);
        let mut config = ExperimentConfig::new(
            experiment_id.clone(),
            resolve(required("manifest")?),
            kv.raw("state_dir")
                .map(resolve)
                .unwrap_or_else(|| base.join("state").join(&experiment_id)),
        );
        if let Some(labels) = kv.list("labels") {
            config.labels = LabelSet::new(labels)?;
        }
        config.coding_table = kv.raw("coding_table").map(resolve);
        if let Some(policy) = kv.get::<RoutingPolicy>("routing_policy")? {
            config.routing_policy = policy;
        }
        if let Some(items) = kv.list("policies") {
            config.policies = items
                .iter()
                .map(|s| {
                    s.parse().map_err(|reason| ConfigError::InvalidValue {
                        key: "policies".into(),
                        reason,
                    })
                })
                .collect::<Result<_, _>>()?;
        }
        config.quota = kv.get_or("quota", config.quota)?;
        config.gold_count = kv.get_or("gold_count", config.gold_count)?;
        config.seed = kv.get_or("seed", config.seed)?;
        config.mode = kv.get_or("mode", config.mode)?;
        config.fsync = kv.get_or("fsync", config.fsync)?;
        config.snapshot_every = kv.get_or("snapshot_every", config.snapshot_every)?;
        if config.policies.is_empty() {
            return Err(ConfigError::InvalidValue {
                key: "policies".into(),
                reason: "empty".into(),
            }
            .into());
        }
        Ok(config)
    }

    /// Paths in the file are taken relative to the working directory.
    pub fn load(path: &Path) -> Result<Self, GatewayError> {
        ExperimentConfig::from_key_values(&KeyValues::load(path)?, Path::new(""))
    }

    fn conditions(&self) -> Vec<Condition> {
        let mut c: Vec<Condition> = self.policies.iter().map(|p| p.condition()).collect();
        c.sort();
        c.dedup();
        c
    }

    fn fingerprint(&self) -> Fingerprint {
        Fingerprint {
            manifest: self.manifest.display().to_string(),
            labels: self.labels.labels().to_vec(),
            routing_policy: self.routing_policy.to_string(),
            conditions: self.conditions(),
            quota: self.quota,
            gold_count: self.gold_count,
            seed: self.seed,
        }
    }
}

pub trait Clock: Send + Sync {
    fn now(&self) -> DateTime<Utc>;
}

pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> DateTime<Utc> {
        Utc::now()
    }
}

/// Starts at a fixed instant and advances one second per reading.
pub struct SteppingClock {
    start: DateTime<Utc>,
    ticks: std::sync::atomic::AtomicI64,
}

impl SteppingClock {
    pub fn new(start: DateTime<Utc>) -> Self {
        SteppingClock {
            start,
            ticks: std::sync::atomic::AtomicI64::new(0),
        }
    }
}

impl Clock for SteppingClock {
    fn now(&self) -> DateTime<Utc> {
        let t = self.ticks.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
        self.start + chrono::Duration::seconds(t)
    }
}

/// A claimed assignment as returned to its worker.
#[derive(Debug, Clone, PartialEq)]
pub struct Claim {
    pub assignment: TaskAssignment,
    pub already_claimed: bool,
    pub answered: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ack {
    pub sequence_number: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Progress {
    pub experiment_id: String,
    pub status: Status,
    pub workers: usize,
    pub assignments: usize,
    pub complete: usize,
    pub verdicts: usize,
    pub last_sequence: u64,
}

// Stream keys under the experiment seed.
const GOLD_RESERVE: u64 = 1;
const ASSIGN: u64 = 2;
const GOLD_INJECT: u64 = 3;

pub struct Gateway {
    config: ExperimentConfig,
    manifest: PairManifest,
    positions: HashMap<String, usize>,
    reserve: GoldReserve,
    coding: RaceCodingTable,
    clock: Arc<dyn Clock>,
    store: Mutex<store::Store>,
    state: RwLock<State>,
    registry: RwLock<HashMap<String, String>>,
}

impl Gateway {
    /// Opens or creates the experiment under `config.state_dir`, replaying
    /// any existing log.
    pub fn open(config: ExperimentConfig, clock: Arc<dyn Clock>) -> Result<Gateway, GatewayError> {
        let manifest = corpus::load_manifest(&config.manifest, &config.labels)?;
        let coding = match &config.coding_table {
            Some(path) => RaceCodingTable::load(path, &config.labels)?,
            None => RaceCodingTable::default(),
        };
        let reserve = assignment::reserve_gold(
            &manifest,
            config.gold_count,
            seeding::derive(config.seed, &[GOLD_RESERVE]),
        )?;
        let positions = manifest
            .pairs
            .iter()
            .enumerate()
            .map(|(i, p)| (p.pair_id.clone(), i))
            .collect();

        let (store, entries, registry_entries) = store::Store::open(&config.state_dir, config.fsync)?;
        let mut state = match store::Store::read_snapshot(&config.state_dir)? {
            Some(snap) if snap.state.experiment_id == config.experiment_id => snap.state,
            Some(snap) => {
                return Err(GatewayError::ConfigMismatch(format!(
                    "snapshot belongs to {:?}",
                    snap.state.experiment_id
                )))
            }
            None => State::new(&config.experiment_id),
        };
        let logged = entries.last().map_or(0, |e| e.sequence_number);
        if state.last_sequence > logged {
            return Err(GatewayError::Corrupt {
                line: entries.len(),
                reason: format!("snapshot at {} is ahead of the log at {logged}", state.last_sequence),
            });
        }
        for (i, entry) in entries.iter().enumerate() {
            if entry.sequence_number <= state.last_sequence {
                continue;
            }
            state
                .apply(entry)
                .map_err(|reason| GatewayError::Corrupt { line: i + 1, reason })?;
        }
        let registry = registry_entries
            .into_iter()
            .map(|e| (e.worker_id, e.self_identified_race))
            .collect();

        let gateway = Gateway {
            manifest,
            positions,
            reserve,
            coding,
            clock,
            store: Mutex::new(store),
            state: RwLock::new(state),
            registry: RwLock::new(registry),
            config,
        };
        let expected = gateway.config.fingerprint();
        let found = gateway.state.read().fingerprint.clone();
        match found {
            Some(found) if found != expected => {
                return Err(GatewayError::ConfigMismatch(format!("{found:?} vs {expected:?}")))
            }
            Some(_) => {}
            None => {
                let mut store = gateway.store.lock();
                gateway.commit(&mut store, Event::ExperimentCreated { fingerprint: expected })?;
            }
        }
        tracing::info!(
            experiment = %gateway.config.experiment_id,
            sequence = gateway.state.read().last_sequence,
            "experiment ready"
        );
        Ok(gateway)
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.config
    }

    pub fn experiment_id(&self) -> &str {
        &self.config.experiment_id
    }

    pub fn state(&self) -> State {
        self.state.read().clone()
    }

    pub fn status(&self) -> Status {
        self.state.read().status
    }

    /// Appends, then applies. Callers hold the store lock for the whole
    /// validate-append-apply sequence.
    fn commit(&self, store: &mut store::Store, event: Event) -> Result<Ack, GatewayError> {
        let entry = LogEntry {
            sequence_number: self.state.read().next_sequence(),
            experiment_id: self.config.experiment_id.clone(),
            recorded_at: self.clock.now(),
            event,
        };
        store.append(&entry)?;
        let mut state = self.state.write();
        state.apply(&entry).map_err(GatewayError::Storage)?;
        if self.config.snapshot_every > 0 && entry.sequence_number % self.config.snapshot_every == 0 {
            store.write_snapshot(&state)?;
        }
        Ok(Ack {
            sequence_number: entry.sequence_number,
        })
    }

    fn require_open(&self, state: &State) -> Result<(), GatewayError> {
        match state.status {
            Status::Open => Ok(()),
            Status::Draft => Err(GatewayError::ExperimentNotOpen),
            Status::Closed => Err(GatewayError::ExperimentClosed),
        }
    }

    fn check_experiment(&self, experiment_id: &str) -> Result<(), GatewayError> {
        if experiment_id == self.config.experiment_id {
            Ok(())
        } else {
            Err(GatewayError::UnknownExperiment(experiment_id.to_string()))
        }
    }

    pub fn open_experiment(&self) -> Result<Status, GatewayError> {
        self.transition(Status::Open)
    }

    pub fn close_experiment(&self) -> Result<Status, GatewayError> {
        self.transition(Status::Closed)
    }

    fn transition(&self, to: Status) -> Result<Status, GatewayError> {
        let mut store = self.store.lock();
        let from = self.state.read().status;
        if from == to {
            return Ok(to);
        }
        if matches!((from, to), (Status::Closed, _) | (_, Status::Draft)) {
            return Err(GatewayError::InvalidTransition { from, to });
        }
        self.commit(&mut store, Event::StatusChanged { status: to })?;
        Ok(to)
    }

    /// Picks the condition with the fewest workers of the same coded race.
    /// Unmapped workers join the control condition when it runs.
    fn allocate(&self, state: &State, coded: &RaceLabel) -> Condition {
        let conditions = self.config.conditions();
        match coded.as_canonical() {
            Some(race) => *conditions
                .iter()
                .min_by_key(|&&c| state.cohort_size(Some(race), c))
                .expect("at least one policy"),
            None if conditions.contains(&Condition::Control) => Condition::Control,
            None => Condition::Unassigned,
        }
    }

    pub fn register_worker(&self, self_identified_race: &str, prior_experience: bool) -> Result<WorkerProfile, GatewayError> {
        let mut store = self.store.lock();
        let coded_race = assignment::code_race(self_identified_race, &self.coding);
        let (condition, worker_id) = {
            let state = self.state.read();
            self.require_open(&state)?;
            if prior_experience && self.config.mode == Mode::Replication {
                return Err(GatewayError::IneligibleWorker);
            }
            (
                self.allocate(&state, &coded_race),
                format!("w{:05}", state.workers.len() + 1),
            )
        };

        store.register(&RegistryEntry {
            worker_id: worker_id.clone(),
            self_identified_race: self_identified_race.to_string(),
        })?;
        self.registry
            .write()
            .insert(worker_id.clone(), self_identified_race.to_string());
        self.commit(
            &mut store,
            Event::WorkerRegistered {
                worker_id: worker_id.clone(),
                coded_race: coded_race.as_canonical().map(str::to_string),
                prior_experience,
                condition,
            },
        )?;
        tracing::debug!(%worker_id, %condition, "worker registered");
        Ok(WorkerProfile {
            worker_id,
            self_identified_race: self_identified_race.to_string(),
            coded_race,
            prior_experience,
            condition,
        })
    }

    fn profile(&self, entry: &WorkerEntry) -> WorkerProfile {
        let text = self.registry.read().get(&entry.worker_id).cloned().unwrap_or_default();
        WorkerProfile {
            worker_id: entry.worker_id.clone(),
            coded_race: match &entry.coded_race {
                Some(label) => RaceLabel::canonical(label.clone()),
                None => RaceLabel::unmapped(text.clone()),
            },
            self_identified_race: text,
            prior_experience: entry.prior_experience,
            condition: entry.condition,
        }
    }

    pub fn worker(&self, worker_id: &str) -> Option<WorkerProfile> {
        let entry = self.state.read().workers.get(worker_id).cloned()?;
        Some(self.profile(&entry))
    }

    fn claim_of(state: &State, assignment: &TaskAssignment, already_claimed: bool) -> Claim {
        let done = state.verdicts.get(&assignment.worker_id);
        Claim {
            assignment: assignment.clone(),
            already_claimed,
            answered: assignment
                .pair_ids
                .iter()
                .filter(|p| done.is_some_and(|d| d.contains_key(p.as_str())))
                .cloned()
                .collect(),
        }
    }

    /// Hands out the worker's assignment, building it on first claim.
    pub fn claim_assignment(&self, worker_id: &str, experiment_id: &str) -> Result<Claim, GatewayError> {
        self.check_experiment(experiment_id)?;
        let mut store = self.store.lock();
        let worker = {
            let state = self.state.read();
            let entry = state
                .workers
                .get(worker_id)
                .ok_or_else(|| GatewayError::UnknownWorker(worker_id.to_string()))?;
            if let Some(existing) = state.assignments.get(worker_id) {
                return Ok(Gateway::claim_of(&state, existing, true));
            }
            self.require_open(&state)?;
            self.profile(entry)
        };
        let params = BuildParams {
            quota: self.config.quota,
            seed: seeding::derive(self.config.seed, &[ASSIGN]),
            created_at: self.clock.now(),
        };
        let base = match worker.condition {
            Condition::Ip if worker.coded_race.is_canonical() => {
                assignment::same_race_assignment(&worker, &self.reserve.routed, &params)?
            }
            Condition::Control => assignment::control_assignment(&worker, &self.reserve.routed, &params)?,
            _ => return Err(GatewayError::UnmappedWorker(worker_id.to_string())),
        };
        let gold = self.reserve.pool_for(&worker);
        let task = assignment::inject_gold(
            &base,
            &worker.coded_race,
            &gold,
            self.config.gold_count.min(gold.len()),
            seeding::derive(self.config.seed, &[GOLD_INJECT]),
        )?;
        self.commit(
            &mut store,
            Event::AssignmentClaimed {
                assignment: task.clone(),
            },
        )?;
        Ok(Claim {
            assignment: task,
            already_claimed: false,
            answered: Vec::new(),
        })
    }

    pub fn submit_verdict(
        &self,
        worker_id: &str,
        pair_id: &str,
        decision: GroundTruth,
        elapsed_ms: u64,
    ) -> Result<Ack, GatewayError> {
        let mut store = self.store.lock();
        {
            let state = self.state.read();
            self.require_open(&state)?;
            if !state.workers.contains_key(worker_id) {
                return Err(GatewayError::UnknownWorker(worker_id.to_string()));
            }
            if !state.assignments.get(worker_id).is_some_and(|a| a.contains(pair_id)) {
                return Err(GatewayError::PairNotAssigned {
                    worker_id: worker_id.to_string(),
                    pair_id: pair_id.to_string(),
                });
            }
            if state.verdicts.get(worker_id).is_some_and(|v| v.contains_key(pair_id)) {
                return Err(GatewayError::DuplicateVerdict {
                    worker_id: worker_id.to_string(),
                    pair_id: pair_id.to_string(),
                });
            }
        }
        let verdict = HumanVerdict {
            worker_id: worker_id.to_string(),
            pair_id: pair_id.to_string(),
            decision,
            elapsed_ms,
            submitted_at: self.clock.now(),
        };
        self.commit(&mut store, Event::VerdictRecorded { verdict })
    }

    /// Image references for one pair; never its truth, race or gold status.
    pub fn pair(&self, pair_id: &str) -> Result<PairView, GatewayError> {
        let pair = self
            .positions
            .get(pair_id)
            .map(|&i| &self.manifest.pairs[i])
            .ok_or_else(|| GatewayError::UnknownPair(pair_id.to_string()))?;
        Ok(PairView::from(pair))
    }

    pub fn progress(&self) -> Progress {
        let state = self.state.read();
        Progress {
            experiment_id: state.experiment_id.clone(),
            status: state.status,
            workers: state.workers.len(),
            assignments: state.assignments.len(),
            complete: state.assignments.keys().filter(|w| state.is_complete(w)).count(),
            verdicts: state.verdicts.values().map(BTreeMap::len).sum(),
            last_sequence: state.last_sequence,
        }
    }

    pub fn fetch_report(&self, experiment_id: &str) -> Result<ExperimentReport, GatewayError> {
        self.check_experiment(experiment_id)?;
        let state = self.state.read().clone();
        if state.status != Status::Closed && !state.all_complete() {
            return Err(GatewayError::ExperimentStillOpen);
        }
        report_from_state(&state, &self.manifest)
    }

    /// Writes a snapshot of the current state now.
    pub fn snapshot(&self) -> Result<u64, GatewayError> {
        let store = self.store.lock();
        let state = self.state.read();
        store.write_snapshot(&state)?;
        Ok(state.last_sequence)
    }
}

/// Replays an event log without opening it for writing. A torn final
/// record is ignored.
pub fn read_log(path: &Path) -> Result<State, GatewayError> {
    let text = std::fs::read_to_string(path).map_err(|e| GatewayError::Storage(format!("{}: {e}", path.display())))?;
    let complete = text.rfind('\n').map_or("", |i| &text[..=i]);
    let mut state: Option<State> = None;
    for (i, line) in complete.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let entry: LogEntry = serde_json::from_str(line).map_err(|e| GatewayError::Corrupt {
            line: i + 1,
            reason: e.to_string(),
        })?;
        state
            .get_or_insert_with(|| State::new(&entry.experiment_id))
            .apply(&entry)
            .map_err(|reason| GatewayError::Corrupt { line: i + 1, reason })?;
    }
    state.ok_or(GatewayError::Corrupt {
        line: 0,
        reason: "empty log".into(),
    })
}

/// The experiment report as a pure function of logged state. Workers who
/// did not finish their assignment are excluded.
pub fn report_from_state(state: &State, manifest: &PairManifest) -> Result<ExperimentReport, GatewayError> {
    let index = manifest.index();
    let mut scores = Vec::new();
    let mut screenings: BTreeMap<String, Screening> = BTreeMap::new();
    let mut incomplete = Vec::new();
    for (worker_id, task) in &state.assignments {
        let entry = &state.workers[worker_id];
        let answered = state.answered(worker_id);
        if answered < task.pair_ids.len() {
            incomplete.push(Exclusion {
                worker_id: worker_id.clone(),
                reason: format!("incomplete: {answered} of {} answered", task.pair_ids.len()),
            });
            continue;
        }
        let worker = WorkerProfile {
            worker_id: worker_id.clone(),
            self_identified_race: String::new(),
            coded_race: entry
                .coded_race
                .clone()
                .map_or_else(|| RaceLabel::unmapped(""), RaceLabel::canonical),
            prior_experience: entry.prior_experience,
            condition: entry.condition,
        };
        let verdicts: Vec<HumanVerdict> = state.verdicts[worker_id].values().cloned().collect();
        scores.push(aggregate::score_worker_indexed(&verdicts, task, &worker, &index)?);
        let screening = aggregate::screen_gold_indexed(&verdicts, task, &index)?;
        if !screening.passed() {
            screenings.insert(worker_id.clone(), screening);
        }
    }
    Ok(aggregate::build_report(&scores, &screenings, &manifest.labels, &incomplete)?)
}

/// What a worker is shown about a pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairView {
    pub pair_id: String,
    pub image_a: String,
    pub image_b: String,
}

impl From<&ImagePair> for PairView {
    fn from(p: &ImagePair) -> Self {
        PairView {
            pair_id: p.pair_id.clone(),
            image_a: p.image_ref_a.clone(),
            image_b: p.image_ref_b.clone(),
        }
    }
}
