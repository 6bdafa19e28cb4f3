use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::store::{Event, Fingerprint, LogEntry, Status};
use crate::aggregate::HumanVerdict;
use crate::assignment::{Condition, TaskAssignment};

/// Worker as held by the service: coded label only.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorkerEntry {
    pub worker_id: String,
    pub coded_race: Option<String>,
    pub prior_experience: bool,
    pub condition: Condition,
}

/// Everything derivable from the event log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct State {
    pub experiment_id: String,
    pub fingerprint: Option<Fingerprint>,
    pub status: Status,
    pub last_sequence: u64,
    pub workers: BTreeMap<String, WorkerEntry>,
    pub assignments: BTreeMap<String, TaskAssignment>,
    pub verdicts: BTreeMap<String, BTreeMap<String, HumanVerdict>>,
}

impl State {
    pub fn new(experiment_id: impl Into<String>) -> Self {
        State {
            experiment_id: experiment_id.into(),
            fingerprint: None,
            status: Status::Draft,
            last_sequence: 0,
            workers: BTreeMap::new(),
            assignments: BTreeMap::new(),
            verdicts: BTreeMap::new(),
        }
    }

    pub fn next_sequence(&self) -> u64 {
        self.last_sequence + 1
    }

    pub fn answered(&self, worker_id: &str) -> usize {
        self.verdicts.get(worker_id).map_or(0, BTreeMap::len)
    }

    pub fn is_complete(&self, worker_id: &str) -> bool {
        self.assignments
            .get(worker_id)
            .is_some_and(|a| self.answered(worker_id) == a.pair_ids.len())
    }

    /// Claimed assignments exist and every one of them is fully answered.
    pub fn all_complete(&self) -> bool {
        !self.assignments.is_empty() && self.assignments.keys().all(|w| self.is_complete(w))
    }

    /// Workers already registered with `coded_race` under `condition`.
    pub fn cohort_size(&self, coded_race: Option<&str>, condition: Condition) -> usize {
        self.workers
            .values()
            .filter(|w| w.coded_race.as_deref() == coded_race && w.condition == condition)
            .count()
    }

    /// Applies one entry, checking it against the state it extends.
    pub fn apply(&mut self, entry: &LogEntry) -> Result<(), String> {
        if entry.sequence_number <= self.last_sequence {
            return Err(format!(
                "sequence {} does not follow {}",
                entry.sequence_number, self.last_sequence
            ));
        }
        if entry.experiment_id != self.experiment_id {
            return Err(format!("entry for experiment {:?}", entry.experiment_id));
        }
        match &entry.event {
            Event::ExperimentCreated { fingerprint } => {
                if self.fingerprint.is_some() {
                    return Err("experiment created twice".into());
                }
                self.fingerprint = Some(fingerprint.clone());
            }
            _ if self.fingerprint.is_none() => return Err("event before experiment_created".into()),
            Event::WorkerRegistered {
                worker_id,
                coded_race,
                prior_experience,
                condition,
            } => {
                if self.workers.contains_key(worker_id) {
                    return Err(format!("worker {worker_id} registered twice"));
                }
                self.workers.insert(
                    worker_id.clone(),
                    WorkerEntry {
                        worker_id: worker_id.clone(),
                        coded_race: coded_race.clone(),
                        prior_experience: *prior_experience,
                        condition: *condition,
                    },
                );
            }
            Event::AssignmentClaimed { assignment } => {
                if !self.workers.contains_key(&assignment.worker_id) {
                    return Err(format!("assignment for unknown worker {}", assignment.worker_id));
                }
                if self.assignments.contains_key(&assignment.worker_id) {
                    return Err(format!("second assignment for {}", assignment.worker_id));
                }
                self.assignments.insert(assignment.worker_id.clone(), assignment.clone());
            }
            Event::VerdictRecorded { verdict } => {
                if self.status != Status::Open {
                    return Err(format!("verdict while {}", self.status));
                }
                let assignment = self
                    .assignments
                    .get(&verdict.worker_id)
                    .ok_or_else(|| format!("verdict from {} without assignment", verdict.worker_id))?;
                if !assignment.contains(&verdict.pair_id) {
                    return Err(format!("pair {} not assigned to {}", verdict.pair_id, verdict.worker_id));
                }
                let by_pair = self.verdicts.entry(verdict.worker_id.clone()).or_default();
                if by_pair.contains_key(&verdict.pair_id) {
                    return Err(format!("duplicate verdict {}/{}", verdict.worker_id, verdict.pair_id));
                }
                by_pair.insert(verdict.pair_id.clone(), verdict.clone());
            }
            Event::StatusChanged { status } => {
                let ok = matches!(
                    (self.status, status),
                    (Status::Draft, Status::Open) | (Status::Open, Status::Closed) | (Status::Draft, Status::Closed)
                );
                if !ok {
                    return Err(format!("transition {} -> {status}", self.status));
                }
                self.status = *status;
            }
        }
        self.last_sequence = entry.sequence_number;
        Ok(())
    }
}
