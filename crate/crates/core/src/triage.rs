//! Ensemble fusion of model verdicts and routing of uncertain pairs to
//! human verifiers.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{GroundTruth, PairManifest};
use crate::records;

/// Uncertainty threshold used when none is configured.
pub const DEFAULT_TAU: f64 = 0.5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TriageError {
    #[error("line {line}: {reason}")]
    ParseError { line: usize, reason: String },
    #[error("confidence out of range for model {model_id:?} on pair {pair_id:?}")]
    ConfidenceOutOfRange { model_id: String, pair_id: String },
    #[error("no verdicts to fuse")]
    EmptyVerdictSet,
    #[error("verdicts refer to more than one pair")]
    MixedPairIds,
    #[error("model {0:?} appears twice")]
    DuplicateModel(String),
    #[error("duplicate verdict for model {model_id:?} on pair {pair_id:?}")]
    DuplicateVerdict { model_id: String, pair_id: String },
    #[error("duplicate pair id {0:?}")]
    DuplicatePairId(String),
    #[error("pair {0:?} is not in the manifest")]
    UnknownPair(String),
    #[error("invalid routing policy: {0}")]
    InvalidPolicy(String),
    #[error("i/o error on {path}: {message}")]
    Io { path: String, message: String },
}

/// One model's decision on one pair. `confidence` is the model's certainty
/// in its own stated decision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelVerdict {
    pub model_id: String,
    pub pair_id: String,
    pub decision: GroundTruth,
    pub confidence: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnsembleDecision {
    Match,
    NonMatch,
    Tie,
}

impl From<GroundTruth> for EnsembleDecision {
    fn from(value: GroundTruth) -> Self {
        match value {
            GroundTruth::Match => EnsembleDecision::Match,
            GroundTruth::NonMatch => EnsembleDecision::NonMatch,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleScore {
    pub pair_id: String,
    pub median_confidence: f64,
    pub ensemble_decision: EnsembleDecision,
    pub model_count: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "snake_case")]
pub enum RoutingPolicy {
    UncertainAll { tau: f64 },
    UncertainNegatives { tau: f64 },
    UncertainPositives { tau: f64 },
    AllNegatives,
    AllPositives,
}

impl RoutingPolicy {
    /// Builds a policy from its name. `tau` is required by the uncertain
    /// variants and must be absent for the others.
    pub fn from_parts(name: &str, tau: Option<f64>) -> Result<Self, TriageError> {
        let needs_tau = name.starts_with("uncertain_");
        let tau = match (needs_tau, tau) {
            (true, Some(t)) if (0.0..=1.0).contains(&t) => t,
            (true, Some(t)) => {
                return Err(TriageError::InvalidPolicy(format!("tau {t} outside [0, 1]")))
            }
            (true, None) => DEFAULT_TAU,
            (false, Some(_)) => {
                return Err(TriageError::InvalidPolicy(format!("{name} takes no tau")))
            }
            (false, None) => 0.0,
        };
        match name {
            "uncertain_all" => Ok(RoutingPolicy::UncertainAll { tau }),
            "uncertain_negatives" => Ok(RoutingPolicy::UncertainNegatives { tau }),
            "uncertain_positives" => Ok(RoutingPolicy::UncertainPositives { tau }),
            "all_negatives" => Ok(RoutingPolicy::AllNegatives),
            "all_positives" => Ok(RoutingPolicy::AllPositives),
            other => Err(TriageError::InvalidPolicy(format!("unknown policy {other:?}"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            RoutingPolicy::UncertainAll { .. } => "uncertain_all",
            RoutingPolicy::UncertainNegatives { .. } => "uncertain_negatives",
            RoutingPolicy::UncertainPositives { .. } => "uncertain_positives",
            RoutingPolicy::AllNegatives => "all_negatives",
            RoutingPolicy::AllPositives => "all_positives",
        }
    }

    pub fn tau(&self) -> Option<f64> {
        match *self {
            RoutingPolicy::UncertainAll { tau }
            | RoutingPolicy::UncertainNegatives { tau }
            | RoutingPolicy::UncertainPositives { tau } => Some(tau),
            RoutingPolicy::AllNegatives | RoutingPolicy::AllPositives => None,
        }
    }

    /// Whether a single score goes to humans. Ties always do.
    pub fn routes(&self, score: &EnsembleScore) -> bool {
        let decision = score.ensemble_decision;
        if decision == EnsembleDecision::Tie {
            return true;
        }
        let uncertain = |tau: f64| score.median_confidence < tau;
        match *self {
            RoutingPolicy::UncertainAll { tau } => uncertain(tau),
            RoutingPolicy::UncertainNegatives { tau } => {
                decision == EnsembleDecision::NonMatch && uncertain(tau)
            }
            RoutingPolicy::UncertainPositives { tau } => {
                decision == EnsembleDecision::Match && uncertain(tau)
            }
            RoutingPolicy::AllNegatives => decision == EnsembleDecision::NonMatch,
            RoutingPolicy::AllPositives => decision == EnsembleDecision::Match,
        }
    }
}

impl Default for RoutingPolicy {
    fn default() -> Self {
        RoutingPolicy::UncertainAll { tau: DEFAULT_TAU }
    }
}

impl fmt::Display for RoutingPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.tau() {
            Some(tau) => write!(f, "{}(tau={tau})", self.name()),
            None => f.write_str(self.name()),
        }
    }
}

impl FromStr for RoutingPolicy {
    type Err = TriageError;

    /// Accepts `name` or `name:tau`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.split_once(':') {
            Some((name, tau)) => {
                let tau = tau
                    .trim()
                    .parse::<f64>()
                    .map_err(|_| TriageError::InvalidPolicy(format!("bad tau {tau:?}")))?;
                RoutingPolicy::from_parts(name.trim(), Some(tau))
            }
            None => RoutingPolicy::from_parts(s.trim(), None),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TriageOutcome {
    pub auto_finalized: Vec<(String, EnsembleDecision)>,
    pub routed: Vec<String>,
}

/// Fuses the verdicts of several models on one pair.
pub fn ensemble_score(verdicts: &[ModelVerdict]) -> Result<EnsembleScore, TriageError> {
    let first = verdicts.first().ok_or(TriageError::EmptyVerdictSet)?;
    let mut models = HashSet::new();
    for v in verdicts {
        if v.pair_id != first.pair_id {
            return Err(TriageError::MixedPairIds);
        }
        if !models.insert(v.model_id.as_str()) {
            return Err(TriageError::DuplicateModel(v.model_id.clone()));
        }
    }

    let mut confidences: Vec<f64> = verdicts.iter().map(|v| v.confidence).collect();
    confidences.sort_by(f64::total_cmp);
    let n = confidences.len();
    let median_confidence = if n % 2 == 1 {
        confidences[n / 2]
    } else {
        (confidences[n / 2 - 1] + confidences[n / 2]) / 2.0
    };

    let matches = verdicts
        .iter()
        .filter(|v| v.decision == GroundTruth::Match)
        .count();
    let ensemble_decision = match (2 * matches).cmp(&n) {
        std::cmp::Ordering::Greater => EnsembleDecision::Match,
        std::cmp::Ordering::Less => EnsembleDecision::NonMatch,
        std::cmp::Ordering::Equal => EnsembleDecision::Tie,
    };

    Ok(EnsembleScore {
        pair_id: first.pair_id.clone(),
        median_confidence,
        ensemble_decision,
        model_count: n,
    })
}

/// Groups a verdict log by pair (first-appearance order) and fuses each group.
pub fn score_all(verdicts: &[ModelVerdict]) -> Result<Vec<EnsembleScore>, TriageError> {
    let mut order: Vec<&str> = Vec::new();
    let mut groups: HashMap<&str, Vec<ModelVerdict>> = HashMap::new();
    for v in verdicts {
        let group = groups.entry(v.pair_id.as_str()).or_insert_with(|| {
            order.push(v.pair_id.as_str());
            Vec::new()
        });
        group.push(v.clone());
    }
    order.iter().map(|id| ensemble_score(&groups[id])).collect()
}

/// Partitions scored pairs into auto-finalized and human-routed sets,
/// preserving input order within each.
pub fn route(scores: &[EnsembleScore], policy: &RoutingPolicy) -> Result<TriageOutcome, TriageError> {
    let mut seen = HashSet::new();
    let mut outcome = TriageOutcome::default();
    for score in scores {
        if !seen.insert(score.pair_id.as_str()) {
            return Err(TriageError::DuplicatePairId(score.pair_id.clone()));
        }
        if policy.routes(score) {
            outcome.routed.push(score.pair_id.clone());
        } else {
            outcome
                .auto_finalized
                .push((score.pair_id.clone(), score.ensemble_decision));
        }
    }
    Ok(outcome)
}

pub fn parse_verdict_log(text: &str) -> Result<Vec<ModelVerdict>, TriageError> {
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let verdict: ModelVerdict = records::decode(idx + 1, line).map_err(|e| {
            TriageError::ParseError {
                line: e.line,
                reason: e.reason,
            }
        })?;
        if verdict.model_id.is_empty() || verdict.pair_id.is_empty() {
            return Err(TriageError::ParseError {
                line: idx + 1,
                reason: "empty model_id or pair_id".into(),
            });
        }
        if !(0.0..=1.0).contains(&verdict.confidence) {
            return Err(TriageError::ConfidenceOutOfRange {
                model_id: verdict.model_id,
                pair_id: verdict.pair_id,
            });
        }
        if !seen.insert((verdict.model_id.clone(), verdict.pair_id.clone())) {
            return Err(TriageError::DuplicateVerdict {
                model_id: verdict.model_id,
                pair_id: verdict.pair_id,
            });
        }
        out.push(verdict);
    }
    Ok(out)
}

pub fn load_verdict_log(path: &Path) -> Result<Vec<ModelVerdict>, TriageError> {
    let text = std::fs::read_to_string(path).map_err(|e| TriageError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    parse_verdict_log(&text)
}

/// Exact correct/total counts for one (model, race) cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CellAccuracy {
    pub correct: usize,
    pub total: usize,
}

impl CellAccuracy {
    pub fn rate(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.correct as f64 / self.total as f64
        }
    }
}

/// Per-(model, race) accuracy table, keyed by model id then race label.
pub type AccuracyTable = BTreeMap<(String, String), CellAccuracy>;

/// Accuracy of each model on each race stratum it scored.
pub fn model_accuracy(
    verdicts: &[ModelVerdict],
    manifest: &PairManifest,
) -> Result<AccuracyTable, TriageError> {
    let index = manifest.index();
    let mut table = AccuracyTable::new();
    for v in verdicts {
        let pair = index
            .get(v.pair_id.as_str())
            .ok_or_else(|| TriageError::UnknownPair(v.pair_id.clone()))?;
        let cell = table
            .entry((v.model_id.clone(), pair.race.to_string()))
            .or_default();
        cell.total += 1;
        if v.decision == pair.truth {
            cell.correct += 1;
        }
    }
    Ok(table)
}

/// Record written per scored pair by the triage command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TriageRecord {
    pub pair_id: String,
    pub median_confidence: f64,
    pub ensemble_decision: EnsembleDecision,
    pub model_count: usize,
    pub routed: bool,
}

pub fn triage_records(scores: &[EnsembleScore], outcome: &TriageOutcome) -> Vec<TriageRecord> {
    let routed: HashSet<&str> = outcome.routed.iter().map(String::as_str).collect();
    scores
        .iter()
        .map(|s| TriageRecord {
            pair_id: s.pair_id.clone(),
            median_confidence: s.median_confidence,
            ensemble_decision: s.ensemble_decision,
            model_count: s.model_count,
            routed: routed.contains(s.pair_id.as_str()),
        })
        .collect()
}
